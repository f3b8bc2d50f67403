"""Encounter reason x encounter objective task matrix."""

from __future__ import annotations

from dataclasses import dataclass

REASONS = (
    "anxiety",
    "asthma",
    "breast_cancer",
    "depression",
    "dermatitis",
    "lupus",
    "pregnancy",
    "seizure_disorder",
    "wellness_checkup",
)
OBJECTIVES = ("diagnosis", "lifestyle_advice", "medical_screening", "medication_advice", "treatment_advice")

# patients per populated cell; None marks an unpopulated cell
_ROWS = {
    "anxiety": (12, 12, 12, 12, 12),
    "asthma": (None, 12, 12, 12, 12),
    "breast_cancer": (None, 6, 6, 6, 6),
    "depression": (12, 12, 12, 12, 12),
    "dermatitis": (None, 12, 12, 12, 12),
    "lupus": (None, 12, 12, 12, 12),
    "pregnancy": (None, 3, 3, None, None),
    "seizure_disorder": (None, 12, 12, 12, 12),
    "wellness_checkup": (None, 12, None, 12, None),
}
TASK_MATRIX: dict[tuple[str, str], int] = {
    (reason, objective): n
    for reason, row in _ROWS.items()
    for objective, n in zip(OBJECTIVES, row)
    if n is not None
}


class TaskError(ValueError):
    pass


def display(value: str) -> str:
    """``seizure_disorder`` -> ``Seizure Disorder``."""
    return value.replace("_", " ").title()


@dataclass(frozen=True, order=True)
class TaskCell:
    encounter_reason: str
    encounter_objective: str

    def __post_init__(self):
        if self.encounter_reason not in REASONS:
            raise TaskError(f"unknown encounter reason {self.encounter_reason!r}")
        if self.encounter_objective not in OBJECTIVES:
            raise TaskError(f"unknown encounter objective {self.encounter_objective!r}")
        if (self.encounter_reason, self.encounter_objective) not in TASK_MATRIX:
            raise TaskError(f"cell ({self.encounter_reason}, {self.encounter_objective}) is not populated in the task matrix")

    @property
    def reason_display(self) -> str:
        return display(self.encounter_reason)


def matrix_counts(cells) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    for cell in cells:
        key = (cell.encounter_reason, cell.encounter_objective)
        counts[key] = counts.get(key, 0) + 1
    return counts
