"""Shared builders for tests."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

from clinbench.affect import EMOTIONS, EmotionState, Reflection, format_emotion_output

T0 = datetime(2025, 3, 3, 9, 0, tzinfo=timezone.utc)


def neutral_emotion_reply(poignancy: int = 1, text: str = "Jane felt calm talking to Doctor AI.") -> str:
    return format_emotion_output(EmotionState.neutral(), Reflection(text, poignancy))


def emotion_lines(**overrides) -> list[str]:
    """A valid emotion response as lines; keyword overrides replace single values."""
    values = {e: 0 for e in EMOTIONS}
    values.update(valence=0, arousal=0, poignancy=1)
    values.update({k.replace("_", " "): v for k, v in overrides.items()})
    lines = [f"{k}: {v}" for k, v in values.items()]
    lines.append("reflection: Jane noticed the doctor was kind.")
    return lines


def packet_doc(**overrides) -> dict:
    doc = {
        "patient_id": "p1",
        "name": "Jane Roe",
        "birth_date": "1980-05-17",
        "gender": "female",
        "race_ethnicity": "asian",
        "education": "bs_degree",
        "ses": "high",
        "conditions": [],
        "medications": [],
        "allergies": [],
        "observations": [],
        "persona_notes": "",
        "encounter_date": "2025-03-03T09:00:00Z",
    }
    doc.update(overrides)
    return doc


def rich_packet_doc() -> dict:
    return packet_doc(
        conditions=[
            {"kind": "diagnosis", "code": "F41.1", "display": "Generalized anxiety disorder", "onset": "2021-01-10T10:00:00Z", "salience": 0.9},
            {"kind": "diagnosis", "code": "I10", "display": "Essential hypertension", "onset": "2019-06-01T10:00:00Z", "salience": 0.5},
            {"kind": "life_event", "code": "move", "display": "Moved to a new city", "onset": "2023-02-01T10:00:00Z", "salience": 0.4},
        ],
        medications=[{"kind": "medication", "code": "sertraline", "display": "Sertraline 50 mg daily", "onset": "2021-02-01T10:00:00Z", "salience": 0.6}],
        observations=[
            {"code": "8480-6", "display": "Systolic blood pressure", "value": 138, "unit": "mm[Hg]", "taken_at": "2024-01-05T08:00:00Z"},
            {"code": "8480-6", "display": "Systolic blood pressure", "value": 131, "unit": "mm[Hg]", "taken_at": "2024-09-05T08:00:00Z"},
            {"code": "70274-6", "display": "GAD-7 score", "value": 14, "unit": "{score}", "taken_at": "2024-09-05T08:00:00Z"},
        ],
        persona_notes="Jane is reserved.\naffect: anxiety=5, fear=2",
    )


def random_retrieval_case(rng, dim: int = 16, max_size: int = 64):
    """A random store plus query, mood, clock, k and weights for oracle comparisons.

    Some records are exact copies of others (new ids only) so that score ties
    and the created_at / memory_id tie-breaks are exercised.
    """
    import numpy as np

    from clinbench.memory import MemoryRecord, RetrievalWeights

    n = int(rng.integers(0, max_size + 1))
    base = T0 - timedelta(days=30)
    records = []
    for i in range(n):
        if records and rng.random() < 0.15:
            src = records[int(rng.integers(len(records)))]
            rec = MemoryRecord(f"m{rng.integers(10**6):06d}-{i}", src.text, src.embedding, src.emotions, src.importance, src.created_at, src.last_accessed)
        else:
            v = rng.standard_normal(dim)
            created = base + timedelta(minutes=int(rng.integers(0, 30 * 24 * 60)))
            accessed = created + timedelta(minutes=int(rng.integers(0, 600)))
            rec = MemoryRecord(
                f"m{rng.integers(10**6):06d}-{i}",
                f"memory {i}",
                v / np.linalg.norm(v),
                rng.random(27) * (rng.random() < 0.9),
                float(rng.random()),
                created,
                accessed,
            )
        records.append(rec)
    q = rng.standard_normal(dim)
    mood = rng.random(27) * (rng.random() < 0.95)
    latest = max((r.last_accessed for r in records), default=base)
    now = latest + timedelta(minutes=int(rng.integers(0, 5000)))
    w = rng.random(4) * 3
    if w.sum() == 0:
        w[0] = 1.0
    weights = RetrievalWeights(*map(float, w), decay_rate=float(rng.uniform(0.5, 0.999)), half_life_unit=timedelta(hours=float(rng.choice([0.5, 1, 24]))))
    k = int(rng.integers(1, 12))
    return records, q / np.linalg.norm(q), mood, now, k, weights


def oracle_view(records, weights):
    rows = [
        {
            "memory_id": r.memory_id,
            "embedding": [float(x) for x in r.embedding],
            "emotions": [float(x) for x in r.emotions],
            "importance": r.importance,
            "created_at": r.created_at,
            "last_accessed": r.last_accessed,
        }
        for r in records
    ]
    w = (weights.w_semantic, weights.w_recency, weights.w_importance, weights.w_emotion, weights.decay_rate, weights.half_life_unit / timedelta(hours=1))
    return rows, w


# Hand-tallied aggregation fixture over the toy catalog: two conversations of
# model "A", ten dimensions each. Expected values are worked out by hand from
# the raw scores: normalized = (raw - 1) / 3.
AGG_RAWS = {
    "c1": {
        "communication.clarity": 4, "communication.empathy": 3, "communication.active_listening": 2, "communication.jargon_avoidance": 1,
        "clinical_reasoning.data_integration": 4, "clinical_reasoning.uncertainty_handling": 4, "clinical_reasoning.red_flag_recognition": 1,
        "medication_safety.interaction_checking": 2, "medication_safety.allergy_checking": 3, "medication_safety.dose_counselling": 3,
    },
    "c2": {
        "communication.clarity": 1, "communication.empathy": 1, "communication.active_listening": 2, "communication.jargon_avoidance": 2,
        "clinical_reasoning.data_integration": 3, "clinical_reasoning.uncertainty_handling": 3, "clinical_reasoning.red_flag_recognition": 3,
        "medication_safety.interaction_checking": 4, "medication_safety.allergy_checking": 4, "medication_safety.dose_counselling": 1,
    },
}
# communication: (3+2+1+0+0+0+1+1)/(3*8); clinical reasoning: (3+3+0+2+2+2)/(3*6); medication safety: (1+2+2+3+3+0)/(3*6)
AGG_CATEGORY_MEANS = {"communication": 8 / 24, "clinical reasoning": 12 / 18, "medication safety": 11 / 18}
AGG_META_MEANS = {"Communication Skills": 8 / 24, "Core Medical Competence": 12 / 18, "Patient Safety & Care": 11 / 18}
# raw 1: five scores, raw 2: four, raw 3: six, raw 4: five
AGG_BUCKETS = {1: 25.0, 2: 20.0, 3: 30.0, 4: 25.0}


def aggregation_fixture():
    from clinbench.judge import DimensionScore

    return [DimensionScore.make(cid, "A", dim, raw) for cid, dims in AGG_RAWS.items() for dim, raw in dims.items()]


def fixture_path(name: str) -> Path:
    from importlib import resources

    return Path(str(resources.files("clinbench").joinpath("data", "fixtures", name)))


def run_pipeline(out, *, patients: int = 6, seed: int = 0, catalog: str = "toy_catalog", parallelism: int = 1):
    """simulate -> judge -> report through the CLI entry point; returns the report directory."""
    from clinbench.cli import main

    out = Path(out)
    assert main(["simulate", "--models", str(fixture_path("models.json")), "--out", str(out / "campaign"),
                 "--patients", str(patients), "--repeats", "1", "--seed", str(seed), "--parallelism", str(parallelism)]) == 0
    assert main(["judge", "--transcripts", str(out / "campaign"), "--catalog", catalog, "--out", str(out / "judged"),
                 "--seed", str(seed), "--parallelism", str(parallelism)]) == 0
    assert main(["report", "--scores", str(out / "judged"), "--catalog", catalog, "--out", str(out / "report")]) == 0
    return out / "report"
