"""Score aggregation, score distributions, campaign summaries and CSV exports."""

from __future__ import annotations

import csv
import io
import logging
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .judge import DimensionScore
from .rubric import SCORE_LEVELS, CatalogError, RubricCatalog
from .transcript import MESSAGE_CAP, Transcript, dumps_jsonl

log = logging.getLogger(__name__)

LEVELS = ("dimension", "category", "meta_category")
DEMOGRAPHIC_COLUMNS = ("gender", "age_group", "race_ethnicity", "education", "ses")


class ExportError(OSError):
    pass


@dataclass(frozen=True)
class AggregateRow:
    model_id: str
    level: str
    key: str
    mean_normalized: float
    n: int


@dataclass(frozen=True)
class DistributionRow:
    model_id: str
    bucket: int
    percentage: float
    count: int


def _level_key(score: DimensionScore, catalog: RubricCatalog, level: str) -> str:
    try:
        dim = catalog.dimension(score.dimension_id)
    except CatalogError:
        raise CatalogError(f"score for {score.conversation_id} references unknown dimension {score.dimension_id!r}") from None
    if level == "dimension":
        return dim.dimension_id
    if level == "category":
        return dim.category
    return catalog.meta_map[dim.category]


def aggregate(scores: Iterable[DimensionScore], catalog: RubricCatalog, level: str) -> list[AggregateRow]:
    """Unweighted mean of normalized scores per (model, key) at ``level``; rows sorted by model then key."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for s in scores:
        groups[(s.model_id, _level_key(s, catalog, level))].append(s.normalized)
    return [
        AggregateRow(model, level, key, float(np.mean(vals)), len(vals))
        for (model, key), vals in sorted(groups.items())
    ]


def score_distribution(scores: Iterable[DimensionScore]) -> list[DistributionRow]:
    """Share of scores in each raw bucket, per model, as percentages."""
    counts: dict[str, Counter] = defaultdict(Counter)
    for s in scores:
        counts[s.model_id][s.raw] += 1
    rows = []
    for model in sorted(counts):
        total = sum(counts[model].values())
        for bucket in SCORE_LEVELS:
            c = counts[model][bucket]
            rows.append(DistributionRow(model, bucket, 100.0 * c / total, c))
    return rows


# -- campaign summary -------------------------------------------------------------


@dataclass(frozen=True)
class CampaignSummary:
    per_model: dict[str, int]
    total: int
    median_length: float
    band_low: float
    band_high: float
    truncated: int
    truncated_share: float
    # transcripts whose termination label disagrees with their length at the cap
    cap_mismatches: tuple[str, ...] = ()

    def format(self) -> str:
        lines = [f"conversations: {self.total}"]
        lines += [f"  {m}: {n}" for m, n in sorted(self.per_model.items())]
        lines += [
            f"median length: {self.median_length:g}",
            f"middle-60% band: {self.band_low:g}-{self.band_high:g}",
            f"cap reached: {self.truncated} ({100 * self.truncated_share:.2f}%)",
        ]
        if self.cap_mismatches:
            lines.append(f"cap label mismatches: {', '.join(self.cap_mismatches)}")
        return "\n".join(lines) + "\n"


def summarize_campaign(transcripts: Sequence[Transcript], cap: int = MESSAGE_CAP) -> CampaignSummary:
    if not transcripts:
        raise ValueError("no transcripts to summarize")
    lengths = np.array([len(t) for t in transcripts], dtype=float)
    low, high = np.percentile(lengths, [20, 80])
    truncated = sum(t.termination == "cap_reached" for t in transcripts)
    closed = ("closed_by_doctor", "closed_by_patient")
    mismatches = tuple(
        sorted(
            t.conversation_id
            for t in transcripts
            if (t.termination == "cap_reached" and len(t) != cap)
            or (len(t) == cap and t.termination not in ("cap_reached", *closed))
        )
    )
    return CampaignSummary(
        per_model=dict(sorted(Counter(t.model_id for t in transcripts).items())),
        total=len(transcripts),
        median_length=float(statistics.median(lengths.tolist())),
        band_low=float(low),
        band_high=float(high),
        truncated=truncated,
        truncated_share=truncated / len(transcripts),
        cap_mismatches=mismatches,
    )


# -- exports ----------------------------------------------------------------------

CONVERSATION_COLUMNS = (
    "conversation_id", "model_id", "patient_id", "repeat_index", "encounter_reason", "encounter_objective",
    *DEMOGRAPHIC_COLUMNS, "termination", "closure_reasonable", "n_messages", "n_scores", "mean_normalized",
)
SCORE_COLUMNS = (
    "conversation_id", "model_id", "patient_id", "encounter_reason", "encounter_objective", *DEMOGRAPHIC_COLUMNS,
    "dimension_id", "dimension_name", "category", "meta_category", "raw", "normalized", "source", "flags",
    "evidence_refs", "rationale",
)
CATEGORY_COLUMNS = (
    "conversation_id", "model_id", "patient_id", "encounter_reason", "encounter_objective", *DEMOGRAPHIC_COLUMNS,
    "category", "meta_category", "mean_normalized", "n",
)
AGGREGATE_COLUMNS = ("model_id", "level", "key", "mean_normalized", "n")
DISTRIBUTION_COLUMNS = ("model_id", "bucket", "count", "percentage")
MODEL_COLUMNS = ("model_id", "conversations", "params")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _csv(columns: Sequence[str], rows: Iterable[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _label(value: bool | None) -> str:
    return "" if value is None else str(value).lower()


def export_artifacts(
    transcripts: Sequence[Transcript],
    scores: Sequence[DimensionScore],
    catalog: RubricCatalog,
    out_dir: str | Path,
    *,
    model_params: Mapping[str, str] | None = None,
) -> list[Path]:
    """Write the release tables. Identical inputs give byte-identical files."""
    by_id = {t.conversation_id: t for t in transcripts}
    orphans = sorted({s.conversation_id for s in scores} - set(by_id))
    if orphans:
        raise ValueError(f"scores reference unknown conversations: {orphans[:5]}")
    scores = sorted(scores, key=lambda s: (s.conversation_id, s.dimension_id, s.source))
    ordered = sorted(transcripts, key=lambda t: t.conversation_id)

    def context(t: Transcript) -> dict:
        row = {
            "conversation_id": t.conversation_id,
            "model_id": t.model_id,
            "patient_id": t.patient_id,
            "encounter_reason": t.cell.encounter_reason,
            "encounter_objective": t.cell.encounter_objective,
        }
        row.update({c: t.patient.get(c, "") for c in DEMOGRAPHIC_COLUMNS})
        return row

    score_rows = []
    per_conv: dict[str, list[float]] = defaultdict(list)
    per_cat: dict[tuple[str, str], list[float]] = defaultdict(list)
    for s in scores:
        dim = catalog.dimension(s.dimension_id)
        t = by_id[s.conversation_id]
        per_conv[t.conversation_id].append(s.normalized)
        per_cat[(t.conversation_id, dim.category)].append(s.normalized)
        score_rows.append(
            {
                **context(t),
                "dimension_id": dim.dimension_id,
                "dimension_name": dim.name,
                "category": dim.category,
                "meta_category": dim.meta_category,
                "raw": s.raw,
                "normalized": _fmt(s.normalized),
                "source": s.source,
                "flags": ";".join(s.flags),
                "evidence_refs": ";".join(map(str, s.evidence_refs)),
                "rationale": s.rationale,
            }
        )

    conv_rows = []
    for t in ordered:
        vals = per_conv.get(t.conversation_id, [])
        conv_rows.append(
            {
                **context(t),
                "repeat_index": t.repeat_index,
                "termination": t.termination or "",
                "closure_reasonable": _label(t.closure_reasonable),
                "n_messages": len(t),
                "n_scores": len(vals),
                "mean_normalized": _fmt(float(np.mean(vals))) if vals else "",
            }
        )

    cat_rows = [
        {
            **context(by_id[cid]),
            "category": cat,
            "meta_category": catalog.meta_map[cat],
            "mean_normalized": _fmt(float(np.mean(vals))),
            "n": len(vals),
        }
        for (cid, cat), vals in sorted(per_cat.items())
    ]

    agg_rows = [
        {"model_id": r.model_id, "level": r.level, "key": r.key, "mean_normalized": _fmt(r.mean_normalized), "n": r.n}
        for level in LEVELS
        for r in aggregate(scores, catalog, level)
    ]
    dist_rows = [
        {"model_id": r.model_id, "bucket": r.bucket, "count": r.count, "percentage": _fmt(r.percentage)}
        for r in score_distribution(scores)
    ]
    params = model_params or {}
    conv_counts = Counter(t.model_id for t in ordered)
    model_rows = [
        {"model_id": m, "conversations": conv_counts[m], "params": params.get(m, "")}
        for m in sorted(set(conv_counts) | set(params))
    ]

    files = {
        "transcripts.jsonl": dumps_jsonl(r for t in ordered for r in t.to_records()),
        "conversations.csv": _csv(CONVERSATION_COLUMNS, conv_rows),
        "scores.csv": _csv(SCORE_COLUMNS, score_rows),
        "category_scores.csv": _csv(CATEGORY_COLUMNS, cat_rows),
        "aggregates.csv": _csv(AGGREGATE_COLUMNS, agg_rows),
        "distribution.csv": _csv(DISTRIBUTION_COLUMNS, dist_rows),
        "models.csv": _csv(MODEL_COLUMNS, model_rows),
    }
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            path = out / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
    except OSError as exc:
        raise ExportError(f"cannot write exports to {exc.filename or out}: {exc.strerror}") from exc
    return written
