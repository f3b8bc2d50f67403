"""Two-stage rubric judging: category committee discussion, then per-dimension scoring."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .backends import BackendError, LanguageModel, call_with_retry
from .prompts import render
from .rubric import SCORE_LEVELS, DimensionSpec, RubricCatalog, applicable_dimensions, category_description, normalize_score
from .transcript import Transcript, dumps_jsonl

log = logging.getLogger(__name__)

SOURCES = ("ai_judge", "human")
DEFAULT_COMMITTEE_SIZE = 3
NO_DISCUSSION = "(no committee discussion is available for this category)"
REASK = (
    "\n\nYour previous reply did not end with a valid final line. "
    "Reply again and end with exactly one line of the form `score: <integer 1-4>`."
)

_EVIDENCE_LINE = re.compile(r"^\s*evidence\s*:(.*)$", re.IGNORECASE)
_SCORE_LINE = re.compile(r"^\s*score\s*:\s*(\S+)\s*$", re.IGNORECASE)
_CITATION = re.compile(r"(?:\[|\bmessages?\s+)(\d+)\b", re.IGNORECASE)


class JudgeError(ValueError):
    pass


class EvidenceError(JudgeError):
    pass


class ScoreParseError(JudgeError):
    pass


@dataclass(frozen=True)
class CommitteeDiscussion:
    conversation_id: str
    category: str
    text: str
    evidence_refs: tuple[int, ...] = ()


@dataclass(frozen=True)
class DimensionScore:
    conversation_id: str
    model_id: str
    dimension_id: str
    raw: int
    normalized: float
    rationale: str = ""
    evidence_refs: tuple[int, ...] = ()
    source: str = "ai_judge"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.source not in SOURCES:
            raise JudgeError(f"unknown score source {self.source!r}")
        if abs(self.normalized - normalize_score(self.raw)) > 1e-12:
            raise JudgeError(f"{self.key}: normalized {self.normalized} does not match raw {self.raw}")

    @classmethod
    def make(cls, conversation_id: str, model_id: str, dimension_id: str, raw: int, **kw) -> "DimensionScore":
        return cls(conversation_id, model_id, dimension_id, raw, normalize_score(raw), **kw)

    @property
    def key(self) -> tuple[str, str]:
        return (self.conversation_id, self.dimension_id)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["evidence_refs"] = list(self.evidence_refs)
        d["flags"] = list(self.flags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DimensionScore":
        return cls(
            conversation_id=d["conversation_id"],
            model_id=d.get("model_id", ""),
            dimension_id=d["dimension_id"],
            raw=d["raw"],
            normalized=d.get("normalized", normalize_score(d["raw"])),
            rationale=d.get("rationale", ""),
            evidence_refs=tuple(d.get("evidence_refs", ())),
            source=d.get("source", "ai_judge"),
            flags=tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class ScoreFailure:
    """A dimension that could not be scored; it stands in for the missing score."""

    conversation_id: str
    model_id: str
    dimension_id: str
    error: str
    flags: tuple[str, ...] = ()

    @property
    def key(self) -> tuple[str, str]:
        return (self.conversation_id, self.dimension_id)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d


# -- parsing ----------------------------------------------------------------------


def _parse_refs(text: str) -> list[int]:
    body = text.strip().strip(".")
    if body.lower() in ("", "none", "-"):
        return []
    refs = []
    for token in re.split(r"[,\s]+", body):
        token = token.strip("[]#")
        if not token:
            continue
        if not token.lstrip("-").isdigit():
            raise EvidenceError(f"evidence reference {token!r} is not a message index")
        refs.append(int(token))
    return refs


def parse_discussion(text: str, n_messages: int) -> tuple[str, tuple[int, ...]]:
    """Split a committee reply into its text and validated evidence references.

    The final ``evidence:`` line is required; every index must address a
    message of the transcript.
    """
    lines = text.rstrip().splitlines()
    for i in range(len(lines) - 1, -1, -1):
        m = _EVIDENCE_LINE.match(lines[i])
        if m:
            refs = _parse_refs(m.group(1))
            bad = [r for r in refs if not 0 <= r < n_messages]
            if bad:
                raise EvidenceError(f"evidence refs {bad} outside transcript of {n_messages} messages")
            body = "\n".join(lines[:i]).strip()
            return body, tuple(sorted(set(refs)))
    raise EvidenceError("discussion has no evidence line")


def parse_score(text: str) -> tuple[int, str]:
    """Read the final ``score: <int>`` line; returns (raw, rationale)."""
    lines = [ln for ln in text.rstrip().splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ScoreParseError("empty judge reply")
    m = _SCORE_LINE.match(lines[-1])
    if not m:
        raise ScoreParseError("reply does not end with a 'score:' line")
    token = m.group(1)
    if not re.fullmatch(r"[+-]?\d+", token):
        raise ScoreParseError(f"score {token!r} is not an integer")
    raw = int(token)
    if raw not in SCORE_LEVELS:
        raise ScoreParseError(f"score {raw} outside {SCORE_LEVELS}")
    return raw, "\n".join(lines[:-1]).strip()


def cited_messages(text: str, n_messages: int) -> tuple[int, ...]:
    """Message indices cited as ``[n]`` or ``message n`` that exist in the transcript."""
    return tuple(sorted({int(x) for x in _CITATION.findall(text) if int(x) < n_messages}))


# -- the two stages ---------------------------------------------------------------


def _dimension_list(dims: Sequence[DimensionSpec]) -> str:
    return "\n".join(f"- {d.name} ({d.dimension_id}): {d.description}" for d in dims)


def committee_discussion(
    transcript: Transcript,
    category: str,
    catalog: RubricCatalog,
    backend: LanguageModel,
    *,
    committee_size: int = DEFAULT_COMMITTEE_SIZE,
) -> CommitteeDiscussion:
    if category not in catalog.categories:
        raise JudgeError(f"category {category!r} not in catalog")
    dims = [d for d in applicable_dimensions(catalog, transcript.cell) if d.category == category]
    if not dims:
        dims = catalog.by_category(category)
    prompt = render(
        "committee",
        committee_size=committee_size,
        category=category,
        category_description=category_description(catalog, category),
        dimension_list=_dimension_list(dims),
        transcript=transcript.render(),
    )
    reply = call_with_retry(backend.complete, prompt)
    text, refs = parse_discussion(reply, len(transcript))
    return CommitteeDiscussion(transcript.conversation_id, category, text, refs)


def score_dimension(
    transcript: Transcript,
    dim: DimensionSpec,
    discussion: CommitteeDiscussion | None,
    backend: LanguageModel,
) -> DimensionScore | ScoreFailure:
    """Score one dimension; an unusable reply is re-asked once before the dimension is left unscored."""
    flags = () if discussion is not None else ("discussionless",)
    prompt = render(
        "scorer",
        dimension_name=dim.name,
        dimension_id=dim.dimension_id,
        category=dim.category,
        description=dim.description,
        anchor_1=dim.anchors[1],
        anchor_2=dim.anchors[2],
        anchor_3=dim.anchors[3],
        anchor_4=dim.anchors[4],
        transcript=transcript.render(),
        discussion=discussion.text if discussion is not None else NO_DISCUSSION,
    )
    cid, mid = transcript.conversation_id, transcript.model_id
    errors = []
    for attempt, text in enumerate((prompt, prompt + REASK)):
        try:
            raw, rationale = parse_score(call_with_retry(backend.complete, text))
        except ScoreParseError as exc:
            errors.append(str(exc))
            continue
        except BackendError as exc:
            return ScoreFailure(cid, mid, dim.dimension_id, f"backend: {exc}", flags + ("backend_failed",))
        extra = ("reasked",) if attempt else ()
        return DimensionScore.make(
            cid, mid, dim.dimension_id, raw,
            rationale=rationale,
            evidence_refs=cited_messages(rationale, len(transcript)),
            flags=flags + extra,
        )
    return ScoreFailure(cid, mid, dim.dimension_id, "; ".join(errors), flags + ("unscored",))


@dataclass
class JudgeResult:
    conversation_id: str
    discussions: list[CommitteeDiscussion] = field(default_factory=list)
    scores: list[DimensionScore] = field(default_factory=list)
    failures: list[ScoreFailure] = field(default_factory=list)
    undiscussed: dict[str, str] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def judge_conversation(
    transcript: Transcript,
    catalog: RubricCatalog,
    backend: LanguageModel,
    *,
    committee_size: int = DEFAULT_COMMITTEE_SIZE,
) -> JudgeResult:
    """One discussion per category with applicable dimensions, then one score per applicable dimension."""
    result = JudgeResult(transcript.conversation_id)
    if transcript.patient_turns == 0:
        result.warnings.append("no completed patient turn; not judged")
        return result
    dims = applicable_dimensions(catalog, transcript.cell)
    if not dims:
        result.warnings.append("no applicable dimensions")
        log.warning("%s: no applicable dimensions", transcript.conversation_id)
        return result
    categories = [c for c in catalog.categories if any(d.category == c for d in dims)]
    by_category: dict[str, CommitteeDiscussion | None] = {}
    for category in categories:
        try:
            disc = committee_discussion(transcript, category, catalog, backend, committee_size=committee_size)
        except (BackendError, JudgeError) as exc:
            log.warning("%s: discussion for %r failed: %s", transcript.conversation_id, category, exc)
            result.undiscussed[category] = str(exc)
            disc = None
        else:
            result.discussions.append(disc)
        by_category[category] = disc
    for dim in dims:
        out = score_dimension(transcript, dim, by_category[dim.category], backend)
        (result.scores if isinstance(out, DimensionScore) else result.failures).append(out)
    return result


def judge_transcripts(
    transcripts: Iterable[Transcript],
    catalog: RubricCatalog,
    backend: LanguageModel,
    *,
    parallelism: int = 1,
    committee_size: int = DEFAULT_COMMITTEE_SIZE,
) -> list[JudgeResult]:
    todo = sorted(transcripts, key=lambda t: t.conversation_id)

    def one(t: Transcript) -> JudgeResult:
        return judge_conversation(t, catalog, backend, committee_size=committee_size)

    if parallelism <= 1:
        return [one(t) for t in todo]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, todo))


# -- human calibration ------------------------------------------------------------


@dataclass(frozen=True)
class Agreement:
    n: int
    exact_match_rate: float
    mean_abs_diff: float


@dataclass(frozen=True)
class MergedScores:
    merged: tuple[DimensionScore, ...]
    ai: tuple[DimensionScore, ...]
    human: tuple[DimensionScore, ...]
    agreement: Agreement | None


def ingest_human_scores(human: Sequence[DimensionScore], existing: Sequence[DimensionScore]) -> MergedScores:
    """Overlay human ratings on AI scores; neither input is modified."""
    not_human = [s.key for s in human if s.source != "human"]
    if not_human:
        raise JudgeError(f"human score set contains non-human records: {not_human}")
    keys = [s.key for s in human]
    if len(set(keys)) != len(keys):
        raise JudgeError("duplicate human scores for one (conversation, dimension)")
    ai = {s.key: s for s in existing if s.source == "ai_judge"}
    dangling = sorted(k for k in keys if k not in ai)
    if dangling:
        raise JudgeError(f"human scores reference unknown (conversation, dimension) pairs: {dangling}")
    by_key = {s.key: s for s in human}
    merged = tuple(sorted((by_key.get(k, s) for k, s in ai.items()), key=lambda s: s.key))
    agreement = None
    if human:
        diffs = [abs(by_key[k].raw - ai[k].raw) for k in sorted(by_key)]
        agreement = Agreement(len(diffs), sum(d == 0 for d in diffs) / len(diffs), sum(diffs) / len(diffs))
    return MergedScores(
        merged=merged,
        ai=tuple(sorted(ai.values(), key=lambda s: s.key)),
        human=tuple(sorted(human, key=lambda s: s.key)),
        agreement=agreement,
    )


# -- storage ----------------------------------------------------------------------

SCORES_FILE = "scores.jsonl"
FAILURES_FILE = "score_failures.jsonl"
DISCUSSIONS_FILE = "discussions.jsonl"


def write_judgements(results: Sequence[JudgeResult], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = sorted(results, key=lambda r: r.conversation_id)
    scores = [s.to_dict() for r in results for s in r.scores]
    failures = [f.to_dict() for r in results for f in r.failures]
    discussions = []
    for r in results:
        for d in r.discussions:
            discussions.append({**asdict(d), "evidence_refs": list(d.evidence_refs), "discussed": True})
        for category, error in sorted(r.undiscussed.items()):
            discussions.append({"conversation_id": r.conversation_id, "category": category, "discussed": False, "error": error})
    (out / SCORES_FILE).write_text(dumps_jsonl(scores), encoding="utf-8")
    (out / FAILURES_FILE).write_text(dumps_jsonl(failures), encoding="utf-8")
    (out / DISCUSSIONS_FILE).write_text(dumps_jsonl(discussions), encoding="utf-8")
    return out


def append_scores(scores: Iterable[DimensionScore], path: str | Path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dumps_jsonl(s.to_dict() for s in scores))


def read_scores(path: str | Path) -> list[DimensionScore]:
    path = Path(path)
    if path.is_dir():
        path = path / SCORES_FILE
    lines = path.read_text(encoding="utf-8").splitlines()
    return [DimensionScore.from_dict(json.loads(line)) for line in lines if line.strip()]
