"""27-emotion affect model: vectors, Tanimoto similarity and the emotion-state update."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .backends import LanguageModel, call_with_retry
from .prompts import render

EMOTIONS: tuple[str, ...] = (
    "admiration",
    "adoration",
    "aesthetic appreciation",
    "amusement",
    "anger",
    "anxiety",
    "awe",
    "awareness",
    "boredom",
    "calmness",
    "confusion",
    "craving",
    "disgust",
    "empathetic pain",
    "entrancement",
    "excitement",
    "fear",
    "horror",
    "interest",
    "joy",
    "nostalgia",
    "relief",
    "romance",
    "sadness",
    "satisfaction",
    "sexual desire",
    "surprise",
)
N_EMOTIONS = len(EMOTIONS)
EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}

RAW_MIN, RAW_MAX = -10, 10
VALENCE_RANGE = (-10, 10)
AROUSAL_RANGE = (0, 10)
POIGNANCY_RANGE = (1, 10)

EMOTION_RETRIES = 2


class AffectError(ValueError):
    """Invalid emotion data."""


class EmotionParseError(AffectError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class EmotionUpdateError(RuntimeError):
    """The emotion backend did not produce a usable state."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ClassificationError(ValueError):
    pass


def _check_raw(name: str, value) -> int:
    return _check_range(name, value, (RAW_MIN, RAW_MAX))


@dataclass(frozen=True)
class EmotionVector:
    """Raw integer scores in [-10, 10], one per entry of ``EMOTIONS``."""

    raw: tuple[int, ...]

    def __post_init__(self):
        if len(self.raw) != N_EMOTIONS:
            raise AffectError(f"expected {N_EMOTIONS} emotions, got {len(self.raw)}")
        object.__setattr__(self, "raw", tuple(_check_raw(n, v) for n, v in zip(EMOTIONS, self.raw)))

    @classmethod
    def neutral(cls) -> "EmotionVector":
        return cls((0,) * N_EMOTIONS)

    @classmethod
    def from_mapping(cls, scores: Mapping[str, int], default: int | None = None) -> "EmotionVector":
        unknown = set(scores) - set(EMOTIONS)
        if unknown:
            raise AffectError(f"unknown emotion(s): {sorted(unknown)}")
        raw = []
        for name in EMOTIONS:
            if name in scores:
                raw.append(scores[name])
            elif default is not None:
                raw.append(default)
            else:
                raise AffectError(f"{name}: missing")
        return cls(tuple(raw))

    @property
    def unit(self) -> np.ndarray:
        return normalize_emotion(self.raw)

    def as_dict(self) -> dict[str, int]:
        return dict(zip(EMOTIONS, self.raw))

    def top(self, n: int = 3) -> list[tuple[str, int]]:
        # stable: ties keep the canonical emotion order
        order = sorted(range(N_EMOTIONS), key=lambda i: -self.raw[i])
        return [(EMOTIONS[i], self.raw[i]) for i in order[:n]]


def normalize_emotion(raw: Sequence[int]) -> np.ndarray:
    """Map raw [-10, 10] scores onto [0, 1] via (x + 10) / 20."""
    if len(raw) != N_EMOTIONS:
        raise AffectError(f"expected {N_EMOTIONS} emotions, got {len(raw)}")
    values = [_check_raw(name, v) for name, v in zip(EMOTIONS, raw)]
    return (np.asarray(values, dtype=float) - RAW_MIN) / (RAW_MAX - RAW_MIN)


def tanimoto_with_flag(a, b) -> tuple[float, bool]:
    """Tanimoto similarity plus a flag set when both inputs are all-zero.

    Inputs are unit-range (nonnegative) vectors. Two all-zero vectors are
    defined to have similarity 1.0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AffectError(f"shape mismatch {a.shape} vs {b.shape}")
    ab = float(a @ b)
    denom = float(a @ a) + float(b @ b) - ab
    if denom == 0.0:
        return 1.0, True
    return ab / denom, False


def tanimoto(a, b) -> float:
    return tanimoto_with_flag(a, b)[0]


@dataclass(frozen=True)
class EmotionState:
    emotions: EmotionVector
    valence: int = 0
    arousal: int = 0
    updated_at_turn: int = 0

    def __post_init__(self):
        _check_range("valence", self.valence, VALENCE_RANGE)
        _check_range("arousal", self.arousal, AROUSAL_RANGE)

    @classmethod
    def neutral(cls, turn: int = 0) -> "EmotionState":
        return cls(EmotionVector.neutral(), 0, 0, turn)

    def summary(self, n: int = 3) -> str:
        top = ", ".join(f"{name} {score:+d}" for name, score in self.emotions.top(n))
        return f"{top}; valence {self.valence:+d}; arousal {self.arousal}"


@dataclass(frozen=True)
class Reflection:
    text: str
    poignancy: int

    def __post_init__(self):
        if not self.text.strip():
            raise AffectError("reflection text is empty")
        _check_range("poignancy", self.poignancy, POIGNANCY_RANGE)

    @property
    def importance(self) -> float:
        return self.poignancy / 10


class CognitiveEffort(str, Enum):
    TRIVIAL = "TRIVIAL"
    FOCUSED = "FOCUSED"
    OPEN = "OPEN"
    COMPLEX = "COMPLEX"
    AMBIGUOUS = "AMBIGUOUS"


def _check_range(key: str, value, bounds: tuple[int, int]) -> int:
    lo, hi = bounds
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise AffectError(f"{key}: not an integer: {value!r}")
    if not lo <= value <= hi:
        raise AffectError(f"{key}: {value} outside [{lo}, {hi}]")
    return int(value)


_INT_RE = re.compile(r"[+-]?\d+")
NUMERIC_KEYS: tuple[str, ...] = EMOTIONS + ("valence", "arousal", "poignancy")


def parse_emotion_output(text: str, turn: int = 0) -> tuple[EmotionState, Reflection]:
    """Parse the line-oriented ``key: value`` emotion response.

    All 27 emotions plus valence, arousal and poignancy must be present as
    integers in range, along with a non-empty ``reflection`` line. Values are
    never clamped. Unknown keys are ignored.
    """
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        key = key.strip().strip("*-_ ").lower()
        if key not in NUMERIC_KEYS and key != "reflection":
            continue
        if key in fields:
            raise EmotionParseError(key, "duplicate key")
        fields[key] = value.strip()

    values: dict[str, int] = {}
    for key in NUMERIC_KEYS:
        if key not in fields:
            raise EmotionParseError(key, "missing")
        token = fields[key]
        if not _INT_RE.fullmatch(token):
            raise EmotionParseError(key, f"not an integer: {token!r}")
        values[key] = int(token)

    bounds = dict.fromkeys(EMOTIONS, (RAW_MIN, RAW_MAX))
    bounds.update(valence=VALENCE_RANGE, arousal=AROUSAL_RANGE, poignancy=POIGNANCY_RANGE)
    for key, (lo, hi) in bounds.items():
        if not lo <= values[key] <= hi:
            raise EmotionParseError(key, f"{values[key]} outside [{lo}, {hi}]")

    reflection = fields.get("reflection", "").strip()
    if not reflection:
        raise EmotionParseError("reflection", "missing or empty")

    state = EmotionState(
        EmotionVector(tuple(values[name] for name in EMOTIONS)),
        values["valence"],
        values["arousal"],
        turn,
    )
    return state, Reflection(reflection, values["poignancy"])


def format_emotion_output(state: EmotionState, reflection: Reflection) -> str:
    """Inverse of :func:`parse_emotion_output`; used by scripted backends and tests."""
    lines = [f"{name}: {score}" for name, score in zip(EMOTIONS, state.emotions.raw)]
    lines += [
        f"valence: {state.valence}",
        f"arousal: {state.arousal}",
        f"reflection: {reflection.text}",
        f"poignancy: {reflection.poignancy}",
    ]
    return "\n".join(lines)


def update_emotion_state(
    persona: str,
    interlocutor: str,
    context: str,
    conversation: str,
    recent_message: str,
    effort: CognitiveEffort,
    retrieval_summary: str,
    backend: LanguageModel,
    turn: int = 0,
) -> tuple[EmotionState, Reflection]:
    prompt = render(
        "emotion",
        persona=persona,
        interlocutor=interlocutor,
        context=context,
        conversation=conversation or "(no messages yet)",
        interlocutor_recent_message=recent_message,
        cognitive_effort=CognitiveEffort(effort).value,
        retrival_summary=retrieval_summary or "(nothing came to mind)",
        emotion_keys="\n".join(f"{name}: <integer>" for name in EMOTIONS),
    )
    response = call_with_retry(backend.complete, prompt, retries=EMOTION_RETRIES)
    try:
        return parse_emotion_output(response, turn=turn)
    except EmotionParseError as exc:
        raise EmotionUpdateError(f"unusable emotion response ({exc})", key=exc.key) from exc


_EFFORT_ALIASES = {"AMBIGOUS": CognitiveEffort.AMBIGUOUS}


def classify_cognitive_effort(recent_message: str, context: str, backend: LanguageModel) -> CognitiveEffort:
    if not recent_message.strip():
        return CognitiveEffort.AMBIGUOUS
    prompt = render("effort", message=recent_message, context=context)
    response = call_with_retry(backend.complete, prompt)
    token = response.strip().strip(".").upper()
    if token in _EFFORT_ALIASES:
        return _EFFORT_ALIASES[token]
    try:
        return CognitiveEffort(token)
    except ValueError:
        raise ClassificationError(f"unrecognised effort level {response.strip()!r}") from None
