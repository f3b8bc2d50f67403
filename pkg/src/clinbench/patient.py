"""The simulated patient: one turn = effort, retrieval, affect update, reflection, reply."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Sequence

from .affect import EmotionState, classify_cognitive_effort, update_emotion_state
from .backends import LanguageModel, call_with_retry
from .memory import Embedder, MemoryRecord, MemoryStore, RetrievalWeights, add_memory, embed, retrieve
from .packet import PatientPacket, persona_affect, seed_memories
from .prompts import render
from .tasks import TaskCell

log = logging.getLogger(__name__)

CLOSURE_MARKER = "[END_OF_ENCOUNTER]"
USED_PREFIX = "USED_MEMORIES:"
DEFAULT_K = 5
INTERLOCUTOR = "Doctor AI, a doctor the patient is meeting for the first time in a text chat"

CONTEXT_HEADERS = (
    "## Who you are",
    "## How you feel right now",
    "## Memories that come to mind",
    "## Already shared with the doctor",
)


class PatientTurnError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"patient turn failed at {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PatientBackends:
    effort: LanguageModel
    emotion: LanguageModel
    responder: LanguageModel


@dataclass(frozen=True)
class PatientConfig:
    k: int = DEFAULT_K
    weights: RetrievalWeights = RetrievalWeights()
    closure_marker: str = CLOSURE_MARKER


@dataclass
class PatientAgentState:
    packet: PatientPacket
    persona: str
    context: str
    store: MemoryStore
    emotion: EmotionState
    disclosed: frozenset[str] = frozenset()
    turn_index: int = 0
    wants_closure: bool = False
    last_effort: str | None = None
    last_retrieved: tuple[str, ...] = ()

    def __post_init__(self):
        stray = set(self.disclosed) - self.store.ids()
        if stray:
            raise ValueError(f"disclosed ids not in store: {sorted(stray)}")


def persona_text(packet: PatientPacket, when: datetime | None = None) -> str:
    lines = [
        f"Name: {packet.name}",
        f"Age: {packet.age_at(when)}",
        f"Gender: {packet.gender}",
        f"Education: {packet.education.replace('_', ' ')}",
        f"Socioeconomic status: {packet.ses}",
    ]
    if packet.persona_notes.strip():
        lines.append(f"Personality and background: {packet.persona_notes.strip()}")
    return "\n".join(lines)


def init_patient(packet: PatientPacket, cell: TaskCell, embedder: Embedder, encounter_time: datetime) -> PatientAgentState:
    store = MemoryStore(seed_memories(packet, embedder, encounter_time))
    context = (
        f"{packet.name} is in a text-chat medical consultation with Doctor AI. "
        f"{packet.name} booked the visit for: {cell.reason_display}, "
        f"hoping to get {cell.encounter_objective.replace('_', ' ')}."
    )
    return PatientAgentState(
        packet=packet,
        persona=persona_text(packet, encounter_time),
        context=context,
        store=store,
        emotion=EmotionState(persona_affect(packet.persona_notes)),
    )


def _memory_line(m: MemoryRecord) -> str:
    return f"- [{m.memory_id}] ({m.created_at.date().isoformat()}) {m.text}"


def build_patient_context(state: PatientAgentState, retrieved: Sequence[MemoryRecord]) -> str:
    """Deterministic responder context: persona, top-3 emotions, memories oldest-first, disclosure count."""
    ordered = sorted(retrieved, key=lambda m: (m.created_at, m.memory_id))
    memory_block = "\n".join(_memory_line(m) for m in ordered) if ordered else "none"
    return "\n".join(
        [
            CONTEXT_HEADERS[0],
            state.persona,
            "",
            CONTEXT_HEADERS[1],
            state.emotion.summary(3),
            "",
            CONTEXT_HEADERS[2],
            memory_block,
            "",
            CONTEXT_HEADERS[3],
            f"{len(state.disclosed)} memories disclosed so far",
        ]
    )


def retrieval_summary(retrieved: Sequence[MemoryRecord]) -> str:
    if not retrieved:
        return "nothing specific came to mind"
    return "\n".join(_memory_line(m) for m in retrieved)


def render_conversation(conversation: Sequence) -> str:
    label = {"doctor": "Doctor", "patient": "Patient"}
    return "\n".join(f"{label[m.speaker]}: {m.text}" for m in conversation)


@dataclass(frozen=True)
class ParsedReply:
    text: str
    used_ids: tuple[str, ...]
    closure: bool


def parse_responder_output(raw: str, closure_marker: str = CLOSURE_MARKER) -> ParsedReply:
    """Split the responder output into reply text, used-memory ids and the closure flag."""
    closure = closure_marker in raw
    used: list[str] = []
    kept = []
    for line in raw.replace(closure_marker, "").splitlines():
        stripped = line.strip()
        if stripped.upper().startswith(USED_PREFIX):
            ids = stripped[len(USED_PREFIX):].strip()
            if ids.lower() not in ("", "none"):
                used.extend(i.strip().strip("[]") for i in ids.split(",") if i.strip())
            continue
        kept.append(line)
    return ParsedReply("\n".join(kept).strip(), tuple(dict.fromkeys(used)), closure)


def patient_turn(
    state: PatientAgentState,
    doctor_message: str,
    backends: PatientBackends,
    embedder: Embedder,
    now: datetime,
    config: PatientConfig = PatientConfig(),
    conversation: Sequence = (),
) -> tuple[str, PatientAgentState]:
    """Run one patient turn. ``state`` is left untouched; the updated state is returned.

    ``conversation`` holds the messages before ``doctor_message``.
    """
    if not doctor_message.strip():
        raise PatientTurnError("input", "doctor message is empty")
    store = state.store.copy()
    history = render_conversation(conversation)

    stage = "effort"
    try:
        effort = classify_cognitive_effort(doctor_message, state.context, backends.effort)

        stage = "retrieval"
        query = embed(embedder, doctor_message)
        hits = retrieve(store, query, state.emotion.emotions.unit, now, config.k, config.weights)
        retrieved = [m for m, _ in hits]

        stage = "emotion"
        emotion, reflection = update_emotion_state(
            persona=state.persona,
            interlocutor=INTERLOCUTOR,
            context=state.context,
            conversation=history,
            recent_message=doctor_message,
            effort=effort,
            retrieval_summary=retrieval_summary(retrieved),
            backend=backends.emotion,
            turn=state.turn_index + 1,
        )

        stage = "reflection"
        add_memory(
            store,
            MemoryRecord(
                memory_id=f"refl-{state.turn_index + 1:03d}",
                text=reflection.text,
                embedding=embed(embedder, reflection.text),
                emotions=emotion.emotions.unit,
                importance=reflection.importance,
                created_at=now,
                last_accessed=now,
            ),
        )

        stage = "responder"
        interim = replace(state, store=store, emotion=emotion)
        prompt = render(
            "responder",
            context=build_patient_context(interim, retrieved),
            conversation=history or "(the doctor is opening the conversation)",
            doctor_message=doctor_message,
            closure_marker=config.closure_marker,
            used_prefix=USED_PREFIX,
        )
        parsed = parse_responder_output(call_with_retry(backends.responder.complete, prompt), config.closure_marker)
        if not parsed.text:
            raise PatientTurnError("responder", "empty reply")
    except PatientTurnError:
        raise
    except Exception as exc:
        raise PatientTurnError(stage, exc) from exc

    known = store.ids()
    unknown = [i for i in parsed.used_ids if i not in known]
    if unknown:
        log.debug("responder cited unknown memory ids %s", unknown)
    new_state = replace(
        state,
        store=store,
        emotion=emotion,
        disclosed=state.disclosed | {i for i in parsed.used_ids if i in known},
        turn_index=state.turn_index + 1,
        wants_closure=parsed.closure,
        last_effort=effort.value,
        last_retrieved=tuple(m.memory_id for m in retrieved),
    )
    return parsed.text, new_state
