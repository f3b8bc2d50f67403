"""Deterministic rule-based stand-ins for every language-model role.

Each reply is a pure function of the prompt and a seed (via sha256), so
campaigns run offline, concurrently and byte-reproducibly.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass

from .affect import EMOTIONS
from .backends import ScriptedLM
from .memory import HashEmbedder
from .patient import CLOSURE_MARKER, USED_PREFIX, PatientBackends

FAREWELLS = ("goodbye", "take care", "bye", "all the best", "wishing you well")
_MEMORY_LINE = re.compile(r"^- \[([^\]]+)\] \(([^)]*)\) (.*)$", re.MULTILINE)
_INDEXED = re.compile(r"^\[(\d+)\] ", re.MULTILINE)


def rng_for(seed: int, *parts: str) -> random.Random:
    h = hashlib.sha256("\x1f".join([str(seed), *parts]).encode("utf-8")).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


def section(prompt: str, start: str, end: str | None = None) -> str:
    """Text between the first ``start`` and the following ``end`` (or the end of the prompt)."""
    i = prompt.find(start)
    if i < 0:
        return ""
    i += len(start)
    j = prompt.find(end, i) if end else -1
    return prompt[i : j if j >= 0 else None].strip()


def is_farewell(text: str) -> bool:
    low = text.lower()
    return any(re.search(rf"\b{re.escape(w)}\b", low) for w in FAREWELLS)


def effort_reply(prompt: str) -> str:
    msg = section(prompt, "Doctor's message:\n", "\n\nReply with")
    words = msg.split()
    if not words:
        return "AMBIGUOUS"
    low = msg.lower()
    if len(words) > 60:
        return "COMPLEX"
    if "?" not in msg:
        return "TRIVIAL"
    if any(w in low for w in ("how do you feel", "tell me about", "describe", "why", "worried")):
        return "OPEN"
    return "FOCUSED"


def emotion_reply(seed: int):
    def reply(prompt: str) -> str:
        message = section(prompt, "interlocutor_recent_message:", "\n\ncognitive_effort:")
        effort = section(prompt, "cognitive_effort:", "\n\nretrival_summary:")
        name = section(prompt, "Name:", "\n") or "The patient"
        r = rng_for(seed, "emotion", name, effort, message)
        raw = {e: r.randint(-4, 4) for e in EMOTIONS}
        if effort in ("OPEN", "COMPLEX"):
            raw["anxiety"] = min(10, raw["anxiety"] + 4)
        if is_farewell(message):
            raw["relief"] = min(10, raw["relief"] + 5)
        top = max(EMOTIONS, key=lambda e: (raw[e], e))
        topic = " ".join(message.split()[:8]) or "the consultation"
        lines = [f"{e}: {raw[e]}" for e in EMOTIONS]
        lines += [
            f"valence: {r.randint(-5, 5)}",
            f"arousal: {r.randint(0, 6)}",
            f"summary: {name} feels mostly {top} at this point of the visit.",
            f"reflection: {name} felt {top} when Doctor AI said \"{topic}\".",
            f"poignancy: {r.randint(1, 8)}",
        ]
        return "\n".join(lines)

    return reply


def responder_reply(seed: int, close_after: int | None = None):
    """Patient replies built from retrieved memories; closes after ``close_after`` patient turns if set."""

    def reply(prompt: str) -> str:
        context = section(prompt, "## Memories that come to mind", "## Already shared")
        conversation = section(prompt, "Conversation so far:\n", "\n\nDoctor: ")
        doctor = section(prompt, "\n\nDoctor: ", "\nPatient:")
        memories = _MEMORY_LINE.findall(context)
        r = rng_for(seed, "responder", conversation, doctor)
        used = sorted(r.sample(memories, min(len(memories), r.randint(0, 2))))
        if is_farewell(doctor):
            text = "Thank you, doctor. Goodbye."
        elif used:
            text = "Well, " + "; also, ".join(m[2].rstrip(".").lower() for m in used) + "."
        else:
            text = r.choice(("I'm not sure, doctor.", "Yes, doctor.", "Could you explain that a bit more?"))
        turns = len(re.findall(r"^Patient: ", conversation, re.MULTILINE)) + 1
        out = [text]
        if close_after is not None and turns >= close_after:
            out.append(CLOSURE_MARKER)
        out.append(f"{USED_PREFIX} " + (", ".join(m[0] for m in used) or "none"))
        return "\n".join(out)

    return reply


def closure_reply(prompt: str) -> str:
    transcript = section(prompt, "Transcript:\n", "\n\nAnswer with")
    lines = [ln for ln in transcript.splitlines() if ln.strip()]
    return "YES" if lines and any(is_farewell(ln) for ln in lines[-2:]) else "NO"


def dismissal_reply(prompt: str) -> str:
    return "YES" if is_farewell(section(prompt, "Message:\n", "\n\nIs the doctor")) else "NO"


def classifier_reply(prompt: str) -> str:
    """One classifier serving both the closure and the dismissal questions."""
    if prompt.startswith("Here is the latest message"):
        return dismissal_reply(prompt)
    return closure_reply(prompt)


def committee_reply(seed: int):
    def reply(prompt: str) -> str:
        category = section(prompt, "Category under review:", "\n")
        transcript = section(prompt, "Transcript (each message is prefixed with its index):\n", "\n\nWrite the discussion")
        idx = [int(i) for i in _INDEXED.findall(transcript)]
        r = rng_for(seed, "committee", category, transcript)
        cited = sorted(r.sample(idx, min(len(idx), 2)))
        refs = ", ".join(map(str, cited)) or "none"
        return (
            f"Member A finds the doctor's handling of {category} adequate, pointing to messages {refs}.\n"
            f"Member B disagrees and argues that the same passages leave gaps.\n"
            f"Member C notes that the evidence is mixed.\n"
            f"evidence: {refs}"
        )

    return reply


def scorer_reply(seed: int):
    def reply(prompt: str) -> str:
        dim = section(prompt, "Dimension:", "\n")
        transcript = section(prompt, "Transcript (each message is prefixed with its index):\n", "\n\nCommittee discussion")
        idx = [int(i) for i in _INDEXED.findall(transcript)]
        r = rng_for(seed, "score", dim, transcript)
        raw = r.choices((1, 2, 3, 4), weights=(1, 3, 4, 2))[0]
        cite = f"[{r.choice(idx)}]" if idx else "the transcript"
        return f"The behaviour described by the anchors is best matched at level {raw}, see {cite}.\nscore: {raw}"

    return reply


def judge_reply(seed: int):
    committee, scorer = committee_reply(seed), scorer_reply(seed)

    def reply(prompt: str) -> str:
        return committee(prompt) if prompt.startswith("You are chairing") else scorer(prompt)

    return reply


@dataclass
class ScriptedSuite:
    """All non-doctor roles for an offline campaign."""

    patient: PatientBackends
    classifier: ScriptedLM
    judge: ScriptedLM
    embedder: HashEmbedder


def scripted_suite(seed: int = 0, *, close_after: int | None = None, embed_dim: int = 64) -> ScriptedSuite:
    return ScriptedSuite(
        patient=PatientBackends(
            effort=ScriptedLM(effort_reply),
            emotion=ScriptedLM(emotion_reply(seed)),
            responder=ScriptedLM(responder_reply(seed, close_after)),
        ),
        classifier=ScriptedLM(classifier_reply),
        judge=ScriptedLM(judge_reply(seed)),
        embedder=HashEmbedder(dim=embed_dim, seed=seed),
    )
