"""Conversation transcripts and their line-delimited storage format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .tasks import TaskCell

SPEAKERS = ("doctor", "patient")
TERMINATIONS = ("closed_by_doctor", "closed_by_patient", "cap_reached", "failed")
MESSAGE_CAP = 50


@dataclass(frozen=True)
class Message:
    speaker: str
    text: str
    index: int


@dataclass
class Transcript:
    conversation_id: str
    model_id: str
    patient_id: str
    cell: TaskCell
    messages: list[Message] = field(default_factory=list)
    termination: str | None = None
    closure_reasonable: bool | None = None
    repeat_index: int = 1
    diagnostics: dict = field(default_factory=dict)
    patient: dict = field(default_factory=dict)  # demographics snapshot for exports

    def __len__(self) -> int:
        return len(self.messages)

    @property
    def patient_turns(self) -> int:
        return sum(1 for m in self.messages if m.speaker == "patient")

    def append(self, speaker: str, text: str) -> Message:
        msg = Message(speaker, text, len(self.messages))
        self.messages.append(msg)
        return msg

    def render(self, numbered: bool = True) -> str:
        label = {"doctor": "Doctor", "patient": "Patient"}
        if numbered:
            return "\n".join(f"[{m.index}] {label[m.speaker]}: {m.text}" for m in self.messages)
        return "\n".join(f"{label[m.speaker]}: {m.text}" for m in self.messages)

    def header(self) -> dict:
        return {
            "type": "header",
            "conversation_id": self.conversation_id,
            "model_id": self.model_id,
            "patient_id": self.patient_id,
            "encounter_reason": self.cell.encounter_reason,
            "encounter_objective": self.cell.encounter_objective,
            "repeat_index": self.repeat_index,
            "termination": self.termination,
            "closure_reasonable": self.closure_reasonable,
            "n_messages": len(self.messages),
            "diagnostics": self.diagnostics,
            "patient": self.patient,
        }

    def to_records(self) -> list[dict]:
        return [self.header()] + [
            {"type": "message", "index": m.index, "speaker": m.speaker, "text": m.text} for m in self.messages
        ]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "Transcript":
        records = list(records)
        if not records or records[0].get("type") != "header":
            raise ValueError("transcript must start with a header record")
        h = records[0]
        t = cls(
            conversation_id=h["conversation_id"],
            model_id=h["model_id"],
            patient_id=h["patient_id"],
            cell=TaskCell(h["encounter_reason"], h["encounter_objective"]),
            termination=h.get("termination"),
            closure_reasonable=h.get("closure_reasonable"),
            repeat_index=h.get("repeat_index", 1),
            diagnostics=h.get("diagnostics") or {},
            patient=h.get("patient") or {},
        )
        for r in records[1:]:
            if r.get("type") != "message":
                raise ValueError(f"unexpected record type {r.get('type')!r}")
            if r["speaker"] not in SPEAKERS:
                raise ValueError(f"unknown speaker {r['speaker']!r}")
            if r["index"] != len(t.messages):
                raise ValueError(f"{t.conversation_id}: message index {r['index']} out of sequence")
            t.messages.append(Message(r["speaker"], r["text"], r["index"]))
        return t


def check_transcript(t: Transcript, cap: int = MESSAGE_CAP) -> list[str]:
    """Protocol invariants; returns a list of problems (empty when the transcript is well formed)."""
    problems = []
    if len(t.messages) > cap:
        problems.append(f"{len(t.messages)} messages exceeds cap {cap}")
    for i, m in enumerate(t.messages):
        expected = SPEAKERS[i % 2]
        if m.speaker != expected or m.index != i:
            problems.append(f"message {i}: expected {expected} at index {i}, got {m.speaker} at {m.index}")
            break
    if t.termination not in TERMINATIONS:
        problems.append(f"termination {t.termination!r} not recognised")
    if t.termination == "cap_reached" and len(t.messages) != cap:
        problems.append("cap_reached with fewer messages than the cap")
    return problems


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def write_transcript(t: Transcript, directory: str | Path) -> Path:
    path = Path(directory) / f"{t.conversation_id}.jsonl"
    path.write_text(dumps_jsonl(t.to_records()), encoding="utf-8")
    return path


def read_transcript(path: str | Path) -> Transcript:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return Transcript.from_records(json.loads(line) for line in lines if line.strip())


def read_transcripts(directory: str | Path) -> list[Transcript]:
    return [read_transcript(p) for p in sorted(Path(directory).glob("*.jsonl"))]
