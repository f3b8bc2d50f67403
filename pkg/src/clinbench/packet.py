"""Patient packets: the flat per-patient record schema, cohort loading and memory seeding."""

from __future__ import annotations

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, time, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .affect import EMOTIONS, AffectError, EmotionVector
from .memory import Embedder, MemoryRecord, embed

GENDERS = ("female", "male")
RACE_ETHNICITIES = ("asian", "black", "hispanic", "native", "other", "white")
EDUCATION_LEVELS = ("less_than_hs", "hs_degree", "some_college", "bs_degree")
SES_LEVELS = ("low", "middle", "high")
EVENT_KINDS = ("diagnosis", "medication", "allergy", "procedure", "life_event")
AGE_GROUPS = ((21, 34, "21-34"), (35, 49, "35-49"), (50, 64, "50-64"), (65, 200, "65+"))

DEFAULT_SALIENCE = 0.5
OBSERVATION_IMPORTANCE = DEFAULT_SALIENCE

# which event kinds may appear in which packet list, and the kind assumed when omitted
_LIST_KINDS = {
    "conditions": (("diagnosis", "procedure", "life_event"), "diagnosis"),
    "medications": (("medication",), "medication"),
    "allergies": (("allergy",), "allergy"),
}


class PacketError(ValueError):
    """Base class; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class PacketParseError(PacketError):
    pass


class PacketValidationError(PacketError):
    pass


def parse_timestamp(value: Any, field: str = "timestamp") -> datetime:
    """ISO-8601 date or datetime; naive values are taken as UTC, date-only as midnight."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, date):
        dt = datetime.combine(value, time())
    elif isinstance(value, str):
        try:
            dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            raise PacketParseError(field, f"not an ISO-8601 timestamp: {value!r}") from None
    else:
        raise PacketParseError(field, f"not an ISO-8601 timestamp: {value!r}")
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class ClinicalEvent:
    kind: str
    code: str
    display: str
    onset: datetime
    resolved: datetime | None = None
    salience: float = DEFAULT_SALIENCE

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise PacketValidationError(self.code or "event", f"unknown event kind {self.kind!r}")
        if self.resolved is not None and self.resolved < self.onset:
            raise PacketValidationError(self.display or self.code, "resolved precedes onset")
        if not 0.0 <= self.salience <= 1.0:
            raise PacketValidationError(self.display or self.code, f"salience {self.salience} outside [0, 1]")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "code": self.code, "display": self.display, "onset": _iso(self.onset)}
        if self.resolved is not None:
            d["resolved"] = _iso(self.resolved)
        d["salience"] = self.salience
        return d


@dataclass(frozen=True)
class Observation:
    code: str
    display: str
    value: float
    unit: str
    taken_at: datetime

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise PacketValidationError(self.display or self.code, "observation value is not finite")
        if not self.unit:
            raise PacketValidationError(self.display or self.code, "observation unit is empty")

    def to_dict(self) -> dict:
        return {"code": self.code, "display": self.display, "value": self.value, "unit": self.unit, "taken_at": _iso(self.taken_at)}


@dataclass(frozen=True)
class PatientPacket:
    patient_id: str
    name: str
    birth_date: date
    gender: str
    race_ethnicity: str
    education: str
    ses: str
    conditions: tuple[ClinicalEvent, ...] = ()
    medications: tuple[ClinicalEvent, ...] = ()
    allergies: tuple[ClinicalEvent, ...] = ()
    observations: tuple[Observation, ...] = ()
    persona_notes: str = ""
    encounter_date: datetime | None = None

    def __post_init__(self):
        if not self.patient_id:
            raise PacketValidationError("patient_id", "empty")
        for fname, allowed in (
            ("gender", GENDERS),
            ("race_ethnicity", RACE_ETHNICITIES),
            ("education", EDUCATION_LEVELS),
            ("ses", SES_LEVELS),
        ):
            if getattr(self, fname) not in allowed:
                raise PacketValidationError(fname, f"{getattr(self, fname)!r} not one of {allowed}")
        if self.encounter_date is not None:
            for label, ts in self._timestamps():
                if ts > self.encounter_date:
                    raise PacketValidationError(label, "timestamp after the encounter date")

    def _timestamps(self):
        for ev in self.events:
            yield ev.display or ev.code, ev.onset
            if ev.resolved is not None:
                yield ev.display or ev.code, ev.resolved
        for ob in self.observations:
            yield ob.display or ob.code, ob.taken_at

    @property
    def events(self) -> tuple[ClinicalEvent, ...]:
        return self.conditions + self.medications + self.allergies

    def age_at(self, when: date | datetime | None = None) -> int:
        when = when or self.encounter_date or datetime.now(timezone.utc)
        if isinstance(when, datetime):
            when = when.date()
        b = self.birth_date
        return when.year - b.year - ((when.month, when.day) < (b.month, b.day))

    def age_group(self, when: date | datetime | None = None) -> str:
        age = self.age_at(when)
        for lo, hi, label in AGE_GROUPS:
            if lo <= age <= hi:
                return label
        return "under-21"

    def demographics(self) -> dict[str, str]:
        return {
            "gender": self.gender,
            "age_group": self.age_group(),
            "race_ethnicity": self.race_ethnicity,
            "education": self.education,
            "ses": self.ses,
        }


def _require(raw: Mapping, key: str, where: str = "") -> Any:
    if key not in raw:
        raise PacketParseError(f"{where}{key}", "missing")
    return raw[key]


def _str(raw: Mapping, key: str, where: str = "", required: bool = True) -> str:
    value = _require(raw, key, where) if required else raw.get(key, "")
    if not isinstance(value, str):
        raise PacketParseError(f"{where}{key}", f"expected a string, got {type(value).__name__}")
    return value


def _parse_event(raw: Any, list_name: str, idx: int) -> ClinicalEvent:
    where = f"{list_name}[{idx}]."
    if not isinstance(raw, Mapping):
        raise PacketParseError(f"{list_name}[{idx}]", "expected an object")
    allowed, default_kind = _LIST_KINDS[list_name]
    kind = raw.get("kind", default_kind)
    if kind not in allowed:
        raise PacketValidationError(f"{where}kind", f"{kind!r} not allowed in {list_name}")
    salience = raw.get("salience", DEFAULT_SALIENCE)
    if isinstance(salience, bool) or not isinstance(salience, (int, float)):
        raise PacketParseError(f"{where}salience", f"expected a number, got {salience!r}")
    resolved = raw.get("resolved")
    display = _str(raw, "display", where)
    try:
        return ClinicalEvent(
            kind=kind,
            code=_str(raw, "code", where),
            display=display,
            onset=parse_timestamp(_require(raw, "onset", where), f"{where}onset"),
            resolved=parse_timestamp(resolved, f"{where}resolved") if resolved is not None else None,
            salience=float(salience),
        )
    except PacketValidationError as exc:
        raise PacketValidationError(f"{list_name}[{idx}] ({display})", str(exc).split(": ", 1)[-1]) from None


def _parse_observation(raw: Any, idx: int) -> Observation:
    where = f"observations[{idx}]."
    if not isinstance(raw, Mapping):
        raise PacketParseError(f"observations[{idx}]", "expected an object")
    value = _require(raw, "value", where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PacketParseError(f"{where}value", f"expected a number, got {value!r}")
    return Observation(
        code=_str(raw, "code", where),
        display=_str(raw, "display", where),
        value=float(value),
        unit=_str(raw, "unit", where),
        taken_at=parse_timestamp(_require(raw, "taken_at", where), f"{where}taken_at"),
    )


def parse_packet(raw: Mapping | str | bytes) -> PatientPacket:
    """Build a validated packet from a packet document (mapping or JSON text).

    Unknown keys are ignored.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise PacketParseError("document", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, Mapping):
        raise PacketParseError("document", "expected a JSON object")

    birth = _str(raw, "birth_date")
    try:
        birth_date = date.fromisoformat(birth)
    except ValueError:
        raise PacketParseError("birth_date", f"not an ISO-8601 date: {birth!r}") from None

    lists = {}
    for name in ("conditions", "medications", "allergies", "observations"):
        items = raw.get(name, [])
        if not isinstance(items, list):
            raise PacketParseError(name, "expected a list")
        lists[name] = items

    encounter = raw.get("encounter_date")
    return PatientPacket(
        patient_id=_str(raw, "patient_id"),
        name=_str(raw, "name"),
        birth_date=birth_date,
        gender=_str(raw, "gender"),
        race_ethnicity=_str(raw, "race_ethnicity"),
        education=_str(raw, "education"),
        ses=_str(raw, "ses"),
        conditions=tuple(_parse_event(e, "conditions", i) for i, e in enumerate(lists["conditions"])),
        medications=tuple(_parse_event(e, "medications", i) for i, e in enumerate(lists["medications"])),
        allergies=tuple(_parse_event(e, "allergies", i) for i, e in enumerate(lists["allergies"])),
        observations=tuple(_parse_observation(o, i) for i, o in enumerate(lists["observations"])),
        persona_notes=_str(raw, "persona_notes", required=False),
        encounter_date=parse_timestamp(encounter, "encounter_date") if encounter is not None else None,
    )


def serialize_packet(packet: PatientPacket) -> dict:
    doc = {
        "patient_id": packet.patient_id,
        "name": packet.name,
        "birth_date": packet.birth_date.isoformat(),
        "gender": packet.gender,
        "race_ethnicity": packet.race_ethnicity,
        "education": packet.education,
        "ses": packet.ses,
        "conditions": [e.to_dict() for e in packet.conditions],
        "medications": [e.to_dict() for e in packet.medications],
        "allergies": [e.to_dict() for e in packet.allergies],
        "observations": [o.to_dict() for o in packet.observations],
        "persona_notes": packet.persona_notes,
    }
    if packet.encounter_date is not None:
        doc["encounter_date"] = _iso(packet.encounter_date)
    return doc


# -- memory seeding ------------------------------------------------------------------

_AFFECT_LINE = re.compile(r"^\s*affect\s*:(.*)$", re.IGNORECASE | re.MULTILINE)


def persona_affect(notes: str) -> EmotionVector:
    """Baseline emotions from ``affect: anxiety=6, fear=3`` lines in persona notes; neutral otherwise."""
    scores: dict[str, int] = {}
    for match in _AFFECT_LINE.finditer(notes):
        for item in match.group(1).split(","):
            if not item.strip():
                continue
            name, sep, value = item.partition("=")
            name = name.strip().lower()
            if not sep or name not in EMOTIONS:
                raise PacketValidationError("persona_notes", f"bad affect annotation {item.strip()!r}")
            try:
                scores[name] = int(value.strip())
            except ValueError:
                raise PacketValidationError("persona_notes", f"bad affect value {item.strip()!r}") from None
    try:
        return EmotionVector.from_mapping(scores, default=0)
    except AffectError as exc:
        raise PacketValidationError("persona_notes", str(exc)) from None


_KIND_LABEL = {
    "diagnosis": "Diagnosis",
    "medication": "Medication",
    "allergy": "Allergy",
    "procedure": "Procedure",
    "life_event": "Life event",
}
_KIND_PREFIX = {"diagnosis": "cond", "procedure": "proc", "life_event": "life", "medication": "med", "allergy": "allergy"}


def _event_text(ev: ClinicalEvent) -> str:
    since = "started" if ev.kind == "medication" else "since"
    text = f"{_KIND_LABEL[ev.kind]}: {ev.display} ({since} {ev.onset.date().isoformat()}"
    if ev.resolved is not None:
        text += f", resolved {ev.resolved.date().isoformat()}"
    return text + ")"


def _fmt_value(v: float) -> str:
    return f"{v:g}"


def seed_memories(packet: PatientPacket, embedder: Embedder, encounter_time: datetime) -> list[MemoryRecord]:
    """One memory per clinical event and one summary memory per observation code."""
    emotions = persona_affect(packet.persona_notes).unit
    records: list[MemoryRecord] = []
    counters: Counter[str] = Counter()

    def make(memory_id: str, text: str, importance: float, created: datetime) -> MemoryRecord:
        if created > encounter_time:
            raise PacketValidationError(memory_id, "memory created after the encounter time")
        return MemoryRecord(memory_id, text, embed(embedder, text), emotions, importance, created, created)

    for ev in packet.events:
        prefix = _KIND_PREFIX[ev.kind]
        counters[prefix] += 1
        records.append(make(f"{prefix}-{counters[prefix]:02d}", _event_text(ev), ev.salience, ev.onset))

    groups: dict[str, list[Observation]] = {}
    for ob in packet.observations:
        groups.setdefault(ob.code, []).append(ob)
    for code in sorted(groups):
        obs = sorted(groups[code], key=lambda o: o.taken_at)
        first, last = obs[0], obs[-1]
        if len(obs) == 1:
            text = f"Measurement: {last.display} was {_fmt_value(last.value)} {last.unit} on {last.taken_at.date().isoformat()}"
        else:
            text = (
                f"Measurement: {last.display}, {len(obs)} readings from {first.taken_at.date().isoformat()} "
                f"to {last.taken_at.date().isoformat()}, ranging {_fmt_value(min(o.value for o in obs))}"
                f"-{_fmt_value(max(o.value for o in obs))} {last.unit}, most recently {_fmt_value(last.value)} {last.unit}"
            )
        slug = re.sub(r"[^A-Za-z0-9]+", "-", code).strip("-") or "x"
        records.append(make(f"obs-{slug}", text, OBSERVATION_IMPORTANCE, last.taken_at))
    return records


# -- cohorts ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    patient_id: str
    kind: str  # "duplicate_id" | "invariant"
    detail: str


def validate_cohort(packets) -> list[Violation]:
    """Collect duplicate ids and invariant violations; an empty list means the cohort is valid."""
    out: list[Violation] = []
    counts = Counter(p.patient_id for p in packets)
    for pid, n in sorted(counts.items()):
        if n > 1:
            out.append(Violation(pid, "duplicate_id", f"patient_id appears {n} times"))
    for p in packets:
        try:
            # re-run construction checks; packets built elsewhere may bypass parse_packet
            parse_packet(serialize_packet(p))
        except PacketError as exc:
            out.append(Violation(p.patient_id, "invariant", str(exc)))
    return out


@dataclass(frozen=True)
class ManifestEntry:
    patient_id: str
    encounter_reason: str
    encounter_objective: str


@dataclass
class Cohort:
    packets: dict[str, PatientPacket]
    manifest: dict[str, ManifestEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.packets)

    def patient_ids(self) -> list[str]:
        return sorted(self.packets)


MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ("patient_id", "encounter_reason", "encounter_objective")


def read_manifest(path: str | Path) -> dict[str, ManifestEntry]:
    out: dict[str, ManifestEntry] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise PacketParseError(str(path), f"manifest missing columns {sorted(missing)}")
        for row in reader:
            pid = row["patient_id"]
            if pid in out:
                raise PacketValidationError(pid, "duplicate patient_id in manifest")
            out[pid] = ManifestEntry(pid, row["encounter_reason"], row["encounter_objective"])
    return out


def write_manifest(entries, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for e in sorted(entries, key=lambda e: e.patient_id):
            writer.writerow([e.patient_id, e.encounter_reason, e.encounter_objective])


def write_packet(packet: PatientPacket, directory: str | Path) -> Path:
    path = Path(directory) / f"{packet.patient_id}.json"
    path.write_text(json.dumps(serialize_packet(packet), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def load_cohort(directory: str | Path) -> Cohort:
    """Read every ``*.json`` packet in ``directory`` plus its ``manifest.csv``."""
    directory = Path(directory)
    packets: dict[str, PatientPacket] = {}
    for path in sorted(directory.glob("*.json")):
        try:
            packet = parse_packet(path.read_text(encoding="utf-8"))
        except PacketError as exc:
            raise type(exc)(f"{path.name}:{exc.field}", str(exc).split(": ", 1)[-1]) from None
        if packet.patient_id in packets:
            raise PacketValidationError(packet.patient_id, f"duplicate patient_id ({path.name})")
        packets[packet.patient_id] = packet
    manifest_path = directory / MANIFEST_NAME
    manifest = read_manifest(manifest_path) if manifest_path.exists() else {}
    return Cohort(packets, manifest)


def bundled_cohort_path() -> Path:
    """Directory of the synthetic cohort shipped with the package."""
    return Path(str(resources.files("clinbench").joinpath("data", "cohort")))
