"""Conversation loop, closure classification and campaign execution."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .affect import ClassificationError
from .backends import DoctorBackend, LanguageModel, call_with_retry
from .memory import Embedder
from .packet import Cohort, ManifestEntry, PatientPacket
from .patient import PatientAgentState, PatientBackends, PatientConfig, PatientTurnError, init_patient, patient_turn
from .prompts import render
from .tasks import TaskCell, TaskError
from .transcript import MESSAGE_CAP, Transcript, dumps_jsonl, write_transcript

log = logging.getLogger(__name__)

MAX_REPEATS = 3
DEFAULT_START = datetime(2025, 1, 1, 9, 0, tzinfo=timezone.utc)


class CampaignError(ValueError):
    pass


def sample_task(manifest: Mapping[str, ManifestEntry], patient_id: str) -> TaskCell:
    """The task cell bound to ``patient_id`` in the cohort manifest."""
    try:
        entry = manifest[patient_id]
    except KeyError:
        raise TaskError(f"patient {patient_id!r} not in manifest") from None
    return TaskCell(entry.encounter_reason, entry.encounter_objective)


def build_doctor_prompt(patient_name: str, encounter_reason: str) -> str:
    if not patient_name.strip():
        raise ValueError("patient name is empty")
    if not encounter_reason.strip():
        raise ValueError("encounter reason is empty")
    return render("doctor", patient_name=patient_name, encounter_reason=encounter_reason)


def parse_yes_no(text: str) -> bool:
    words = text.strip().split()
    token = words[0].strip(".,!:;*").upper() if words else ""
    if token in ("YES", "TRUE"):
        return True
    if token in ("NO", "FALSE"):
        return False
    raise ClassificationError(f"expected YES or NO, got {text.strip()[:40]!r}")


def classify_closure(transcript: Transcript, classifier: LanguageModel) -> bool | None:
    """Label whether the conversation reached a reasonable conclusion.

    Stores the label on the transcript. A classifier failure leaves the label
    empty and flags it in ``diagnostics``; it never blocks judging.
    """
    try:
        label = parse_yes_no(call_with_retry(classifier.complete, render("closure", transcript=transcript.render(numbered=False))))
    except Exception as exc:
        log.warning("closure classifier failed for %s: %s", transcript.conversation_id, exc)
        transcript.closure_reasonable = None
        transcript.diagnostics["closure_label"] = f"classifier_failed: {exc}"
        return None
    transcript.closure_reasonable = label
    transcript.diagnostics.pop("closure_label", None)
    return label


@dataclass(frozen=True)
class ConversationConfig:
    cap: int = MESSAGE_CAP
    # literal dismissal marker for scripted doctors; None means ask the classifier
    doctor_closure_marker: str | None = None
    message_interval: timedelta = timedelta(minutes=1)
    patient: PatientConfig = PatientConfig()


@dataclass
class Runtime:
    """Everything besides the doctor that a conversation needs."""

    patient_backends: PatientBackends
    classifier: LanguageModel
    embedder: Embedder
    config: ConversationConfig = ConversationConfig()


def doctor_dismissed(message: str, runtime: Runtime) -> bool:
    marker = runtime.config.doctor_closure_marker
    if marker is not None:
        return marker in message
    return parse_yes_no(call_with_retry(runtime.classifier.complete, render("dismissal", message=message)))


def run_conversation(
    doctor: DoctorBackend,
    agent: PatientAgentState,
    runtime: Runtime,
    *,
    cell: TaskCell,
    start_time: datetime,
    conversation_id: str = "conversation",
    repeat_index: int = 1,
) -> Transcript:
    cfg = runtime.config
    if cfg.cap < 1:
        raise ValueError("cap must be positive")
    packet = agent.packet
    t = Transcript(conversation_id, doctor.model_id, packet.patient_id, cell, repeat_index=repeat_index)
    system_prompt = build_doctor_prompt(packet.name, cell.reason_display)
    now = start_time

    def fail(stage: str, exc: BaseException | str) -> Transcript:
        t.termination = "failed"
        t.diagnostics.update(stage=stage, error=str(exc))
        log.warning("%s failed at %s: %s", conversation_id, stage, exc)
        return t

    while len(t) < cfg.cap:
        try:
            doctor_text = doctor.complete(list(t.messages), system_prompt)
        except Exception as exc:
            return fail("doctor", exc)
        if not doctor_text or not doctor_text.strip():
            return fail("doctor", "empty doctor message")
        t.append("doctor", doctor_text.strip())
        now += cfg.message_interval

        try:
            closed_by_doctor = doctor_dismissed(doctor_text, runtime)
        except Exception as exc:
            closed_by_doctor = False
            t.diagnostics["dismissal_check_failures"] = t.diagnostics.get("dismissal_check_failures", 0) + 1
            log.warning("%s: dismissal check failed: %s", conversation_id, exc)

        if len(t) >= cfg.cap:
            break
        try:
            reply, agent = patient_turn(
                agent,
                doctor_text,
                runtime.patient_backends,
                runtime.embedder,
                now,
                cfg.patient,
                conversation=t.messages[:-1],
            )
        except PatientTurnError as exc:
            return fail(f"patient:{exc.stage}", exc.cause)
        t.append("patient", reply)
        now += cfg.message_interval

        if closed_by_doctor:
            t.termination = "closed_by_doctor"
            break
        if agent.wants_closure:
            t.termination = "closed_by_patient"
            break

    if t.termination is None:
        t.termination = "cap_reached"
    t.diagnostics["disclosed"] = len(agent.disclosed)
    classify_closure(t, runtime.classifier)
    return t


# -- campaigns --------------------------------------------------------------------


@dataclass
class CampaignResult:
    transcripts: list[Transcript]
    failures: list[dict]
    pair_counts: dict[tuple[str, str], int]
    manifest: dict[str, str] = field(default_factory=dict)


def encounter_start(packet: PatientPacket) -> datetime:
    if packet.encounter_date is None:
        return DEFAULT_START
    return datetime.combine(packet.encounter_date.date(), time(9, 0), tzinfo=timezone.utc)


def conversation_id(model_id: str, patient_id: str, repeat_index: int) -> str:
    return f"{model_id}__{patient_id}__r{repeat_index}"


def _run_one(doctor, packet: PatientPacket, cell: TaskCell, repeat_index: int, runtime: Runtime):
    cid = conversation_id(doctor.model_id, packet.patient_id, repeat_index)
    start = encounter_start(packet)
    try:
        agent = init_patient(packet, cell, runtime.embedder, start)
    except Exception as exc:
        t = Transcript(cid, doctor.model_id, packet.patient_id, cell, repeat_index=repeat_index)
        t.termination = "failed"
        t.diagnostics.update(stage="patient:init", error=str(exc))
        return t
    t = run_conversation(doctor, agent, runtime, cell=cell, start_time=start, conversation_id=cid, repeat_index=repeat_index)
    t.patient = {"name": packet.name, **packet.demographics()}
    return t


def run_campaign(
    cohort: Cohort,
    models: Sequence[DoctorBackend],
    runtime: Runtime,
    *,
    repeats: int = MAX_REPEATS,
    parallelism: int = 1,
    seed: int = 0,
) -> CampaignResult:
    """Up to ``repeats`` conversations for every (model, patient) pair.

    Conversations with at least one completed patient turn are returned for
    judging, including ones that later failed. Every failure also gets a
    failure record.
    """
    if not 1 <= repeats <= MAX_REPEATS:
        raise CampaignError(f"repeats must be in 1..{MAX_REPEATS}")
    if parallelism < 1:
        raise CampaignError("parallelism must be >= 1")
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise CampaignError("duplicate model_id")

    jobs = []
    for doctor in models:
        for pid in cohort.patient_ids():
            cell = sample_task(cohort.manifest, pid)
            for r in range(1, repeats + 1):
                jobs.append((doctor, cohort.packets[pid], cell, r))

    if parallelism == 1:
        results = [_run_one(*job, runtime) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(lambda job: _run_one(*job, runtime), jobs))

    transcripts, failures = [], []
    counts: dict[tuple[str, str], int] = {(m, pid): 0 for m in ids for pid in cohort.patient_ids()}
    for t in results:
        if t.termination == "failed":
            failures.append(
                {
                    "conversation_id": t.conversation_id,
                    "model_id": t.model_id,
                    "patient_id": t.patient_id,
                    "repeat_index": t.repeat_index,
                    "patient_turns": t.patient_turns,
                    "stage": t.diagnostics.get("stage"),
                    "error": t.diagnostics.get("error"),
                }
            )
        if t.patient_turns > 0:
            transcripts.append(t)
            counts[(t.model_id, t.patient_id)] += 1
    transcripts.sort(key=lambda t: t.conversation_id)
    failures.sort(key=lambda f: f["conversation_id"])

    manifest = {
        "seed": str(seed),
        "cap": str(runtime.config.cap),
        "repeats": str(repeats),
        "patients": str(len(cohort)),
        "models": ",".join(ids),
        "conversations": str(len(transcripts)),
        "failures": str(len(failures)),
        "cap_reached": str(sum(t.termination == "cap_reached" for t in transcripts)),
        "retrieval_k": str(runtime.config.patient.k),
    }
    for m in models:
        manifest[f"model.{m.model_id}.params"] = json.dumps(getattr(m, "params", {}) or {}, sort_keys=True)
    for (mid, pid), n in sorted(counts.items()):
        manifest[f"pair.{mid}.{pid}"] = str(n)
    return CampaignResult(transcripts, failures, counts, manifest)


def format_manifest(manifest: Mapping[str, str]) -> str:
    return "".join(f"{k}={v}\n" for k, v in manifest.items())


def parse_manifest(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_campaign(result: CampaignResult, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    tdir = out_dir / "transcripts"
    tdir.mkdir(parents=True, exist_ok=True)
    for t in result.transcripts:
        write_transcript(t, tdir)
    (out_dir / "failures.jsonl").write_text(dumps_jsonl(result.failures), encoding="utf-8")
    (out_dir / "campaign.txt").write_text(format_manifest(result.manifest), encoding="utf-8")
    return out_dir
