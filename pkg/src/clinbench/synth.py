"""Synthetic cohort generator.

Builds packets whose task-cell counts and demographic marginals match the
benchmark cohort exactly. Clinical content is templated per encounter reason
and randomised from a seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

from .packet import (
    ClinicalEvent,
    ManifestEntry,
    Observation,
    PatientPacket,
    persona_affect,
    validate_cohort,
    write_manifest,
    write_packet,
)
from .tasks import TASK_MATRIX

DEMOGRAPHIC_COUNTS: dict[str, dict[str, int]] = {
    "gender": {"female": 198, "male": 168},
    "age_group": {"21-34": 142, "35-49": 26, "50-64": 18, "65+": 180},
    "race_ethnicity": {"asian": 245, "black": 38, "hispanic": 22, "native": 23, "other": 17, "white": 21},
    "education": {"bs_degree": 90, "hs_degree": 108, "less_than_hs": 41, "some_college": 127},
    "ses": {"low": 106, "middle": 99, "high": 161},
}
AGE_RANGES = {"21-34": (21, 34), "35-49": (35, 49), "50-64": (50, 64), "65+": (65, 88)}
# reasons whose patients are necessarily female, and ones bound to an age group
FEMALE_ONLY = ("pregnancy", "breast_cancer")
AGE_BOUND = {"pregnancy": "21-34"}

FIRST_NAMES = {
    "female": ("Amelia", "Grace", "Hana", "Isabel", "Joy", "Leila", "Mei", "Nadia", "Priya", "Rosa", "Sofia", "Yuki", "Ana", "Claire", "Esther", "Farah"),
    "male": ("Aarav", "Ben", "Carlos", "Daniel", "Elijah", "Hiro", "Ivan", "Jamal", "Kenji", "Luis", "Marcus", "Omar", "Raj", "Samuel", "Tomas", "Wei"),
}
LAST_NAMES = (
    "Chen", "Garcia", "Kim", "Nguyen", "Patel", "Okafor", "Silva", "Tanaka", "Walker", "Yazzie",
    "Ahmed", "Brown", "Diaz", "Ito", "Lopez", "Moreau", "Rossi", "Singh", "Wong", "Zhang",
)

# (code, display, salience) for the presenting condition of each reason
PRIMARY = {
    "anxiety": ("F41.1", "Generalized anxiety disorder", 0.85),
    "asthma": ("J45.40", "Moderate persistent asthma", 0.8),
    "breast_cancer": ("C50.9", "Malignant neoplasm of breast", 0.95),
    "depression": ("F32.1", "Major depressive disorder, moderate", 0.85),
    "dermatitis": ("L20.9", "Atopic dermatitis", 0.7),
    "lupus": ("M32.9", "Systemic lupus erythematosus", 0.9),
    "pregnancy": ("Z34.90", "Normal pregnancy", 0.9),
    "seizure_disorder": ("G40.909", "Epilepsy, not intractable", 0.9),
    "wellness_checkup": None,
}
REASON_MEDS = {
    "anxiety": [("sertraline", "Sertraline 50 mg daily"), ("hydroxyzine", "Hydroxyzine 25 mg as needed")],
    "asthma": [("albuterol", "Albuterol inhaler as needed"), ("budesonide-formoterol", "Budesonide-formoterol inhaler twice daily")],
    "breast_cancer": [("tamoxifen", "Tamoxifen 20 mg daily"), ("ondansetron", "Ondansetron 8 mg as needed")],
    "depression": [("escitalopram", "Escitalopram 10 mg daily"), ("bupropion", "Bupropion XL 150 mg daily")],
    "dermatitis": [("triamcinolone", "Triamcinolone 0.1% cream"), ("cetirizine", "Cetirizine 10 mg daily")],
    "lupus": [("hydroxychloroquine", "Hydroxychloroquine 200 mg twice daily"), ("prednisone", "Prednisone 5 mg daily")],
    "pregnancy": [("prenatal-vitamin", "Prenatal vitamin daily"), ("folic-acid", "Folic acid 0.4 mg daily")],
    "seizure_disorder": [("levetiracetam", "Levetiracetam 500 mg twice daily"), ("lamotrigine", "Lamotrigine 100 mg daily")],
    "wellness_checkup": [("multivitamin", "Multivitamin daily")],
}
REASON_OBS = {
    "anxiety": [("70274-6", "GAD-7 score", "{score}", 6, 18)],
    "asthma": [("20150-9", "FEV1", "L", 1.6, 3.2)],
    "breast_cancer": [("6690-2", "White blood cell count", "10*3/uL", 3.2, 9.5)],
    "depression": [("44261-6", "PHQ-9 score", "{score}", 8, 22)],
    "dermatitis": [("19113-0", "Total IgE", "IU/mL", 80, 900)],
    "lupus": [("4498-2", "Complement C4", "mg/dL", 6, 30)],
    "pregnancy": [("2106-3", "hCG", "mIU/mL", 2000, 90000)],
    "seizure_disorder": [("3413-2", "Levetiracetam level", "ug/mL", 8, 40)],
    "wellness_checkup": [("2093-3", "Total cholesterol", "mg/dL", 150, 260)],
}
COMMON_OBS = [
    ("8480-6", "Systolic blood pressure", "mm[Hg]", 105, 155),
    ("8867-4", "Heart rate", "/min", 58, 98),
    ("39156-5", "Body mass index", "kg/m2", 19, 36),
]
COMORBIDITIES = [
    ("I10", "Essential hypertension", 0.55),
    ("E11.9", "Type 2 diabetes mellitus", 0.65),
    ("E78.5", "Hyperlipidemia", 0.45),
    ("K21.9", "Gastro-esophageal reflux disease", 0.35),
    ("M54.5", "Low back pain", 0.4),
    ("G43.909", "Migraine", 0.5),
]
COMORBIDITY_MEDS = {
    "I10": ("lisinopril", "Lisinopril 10 mg daily"),
    "E11.9": ("metformin", "Metformin 500 mg twice daily"),
    "E78.5": ("atorvastatin", "Atorvastatin 20 mg daily"),
    "K21.9": ("omeprazole", "Omeprazole 20 mg daily"),
}
ALLERGIES = [("penicillin", "Penicillin allergy"), ("sulfa", "Sulfonamide allergy"), ("peanut", "Peanut allergy"), ("latex", "Latex allergy")]
LIFE_EVENTS = [
    ("job-loss", "Lost a job", 0.7),
    ("bereavement", "Death of a parent", 0.85),
    ("move", "Moved to a new city", 0.5),
    ("marriage", "Got married", 0.6),
    ("divorce", "Went through a divorce", 0.75),
    ("retirement", "Retired from work", 0.5),
    ("new-child", "Birth of a child", 0.7),
]
PROCEDURES = [("appendectomy", "Appendectomy", 0.5), ("knee-arthroscopy", "Knee arthroscopy", 0.45), ("colonoscopy", "Screening colonoscopy", 0.3)]
TEMPERAMENTS = (
    "reserved and answers briefly unless asked directly",
    "talkative and tends to drift into personal stories",
    "anxious and asks many follow-up questions",
    "matter-of-fact and wants clear instructions",
    "skeptical of medication and prefers natural remedies",
    "cheerful but downplays symptoms",
)
AFFECT_PROFILES = {
    "anxiety": "anxiety=5, fear=3, calmness=-3",
    "depression": "sadness=5, interest=-3, joy=-3",
    "breast_cancer": "fear=5, anxiety=4, sadness=3",
    "lupus": "confusion=3, anxiety=3, sadness=2",
    "seizure_disorder": "anxiety=4, fear=3",
    "pregnancy": "excitement=4, anxiety=3, joy=3",
    "asthma": "anxiety=2, calmness=-1",
    "dermatitis": "awareness=3, anxiety=2, disgust=1",
    "wellness_checkup": "calmness=3, interest=2",
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    first_encounter: date = date(2025, 3, 3)
    encounter_days: int = 90


def _counts_list(counts: dict[str, int]) -> list[str]:
    return [value for value, n in counts.items() for _ in range(n)]


def _assign(rng: random.Random, counts: dict[str, int], reasons: list[str], required: dict[str, str]) -> list[str]:
    """Distribute the exact value counts over patients, honouring per-reason requirements first."""
    pool = _counts_list(counts)
    assert len(pool) == len(reasons)
    out: list[str | None] = [None] * len(reasons)
    for i, reason in enumerate(reasons):
        want = required.get(reason)
        if want is not None:
            pool.remove(want)
            out[i] = want
    rng.shuffle(pool)
    it = iter(pool)
    return [v if v is not None else next(it) for v in out]


def _ts(d: date, hour: int = 10) -> datetime:
    return datetime(d.year, d.month, d.day, hour, 0, tzinfo=timezone.utc)


def _birth_date(rng: random.Random, age: int, encounter: date) -> date:
    # a birthday strictly before the encounter day in the year the patient turned ``age``
    days_before = rng.randint(1, 364)
    last_birthday = encounter - timedelta(days=days_before)
    try:
        return last_birthday.replace(year=last_birthday.year - age)
    except ValueError:  # 29 February
        return (last_birthday - timedelta(days=1)).replace(year=last_birthday.year - age)


def _past(rng: random.Random, encounter: date, min_days: int, max_days: int) -> date:
    return encounter - timedelta(days=rng.randint(min_days, max_days))


def _observations(rng, encounter, specs):
    obs = []
    for code, display, unit, lo, hi in specs:
        for _ in range(rng.randint(1, 3)):
            value = rng.uniform(lo, hi)
            value = round(value) if isinstance(lo, int) and isinstance(hi, int) else round(value, 2)
            obs.append(Observation(code, display, float(value), unit, _ts(_past(rng, encounter, 7, 900), 8)))
    return tuple(sorted(obs, key=lambda o: (o.code, o.taken_at)))


def make_packet(patient_id: str, reason: str, demo: dict[str, str], encounter: date, rng: random.Random) -> PatientPacket:
    lo, hi = AGE_RANGES[demo["age_group"]]
    age = rng.randint(lo, hi)
    first = rng.choice(FIRST_NAMES[demo["gender"]])
    name = f"{first} {rng.choice(LAST_NAMES)}"

    conditions: list[ClinicalEvent] = []
    primary = PRIMARY[reason]
    if primary:
        code, display, sal = primary
        onset_window = (30, 270) if reason == "pregnancy" else (60, 2500)
        conditions.append(ClinicalEvent("diagnosis", code, display, _ts(_past(rng, encounter, *onset_window)), salience=sal))
    extra = rng.sample(COMORBIDITIES, rng.randint(0, 2 if age >= 50 else 1))
    for code, display, sal in extra:
        conditions.append(ClinicalEvent("diagnosis", code, display, _ts(_past(rng, encounter, 200, 4000)), salience=sal))
    if rng.random() < 0.3:
        code, display, sal = rng.choice(PROCEDURES)
        d = _past(rng, encounter, 400, 6000)
        conditions.append(ClinicalEvent("procedure", code, display, _ts(d), resolved=_ts(d, 16), salience=sal))
    for code, display, sal in rng.sample(LIFE_EVENTS, rng.randint(0, 2)):
        if code == "retirement" and age < 55:
            continue
        conditions.append(ClinicalEvent("life_event", code, display, _ts(_past(rng, encounter, 30, 3000)), salience=sal))

    meds = []
    reason_meds = REASON_MEDS[reason]
    for code, display in rng.sample(reason_meds, rng.randint(1, len(reason_meds))):
        meds.append(ClinicalEvent("medication", code, display, _ts(_past(rng, encounter, 14, 700)), salience=0.6))
    for code, _, _ in extra:
        if code in COMORBIDITY_MEDS:
            mcode, mdisplay = COMORBIDITY_MEDS[code]
            meds.append(ClinicalEvent("medication", mcode, mdisplay, _ts(_past(rng, encounter, 100, 3000)), salience=0.5))

    allergies = []
    if rng.random() < 0.35:
        code, display = rng.choice(ALLERGIES)
        allergies.append(ClinicalEvent("allergy", code, display, _ts(_past(rng, encounter, 1000, 9000)), salience=0.7))

    observations = _observations(rng, encounter, COMMON_OBS[: rng.randint(1, 3)] + REASON_OBS[reason])
    notes = "\n".join(
        [
            f"{first} is {rng.choice(TEMPERAMENTS)}.",
            f"affect: {AFFECT_PROFILES[reason]}",
        ]
    )
    return PatientPacket(
        patient_id=patient_id,
        name=name,
        birth_date=_birth_date(rng, age, encounter),
        gender=demo["gender"],
        race_ethnicity=demo["race_ethnicity"],
        education=demo["education"],
        ses=demo["ses"],
        conditions=tuple(sorted(conditions, key=lambda e: (e.onset, e.code))),
        medications=tuple(sorted(meds, key=lambda e: (e.onset, e.code))),
        allergies=tuple(allergies),
        observations=observations,
        persona_notes=notes,
        encounter_date=_ts(encounter, 9),
    )


def synthesize_cohort(config: SynthConfig = SynthConfig()) -> tuple[list[PatientPacket], list[ManifestEntry]]:
    rng = random.Random(config.seed)
    cells = [cell for cell, n in sorted(TASK_MATRIX.items()) for _ in range(n)]
    reasons = [r for r, _ in cells]
    demo_cols = {
        "gender": _assign(rng, DEMOGRAPHIC_COUNTS["gender"], reasons, {r: "female" for r in FEMALE_ONLY}),
        "age_group": _assign(rng, DEMOGRAPHIC_COUNTS["age_group"], reasons, AGE_BOUND),
    }
    for key in ("race_ethnicity", "education", "ses"):
        demo_cols[key] = _assign(rng, DEMOGRAPHIC_COUNTS[key], reasons, {})

    packets, manifest = [], []
    for i, (reason, objective) in enumerate(cells):
        pid = f"P{i + 1:04d}"
        demo = {k: col[i] for k, col in demo_cols.items()}
        encounter = config.first_encounter + timedelta(days=rng.randrange(config.encounter_days))
        packet = make_packet(pid, reason, demo, encounter, random.Random(f"{config.seed}:{pid}"))
        assert packet.age_group() == demo["age_group"], (pid, packet.age_group(), demo)
        persona_affect(packet.persona_notes)
        packets.append(packet)
        manifest.append(ManifestEntry(pid, reason, objective))
    problems = validate_cohort(packets)
    if problems:
        raise AssertionError(f"synthesized cohort is invalid: {problems[:3]}")
    return packets, manifest


def write_cohort(packets, manifest, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for old in out.glob("*.json"):
        old.unlink()
    for p in packets:
        write_packet(p, out)
    write_manifest(manifest, out / "manifest.csv")
    return out
