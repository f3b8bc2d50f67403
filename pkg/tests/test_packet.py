import json
from datetime import datetime, timezone

import numpy as np
import pytest
from helpers import T0, packet_doc, rich_packet_doc
from hypothesis import given
from hypothesis import strategies as st

from clinbench.affect import EMOTIONS
from clinbench.memory import EmbeddingError, HashEmbedder
from clinbench.packet import (
    EDUCATION_LEVELS,
    GENDERS,
    RACE_ETHNICITIES,
    SES_LEVELS,
    PacketParseError,
    PacketValidationError,
    load_cohort,
    parse_packet,
    persona_affect,
    seed_memories,
    serialize_packet,
    validate_cohort,
    write_manifest,
    write_packet,
    ManifestEntry,
)


def test_minimal_packet_has_empty_lists():
    p = parse_packet(packet_doc())
    assert p.conditions == p.medications == p.allergies == p.observations == ()


def test_accepts_table_values_and_ignores_unknown_fields():
    p = parse_packet(packet_doc(gender="female", ses="high", favourite_colour="blue"))
    assert (p.gender, p.ses) == ("female", "high")


def test_accepts_json_text():
    assert parse_packet(json.dumps(packet_doc())).patient_id == "p1"


@pytest.mark.parametrize(
    "field, value",
    [("gender", "nonbinary"), ("race_ethnicity", "martian"), ("education", "phd"), ("ses", "upper")],
)
def test_rejects_values_outside_categories(field, value):
    with pytest.raises(PacketValidationError) as err:
        parse_packet(packet_doc(**{field: value}))
    assert err.value.field == field


def test_resolved_before_onset_names_the_condition():
    bad = {"kind": "procedure", "code": "x1", "display": "Knee surgery", "onset": "2020-01-02T00:00:00Z", "resolved": "2020-01-01T00:00:00Z"}
    with pytest.raises(PacketValidationError, match="Knee surgery"):
        parse_packet(packet_doc(conditions=[bad]))


def test_event_after_encounter_is_rejected():
    late = {"kind": "diagnosis", "code": "x", "display": "Late", "onset": "2026-01-01T00:00:00Z"}
    with pytest.raises(PacketValidationError):
        parse_packet(packet_doc(conditions=[late]))


@pytest.mark.parametrize(
    "doc, field",
    [
        ({k: v for k, v in packet_doc().items() if k != "name"}, "name"),
        (packet_doc(birth_date="17/05/1980"), "birth_date"),
        (packet_doc(conditions="none"), "conditions"),
        (packet_doc(observations=[{"code": "a", "display": "A", "value": "high", "unit": "u", "taken_at": "2020-01-01"}]), "observations[0]"),
    ],
)
def test_malformed_documents_name_the_field(doc, field):
    with pytest.raises(PacketParseError) as err:
        parse_packet(doc)
    assert err.value.field.startswith(field)


def test_invalid_json_text():
    with pytest.raises(PacketParseError):
        parse_packet("{not json")


def test_salience_defaults_and_bounds():
    ev = {"kind": "diagnosis", "code": "x", "display": "X", "onset": "2020-01-01T00:00:00Z"}
    assert parse_packet(packet_doc(conditions=[ev])).conditions[0].salience == 0.5
    with pytest.raises(PacketValidationError):
        parse_packet(packet_doc(conditions=[{**ev, "salience": 1.2}]))


def test_round_trip(packet):
    assert parse_packet(serialize_packet(packet)) == packet


iso_day = st.dates(min_value=datetime(1990, 1, 1).date(), max_value=datetime(2024, 12, 31).date())


@given(
    st.sampled_from(GENDERS),
    st.sampled_from(RACE_ETHNICITIES),
    st.sampled_from(EDUCATION_LEVELS),
    st.sampled_from(SES_LEVELS),
    st.lists(st.tuples(iso_day, st.floats(0, 1), st.sampled_from(["diagnosis", "procedure", "life_event"])), max_size=5),
    st.lists(st.tuples(iso_day, st.floats(-1e6, 1e6), st.sampled_from(["a", "b", "c"])), max_size=6),
)
def test_round_trip_and_seed_count_properties(gender, race, edu, ses, events, obs):
    doc = packet_doc(
        gender=gender,
        race_ethnicity=race,
        education=edu,
        ses=ses,
        conditions=[{"kind": k, "code": f"c{i}", "display": f"Event {i}", "onset": f"{d}T10:00:00Z", "salience": s} for i, (d, s, k) in enumerate(events)],
        observations=[{"code": c, "display": c.upper(), "value": v, "unit": "u", "taken_at": f"{d}T08:00:00Z"} for d, v, c in obs],
    )
    p = parse_packet(doc)
    assert parse_packet(serialize_packet(p)) == p
    mems = seed_memories(p, HashEmbedder(dim=8), T0)
    assert len(mems) == len(events) + len({c for _, _, c in obs})
    assert all(m.created_at <= T0 for m in mems)
    assert len({m.memory_id for m in mems}) == len(mems)


class TestSeedMemories:
    def test_empty_packet(self):
        assert seed_memories(parse_packet(packet_doc()), HashEmbedder(), T0) == []

    def test_three_conditions_two_codes_give_five(self):
        doc = rich_packet_doc()
        doc["medications"] = []
        mems = seed_memories(parse_packet(doc), HashEmbedder(), T0)
        assert len(mems) == 5

    def test_record_fields(self, packet):
        mems = {m.memory_id: m for m in seed_memories(packet, HashEmbedder(), T0)}
        anxiety = next(m for m in mems.values() if "anxiety" in m.text.lower() and m.memory_id.startswith("cond"))
        assert anxiety.importance == 0.9
        assert anxiety.created_at == datetime(2021, 1, 10, 10, tzinfo=timezone.utc)
        assert anxiety.last_accessed == anxiety.created_at
        bp = mems["obs-8480-6"]
        assert bp.created_at == datetime(2024, 9, 5, 8, tzinfo=timezone.utc)
        assert "138" in bp.text and "131" in bp.text

    def test_emotions_follow_persona_affect(self, packet):
        mem = seed_memories(packet, HashEmbedder(), T0)[0]
        assert mem.emotions[EMOTIONS.index("anxiety")] == pytest.approx((5 + 10) / 20)
        assert mem.emotions[EMOTIONS.index("joy")] == 0.5

    def test_embedder_failure_is_propagated_with_text(self, packet):
        def broken(text):
            raise OSError("embedding service down")

        with pytest.raises(EmbeddingError) as err:
            seed_memories(packet, broken, T0)
        assert err.value.text


def test_persona_affect():
    v = persona_affect("Calm person.\naffect: joy=3, fear=-2")
    assert v.as_dict()["joy"] == 3 and v.as_dict()["fear"] == -2
    assert persona_affect("no annotations").raw == (0,) * 27
    with pytest.raises(PacketValidationError):
        persona_affect("affect: glee=3")
    with pytest.raises(PacketValidationError):
        persona_affect("affect: joy=11")


def test_validate_cohort():
    a = parse_packet(packet_doc())
    assert validate_cohort([a]) == []
    problems = validate_cohort([a, parse_packet(packet_doc(name="Other"))])
    assert [v.kind for v in problems] == ["duplicate_id"]


def test_load_cohort_reads_packets_and_manifest(tmp_path, packet):
    write_packet(packet, tmp_path)
    write_manifest([ManifestEntry(packet.patient_id, "anxiety", "diagnosis")], tmp_path / "manifest.csv")
    cohort = load_cohort(tmp_path)
    assert cohort.patient_ids() == ["p1"]
    assert cohort.manifest["p1"].encounter_objective == "diagnosis"
    assert cohort.packets["p1"] == packet


def test_load_cohort_error_names_file(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps(packet_doc(gender="x")))
    with pytest.raises(PacketValidationError, match="bad.json"):
        load_cohort(tmp_path)


def test_packets_are_immutable(packet):
    with pytest.raises(AttributeError):
        packet.name = "x"
    assert isinstance(np.asarray(packet.conditions), np.ndarray)
