import numpy as np
import pytest
from helpers import emotion_lines, neutral_emotion_reply
from hypothesis import given
from hypothesis import strategies as st

import oracles
from clinbench.affect import (
    EMOTIONS,
    N_EMOTIONS,
    AffectError,
    ClassificationError,
    CognitiveEffort,
    EmotionParseError,
    EmotionState,
    EmotionUpdateError,
    EmotionVector,
    Reflection,
    classify_cognitive_effort,
    format_emotion_output,
    normalize_emotion,
    parse_emotion_output,
    tanimoto,
    tanimoto_with_flag,
    update_emotion_state,
)
from clinbench.backends import BackendTransportError, ScriptedLM, SequenceLM

unit_vectors = st.lists(st.floats(0, 1, allow_nan=False), min_size=N_EMOTIONS, max_size=N_EMOTIONS)
raw_vectors = st.lists(st.integers(-10, 10), min_size=N_EMOTIONS, max_size=N_EMOTIONS)


def test_emotion_list_is_fixed():
    assert N_EMOTIONS == 27
    assert EMOTIONS[0] == "admiration" and EMOTIONS[-1] == "surprise"
    assert len(set(EMOTIONS)) == 27


def test_tanimoto_examples():
    joy = EMOTIONS.index("joy")
    a, b = np.zeros(27), np.zeros(27)
    a[joy], b[joy] = 0.5, 1.0
    assert tanimoto(a, b) == pytest.approx(0.5 / (0.25 + 1.0 - 0.5))
    assert tanimoto(a, b) == pytest.approx(0.6667, abs=1e-4)
    c = np.zeros(27)
    c[0] = 1.0
    assert tanimoto(a, c) == 0.0
    assert tanimoto(b, b) == 1.0


def test_tanimoto_all_zero_is_flagged():
    value, flagged = tanimoto_with_flag(np.zeros(27), np.zeros(27))
    assert value == 1.0 and flagged
    assert tanimoto_with_flag(np.ones(27), np.ones(27)) == (1.0, False)


def test_tanimoto_shape_mismatch():
    with pytest.raises(AffectError):
        tanimoto(np.ones(27), np.ones(26))


@given(unit_vectors, unit_vectors)
def test_tanimoto_laws(a, b):
    t = tanimoto(a, b)
    assert 0.0 <= t <= 1.0 + 1e-12
    assert t == pytest.approx(tanimoto(b, a), abs=1e-12)
    assert t == pytest.approx(oracles.tanimoto(a, b), abs=1e-9)
    if any(a):
        assert tanimoto(a, a) == pytest.approx(1.0, abs=1e-12)


def test_normalize_examples():
    assert np.all(normalize_emotion([0] * 27) == 0.5)
    raw = [0] * 27
    raw[EMOTIONS.index("joy")] = 10
    raw[EMOTIONS.index("anger")] = -10
    unit = normalize_emotion(raw)
    assert unit[EMOTIONS.index("joy")] == 1.0
    assert unit[EMOTIONS.index("anger")] == 0.0


def test_normalize_rejects_out_of_range_naming_emotion():
    raw = [0] * 27
    raw[EMOTIONS.index("fear")] = 11
    with pytest.raises(AffectError, match="fear"):
        normalize_emotion(raw)
    with pytest.raises(AffectError):
        normalize_emotion([0] * 26)


@given(raw_vectors)
def test_normalize_matches_oracle_and_is_monotone(raw):
    unit = normalize_emotion(raw)
    assert unit.tolist() == pytest.approx(oracles.unit_emotion(raw), abs=1e-15)
    bumped = [min(10, x + 1) for x in raw]
    moved = [i for i in range(27) if bumped[i] != raw[i]]
    u2 = normalize_emotion(bumped)
    assert all(u2[i] > unit[i] for i in moved)


def test_vector_helpers():
    v = EmotionVector.from_mapping({"joy": 7, "fear": -3}, default=0)
    assert v.as_dict()["joy"] == 7
    assert v.top(1) == [("joy", 7)]
    with pytest.raises(AffectError):
        EmotionVector.from_mapping({"joy": 1})
    with pytest.raises(AffectError):
        EmotionVector.from_mapping({"glee": 1}, default=0)
    with pytest.raises(AffectError):
        EmotionVector((True,) + (0,) * 26)


def test_state_and_reflection_ranges():
    with pytest.raises(AffectError):
        EmotionState(EmotionVector.neutral(), valence=11)
    with pytest.raises(AffectError):
        EmotionState(EmotionVector.neutral(), arousal=-1)
    with pytest.raises(AffectError):
        Reflection("x", 0)
    with pytest.raises(AffectError):
        Reflection("  ", 5)
    assert Reflection("x", 7).importance == pytest.approx(0.7)


def test_parse_round_trip():
    state = EmotionState(EmotionVector(tuple((i % 21) - 10 for i in range(27))), valence=-4, arousal=9)
    refl = Reflection("Jane felt heard.", 6)
    parsed_state, parsed_refl = parse_emotion_output(format_emotion_output(state, refl))
    assert parsed_state == state and parsed_refl == refl


def test_parse_tolerates_noise_lines_and_unknown_keys():
    text = "Here you go:\n" + "\n".join(emotion_lines()) + "\nsummary: calm overall\nmood: fine"
    state, refl = parse_emotion_output(text, turn=4)
    assert state.updated_at_turn == 4 and refl.poignancy == 1


@pytest.mark.parametrize(
    "overrides, key",
    [
        ({"valence": 12}, "valence"),
        ({"poignancy": 0}, "poignancy"),
        ({"arousal": -1}, "arousal"),
        ({"joy": "3.5"}, "joy"),
        ({"awe": "high"}, "awe"),
    ],
)
def test_parse_rejects_bad_values(overrides, key):
    with pytest.raises(EmotionParseError) as err:
        parse_emotion_output("\n".join(emotion_lines(**overrides)))
    assert err.value.key == key


def test_parse_rejects_missing_emotion_and_duplicates():
    lines = [ln for ln in emotion_lines() if not ln.startswith("fear:")]
    with pytest.raises(EmotionParseError, match="fear"):
        parse_emotion_output("\n".join(lines))
    with pytest.raises(EmotionParseError, match="duplicate"):
        parse_emotion_output("\n".join(emotion_lines() + ["joy: 2"]))
    no_reflection = [ln for ln in emotion_lines() if not ln.startswith("reflection")]
    with pytest.raises(EmotionParseError, match="reflection"):
        parse_emotion_output("\n".join(no_reflection))


def _update(backend):
    return update_emotion_state("Jane", "Doctor AI", "clinic", "", "How are you?", CognitiveEffort.FOCUSED, "", backend, turn=1)


def test_update_neutral_fixture():
    state, refl = _update(ScriptedLM(neutral_emotion_reply(poignancy=1)))
    assert state == EmotionState.neutral(turn=1)
    assert refl.importance == pytest.approx(0.1)


def test_update_prompt_carries_inputs():
    lm = SequenceLM([neutral_emotion_reply()])
    update_emotion_state("PERSONA-X", "Doctor AI", "CTX-Y", "Doctor: hi", "MSG-Z", CognitiveEffort.OPEN, "MEM-W", lm)
    prompt = lm.prompts[0]
    for token in ("PERSONA-X", "CTX-Y", "MSG-Z", "OPEN", "MEM-W", "sexual desire: <integer>"):
        assert token in prompt


def test_update_missing_key_names_it():
    reply = "\n".join(ln for ln in emotion_lines() if not ln.startswith("fear:"))
    with pytest.raises(EmotionUpdateError) as err:
        _update(ScriptedLM(reply))
    assert err.value.key == "fear"


def test_update_validation_failures_are_not_retried():
    lm = SequenceLM(["\n".join(emotion_lines(valence=12)), neutral_emotion_reply()])
    with pytest.raises(EmotionUpdateError):
        _update(lm)
    assert len(lm.prompts) == 1


def test_update_retries_transport_twice():
    lm = SequenceLM([BackendTransportError("x"), BackendTransportError("y"), neutral_emotion_reply()])
    state, _ = _update(lm)
    assert len(lm.prompts) == 3 and state.valence == 0
    lm = SequenceLM([BackendTransportError("x")] * 3)
    with pytest.raises(BackendTransportError):
        _update(lm)


def test_classify_effort():
    assert classify_cognitive_effort("What is your name?", "ctx", ScriptedLM("FOCUSED")) is CognitiveEffort.FOCUSED
    assert classify_cognitive_effort("  ", "ctx", ScriptedLM("FOCUSED")) is CognitiveEffort.AMBIGUOUS
    assert classify_cognitive_effort("hm", "ctx", ScriptedLM("ambigous.")) is CognitiveEffort.AMBIGUOUS
    with pytest.raises(ClassificationError):
        classify_cognitive_effort("hm", "ctx", ScriptedLM("MEDIUM"))
