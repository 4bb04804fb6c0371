import numpy as np
import pytest

from _gen import full_overlap_mixture, random_mixture, stable_sorted, utterance
from tsot.deserializer import deserialize, strip_cc
from tsot.serializer import (
    TOGGLE,
    ChannelSelect,
    ConcurrencyExceeded,
    Lexical,
    SerializedTranscript,
    dumps_serialized,
    parse_token,
    read_serialized,
    serialize,
    serialize_m,
    serialize_two,
)
from tsot.transcript import AnnotatedTranscript, TimedToken, TranscriptError, max_concurrency


def T(*tokens):
    return AnnotatedTranscript("s", tuple(tokens))


HELLO = T(
    TimedToken("hello", 600, "A", "a"),
    TimedToken("how", 900, "B", "b"),
    TimedToken("world", 1000, "A", "a", True),
    TimedToken("are", 1300, "B", "b", True),
)


class TestToggle:
    def test_single_speaker(self):
        s = serialize_two(T(*utterance("A", "u", [1, 2, 3], ["x", "y", "z"])))
        assert s.rendered() == ["x", "y", "z"]

    def test_two_speaker_example(self):
        s = serialize_two(HELLO)
        assert s.rendered() == ["hello", "<cc>", "how", "<cc>", "world", "<cc>", "are"]
        assert (s.mode, s.max_channels) == ("toggle", 2)

    def test_empty(self):
        assert serialize_two(T()).tokens == ()

    def test_ties_follow_input_order(self):
        t = T(*utterance("A", "a", [5, 5], ["he", "llo"]), *utterance("B", "b", [5], ["x"]))
        assert serialize_two(t).rendered() == ["he", "llo", "<cc>", "x"]

    def test_invalid_rejected(self):
        with pytest.raises(TranscriptError):
            serialize_two(T(TimedToken("<cc>", 1, "A", "u", True)))

    def test_toggle_iff_speaker_change(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            t = random_mixture(rng)
            s = serialize_two(t)
            sorted_toks = stable_sorted(t)
            k = 0
            for a, b in zip(sorted_toks, sorted_toks[1:]):
                assert s.tokens[k] == Lexical(a.token)
                k += 1
                if a.speaker != b.speaker:
                    assert s.tokens[k] is TOGGLE
                    k += 1
            assert len([x for x in s.tokens if isinstance(x, Lexical)]) == len(t)


class TestExplicit:
    def test_single_speaker(self):
        s = serialize_m(T(*utterance("A", "u", [1, 2], ["x", "y"])), 3)
        assert s.rendered() == ["x", "y"]

    def test_three_pairwise_overlapping_with_two_channels(self):
        t = T(*utterance("A", "a", [100, 400]), *utterance("B", "b", [200, 500]),
              *utterance("C", "c", [300, 600]))
        with pytest.raises(ConcurrencyExceeded) as exc:
            serialize_m(t, 2)
        # A on 1, B takes 2, C finds the pool empty at sorted token 2
        assert exc.value.token_index == 2
        assert exc.value.speakers == ("A", "B", "C")

    def test_golden_release_and_reuse(self):
        # A(600) B(900) A(1000, final) C(1100) B(1200, final) C(1300, final)
        # hand execution, lowest channel first:
        #   A on 1; B pops 2; A back to 1 and releases it; C pops 1;
        #   B back to 2 and releases; C back to 1.
        t = T(TimedToken("A1", 600, "A", "a"), TimedToken("B1", 900, "B", "b"),
              TimedToken("A2", 1000, "A", "a", True), TimedToken("C1", 1100, "C", "c"),
              TimedToken("B2", 1200, "B", "b", True), TimedToken("C2", 1300, "C", "c", True))
        s = serialize_m(t, 3)
        assert s.rendered() == ["A1", "<cc2>", "B1", "<cc1>", "A2", "<cc1>", "C1",
                                "<cc2>", "B2", "<cc1>", "C2"]
        assert deserialize(s) == (("A1", "A2", "C1", "C2"), ("B1", "B2"), ())

    def test_first_token_release(self):
        # one-token first utterance; without releasing it B and C cannot both fit
        t = T(*utterance("A", "a", [100]), *utterance("B", "b", [200, 400]),
              *utterance("C", "c", [300, 500]))
        s = serialize_m(t, 2)
        assert s.rendered() == ["a.0", "<cc1>", "b.0", "<cc2>", "c.0", "<cc1>", "b.1", "<cc2>", "c.1"]
        with pytest.raises(ConcurrencyExceeded):
            serialize_m(t, 2, strict_literal=True)

    def test_same_speaker_reregistered(self):
        # B holds 1; A says a one-word utterance on 2, then starts a new one
        # right away while C arrives.
        t = T(*utterance("B", "b", [100, 800]), *utterance("A", "a1", [200]),
              *utterance("A", "a2", [300, 500]), *utterance("C", "c", [400, 700]))
        fixed = serialize_m(t, 3)
        literal = serialize_m(t, 3, strict_literal=True)
        # fixed: A keeps 2 for a2, C pops 3
        assert fixed.rendered() == ["b.0", "<cc2>", "a1.0", "a2.0", "<cc3>", "c.0",
                                    "<cc2>", "a2.1", "<cc3>", "c.1", "<cc1>", "b.1"]
        # literal: A is unregistered, C pops 2, A's second word pops 3
        assert literal.rendered() == ["b.0", "<cc2>", "a1.0", "a2.0", "<cc2>", "c.0",
                                      "<cc3>", "a2.1", "<cc2>", "c.1", "<cc1>", "b.1"]
        assert deserialize(fixed) == (("b.0", "b.1"), ("a1.0", "a2.0", "a2.1"), ("c.0", "c.1"))
        assert deserialize(literal) == (("b.0", "b.1"), ("a1.0", "a2.0", "c.0", "c.1"), ("a2.1",))

    def test_literal_single_token_case(self):
        # with a one-word C, the literal run hands channel 2 to A again
        t = T(*utterance("B", "b", [100, 600]), *utterance("A", "a1", [200]),
              *utterance("A", "a2", [300, 500]), *utterance("C", "c", [400]))
        literal = serialize_m(t, 3, strict_literal=True)
        assert literal.rendered() == ["b.0", "<cc2>", "a1.0", "a2.0", "<cc2>", "c.0",
                                      "<cc2>", "a2.1", "<cc1>", "b.1"]

    def test_empty(self):
        assert serialize_m(T(), 4).tokens == ()

    def test_bad_m(self):
        with pytest.raises(ValueError):
            serialize_m(T(), 1)

    def test_succeeds_within_capacity(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            t = random_mixture(rng, max_utts=5, max_speakers=4)
            need = max(2, max_concurrency(t).max_concurrent)
            s = serialize_m(t, need)
            assert not any(isinstance(x, type(TOGGLE)) for x in s.tokens)
            assert all(1 <= x.channel <= need for x in s.tokens if isinstance(x, ChannelSelect))

    @pytest.mark.parametrize("m", [2, 3, 4])
    def test_fails_beyond_capacity(self, m):
        rng = np.random.default_rng(m)
        for _ in range(200):
            with pytest.raises(ConcurrencyExceeded):
                serialize_m(full_overlap_mixture(rng, m + 1), m)


def test_structural_invariants():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        t = random_mixture(rng)
        for s in (serialize_two(t), serialize_m(t, 4)):
            toks = s.tokens
            if toks:
                assert isinstance(toks[0], Lexical)
            for a, b in zip(toks, toks[1:]):
                assert isinstance(a, Lexical) or isinstance(b, Lexical)
            assert strip_cc(s) == [tok.token for tok in stable_sorted(t)]


def test_dispatch():
    assert serialize(HELLO, "toggle").mode == "toggle"
    assert serialize(HELLO, "explicit", 3).mode == "explicit"
    with pytest.raises(ValueError):
        serialize(HELLO, "toggle", 3)


def test_parse_render():
    for text in ["<cc>", "<cc1>", "<cc10>", "word", "<ccx>"]:
        assert str(parse_token(text)) == text
    assert parse_token("<cc3>") == ChannelSelect(3)


def test_jsonl_bit_exact():
    s = serialize_two(HELLO)
    line = dumps_serialized(s)
    assert line == ('{"sample_id": "s", "mode": "toggle", "max_channels": 2, '
                    '"tokens": ["hello", "<cc>", "how", "<cc>", "world", "<cc>", "are"]}')
    assert list(read_serialized([line])) == [s]
    assert SerializedTranscript.from_json(serialize_m(HELLO, 3).to_json()) == serialize_m(HELLO, 3)
