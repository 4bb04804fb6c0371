from fractions import Fraction

import numpy as np
import pytest

from _gen import brute_concurrency, simple_pool, utterance
from tsot.simulate import (
    InsufficientPool,
    MixtureConfig,
    dumps_sample,
    generate_dataset,
    sample_mixture,
    sample_rng,
    sample_seed,
    speed_perturb,
    splitmix64,
)
from tsot.transcript import AnnotatedTranscript, validate_transcript


@pytest.fixture(scope="module")
def pool():
    return simple_pool(np.random.default_rng(123))


class TestSpeedPerturb:
    t = AnnotatedTranscript("s", tuple(utterance("A", "u", [900, 1000])))

    def test_identity(self):
        assert speed_perturb(self.t, 1.0) == self.t

    def test_double(self):
        assert speed_perturb(self.t, 2.0).tokens[1].emission_ms == 500

    def test_slow(self):
        assert speed_perturb(self.t, 0.9).tokens[0].emission_ms == 1000
        assert speed_perturb(self.t, Fraction(9, 10)).tokens[1].emission_ms == 1111

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            speed_perturb(self.t, 0)


def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert sample_seed(0, 0) == splitmix64(0x9E3779B97F4A7C15)
    assert sample_seed(5, 1) != sample_seed(5, 2)


class TestSampleMixture:
    def test_p100_is_single_speaker(self, pool):
        cfg = MixtureConfig(single_speaker_prob_p=100)
        for s in generate_dataset(pool, cfg, 300):
            assert len(s.references) == 1
            assert s.provenance["delays_ms"] == [0]

    def test_references_are_speaker_projection(self, pool):
        cfg = MixtureConfig(max_speakers=4, speaker_count_law="uniform_1_to_k",
                            speed_ratios=(0.9, 1.0, 1.1), rng_seed=3)
        for s in generate_dataset(pool, cfg, 300):
            assert validate_transcript(s.transcript).ok
            proj = {}
            for tok in s.transcript.tokens:
                proj.setdefault(tok.speaker, []).append(tok.token)
            assert s.references == proj
            assert set(s.references) == {f"spk{k}" for k in range(1, len(s.references) + 1)}

    def test_source_order_and_gaps_preserved(self, pool):
        cfg = MixtureConfig(single_speaker_prob_p=0, rng_seed=9)
        by_id = {p.sample_id: p for p in pool}
        for s in generate_dataset(pool, cfg, 200):
            for k, (src, d) in enumerate(zip(s.provenance["sources"], s.provenance["delays_ms"])):
                spk = f"spk{k + 1}"
                mixed = [t.emission_ms for t in s.transcript.tokens if t.speaker == spk]
                orig = [t.emission_ms for t in by_id[src].tokens]
                assert mixed == [x + d for x in orig]

    def test_delay_bounded_by_mixture_length(self, pool):
        cfg = MixtureConfig(max_speakers=5, speaker_count_law="uniform_1_to_k", rng_seed=1)
        by_id = {p.sample_id: p for p in pool}
        for s in generate_dataset(pool, cfg, 300):
            length = 0
            for src, d in zip(s.provenance["sources"], s.provenance["delays_ms"]):
                assert 0 <= d <= length
                length = max(length, d + by_id[src].tokens[-1].emission_ms)

    def test_cap(self, pool):
        cfg = MixtureConfig(max_speakers=5, speaker_count_law="uniform_1_to_k",
                            max_concurrency_cap=2, rng_seed=4)
        for s in generate_dataset(pool, cfg, 500):
            assert brute_concurrency(s.transcript) <= 2

    def test_insufficient_pool(self, pool):
        cfg = MixtureConfig(single_speaker_prob_p=0)
        with pytest.raises(InsufficientPool):
            sample_mixture(pool[:1], cfg, np.random.default_rng(0))
        with pytest.raises(InsufficientPool):
            sample_mixture([], cfg, np.random.default_rng(0))

    def test_rejects_multi_utterance_pool(self, pool):
        bad = AnnotatedTranscript("x", tuple(utterance("A", "u1", [1]) + utterance("A", "u2", [5])))
        with pytest.raises(ValueError):
            list(generate_dataset([bad, *pool], MixtureConfig(), 1))


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(single_speaker_prob_p=101),
        dict(speed_ratios=(0,)),
        dict(speed_ratios=()),
        dict(max_speakers=3),
        dict(speaker_count_law="poisson"),
        dict(rng_seed=-1),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            MixtureConfig(**kw)

    def test_float_ratios_become_exact(self):
        assert MixtureConfig(speed_ratios=(0.9,)).speed_ratios == (Fraction(9, 10),)


class TestDeterminism:
    def test_same_seed_same_output(self, pool):
        cfg = MixtureConfig(max_speakers=3, speaker_count_law="uniform_1_to_k",
                            speed_ratios=(0.9, 1.0, 1.1), rng_seed=77)
        a = [dumps_sample(s) for s in generate_dataset(pool, cfg, 100)]
        b = [dumps_sample(s) for s in generate_dataset(pool, cfg, 100)]
        assert a == b

    def test_zero_samples(self, pool):
        assert list(generate_dataset(pool, MixtureConfig(), 0)) == []

    def test_order_independent(self, pool):
        cfg = MixtureConfig(rng_seed=5)
        full = list(generate_dataset(pool, cfg, 20))
        alone = sample_mixture(pool, cfg, sample_rng(5, 13), "mix000013")
        assert full[13] == alone

    def test_seed_matters(self, pool):
        a = [dumps_sample(s) for s in generate_dataset(pool, MixtureConfig(rng_seed=1), 20)]
        b = [dumps_sample(s) for s in generate_dataset(pool, MixtureConfig(rng_seed=2), 20)]
        assert a != b


def test_two_way_law_frequency(pool):
    cfg = MixtureConfig(single_speaker_prob_p=30, rng_seed=11)
    n = 5000
    singles = sum(len(s.references) == 1 for s in generate_dataset(pool, cfg, n))
    # 5 standard deviations of a binomial(5000, 0.3) proportion
    assert abs(singles / n - 0.3) < 5 * (0.3 * 0.7 / n) ** 0.5
