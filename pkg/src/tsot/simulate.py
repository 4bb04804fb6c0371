"""On-the-fly multi-talker mixtures at the transcript level.

Mixtures are built from a pool of single-speaker, single-utterance
transcripts: draw a speaker count, draw that many utterances without
replacement, speed-perturb each one, delay every utterance after the
first by a uniform amount over the current mixture length, and relabel
speakers ``spk1..spkS``.  No audio is touched.

Randomness
----------
Sample ``i`` of a dataset gets its own ``numpy.random.Generator`` backed
by PCG64, seeded with ``splitmix64(seed + (i + 1) * 0x9E3779B97F4A7C15)``
(all arithmetic mod 2**64).  Samples are therefore independent of
generation order and can be produced in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

from .transcript import AnnotatedTranscript, TimedToken, check_transcript, max_concurrency

SpeakerCountLaw = Literal["two_way_p", "uniform_1_to_k"]

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# delay re-draws before a fresh set of utterances is drawn
DELAY_RETRIES = 100
# utterance re-draws before giving up on the cap
UTTERANCE_RETRIES = 100


class InsufficientPool(ValueError):
    pass


class CapUnsatisfiable(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    x = (x + GOLDEN_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def sample_seed(seed: int, index: int) -> int:
    return splitmix64((seed + (index + 1) * GOLDEN_GAMMA) & MASK64)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(sample_seed(seed, index)))


@dataclass(frozen=True)
class MixtureConfig:
    single_speaker_prob_p: float = 50.0
    max_speakers: int = 2
    speaker_count_law: SpeakerCountLaw = "two_way_p"
    speed_ratios: tuple[Fraction, ...] = (Fraction(1),)
    max_concurrency_cap: Optional[int] = None
    rng_seed: int = 0

    def __post_init__(self):
        ratios = tuple(Fraction(str(r)) if isinstance(r, float) else Fraction(r)
                       for r in self.speed_ratios)
        object.__setattr__(self, "speed_ratios", ratios)
        if not 0 <= self.single_speaker_prob_p <= 100:
            raise ValueError("single_speaker_prob_p must lie in [0, 100]")
        if not ratios or any(r <= 0 for r in ratios):
            raise ValueError("speed_ratios must be non-empty and positive")
        if self.max_speakers < 1:
            raise ValueError("max_speakers must be >= 1")
        if self.speaker_count_law == "two_way_p" and self.max_speakers != 2:
            raise ValueError("two_way_p law mixes 1 or 2 speakers; set max_speakers=2")
        if self.speaker_count_law not in ("two_way_p", "uniform_1_to_k"):
            raise ValueError(f"unknown speaker count law {self.speaker_count_law!r}")
        if self.max_concurrency_cap is not None and self.max_concurrency_cap < 1:
            raise ValueError("max_concurrency_cap must be >= 1")
        if not 0 <= self.rng_seed <= MASK64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")

    def to_json(self) -> dict:
        return {
            "single_speaker_prob_p": self.single_speaker_prob_p,
            "max_speakers": self.max_speakers,
            "speaker_count_law": self.speaker_count_law,
            "speed_ratios": [str(r) for r in self.speed_ratios],
            "max_concurrency_cap": self.max_concurrency_cap,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class MixtureSample:
    sample_id: str
    transcript: AnnotatedTranscript
    references: dict[str, list[str]]
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "transcript": self.transcript.to_json(),
            "references": self.references,
            "provenance": self.provenance,
        }


def speed_perturb(t: AnnotatedTranscript, ratio) -> AnnotatedTranscript:
    """Play ``t`` ``ratio`` times faster: every time becomes ``round(time / ratio)``.

    Rounding is half-up and exact (rational arithmetic), so ratio 0.9 maps
    900 ms to 1000 ms without float drift.
    """
    r = Fraction(str(ratio)) if isinstance(ratio, float) else Fraction(ratio)
    if r <= 0:
        raise ValueError(f"speed ratio must be positive, got {ratio}")

    def scale(ms: int) -> int:
        q = Fraction(ms) / r
        return int(q + Fraction(1, 2)) if q >= 0 else -int(-q + Fraction(1, 2))

    return replace(t, tokens=tuple(replace(tok, emission_ms=scale(tok.emission_ms)) for tok in t.tokens))


def utterance_length(t: AnnotatedTranscript) -> int:
    """Last emission time; start times are not known."""
    return max((tok.emission_ms for tok in t.tokens), default=0)


def draw_speaker_count(cfg: MixtureConfig, rng: np.random.Generator) -> int:
    if cfg.speaker_count_law == "two_way_p":
        return 1 if rng.random() * 100 < cfg.single_speaker_prob_p else 2
    return int(rng.integers(1, cfg.max_speakers, endpoint=True))


def _relabel(t: AnnotatedTranscript, k: int) -> AnnotatedTranscript:
    spk = f"spk{k}"
    return replace(
        t,
        tokens=tuple(
            replace(tok, speaker=spk, utterance_id=f"{spk}-{tok.utterance_id}") for tok in t.tokens
        ),
    )


def _check_pool_entry(u: AnnotatedTranscript) -> None:
    check_transcript(u)
    if len({tok.speaker for tok in u.tokens}) > 1 or len(u.utterances()) > 1:
        raise ValueError(f"pool entry {u.sample_id!r} is not a single-speaker utterance")
    if not u.tokens:
        raise ValueError(f"pool entry {u.sample_id!r} is empty")


def sample_mixture(
    pool: Sequence[AnnotatedTranscript],
    cfg: MixtureConfig,
    rng: np.random.Generator,
    sample_id: str = "",
) -> MixtureSample:
    """Draw one mixture from ``pool``.

    With ``cfg.max_concurrency_cap`` set, delays are re-drawn until the
    mixture respects the cap; after ``DELAY_RETRIES`` failures the
    utterances themselves are re-drawn.
    """
    if not pool:
        raise InsufficientPool("empty pool")
    n_spk = draw_speaker_count(cfg, rng)
    if n_spk > len(pool):
        raise InsufficientPool(f"need {n_spk} utterances, pool has {len(pool)}")

    for _ in range(UTTERANCE_RETRIES):
        picks = [int(i) for i in rng.choice(len(pool), size=n_spk, replace=False)]
        ratios = [cfg.speed_ratios[int(rng.integers(len(cfg.speed_ratios)))] for _ in picks]
        sources = [_relabel(speed_perturb(pool[p], r), k + 1)
                   for k, (p, r) in enumerate(zip(picks, ratios))]
        for _ in range(DELAY_RETRIES):
            delays = [0]
            tokens: list[TimedToken] = list(sources[0].tokens)
            length = utterance_length(sources[0])
            for src in sources[1:]:
                d = int(round(rng.uniform(0.0, float(length))))
                delays.append(d)
                shifted = src.shifted(d)
                tokens.extend(shifted.tokens)
                length = max(length, utterance_length(shifted))
            mix = AnnotatedTranscript(sample_id, tuple(tokens))
            if cfg.max_concurrency_cap is None or n_spk <= cfg.max_concurrency_cap:
                break
            if max_concurrency(mix).max_concurrent <= cfg.max_concurrency_cap:
                break
        else:
            continue
        break
    else:
        raise CapUnsatisfiable(
            f"no mixture within concurrency cap {cfg.max_concurrency_cap} "
            f"after {UTTERANCE_RETRIES} utterance draws"
        )

    provenance = {
        "sources": [pool[p].sample_id for p in picks],
        "source_utterances": [pool[p].tokens[0].utterance_id for p in picks],
        "delays_ms": delays,
        "speed_ratios": [str(r) for r in ratios],
    }
    return MixtureSample(sample_id, mix, mix.speaker_words(), provenance)


def generate_dataset(
    pool: Sequence[AnnotatedTranscript],
    cfg: MixtureConfig,
    n: int,
    *,
    id_prefix: str = "mix",
) -> Iterator[MixtureSample]:
    for entry in pool:
        _check_pool_entry(entry)
    for i in range(n):
        yield sample_mixture(pool, cfg, sample_rng(cfg.rng_seed, i), f"{id_prefix}{i:06d}")


def dumps_sample(s: MixtureSample) -> str:
    return json.dumps(s.to_json(), ensure_ascii=False)
