"""
Simulate training mixtures and score a deserialized output.

A small pool of synthetic single-speaker utterances is mixed with the
1-or-2 speaker law (p = 50), serialized, deserialized and scored against
its own references (WER 0).  Then one channel is corrupted to show the
permutation WER at work.
"""

import numpy as np

from tsot import MixtureConfig, deserialize, generate_dataset, permutation_wer
from tsot import score_deserialized, serialize_two
from tsot.transcript import AnnotatedTranscript, TimedToken

#
rng = np.random.default_rng(0)
pool = []
for k in range(20):
    n = int(rng.integers(2, 6))
    times = np.cumsum(rng.integers(150, 500, size=n))
    pool.append(AnnotatedTranscript(f"src{k}", [
        TimedToken(f"w{k}_{j}", int(x), f"orig{k}", f"u{k}", j == n - 1) for j, x in enumerate(times)
    ]))

#
cfg = MixtureConfig(single_speaker_prob_p=50, speed_ratios=(0.9, 1.0, 1.1), rng_seed=11)
samples = list(generate_dataset(pool, cfg, 5))
for s in samples:
    print(s.sample_id, s.provenance["delays_ms"], " ".join(serialize_two(s.transcript).rendered()))

#
s = next(x for x in samples if len(x.references) == 2)
channels = deserialize(serialize_two(s.transcript))
print("own references:", score_deserialized(channels, s.references).wer)

# drop a word from channel 2 and swap channel order: still one deletion
broken = [list(channels[1][1:]), list(channels[0])]
rep = permutation_wer(list(s.references.values()), broken)
print("broken:", rep.counts, "assignment", rep.assignment, f"WER {rep.wer:.3f}")
