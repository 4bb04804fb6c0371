"""
More than two concurrent utterances with explicit <ccN> tokens.

Channels are handed out lowest-first and returned when an utterance
ends, so three speakers can share three channels, and a fourth speaker
can reuse a released one.  The last part shows the corner case where a
speaker starts a new utterance right after finishing one.
"""

from tsot import AnnotatedTranscript, ConcurrencyExceeded, TimedToken, deserialize
from tsot import max_concurrency, round_trip_check, serialize_m


def utt(speaker, uid, words, times):
    return [TimedToken(w, x, speaker, uid, k == len(words) - 1)
            for k, (w, x) in enumerate(zip(words, times))]


#
t = AnnotatedTranscript("three", utt("A", "a", ["good", "morning"], [100, 700])
                        + utt("B", "b", ["hi", "there"], [200, 800])
                        + utt("C", "c", ["hey"], [300])
                        + utt("D", "d", ["yo", "all"], [400, 900]))
print("max concurrency:", max_concurrency(t).max_concurrent)

#
s = serialize_m(t, 3)
print(" ".join(s.rendered()))
for k, ch in enumerate(deserialize(s), start=1):
    print(f"  channel {k}: {' '.join(ch)}")

# two channels are not enough
try:
    serialize_m(t, 2)
except ConcurrencyExceeded as e:
    print("M=2:", e)

# a speaker re-entering right after finishing an utterance
edge = AnnotatedTranscript("edge", utt("B", "b", ["b0", "b1"], [100, 800])
                           + utt("A", "a1", ["a"], [200])
                           + utt("A", "a2", ["x", "y"], [300, 500])
                           + utt("C", "c", ["c0", "c1"], [400, 700]))
for literal in (False, True):
    rep = round_trip_check(edge, 3, "explicit", strict_literal=literal)
    print(f"strict_literal={literal}: {' '.join(rep.serialized.rendered())}")
    print("   ", "ok" if rep.ok else rep.divergence)
