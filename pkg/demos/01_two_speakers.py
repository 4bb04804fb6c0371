"""
Two overlapping speakers, one token stream.

Builds the transcript from the toggle-mode walkthrough, serializes it
with <cc> tokens and reads it back into two virtual channels.
"""

from tsot import AnnotatedTranscript, TimedToken, deserialize, serialize_two, strip_cc

#
t = AnnotatedTranscript("demo", [
    TimedToken("hello", 600, "A", "a"),
    TimedToken("how", 900, "B", "b"),
    TimedToken("world", 1000, "A", "a", True),
    TimedToken("are", 1300, "B", "b", True),
    TimedToken("you", 1500, "B", "b2", True),
])

#
s = serialize_two(t)
print("serialized :", " ".join(s.rendered()))

#
for k, channel in enumerate(deserialize(s), start=1):
    print(f"channel {k}  :", " ".join(channel))

# ignoring <cc> gives a single-talker reading of the same stream
print("single     :", " ".join(strip_cc(s)))
