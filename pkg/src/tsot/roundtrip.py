"""Serialize, deserialize and check that every utterance survived."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .deserializer import channel_of_tokens
from .serializer import Mode, SerializedTranscript, serialize
from .transcript import AnnotatedTranscript, check_transcript


@dataclass(frozen=True)
class RoundTripReport:
    sample_id: str
    serialized: SerializedTranscript
    # channel of every input token, indexed like ``t.tokens``
    token_channels: tuple[int, ...]
    divergence: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.divergence is None


def round_trip_check(
    t: AnnotatedTranscript,
    m: int = 2,
    mode: Mode | None = None,
    *,
    strict_literal: bool = False,
) -> RoundTripReport:
    """Check that deserialization gives every utterance its own channel.

    Three things must hold: all tokens of an utterance land on one
    channel, they appear there in spoken order, and two utterances that
    are open at the same time never share a channel.  The first problem
    found is reported in ``divergence``.

    ``mode`` defaults to toggle for ``m == 2`` and explicit otherwise.
    :class:`~tsot.serializer.ConcurrencyExceeded` propagates.
    """
    check_transcript(t)
    if mode is None:
        mode = "toggle" if m == 2 else "explicit"
    s = serialize(t, mode, m, strict_literal=strict_literal)
    order = t.sorted_order()
    stream_channels = channel_of_tokens(s)
    chan = [0] * len(t.tokens)
    for pos, i in enumerate(order):
        chan[i] = stream_channels[pos]
    chans = tuple(chan)

    def report(msg: Optional[str]) -> RoundTripReport:
        return RoundTripReport(t.sample_id, s, chans, msg)

    utts = t.utterances()
    utt_channel: dict[str, int] = {}
    for utt, idx in utts.items():
        seen = {chan[i] for i in idx}
        if len(seen) > 1:
            return report(f"utterance {utt!r} split over channels {sorted(seen)}")
        utt_channel[utt] = chan[idx[0]]

    # spoken order inside each utterance must survive the stable sort
    rank = {i: pos for pos, i in enumerate(order)}
    for utt, idx in utts.items():
        positions = [rank[i] for i in idx]
        if positions != sorted(positions):
            return report(f"utterance {utt!r} tokens reordered")

    spans = {}
    for utt, idx in utts.items():
        positions = [rank[i] for i in idx]
        spans[utt] = (min(positions), max(positions))
    by_channel: dict[int, list[tuple[int, int, str]]] = {}
    for utt, (a, b) in spans.items():
        by_channel.setdefault(utt_channel[utt], []).append((a, b, utt))
    for ch, items in sorted(by_channel.items()):
        items.sort()
        for (_, end, u1), (start, _, u2) in zip(items, items[1:]):
            if start <= end:
                return report(f"utterances {u1!r} and {u2!r} overlap on channel {ch}")
    return report(None)
