"""Serialize a multi-talker transcript into one token stream.

Tokens of all speakers are merged in ascending order of emission time
and channel-change tokens are inserted so that a reader can put each
token back on a virtual output channel.  Two flavours exist:

* ``toggle`` -- a single ``<cc>`` token flips between two channels and
  is inserted wherever the speaker changes.
* ``explicit`` -- ``<cc1>`` .. ``<ccM>`` select a channel directly.
  Channels are handed to speakers from a pool and given back when an
  utterance ends, so any number of speakers fits as long as at most
  ``M`` utterances are open at once.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal, Mapping, Sequence, Union

from .transcript import AnnotatedTranscript, check_transcript

Mode = Literal["toggle", "explicit"]

TOGGLE_TEXT = "<cc>"
_SELECT = re.compile(r"<cc(\d+)>")


@dataclass(frozen=True, slots=True)
class Lexical:
    text: str

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True, slots=True)
class ChannelToggle:
    def __str__(self) -> str:
        return TOGGLE_TEXT


@dataclass(frozen=True, slots=True)
class ChannelSelect:
    channel: int

    def __str__(self) -> str:
        return f"<cc{self.channel}>"


SerialToken = Union[Lexical, ChannelToggle, ChannelSelect]

TOGGLE = ChannelToggle()


def parse_token(text: str) -> SerialToken:
    """Inverse of ``str(token)``: ``"<cc>"``, ``"<ccN>"`` or lexical text."""
    if text == TOGGLE_TEXT:
        return TOGGLE
    m = _SELECT.fullmatch(text)
    if m:
        return ChannelSelect(int(m.group(1)))
    return Lexical(text)


def is_channel_token(tok: SerialToken) -> bool:
    return not isinstance(tok, Lexical)


class ConcurrencyExceeded(RuntimeError):
    """More utterances are open than there are channels."""

    def __init__(self, token_index: int, speakers: Sequence[str], max_channels: int):
        self.token_index = token_index
        self.speakers = tuple(speakers)
        self.max_channels = max_channels
        super().__init__(
            f"no free channel at sorted token {token_index}: "
            f"{len(self.speakers)} speakers open with M={max_channels} "
            f"({', '.join(self.speakers)})"
        )


@dataclass(frozen=True)
class SerializedTranscript:
    sample_id: str
    max_channels: int
    mode: Mode
    tokens: tuple[SerialToken, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def rendered(self) -> list[str]:
        return [str(t) for t in self.tokens]

    def lexical(self) -> list[str]:
        return [t.text for t in self.tokens if isinstance(t, Lexical)]

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "mode": self.mode,
            "max_channels": self.max_channels,
            "tokens": self.rendered(),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SerializedTranscript":
        mode = obj["mode"]
        if mode not in ("toggle", "explicit"):
            raise ValueError(f"unknown mode {mode!r}")
        return cls(
            obj["sample_id"],
            int(obj["max_channels"]),
            mode,
            tuple(parse_token(s) for s in obj["tokens"]),
        )


def serialize_two(t: AnnotatedTranscript) -> SerializedTranscript:
    """Toggle-mode serialization for up to two concurrent utterances.

    Tokens are stably sorted by emission time and a ``<cc>`` goes between
    every pair of neighbours spoken by different speakers.
    """
    check_transcript(t)
    out: list[SerialToken] = []
    prev = None
    for tok in t.sorted_tokens():
        if prev is not None and tok.speaker != prev:
            out.append(TOGGLE)
        out.append(Lexical(tok.token))
        prev = tok.speaker
    return SerializedTranscript(t.sample_id, 2, "toggle", tuple(out))


def serialize_m(
    t: AnnotatedTranscript, m: int, *, strict_literal: bool = False
) -> SerializedTranscript:
    """Explicit-mode serialization for up to ``m`` concurrent utterances.

    A speaker-to-channel map tracks which channel each open speaker
    writes to; unused channels sit in a pool and the lowest-numbered one
    is handed out first.  When a speaker's utterance-final token has been
    written, its channel goes back to the pool.

    Two corner cases differ from the bare algorithm unless
    ``strict_literal`` is set:

    * the release step also runs for the very first token, so a one-token
      first utterance does not pin channel 1 forever;
    * a speaker who starts a new utterance right after finishing one is
      re-registered on the channel it just released.  Without this the
      speaker's tokens keep flowing onto a channel the pool may hand to
      someone else, and the round trip breaks.

    Raises:
        ConcurrencyExceeded: a new speaker needs a channel and the pool
            is empty.
    """
    if m < 2:
        raise ValueError(f"need at least 2 channels, got {m}")
    check_transcript(t)
    toks = t.sorted_tokens()
    out: list[SerialToken] = []
    if not toks:
        return SerializedTranscript(t.sample_id, m, "explicit", ())

    first = toks[0]
    owner: dict[str, int] = {first.speaker: 1}
    free: set[int] = set(range(2, m + 1))
    out.append(Lexical(first.token))
    just_released: int | None = None
    if first.utterance_final and not strict_literal:
        free.add(owner.pop(first.speaker))
        just_released = 1

    for i in range(1, len(toks)):
        tok, prev = toks[i], toks[i - 1]
        if tok.speaker != prev.speaker:
            if tok.speaker in owner:
                ch = owner[tok.speaker]
            else:
                if not free:
                    raise ConcurrencyExceeded(i, [*owner, tok.speaker], m)
                ch = min(free)
                free.remove(ch)
                owner[tok.speaker] = ch
            out.append(ChannelSelect(ch))
        elif tok.speaker not in owner and just_released is not None and not strict_literal:
            # same speaker, new utterance: stay on the channel we are on
            free.discard(just_released)
            owner[tok.speaker] = just_released
        out.append(Lexical(tok.token))

        just_released = None
        if tok.utterance_final and tok.speaker in owner:
            just_released = owner.pop(tok.speaker)
            free.add(just_released)
    return SerializedTranscript(t.sample_id, m, "explicit", tuple(out))


def serialize(
    t: AnnotatedTranscript,
    mode: Mode = "toggle",
    m: int = 2,
    *,
    strict_literal: bool = False,
) -> SerializedTranscript:
    if mode == "toggle":
        if m != 2:
            raise ValueError("toggle mode supports exactly 2 channels")
        return serialize_two(t)
    if mode == "explicit":
        return serialize_m(t, m, strict_literal=strict_literal)
    raise ValueError(f"unknown mode {mode!r}")


def dumps_serialized(s: SerializedTranscript) -> str:
    return json.dumps(s.to_json(), ensure_ascii=False)


def read_serialized(lines: Iterable[str]) -> Iterator[SerializedTranscript]:
    for line in lines:
        if line.strip():
            yield SerializedTranscript.from_json(json.loads(line))
