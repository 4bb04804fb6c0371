"""Streaming deserialization into virtual output channels.

The decoder reads a serialized stream one token at a time.  Lexical
tokens go to the current channel and are emitted immediately; channel
tokens only move the cursor.  Decoding always starts on channel 1.

Two equivalent entry points exist: the pure :func:`step` transition on
an immutable :class:`DecoderState`, and the mutable :class:`Decoder`
used for batch work and live streams.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .serializer import (
    ChannelSelect,
    ChannelToggle,
    Lexical,
    Mode,
    SerializedTranscript,
    SerialToken,
)

logger = logging.getLogger(__name__)


class DeserializeError(ValueError):
    pass


class ChannelOutOfRange(DeserializeError):
    def __init__(self, channel: int, max_channels: int):
        self.channel = channel
        self.max_channels = max_channels
        super().__init__(f"channel {channel} outside 1..{max_channels}")


class ModeMismatch(DeserializeError):
    def __init__(self, token: SerialToken, mode: str):
        super().__init__(f"token {str(token)!r} not allowed in {mode} mode")


ChannelStreams = tuple[tuple[str, ...], ...]
Emission = tuple[int, str]


@dataclass(frozen=True)
class DecoderState:
    max_channels: int
    mode: Mode
    current_channel: int = 1
    channels: ChannelStreams = ()
    tokens_consumed: int = 0

    @property
    def lexical_count(self) -> int:
        return sum(len(c) for c in self.channels)


def new_decoder(m: int, mode: Mode) -> DecoderState:
    _check_config(m, mode)
    return DecoderState(m, mode, 1, tuple(() for _ in range(m)), 0)


def _check_config(m: int, mode: str) -> None:
    if mode == "toggle":
        if m != 2:
            raise ValueError(f"toggle mode needs exactly 2 channels, got {m}")
    elif mode == "explicit":
        if m < 2:
            raise ValueError(f"explicit mode needs at least 2 channels, got {m}")
    else:
        raise ValueError(f"unknown mode {mode!r}")


def _next_channel(current: int, token: SerialToken, mode: str, m: int) -> int:
    if isinstance(token, ChannelToggle):
        if mode != "toggle":
            raise ModeMismatch(token, mode)
        return 3 - current
    if isinstance(token, ChannelSelect):
        if mode != "explicit":
            raise ModeMismatch(token, mode)
        if not 1 <= token.channel <= m:
            raise ChannelOutOfRange(token.channel, m)
        return token.channel
    raise TypeError(f"not a serial token: {token!r}")


def _warn_leading(token: SerialToken) -> None:
    logger.warning("stream starts with channel token %s before any lexical token", token)


def step(state: DecoderState, token: SerialToken) -> tuple[DecoderState, Optional[Emission]]:
    """Advance ``state`` by one token.

    Returns the new state and, for a lexical token, the ``(channel,
    text)`` emission.  Channel tokens yield no emission.
    """
    if isinstance(token, Lexical):
        ch = state.current_channel
        channels = list(state.channels)
        channels[ch - 1] = channels[ch - 1] + (token.text,)
        new = replace(state, channels=tuple(channels), tokens_consumed=state.tokens_consumed + 1)
        return new, (ch, token.text)

    ch = _next_channel(state.current_channel, token, state.mode, state.max_channels)
    if state.lexical_count == 0:
        _warn_leading(token)
    return replace(state, current_channel=ch, tokens_consumed=state.tokens_consumed + 1), None


class Decoder:
    """Mutable single-session decoder; not for concurrent use."""

    def __init__(self, m: int, mode: Mode):
        _check_config(m, mode)
        self.max_channels = m
        self.mode = mode
        self.current_channel = 1
        self.channels: list[list[str]] = [[] for _ in range(m)]
        self.tokens_consumed = 0
        self._seen_lexical = False

    def feed(self, token: SerialToken) -> Optional[Emission]:
        if isinstance(token, Lexical):
            self.channels[self.current_channel - 1].append(token.text)
            self.tokens_consumed += 1
            self._seen_lexical = True
            return self.current_channel, token.text
        self.current_channel = _next_channel(
            self.current_channel, token, self.mode, self.max_channels
        )
        if not self._seen_lexical:
            _warn_leading(token)
        self.tokens_consumed += 1
        return None

    def state(self) -> DecoderState:
        return DecoderState(
            self.max_channels,
            self.mode,
            self.current_channel,
            tuple(tuple(c) for c in self.channels),
            self.tokens_consumed,
        )


def deserialize(s: SerializedTranscript) -> ChannelStreams:
    dec = Decoder(s.max_channels, s.mode)
    for tok in s.tokens:
        dec.feed(tok)
    return dec.state().channels


def channel_of_tokens(s: SerializedTranscript) -> list[int]:
    """Channel assigned to each lexical token, in stream order."""
    dec = Decoder(s.max_channels, s.mode)
    out = []
    for tok in s.tokens:
        emitted = dec.feed(tok)
        if emitted is not None:
            out.append(emitted[0])
    return out


def strip_cc(s: SerializedTranscript | Iterable[SerialToken]) -> list[str]:
    """Drop every channel token and read the stream as a single channel."""
    tokens = s.tokens if isinstance(s, SerializedTranscript) else s
    return [t.text for t in tokens if isinstance(t, Lexical)]
