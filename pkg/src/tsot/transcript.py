"""Timed, speaker-annotated transcripts.

A transcript is a flat list of :class:`TimedToken` records, one per
recognition token (word or subword).  Each token carries its emission
time (the end time of the token, in integer milliseconds), the speaker
who said it, the utterance it belongs to and whether it closes that
utterance.

Besides the data types this module holds the ingestion helpers (JSONL,
CTM), subword expansion and the concurrency sweep used to check whether
a transcript fits into ``M`` virtual output channels.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Iterable, Iterator, Mapping, Sequence

RESERVED_TOKEN = re.compile(r"<cc\d*>")

DEFAULT_SILENCE_GAP_MS = 500


class TranscriptError(ValueError):
    """Raised when a transcript fails validation."""

    def __init__(self, violations: Sequence["Violation"], sample_id: str = ""):
        self.violations = tuple(violations)
        self.sample_id = sample_id
        head = "; ".join(str(v) for v in self.violations[:3])
        more = len(self.violations) - 3
        if more > 0:
            head += f" (+{more} more)"
        prefix = f"sample {sample_id!r}: " if sample_id else ""
        super().__init__(f"{prefix}invalid transcript: {head}")


class CtmParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class LexiconError(KeyError):
    def __init__(self, word: str):
        self.word = word
        super().__init__(f"word {word!r} missing from lexicon")

    def __str__(self) -> str:
        return self.args[0]


def is_reserved(token: str) -> bool:
    """True if ``token`` looks like a channel-change token (``<cc>``, ``<ccN>``)."""
    return RESERVED_TOKEN.fullmatch(token) is not None


@dataclass(frozen=True, slots=True)
class TimedToken:
    token: str
    emission_ms: int
    speaker: str
    utterance_id: str
    utterance_final: bool = False

    def to_json(self) -> dict:
        return {
            "token": self.token,
            "time_ms": self.emission_ms,
            "speaker": self.speaker,
            "utt": self.utterance_id,
            "final": self.utterance_final,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TimedToken":
        return cls(
            token=obj["token"],
            emission_ms=obj["time_ms"],
            speaker=obj["speaker"],
            utterance_id=obj["utt"],
            utterance_final=obj["final"],
        )


@dataclass(frozen=True, slots=True)
class AnnotatedTranscript:
    """All tokens of one sample, in input order.

    Input order matters: it is the spoken order within an utterance and
    the tie-breaker between tokens with equal emission times.
    """

    sample_id: str
    tokens: tuple[TimedToken, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def sorted_order(self) -> list[int]:
        """Token indices in stable ascending order of emission time."""
        return sorted(range(len(self.tokens)), key=lambda i: self.tokens[i].emission_ms)

    def sorted_tokens(self) -> list[TimedToken]:
        return [self.tokens[i] for i in self.sorted_order()]

    def utterances(self) -> dict[str, list[int]]:
        """Map utterance id to its token indices in input order."""
        utts: dict[str, list[int]] = {}
        for i, tok in enumerate(self.tokens):
            utts.setdefault(tok.utterance_id, []).append(i)
        return utts

    def speaker_words(self) -> dict[str, list[str]]:
        """Per-speaker token text in input order."""
        out: dict[str, list[str]] = {}
        for tok in self.tokens:
            out.setdefault(tok.speaker, []).append(tok.token)
        return out

    def shifted(self, offset_ms: int) -> "AnnotatedTranscript":
        return replace(
            self,
            tokens=tuple(replace(t, emission_ms=t.emission_ms + offset_ms) for t in self.tokens),
        )

    def to_json(self) -> dict:
        return {"sample_id": self.sample_id, "tokens": [t.to_json() for t in self.tokens]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "AnnotatedTranscript":
        return cls(obj["sample_id"], tuple(TimedToken.from_json(t) for t in obj["tokens"]))


# ── validation ────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Violation:
    index: int
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        s = f"token {self.index}: {self.rule}"
        return f"{s} ({self.detail})" if self.detail else s


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


def validate_transcript(t: AnnotatedTranscript) -> ValidationReport:
    """Check every structural invariant of ``t``.

    Violations are returned as data; nothing is raised.  Each one names
    the offending token index (input order) and the broken rule.
    """
    out: list[Violation] = []
    for i, tok in enumerate(t.tokens):
        if not tok.token:
            out.append(Violation(i, "empty token"))
        elif is_reserved(tok.token):
            out.append(Violation(i, "reserved token", tok.token))
        if not isinstance(tok.emission_ms, int) or isinstance(tok.emission_ms, bool):
            out.append(Violation(i, "non-integer emission time", repr(tok.emission_ms)))
        elif tok.emission_ms < 0:
            out.append(Violation(i, "negative emission time", str(tok.emission_ms)))
        if not tok.speaker:
            out.append(Violation(i, "empty speaker"))

    owner: dict[str, str] = {}
    for utt, idx in t.utterances().items():
        speakers = {t.tokens[i].speaker for i in idx}
        if len(speakers) > 1:
            out.append(Violation(idx[0], "utterance id shared by speakers", utt))
        owner[utt] = t.tokens[idx[0]].speaker
        # only compare valid integer times
        times = [t.tokens[i].emission_ms for i in idx]
        for a, b, i in zip(times, times[1:], idx[1:]):
            if isinstance(a, int) and isinstance(b, int) and b < a:
                out.append(Violation(i, "non-monotone utterance times", f"{a} -> {b}"))
        finals = [i for i in idx if t.tokens[i].utterance_final]
        if not finals:
            out.append(Violation(idx[-1], "utterance lacks final token", utt))
        for i in finals:
            if i != idx[-1]:
                out.append(Violation(i, "final token not last in utterance", utt))

    if not out:
        out.extend(_self_overlaps(t, owner))
    return ValidationReport(tuple(sorted(out, key=lambda v: v.index)))


def _self_overlaps(t: AnnotatedTranscript, owner: Mapping[str, str]) -> list[Violation]:
    # A speaker holds one channel at a time, so its utterances must not
    # interleave in emission order.
    spans = _utterance_spans(t)
    by_speaker: dict[str, list[tuple[int, int, str]]] = defaultdict(list)
    for utt, (first, last) in spans.items():
        by_speaker[owner[utt]].append((first, last, utt))
    order = t.sorted_order()
    out = []
    for spans_ in by_speaker.values():
        spans_.sort()
        for (_, last, _), (first, _, utt) in zip(spans_, spans_[1:]):
            if first <= last:
                out.append(Violation(order[first], "overlapping utterances from one speaker", utt))
    return out


def check_transcript(t: AnnotatedTranscript) -> None:
    """Raise :class:`TranscriptError` unless ``t`` is valid."""
    report = validate_transcript(t)
    if not report.ok:
        raise TranscriptError(report.violations, t.sample_id)


# ── concurrency ───────────────────────────────────────────────


@dataclass(frozen=True)
class ConcurrencyProfile:
    max_concurrent: int
    # (input token index, active utterance ids), in emission-sorted order
    per_token_active: tuple[tuple[int, frozenset[str]], ...] = ()


def _utterance_spans(t: AnnotatedTranscript) -> dict[str, tuple[int, int]]:
    """First and final sorted position of every utterance."""
    spans: dict[str, tuple[int, int]] = {}
    for pos, i in enumerate(t.sorted_order()):
        tok = t.tokens[i]
        first, _ = spans.get(tok.utterance_id, (pos, pos))
        spans[tok.utterance_id] = (first, pos)
    return spans


def max_concurrency(t: AnnotatedTranscript) -> ConcurrencyProfile:
    """Sweep the emission-sorted tokens and count open utterances.

    An utterance is open from the sorted position of its first token
    through the position of its final token, inclusive.
    """
    check_transcript(t)
    order = t.sorted_order()
    spans = _utterance_spans(t)
    starts: dict[int, list[str]] = defaultdict(list)
    ends: dict[int, list[str]] = defaultdict(list)
    for utt, (first, last) in spans.items():
        starts[first].append(utt)
        ends[last].append(utt)

    active: set[str] = set()
    rows = []
    peak = 0
    for pos, i in enumerate(order):
        active.update(starts.get(pos, ()))
        rows.append((i, frozenset(active)))
        peak = max(peak, len(active))
        active.difference_update(ends.get(pos, ()))
    return ConcurrencyProfile(peak, tuple(rows))


# ── ingestion ─────────────────────────────────────────────────


def _to_ms(start: str, dur: str, line_no: int) -> tuple[int, int]:
    try:
        s, d = Decimal(start), Decimal(dur)
    except InvalidOperation:
        raise CtmParseError(line_no, f"bad time field in {start!r} {dur!r}") from None
    if not (s.is_finite() and d.is_finite()) or s < 0 or d < 0:
        raise CtmParseError(line_no, "start and duration must be finite and non-negative")
    q = Decimal(1)
    start_ms = int((s * 1000).quantize(q, rounding=ROUND_HALF_UP))
    end_ms = int(((s + d) * 1000).quantize(q, rounding=ROUND_HALF_UP))
    return start_ms, end_ms


def import_ctm(
    text: str | Iterable[str],
    channel_to_speaker: Mapping[str, str] | None = None,
    *,
    sample_id: str = "",
    gap_ms: int = DEFAULT_SILENCE_GAP_MS,
) -> AnnotatedTranscript:
    """Read word alignments in CTM-like form.

    Each record is ``label file_id start_sec dur_sec word [utt_id]``.
    ``label`` is a channel or speaker label, mapped through
    ``channel_to_speaker`` (unmapped labels are used as-is).  Lines
    starting with ``;;`` and blank lines are skipped.

    A token's emission time is the word end, ``start + dur``, rounded to
    the nearest millisecond.  Without an explicit utterance id, a
    speaker's words are split into utterances wherever the silence
    between one word's end and the next word's start exceeds ``gap_ms``.
    """
    if isinstance(text, str):
        text = text.splitlines()
    mapping = dict(channel_to_speaker or {})

    records = []
    has_utt: bool | None = None
    for line_no, raw in enumerate(text, start=1):
        line = raw.strip()
        if not line or line.startswith(";;"):
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise CtmParseError(line_no, f"expected 5 or 6 fields, got {len(parts)}")
        label, _file_id, start, dur, word = parts[:5]
        if has_utt is None:
            has_utt = len(parts) == 6
        elif has_utt != (len(parts) == 6):
            raise CtmParseError(line_no, "utterance id column present on some lines only")
        if is_reserved(word):
            raise CtmParseError(line_no, f"word {word!r} collides with a channel token")
        start_ms, end_ms = _to_ms(start, dur, line_no)
        speaker = mapping.get(label, label)
        records.append((speaker, start_ms, end_ms, word, parts[5] if has_utt else None))

    by_speaker: dict[str, list[tuple]] = defaultdict(list)
    for rec in records:
        by_speaker[rec[0]].append(rec)

    labelled = []
    for speaker, recs in by_speaker.items():
        recs.sort(key=lambda r: (r[1], r[2]))
        n_utt = 0
        prev_end = None
        for speaker_, start_ms, end_ms, word, utt in recs:
            if utt is None:
                if prev_end is None or start_ms - prev_end > gap_ms:
                    n_utt += 1
                utt = f"{speaker}-{n_utt:04d}"
            prev_end = end_ms
            labelled.append((start_ms, end_ms, word, speaker, utt))

    labelled.sort(key=lambda r: (r[0], r[1]))
    last_of: dict[tuple[str, str], int] = {}
    for k, (_, _, _, speaker, utt) in enumerate(labelled):
        last_of[(speaker, utt)] = k
    finals = set(last_of.values())
    tokens = tuple(
        TimedToken(word, end_ms, speaker, utt, k in finals)
        for k, (_, end_ms, word, speaker, utt) in enumerate(labelled)
    )
    return AnnotatedTranscript(sample_id, tokens)


def expand_subwords(
    t: AnnotatedTranscript,
    lexicon: Mapping[str, Sequence[str]],
    *,
    permissive: bool = False,
) -> AnnotatedTranscript:
    """Replace every word with its subwords.

    All subwords share the word's emission time, speaker and utterance,
    and keep their lexicon order.  Only the last subword of an
    utterance-final word stays final.  Words absent from ``lexicon``
    raise :class:`LexiconError` unless ``permissive`` is set, in which
    case they pass through unchanged.
    """
    out: list[TimedToken] = []
    for tok in t.tokens:
        pieces = lexicon.get(tok.token)
        if pieces is None:
            if not permissive:
                raise LexiconError(tok.token)
            pieces = [tok.token]
        if not pieces:
            raise ValueError(f"lexicon maps {tok.token!r} to no subwords")
        last = len(pieces) - 1
        out.extend(
            replace(tok, token=p, utterance_final=tok.utterance_final and k == last)
            for k, p in enumerate(pieces)
        )
    return AnnotatedTranscript(t.sample_id, tuple(out))


# ── JSONL ─────────────────────────────────────────────────────


def dumps_transcript(t: AnnotatedTranscript) -> str:
    return json.dumps(t.to_json(), ensure_ascii=False)


def read_transcripts(lines: Iterable[str]) -> Iterator[AnnotatedTranscript]:
    """Parse AnnotatedTranscript JSONL, also accepting mixture-sample lines.

    A line carrying a ``"transcript"`` object (simulator output) yields
    that transcript under the line's ``sample_id``.
    """
    for line in lines:
        if not line.strip():
            continue
        obj = json.loads(line)
        if "transcript" in obj:
            inner = obj["transcript"]
            inner = {**inner, "sample_id": obj.get("sample_id", inner.get("sample_id", ""))}
            yield AnnotatedTranscript.from_json(inner)
        else:
            yield AnnotatedTranscript.from_json(obj)
