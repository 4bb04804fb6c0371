"""Multi-talker word error rate.

Hypothesis streams are matched to reference streams by the bijection
with the fewest total errors.  The shorter side is padded with empty
streams, so an unmatched hypothesis counts entirely as insertions and an
unmatched reference entirely as deletions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional, Sequence

from .transcript import is_reserved

MAX_STREAMS = 8


class StreamLimitError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class EditCounts:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_len: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_len + other.ref_len,
        )


@dataclass(frozen=True)
class WerReport:
    counts: EditCounts
    # assignment[h] is the reference index matched to hypothesis h, or
    # None when h was matched to padding
    assignment: tuple[Optional[int], ...] = ()

    @property
    def wer(self) -> float:
        if self.counts.ref_len == 0:
            return math.nan
        return self.counts.errors / self.counts.ref_len

    @property
    def empty_reference(self) -> bool:
        return self.counts.ref_len == 0

    def to_json(self) -> dict:
        c = self.counts
        return {
            "sub": c.substitutions,
            "ins": c.insertions,
            "del": c.deletions,
            "ref_len": c.ref_len,
            "wer": None if self.empty_reference else self.wer,
            "assignment": list(self.assignment),
        }


def _norm(tokens: Sequence[str], lowercase: bool) -> list[str]:
    return [t.lower() for t in tokens] if lowercase else list(tokens)


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> EditCounts:
    """Levenshtein alignment with unit costs.

    The backtrace prefers substitution (or match), then insertion, then
    deletion whenever several moves are equally cheap.
    """
    n, m = len(ref), len(hyp)
    # cost[i][j]: distance between ref[:i] and hyp[:j]
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        cost[i][0] = i
    for j in range(m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        row, prev = cost[i], cost[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (r != hyp[j - 1])
            row[j] = min(diag, row[j - 1] + 1, prev[j] + 1)

    s = ins = dels = 0
    i, j = n, m
    while i or j:
        c = cost[i][j]
        if i and j and c == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j and c == cost[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return EditCounts(s, ins, dels, n)


def permutation_wer(
    refs: Sequence[Sequence[str]],
    hyps: Sequence[Sequence[str]],
    *,
    lowercase: bool = False,
) -> WerReport:
    """Minimum-error WER over every hypothesis-to-reference bijection.

    Both lists are limited to ``MAX_STREAMS`` entries since the search is
    exhaustive.  Ties between equally good bijections go to the first in
    lexicographic order.
    """
    if len(refs) > MAX_STREAMS or len(hyps) > MAX_STREAMS:
        raise StreamLimitError(
            f"at most {MAX_STREAMS} streams per side ({len(refs)} refs, {len(hyps)} hyps)"
        )
    refs = [_norm(r, lowercase) for r in refs]
    hyps = [_norm(h, lowercase) for h in hyps]
    n_ref = len(refs)
    size = max(len(refs), len(hyps))
    padded_refs = refs + [[]] * (size - len(refs))
    padded_hyps = hyps + [[]] * (size - len(hyps))

    pair = [[edit_distance(r, h) for r in padded_refs] for h in padded_hyps]

    best_perm: tuple[int, ...] = tuple(range(size))
    best_err = None
    for perm in itertools.permutations(range(size)):
        err = sum(pair[h][perm[h]].errors for h in range(size))
        if best_err is None or err < best_err:
            best_err, best_perm = err, perm

    total = EditCounts()
    for h in range(size):
        total = total + pair[h][best_perm[h]]
    assignment = tuple(
        best_perm[h] if best_perm[h] < n_ref else None for h in range(len(hyps))
    )
    return WerReport(total, assignment)


def score_deserialized(
    channels: Sequence[Sequence[str]],
    refs: Mapping[str, Sequence[str]] | Sequence[Sequence[str]],
    *,
    lowercase: bool = False,
) -> WerReport:
    """Score deserialized channels against per-speaker references.

    Empty channels are dropped before matching.  Assignment indices refer
    to the order of ``refs`` (its key order for a mapping) and to the
    surviving non-empty channels.
    """
    for ch in channels:
        for tok in ch:
            if is_reserved(tok):
                raise ValueError(f"channel token {tok!r} reached the scorer")
    ref_list = list(refs.values()) if isinstance(refs, Mapping) else list(refs)
    hyps = [list(ch) for ch in channels if ch]
    return permutation_wer(ref_list, hyps, lowercase=lowercase)


@dataclass(frozen=True)
class ConditionTable:
    rows: dict[str, WerReport]
    average: float


def macro_average(reports: Sequence[tuple[str, WerReport]]) -> ConditionTable:
    """Per-condition WER and their unweighted mean.

    Reports sharing a label are pooled (counts summed) before the
    condition's WER is taken.
    """
    if not reports:
        raise ValueError("no reports to average")
    pooled: dict[str, EditCounts] = {}
    for label, rep in reports:
        if rep.counts.ref_len == 0:
            raise ValueError(f"condition {label!r}: report with empty reference")
        pooled[label] = pooled.get(label, EditCounts()) + rep.counts
    rows = {label: WerReport(c) for label, c in pooled.items()}
    avg = sum(r.wer for r in rows.values()) / len(rows)
    return ConditionTable(rows, avg)
