"""Command line front end.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable, Iterator

from . import __version__
from .deserializer import Decoder, DeserializeError, deserialize
from .roundtrip import round_trip_check
from .scoring import EditCounts, WerReport, macro_average, score_deserialized
from .serializer import (
    ConcurrencyExceeded,
    Lexical,
    SerialToken,
    dumps_serialized,
    parse_token,
    read_serialized,
    serialize,
)
from .simulate import MixtureConfig, dumps_sample, generate_dataset
from .transcript import (
    CtmParseError,
    LexiconError,
    TranscriptError,
    dumps_transcript,
    expand_subwords,
    import_ctm,
    read_transcripts,
)

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("tsot")

_CC_LIKE = re.compile(r"<cc[^>]*>")


class DataError(Exception):
    pass


class _Sink:
    """Text output that also tracks a SHA-256 of what was written."""

    def __init__(self, path: str):
        self.path = path
        self._fh: IO[str] = sys.stdout if path == "-" else open(path, "w", encoding="utf-8")
        self._hash = hashlib.sha256()

    def write(self, line: str, flush: bool = False) -> None:
        self._fh.write(line)
        self._hash.update(line.encode("utf-8"))
        if flush:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not sys.stdout:
            self._fh.close()
        else:
            self._fh.flush()

    @property
    def digest(self) -> str:
        return self._hash.hexdigest()


def _open_in(path: str) -> IO[str]:
    return sys.stdin if path == "-" else open(path, encoding="utf-8")


def _numbered(fh: IO[str]) -> Iterator[tuple[int, str]]:
    for n, line in enumerate(fh, start=1):
        if line.strip():
            yield n, line


def _file_digest(path: str) -> str | None:
    if path == "-" or not Path(path).is_file():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ── subcommands ───────────────────────────────────────────────


def cmd_ingest(args, out: _Sink) -> int:
    mapping = {}
    for item in args.map or ():
        label, sep, spk = item.partition("=")
        if not sep:
            raise DataError(f"bad --map entry {item!r}, expected LABEL=SPEAKER")
        mapping[label] = spk
    with _open_in(args.ctm) as fh:
        t = import_ctm(fh, mapping, sample_id=args.sample_id, gap_ms=args.gap_ms)
    if args.lexicon:
        lexicon = json.loads(Path(args.lexicon).read_text(encoding="utf-8"))
        t = expand_subwords(t, lexicon, permissive=args.permissive)
    out.write(dumps_transcript(t) + "\n")
    return EXIT_OK


def cmd_serialize(args, out: _Sink) -> int:
    mode = args.mode
    m = args.channels if args.channels is not None else 2
    failed = 0
    with _open_in(args.input) as fh:
        for t in read_transcripts(fh):
            try:
                s = serialize(t, mode, m, strict_literal=args.strict_literal)
            except (TranscriptError, ConcurrencyExceeded) as e:
                failed += 1
                print(f"{t.sample_id}\t{e}", file=sys.stderr)
                continue
            out.write(dumps_serialized(s) + "\n")
    return EXIT_DATA if failed else EXIT_OK


def _stream_token(text: str, line_no: int) -> SerialToken:
    tok = parse_token(text)
    if isinstance(tok, Lexical) and _CC_LIKE.fullmatch(text):
        raise DataError(f"line {line_no}: malformed channel token {text!r}")
    return tok


def cmd_deserialize(args, out: _Sink) -> int:
    if args.streaming:
        dec = Decoder(args.channels, args.mode)
        with _open_in(args.input) as fh:
            for n, line in enumerate(fh, start=1):
                text = line.rstrip("\r\n")
                if not text.strip():
                    continue
                try:
                    emitted = dec.feed(_stream_token(text.strip(), n))
                except DeserializeError as e:
                    raise DataError(f"line {n}: {e}") from None
                if emitted is not None:
                    out.write(f"{emitted[0]}\t{emitted[1]}\n", flush=True)
        return EXIT_OK

    with _open_in(args.input) as fh:
        for n, line in _numbered(fh):
            try:
                (s,) = read_serialized([line])
                for text in s.rendered():
                    _stream_token(text, n)
                channels = deserialize(s)
            except (DeserializeError, ValueError, KeyError) as e:
                raise DataError(f"line {n}: {e}") from None
            obj = {"sample_id": s.sample_id, "channels": [list(c) for c in channels]}
            out.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return EXIT_OK


def _parse_speeds(text: str) -> tuple[Fraction, ...]:
    try:
        return tuple(Fraction(x.strip()) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad speed list {text!r}") from None


def cmd_simulate(args, out: _Sink) -> int:
    with _open_in(args.pool) as fh:
        pool = list(read_transcripts(fh))
    if args.uniform_k is not None:
        cfg = MixtureConfig(
            max_speakers=args.uniform_k,
            speaker_count_law="uniform_1_to_k",
            speed_ratios=args.speed,
            max_concurrency_cap=args.max_concurrency,
            rng_seed=args.seed,
        )
    else:
        cfg = MixtureConfig(
            single_speaker_prob_p=args.p,
            max_speakers=2,
            speed_ratios=args.speed,
            max_concurrency_cap=args.max_concurrency,
            rng_seed=args.seed,
        )
    args._config = cfg.to_json()
    for sample in generate_dataset(pool, cfg, args.n):
        out.write(dumps_sample(sample) + "\n")
    return EXIT_OK


def cmd_roundtrip(args, out: _Sink) -> int:
    m = args.channels if args.channels is not None else 2
    mode = args.mode or ("toggle" if m == 2 else "explicit")
    checked = 0
    with _open_in(args.input) as fh:
        for t in read_transcripts(fh):
            checked += 1
            try:
                report = round_trip_check(t, m, mode, strict_literal=args.strict_literal)
                problem = report.divergence
            except ConcurrencyExceeded as e:
                problem = str(e)
            if problem is not None:
                print(f"round trip failed for {t.sample_id}: {problem}", file=sys.stderr)
                out.write(json.dumps({"checked": checked, "failed_sample": t.sample_id}) + "\n")
                return EXIT_DATA
    out.write(json.dumps({"checked": checked, "failed_sample": None}) + "\n")
    return EXIT_OK


def _read_refs(path: str) -> dict[str, dict]:
    refs = {}
    with _open_in(path) as fh:
        for n, line in _numbered(fh):
            obj = json.loads(line)
            if "sample_id" not in obj or "references" not in obj:
                raise DataError(f"{path} line {n}: need sample_id and references")
            refs[obj["sample_id"]] = obj
    return refs


def cmd_score(args, out: _Sink) -> int:
    refs = _read_refs(args.refs)
    hyps: dict[str, list[list[str]]] = {}
    with _open_in(args.hyps) as fh:
        for n, line in _numbered(fh):
            obj = json.loads(line)
            if "sample_id" not in obj or "channels" not in obj:
                raise DataError(f"{args.hyps} line {n}: need sample_id and channels")
            if obj["sample_id"] not in refs:
                raise DataError(f"{args.hyps} line {n}: no reference for {obj['sample_id']!r}")
            hyps[obj["sample_id"]] = obj["channels"]

    total = EditCounts()
    per_condition: dict[str, EditCounts] = {}
    assignments = []
    for sid, rec in refs.items():
        speakers = list(rec["references"])
        rep = score_deserialized(hyps.get(sid, []), rec["references"], lowercase=args.lowercase)
        total = total + rep.counts
        assignments.append({
            "sample_id": sid,
            "hyp_to_ref": [None if a is None else speakers[a] for a in rep.assignment],
        })
        if args.by_condition:
            label = rec.get(args.by_condition, rec.get("provenance", {}).get(args.by_condition))
            if label is None:
                raise DataError(f"sample {sid!r} has no field {args.by_condition!r}")
            label = str(label)
            per_condition[label] = per_condition.get(label, EditCounts()) + rep.counts

    report = WerReport(total).to_json()
    report["assignment"] = assignments
    if per_condition:
        try:
            table = macro_average([(k, WerReport(c)) for k, c in per_condition.items()])
        except ValueError as e:
            raise DataError(str(e)) from None
        report["conditions"] = {k: r.to_json() for k, r in table.rows.items()}
        for row in report["conditions"].values():
            del row["assignment"]
        report["macro_average"] = table.average
    out.write(json.dumps(report, ensure_ascii=False) + "\n")
    return EXIT_OK


# ── parser ────────────────────────────────────────────────────


def _channels(text: str) -> int:
    m = int(text)
    if m < 2:
        raise argparse.ArgumentTypeError("need at least 2 channels")
    return m


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _percent(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 100:
        raise argparse.ArgumentTypeError("p must lie in [0, 100]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tsot", description="Token-level serialized transcripts.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--manifest", metavar="PATH", help="write a JSON run manifest here")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_output(sp):
        sp.add_argument("-o", "--output", default="-", help="output path (default stdout)")
        return sp

    sp = with_output(sub.add_parser("ingest", help="CTM alignments -> transcript JSONL"))
    sp.add_argument("--ctm", required=True)
    sp.add_argument("--sample-id", default="")
    sp.add_argument("--map", action="append", metavar="LABEL=SPEAKER")
    sp.add_argument("--gap-ms", type=int, default=500)
    sp.add_argument("--lexicon", help="JSON object mapping word -> list of subwords")
    sp.add_argument("--permissive", action="store_true", help="pass unknown words through")
    sp.set_defaults(func=cmd_ingest)

    sp = with_output(sub.add_parser("serialize", help="transcripts -> serialized token streams"))
    sp.add_argument("input", nargs="?", default="-")
    sp.add_argument("--mode", choices=("toggle", "explicit"), default="toggle")
    sp.add_argument("--channels", type=_channels)
    sp.add_argument("--strict-literal", action="store_true")
    sp.set_defaults(func=cmd_serialize)

    sp = with_output(sub.add_parser("deserialize", help="serialized streams -> channels"))
    sp.add_argument("input", nargs="?", default="-")
    sp.add_argument("--streaming", action="store_true",
                    help="one token per input line, one 'channel<TAB>token' per emission")
    sp.add_argument("--mode", choices=("toggle", "explicit"), default="toggle")
    sp.add_argument("--channels", type=_channels, default=2)
    sp.set_defaults(func=cmd_deserialize)

    sp = with_output(sub.add_parser("simulate", help="generate mixture samples"))
    sp.add_argument("--pool", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=_seed, required=True)
    law = sp.add_mutually_exclusive_group()
    law.add_argument("--p", type=_percent, default=50.0, help="percent single-speaker samples")
    law.add_argument("--uniform-k", type=int, help="draw 1..K speakers uniformly")
    sp.add_argument("--speed", type=_parse_speeds, default=(Fraction(1),))
    sp.add_argument("--max-concurrency", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = with_output(sub.add_parser("roundtrip", help="check serialize/deserialize consistency"))
    sp.add_argument("input", nargs="?", default="-")
    sp.add_argument("--mode", choices=("toggle", "explicit"))
    sp.add_argument("--channels", type=_channels)
    sp.add_argument("--strict-literal", action="store_true")
    sp.set_defaults(func=cmd_roundtrip)

    sp = with_output(sub.add_parser("score", help="permutation WER of channels vs references"))
    sp.add_argument("--refs", required=True)
    sp.add_argument("--hyps", required=True)
    sp.add_argument("--by-condition", metavar="FIELD")
    sp.add_argument("--lowercase", action="store_true")
    sp.set_defaults(func=cmd_score)
    return p


def _usage_check(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "serialize":
        if args.mode == "toggle" and args.channels not in (None, 2):
            parser.error("toggle mode supports exactly 2 channels")
        if args.mode == "explicit" and args.channels is None:
            parser.error("explicit mode needs --channels")
    if args.command == "deserialize" and args.mode == "toggle" and args.channels != 2:
        parser.error("toggle mode supports exactly 2 channels")
    if args.command == "roundtrip" and args.mode == "toggle" and args.channels not in (None, 2):
        parser.error("toggle mode supports exactly 2 channels")
    if args.command == "simulate":
        if args.n < 0:
            parser.error("--n must be non-negative")
        if args.uniform_k is not None and args.uniform_k < 1:
            parser.error("--uniform-k must be >= 1")
        if args.max_concurrency is not None and args.max_concurrency < 1:
            parser.error("--max-concurrency must be >= 1")
        if not args.speed or any(r <= 0 for r in args.speed):
            parser.error("--speed ratios must be positive")


def _manifest_config(args) -> dict:
    skip = {"func", "manifest", "_config"}
    cfg = {}
    for k, v in vars(args).items():
        if k in skip:
            continue
        if isinstance(v, tuple):
            v = [str(x) for x in v]
        cfg[k] = v
    if hasattr(args, "_config"):
        cfg["mixture_config"] = args._config
    return cfg


def main(argv: Iterable[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(None if argv is None else list(argv))
    _usage_check(parser, args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    inputs = [getattr(args, k) for k in ("input", "ctm", "pool", "refs", "hyps", "lexicon")
              if getattr(args, k, None)]
    started = time.monotonic()
    out = _Sink(args.output)
    try:
        code = args.func(args, out)
    except (DataError, TranscriptError, CtmParseError, LexiconError, DeserializeError,
            ConcurrencyExceeded, ValueError, KeyError, json.JSONDecodeError, OSError) as e:
        print(f"tsot {args.command}: {e}", file=sys.stderr)
        code = EXIT_DATA
    finally:
        out.close()

    if args.manifest:
        manifest = {
            "subcommand": args.command,
            "config": _manifest_config(args),
            "inputs": {p: _file_digest(p) for p in inputs},
            "output": {"path": args.output, "sha256": out.digest},
            "version": __version__,
            "exit_code": code,
            "duration_s": round(time.monotonic() - started, 6),
        }
        Path(args.manifest).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
