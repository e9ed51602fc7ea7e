"""``sobolev-lab`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import corpus
from .config import ConfigError, load
from .errors import DomainError, NumericError, PreconditionError, UnknownFunctionError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

log = logging.getLogger("sobolev_lab")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sobolev-lab", description="Run fine-property studies on the test corpus.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a study config and write <study>.csv and <study>.summary.txt")
    run.add_argument("config")
    run.add_argument("--jobs", type=int, default=1, help="worker threads for per-point work")
    run.add_argument("--out", default=".", help="output directory")
    sub.add_parser("list-corpus", help="list corpus entries and their annotations")
    val = sub.add_parser("validate", help="parse and check a config without running it")
    val.add_argument("config")
    return ap


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def cmd_run(args) -> int:
    from .studies import run, write_csv
    import io

    try:
        cfg = load(args.config)
    except (ConfigError, UnknownFunctionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{cfg.name}.csv"
    sum_path = out / f"{cfg.name}.summary.txt"
    written = []
    try:
        result = run(cfg, jobs=args.jobs)
        buf = io.StringIO()
        write_csv(result, buf)
        _write_atomic(csv_path, buf.getvalue())
        written.append(csv_path)
        _write_atomic(sum_path, "\n".join(result.summary) + "\n")
        written.append(sum_path)
    except (NumericError, PreconditionError) as exc:
        _cleanup(written)
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, UnknownFunctionError) as exc:
        _cleanup(written)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BaseException:
        _cleanup(written)
        raise
    print(f"wrote {csv_path} and {sum_path}")
    return EXIT_OK


def _cleanup(paths):
    for p in paths:
        Path(p).unlink(missing_ok=True)


def cmd_validate(args) -> int:
    try:
        cfg = load(args.config)
    except (ConfigError, UnknownFunctionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"ok: {cfg.kind} study '{cfg.name}'" + (f" on {cfg.corpus}" if cfg.corpus else ""))
    return EXIT_OK


def cmd_list_corpus(args) -> int:
    for e in corpus.entries():
        notes = " ".join(f"p={p:g}:[{','.join(e.annotations(p))}]" for p in (1, 2))
        exc = "; ".join(f"k={k}:{pts}" for k, pts in sorted(e.exceptional.items())) or "none"
        print(f"{e.id}\tn={e.n}\t{e.smoothness}\t{e.description}\t{notes}\texceptional={exc}")
    pairs = ", ".join(f"{a}*{b}" for a, b in corpus.PRODUCT_PAIRS)
    print(f"# product pairs: {pairs}")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SOBOLEV_LAB_LOG", "WARNING"))
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "list-corpus": cmd_list_corpus}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
