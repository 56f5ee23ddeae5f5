"""Command-line entry point: ``cerfgan {train,translate,ablate,report,make-toy}``.

Errors print one line ``error[E_CODE]: message`` to stderr and exit with:

    2  configuration or usage error (E_CONFIG, E_USAGE, E_DOMAIN)
    3  data error (E_DATA)
    4  checkpoint error (E_CHECKPOINT)
    5  training diverged (E_DIVERGED)
    1  anything else (E_RUNTIME)
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiments
from .checkpoint import ManifestError
from .config import ConfigError, load_config
from .data import TOY_KINDS, make_toy_translation_dataset, write_domain_folder
from .inference import translate_files
from .trainer import TrainingDiverged

EXIT_CODES = {"E_RUNTIME": 1, "E_CONFIG": 2, "E_USAGE": 2, "E_DOMAIN": 2, "E_DATA": 3, "E_CHECKPOINT": 4,
              "E_DIVERGED": 5}
ABLATIONS = ("mnist-cgan-mcd", "stargan-probe", "skip-depth")


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise CliError("E_USAGE", message)


def _overrides(extra: Sequence[str]) -> list[str]:
    bad = [e for e in extra if not (e.startswith("--") and "=" in e and "." in e.split("=", 1)[0])]
    if bad:
        raise CliError("E_USAGE", f"unrecognized arguments: {' '.join(bad)}")
    return list(extra)


def cmd_train(args, extra) -> Path:
    cfg = load_config(args.config, _overrides(extra))
    run_dir = Path(args.run_dir) if args.run_dir else Path(cfg.output.run_dir)
    res = experiments.train(cfg, run_dir)
    print(res.run_dir)
    return res.run_dir


def cmd_translate(args, extra) -> list[Path]:
    _overrides(extra)
    written = translate_files(args.checkpoint, args.inputs, args.target, args.out, highres=args.highres)
    for p in written:
        print(p)
    return written


def cmd_ablate(args, extra) -> Path:
    cfg = load_config(args.config, _overrides(extra))
    out = Path(args.out or Path(cfg.output.run_dir) / f"ablate-{args.kind}")
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "mnist-cgan-mcd":
        _, summary = experiments.ablate_mnist(cfg, out)
        print(", ".join(f"{k}={v}" for k, v in summary.items()))
    elif args.kind == "stargan-probe":
        for row in experiments.ablate_stargan_probe(cfg, out):
            print(f"{row.model} lambda_cls={row.lambda_cls} l1_input={row.l1_input:.4f} "
                  f"l1_target={row.l1_target:.4f} closer_to_input={row.frac_closer_to_input:.3f}")
    else:
        for g in experiments.ablate_skip_depth(cfg, out):
            print(g)
    print(out)
    return out


def cmd_report(args, extra) -> list[Path]:
    _overrides(extra)
    if not (args.params or args.stability):
        raise CliError("E_USAGE", "choose at least one of --params, --stability")
    runs = [Path(r) for r in args.runs]
    missing = [str(r) for r in runs if not r.is_dir()]
    if missing:
        raise experiments.DataError(f"run directory not found: {', '.join(missing)}")
    out = Path(args.out) if args.out else runs[0] / "report"
    written = experiments.report(runs, out, args.params, args.stability, args.outlier_threshold)
    for p in written:
        print(p)
    return written


def cmd_make_toy(args, extra) -> list[Path]:
    _overrides(extra)
    if args.kind not in TOY_KINDS:
        raise CliError("E_USAGE", f"unknown toy kind {args.kind!r}; choose from {', '.join(TOY_KINDS)}")
    a, b = make_toy_translation_dataset(args.kind, args.n, np.random.default_rng(args.seed), args.size)
    out = Path(args.out)
    dirs = []
    for ds, name in zip((a, b), args.names):
        write_domain_folder(ds, out / name)
        dirs.append(out / name)
        print(out / name)
    return dirs


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cerfgan", description=__doc__.splitlines()[0],
                epilog="Config keys can be overridden with --section.key=value flags.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train from a YAML config")
    t.add_argument("config")
    t.add_argument("--run-dir", help="overrides output.run_dir")
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="translate image files with a checkpoint")
    tr.add_argument("checkpoint")
    tr.add_argument("inputs", nargs="+")
    tr.add_argument("--target", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--highres", action="store_true", help="keep input size (cropped to a multiple of 64)")
    tr.set_defaults(func=cmd_translate)

    a = sub.add_parser("ablate", help="run an ablation")
    a.add_argument("kind", choices=ABLATIONS)
    a.add_argument("config")
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    r = sub.add_parser("report", help="parameter and stability reports for run directories")
    r.add_argument("runs", nargs="+")
    r.add_argument("--params", action="store_true")
    r.add_argument("--stability", action="store_true")
    r.add_argument("--outlier-threshold", type=float, default=10.0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    m = sub.add_parser("make-toy", help="write a paired two-domain toy dataset")
    m.add_argument("kind")
    m.add_argument("n", type=int)
    m.add_argument("out")
    m.add_argument("--size", type=int, default=64)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--names", nargs=2, default=["A", "B"])
    m.set_defaults(func=cmd_make_toy)
    return p


def _classify(exc: BaseException) -> tuple[str, str]:
    if isinstance(exc, CliError):
        return exc.code, str(exc)
    if isinstance(exc, ConfigError):
        return "E_CONFIG", str(exc)
    if isinstance(exc, TrainingDiverged):
        where = f" (checkpoint: {exc.checkpoint})" if exc.checkpoint else ""
        return "E_DIVERGED", f"{exc}{where}"
    if isinstance(exc, ManifestError):
        return "E_CHECKPOINT", str(exc)
    if isinstance(exc, KeyError):
        return "E_DOMAIN", str(exc.args[0]) if exc.args else "unknown key"
    if isinstance(exc, (experiments.DataError, FileNotFoundError)):
        return "E_DATA", str(exc)
    return "E_RUNTIME", f"{type(exc).__name__}: {exc}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args, extra)
    except Exception as exc:  # every failure becomes one machine-parsable line
        code, msg = _classify(exc)
        print(f"error[{code}]: {' '.join(msg.split())}", file=sys.stderr)
        return EXIT_CODES[code]
    return 0


if __name__ == "__main__":
    sys.exit(main())
