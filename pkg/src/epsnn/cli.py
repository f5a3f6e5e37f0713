"""Command-line entry points.

    epsnn recognition --config FILE --out DIR [--seeds N]
    epsnn discrimination --config FILE --out DIR [--seeds N]
    epsnn simulate --config FILE --out DIR
    epsnn plot --in FILE --kind calcium|histogram --out FILE

Exit status: 0 success, 1 invalid input (config, CSV, arguments), 2 runtime or
numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, parse_config
from .dynamics import SimulationError
from .engine import run
from .experiments import build_from_config, pattern_train, run_discrimination, run_recognition, window_mean
from .fabric import NEURON_POPULATIONS
from .io import (
    CsvFormatError,
    discrimination_metrics,
    recognition_metrics,
    render_svg,
    write_csv,
    write_metrics,
)

log = logging.getLogger("epsnn")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with 2, which we reserve
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _load(path: str, task: str | None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text, task)


def _sweep(cfg: RunConfig, out: Path, n_seeds: int | None, runner, metrics) -> None:
    if n_seeds is None:
        write_csv(runner(cfg), out, metrics=None)
        return
    rows = []
    for i in range(n_seeds):
        c = cfg.with_seed_offset(i)
        report = runner(c)
        write_csv(report, out / f"seed_{c.engine.seed}")
        rows.extend((name, value, c.engine.seed) for name, value in metrics(report))
        log.info("seed %d done", c.engine.seed)
    write_metrics(rows, out / "metrics.csv", with_seed=True)


def cmd_recognition(args) -> None:
    cfg = _load(args.config, "recognition")
    _sweep(cfg, Path(args.out), args.seeds, run_recognition, recognition_metrics)


def cmd_discrimination(args) -> None:
    cfg = _load(args.config, "discrimination")
    _sweep(cfg, Path(args.out), args.seeds, run_discrimination, discrimination_metrics)


def cmd_simulate(args) -> None:
    """Pattern input for ``engine.duration`` seconds, no teacher, no learning."""
    cfg = _load(args.config, None)
    net = build_from_config(cfg)
    stim = {"input": pattern_train(cfg, cfg.stimulus.seed, cfg.engine.duration)}
    rec = run(net, stim, cfg.engine, learning_enabled=False, name="simulate")
    metrics = []
    for pop in NEURON_POPULATIONS:
        if cfg.engine.record.calcium and rec.calcium[pop].shape[0]:
            try:
                metrics.append((f"mean_calcium_{pop}", float(np.mean(
                    [window_mean(rec, cfg, pop, n) for n in range(rec.calcium[pop].shape[1])]))))
            except ValueError:
                pass  # run shorter than the discarded transient
    write_csv(rec, args.out, metrics=metrics)


def cmd_plot(args) -> None:
    svg = render_svg(args.input, args.kind)
    out = Path(args.out)
    try:
        out.write_text(svg, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {out}: {exc.strerror or exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epsnn", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn, seeds in (
        ("recognition", cmd_recognition, True),
        ("discrimination", cmd_discrimination, True),
        ("simulate", cmd_simulate, False),
    ):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)
        if seeds:
            s.add_argument("--seeds", type=_positive_int, default=None)
        s.set_defaults(fn=fn)
    s = sub.add_parser("plot")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--kind", choices=("calcium", "histogram"), required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_plot)
    return p


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.fn(args)
    except (ConfigError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SimulationError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
