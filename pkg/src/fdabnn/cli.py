"""Command line entry point: ``fdabnn {train,eval,sweep,analyze}``.

Exit codes: 0 success, 1 configuration error, 2 data/checkpoint error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .checkpoint import CheckpointError
from .config import ConfigError, TrainConfig, apply_overrides, config_from_pairs, load_config
from .data import DataError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MSE_TERMS = (0, 1, 2, 4, 8, 16, 32, 64)


def _cmd_train(args) -> int:
    from .train import train

    cfg = load_config(args.config, args.override)
    result = train(cfg)
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"final test accuracy: {result.final_test_acc:.4f}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .train import evaluate

    acc = evaluate(args.checkpoint, args.dataset, args.limit)
    print(f"accuracy: {acc:.4f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .train import ablation_sweep, parse_sweep_spec

    try:
        text = Path(args.spec).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read sweep spec {args.spec}: {exc}") from exc
    base_pairs, variants = parse_sweep_spec(text)
    base = config_from_pairs(base_pairs)
    apply_overrides(base, args.override)
    base.validate()
    out = Path(args.out) if args.out else Path(base.out_dir) / "ablation.csv"
    rows = ablation_sweep(base, variants, out)
    for r in rows:
        print(f"{r['variant']:<24} {r['final_test_acc']:.4f}")
    print(f"table: {out}")
    return EXIT_OK


def write_analysis(out_dir: Path, terms, max_harmonic: int, period: float, beta: float,
                   samples: int, figures: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    mse_rows = [(n, analysis.fs_mse(n, 2 * math.pi / period), analysis.parseval_mse(n)) for n in MSE_TERMS]
    path = out_dir / "mse.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("n", "fs_mse", "parseval"))
        for n, mse, ref in mse_rows:
            w.writerow((n, f"{mse:.10f}", f"{ref:.10f}"))
    written.append(path)

    reference = analysis.spectrum("sign", period, max_harmonic, samples=samples)
    reports = [reference]
    reports += [analysis.spectrum("fda", period, max_harmonic, n=n, samples=samples) for n in terms]
    reports += [analysis.spectrum(f, period, max_harmonic, beta=beta, samples=samples)
                for f in ("tanh", "signswish")]
    labels = ["sign"] + [f"fda(n={n})" for n in terms] + [f"tanh(beta={beta:g})", f"signswish(beta={beta:g})"]
    path = out_dir / "spectrum.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("function", "harmonic", "sine", "cosine", "delta_amplitude", "delta_energy"))
        for label, rep in zip(labels, reports):
            for (i, b, a), (_, damp, den) in zip(rep.harmonics, rep.deltas(reference)):
                w.writerow((label, i, f"{b:.12e}", f"{a:.12e}", f"{damp:.12e}", f"{den:.12e}"))
    written.append(path)

    if figures:
        from . import plotting
        from .surrogates import baseline_backward, fda_derivative

        for rep, label in zip(reports, labels):
            rep.function = label
        written.append(plotting.plot_spectra(reports, reference, out_dir / "spectrum.png"))
        written.append(plotting.plot_mse(mse_rows, out_dir / "mse.png"))
        t = np.linspace(-1, 1, 2001)
        ones = np.ones_like(t)
        curves = {f"fda n={n}": (t, fda_derivative(t, n, 2 * math.pi / period)) for n in terms}
        curves["tanh"] = (t, baseline_backward("tanh", ones, t, beta))
        curves["signswish"] = (t, baseline_backward("signswish", ones, t, beta))
        written.append(plotting.plot_surrogates(curves, out_dir / "surrogates.png"))
    return written


def _cmd_analyze(args) -> int:
    paths = write_analysis(Path(args.out), args.n, args.max_harmonic, args.period, args.beta,
                           args.samples, args.figures)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdabnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="packed-path test accuracy of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", default=None, help="data directory (defaults to the one in the checkpoint)")
    e.add_argument("--limit", type=int, default=None, help="evaluate only the first N test images")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("sweep", help="run an ablation grid")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", default=None, help="CSV path for the comparison table")
    s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    s.set_defaults(func=_cmd_sweep)

    a = sub.add_parser("analyze", help="truncation-error and spectrum tables")
    a.add_argument("--out", default="analysis")
    a.add_argument("--n", type=int, nargs="+", default=[1, 5, 10])
    a.add_argument("--max-harmonic", type=int, default=32)
    a.add_argument("--period", type=float, default=2.0)
    a.add_argument("--beta", type=float, default=1.0)
    a.add_argument("--samples", type=int, default=1 << 16)
    a.add_argument("--figures", action="store_true", help="also render PNG figures")
    a.set_defaults(func=_cmd_analyze)
    return p


def main(argv=None) -> int:
    from .train import NumericalError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
