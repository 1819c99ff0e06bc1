"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import report as rpt
from .config import RunConfig, parse_config
from .errors import ConfigError, DataError, NumericalError
from .estimators import EstimatorConfig, EstimatorId, evaluate, increments
from .mc_harness import (
    DEFAULT_ESTIMATORS,
    KnRule,
    ci_experiment,
    run_decomposition,
    run_experiment,
)
from .process_sim import simulate_path
from .ticks import ingest_ticks

log = logging.getLogger("quarticity")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=default, help="master seed (u64)")
    parser.add_argument("--out", type=Path, default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=default, help="advisory worker count")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quarticity", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate one path and write time,x,c")
    _global_flags(p, suppress=True)

    p = sub.add_parser("estimate", help="run estimators on a path CSV or tick CSV")
    _global_flags(p, suppress=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--path", type=Path, help="path CSV written by `simulate`")
    src.add_argument("--ticks", type=Path, help="tick CSV with header timestamp,price")
    p.add_argument("--delta", type=float, help="grid step for tick resampling")
    p.add_argument("--log", action="store_true", help="use log prices for ticks")
    p.add_argument("--substeps", type=int, help="fine steps per observation in --path")
    p.add_argument("--k-n", type=int, dest="k_n", help="override the window length")
    p.add_argument("--estimators", help="comma-separated estimator labels")
    p.add_argument("--format", choices=("csv", "table", "jsonl"), default="csv")

    p = sub.add_parser("mc", help="Monte Carlo experiment report")
    _global_flags(p, suppress=True)
    p.add_argument("--format", choices=("table", "csv", "jsonl"), default="table",
                   help="console format; report.csv is always written")
    p.add_argument("--hist", action="store_true", help="write z histograms")
    p.add_argument("--qq", action="store_true", help="write z QQ data")
    p.add_argument("--samples", action="store_true", help="write per-replication samples")
    p.add_argument("--ci", action="store_true", help="fill RV coverage column")

    p = sub.add_parser("ci", help="confidence-interval coverage experiment")
    _global_flags(p, suppress=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--plugin", help="quarticity estimator label or 'oracle'")

    p = sub.add_parser("decomp", help="I/II/III decomposition diagnostic")
    _global_flags(p, suppress=True)
    return parser


def _load_config(args, required: bool = True) -> Optional[RunConfig]:
    if args.config is None:
        if required:
            raise ConfigError(f"`{args.command}` requires --config")
        return None
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    return parse_config(text)


def _out_dir(args, cfg: Optional[RunConfig]) -> Path:
    out = args.out if args.out is not None else Path(cfg.output.dir if cfg else "out")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    mc = cfg.mc_config(seed=args.seed)
    path = simulate_path(mc.model, mc.sampling, mc.seed)
    target = rpt.write_text(_out_dir(args, cfg) / "path.csv", rpt.path_csv(path))
    print(f"wrote {target} ({len(path.times)} points)")
    return EXIT_OK


def _read_path_csv(file: Path):
    try:
        data = np.loadtxt(file, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read path CSV {file}: {exc}") from exc
    if data.shape[1] != 3 or data.shape[0] < 2:
        raise DataError(f"path CSV {file} must have columns time,x,c and >= 2 rows")
    return data[:, 0], data[:, 1], data[:, 2]


def _cmd_estimate(args) -> int:
    cfg = _load_config(args, required=False)
    c_ref = None
    if args.path is not None:
        times, x, c = _read_path_csv(args.path)
        s = args.substeps or (cfg.sampling_spec().substeps if cfg else 1)
        if (len(times) - 1) % s:
            raise DataError(f"path has {len(times) - 1} steps, not a multiple of substeps={s}")
        obs = x[::s]
        c_ref = c[:-1:s]
        delta_n = cfg.sampling_spec().delta_n if cfg else (times[-1] - times[0]) / (len(obs) - 1)
    else:
        if args.delta is None:
            raise ConfigError("--ticks requires --delta")
        try:
            text = Path(args.ticks).read_text()
        except OSError as exc:
            raise DataError(f"cannot read tick file {args.ticks}: {exc}") from exc
        obs, delta_n = ingest_ticks(text, args.delta, use_log=args.log)

    inc = increments(obs, delta_n)
    rule = KnRule(cfg.kn_rule.theta, cfg.kn_rule.gamma) if cfg else KnRule()
    k = args.k_n if args.k_n is not None else rule.k_n(inc.N)
    if args.estimators:
        labels = [s.strip() for s in args.estimators.split(",") if s.strip()]
    elif cfg:
        labels = list(cfg.estimators)
    else:
        labels = list(DEFAULT_ESTIMATORS)
    if c_ref is None:
        labels = [lbl for lbl in labels if not lbl.startswith(EstimatorId.USTAT.value)]

    results = []
    for label in labels:
        est = EstimatorConfig.from_label(label, k)
        try:
            res = evaluate(est, inc, c_ref, cfg.bias_factor if cfg else 1.0)
        except ValueError as exc:
            raise DataError(f"{label}: {exc}") from exc
        if not np.isfinite(res.value):
            raise NumericalError(f"{label} produced a non-finite value")
        results.append(res)
    out = _out_dir(args, cfg)
    rpt.emit_estimates(results, "csv", out / "estimates.csv")
    sys.stdout.write(rpt.emit_estimates(results, args.format))
    return EXIT_OK


def _cmd_mc(args) -> int:
    cfg = _load_config(args)
    mc = cfg.mc_config(seed=args.seed, threads=args.threads)
    out = _out_dir(args, cfg)
    report = run_experiment(mc, ci_alpha=cfg.ci.alpha if args.ci else None)
    rpt.emit_report(report, "csv", out / "report.csv")
    if args.hist or cfg.output.histogram:
        for label, s in report.samples.items():
            rpt.write_histogram(s.z, out / f"hist_{label.replace(':', '_')}.csv")
    if args.qq or cfg.output.qq:
        for label, s in report.samples.items():
            rpt.write_qq(s.z, out / f"qq_{label.replace(':', '_')}.csv")
    if args.samples or cfg.output.samples:
        rpt.write_samples(report, out / "samples.csv")
    sys.stdout.write(rpt.emit_report(report, args.format))
    return EXIT_OK


def _cmd_ci(args) -> int:
    cfg = _load_config(args)
    mc = cfg.mc_config(seed=args.seed, threads=args.threads)
    alpha = args.alpha if args.alpha is not None else cfg.ci.alpha
    plugin = args.plugin or cfg.ci.plugin
    try:
        result = ci_experiment(mc, alpha, plugin)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = rpt.coverage_csv(result)
    rpt.write_text(_out_dir(args, cfg) / "ci.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_decomp(args) -> int:
    cfg = _load_config(args)
    mc = cfg.mc_config(seed=args.seed, threads=args.threads)
    diag = run_decomposition(mc)
    out = _out_dir(args, cfg)
    rpt.write_text(out / "decomp.csv", rpt.decomposition_csv(diag))
    cov = rpt.covariance_csv(diag)
    rpt.write_text(out / "decomp_cov.csv", cov)
    total = diag.terms.sum(axis=1)
    sys.stdout.write(
        f"k_n={diag.k_n} M={len(total)} var(I+II+III)={np.var(total, ddof=1) if len(total) > 1 else 0.0:.6g} "
        f"max identity error={diag.max_identity_error:.3g}\n" + cov
    )
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "mc": _cmd_mc,
    "ci": _cmd_ci,
    "decomp": _cmd_decomp,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
