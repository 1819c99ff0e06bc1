"""Report emission: summary tables, CSV/JSON-lines files, histogram and QQ data.

All report numbers are written with 12 significant digits. Path CSVs use
17 so that a simulate/estimate round trip is exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from .estimators import EstimateResult
from .mc_harness import CoverageResult, DecompositionDiagnostic, McReport
from .process_sim import SimulatedPath

REPORT_COLUMNS = (
    "estimator", "n", "k_n", "M", "mean_e", "var_e", "skew_z", "kurt_z",
    "ks", "kappa_paper", "kappa_derived", "coverage",
)
ESTIMATE_COLUMNS = ("estimator", "value", "delta_n", "k_n", "N")
HIST_BINS = 50
HIST_RANGE = (-5.0, 5.0)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.12g}"


def _csv(rows: Iterable[Sequence], header: Sequence[str]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def report_rows(report: McReport) -> List[list]:
    return [[getattr(s, col) for col in REPORT_COLUMNS] for s in report.summaries]


def report_csv(report: McReport) -> str:
    return _csv(report_rows(report), REPORT_COLUMNS)


def report_jsonl(report: McReport) -> str:
    lines = []
    for row in report_rows(report):
        rec = {}
        for col, val in zip(REPORT_COLUMNS, row):
            if val is None or isinstance(val, str) or isinstance(val, int):
                rec[col] = val
            else:
                v = float(fmt(val))
                rec[col] = None if math.isnan(v) else v
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def report_table(report: McReport) -> str:
    head = (
        f"n={report.n}  k_n={report.k_n}  delta_n={report.delta_n:.6g}  M={report.M}\n"
        f"{'estimator':<14}{'mean_e':>10}{'var_e':>10}{'kappa':>10}{'kappa_d':>9}"
        f"{'skew_z':>9}{'kurt_z':>9}{'ks':>8}{'mean_e_full':>13}{'coverage':>10}"
    )
    lines = [head]
    for s in report.summaries:
        cov = "" if s.coverage is None else f"{s.coverage:.4f}"
        lines.append(
            f"{s.estimator:<14}{s.mean_e:>10.4f}{s.var_e:>10.4f}{s.kappa_paper:>10.4f}"
            f"{s.kappa_derived:>9.4g}{s.skew_z:>9.3f}{s.kurt_z:>9.3f}{s.ks:>8.4f}"
            f"{s.mean_e_full:>13.4f}{cov:>10}"
        )
    lines.extend(f"note: {n}" for n in report.notes)
    return "\n".join(lines) + "\n"


def emit_report(report: McReport, fmt_name: str = "table", path: Optional[Path] = None) -> str:
    """Render ``report`` as ``table``, ``csv`` or ``jsonl``; write it if ``path`` is given."""
    renderers = {"table": report_table, "csv": report_csv, "jsonl": report_jsonl}
    if fmt_name not in renderers:
        raise ValueError(f"unknown report format {fmt_name!r}")
    text = renderers[fmt_name](report)
    if path is not None:
        _write(path, text)
    return text


def estimates_csv(results: Sequence[EstimateResult]) -> str:
    rows = [[r.estimator_id, r.value, r.delta_n, r.k_n, r.N] for r in results]
    return _csv(rows, ESTIMATE_COLUMNS)


def emit_estimates(results: Sequence[EstimateResult], fmt_name: str = "csv",
                   path: Optional[Path] = None) -> str:
    if fmt_name == "jsonl":
        text = "\n".join(
            json.dumps({"estimator": r.estimator_id, "value": float(fmt(r.value)),
                        "delta_n": r.delta_n, "k_n": r.k_n, "N": r.N})
            for r in results
        ) + "\n"
    elif fmt_name == "table":
        text = "".join(f"{r.estimator_id:<14}{fmt(r.value):>22}\n" for r in results)
    else:
        text = estimates_csv(results)
    if path is not None:
        _write(path, text)
    return text


def histogram_rows(z) -> np.ndarray:
    """``(bin_left, bin_right, count)`` over 50 equal bins on [-5, 5]."""
    z = np.asarray(z, dtype=float)
    counts, edges = np.histogram(z[np.isfinite(z)], bins=HIST_BINS, range=HIST_RANGE)
    return np.column_stack([edges[:-1], edges[1:], counts])


def qq_rows(z) -> np.ndarray:
    """Standard normal quantiles at ``(i - 0.5) / M`` against sorted samples."""
    z = np.sort(np.asarray(z, dtype=float))
    m = len(z)
    levels = (np.arange(1, m + 1) - 0.5) / m
    return np.column_stack([ndtri(levels), z])


def write_histogram(z, path: Path) -> Path:
    rows = [[a, b, int(c)] for a, b, c in histogram_rows(z)]
    return _write(path, _csv(rows, ("bin_left", "bin_right", "count")))


def write_qq(z, path: Path) -> Path:
    return _write(path, _csv(qq_rows(z).tolist(), ("theoretical_quantile", "sample_quantile")))


def write_samples(report: McReport, path: Path) -> Path:
    rows = []
    for label, s in report.samples.items():
        for r in range(len(s.e)):
            rows.append([int(s.replication[r]), label, s.estimate[r], s.target[r], s.e[r], s.z[r]])
    rows.sort(key=lambda row: row[0])
    return _write(path, _csv(rows, ("replication", "estimator", "estimate", "target", "e", "z")))


def coverage_csv(result: CoverageResult) -> str:
    row = [result.plugin, result.alpha, result.M, result.coverage,
           result.negative_plugins, result.mean_half_width]
    return _csv([row], ("plugin", "alpha", "M", "coverage", "negative_plugins", "mean_half_width"))


def decomposition_csv(diag: DecompositionDiagnostic) -> str:
    rows = [
        [r, *diag.terms[r], float(diag.terms[r].sum()), diag.standardized_error[r]]
        for r in range(len(diag.terms))
    ]
    return _csv(rows, ("replication", "term_I", "term_II", "term_III", "total", "standardized_error"))


def covariance_csv(diag: DecompositionDiagnostic) -> str:
    names = ("I", "II", "III")
    rows = [[names[i], *diag.covariance[i]] for i in range(3)]
    return _csv(rows, ("term", "I", "II", "III"))


def path_csv(path: SimulatedPath) -> str:
    lines = ["time,x,c"]
    lines.extend(
        f"{t:.17g},{x:.17g},{c:.17g}" for t, x, c in zip(path.times, path.x, path.c)
    )
    return "\n".join(lines) + "\n"


def write_text(path: Path, text: str) -> Path:
    return _write(path, text)
