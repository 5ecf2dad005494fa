"""Report rendering: text tables, delimited output, series files, figures.

Each experiment report turns into (a) a human-readable table, (b) a CSV
with one row per measurement, (c) two-column plot-data series, and when
figures are requested (the CLI report path) (d) PNG figures rendered next
to the delimited output. Every file starts with the effective config as
``# key=value`` comment lines.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .experiments import KernelTimingReport, RateReport, RecoveryReport

__all__ = [
    "rate_table_text",
    "kernel_table_text",
    "recovery_table_text",
    "write_rate_report",
    "write_kernel_report",
    "write_recovery_report",
]


def _fmt_iters(v, cap=None) -> str:
    if v is None:
        return f">{cap}" if cap else "---"
    return str(v)


def _header_lines(echo: dict) -> str:
    return "".join(f"# {k}={v}\n" for k, v in echo.items())


def _write_csv(path: Path, echo: dict, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header_lines(echo))
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _write_series(path: Path, echo: dict, xs, ys) -> None:
    """Two-column iterate-vs-error plot data."""
    with open(path, "w", newline="") as fh:
        fh.write(_header_lines(echo))
        writer = csv.writer(fh)
        writer.writerow(["iter", "suboptimality"])
        for x, y in zip(xs, ys):
            writer.writerow([x, repr(float(y))])


# ---------------------------------------------------------------------------
# rate experiment


def rate_table_text(report: RateReport, gd_cap: int = 5000) -> str:
    """Iteration-count table in the convergence-rate benchmark layout."""
    cols = [f"p={_p_label(r.p)}" for r in report.rows]
    lines = []
    lines.append("Number of iterations (rel. precision 1e-08)")
    header = f"{'Algorithm':28s}" + "".join(f"{c:>12s}" for c in cols)
    lines.append(header)
    lines.append("-" * len(header))
    dual = [f"{r.dual_iters}({r.dual_backtracks})" for r in report.rows]
    lines.append(f"{'dual GD + linesearch':28s}" + "".join(f"{v:>12s}" for v in dual))
    gd = [_fmt_iters(r.gd_iters, gd_cap) for r in report.rows]
    lines.append(f"{'primal GD + linesearch':28s}" + "".join(f"{v:>12s}" for v in gd))
    fista = [_fmt_iters(r.fista_iters) for r in report.rows]
    lines.append(f"{'primal FISTA':28s}" + "".join(f"{v:>12s}" for v in fista))
    return "\n".join(lines) + "\n"


def _p_label(p: float) -> str:
    for num, den in ((4, 3), (5, 4)):
        if abs(p - num / den) < 1e-9:
            return f"{num}/{den}"
    return f"{p:g}"


def write_rate_report(report: RateReport, outdir, figures: bool = True) -> list[Path]:
    """Emit table, CSV, per-p series files, and the convergence figure."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    echo = report.config_echo()
    written = []

    table = outdir / "rates.txt"
    table.write_text(_header_lines(echo) + rate_table_text(report))
    written.append(table)

    rows = [
        [
            _p_label(r.p), r.q, r.dual_iters, r.dual_backtracks,
            "" if r.gd_iters is None else r.gd_iters,
            "" if r.fista_iters is None else r.fista_iters,
            repr(r.lambda_star), f"{r.dual_wall_s:.3f}", f"{r.gd_wall_s:.3f}",
            f"{r.fista_wall_s:.3f}",
        ]
        for r in report.rows
    ]
    csv_path = outdir / "rates.csv"
    _write_csv(
        csv_path, echo,
        ["p", "q", "dual_iters", "dual_backtracks", "gd_iters", "fista_iters",
         "lambda_star", "dual_wall_s", "gd_wall_s", "fista_wall_s"],
        rows,
    )
    written.append(csv_path)

    for r in report.rows:
        series = outdir / f"rates_dual_p{_p_label(r.p).replace('/', '_')}.csv"
        _write_series(series, echo, range(len(r.dual_series)), r.dual_series)
        written.append(series)
        if r.fista_series is not None:
            series = outdir / f"rates_fista_p{_p_label(r.p).replace('/', '_')}.csv"
            _write_series(series, echo, range(len(r.fista_series)), r.fista_series)
            written.append(series)

    if figures:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        for r in report.rows:
            sub = np.maximum(np.asarray(r.dual_series), 1e-17)
            ax.semilogy(sub, label=f"dual, p={_p_label(r.p)}")
            if r.fista_series is not None:
                sub = np.maximum(np.asarray(r.fista_series), 1e-17)
                ax.semilogy(sub, "--", label=f"FISTA, p={_p_label(r.p)}")
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective suboptimality")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig_path = outdir / "rates.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written.append(fig_path)
    return written


# ---------------------------------------------------------------------------
# kernel timing experiment


def kernel_table_text(report: KernelTimingReport) -> str:
    lines = []
    lines.append("The dual algorithm with and without tensor kernels (p=4/3).")
    header = f"{'Algorithm':44s}{'CPU time (sec)':>16s}{'iterations':>12s}"
    lines.append(header)
    lines.append("-" * len(header))
    lines.append(f"{'build the Gram tensor':44s}{report.gram_build_s:>16.2f}{'---':>12s}")
    lines.append(
        f"{'dual GD + linesearch (with K)':44s}{report.kernel_solve_s:>16.2f}"
        f"{report.kernel_iters:>12d}"
    )
    lines.append(
        f"{'dual GD + linesearch (without K)':44s}{report.feature_solve_s:>16.2f}"
        f"{report.feature_iters:>12d}"
    )
    lines.append("")
    lines.append(f"feature dimension N = {report.feature_dim}")
    lines.append(
        f"crossover rule n <= 2 N^(1/3): {report.crossover} "
        f"(n={report.spec.n}, 2 N^(1/3)={2 * report.feature_dim ** (1 / 3):.1f})"
    )
    lines.append(
        f"per-iteration gradient multiplies: {report.per_iter_gradient_mults:.0f} "
        f"(pair-matvec model n^2(n+1)^2/4 = {report.pair_matvec_budget:.0f})"
    )
    lines.append(f"max |alpha_kernel - alpha_feature| = {report.alpha_max_diff:.3e}")
    return "\n".join(lines) + "\n"


def write_kernel_report(report: KernelTimingReport, outdir, figures: bool = True) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    echo = report.config_echo()
    written = []
    table = outdir / "kernel_timing.txt"
    table.write_text(_header_lines(echo) + kernel_table_text(report))
    written.append(table)
    csv_path = outdir / "kernel_timing.csv"
    _write_csv(
        csv_path, echo,
        ["phase", "wall_s", "iterations", "multiplies"],
        [
            ["gram_build", f"{report.gram_build_s:.4f}", "", report.gram_build_evals],
            ["dual_with_kernel", f"{report.kernel_solve_s:.4f}", report.kernel_iters,
             int(report.per_iter_gradient_mults * max(1, report.kernel_iters))],
            ["dual_without_kernel", f"{report.feature_solve_s:.4f}", report.feature_iters, ""],
        ],
    )
    written.append(csv_path)
    if figures:
        fig, ax = plt.subplots(figsize=(5.6, 3.6))
        phases = ["Gram build", "dual (with K)", "dual (without K)"]
        walls = [report.gram_build_s, report.kernel_solve_s, report.feature_solve_s]
        ax.barh(phases, walls, color=["#888888", "#336699", "#993333"])
        ax.set_xlabel("wall time (s)")
        fig.tight_layout()
        fig_path = outdir / "kernel_timing.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written.append(fig_path)
    return written


# ---------------------------------------------------------------------------
# recovery experiment


def recovery_table_text(report: RecoveryReport) -> str:
    lines = []
    lines.append(
        f"Support recovery: n={report.spec.n}, d={report.spec.d}, "
        f"k={report.spec.k}, p={_p_label(report.p)}, top-{report.top_k} of |w|"
    )
    header = f"{'gamma':>10s}{'median overlap':>16s}{'mean overlap':>14s}{'median shrink':>15s}"
    lines.append(header)
    lines.append("-" * len(header))
    for g in report.gammas:
        ovs = [r.overlap for r in report.runs if r.gamma == g]
        shr = [r.shrinkage_ratio for r in report.runs if r.gamma == g]
        lines.append(
            f"{g:>10g}{report.median_overlap[g]:>16.3f}{np.mean(ovs):>14.3f}"
            f"{np.median(shr):>15.3e}"
        )
    lines.append(f"best gamma: {report.best_gamma:g} "
                 f"(median overlap {report.median_overlap[report.best_gamma]:.3f})")
    return "\n".join(lines) + "\n"


def write_recovery_report(report: RecoveryReport, outdir, figures: bool = True) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    echo = report.config_echo()
    written = []
    table = outdir / "recovery.txt"
    table.write_text(_header_lines(echo) + recovery_table_text(report))
    written.append(table)
    csv_path = outdir / "recovery.csv"
    _write_csv(
        csv_path, echo,
        ["seed", "gamma", "overlap", "shrinkage_ratio", "support_true", "support_est"],
        [
            [r.seed, r.gamma, f"{r.overlap:.6f}", repr(r.shrinkage_ratio),
             " ".join(map(str, r.support_true)), " ".join(map(str, r.support_est))]
            for r in report.runs
        ],
    )
    written.append(csv_path)

    # stem-style plot data for the best-gamma first-seed estimate
    best = next(r for r in report.runs if r.gamma == report.best_gamma)
    series = outdir / "recovery_west.csv"
    with open(series, "w", newline="") as fh:
        fh.write(_header_lines(echo))
        writer = csv.writer(fh)
        writer.writerow(["index", "w_true", "w_est"])
        for j in range(best.w_est.size):
            writer.writerow([j, repr(float(best.w_true[j])), repr(float(best.w_est[j]))])
    written.append(series)

    if figures:
        fig, axes = plt.subplots(2, 1, figsize=(7.2, 4.8), sharex=True)
        axes[0].stem(best.w_true, markerfmt=" ", basefmt="k-")
        axes[0].set_ylabel("true w")
        axes[1].stem(best.w_est, markerfmt=" ", basefmt="k-")
        axes[1].set_ylabel("estimated w")
        axes[1].set_xlabel("coordinate")
        axes[0].set_title(
            f"seed {best.seed}, gamma={best.gamma:g}, overlap {best.overlap:.2f}"
        )
        fig.tight_layout()
        fig_path = outdir / "recovery.png"
        fig.savefig(fig_path, dpi=150)
        plt.close(fig)
        written.append(fig_path)
    return written
