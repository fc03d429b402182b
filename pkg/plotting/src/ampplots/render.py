"""Render experiment CSVs into the paper-style error-rate figures.

Input files follow the simulator's result schema (``algorithm, sweep_param,
sweep_value, p_miss, p_miss_ci, p_fa, p_fa_ci, eib_err, eib_err_ci,
tau_sq_final, trials, diverged``) or, for ``se_trajectory``, the state
evolution export (``iter, tau_sq_se[, tau_sq_empirical]``).  Rendering is
deterministic: a fixed style, no timestamps, so identical inputs give
byte-identical images.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

DISPLAY_NAMES = {
    "AMP_NO_EIB": "AMP without EIB",
    "AMP_EIB": "AMP with EIB",
    "MAMP_EIB": "M-AMP with EIB",
}

# columns each figure kind needs in its input CSVs
REQUIRED_COLUMNS = {
    "miss_fa_vs_L": ["algorithm", "sweep_value", "p_miss", "p_miss_ci", "p_fa", "p_fa_ci"],
    "miss_fa_vs_M": ["algorithm", "sweep_value", "p_miss", "p_miss_ci", "p_fa", "p_fa_ci"],
    "eib_err_vs_M": ["algorithm", "sweep_value", "eib_err", "eib_err_ci"],
    "se_trajectory": ["iter", "tau_sq_se"],
}

X_LABELS = {
    "miss_fa_vs_L": "pilot sequence length L",
    "miss_fa_vs_M": "number of antennas M",
    "eib_err_vs_M": "number of antennas M",
    "se_trajectory": "iteration",
}

Y_LABELS = {
    "miss_fa_vs_L": "error probability",
    "miss_fa_vs_M": "error probability",
    "eib_err_vs_M": "EIB error probability",
    "se_trajectory": "effective noise variance tau^2",
}

_STYLE = {
    "figure.figsize": (7.0, 5.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 5,
}

_COLORS = {"AMP_NO_EIB": "tab:blue", "AMP_EIB": "tab:red", "MAMP_EIB": "tab:green"}
_FALLBACK_COLORS = ["tab:purple", "tab:orange", "tab:brown", "tab:pink", "tab:gray"]


class PlotSchemaError(ValueError):
    """The input CSV does not carry the columns the figure kind needs."""


@dataclass
class PlotSpec:
    inputs: list[str]
    kind: str
    out: str
    show_ci: bool = True
    title: str | None = None
    y_limits: tuple[float, float] | None = None
    series_labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in REQUIRED_COLUMNS:
            raise PlotSchemaError(
                f"unknown figure kind {self.kind!r}; one of {sorted(REQUIRED_COLUMNS)}"
            )
        if not self.inputs:
            raise PlotSchemaError("at least one input CSV is required")


def _read_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    return header, rows


def _check_schema(spec: PlotSpec, header, path):
    missing = [col for col in REQUIRED_COLUMNS[spec.kind] if col not in header]
    if missing:
        raise PlotSchemaError(
            f"{path}: missing columns for kind {spec.kind!r}: {', '.join(missing)}"
        )


def _fnum(text):
    return math.nan if text in ("", None) else float(text)


def _series_color(name, taken):
    base = _COLORS.get(name.split(" @ ")[0])
    if base is not None:
        return base
    return _FALLBACK_COLORS[len(taken) % len(_FALLBACK_COLORS)]


def _display(algorithm, tag):
    name = DISPLAY_NAMES.get(algorithm, algorithm)
    return f"{name} @ {tag}" if tag else name


def _build_error_axes(spec: PlotSpec, ax):
    """Error-rate curves: one series per (algorithm [, file]) with CI whiskers."""
    multi = len(spec.inputs) > 1
    drew = []
    for path in spec.inputs:
        header, rows = _read_csv(path)
        _check_schema(spec, header, path)
        tag = Path(path).stem if multi else ""
        algorithms = sorted({r["algorithm"] for r in rows})
        for alg in algorithms:
            pts = sorted(
                (float(r["sweep_value"]), r) for r in rows if r["algorithm"] == alg
            )
            xs = np.array([x for x, _ in pts])
            color = _series_color(_display(alg, tag), drew)
            if spec.kind == "eib_err_vs_M":
                ys = np.array([_fnum(r["eib_err"]) for _, r in pts])
                cis = np.array([_fnum(r["eib_err_ci"]) for _, r in pts])
                keep = ~np.isnan(ys)
                if not keep.any():
                    continue
                ax.errorbar(
                    xs[keep], ys[keep], yerr=cis[keep] if spec.show_ci else None,
                    marker="o", capsize=3, label=_display(alg, tag), color=color,
                )
                drew.append(_display(alg, tag))
            else:
                for metric, ci_col, style, suffix in (
                    ("p_miss", "p_miss_ci", "-o", "miss"),
                    ("p_fa", "p_fa_ci", "--s", "false alarm"),
                ):
                    ys = np.array([_fnum(r[metric]) for _, r in pts])
                    cis = np.array([_fnum(r[ci_col]) for _, r in pts])
                    keep = ~np.isnan(ys)
                    if not keep.any():
                        continue
                    label = f"{_display(alg, tag)} ({suffix})"
                    ax.errorbar(
                        xs[keep], ys[keep], yerr=cis[keep] if spec.show_ci else None,
                        fmt=style, capsize=3, label=label, color=color,
                        alpha=1.0 if suffix == "miss" else 0.65,
                    )
                    drew.append(label)
    return drew


def _build_se_axes(spec: PlotSpec, ax):
    drew = []
    multi = len(spec.inputs) > 1
    for path in spec.inputs:
        header, rows = _read_csv(path)
        _check_schema(spec, header, path)
        tag = f" @ {Path(path).stem}" if multi else ""
        its = np.array([float(r["iter"]) for r in rows])
        se = np.array([_fnum(r["tau_sq_se"]) for r in rows])
        if its.size:
            ax.plot(its, se, "-o", label=f"state evolution{tag}")
            drew.append("se")
        if "tau_sq_empirical" in header and its.size:
            emp = np.array([_fnum(r["tau_sq_empirical"]) for r in rows])
            ax.plot(its, emp, "--s", label=f"simulated{tag}")
            drew.append("emp")
    return drew


def build_figure(spec: PlotSpec):
    """Assemble the matplotlib Figure for a spec (introspectable by tests)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        if spec.kind == "se_trajectory":
            drew = _build_se_axes(spec, ax)
        else:
            drew = _build_error_axes(spec, ax)
        ax.set_yscale("log")
        ax.set_xlabel(X_LABELS[spec.kind])
        ax.set_ylabel(Y_LABELS[spec.kind])
        if spec.y_limits:
            ax.set_ylim(*spec.y_limits)
        if spec.title:
            ax.set_title(spec.title)
        if drew:
            ax.legend(loc="best", fontsize=9)
        else:
            print(f"warning: no data rows in {spec.inputs}; rendering empty axes",
                  file=sys.stderr)
        fig.tight_layout()
    return fig


def render(spec: PlotSpec) -> str:
    """Render the figure to ``spec.out``; deterministic for identical inputs."""
    fig = build_figure(spec)
    try:
        fig.savefig(spec.out, metadata={"Software": "ampplots"})
    finally:
        plt.close(fig)
    return spec.out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ampdetect-plot",
        description="Render ampdetect experiment CSVs as log-scale error-rate figures.",
    )
    parser.add_argument("inputs", nargs="+", help="input CSV file(s)")
    parser.add_argument("--kind", required=True, choices=sorted(REQUIRED_COLUMNS))
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--no-ci", action="store_true", help="hide CI whiskers")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    try:
        spec = PlotSpec(inputs=args.inputs, kind=args.kind, out=args.out,
                        show_ci=not args.no_ci, title=args.title)
        render(spec)
    except (PlotSchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
