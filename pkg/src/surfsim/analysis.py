"""Power-law fits, the effective coherent-error model and logical lifetimes."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

DEFAULT_FIT_RANGE = (1e-3, 3e-3)
STEPS_PER_ROUND = 11


class FitError(ValueError):
    pass


class SaturationWarning(UserWarning):
    """The predicted logical error probability reached 1."""


@dataclass(frozen=True)
class PowerLawFit:
    A: float
    xi: float
    fit_range: tuple[float, float]
    residual: float  # sum of squared log-space residuals
    n_points: int = 0


@dataclass(frozen=True)
class EffectiveModel:
    alpha: float
    B_values: tuple[tuple[float, float], ...] = ()

    def B(self, c: float) -> float:
        return 1.0 + self.alpha * c * c


@dataclass(frozen=True)
class LifetimeParams:
    t_g: float
    t_c: float
    d: int
    c: float
    A: float
    xi: float
    alpha: float
    n_steps: int = STEPS_PER_ROUND

    def __post_init__(self):
        if self.t_g <= 0 or self.t_c <= 0:
            raise ValueError("gate and coherence times must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


def _usable(points, fit_range) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, hi = fit_range
    keep = []
    for pt in points:
        p, pl = float(pt[0]), float(pt[1])
        se = float(pt[2]) if len(pt) > 2 else float("nan")
        if not lo <= p <= hi:
            continue
        if pl <= 0:
            warnings.warn(f"point p={p:g} has p_L=0 and is left out of the log-log fit", stacklevel=3)
            continue
        keep.append((p, pl, se))
    arr = np.array(keep, dtype=float).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def fit_power_law(points: Iterable[Sequence[float]], fit_range: tuple[float, float] = DEFAULT_FIT_RANGE,
                  weighted: bool = False) -> PowerLawFit:
    """Least squares of log p_L = log A + xi log p over points ``(p, p_L[, stderr])``.

    With ``weighted`` each point counts with weight (p_L / stderr)^2, the
    inverse variance of log p_L to first order."""
    p, pl, se = _usable(list(points), fit_range)
    if len(p) < 3:
        raise FitError(f"need at least 3 points with p_L > 0 in {fit_range}, got {len(p)}")
    x, y = np.log(p), np.log(pl)
    if weighted:
        if not np.all(np.isfinite(se)) or np.any(se <= 0):
            raise FitError("weighted fit needs a positive stderr for every point")
        w = (pl / se) ** 2
    else:
        w = np.ones_like(x)
    design = np.column_stack([np.ones_like(x), x]) * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(design, y * np.sqrt(w), rcond=None)
    resid = float(np.sum((y - coef[0] - coef[1] * x) ** 2))
    return PowerLawFit(float(np.exp(coef[0])), float(coef[1]), (float(fit_range[0]), float(fit_range[1])), resid, len(p))


def fit_scale_factor(points: Iterable[Sequence[float]], fit: PowerLawFit,
                     fit_range: Optional[tuple[float, float]] = None) -> float:
    """One-parameter fit of p_L = A (B p)^xi with A and xi held fixed."""
    p, pl, _ = _usable(list(points), fit_range or fit.fit_range)
    if len(p) == 0:
        raise FitError("no usable points for the scale-factor fit")
    log_b = np.mean(np.log(pl) - math.log(fit.A) - fit.xi * np.log(p)) / fit.xi
    return float(np.exp(log_b))


def fit_effective_alpha(results_by_c: Mapping[float, Iterable[Sequence[float]]], fit: PowerLawFit,
                        fit_range: Optional[tuple[float, float]] = None) -> EffectiveModel:
    """Per-c scale factors B, then alpha from B = 1 + alpha c^2 by least squares."""
    cs = sorted(float(c) for c in results_by_c)
    if 0.0 not in cs:
        raise FitError("the effective-model fit needs a c = 0 series")
    if len(cs) < 3:
        raise FitError(f"need at least 3 distinct c values, got {len(cs)}")
    by_c = {float(c): pts for c, pts in results_by_c.items()}
    b_values = tuple((c, fit_scale_factor(by_c[c], fit, fit_range)) for c in cs)
    c2 = np.array([c * c for c, _ in b_values])
    b = np.array([v for _, v in b_values])
    alpha = float(np.sum(c2 * (b - 1.0)) / np.sum(c2 * c2))
    return EffectiveModel(alpha, b_values)


def predict_p_L(p: float, c: float, model: EffectiveModel | float, fit: PowerLawFit) -> float:
    """A ((1 + alpha c^2) p)^xi."""
    alpha = model.alpha if isinstance(model, EffectiveModel) else float(model)
    return fit.A * ((1.0 + alpha * c * c) * p) ** fit.xi


def p_from_times(t_g: float, t_c: float) -> float:
    """Error probability of one gate of duration t_g against coherence time t_c."""
    if t_g <= 0 or t_c <= 0:
        raise ValueError("times must be positive")
    return -math.expm1(-t_g / t_c)


def _ratio(x: float, c: float, A: float, xi: float, alpha: float, d: int, n_steps: int) -> float:
    # t_L / t_c as a function of x = t_g / t_c
    p_l = A * ((1.0 + alpha * c * c) * -math.expm1(-x)) ** xi
    return d * n_steps * x / p_l


def lifetime_ratio(params: LifetimeParams) -> float:
    """t_L / t_c with t_L = d * n_steps * t_g / p_L."""
    x = params.t_g / params.t_c
    fit = PowerLawFit(params.A, params.xi, DEFAULT_FIT_RANGE, 0.0)
    p_l = predict_p_L(p_from_times(params.t_g, params.t_c), params.c, params.alpha, fit)
    if p_l >= 1.0:
        warnings.warn(f"predicted p_L = {p_l:.3g} >= 1 at t_g/t_c = {x:g}", SaturationWarning, stacklevel=2)
    return params.d * params.n_steps * x / p_l


def break_even(c: float, A: float, xi: float, alpha: float, d: int, n_steps: int = STEPS_PER_ROUND,
               bracket: tuple[float, float] = (1e-7, 1.0)) -> float:
    """t_g / t_c at which t_L = t_c."""
    f = lambda x: math.log(_ratio(x, c, A, xi, alpha, d, n_steps))  # noqa: E731
    lo, hi = bracket
    if f(lo) * f(hi) > 0:
        raise ValueError(f"no break-even inside t_g/t_c in {bracket} for c={c}")
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-13)


@dataclass
class LifetimeGrid:
    x: np.ndarray  # t_g / t_c values
    c: np.ndarray
    ratio: np.ndarray  # shape (len(c), len(x))
    params: dict = field(default_factory=dict)


def lifetime_grid(x_values: Sequence[float], c_values: Sequence[float], A: float, xi: float, alpha: float,
                  d: int, n_steps: int = STEPS_PER_ROUND) -> LifetimeGrid:
    x = np.asarray(x_values, dtype=float)
    c = np.asarray(c_values, dtype=float)
    ratio = np.array([[_ratio(xv, cv, A, xi, alpha, d, n_steps) for xv in x] for cv in c])
    return LifetimeGrid(x, c, ratio, dict(A=A, xi=xi, alpha=alpha, d=d, n_steps=n_steps))


def fit_report(fit: PowerLawFit, model: Optional[EffectiveModel] = None) -> str:
    lines = [
        f"A = {fit.A:.6g}",
        f"xi = {fit.xi:.6g}",
        f"residual = {fit.residual:.6g}",
        f"fit_range = {fit.fit_range[0]:g} {fit.fit_range[1]:g}",
        f"n_points = {fit.n_points}",
    ]
    if model is not None:
        for c, b in model.B_values:
            lines.append(f"B[c={c:g}] = {b:.6g}")
        lines.append(f"alpha = {model.alpha:.6g}")
    return "\n".join(lines) + "\n"


def group_by_c(rows: Iterable[Mapping[str, float]]) -> dict[float, list[tuple[float, float, float]]]:
    """Results-CSV rows as ``{c: [(p, p_L, stderr), ...]}`` sorted by p."""
    out: dict[float, list] = {}
    for r in rows:
        out.setdefault(float(r["c"]), []).append((float(r["p"]), float(r["p_L"]), float(r["stderr"])))
    return {c: sorted(v) for c, v in sorted(out.items())}


# plotting -----------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_pl_vs_p(by_c: Mapping[float, Sequence[Sequence[float]]], fit: Optional[PowerLawFit],
                 model: Optional[EffectiveModel], path: Path | str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, (c, pts) in enumerate(sorted(by_c.items())):
        pts = [pt for pt in pts if pt[1] > 0]
        if not pts:
            continue
        p, pl, se = (np.array(v) for v in zip(*pts))
        line = ax.errorbar(p, pl, yerr=se, fmt="o", ms=4, capsize=2, label=f"c = {c:g}")
        if fit is not None:
            grid = np.geomspace(p.min(), p.max(), 50)
            alpha = model.alpha if model is not None else 0.0
            ax.plot(grid, [predict_p_L(g, c, alpha, fit) for g in grid], ":", color=line[0].get_color())
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("physical error probability p")
    ax.set_ylabel("logical error probability $p_L$")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_b_vs_c(model: EffectiveModel, path: Path | str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    cs, bs = zip(*model.B_values)
    ax.plot(cs, bs, "o", label="fitted B")
    grid = np.linspace(0, max(cs), 100)
    ax.plot(grid, 1 + model.alpha * grid**2, "-", label=f"1 + {model.alpha:.3g} c$^2$")
    ax.set_xlabel("coherent ratio c")
    ax.set_ylabel("B")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_lifetime(grid: LifetimeGrid, path: Path | str) -> Path:
    plt = _pyplot()
    from matplotlib.colors import ListedColormap

    fig, ax = plt.subplots(figsize=(6, 4.5))
    logr = np.log10(grid.ratio)
    mesh = ax.pcolormesh(grid.x, grid.c, logr, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 $t_L/t_c$")
    below = np.ma.masked_where(grid.ratio >= 1.0, np.ones_like(grid.ratio))
    ax.pcolormesh(grid.x, grid.c, below, shading="auto", cmap=ListedColormap(["0.85"]), alpha=0.9)
    ax.contour(grid.x, grid.c, grid.ratio, levels=[1.0], colors="red", linewidths=1.5)
    ax.set_xscale("log")
    ax.set_xlabel("$t_g/t_c$")
    ax.set_ylabel("coherent ratio c")
    ax.set_title("grey: $t_L < t_c$, red: $t_L = t_c$", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def write_lifetime_csv(grid: LifetimeGrid, path: Path | str) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_g_over_t_c", "c", "t_L_over_t_c"])
        for i, c in enumerate(grid.c):
            for j, x in enumerate(grid.x):
                w.writerow([repr(float(x)), repr(float(c)), repr(float(grid.ratio[i, j]))])
    return Path(path)


def write_b_csv(model: EffectiveModel, path: Path | str) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["c", "B", "B_model"])
        for c, b in model.B_values:
            w.writerow([repr(c), repr(b), repr(model.B(c))])
    return Path(path)


def emit_outputs(rows: Sequence[Mapping[str, float]], fit: Optional[PowerLawFit], model: Optional[EffectiveModel],
                 grid: Optional[LifetimeGrid], out_dir: Path | str) -> list[Path]:
    """Write the fit report, CSV mirrors and the figures into ``out_dir``."""
    if not rows and grid is None:
        raise ValueError("nothing to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if rows:
        from .experiment import RESULTS_HEADER

        with open(out / "results.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULTS_HEADER)
            for r in rows:
                w.writerow([r[k] for k in RESULTS_HEADER])
        files.append(out / "results.csv")
        files.append(plot_pl_vs_p(group_by_c(rows), fit, model, out / "p_L_vs_p.png"))
    if fit is not None:
        (out / "fit_report.txt").write_text(fit_report(fit, model))
        files.append(out / "fit_report.txt")
    if model is not None:
        files.append(write_b_csv(model, out / "B_vs_c.csv"))
        files.append(plot_b_vs_c(model, out / "B_vs_c.png"))
    if grid is not None:
        files.append(write_lifetime_csv(grid, out / "lifetime.csv"))
        files.append(plot_lifetime(grid, out / "lifetime.png"))
    return files
