"""Risk-minimizing predictions and the bias structure they induce.

Under expected cross-entropy the optimum is closed-form: predict every
region's true foreground probability. Under expected soft-Dice the optimum
must be located numerically; for the canonical scenarios it sits at one of
the endpoints 0 or 1, flipping from 0 to 1 as the true probability crosses
a switch point. The gap between the optimizer and the true probability,
scaled by the uncertain volume, is the systematic volume bias.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .regions import RegionModel, ScenarioSpec, expand_scenario
from .risk import PredictionAssignment, expected_ce, expected_sd_binomial, scenario_prediction

__all__ = [
    "RiskCurve",
    "BiasPoint",
    "SwitchPoint",
    "SdMinimum",
    "golden_section",
    "ce_minimizer",
    "sd_minimizer",
    "risk_curve",
    "bias_curve",
    "find_switch_point",
]

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # 1/phi


@dataclass(frozen=True)
class RiskCurve:
    """Sampled expected loss as a function of the shared uncertain prediction."""

    p_tilde: np.ndarray
    expected_loss: np.ndarray
    scenario: ScenarioSpec
    loss_kind: str  # "ce" | "sd"

    def __post_init__(self):
        p = np.asarray(self.p_tilde, dtype=float)
        v = np.asarray(self.expected_loss, dtype=float)
        if p.shape != v.shape or p.ndim != 1:
            raise ValueError("curve arrays must be one-dimensional and equally long")
        if np.any(np.diff(p) <= 0):
            raise ValueError("p_tilde grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve contains non-finite losses")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.p_tilde.tolist(), self.expected_loss.tolist()))


@dataclass(frozen=True)
class BiasPoint:
    """Optimal prediction and resulting bias at one true probability."""

    p_beta: float
    p_tilde_opt: float
    prob_error: float  # p_tilde_opt - p_beta
    volume_bias: float  # mu * s_gamma * voxel_volume * prob_error


@dataclass(frozen=True)
class SwitchPoint:
    """True probability at which the soft-Dice optimum flips from 0 to 1.

    ``p_star`` is None when the preference never changes sign on [0, 1]
    (for instance when there is no uncertain volume at all).
    """

    p_star: float | None

    @property
    def found(self) -> bool:
        return self.p_star is not None


class SdMinimum(NamedTuple):
    p_tilde_opt: float
    loss_opt: float
    tie: bool  # both endpoints attain the minimum; 0 is reported


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Minimize a unimodal scalar function on [lo, hi] to bracket width tol."""
    if tol <= 0:
        raise ValueError("tolerance must be > 0")
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def ce_minimizer(model: RegionModel) -> PredictionAssignment:
    """Risk-optimal predictions under expected cross-entropy: the truth.

    The expected cross-entropy separates over regions and each term is
    minimized exactly at the region's true foreground probability.
    """
    return PredictionAssignment(model.probabilities.copy())


def sd_minimizer(spec: ScenarioSpec, grid: int = 101, refine_tol: float = 1e-6) -> SdMinimum:
    """Globally minimize the expected soft-Dice loss over the shared prediction.

    A coarse grid on [0, 1] locates the best bracket, golden-section search
    refines it to ``refine_tol``, and the exact endpoints stay in the
    candidate set so a boundary optimum is returned as exactly 0.0 or 1.0.
    Ties between the two endpoints are broken toward 0 and flagged.
    """
    if grid < 101:
        raise ValueError(f"grid must be >= 101, got {grid}")
    if refine_tol <= 0:
        raise ValueError("refine_tol must be > 0")

    def f(q: float) -> float:
        return expected_sd_binomial(spec, q).value

    qs = np.linspace(0.0, 1.0, grid)
    vals = np.array([f(q) for q in qs])
    i = int(np.argmin(vals))  # first minimum: ties lean toward 0

    lo = qs[max(i - 1, 0)]
    hi = qs[min(i + 1, grid - 1)]
    x_ref, f_ref = golden_section(f, lo, hi, refine_tol)

    # Candidate order matters: with equal losses the smaller p_tilde wins.
    candidates = [(vals[0], 0.0), (vals[-1], 1.0), (vals[i], float(qs[i])), (f_ref, x_ref)]
    loss_opt, p_opt = min(candidates, key=lambda c: (c[0], c[1]))

    tie = abs(vals[0] - vals[-1]) <= 1e-12 and vals[0] <= loss_opt + 1e-12
    if tie:
        loss_opt, p_opt = vals[0], 0.0
    return SdMinimum(float(p_opt), float(loss_opt), bool(tie))


def risk_curve(spec: ScenarioSpec, loss_kind: str, n_points: int) -> RiskCurve:
    """Exact expected loss on a uniform grid of shared uncertain predictions."""
    if n_points < 2:
        raise ValueError(f"need at least 2 grid points, got {n_points}")
    qs = np.linspace(0.0, 1.0, n_points)
    if loss_kind == "sd":
        vals = np.array([expected_sd_binomial(spec, q).value for q in qs])
    elif loss_kind == "ce":
        model = expand_scenario(spec)
        vals = np.array([expected_ce(model, scenario_prediction(model, q)).value for q in qs])
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}; expected 'ce' or 'sd'")
    return RiskCurve(qs, vals, spec, loss_kind)


def _scenario(k: int, mu: float, p_beta: float, s_alpha: float, s_gamma: float) -> ScenarioSpec:
    return ScenarioSpec(s_alpha=s_alpha, s_gamma=s_gamma, mu=mu, k_regions=k, p_beta=p_beta)


def bias_curve(
    k: int,
    mu: float,
    p_grid: Sequence[float],
    s_alpha: float = 100.0,
    s_gamma: float = 1.0,
    voxel_volume: float = 1.0,
    grid: int = 101,
    refine_tol: float = 1e-6,
) -> list[BiasPoint]:
    """Soft-Dice probability error and volume bias across true probabilities.

    The volume bias is the probability error times the total uncertain
    volume mu * s_gamma (in voxel-volume units): every uncertain region
    misestimated by the same amount contributes proportionally.
    """
    points = []
    for p in p_grid:
        opt = sd_minimizer(_scenario(k, mu, p, s_alpha, s_gamma), grid=grid, refine_tol=refine_tol)
        err = opt.p_tilde_opt - p
        points.append(BiasPoint(float(p), opt.p_tilde_opt, float(err), float(mu * s_gamma * voxel_volume * err)))
    return points


def find_switch_point(
    k: int,
    mu: float,
    tol: float = 1e-6,
    s_alpha: float = 100.0,
    s_gamma: float = 1.0,
) -> SwitchPoint:
    """Bisect for the true probability where the endpoint preference flips.

    The bracketing function is the loss gap E[SD](q=1) - E[SD](q=0):
    positive means under-estimation (0 preferred), negative means
    over-estimation. Returns a no-switch result if the gap never changes
    sign on [0, 1].
    """
    if tol <= 0:
        raise ValueError("tolerance must be > 0")

    def gap(p: float) -> float:
        spec = _scenario(k, mu, p, s_alpha, s_gamma)
        return expected_sd_binomial(spec, 1.0).value - expected_sd_binomial(spec, 0.0).value

    lo, hi = 0.0, 1.0
    g_lo, g_hi = gap(lo), gap(hi)
    if not (g_lo > 0.0 > g_hi):
        return SwitchPoint(None)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return SwitchPoint(0.5 * (lo + hi))
