"""Rate curves p ↦ log‖λ(G)‖_p / log‖λ(F)‖_p and their infimum.

Everything is parameterized by s = 1/p in [0, 1], with s = 0 standing for
p = ∞. Norms are evaluated in the log domain.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .structure import ShapeVector

INF = math.inf
GRID_POINTS = 4096
S_TOL = 1e-12
TIE_RTOL = 1e-12
_GOLDEN = (math.sqrt(5) - 1) / 2


class SpecialCase(str, enum.Enum):
    NONE = "none"
    SOURCE_SHAPE_ONE = "source_shape_one"
    ALL_ONES_BOTH = "all_ones_both"
    DENOMINATOR_ZERO = "denominator_zero"


class TableRow(str, enum.Enum):
    F_IDENTITY = "F=Id"
    G_IDENTITY = "G=Id"
    F_DEPHASING = "F=Delta"
    G_DEPHASING = "G=Delta"


@dataclass(frozen=True)
class RateCurvePoint:
    p: float
    s: float
    numerator: float
    denominator: float
    ratio: float


@dataclass(frozen=True)
class CapacityReport:
    value: float
    argmin_p: float
    endpoint_values: dict
    special_case: SpecialCase = SpecialCase.NONE
    curve_samples: list = field(default_factory=list, repr=False)

    @property
    def interior(self) -> bool:
        return self.argmin_p not in (1.0, INF)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmin_p": self.argmin_p,
            "argmin_interior": self.interior,
            "endpoint_values": {str(k): v for k, v in self.endpoint_values.items()},
            "special_case": self.special_case.value,
        }


def _as_shape(v) -> ShapeVector:
    return v if isinstance(v, ShapeVector) else ShapeVector(v)


def log_lp_norm(v, p: float) -> float:
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    logs = np.log(np.asarray(_as_shape(v), dtype=float))
    if p == INF:
        return float(logs.max())
    return float(logsumexp(p * logs) / p)


def lp_norm(v, p: float) -> float:
    if p == INF:
        return float(max(_as_shape(v)))
    return math.exp(log_lp_norm(v, p))


def _log_norm_s(logs: np.ndarray, s: float) -> float:
    return float(logs.max()) if s == 0 else float(s * logsumexp(logs / s))


def _log_norm_grid(logs: np.ndarray, s: np.ndarray) -> np.ndarray:
    out = np.full(s.shape, logs.max())
    pos = s > 0
    out[pos] = s[pos] * logsumexp(logs[None, :] / s[pos, None], axis=1)
    return out


def _ratio_s(log_f: np.ndarray, log_g: np.ndarray, s: float) -> tuple[float, float, float]:
    num = _log_norm_s(log_g, s)
    den = _log_norm_s(log_f, s)
    if den == 0.0:
        return num, den, (INF if num > 0 else 0.0)
    return num, den, num / den


def eval_ratio(lamF, lamG, p: float) -> float:
    lamF, lamG = _as_shape(lamF), _as_shape(lamG)
    if lamF == (1,):
        raise ValueError("source shape (1) has infinite capacity; call capacity() instead")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if lamF.all_ones and lamG.all_ones:
        return math.log(len(lamG)) / math.log(len(lamF))
    s = 0.0 if p == INF else 1.0 / p
    log_f = np.log(np.asarray(lamF, dtype=float))
    log_g = np.log(np.asarray(lamG, dtype=float))
    return _ratio_s(log_f, log_g, s)[2]


def _golden_min(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def _p_of(s: float) -> float:
    return INF if s == 0 else 1.0 / s


def capacity(lamF, lamG, grid_points: int = GRID_POINTS, keep_curve: bool = False) -> CapacityReport:
    lamF, lamG = _as_shape(lamF), _as_shape(lamG)
    if lamF == (1,):
        return CapacityReport(INF, INF, {1: INF, INF: INF}, SpecialCase.SOURCE_SHAPE_ONE)
    log_f = np.log(np.asarray(lamF, dtype=float))
    log_g = np.log(np.asarray(lamG, dtype=float))

    if lamF.all_ones and lamG.all_ones:
        value = math.log(len(lamG)) / math.log(len(lamF))
        curve = []
        if keep_curve:
            for s in np.linspace(0.0, 1.0, grid_points):
                curve.append(RateCurvePoint(_p_of(s), float(s), s * math.log(len(lamG)),
                                            s * math.log(len(lamF)), value))
        return CapacityReport(value, 1.0, {1: value, INF: value}, SpecialCase.ALL_ONES_BOTH, curve)

    tag = SpecialCase.DENOMINATOR_ZERO if lamF.all_ones else SpecialCase.NONE
    grid = np.linspace(0.0, 1.0, grid_points)
    nums = _log_norm_grid(log_g, grid)
    dens = _log_norm_grid(log_f, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(dens == 0, np.where(nums > 0, INF, 0.0), nums / np.where(dens == 0, 1.0, dens))
    endpoints = {1: float(ratios[-1]), INF: float(ratios[0])}

    best = float(ratios.min())
    # ties go to smaller p, i.e. larger s
    i = int(np.flatnonzero(ratios == best)[-1])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    s_ref, v_ref = _golden_min(lambda s: _ratio_s(log_f, log_g, s)[2], float(lo), float(hi), S_TOL)
    s_best, v_best = (s_ref, v_ref) if v_ref < best else (float(grid[i]), best)

    # an endpoint that matches the interior minimum to rounding is the analytic minimizer
    thresh = v_best + TIE_RTOL * max(abs(v_best), 1.0)
    if endpoints[1] <= thresh:
        s_best, v_best = 1.0, min(endpoints[1], v_best)
    elif endpoints[INF] <= thresh:
        s_best, v_best = 0.0, min(endpoints[INF], v_best)

    curve = []
    if keep_curve:
        curve = [RateCurvePoint(_p_of(float(s)), float(s), float(a), float(b), float(r))
                 for s, a, b, r in zip(grid, nums, dens, ratios)]
    return CapacityReport(float(v_best), _p_of(s_best), endpoints, tag, curve)


def capacity_closed_form(case: TableRow | str, lam, d: int) -> float:
    """Capacities when one of the two channels is Id_d or Δ_d.

    For ``F=Id``/``F=Delta`` the shape is λ(G); for ``G=Id``/``G=Delta`` it is λ(F).
    """
    case = TableRow(case)
    lam = _as_shape(lam)
    if d < 1:
        raise ValueError("d must be positive")
    log_d = math.log(d)
    source_is_one = d == 1 if case in (TableRow.F_IDENTITY, TableRow.F_DEPHASING) else lam == (1,)
    if source_is_one:
        return INF

    def div(a, b):
        if b == 0:
            return INF if a > 0 else 0.0
        return a / b

    if case is TableRow.F_IDENTITY:
        return div(log_lp_norm(lam, INF), log_d)
    if case is TableRow.G_IDENTITY:
        return div(log_d, log_lp_norm(lam, 1))
    if case is TableRow.F_DEPHASING:
        return div(log_lp_norm(lam, 1), log_d)
    if not lam.all_ones:
        return 0.0
    return div(log_d, log_lp_norm(lam, 1))


def converse_error_floor(lamF, lamG) -> float:
    lamF, lamG = _as_shape(lamF), _as_shape(lamG)
    r1 = lp_norm(lamG, 1) / lp_norm(lamF, 1)
    rinf = lp_norm(lamG, INF) / lp_norm(lamF, INF)
    return float(min(1.0, max(0.0, 1.0 - min(r1, rinf))))


def additivity_gap(lamF, lamG1, lamG2, grid_points: int = GRID_POINTS) -> float:
    """C(G1⊗G2 ↦ F) − C(G1 ↦ F) − C(G2 ↦ F); never negative up to rounding."""
    lamF = _as_shape(lamF)
    if lamF == (1,):
        raise ValueError("source shape (1) has infinite capacity")
    joint = capacity(lamF, _as_shape(lamG1).tensor(_as_shape(lamG2)), grid_points).value
    return joint - capacity(lamF, lamG1, grid_points).value - capacity(lamF, lamG2, grid_points).value


def additivity_check(lamF, lamG1, lamG2, tol: float = 1e-6) -> bool:
    """Whether capacity is additive over G1 ⊗ G2 for this source shape.

    Only guaranteed when the ratio curves share a minimizer; in general the
    joint capacity can be strictly larger than the sum.
    """
    return abs(additivity_gap(lamF, lamG1, lamG2)) <= tol
