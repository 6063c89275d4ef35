"""Scalar physics primitives and the composite switching rates.

The on/off switching of the junction is governed by two bias-dependent
rates.  Writing R(sign, s) for the proton-transfer rate in bridge state
s (1 = empty, 0 = occupied) and b_AB / b_ABbar for the average bridge
populations of the two junction states,

    k01(v) = (1 - b_AB(v))    * R(+, 1) + b_AB(v)    * R(+, 0)
    k10(v) = (1 - b_ABbar(v)) * R(-, 1) + b_ABbar(v) * R(-, 0)
    A(v)   = -(k01(v) + k10(v)),   K(v) = k01(v) + k10(v)

Each proton-transfer rate is a thermally activated Gaussian of the driving
offset:

    R(sign, s) = (gamma/2) * sqrt(pi*kB*T/lambda)
                 * exp(-(alpha_s(v) + sign*lambda)^2 / denom)

with alpha_1(v) = v - E_PT, alpha_0(v) = v - E_PT - chi, and the exponent
denominator selected by ``params.marcus_denominator`` (see params module).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .params import (DegenerateContractionError, DomainBounds, K_B, SwitchParams)
from .quadrature import QuadratureSpec

__all__ = [
    "RateSet", "fermi", "lorentzian_dos", "marcus_rate", "rate_set",
    "contraction_rate_nu", "minimize_total_rate", "sensitivity_bounds",
    "RateTable",
]

#: Below this total rate (1/s) contraction-based quantities are refused.
NU_GUARD = 1e-12


@dataclass(frozen=True)
class RateSet:
    """Switching rates at one bias point.  A = -(k01 + k10), K = -A."""

    v: float
    k01: float
    k10: float
    A: float
    K: float

    def __post_init__(self):
        if self.k01 < 0 or self.k10 < 0:
            raise ValueError("rates must be non-negative")
        if abs(self.A + self.K) > 1e-12 * max(1.0, self.K):
            raise ValueError("A and K must satisfy K = -A")

    @property
    def steady_state(self) -> float:
        if self.K <= NU_GUARD:
            raise DegenerateContractionError(
                f"total rate K={self.K!r} at v={self.v!r} is below the guard threshold")
        return self.k01 / self.K


def fermi(E, v: float, sign: int, T: float):
    """Electrode occupation 1/(1 + exp((E + sign*v/2)/(kB*T))).

    ``sign`` is +1 or -1, selecting the electrode chemical potential -+ v/2.
    Evaluated through a numerically stable logistic; vectorized over E.
    """
    if T <= 0:
        raise ValueError("temperature must be positive")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if not np.all(np.isfinite(E)) or not math.isfinite(v):
        raise ValueError("non-finite input to fermi")
    out = expit(-(np.asarray(E, dtype=float) + sign * v / 2.0) / (K_B * T))
    return out if np.ndim(E) else float(out)


def lorentzian_dos(E, center: float, width: float):
    """Lorentzian density of states, (width/2pi)/((E-center)^2 + (width/2)^2).

    Normalized to unit integral over the real line; units 1/eV.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    E = np.asarray(E, dtype=float)
    out = (width / (2.0 * math.pi)) / ((E - center) ** 2 + (width / 2.0) ** 2)
    return out if out.ndim else float(out)


def marcus_rate(v: float, sign: int, s: int, p: SwitchParams) -> float:
    """Proton-transfer rate R(sign, s) at bias v, in 1/s.  Strictly positive."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    if s not in (0, 1):
        raise ValueError("s must be 0 or 1")
    if not math.isfinite(v):
        raise ValueError("bias must be finite")
    kT = p.kT
    alpha = v - p.E_PT - (p.chi if s == 0 else 0.0)
    gamma_s = p.gamma if s == 1 else p.kappa * p.gamma
    denom = 4.0 * kT * (p.lam if p.marcus_denominator == "lambda" else gamma_s)
    pref = 0.5 * p.gamma * math.sqrt(math.pi * kT / p.lam)
    return pref * math.exp(-((alpha + sign * p.lam) ** 2) / denom)


def rate_set(v: float, p: SwitchParams, spec: QuadratureSpec) -> RateSet:
    """Evaluate (k01, k10, A, K) at one bias point.

    The bridge populations and all four proton-transfer rates are taken at
    the same instantaneous bias.
    """
    from .transport import bridge_population

    b_on = bridge_population(v, "AB", p, spec)
    b_off = bridge_population(v, "ABbar", p, spec)
    k01 = (1.0 - b_on) * marcus_rate(v, +1, 1, p) + b_on * marcus_rate(v, +1, 0, p)
    k10 = (1.0 - b_off) * marcus_rate(v, -1, 1, p) + b_off * marcus_rate(v, -1, 0, p)
    K = k01 + k10
    return RateSet(v=v, k01=k01, k10=k10, A=-K, K=K)


def minimize_total_rate(D: DomainBounds, p: SwitchParams, spec: QuadratureSpec,
                        grid_points: int = 2001) -> tuple[float, float]:
    """(min K, argmin) over the bias domain: dense grid plus local refinement."""
    if D.width == 0.0:
        return rate_set(D.a, p, spec).K, D.a
    grid = np.linspace(D.a, D.b, grid_points)
    K = np.array([rate_set(v, p, spec).K for v in grid])
    i = int(K.argmin())
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid_points - 1)]
    res = minimize_scalar(lambda v: rate_set(float(v), p, spec).K,
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-9 * max(1.0, D.width)})
    if res.fun < K[i]:
        return float(res.fun), float(res.x)
    return float(K[i]), float(grid[i])


def contraction_rate_nu(D: DomainBounds, p: SwitchParams, spec: QuadratureSpec,
                        grid_points: int = 2001) -> float:
    """nu = min over D of K(v); the exponential forgetting rate, 1/s."""
    nu, _ = minimize_total_rate(D, p, spec, grid_points=grid_points)
    if nu <= NU_GUARD:
        raise DegenerateContractionError(
            f"degenerate contraction: min K = {nu!r} on [{D.a}, {D.b}]")
    return nu


def _refine_slope(fn, v: float, h: float, max_halvings: int = 5) -> float:
    """Central difference with step halving until two steps agree within 1%."""
    slope = (fn(v + h) - fn(v - h)) / (2.0 * h)
    for _ in range(max_halvings):
        h *= 0.5
        finer = (fn(v + h) - fn(v - h)) / (2.0 * h)
        scale = max(abs(slope), abs(finer), 1e-300)
        if abs(finer - slope) <= 0.01 * scale:
            return finer
        slope = finer
    return slope


def sensitivity_bounds(D: DomainBounds, p: SwitchParams, spec: QuadratureSpec,
                       grid_points: int = 2001, fd_step: float = 1e-4
                       ) -> tuple[float, float]:
    """(g1, g2) = (max |dk01/dv|, max |dA/dv|) over the bias domain.

    Central finite differences on a dense grid, then local refinement around
    each grid maximizer with a step-halving consistency check.
    """
    if D.width == 0.0:
        grid = np.array([D.a])
    else:
        grid = np.linspace(D.a, D.b, grid_points)
    plus = [rate_set(v + fd_step, p, spec) for v in grid]
    minus = [rate_set(v - fd_step, p, spec) for v in grid]
    dk01 = np.array([(a.k01 - b.k01) / (2 * fd_step) for a, b in zip(plus, minus)])
    dA = np.array([(a.A - b.A) / (2 * fd_step) for a, b in zip(plus, minus)])

    def refine(values, attr):
        i = int(np.abs(values).argmax())
        fn = lambda v: getattr(rate_set(float(v), p, spec), attr)
        if D.width == 0.0:
            return abs(_refine_slope(fn, float(grid[0]), fd_step))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        neg_abs_slope = lambda v: -abs(
            (fn(float(v) + fd_step) - fn(float(v) - fd_step)) / (2 * fd_step))
        res = minimize_scalar(neg_abs_slope, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-7 * max(1.0, D.width)})
        best_v = float(res.x) if -res.fun > abs(values[i]) else float(grid[i])
        return abs(_refine_slope(fn, best_v, fd_step))

    g1 = refine(dk01, "k01")
    g2 = refine(dA, "A")
    return g1, g2


class RateTable:
    """Dense interpolant of the switching rates over a bias interval.

    Interpolates log k01 and log k10 with monotone piecewise cubics; the
    rates are strictly positive and span many decades, so the log transform
    keeps the interpolation uniformly accurate in relative terms.  Intended
    for long trajectory and filter runs where a direct quadrature per time
    step would dominate the cost.
    """

    def __init__(self, domain: DomainBounds, params: SwitchParams,
                 spec: QuadratureSpec, n: int = 2001):
        self.domain = domain
        self.params = params
        self.spec = spec
        if domain.width == 0.0:
            rs = rate_set(domain.a, params, spec)
            self._const = rs
            self._log_k01 = self._log_k10 = None
            self.v_grid = np.array([domain.a])
            return
        self._const = None
        self.v_grid = np.linspace(domain.a, domain.b, n)
        k01 = np.empty(n)
        k10 = np.empty(n)
        for i, v in enumerate(self.v_grid):
            rs = rate_set(float(v), params, spec)
            k01[i] = rs.k01
            k10[i] = rs.k10
        tiny = 1e-300
        self._log_k01 = PchipInterpolator(self.v_grid, np.log(np.clip(k01, tiny, None)))
        self._log_k10 = PchipInterpolator(self.v_grid, np.log(np.clip(k10, tiny, None)))

    def k01(self, v):
        if self._const is not None:
            return np.full_like(np.asarray(v, dtype=float), self._const.k01) \
                if np.ndim(v) else self._const.k01
        out = np.exp(self._log_k01(v))
        return out if np.ndim(v) else float(out)

    def k10(self, v):
        if self._const is not None:
            return np.full_like(np.asarray(v, dtype=float), self._const.k10) \
                if np.ndim(v) else self._const.k10
        out = np.exp(self._log_k10(v))
        return out if np.ndim(v) else float(out)

    def rate_set(self, v: float) -> RateSet:
        k01 = self.k01(float(v))
        k10 = self.k10(float(v))
        K = k01 + k10
        return RateSet(v=float(v), k01=k01, k10=k10, A=-K, K=K)
