"""Bias-dependent transport: bridge populations, state currents, I-V tables.

The average bridge population of junction state X at bias v is

    b_X(v) = (1/gamma_X) * int (gammaL_X f+(E) + gammaR_X f-(E)) D_X(E) dE

with D_X a Lorentzian of width gamma_X centered at E_X + (eta - 1/2) v.
The state current is a Landauer-type integral, Gaussian-averaged over the
level energy E':

    I_X(v) = (N q / 2 pi hbar) *
             E_{E' ~ N(E_X, sigma^2)}[ Gamma_X * int D_{E'}(E) (f-(E) - f+(E)) dE ]

and the measured junction current mixes the two states by the on-state
probability: I = I_AB * P + I_ABbar * (1 - P).
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .params import HBAR, Q_E, SwitchParams
from .quadrature import IntegralResult, QuadratureError, QuadratureSpec, gauss_expectation, integrate_line

__all__ = [
    "bridge_population", "state_current", "state_current_detail",
    "average_current", "CurrentTable", "build_current_table", "table_lookup",
]

_STATES = ("AB", "ABbar")


def _check_state(state: str):
    if state not in _STATES:
        raise ValueError(f"state must be one of {_STATES}, got {state!r}")


def bridge_population(v: float, state: str, p: SwitchParams,
                      spec: QuadratureSpec) -> float:
    """Average bridge electronic population of one junction state, in [0, 1].

    Values overshooting [0, 1] by more than the absolute tolerance indicate
    an integration fault and raise rather than being clamped.
    """
    from .rates import fermi, lorentzian_dos

    _check_state(state)
    gl, gr, g, E_level, _ = p.state_levels(state)
    center = E_level + (p.eta - 0.5) * v

    def integrand(E):
        occ = gl * fermi(E, v, +1, p.T) + gr * fermi(E, v, -1, p.T)
        return occ * lorentzian_dos(E, center, g) / g

    res = integrate_line(integrand, center, spec,
                         breakpoints=(-v / 2.0, v / 2.0),
                         lorentzian_width=g)
    val = res.value
    if val < -spec.abs_tol or val > 1.0 + spec.abs_tol:
        raise QuadratureError(
            f"bridge population {val!r} at v={v!r} ({state}) violates [0, 1] "
            f"beyond tolerance; integration fault", value=val,
            error_estimate=res.error_estimate)
    return min(max(val, 0.0), 1.0)


def state_current_detail(v: float, state: str, p: SwitchParams,
                         spec: QuadratureSpec, tag: str = None) -> IntegralResult:
    """State current with error bookkeeping (stderr populated under Monte Carlo)."""
    from .rates import fermi, lorentzian_dos

    _check_state(state)
    _, _, g, E_level, Gamma = p.state_levels(state)
    if tag is None:
        tag = f"current:{state}:v={v!r}"
    prefactor = p.N * Q_E / (2.0 * math.pi * HBAR) * Gamma

    def line(E_prime):
        center = E_prime + (p.eta - 0.5) * v

        def integrand(E):
            window = fermi(E, v, -1, p.T) - fermi(E, v, +1, p.T)
            return lorentzian_dos(E, center, g) * window

        return integrate_line(integrand, center, spec,
                              breakpoints=(-v / 2.0, v / 2.0),
                              lorentzian_width=g).value

    res = gauss_expectation(line, mean=E_level, sd=p.sigma, spec=spec, tag=tag)
    return IntegralResult(value=prefactor * res.value,
                          error_estimate=abs(prefactor) * res.error_estimate,
                          evaluations=res.evaluations,
                          stderr=abs(prefactor) * res.stderr)


def state_current(v: float, state: str, p: SwitchParams,
                  spec: QuadratureSpec) -> float:
    """Current through the junction when pinned in one state, in amperes."""
    return state_current_detail(v, state, p, spec).value


def average_current(v: float, P_AB: float, p: SwitchParams,
                    spec: QuadratureSpec) -> float:
    """Measured junction current at on-state probability P_AB, in amperes."""
    if not 0.0 <= P_AB <= 1.0:
        raise ValueError(f"P_AB must lie in [0, 1], got {P_AB!r}")
    I_on = state_current(v, "AB", p, spec)
    I_off = state_current(v, "ABbar", p, spec)
    return I_on * P_AB + I_off * (1.0 - P_AB)


@dataclass
class CurrentTable:
    """Cached I-V samples of both junction states with monotone interpolation.

    Lookups interpolate with a monotone piecewise cubic and refuse to
    extrapolate outside the grid.
    """

    v_grid: np.ndarray
    I_AB: np.ndarray
    I_ABbar: np.ndarray
    build_spec: QuadratureSpec
    _interp: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.v_grid = np.asarray(self.v_grid, dtype=float)
        self.I_AB = np.asarray(self.I_AB, dtype=float)
        self.I_ABbar = np.asarray(self.I_ABbar, dtype=float)
        if self.v_grid.ndim != 1 or len(self.v_grid) < 2:
            raise ValueError("v_grid must be a 1-D array with at least 2 nodes")
        if not (np.diff(self.v_grid) > 0).all():
            raise ValueError("v_grid must be strictly ascending")
        if len(self.I_AB) != len(self.v_grid) or len(self.I_ABbar) != len(self.v_grid):
            raise ValueError("current arrays must match the grid length")
        self._interp = (PchipInterpolator(self.v_grid, self.I_AB),
                        PchipInterpolator(self.v_grid, self.I_ABbar))

    def lookup(self, v) -> tuple:
        v_arr = np.asarray(v, dtype=float)
        if (v_arr < self.v_grid[0]).any() or (v_arr > self.v_grid[-1]).any():
            raise ValueError(
                f"lookup bias outside table range [{self.v_grid[0]}, {self.v_grid[-1]}]")
        a, b = self._interp[0](v_arr), self._interp[1](v_arr)
        if np.ndim(v):
            return a, b
        return float(a), float(b)

    def average_current(self, v, P_AB):
        I_on, I_off = self.lookup(v)
        return I_on * np.asarray(P_AB) + I_off * (1.0 - np.asarray(P_AB))

    def to_csv(self, path) -> None:
        from .reporting import emit_csv
        meta = {"build_spec": json.dumps(self.build_spec.to_json())}
        emit_csv(path, ["v", "I_AB", "I_ABbar"],
                 zip(self.v_grid, self.I_AB, self.I_ABbar), meta=meta)

    @classmethod
    def from_csv(cls, path) -> "CurrentTable":
        from .reporting import read_csv
        header, cols, meta = read_csv(path)
        if header != ["v", "I_AB", "I_ABbar"]:
            raise ValueError(f"unexpected current-table header {header}")
        spec = QuadratureSpec.from_json(json.loads(meta["build_spec"]))
        return cls(v_grid=cols[0], I_AB=cols[1], I_ABbar=cols[2], build_spec=spec)


def build_current_table(v_grid, p: SwitchParams, spec: QuadratureSpec,
                        threads: int = 1) -> CurrentTable:
    """Evaluate both state currents on an ascending bias grid."""
    v_grid = np.asarray(v_grid, dtype=float)

    def node(v):
        return (state_current(float(v), "AB", p, spec),
                state_current(float(v), "ABbar", p, spec))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(node, v_grid))
    else:
        pairs = [node(v) for v in v_grid]
    I_on = np.array([a for a, _ in pairs])
    I_off = np.array([b for _, b in pairs])
    return CurrentTable(v_grid=v_grid, I_AB=I_on, I_ABbar=I_off, build_spec=spec)


def table_lookup(table: CurrentTable, v: float) -> tuple:
    """Interpolated (I_AB, I_ABbar) at bias v; rejects out-of-range biases."""
    return table.lookup(v)
