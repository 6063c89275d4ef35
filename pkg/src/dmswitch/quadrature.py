"""Integration engines shared by the transport calculations.

Three pieces:

* ``integrate_line``: adaptive Gauss-Legendre panels on a truncated energy
  window, bisecting panels that fail an embedded-rule error test;
* ``gauss_expectation``: expectation over a normal level distribution, either
  by Gauss-Hermite nodes or by seeded Monte Carlo sampling;
* ``seeded_normal_stream`` / ``seeded_uniform_stream``: counter-based random
  streams with a fully documented pipeline so that sampled results are
  reproducible bit-for-bit across runs, machines and independent
  implementations of the pipeline.

Random stream pipeline: the Philox4x64 counter generator is keyed with
(seed, blake2b-64(tag)); each 64-bit word is mapped to a uniform in (0, 1)
as ((word >> 11) + 0.5) * 2**-53 and normals are the inverse standard-normal
CDF of those uniforms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtri

__all__ = [
    "QuadratureSpec", "IntegralResult", "QuadratureError",
    "integrate_line", "integrate_adaptive", "gauss_expectation",
    "seeded_normal_stream", "seeded_uniform_stream",
]

#: Hard cap on the number of panels before adaptive bisection gives up.
MAX_PANELS = 4096

_X_HI, _W_HI = leggauss(15)
_X_LO, _W_LO = leggauss(7)

_MASK64 = (1 << 64) - 1


class QuadratureError(RuntimeError):
    """An integration routine could not meet its tolerances.

    Carries the best available value and error estimate when present.
    """

    def __init__(self, message, value=None, error_estimate=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class QuadratureSpec:
    """Configuration for the integration engines.

    method           : "adaptive-deterministic" or "monte-carlo"; selects how
                       Gaussian expectations are evaluated
    abs_tol, rel_tol : convergence targets for the line integral
    window_halfwidth : eV, truncation of infinite energy integrals
    gh_nodes         : Gauss-Hermite order for deterministic expectations
    mc_samples       : Monte Carlo sample count
    seed             : 64-bit stream seed
    """

    method: str = "adaptive-deterministic"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    window_halfwidth: float = 10.0
    gh_nodes: int = 64
    mc_samples: int = 500
    seed: int = 20240501

    def __post_init__(self):
        if self.method not in ("adaptive-deterministic", "monte-carlo"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.window_halfwidth <= 0:
            raise ValueError("window_halfwidth must be positive")
        if self.gh_nodes < 2:
            raise ValueError("gh_nodes must be >= 2")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "abs_tol": self.abs_tol,
            "rel_tol": self.rel_tol,
            "window_halfwidth": self.window_halfwidth,
            "gh_nodes": self.gh_nodes,
            "mc_samples": self.mc_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "QuadratureSpec":
        known = {"method", "abs_tol", "rel_tol", "window_halfwidth",
                 "gh_nodes", "mc_samples", "seed"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown quadrature key(s): {sorted(unknown)}")
        kwargs = dict(doc)
        if "gh_nodes" in kwargs:
            kwargs["gh_nodes"] = int(kwargs["gh_nodes"])
        if "mc_samples" in kwargs:
            kwargs["mc_samples"] = int(kwargs["mc_samples"])
        if "seed" in kwargs:
            kwargs["seed"] = int(kwargs["seed"])
        return cls(**kwargs)


@dataclass(frozen=True)
class IntegralResult:
    """Value of an integral plus bookkeeping.

    ``stderr`` is nonzero only for Monte Carlo evaluations.
    """

    value: float
    error_estimate: float
    evaluations: int
    stderr: float = 0.0

    def __post_init__(self):
        if self.error_estimate < 0 or self.stderr < 0:
            raise ValueError("error estimates must be non-negative")


def _tag_key(tag: str) -> int:
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seeded_uniform_stream(seed: int, count: int, tag: str = "") -> np.ndarray:
    """Deterministic uniforms in (0, 1) from the documented Philox pipeline."""
    if count < 0:
        raise ValueError("count must be >= 0")
    key = np.array([seed & _MASK64, _tag_key(tag)], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(count)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def seeded_normal_stream(seed: int, count: int, tag: str = "") -> np.ndarray:
    """Deterministic standard-normal deviates (inverse-CDF of the uniforms)."""
    if count == 0:
        return np.empty(0)
    return ndtri(seeded_uniform_stream(seed, count, tag))


def _panel_estimates(f, lo, hi):
    """High/low embedded Gauss estimates on each panel [lo_i, hi_i]."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x_hi = mid[:, None] + half[:, None] * _X_HI
    y_hi = np.asarray(f(x_hi.ravel()), dtype=float).reshape(x_hi.shape)
    x_lo = mid[:, None] + half[:, None] * _X_LO
    y_lo = np.asarray(f(x_lo.ravel()), dtype=float).reshape(x_lo.shape)
    if not (np.isfinite(y_hi).all() and np.isfinite(y_lo).all()):
        raise QuadratureError("integrand returned a non-finite value")
    est_hi = (y_hi * _W_HI).sum(axis=1) * half
    est_lo = (y_lo * _W_LO).sum(axis=1) * half
    return est_hi, np.abs(est_hi - est_lo), x_hi.size + x_lo.size


def integrate_adaptive(f, a: float, b: float, abs_tol: float, rel_tol: float,
                       breakpoints=(), max_panels: int = None,
                       min_panels: int = 16):
    """Adaptive panel integration of a vectorized integrand on [a, b].

    Panels failing a prorated embedded-rule error test are bisected until the
    summed error estimate satisfies max(abs_tol, rel_tol*|value|).  Returns
    (value, error_estimate, evaluations).
    """
    if max_panels is None:
        max_panels = MAX_PANELS
    if b <= a:
        if b == a:
            return 0.0, 0.0, 0
        raise ValueError("integration bounds must satisfy a <= b")
    pts = [p for p in breakpoints if a < p < b]
    edges = np.unique(np.concatenate([np.linspace(a, b, min_panels + 1), np.asarray(pts)]))
    lo, hi = edges[:-1].copy(), edges[1:].copy()
    est, err, nev = _panel_estimates(f, lo, hi)
    evaluations = nev
    span = b - a

    while True:
        total = est.sum()
        err_total = err.sum()
        tol = max(abs_tol, rel_tol * abs(total))
        if err_total <= tol:
            return float(total), float(err_total), evaluations
        # Bisect every panel whose prorated share exceeds half its budget;
        # always include the worst offender.
        budget = 0.5 * tol * (hi - lo) / span
        bad = err > budget
        if not bad.any():
            bad[err.argmax()] = True
        if len(lo) + bad.sum() > max_panels:
            raise QuadratureError(
                f"adaptive integration did not converge within {max_panels} panels "
                f"(best value {total!r}, error estimate {err_total!r})",
                value=float(total), error_estimate=float(err_total))
        mids = 0.5 * (lo[bad] + hi[bad])
        new_lo = np.concatenate([lo[~bad], lo[bad], mids])
        new_hi = np.concatenate([hi[~bad], mids, hi[bad]])
        keep_est, keep_err = est[~bad], err[~bad]
        redo_est, redo_err, nev = _panel_estimates(f, np.concatenate([lo[bad], mids]),
                                                   np.concatenate([mids, hi[bad]]))
        evaluations += nev
        lo, hi = new_lo, new_hi
        est = np.concatenate([keep_est, redo_est])
        err = np.concatenate([keep_err, redo_err])


def integrate_line(f, center: float, spec: QuadratureSpec, breakpoints=(),
                   lorentzian_width: float = None) -> IntegralResult:
    """Integrate a vectorized integrand over [center - W, center + W].

    W is ``spec.window_halfwidth``.  When the integrand is dominated by a
    Lorentzian of width ``lorentzian_width`` (peak inside the window, any
    cofactor bounded by 1), the analytic tail mass bound width/(pi*W) is
    added to the reported error estimate to account for the truncation.
    """
    w = spec.window_halfwidth
    value, err, nev = integrate_adaptive(
        f, center - w, center + w, spec.abs_tol, spec.rel_tol, breakpoints=breakpoints)
    if lorentzian_width is not None:
        if lorentzian_width <= 0:
            raise ValueError("lorentzian_width must be positive")
        err += lorentzian_width / (math.pi * w)
    return IntegralResult(value=value, error_estimate=err, evaluations=nev)


def gauss_expectation(g, mean: float, sd: float, spec: QuadratureSpec,
                      tag: str = "gauss-expectation") -> IntegralResult:
    """Expectation of g(E') for E' ~ Normal(mean, sd^2).

    Deterministic mode evaluates g on Gauss-Hermite nodes (exact for
    polynomial g up to degree 2*gh_nodes - 1); the error estimate is the
    difference against the half-order rule.  Monte Carlo mode averages g over
    ``spec.mc_samples`` draws of the seeded stream identified by ``tag`` and
    reports the standard error of the mean.
    """
    if sd <= 0:
        raise ValueError("sd must be positive")
    if spec.method == "adaptive-deterministic":
        n = spec.gh_nodes
        x, wts = hermgauss(n)
        nodes = mean + sd * math.sqrt(2.0) * x
        vals = np.array([float(g(e)) for e in nodes])
        _check_nodes(nodes, vals)
        value = float((wts * vals).sum() / math.sqrt(math.pi))
        n2 = max(2, n // 2)
        x2, w2 = hermgauss(n2)
        nodes2 = mean + sd * math.sqrt(2.0) * x2
        vals2 = np.array([float(g(e)) for e in nodes2])
        _check_nodes(nodes2, vals2)
        coarse = float((w2 * vals2).sum() / math.sqrt(math.pi))
        return IntegralResult(value=value, error_estimate=abs(value - coarse),
                              evaluations=n + n2)
    # monte-carlo
    z = seeded_normal_stream(spec.seed, spec.mc_samples, tag=tag)
    nodes = mean + sd * z
    vals = np.array([float(g(e)) for e in nodes])
    _check_nodes(nodes, vals)
    value = float(vals.mean())
    if spec.mc_samples > 1:
        stderr = float(vals.std(ddof=1) / math.sqrt(spec.mc_samples))
    else:
        stderr = 0.0
    return IntegralResult(value=value, error_estimate=stderr,
                          evaluations=spec.mc_samples, stderr=stderr)


def _check_nodes(nodes, vals):
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise QuadratureError(
            f"integrand returned non-finite value {vals[i]!r} at node E'={nodes[i]!r}")
