"""Fading-memory functionals, filters, and weighting admissibility.

The switch forgets its initial condition at rate at least
nu = min_{v in D} K(v), so the limit of the propagated state defines a
functional of the input history alone:

    continuous time:  F(V) = int_{-infty}^0 Phi(0, tau) k01(V_tau) dtau
    discrete time:    F(V~) = lim of the sampled state at index 0

Both are evaluated by warm-starting the exact propagator from zero at a
certified truncation horizon: cutting the history at depth T costs at most
e^{-nu T} because the state lies in [0, 1].

A weighting (values in (0, 1], decaying to zero into the past) measures how
fast input differences are discounted; it is admissible when the exchange
integral/sums against e^{nu tau} are finite, which yields a Lipschitz bound
|F(V) - F(V')| <= M ||V - V'||_w on the induced functional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import _RateProvider, _exact_piecewise
from .params import DomainBounds, SwitchParams
from .quadrature import QuadratureSpec, integrate_adaptive
from .rates import RateSet, RateTable, contraction_rate_nu, rate_set
from .signals import BiasSignal

__all__ = [
    "ExponentialWeighting", "LinearEnvelopeWeighting",
    "DiscreteExponentialWeighting", "DiscreteLinearEnvelopeWeighting",
    "AdmissibilityReport", "weighting_admissible",
    "ct_fading_functional", "ct_filter", "dt_fading_functional", "dt_filter",
    "weighted_sup_norm", "ct_lipschitz_constant", "dt_lipschitz_constants",
]


class FadingMemoryError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Weightings


class ContinuousWeighting:
    """Weighting function on the negative half-line.

    Subclasses provide __call__(tau), an exact ``sup_on`` over an interval,
    and ``decay_rate``, the asymptotic exponential rate beta with
    w(tau) ~ poly * e^{-beta |tau|}, used for certified tail bounds.
    """

    decay_rate: float

    def __call__(self, tau):
        raise NotImplementedError

    def sup_on(self, t0: float, t1: float) -> float:
        raise NotImplementedError

    def _validate(self):
        if self.decay_rate <= 0:
            raise ValueError("weighting must decay to zero into the past")
        probes = -np.logspace(-3, 12, 40)
        vals = np.asarray(self(probes), dtype=float)
        if (vals <= 0).any() or (vals > 1.0 + 1e-12).any():
            raise ValueError("weighting values must lie in (0, 1]")


@dataclass(frozen=True)
class ExponentialWeighting(ContinuousWeighting):
    """w(tau) = e^{-rate |tau|}."""

    rate: float

    def __post_init__(self):
        object.__setattr__(self, "decay_rate", self.rate)
        self._validate()

    def __call__(self, tau):
        out = np.exp(self.rate * np.minimum(np.asarray(tau, dtype=float), 0.0))
        return out if np.ndim(tau) else float(out)

    def sup_on(self, t0, t1):
        return float(self(max(t0, t1)))  # increasing toward 0


@dataclass(frozen=True)
class LinearEnvelopeWeighting(ContinuousWeighting):
    """w(tau) proportional to max(1, |tau|) e^{-rate |tau|}, peak scaled to 1.

    The raw envelope exceeds 1 once rate < 1/e, so the constructor rescales
    by the supremum; rescaling a weighting changes the norm and the Lipschitz
    constant by reciprocal factors and leaves admissibility untouched.
    """

    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        peak_arg = max(1.0, 1.0 / self.rate)
        norm = max(1.0, peak_arg) * math.exp(-self.rate * peak_arg)
        norm = max(norm, math.exp(-self.rate))
        object.__setattr__(self, "_norm", max(norm, 1.0))
        object.__setattr__(self, "decay_rate", self.rate)
        self._validate()

    def _raw(self, tau):
        a = np.abs(np.asarray(tau, dtype=float))
        return np.maximum(1.0, a) * np.exp(-self.rate * a)

    def __call__(self, tau):
        out = self._raw(tau) / self._norm
        return out if np.ndim(tau) else float(out)

    def sup_on(self, t0, t1):
        lo, hi = min(t0, t1), max(t0, t1)
        cands = [lo, hi]
        for c in (-1.0, -1.0 / self.rate):
            if lo < c < hi:
                cands.append(c)
        return float(max(self(c) for c in cands))


class DiscreteWeighting:
    """Weighting sequence on the non-positive integers."""

    decay_rate: float  # per-index exponential rate (includes Ts)

    def __call__(self, k):
        raise NotImplementedError

    def _validate(self):
        if self.decay_rate <= 0:
            raise ValueError("weighting must decay to zero into the past")
        probes = -np.unique(np.logspace(0, 9, 30).astype(np.int64))
        vals = np.asarray(self(probes), dtype=float)
        if (vals <= 0).any() or (vals > 1.0 + 1e-12).any():
            raise ValueError("weighting values must lie in (0, 1]")


@dataclass(frozen=True)
class DiscreteExponentialWeighting(DiscreteWeighting):
    """w~_k = e^{-rate Ts |k|}."""

    rate: float
    Ts: float

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")
        object.__setattr__(self, "decay_rate", self.rate * self.Ts)
        self._validate()

    def __call__(self, k):
        out = np.exp(-self.rate * self.Ts * np.abs(np.asarray(k, dtype=float)))
        return out if np.ndim(k) else float(out)


@dataclass(frozen=True)
class DiscreteLinearEnvelopeWeighting(DiscreteWeighting):
    """w~_k proportional to max(1, |k|) e^{-rate Ts |k|}, peak scaled to 1."""

    rate: float
    Ts: float

    def __post_init__(self):
        if self.Ts <= 0:
            raise ValueError("Ts must be positive")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        a = self.rate * self.Ts
        k_peak = max(1, int(math.floor(1.0 / a)), int(math.ceil(1.0 / a)))
        cands = {1, max(1, k_peak - 1), k_peak, k_peak + 1}
        norm = max(max(1.0, k) * math.exp(-a * k) for k in cands)
        object.__setattr__(self, "_norm", max(norm, 1.0))
        object.__setattr__(self, "decay_rate", a)
        self._validate()

    def __call__(self, k):
        a = np.abs(np.asarray(k, dtype=float))
        out = np.maximum(1.0, a) * np.exp(-self.rate * self.Ts * a) / self._norm
        return out if np.ndim(k) else float(out)


# ---------------------------------------------------------------------------
# Admissibility


@dataclass(frozen=True)
class AdmissibilityReport:
    """Verdict on whether a weighting supports the Lipschitz bound.

    Continuous weightings report the exchange integral
    int e^{nu tau} / w_tau dtau; discrete ones the two sums c1, c2.
    ``divergent_term`` names the first index (or probe time) at which the
    summand stopped decaying when the verdict is negative.
    """

    admissible: bool
    ct_integral: float = None
    c1: float = None
    c2: float = None
    divergent_term: float = None
    detail: str = ""


def _ct_admissibility(w: ContinuousWeighting, nu: float) -> AdmissibilityReport:
    beta = w.decay_rate
    if beta >= nu:
        return AdmissibilityReport(
            admissible=False, divergent_term=-1.0 / nu,
            detail=f"integrand e^(nu tau)/w decays like e^({nu - beta:g} tau); "
                   "it does not vanish into the past")
    # integrate on [-T, 0] then bound the tail by C e^{-(nu-beta) T}/(nu-beta)
    T = max(30.0 / (nu - beta), 10.0)
    f = lambda tau: np.exp(nu * np.asarray(tau)) / np.asarray(w(tau))
    val, _, _ = integrate_adaptive(f, -T, 0.0, abs_tol=1e-12, rel_tol=1e-9,
                                   breakpoints=(-1.0, -1.0 / beta))
    tail = float(f(np.array([-T]))[0]) / (nu - beta)
    return AdmissibilityReport(admissible=True, ct_integral=val + tail,
                               detail=f"tail bound {tail:g} beyond horizon {T:g} s")


def _dt_admissibility(w: DiscreteWeighting, nu: float, Ts: float) -> AdmissibilityReport:
    nuTs = nu * Ts
    beta = w.decay_rate  # per index
    if beta >= nuTs:
        # find the first index at which the c2 summand stops shrinking
        ks = np.arange(1, 200)
        terms = np.exp(-ks * nuTs) / np.asarray(w(-(ks + 1)))
        idx = int(np.argmin(terms)) + 1
        return AdmissibilityReport(
            admissible=False, divergent_term=float(ks[min(idx, len(ks) - 1)]),
            detail="summands stop decaying: weighting decays at least as fast "
                   "as the contraction factor")
    # exact partial sums out to a certified cut, then geometric tail bounds
    margin = nuTs - beta
    K_cut = int(max(200, math.ceil(40.0 / margin)))
    ks = np.arange(0, K_cut + 1)           # |k|
    wk = np.asarray(w(-ks), dtype=float)
    run_min = np.minimum.accumulate(wk)    # min over l in [k, 0]
    k_pos = ks[1:]
    c1_terms = k_pos * np.exp(-(k_pos - 1) * nuTs) / run_min[1:]
    c2_terms = np.exp(-ks * nuTs) / np.asarray(w(-(ks + 1)), dtype=float)
    # tail ratios: terms decay at worst like e^{-margin} * (1 + 1/k)
    r = math.exp(-margin) * (1.0 + 1.0 / K_cut)
    if r >= 1.0:
        K_cut2 = int(math.ceil(2.0 / (margin))) + K_cut
        return _dt_admissibility_big(w, nu, Ts, K_cut2)
    c1 = float(c1_terms.sum() + c1_terms[-1] * r / (1.0 - r))
    c2 = float(c2_terms.sum() + c2_terms[-1] * r / (1.0 - r))
    return AdmissibilityReport(admissible=True, c1=c1, c2=c2,
                               detail=f"geometric tail ratio {r:g} past index {K_cut}")


def _dt_admissibility_big(w, nu, Ts, K_cut):
    nuTs = nu * Ts
    ks = np.arange(0, K_cut + 1)
    wk = np.asarray(w(-ks), dtype=float)
    run_min = np.minimum.accumulate(wk)
    k_pos = ks[1:]
    c1_terms = k_pos * np.exp(-(k_pos - 1) * nuTs) / run_min[1:]
    c2_terms = np.exp(-ks * nuTs) / np.asarray(w(-(ks + 1)), dtype=float)
    r = math.exp(-(nuTs - w.decay_rate)) * (1.0 + 1.0 / K_cut)
    c1 = float(c1_terms.sum() + c1_terms[-1] * r / (1.0 - r))
    c2 = float(c2_terms.sum() + c2_terms[-1] * r / (1.0 - r))
    return AdmissibilityReport(admissible=True, c1=c1, c2=c2,
                               detail=f"geometric tail ratio {r:g} past index {K_cut}")


def weighting_admissible(w, nu: float, Ts: float = None) -> AdmissibilityReport:
    """Evaluate the admissibility integral (continuous) or sums (discrete)."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    if isinstance(w, ContinuousWeighting):
        return _ct_admissibility(w, nu)
    if isinstance(w, DiscreteWeighting):
        if Ts is None:
            raise ValueError("discrete weightings need the sample period Ts")
        return _dt_admissibility(w, nu, Ts)
    raise TypeError(f"unsupported weighting type {type(w)!r}")


# ---------------------------------------------------------------------------
# Functionals and filters


def ct_fading_functional(signal: BiasSignal, p: SwitchParams, spec: QuadratureSpec,
                         tol: float = 1e-10, nu: float = None,
                         rate_table: RateTable = None) -> float:
    """Limit state at time 0 induced by the input history on the past.

    Truncates the history at horizon T with e^{-nu T} < tol and propagates
    the exact solution from zero; the result is within tol of the bi-infinite
    integral because the state is confined to [0, 1].
    """
    if nu is None:
        nu = contraction_rate_nu(signal.domain, p, spec)
    horizon = math.log(1.0 / tol) / nu
    rates = _RateProvider(p, spec, rate_table)
    segs = signal.segments(-horizon, 0.0)
    if segs is None:
        from .dynamics import SwitchState, propagate
        traj = propagate(SwitchState(-horizon, 0.0), signal, 0.0, p, spec,
                         output_dt=horizon, rate_table=rate_table)
        return float(traj.P_AB[-1])
    samples, final = _exact_piecewise(0.0, -horizon, segs, rates, np.array([0.0]))
    return float(final)


def ct_filter(signal: BiasSignal, times, p: SwitchParams, spec: QuadratureSpec,
              tol: float = 1e-10, nu: float = None,
              rate_table: RateTable = None) -> np.ndarray:
    """Causal filter output Y_t at the requested times.

    Warm-starts once at the certified horizon before the earliest output, so
    every sample equals the truncated functional of its own shifted history
    to within tol.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or not (np.diff(times) >= 0).all():
        raise ValueError("times must be a non-empty ascending 1-D array")
    if nu is None:
        nu = contraction_rate_nu(signal.domain, p, spec)
    horizon = math.log(1.0 / tol) / nu
    t_start = float(times[0]) - horizon
    rates = _RateProvider(p, spec, rate_table)
    segs = signal.segments(t_start, float(times[-1]))
    if segs is None:
        raise ValueError("ct_filter needs a piecewise-constant signal")
    samples, _ = _exact_piecewise(0.0, t_start, segs, rates, times)
    return samples


def _dt_depth(nu: float, Ts: float, tol: float) -> int:
    return int(math.ceil(math.log(1.0 / tol) / (nu * Ts)))


def _dt_scan(values, Ts, rates):
    """Final state of the exact sampled recursion from zero, vectorized.

    values are the inputs at indices -n .. -1; returns the state at index 0.
    Uses the log-cumulative form so no intermediate product overflows.
    """
    k01 = np.empty(len(values))
    K = np.empty(len(values))
    for i, v in enumerate(values):
        rs = rates.at(float(v))
        k01[i] = rs.k01
        K[i] = rs.K
    logphi = -K * Ts
    with np.errstate(under="ignore"):
        G = np.where(K > 0, k01 / np.where(K > 0, K, 1.0) * (-np.expm1(-K * Ts)), 0.0)
        S = np.cumsum(logphi)
        # tail products exp(S_total - S_k) multiply each gain term
        tail = np.exp(S[-1] - S)
    return float(np.dot(G, tail))


def dt_fading_functional(history, Ts: float, p: SwitchParams, spec: QuadratureSpec,
                         tol: float = 1e-10, nu: float = None,
                         domain: DomainBounds = None, padding: float = None,
                         rate_table: RateTable = None) -> float:
    """Limit of the sampled state at index 0 for a discrete input history.

    ``history`` lists the samples at indices -n .. -1 (most recent last).
    The series is truncated at the depth L with e^{-nu Ts L} < tol; histories
    shorter than L require an explicit ``padding`` value and raise otherwise.
    """
    history = np.asarray(history, dtype=float)
    if history.ndim != 1:
        raise ValueError("history must be a 1-D sequence")
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    if domain is None:
        lo = history.min() if len(history) else padding
        hi = history.max() if len(history) else padding
        if padding is not None:
            lo, hi = min(lo, padding), max(hi, padding)
        domain = DomainBounds(float(lo), float(hi))
    if nu is None:
        nu = contraction_rate_nu(domain, p, spec)
    L = _dt_depth(nu, Ts, tol)
    if len(history) < L:
        if padding is None:
            raise FadingMemoryError(
                f"history of length {len(history)} is shorter than the truncation "
                f"depth {L}; pass an explicit padding value")
        history = np.concatenate([np.full(L - len(history), padding), history])
    used = history[-L:]
    rates = _RateProvider(p, spec, rate_table)
    return _dt_scan(used, Ts, rates)


def dt_filter(signal: BiasSignal, k_range, Ts: float, p: SwitchParams,
              spec: QuadratureSpec, tol: float = 1e-10, nu: float = None,
              rate_table: RateTable = None):
    """Discrete fading-memory filter outputs Y_k over ``k_range``.

    ``signal`` must be piecewise constant on the Ts lattice (it supplies the
    samples V_k = signal(k Ts)); outputs are causal, each by definition a
    function of samples strictly before its own index.
    """
    ks = np.asarray(list(k_range), dtype=int)
    if len(ks) == 0 or not (np.diff(ks) > 0).all():
        raise ValueError("k_range must be ascending and non-empty")
    if signal.segments(0.0, Ts) is None:
        raise ValueError("dt_filter needs a piecewise-constant signal")
    if nu is None:
        nu = contraction_rate_nu(signal.domain, p, spec)
    L = _dt_depth(nu, Ts, tol)
    k_lo = int(ks[0]) - L
    sample_ks = np.arange(k_lo, int(ks[-1]))
    values = np.asarray(signal((sample_ks + 0.5) * Ts), dtype=float)
    rates = _RateProvider(p, spec, rate_table)
    k01 = np.empty(len(values))
    K = np.empty(len(values))
    cache = {}
    for i, v in enumerate(values):
        rs = cache.get(v)
        if rs is None:
            rs = rates.at(float(v))
            cache[v] = rs
        k01[i] = rs.k01
        K[i] = rs.K
    with np.errstate(under="ignore"):
        G = k01 / np.where(K > 0, K, 1.0) * (-np.expm1(-K * Ts))
        S = np.concatenate([[0.0], np.cumsum(-K * Ts)])
    out = np.empty(len(ks))
    # P at sample index k = sum over j<k of G_j * exp(S_k - S_{j+1}), truncated at L
    for idx, k in enumerate(ks):
        j_hi = k - k_lo      # number of steps available up to k
        j_lo = max(0, j_hi - L)
        with np.errstate(under="ignore"):
            tail = np.exp(S[j_hi] - S[j_lo + 1: j_hi + 1])
        out[idx] = float(np.dot(G[j_lo:j_hi], tail))
    return ks, out


# ---------------------------------------------------------------------------
# Norms and Lipschitz constants


def weighted_sup_norm(w, sig_a, sig_b, horizon: float = None, Ts: float = None):
    """||V - V'||_w for two histories on the past.

    Continuous weightings take two piecewise-constant signals and an horizon;
    the essential supremum is exact because both the difference and the
    weighting envelope are piecewise monotone.  Discrete weightings take two
    equal-length sample arrays aligned so the last entry is index 0.
    """
    if isinstance(w, ContinuousWeighting):
        if horizon is None:
            raise ValueError("continuous norm needs an evaluation horizon")
        seg_a = sig_a.segments(-horizon, 0.0)
        seg_b = sig_b.segments(-horizon, 0.0)
        if seg_a is None or seg_b is None:
            raise ValueError("continuous norm needs piecewise-constant signals")
        edges = sorted({a for a, _, _ in seg_a + seg_b} |
                       {b for _, b, _ in seg_a + seg_b})
        best = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (a + b)
            diff = abs(float(sig_a(mid)) - float(sig_b(mid)))
            if diff > 0:
                best = max(best, diff * w.sup_on(a, b))
        return best
    if isinstance(w, DiscreteWeighting):
        a = np.asarray(sig_a, dtype=float)
        b = np.asarray(sig_b, dtype=float)
        if a.shape != b.shape:
            raise ValueError("histories must have equal length")
        ks = -np.arange(len(a))[::-1]
        return float(np.max(np.asarray(w(ks)) * np.abs(a - b)))
    raise TypeError(f"unsupported weighting type {type(w)!r}")


def ct_lipschitz_constant(nu: float, g1: float, g2: float,
                          w: ContinuousWeighting) -> float:
    """M = (g1 + g2/nu) * int e^{nu tau}/w dtau for an admissible weighting."""
    rep = weighting_admissible(w, nu)
    if not rep.admissible:
        raise ValueError("weighting is not admissible; no Lipschitz constant")
    return (g1 + g2 / nu) * rep.ct_integral


def dt_lipschitz_constants(D: DomainBounds, Ts: float, p: SwitchParams,
                           spec: QuadratureSpec, grid_points: int = 801,
                           fd_step: float = 1e-4):
    """(M_phi, M_gain, G_max): bounds entering the discrete Lipschitz estimate.

    M_phi bounds |d/dv e^{A(v) Ts}|, M_gain bounds |dG/dv|, and G_max bounds
    the one-period gain, all over the bias domain.
    """
    from .dynamics import dt_gain

    grid = np.linspace(D.a, D.b, grid_points)
    cache = {}

    def rs(v):
        r = cache.get(v)
        if r is None:
            r = rate_set(float(v), p, spec)
            cache[v] = r
        return r

    phi = lambda v: math.exp(rs(v).A * Ts)
    gain = lambda v: dt_gain(v, Ts, p, spec, rates=rs(v))
    phis = np.array([phi(v) for v in grid])
    gains = np.array([gain(v) for v in grid])
    dphi = np.array([(phi(v + fd_step) - phi(v - fd_step)) / (2 * fd_step) for v in grid])
    dgain = np.array([(gain(v + fd_step) - gain(v - fd_step)) / (2 * fd_step) for v in grid])
    del phis
    return (float(np.max(np.abs(dphi))), float(np.max(np.abs(dgain))),
            float(np.max(gains)))
