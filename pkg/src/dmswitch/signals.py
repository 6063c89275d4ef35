"""Time-domain bias signals with declared compact ranges.

Four configurable kinds (constant, sampled piecewise-constant, sinusoid,
affine transform of another signal) plus an explicit segment list used
internally for randomized verification inputs.  Every signal is evaluable at
any real time; sampled signals extend by holding their edge values, so
histories on the negative half-line are always defined.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .params import DomainBounds

__all__ = [
    "BiasSignal", "ConstantSignal", "PiecewiseConstantSignal",
    "SinusoidSignal", "AffineSignal", "SegmentSignal", "signal_from_config",
]


class BiasSignal:
    """Base interface: callable v(t), a value range, and a declared domain."""

    domain: DomainBounds

    def __call__(self, t):
        raise NotImplementedError

    def signal_range(self) -> tuple[float, float]:
        """Exact closed interval of values the signal takes."""
        raise NotImplementedError

    def segments(self, t0: float, t1: float):
        """(start, end, value) pieces covering [t0, t1], or None if not
        piecewise constant."""
        return None

    def recommended_substeps(self, t0: float, t1: float) -> int:
        return 256

    def _finish_init(self, domain):
        lo, hi = self.signal_range()
        if domain is None:
            domain = DomainBounds(lo, hi)
        elif not domain.contains_interval(lo, hi):
            raise ValueError(
                f"signal range [{lo}, {hi}] exceeds declared domain "
                f"[{domain.a}, {domain.b}]")
        object.__setattr__(self, "domain", domain)


@dataclass(frozen=True)
class ConstantSignal(BiasSignal):
    value: float
    domain: DomainBounds = None

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("constant value must be finite")
        self._finish_init(self.domain)

    def __call__(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), self.value, dtype=float)
        return self.value

    def signal_range(self):
        return (self.value, self.value)

    def segments(self, t0, t1):
        return [(t0, t1, self.value)]

    def recommended_substeps(self, t0, t1):
        return 1


@dataclass(frozen=True)
class PiecewiseConstantSignal(BiasSignal):
    """Sample-and-hold signal: value index k applies on [k*Ts, (k+1)*Ts).

    ``values[i]`` is the sample at index ``k_start + i``.  Outside the
    sampled span the edge values are held.
    """

    values: tuple
    Ts: float
    k_start: int = 0
    domain: DomainBounds = None

    def __post_init__(self):
        vals = tuple(float(x) for x in self.values)
        if len(vals) == 0:
            raise ValueError("piecewise signal needs at least one sample")
        if not all(math.isfinite(x) for x in vals):
            raise ValueError("samples must be finite")
        if not (self.Ts > 0 and math.isfinite(self.Ts)):
            raise ValueError("sample period Ts must be positive")
        object.__setattr__(self, "values", vals)
        self._finish_init(self.domain)

    def _index(self, t):
        k = np.floor(np.asarray(t, dtype=float) / self.Ts).astype(int) - self.k_start
        return np.clip(k, 0, len(self.values) - 1)

    def __call__(self, t):
        arr = np.asarray(self.values, dtype=float)[self._index(t)]
        return arr if np.ndim(t) else float(arr)

    def signal_range(self):
        return (min(self.values), max(self.values))

    def segments(self, t0, t1):
        if t1 <= t0:
            return []
        ks = np.arange(math.floor(t0 / self.Ts), math.ceil(t1 / self.Ts) + 1)
        edges = np.unique(np.clip(ks * self.Ts, t0, t1))
        if edges[0] > t0:
            edges = np.concatenate([[t0], edges])
        if edges[-1] < t1:
            edges = np.concatenate([edges, [t1]])
        out = []
        vals = np.asarray(self.values, dtype=float)
        for a, b in zip(edges[:-1], edges[1:]):
            if b > a:
                out.append((float(a), float(b), float(vals[self._index(0.5 * (a + b))])))
        return _merge_segments(out)


@dataclass(frozen=True)
class SinusoidSignal(BiasSignal):
    """offset + amplitude * cos(2 pi frequency t)."""

    offset: float
    amplitude: float
    frequency: float
    domain: DomainBounds = None

    def __post_init__(self):
        for name in ("offset", "amplitude", "frequency"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.frequency <= 0:
            raise ValueError("frequency must be positive")
        self._finish_init(self.domain)

    def __call__(self, t):
        out = self.offset + self.amplitude * np.cos(
            2.0 * math.pi * self.frequency * np.asarray(t, dtype=float))
        return out if np.ndim(t) else float(out)

    def signal_range(self):
        a = abs(self.amplitude)
        return (self.offset - a, self.offset + a)

    def recommended_substeps(self, t0, t1):
        return max(64, int(math.ceil(64.0 * self.frequency * (t1 - t0))))


@dataclass(frozen=True)
class AffineSignal(BiasSignal):
    """shift + scale * inner(t); scale may be negative."""

    shift: float
    scale: float
    inner: BiasSignal
    domain: DomainBounds = None

    def __post_init__(self):
        if not (math.isfinite(self.shift) and math.isfinite(self.scale)):
            raise ValueError("affine coefficients must be finite")
        self._finish_init(self.domain)

    def __call__(self, t):
        return self.shift + self.scale * self.inner(t)

    def signal_range(self):
        lo, hi = self.inner.signal_range()
        a = self.shift + self.scale * lo
        b = self.shift + self.scale * hi
        return (min(a, b), max(a, b))

    def segments(self, t0, t1):
        inner = self.inner.segments(t0, t1)
        if inner is None:
            return None
        return [(a, b, self.shift + self.scale * v) for a, b, v in inner]

    def recommended_substeps(self, t0, t1):
        return self.inner.recommended_substeps(t0, t1)


@dataclass(frozen=True)
class SegmentSignal(BiasSignal):
    """Explicit piecewise-constant signal with arbitrary segment lengths.

    ``breakpoints`` are the n-1 interior jump times of n ``values``; the
    first and last values extend to -inf and +inf respectively.
    """

    breakpoints: tuple
    values: tuple
    domain: DomainBounds = None

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        vals = tuple(float(x) for x in self.values)
        if len(vals) != len(bp) + 1:
            raise ValueError("need exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(bp[:-1], bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not all(math.isfinite(x) for x in bp + vals):
            raise ValueError("breakpoints and values must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        self._finish_init(self.domain)

    def __call__(self, t):
        idx = np.searchsorted(np.asarray(self.breakpoints), np.asarray(t, dtype=float),
                              side="right")
        out = np.asarray(self.values, dtype=float)[idx]
        return out if np.ndim(t) else float(out)

    def signal_range(self):
        return (min(self.values), max(self.values))

    def segments(self, t0, t1):
        if t1 <= t0:
            return []
        edges = [t0] + [b for b in self.breakpoints if t0 < b < t1] + [t1]
        out = [(a, b, float(self(0.5 * (a + b)))) for a, b in zip(edges[:-1], edges[1:])]
        return _merge_segments(out)


def _merge_segments(segs):
    merged = []
    for a, b, v in segs:
        if merged and merged[-1][2] == v and merged[-1][1] == a:
            merged[-1] = (merged[-1][0], b, v)
        else:
            merged.append((a, b, v))
    return merged


def _domain_from_config(doc):
    if "domain" not in doc:
        return None
    d = doc["domain"]
    if not (isinstance(d, (list, tuple)) and len(d) == 2):
        raise ValueError("signal domain must be a [min, max] pair")
    return DomainBounds(float(d[0]), float(d[1]))


def _reject_unknown(doc, allowed, kind):
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) {sorted(unknown)} in {kind} signal config")


def load_piecewise_csv(path) -> tuple[list[float], float]:
    """Samples and period from a CSV file.

    The file carries the sample period in a leading comment line of the form
    ``# Ts=<seconds>`` and one sample value per data row (a single column,
    or the last column when an index column is present).
    """
    Ts = None
    values = []
    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if row[0].lstrip().startswith("#"):
                text = ",".join(row).lstrip("# ").strip()
                if text.startswith("Ts="):
                    Ts = float(text[3:])
                continue
            try:
                values.append(float(row[-1]))
            except ValueError:
                continue  # header row
    if Ts is None:
        raise ValueError(f"{path}: missing '# Ts=<seconds>' header line")
    if not values:
        raise ValueError(f"{path}: no sample values found")
    return values, Ts


def signal_from_config(doc: dict) -> BiasSignal:
    """Build a validated signal from a JSON-style description."""
    if "kind" not in doc:
        raise ValueError("signal config needs a 'kind'")
    kind = doc["kind"]
    domain = _domain_from_config(doc)
    if kind == "constant":
        _reject_unknown(doc, {"kind", "value", "domain"}, kind)
        return ConstantSignal(float(doc["value"]), domain=domain)
    if kind == "piecewise":
        _reject_unknown(doc, {"kind", "values", "Ts", "file", "k_start", "domain"}, kind)
        if "file" in doc:
            if "values" in doc or "Ts" in doc:
                raise ValueError("piecewise signal: give either 'file' or 'values'+'Ts'")
            values, Ts = load_piecewise_csv(doc["file"])
        else:
            values, Ts = doc["values"], float(doc["Ts"])
        return PiecewiseConstantSignal(tuple(values), Ts,
                                       k_start=int(doc.get("k_start", 0)),
                                       domain=domain)
    if kind == "sinusoid":
        _reject_unknown(doc, {"kind", "offset", "amplitude", "frequency", "domain"}, kind)
        return SinusoidSignal(float(doc["offset"]), float(doc["amplitude"]),
                              float(doc["frequency"]), domain=domain)
    if kind == "affine":
        _reject_unknown(doc, {"kind", "shift", "scale", "inner", "domain"}, kind)
        return AffineSignal(float(doc["shift"]), float(doc["scale"]),
                            signal_from_config(doc["inner"]), domain=domain)
    raise ValueError(f"unknown signal kind {kind!r}")
