"""Device parameters, physical constants, and the bias domain type.

Every energy is stored internally in eV and every rate in 1/s.  Tunneling
couplings are usually quoted in meV in device tables, so the JSON interface
accepts and emits meV for those fields and converts on load; keeping one
internal unit system avoids silent factor-of-1000 mistakes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

K_B = 8.6173e-5
"""Boltzmann constant, eV/K."""

HBAR = 6.5821e-16
"""Reduced Planck constant, eV*s."""

Q_E = 1.60217663e-19
"""Elementary charge, C."""

#: Supported forms of the proton-transfer exponent denominator.
#: "lambda": 4*kB*T*lambda (the standard reorganization-energy form).
#: "gamma":  4*kB*T*gamma_s (the state-dependent coupling form).
#: The lambda form is the default: it is the only one that reproduces the
#: device's steady-state saturation (P* -> 1 for strongly negative bias and
#: P* -> 0 for strongly positive bias).
MARCUS_DENOMINATORS = ("lambda", "gamma")


class DegenerateContractionError(RuntimeError):
    """The total switching rate is too small for contraction-based bounds."""


@dataclass(frozen=True)
class DomainBounds:
    """Compact bias interval [a, b] in volts.

    A degenerate interval (a == b) is allowed and denotes a single bias
    point, which is occasionally useful (e.g. the contraction rate of a
    constant signal).
    """

    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("domain bounds must be finite")
        if self.a > self.b:
            raise ValueError(f"domain bounds must satisfy a <= b, got [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.a - slack <= value <= self.b + slack

    def contains_interval(self, lo: float, hi: float, slack: float = 1e-12) -> bool:
        return self.a - slack <= lo and hi <= self.b + slack

    def as_tuple(self) -> tuple[float, float]:
        return (self.a, self.b)


# JSON keys that carry meV values (converted to eV on load).
_MEV_KEYS = {"gamma_L": "gammaL_AB", "gamma_R": "gammaR_AB", "Gamma_AB": "Gamma_AB"}
_EV_KEYS = {"E_AB": "E_AB", "E_PT": "E_PT", "chi": "chi", "lambda": "lam", "sigma": "sigma"}
_PLAIN_KEYS = {"kappa": "kappa", "eta": "eta", "gamma": "gamma", "N": "N", "T": "T",
               "marcus_denominator": "marcus_denominator"}


@dataclass(frozen=True)
class SwitchParams:
    """All device parameters of the one-state molecular switch model.

    Defaults are the characterized junction values.  Fields:

    gammaL_AB, gammaR_AB : electrode tunneling rates for the on (AB) state, eV
    kappa                : dimensionless scale applied to the protonated state
    chi                  : level shift between the two states, eV
    E_AB                 : bridge level energy of the on state, eV
    E_PT                 : proton-transfer energy, eV
    lam                  : reorganization energy, eV
    gamma                : molecule-surroundings coupling, 1/s
    eta                  : voltage-division parameter, in [0, 1]
    sigma                : Gaussian level-broadening width, eV
    N                    : number of molecules in the junction
    T                    : junction temperature, K
    Gamma_AB             : current-magnitude coupling, eV; kept independent of
                           gammaL*gammaR/(gammaL+gammaR) because the fitted
                           table value differs from that combination
    marcus_denominator   : see MARCUS_DENOMINATORS
    """

    gammaL_AB: float = 4.0e-3
    gammaR_AB: float = 100.25e-3
    kappa: float = 5.44
    chi: float = 2.1
    E_AB: float = 0.66
    E_PT: float = -0.513
    lam: float = 1.0
    gamma: float = 5.74
    eta: float = 0.6
    sigma: float = 0.01
    N: int = 150
    T: float = 298.15
    Gamma_AB: float = 1.0e-5
    marcus_denominator: str = "lambda"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "marcus_denominator" and not math.isfinite(v):
                raise ValueError(f"non-finite parameter {f.name}={v}")
        if self.gammaL_AB < 0 or self.gammaR_AB < 0:
            raise ValueError("tunneling rates must be non-negative")
        if self.gammaL_AB + self.gammaR_AB <= 0:
            raise ValueError("total tunneling rate gamma_AB must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.lam <= 0:
            raise ValueError("reorganization energy must be positive")
        if self.T <= 0:
            raise ValueError("temperature must be positive")
        if self.sigma <= 0:
            raise ValueError("level-broadening width must be positive")
        if self.gamma <= 0:
            raise ValueError("surroundings coupling must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("molecule count N must be an integer >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("voltage-division parameter must lie in [0, 1]")
        if self.marcus_denominator not in MARCUS_DENOMINATORS:
            raise ValueError(
                f"marcus_denominator must be one of {MARCUS_DENOMINATORS}, "
                f"got {self.marcus_denominator!r}")

    # Derived quantities.  Computed, never stored.

    @property
    def kT(self) -> float:
        """Thermal energy kB*T, eV."""
        return K_B * self.T

    @property
    def gamma_AB(self) -> float:
        return self.gammaL_AB + self.gammaR_AB

    @property
    def gammaL_ABbar(self) -> float:
        return self.kappa * self.gammaL_AB

    @property
    def gammaR_ABbar(self) -> float:
        return self.kappa * self.gammaR_AB

    @property
    def gamma_ABbar(self) -> float:
        return self.kappa * self.gamma_AB

    @property
    def E_ABbar(self) -> float:
        return self.E_AB + self.chi

    @property
    def Gamma_ABbar(self) -> float:
        return self.kappa * self.Gamma_AB

    def state_levels(self, state: str) -> tuple[float, float, float, float, float]:
        """Per-state (gamma_L, gamma_R, gamma, E_level, Gamma), all in eV."""
        if state == "AB":
            return (self.gammaL_AB, self.gammaR_AB, self.gamma_AB, self.E_AB, self.Gamma_AB)
        if state == "ABbar":
            return (self.gammaL_ABbar, self.gammaR_ABbar, self.gamma_ABbar,
                    self.E_ABbar, self.Gamma_ABbar)
        raise ValueError(f"state must be 'AB' or 'ABbar', got {state!r}")

    def replace(self, **kwargs) -> "SwitchParams":
        return replace(self, **kwargs)

    # JSON interface.  Keys mirror the device parameter table; gamma_L,
    # gamma_R and Gamma_AB are exchanged in meV.  Physical constants (K_B,
    # HBAR, Q_E) are fixed and never serialized.

    def to_json(self) -> dict:
        return {
            "Gamma_AB": self.Gamma_AB * 1e3,
            "sigma": self.sigma,
            "eta": self.eta,
            "E_AB": self.E_AB,
            "E_PT": self.E_PT,
            "kappa": self.kappa,
            "chi": self.chi,
            "lambda": self.lam,
            "gamma": self.gamma,
            "gamma_L": self.gammaL_AB * 1e3,
            "gamma_R": self.gammaR_AB * 1e3,
            "N": self.N,
            "T": self.T,
            "marcus_denominator": self.marcus_denominator,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SwitchParams":
        known = set(_MEV_KEYS) | set(_EV_KEYS) | set(_PLAIN_KEYS)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown parameter key(s): {sorted(unknown)}")
        kwargs = {}
        for key, name in _MEV_KEYS.items():
            if key in doc:
                kwargs[name] = float(doc[key]) * 1e-3
        for key, name in _EV_KEYS.items():
            if key in doc:
                kwargs[name] = float(doc[key])
        for key, name in _PLAIN_KEYS.items():
            if key in doc:
                if name == "N":
                    kwargs[name] = int(doc[key])
                elif name == "marcus_denominator":
                    kwargs[name] = str(doc[key])
                else:
                    kwargs[name] = float(doc[key])
        return cls(**kwargs)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SwitchParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))
