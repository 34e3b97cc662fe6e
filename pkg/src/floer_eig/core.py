"""Domain types: potentials, Hamiltonian parameters, phase points, trajectories,
eigenstate profiles, and the JSON potential schema.

Units follow hbar^2 / 2m = 1. Potentials live on the unit parameter interval;
the physical duration tau only enters through the solvers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .errors import DomainError, ParseError

KINDS = ("constant", "fourier", "samples")
DOMAINS = ("ring", "box")

_BOX_SLACK = 1e-9


@dataclass(frozen=True)
class PotentialSpec:
    """Scalar potential V on [0, 1] (box) or the unit circle (ring).

    ``kind`` selects the payload: ``value`` for constant, ``a0``/``cos``/``sin``
    for a finite Fourier series ``a0 + sum a_k cos(2 pi k t) + b_k sin(2 pi k t)``,
    ``values`` for uniform samples interpolated by a cubic spline (periodic on
    the ring, natural on the box).

    Sample grids: ring samples sit at ``t_i = i / M`` for ``i < M``; box samples
    span the closed interval, ``t_i = i / (M - 1)``.
    """

    kind: str
    domain: str = "ring"
    value: float = 0.0
    a0: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}")
        if self.domain not in DOMAINS:
            raise DomainError(f"unknown potential domain {self.domain!r}")
        object.__setattr__(self, "cos", tuple(float(x) for x in self.cos))
        object.__setattr__(self, "sin", tuple(float(x) for x in self.sin))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        if self.kind == "samples" and len(self.values) < 4:
            raise DomainError("samples potential needs at least 4 values")
        numbers = (self.value, self.a0) + self.cos + self.sin + self.values
        if not all(math.isfinite(x) for x in numbers):
            raise DomainError("potential coefficients must be finite")

    @classmethod
    def constant(cls, v0: float, domain: str = "ring") -> PotentialSpec:
        return cls("constant", domain, value=float(v0))

    @classmethod
    def fourier(cls, a0: float, cos: Sequence[float] = (), sin: Sequence[float] = (),
                domain: str = "ring") -> PotentialSpec:
        return cls("fourier", domain, a0=float(a0), cos=tuple(cos), sin=tuple(sin))

    @classmethod
    def samples(cls, values: Sequence[float], domain: str = "ring") -> PotentialSpec:
        return cls("samples", domain, values=tuple(values))

    @cached_property
    def _spline(self) -> CubicSpline:
        v = np.asarray(self.values)
        if self.domain == "ring":
            m = len(v)
            x = np.arange(m + 1) / m
            return CubicSpline(x, np.append(v, v[0]), bc_type="periodic")
        return CubicSpline(np.linspace(0.0, 1.0, len(v)), v, bc_type="natural")

    def _wrap(self, t):
        t = np.asarray(t, dtype=float)
        if self.domain == "ring":
            return t - np.floor(t)
        if np.any((t < -_BOX_SLACK) | (t > 1.0 + _BOX_SLACK)):
            raise DomainError("box potential evaluated outside [0, 1]")
        return np.clip(t, 0.0, 1.0)

    def __call__(self, t):
        """V(t); vectorised over array input."""
        s = self._wrap(t)
        if self.kind == "constant":
            out = np.full_like(s, self.value)
        elif self.kind == "fourier":
            out = np.full_like(s, self.a0)
            for k, a in enumerate(self.cos, start=1):
                out = out + a * np.cos(2 * np.pi * k * s)
            for k, b in enumerate(self.sin, start=1):
                out = out + b * np.sin(2 * np.pi * k * s)
        else:
            out = self._spline(s)
        return out if out.ndim else float(out)

    def derivative(self, t):
        """V'(t) with respect to the unit parameter."""
        s = self._wrap(t)
        if self.kind == "constant":
            out = np.zeros_like(s)
        elif self.kind == "fourier":
            out = np.zeros_like(s)
            for k, a in enumerate(self.cos, start=1):
                out = out - 2 * np.pi * k * a * np.sin(2 * np.pi * k * s)
            for k, b in enumerate(self.sin, start=1):
                out = out + 2 * np.pi * k * b * np.cos(2 * np.pi * k * s)
        else:
            out = self._spline(s, 1)
        return out if out.ndim else float(out)

    def mean(self) -> float:
        """Integral of V over [0, 1]."""
        if self.kind == "constant":
            return self.value
        if self.kind == "fourier":
            # every harmonic has zero mean over a whole period, on either domain
            return self.a0
        return float(self._spline.integrate(0.0, 1.0))


def evaluate_potential(spec: PotentialSpec, t):
    return spec(t)


@dataclass(frozen=True)
class HamiltonianParams:
    """Energy E, action offset c > 0 and configuration dimension n."""

    E: float
    c: float = 0.5
    n: int = 2

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise DomainError("action offset c must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("dimension n must be a positive integer")
        if not math.isfinite(self.E):
            raise DomainError("energy must be finite")


def positivity_margin(params: HamiltonianParams, spec: PotentialSpec) -> float:
    """min over the domain of E - V(t); may be negative."""
    return params.E - potential_max(spec)


@lru_cache(maxsize=256)
def potential_max(spec: PotentialSpec) -> float:
    return _extremum(spec, sign=1.0)


@lru_cache(maxsize=256)
def potential_min(spec: PotentialSpec) -> float:
    return -_extremum(spec, sign=-1.0)


def _extremum(spec: PotentialSpec, sign: float) -> float:
    """max of sign * V: dense grid, then bounded refinement around the best node."""
    if spec.kind == "constant":
        return sign * spec.value
    grid = np.linspace(0.0, 1.0, 4097)
    vals = sign * spec(grid)
    i = int(np.argmax(vals))
    h = grid[1] - grid[0]
    lo, hi = grid[i] - h, grid[i] + h
    if spec.domain == "box":
        lo, hi = max(lo, 0.0), min(hi, 1.0)
    res = minimize_scalar(lambda t: -sign * spec(t), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return max(float(vals[i]), float(-res.fun))


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if q.shape != p.shape:
            raise DomainError("q and p must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise DomainError("phase point entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, z) -> PhasePoint:
        z = np.asarray(z, dtype=float)
        n = z.size // 2
        return cls(z[:n], z[n:])


@dataclass(frozen=True)
class Trajectory:
    """Samples of (q, p) at physical times u_j = j tau / K, j = 0..K.

    ``z`` has shape (K + 1, 2n) with columns q_1..q_n, p_1..p_n.
    """

    tau: float
    z: np.ndarray
    kind: str = "periodic-orbit"

    def __post_init__(self):
        if self.kind not in ("periodic-orbit", "chord"):
            raise DomainError(f"unknown trajectory kind {self.kind!r}")
        if not self.tau > 0:
            raise DomainError("trajectory duration must be positive")
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2 or z.shape[1] % 2:
            raise DomainError("trajectory samples must have shape (K+1, 2n)")
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.z.shape[1] // 2

    @property
    def steps(self) -> int:
        return self.z.shape[0] - 1

    @property
    def u(self) -> np.ndarray:
        return np.linspace(0.0, self.tau, self.steps + 1)

    @property
    def q(self) -> np.ndarray:
        return self.z[:, : self.n]

    @property
    def p(self) -> np.ndarray:
        return self.z[:, self.n:]

    def amplitude(self) -> float:
        return float(np.max(np.linalg.norm(self.z, axis=1)))

    def closure(self) -> float:
        return float(np.linalg.norm(self.z[-1] - self.z[0]))

    def scaled(self, s: float) -> Trajectory:
        return Trajectory(self.tau, s * self.z, self.kind)

    def point(self, j: int) -> PhasePoint:
        return PhasePoint.from_array(self.z[j])

    def to_csv(self) -> str:
        n = self.n
        header = ["u"] + [f"q_{i + 1}" for i in range(n)] + [f"p_{i + 1}" for i in range(n)]
        lines = [",".join(header)]
        for u, row in zip(self.u, self.z):
            lines.append(",".join(repr(float(x)) for x in (u, *row)))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EigenstateProfile:
    """Complex wave-function samples.

    Ring: ``psi[k]`` at ``phi_k = 2 pi k / K``, k < K, and ``psi_end`` holds the
    value carried round to phi = 2 pi. Box: ``psi[k]`` at arclength fraction
    ``s_k = k / K``, k = 0..K. ``R`` is the geometric scale (r_E or l_E); the
    eigen-equation reads -(1/R^2) psi'' + V psi = E psi in the unit parameter.
    """

    R: float
    E: float
    bc: str
    psi: np.ndarray
    psi_end: complex | None = None
    normalization: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.bc not in ("periodic", "dirichlet"):
            raise DomainError(f"unknown boundary condition {self.bc!r}")
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=complex))

    @property
    def K(self) -> int:
        return self.psi.size if self.bc == "periodic" else self.psi.size - 1

    @property
    def grid(self) -> np.ndarray:
        """Angle grid (ring) or arclength-fraction grid (box)."""
        if self.bc == "periodic":
            return 2 * np.pi * np.arange(self.K) / self.K
        return np.linspace(0.0, 1.0, self.K + 1)

    @property
    def unit_grid(self) -> np.ndarray:
        """Sample positions on the unit parameter interval where V is evaluated."""
        if self.bc == "periodic":
            return np.arange(self.K) / self.K
        return np.linspace(0.0, 1.0, self.K + 1)

    def scaled(self, s: float) -> EigenstateProfile:
        end = None if self.psi_end is None else s * self.psi_end
        return EigenstateProfile(self.R, self.E, self.bc, s * self.psi, end,
                                 self.normalization * s, dict(self.meta))


# --- potential documents -------------------------------------------------------

def _number(doc, key, where):
    if key not in doc:
        raise ParseError(f"{where}: missing field {key!r}")
    x = doc[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"{where}: field {key!r} must be a number, got {type(x).__name__}")
    return float(x)


def _numbers(doc, key, where, required=True):
    if key not in doc:
        if required:
            raise ParseError(f"{where}: missing field {key!r}")
        return ()
    xs = doc[key]
    if not isinstance(xs, list):
        raise ParseError(f"{where}: field {key!r} must be an array of numbers")
    for i, x in enumerate(xs):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ParseError(f"{where}: {key}[{i}] must be a number")
    return tuple(float(x) for x in xs)


def potential_from_dict(doc, where: str = "potential") -> PotentialSpec:
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ParseError(f"{where}: field 'kind' must be one of {KINDS}, got {kind!r}")
    domain = doc.get("domain", "ring")
    if domain not in DOMAINS:
        raise ParseError(f"{where}: field 'domain' must be one of {DOMAINS}, got {domain!r}")
    allowed = {"kind", "domain"} | {"constant": {"value"}, "fourier": {"a0", "cos", "sin"},
                                    "samples": {"values"}}[kind]
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ParseError(f"{where}: unexpected field(s) {extra} for kind {kind!r}")
    try:
        if kind == "constant":
            return PotentialSpec.constant(_number(doc, "value", where), domain)
        if kind == "fourier":
            return PotentialSpec.fourier(_number(doc, "a0", where),
                                         _numbers(doc, "cos", where, required=False),
                                         _numbers(doc, "sin", where, required=False), domain)
        return PotentialSpec.samples(_numbers(doc, "values", where), domain)
    except DomainError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def potential_to_dict(spec: PotentialSpec) -> dict:
    doc = {"kind": spec.kind, "domain": spec.domain}
    if spec.kind == "constant":
        doc["value"] = spec.value
    elif spec.kind == "fourier":
        doc.update(a0=spec.a0, cos=list(spec.cos), sin=list(spec.sin))
    else:
        doc["values"] = list(spec.values)
    return doc


def parse_potential(text: str) -> PotentialSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return potential_from_dict(doc)


def emit_potential(spec: PotentialSpec) -> str:
    """Canonical text form: fixed key order, full double precision."""
    return json.dumps(potential_to_dict(spec), sort_keys=True)
