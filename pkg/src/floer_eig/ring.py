"""Periodic orbits of the Hill system and the ring eigenstates they carry.

A closed orbit of period tau exists exactly when the monodromy of
w'' + tau^2 (E - V(s)) w = 0 over one period has eigenvalue 1, that is when
g(tau) = tr M(tau) - 2 vanishes. Because g <= 0 touches zero tangentially for
constant potentials, the scan looks both for sign changes and for local maxima
of g that reach zero.

Monodromies are divided by sqrt(det M) before use: RK4 is not exactly
symplectic, and near M = I the O(h^4) defect in det M would otherwise swamp
the eigenvalue-1 residual of an orbit's initial condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import EigenstateProfile, HamiltonianParams, PhasePoint, PotentialSpec, Trajectory, \
    potential_min, potential_to_dict
from .czindex import CZReport, cz_index
from .dynamics import LinearFlowPath, hill_steps, integrate_trajectory, linearized_flow, \
    min_steps, monodromy_batch, monodromy_tau_derivative, oracle_monodromy, profile_points, \
    rescale_to_zero_mean, require_positive
from .errors import ConvergenceError, DegenerateMonodromyError, PreconditionError, \
    ScanRangeError
from .verify import normalize

TRACE_TOL = 1e-8
TANGENCY_TOL = 1e-4
IDENTITY_TOL = 1e-7
EIGVEC_TOL = 1e-6
DEFAULT_GRID = 512
DEFAULT_PROFILE_K = 512
MAX_ITER = 200


def unimodular(M: np.ndarray) -> np.ndarray:
    """M / sqrt(det M) over the last two axes."""
    return M / np.sqrt(np.linalg.det(M))[..., None, None]


def discriminant(M: np.ndarray) -> np.ndarray:
    """g = tr M / sqrt(det M) - 2 over the last two axes."""
    return np.trace(M, axis1=-2, axis2=-1) / np.sqrt(np.linalg.det(M)) - 2.0


def discriminant_derivative(M: np.ndarray, dM: np.ndarray) -> float:
    """d/dtau of ``discriminant`` given M and dM/dtau."""
    det = float(np.linalg.det(M))
    ddet = dM[0, 0] * M[1, 1] + M[0, 0] * dM[1, 1] - dM[0, 1] * M[1, 0] - M[0, 1] * dM[1, 0]
    return float(np.trace(dM) / math.sqrt(det) - 0.5 * np.trace(M) * ddet / det ** 1.5)


def default_tau_range(params: HamiltonianParams, spec: PotentialSpec) -> tuple[float, float]:
    m0 = require_positive(params, spec)
    return 0.1, 4 * np.pi / math.sqrt(m0)


@dataclass(frozen=True)
class Seed:
    """A candidate root: ``kind`` is 'bracket' (g changes sign on [lo, hi]) or
    'peak' (a grid-level local maximum of g at ``at`` inside [lo, hi])."""

    kind: str
    lo: float
    hi: float
    at: float = float("nan")


@dataclass(frozen=True)
class FloquetScan:
    taus: np.ndarray
    g: np.ndarray
    seeds: tuple[Seed, ...]
    K: int

    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.taus.tolist(), self.g.tolist()))


def floquet_scan(params: HamiltonianParams, spec: PotentialSpec, tau_min: float | None = None,
                 tau_max: float | None = None, G: int = DEFAULT_GRID, threads: int = 1,
                 K: int | None = None) -> FloquetScan:
    """Evaluate g(tau) = tr M / sqrt(det M) - 2 on a uniform grid and collect seeds.

    Every interior local maximum of g with g < 0 on the grid becomes a peak
    seed; whether it truly reaches zero is settled after refinement.
    """
    lo_d, hi_d = default_tau_range(params, spec)
    tau_min = lo_d if tau_min is None else tau_min
    tau_max = hi_d if tau_max is None else tau_max
    if not 0 < tau_min < tau_max:
        raise PreconditionError("need 0 < tau_min < tau_max")
    if G < 64:
        raise PreconditionError("scan grid needs at least 64 points")
    K = K or hill_steps(params, spec, tau_max)
    taus = np.linspace(tau_min, tau_max, G)
    g = discriminant(monodromy_batch(params, spec, taus, K, threads))
    seeds = []
    for j in range(G - 1):
        if g[j] == 0.0:
            seeds.append(Seed("bracket", taus[j], taus[j]))
        elif g[j] * g[j + 1] < 0:
            seeds.append(Seed("bracket", taus[j], taus[j + 1]))
    if g[-1] == 0.0:
        seeds.append(Seed("bracket", taus[-1], taus[-1]))
    for j in range(1, G - 1):
        if g[j] < 0 and g[j] >= g[j - 1] and g[j] >= g[j + 1]:
            seeds.append(Seed("peak", taus[j - 1], taus[j + 1], taus[j]))
    seeds.sort(key=lambda s: s.lo)
    return FloquetScan(taus, g, tuple(seeds), K)


def _trace_fn(params, spec, K, integrator):
    if integrator == "rk4":
        return lambda t: float(discriminant(monodromy_batch(params, spec, np.array([t]), K)[0]))
    if integrator == "adaptive":
        return lambda t: float(discriminant(oracle_monodromy(params, spec, t)))
    raise PreconditionError(f"unknown integrator {integrator!r}")


def _peak(params, spec, seed, K, integrator, g):
    """Locate the maximum of g inside a peak seed."""
    if integrator == "rk4":
        def dg(t):
            return discriminant_derivative(*monodromy_tau_derivative(params, spec, t, K))
        a, b = seed.lo, seed.hi
        if dg(a) > 0 > dg(b):
            return brentq(dg, a, b, xtol=1e-14, maxiter=MAX_ITER)
    res = minimize_scalar(lambda t: -g(t), bounds=(seed.lo, seed.hi), method="bounded",
                          options={"xatol": 1e-12, "maxiter": MAX_ITER})
    return float(res.x)


def _near_identity(params, spec, t, K, integrator) -> bool:
    if integrator == "rk4":
        M = monodromy_batch(params, spec, np.array([t]), K)[0]
    else:
        M = oracle_monodromy(params, spec, t)
    return bool(np.abs(unimodular(M) - np.eye(2)).max() <= IDENTITY_TOL)


def _bisect(g, a, b):
    if a == b:
        return a
    try:
        return brentq(g, a, b, xtol=1e-10 * (1 + b) * 1e-2, rtol=4 * np.finfo(float).eps,
                      maxiter=MAX_ITER)
    except RuntimeError as exc:
        raise ConvergenceError(f"no convergence in [{a}, {b}]") from exc


def resolve_seed(params: HamiltonianParams, spec: PotentialSpec, seed: Seed, K: int,
                 integrator: str = "rk4") -> list[float]:
    """Roots of g attached to one seed (none, one tangential, or a close pair)."""
    g = _trace_fn(params, spec, K, integrator)
    if seed.kind == "bracket":
        t = _bisect(g, seed.lo, seed.hi)
        return [t] if abs(g(t)) <= TRACE_TOL else []
    t = _peak(params, spec, seed, K, integrator, g)
    top = g(t)
    # a small positive peak away from M = I is a narrow pair of simple roots
    if abs(top) <= TRACE_TOL and (top <= 0 or _near_identity(params, spec, t, K, integrator)):
        return [t]
    if top > 0:
        return [_bisect(g, seed.lo, t), _bisect(g, t, seed.hi)]
    return []


def find_periodic_tau(params: HamiltonianParams, spec: PotentialSpec, seed: Seed,
                      K: int | None = None, integrator: str = "rk4") -> float:
    K = K or hill_steps(params, spec, seed.hi)
    roots = resolve_seed(params, spec, seed, K, integrator)
    if not roots:
        raise ConvergenceError(f"seed {seed} does not contain a root of tr M - 2")
    return roots[0]


def all_periodic_taus(params: HamiltonianParams, spec: PotentialSpec, scan: FloquetScan,
                      integrator: str = "rk4") -> list[float]:
    roots = []
    for s in scan.seeds:
        roots.extend(resolve_seed(params, spec, s, scan.K, integrator))
    roots.sort()
    out = []
    for r in roots:
        if not out or r - out[-1] > 1e-9 * (1 + r):
            out.append(r)
    return out


def _profile_steps(params, spec, tau, K_profile):
    m = max(4, math.ceil(min_steps(params, spec, tau) / K_profile))
    return K_profile * m, m


def build_periodic_orbit(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                         K_profile: int = DEFAULT_PROFILE_K) -> tuple[Trajectory, bool]:
    """Closed orbit of period tau, rescaled to zero average energy.

    Returns the orbit and whether the monodromy was the identity (two
    independent planes planted, complex profile) or not (plane 1 only).
    """
    Kh = hill_steps(params, spec, tau)
    M = unimodular(monodromy_batch(params, spec, np.array([tau]), Kh)[0])
    g = np.trace(M) - 2
    if abs(g) > TRACE_TOL:
        raise PreconditionError(f"|tr M - 2| = {abs(g):.3g} exceeds {TRACE_TOL}")
    n = params.n
    q0 = np.zeros(n)
    p0 = np.zeros(n)
    full = n >= 2 and np.abs(M - np.eye(2)).max() <= IDENTITY_TOL
    if full:
        q0[0] = 1.0
        p0[1] = math.sqrt(params.E - float(spec(0.0)))
    else:
        _, sv, vt = np.linalg.svd(M - np.eye(2))
        v = vt[-1]
        res = np.linalg.norm((M - np.eye(2)) @ v)
        if res > EIGVEC_TOL:
            raise DegenerateMonodromyError(
                f"eigenvalue-1 residual {res:.3g} > {EIGVEC_TOL}; singular values {sv.tolist()}")
        v = v if v[0] >= 0 else -v
        q0[0], p0[0] = v[0], v[1] / tau
    steps, _ = _profile_steps(params, spec, tau, K_profile)
    traj = integrate_trajectory(params, spec, PhasePoint(q0, p0), tau, steps)
    orbit, _ = rescale_to_zero_mean(params, spec, traj)
    return orbit, bool(full)


def assemble_ring_eigenstate(orbit: Trajectory, E: float, K: int = DEFAULT_PROFILE_K) -> EigenstateProfile:
    """psi(phi_k) = Q_1(u_k) + i Q_2(u_k), u_k = tau k / K, phi_k = 2 pi k / K."""
    if orbit.steps % K:
        raise PreconditionError(f"orbit has {orbit.steps} steps, not a multiple of K={K}")
    m = orbit.steps // K
    q = orbit.q[::m]
    psi = q[:, 0] + (1j * q[:, 1] if orbit.n > 1 else 0)
    return EigenstateProfile(orbit.tau, E, "periodic", psi[:-1], complex(psi[-1]),
                             meta={"real": bool(orbit.n < 2 or not np.any(q[:, 1]))})


def confinement_radius(params: HamiltonianParams, spec: PotentialSpec, tau0: float) -> float:
    """exp(tau0 L) sqrt(2c / min(1, m0)) with L = max(1, E - min V).

    Points with H_t <= 0 for some t satisfy |z|^2 <= 2c / min(1, m0), and
    |X_H(z)| <= L |z|, so Gronwall bounds any orbit of duration tau0 that
    meets that set.
    """
    m0 = require_positive(params, spec)
    L = max(1.0, params.E - potential_min(spec))
    return math.sqrt(2 * params.c / min(1.0, m0)) * math.exp(abs(tau0) * L)


@dataclass
class RingSolution:
    tau_star: float
    orbit: Trajectory
    flow: LinearFlowPath
    index: CZReport
    eigenstate: EigenstateProfile
    trace_residual: float
    complex_profile: bool
    extra: dict = field(default_factory=dict)

    @property
    def radius(self) -> float:
        return self.tau_star


def solve_ring_at(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                  K_profile: int | None = None) -> RingSolution:
    """Orbit, index and eigenstate at a root tau; ``K_profile`` defaults to
    ``profile_points`` (at least DEFAULT_PROFILE_K)."""
    K_profile = K_profile or profile_points(params, spec, tau, DEFAULT_PROFILE_K)
    orbit, full = build_periodic_orbit(params, spec, tau, K_profile)
    M = monodromy_batch(params, spec, np.array([tau]), hill_steps(params, spec, tau))[0]
    flow = linearized_flow(params, spec, tau)
    return RingSolution(tau, orbit, flow, cz_index(flow),
                        assemble_ring_eigenstate(orbit, params.E, K_profile),
                        float(abs(discriminant(M))), full)


def solve_ring(params: HamiltonianParams, spec: PotentialSpec, tau_range: tuple[float, float] | None = None,
               G: int = DEFAULT_GRID, threads: int = 1, K_profile: int | None = None,
               limit: int | None = None) -> list[RingSolution]:
    """Every periodic orbit with period in the scan range, shortest first."""
    lo, hi = tau_range or (None, None)
    scan = floquet_scan(params, spec, lo, hi, G, threads)
    taus = all_periodic_taus(params, spec, scan)
    if not taus:
        raise ScanRangeError("no periodic orbit in the scanned range")
    taus = taus[:limit] if limit else taus
    return [solve_ring_at(params, spec, t, K_profile) for t in taus]


def ring_document(sol: RingSolution, params: HamiltonianParams, spec: PotentialSpec,
                  verification: dict | None = None) -> dict:
    prof = normalize(sol.eigenstate)
    doc = {
        "kind": "ring",
        "potential": potential_to_dict(spec),
        "energy": params.E,
        "c": params.c,
        "n": params.n,
        "tau_star": sol.tau_star,
        "radius": sol.radius,
        "trace_residual": sol.trace_residual,
        "cz_index": sol.index.index,
        "degenerate": sol.index.degenerate,
        "complex_profile": sol.complex_profile,
        "normalization": prof.normalization,
        "psi_end": [prof.psi_end.real, prof.psi_end.imag],
        "psi": [[float(p), float(z.real), float(z.imag)] for p, z in zip(prof.grid, prof.psi)],
    }
    if verification is not None:
        doc["verification"] = verification
    return doc


def profile_from_document(doc: dict) -> EigenstateProfile:
    """Rebuild the (normalised) profile stored in a ring or box result document."""
    psi = np.array([complex(r[1], r[2]) for r in doc["psi"]])
    end = doc.get("psi_end")
    end = None if end is None else complex(end[0], end[1])
    bc = "periodic" if doc["kind"] == "ring" else "dirichlet"
    R = doc["tau_star"]
    return EigenstateProfile(R, doc["energy"], bc, psi, end, doc.get("normalization", 1.0))
