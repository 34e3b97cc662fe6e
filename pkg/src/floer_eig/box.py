"""Dirichlet chords and box eigenstates.

A chord starts and ends on the plane {q = 0}. In the unit parameter the
scalar profile solves w'' + tau^2 (E - V(s)) w = 0 with w(0) = 0, w'(0) = 1,
and chords are the zeros of tau -> w(1). Reflecting a chord through
zeta(q, p) = (-q, p) and running it backwards closes it into a periodic orbit
of twice the duration, whose index is even; half of it is the chord index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import EigenstateProfile, HamiltonianParams, PhasePoint, PotentialSpec, Trajectory, \
    potential_min, potential_to_dict
from .czindex import CZReport, cz_index
from .dynamics import doubled_flow, doubled_stiffness, hill_steps, integrate_linear, \
    integrate_trajectory, min_steps, monodromy_batch, oracle_dirichlet, profile_points, \
    rescale_to_zero_mean, require_positive
from .errors import ConvergenceError, ParityError, PreconditionError, ScanRangeError, \
    SymmetryError
from .verify import normalize

SHOOT_TOL = 1e-8
ENDPOINT_TOL = 1e-7
JUNCTION_TOL = 1e-6
DEFAULT_PROFILE_K = 512


def dirichlet_shoot_batch(params: HamiltonianParams, spec: PotentialSpec, taus, K: int | None = None,
                          threads: int = 1) -> np.ndarray:
    """w(1) for many tau: the (0, 1) entry of the monodromy."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    K = K or hill_steps(params, spec, float(taus.max()))
    return monodromy_batch(params, spec, taus, K, threads)[:, 0, 1]


def dirichlet_shoot(params: HamiltonianParams, spec: PotentialSpec, tau: float, K: int | None = None,
                    integrator: str = "rk4") -> float:
    require_positive(params, spec)
    if integrator == "adaptive":
        return oracle_dirichlet(params, spec, tau)
    if integrator != "rk4":
        raise PreconditionError(f"unknown integrator {integrator!r}")
    return float(dirichlet_shoot_batch(params, spec, [tau], K)[0])


def chord_scan_range(params: HamiltonianParams, spec: PotentialSpec, k: int) -> tuple[float, float]:
    m0 = require_positive(params, spec)
    return 0.1, (k + 1) * np.pi / math.sqrt(m0) + 1


def find_chord_tau(params: HamiltonianParams, spec: PotentialSpec, k: int = 1,
                   integrator: str = "rk4", threads: int = 1) -> float:
    """k-th positive zero of tau -> w(1)."""
    if k < 1:
        raise PreconditionError("chord index k starts at 1")
    lo, hi = chord_scan_range(params, spec, k)
    # zeros of w(1) are at least pi / sqrt(E - min V) apart
    gap = np.pi / math.sqrt(params.E - potential_min(spec))
    G = max(256, math.ceil(8 * (hi - lo) / gap))
    K = hill_steps(params, spec, hi)
    taus = np.linspace(lo, hi, G)
    w = dirichlet_shoot_batch(params, spec, taus, K, threads)
    flips = np.nonzero(w[:-1] * w[1:] < 0)[0]
    if len(flips) < k:
        raise ScanRangeError(f"only {len(flips)} sign changes of w(1) in [{lo}, {hi}]")
    a, b = taus[flips[k - 1]], taus[flips[k - 1] + 1]
    f = (lambda t: dirichlet_shoot(params, spec, t, K, integrator))
    try:
        return float(brentq(f, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200))
    except RuntimeError as exc:
        raise ConvergenceError(f"no convergence in [{a}, {b}]") from exc


def _profile_steps(params, spec, tau, K_profile):
    return K_profile * max(4, math.ceil(min_steps(params, spec, tau) / K_profile))


def build_chord(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                K_profile: int = DEFAULT_PROFILE_K, beta: float | None = None) -> Trajectory:
    """Chord from q = 0, p = e_1 (or (cos beta, sin beta) across the first two
    planes), rescaled to zero average energy over the unit chord parameter."""
    w1 = dirichlet_shoot(params, spec, tau)
    if abs(w1) > SHOOT_TOL:
        raise PreconditionError(f"|w(1)| = {abs(w1):.3g} exceeds {SHOOT_TOL}")
    p0 = np.zeros(params.n)
    if beta is None or params.n < 2:
        p0[0] = 1.0
    else:
        p0[0], p0[1] = math.cos(beta), math.sin(beta)
    steps = _profile_steps(params, spec, tau, K_profile)
    traj = integrate_trajectory(params, spec, PhasePoint(np.zeros(params.n), p0), tau, steps, kind="chord")
    end = np.linalg.norm(traj.q[-1])
    if end > ENDPOINT_TOL * traj.amplitude():
        raise PreconditionError(f"chord endpoint |q(tau)| = {end:.3g} off the plane q = 0")
    chord, _ = rescale_to_zero_mean(params, spec, traj)
    return chord


def zeta(z: np.ndarray) -> np.ndarray:
    """(q, p) -> (-q, p) on arrays whose last axis is (q_1..q_n, p_1..p_n)."""
    out = np.array(z, dtype=float, copy=True)
    n = out.shape[-1] // 2
    out[..., :n] *= -1
    return out


def double_chord(chord: Trajectory, tol: float = JUNCTION_TOL) -> Trajectory:
    """Concatenate a chord with its reflected reversal into a 2 tau periodic orbit."""
    K = chord.steps
    scale = chord.amplitude()
    if np.linalg.norm(chord.q[0]) > tol * scale or np.linalg.norm(chord.q[-1]) > tol * scale:
        # velocity jumps by 2 q(tau) / h at the junction unless q(tau) = 0
        raise SymmetryError("chord endpoints are not on q = 0; reflected leg does not join")
    back = zeta(chord.z[K - 1::-1])
    z = np.vstack([chord.z, back])
    doubled = Trajectory(2 * chord.tau, z, "periodic-orbit")
    if doubled.closure() > tol * scale:
        raise SymmetryError(f"doubled orbit closure {doubled.closure():.3g}")
    return doubled


def doubled_residual(params: HamiltonianParams, spec: PotentialSpec, doubled: Trajectory) -> float:
    """max |x_direct - x_doubled| / scale, with x_direct integrated over [0, 2 tau]
    under the reversed-leg stiffness."""
    tau = doubled.tau / 2
    z = integrate_linear(doubled_stiffness(params, spec, tau), doubled.z[0], doubled.tau, doubled.steps)
    return float(np.abs(z - doubled.z).max() / doubled.amplitude())


def zero_count(chord: Trajectory) -> int:
    """Interior sign changes of the planted profile w = q_1 (or |q| projection)."""
    q = chord.q
    w = q[:, 0] if np.any(q[:, 0]) else q[:, 1]
    inner = w[1:-1]
    inner = inner[np.abs(inner) > 1e-9 * np.abs(w).max()]
    return int(np.count_nonzero(inner[:-1] * inner[1:] < 0))


def chord_index(params: HamiltonianParams, spec: PotentialSpec, tau: float) -> tuple[int, CZReport]:
    """Half the index of the doubled flow over [0, 2 tau]; an odd doubled index is an error."""
    rep = cz_index(doubled_flow(params, spec, tau))
    if rep.index % 2:
        raise ParityError(f"doubled index {rep.index} is odd")
    return rep.index // 2, rep


def assemble_box_eigenstate(chord: Trajectory, E: float, K: int = DEFAULT_PROFILE_K) -> EigenstateProfile:
    """psi(s_k) = Q_1(u_k) + i Q_2(u_k), u_k = tau k / K, on the box of length l_E = tau."""
    if chord.steps % K:
        raise PreconditionError(f"chord has {chord.steps} steps, not a multiple of K={K}")
    q = chord.q[::chord.steps // K]
    psi = q[:, 0] + (1j * q[:, 1] if chord.n > 1 else 0)
    tau = chord.tau
    return EigenstateProfile(tau, E, "dirichlet", psi,
                             meta={"placement": {"from": [0.0, tau], "to": [tau, tau]}})


@dataclass
class BoxSolution:
    tau_star: float
    chord: Trajectory
    doubled: Trajectory
    chord_index: int
    doubled_index: CZReport
    eigenstate: EigenstateProfile
    zero_count: int
    endpoint_residual: float
    extra: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return self.tau_star


def solve_box_at(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                 K_profile: int | None = None, beta: float | None = None) -> BoxSolution:
    """Chord, doubling, index and eigenstate at a zero tau; ``K_profile``
    defaults to ``profile_points`` (at least DEFAULT_PROFILE_K)."""
    K_profile = K_profile or profile_points(params, spec, tau, DEFAULT_PROFILE_K)
    chord = build_chord(params, spec, tau, K_profile, beta)
    doubled = double_chord(chord)
    idx, rep = chord_index(params, spec, tau)
    res = float(np.linalg.norm(chord.q[-1]) / chord.amplitude())
    return BoxSolution(tau, chord, doubled, idx, rep, assemble_box_eigenstate(chord, params.E, K_profile),
                       zero_count(chord), res)


def solve_box(params: HamiltonianParams, spec: PotentialSpec, k: int = 1,
              K_profile: int | None = None, beta: float | None = None,
              threads: int = 1) -> BoxSolution:
    return solve_box_at(params, spec, find_chord_tau(params, spec, k, threads=threads), K_profile, beta)


def box_document(sol: BoxSolution, params: HamiltonianParams, spec: PotentialSpec,
                 verification: dict | None = None) -> dict:
    prof = normalize(sol.eigenstate)
    doc = {
        "kind": "box",
        "potential": potential_to_dict(spec),
        "energy": params.E,
        "c": params.c,
        "n": params.n,
        "tau_star": sol.tau_star,
        "length": sol.length,
        "endpoint_residual": sol.endpoint_residual,
        "chord_index": sol.chord_index,
        "doubled_index": sol.doubled_index.index,
        "degenerate": sol.doubled_index.degenerate,
        "zero_count": sol.zero_count,
        "placement": prof.meta["placement"],
        "normalization": prof.normalization,
        "psi": [[float(s), float(z.real), float(z.imag)] for s, z in zip(prof.grid, prof.psi)],
    }
    if verification is not None:
        doc["verification"] = verification
    return doc
