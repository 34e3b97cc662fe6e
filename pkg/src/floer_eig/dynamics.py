"""Flow of H_t(q, p) = |p|^2/2 + (E - V(t)) |q|^2/2 - c.

The equations of motion q' = p, p' = -(E - V) q are linear, so every
integration here is a fixed-step classical RK4 written in propagator form:
one 2x2 (or 2n x 2n) matrix per step, built vectorised over all steps and
then chained. The adaptive oracle used for cross-checks is scipy's embedded
Dormand-Prince 5(4) pair.

Conventions: phase vectors are ordered (q_1..q_n, p_1..p_n), J = [[0, I], [-I, 0]],
z' = J grad H. Per configuration plane the 2x2 block acts on (q_i, p_i).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .core import HamiltonianParams, PhasePoint, PotentialSpec, Trajectory, potential_min, \
    positivity_margin
from .errors import DegenerateTrajectoryError, NumericalOverflowError, PositivityError, \
    PreconditionError

Stiffness = Callable[[np.ndarray], np.ndarray]

STEPS_PER_UNIT = 100
ORACLE_RTOL = 1e-12


# --- Hamiltonian --------------------------------------------------------------

def hamiltonian_value(params: HamiltonianParams, spec: PotentialSpec, t: float, z: PhasePoint) -> float:
    k = params.E - spec(t)
    return 0.5 * float(z.p @ z.p) + 0.5 * k * float(z.q @ z.q) - params.c


def vector_field(params: HamiltonianParams, spec: PotentialSpec, t: float, z: PhasePoint) -> PhasePoint:
    """(q', p') = (p, -(E - V(t)) q) in physical time, t the unit-interval fraction."""
    k = params.E - spec(t)
    return PhasePoint(z.p.copy(), -k * z.q)


def stiffness(params: HamiltonianParams, spec: PotentialSpec, tau: float) -> Stiffness:
    """u -> E - V(u / tau) on physical time [0, tau]."""
    return lambda u: params.E - np.asarray(spec(np.asarray(u) / tau))


def doubled_stiffness(params: HamiltonianParams, spec: PotentialSpec, tau: float) -> Stiffness:
    """Stiffness of a chord followed by its reflection: the second leg on
    [tau, 2 tau] sees the potential time-reversed, E - V((2 tau - u) / tau)."""
    def k(u):
        u = np.asarray(u, dtype=float)
        t = np.where(u <= tau, u / tau, (2 * tau - u) / tau)
        return params.E - np.asarray(spec(np.clip(t, 0.0, 1.0)))
    return k


def min_steps(params: HamiltonianParams, spec: PotentialSpec, tau: float) -> int:
    """Smallest admissible step count: 50 steps per shortest oscillation period."""
    return int(math.ceil(50 * tau * math.sqrt(max(1.0, params.E - potential_min(spec)))))


def default_steps(params: HamiltonianParams, spec: PotentialSpec, tau: float) -> int:
    k = int(math.ceil(STEPS_PER_UNIT * tau * math.sqrt(max(1.0, params.E - potential_min(spec)))))
    return max(k + (k % 2), 64)


def profile_points(params: HamiltonianParams, spec: PotentialSpec, tau: float, minimum: int = 512) -> int:
    """Profile grid size: the smallest minimum * 2^j with at least 80 samples per
    radian of the fastest local phase, which keeps the second-difference
    residual of a profile near 1e-5 or below."""
    need = 80 * tau * math.sqrt(max(params.E - potential_min(spec), 0.0))
    K = minimum
    while K < need:
        K *= 2
    return K


def require_positive(params: HamiltonianParams, spec: PotentialSpec) -> float:
    m0 = positivity_margin(params, spec)
    if m0 <= 0:
        raise PositivityError(m0)
    return m0


# --- RK4 in propagator form -----------------------------------------------------

def rk4_propagators(a0: np.ndarray, am: np.ndarray, a1: np.ndarray, h) -> np.ndarray:
    """One classical RK4 step for z' = A(u) z, as a matrix.

    ``a0``, ``am``, ``a1`` hold A at the start, midpoint and end of each step
    (shape (..., m, m)); ``h`` broadcasts against the leading axes.
    """
    h = np.asarray(h, dtype=float)[..., None, None]
    eye = np.eye(a0.shape[-1])
    b1 = eye + 0.5 * h * a0
    amb1 = am @ b1
    b2 = eye + 0.5 * h * amb1
    amb2 = am @ b2
    b3 = eye + h * amb2
    return eye + h / 6.0 * (a0 + 2.0 * amb1 + 2.0 * amb2 + a1 @ b3)


def hill_generator(k: np.ndarray) -> np.ndarray:
    """A = [[0, 1], [-k, 0]] stacked over the shape of ``k``."""
    k = np.asarray(k, dtype=float)
    a = np.zeros(k.shape + (2, 2))
    a[..., 0, 1] = 1.0
    a[..., 1, 0] = -k
    return a


def chain_product(props: np.ndarray) -> np.ndarray:
    """P_{K-1} ... P_1 P_0 over axis -3, by pairwise reduction."""
    p = props
    while p.shape[-3] > 1:
        if p.shape[-3] % 2:
            pad = np.broadcast_to(np.eye(p.shape[-1]), p.shape[:-3] + (1,) + p.shape[-2:])
            p = np.concatenate([p, pad], axis=-3)
        p = p[..., 1::2, :, :] @ p[..., 0::2, :, :]
    return p[..., 0, :, :]


def prefix_products(props: np.ndarray) -> np.ndarray:
    """Phi_j = P_{j-1} ... P_0 for j = 0..K (Phi_0 = I)."""
    k, m = props.shape[0], props.shape[-1]
    out = np.empty((k + 1, m, m))
    out[0] = np.eye(m)
    for j in range(k):
        out[j + 1] = props[j] @ out[j]
    return out


def _check_finite(x, what="state"):
    if not np.all(np.isfinite(x)):
        raise NumericalOverflowError(f"non-finite {what} during integration")


def _nodes(T: float, K: int):
    h = T / K
    u = np.arange(K) * h
    return u, u + 0.5 * h, u + h, h


def block_propagators(k_fn: Stiffness, T: float, K: int) -> np.ndarray:
    u0, um, u1, h = _nodes(T, K)
    return rk4_propagators(hill_generator(k_fn(u0)), hill_generator(k_fn(um)),
                           hill_generator(k_fn(u1)), h)


def integrate_linear(k_fn: Stiffness, z0, T: float, K: int) -> np.ndarray:
    """Samples (K + 1, 2n) of q' = p, p' = -k(u) q from z0 over [0, T]."""
    z0 = np.asarray(z0.as_array() if isinstance(z0, PhasePoint) else z0, dtype=float)
    n = z0.size // 2
    props = block_propagators(k_fn, T, K)
    _check_finite(props, "propagator")
    state = np.vstack([z0[:n], z0[n:]])  # rows q, p; one column per plane
    out = np.empty((K + 1, 2 * n))
    out[0] = z0
    for j in range(K):
        state = props[j] @ state
        out[j + 1, :n] = state[0]
        out[j + 1, n:] = state[1]
    _check_finite(out)
    return out


def integrate_trajectory(params: HamiltonianParams, spec: PotentialSpec, z0: PhasePoint,
                         tau: float, steps: int | None = None,
                         kind: str = "periodic-orbit") -> Trajectory:
    K = steps or default_steps(params, spec, tau)
    if K < min_steps(params, spec, tau):
        raise PreconditionError(f"{K} steps below the minimum {min_steps(params, spec, tau)}")
    z = integrate_linear(stiffness(params, spec, tau), z0, tau, K)
    return Trajectory(tau, z, kind)


# --- linearised flow ------------------------------------------------------------

@dataclass(frozen=True)
class HessianPath:
    """Diagonal Hessian of H along a path: per plane (D11, D22) = (E - V, 1)."""

    u: np.ndarray
    d11: np.ndarray
    d22: np.ndarray
    n: int

    def full(self) -> np.ndarray:
        """(K + 1, 2n) diagonals in (q_1..q_n, p_1..p_n) ordering."""
        return np.hstack([np.repeat(self.d11[:, None], self.n, axis=1),
                          np.repeat(self.d22[:, None], self.n, axis=1)])


@dataclass(frozen=True)
class LinearFlowPath:
    """Linearised flow phi(u_j), u_j = j T / K, of a decoupled quadratic Hamiltonian.

    ``blocks`` is the common 2x2 factor acting on every (q_i, p_i) plane;
    ``mats`` is the full 2n x 2n flow integrated directly. The stiffness
    callable is retained so the path can be re-integrated on a finer grid.
    """

    tau: float
    blocks: np.ndarray
    mats: np.ndarray
    n: int
    stiffness: Stiffness

    @property
    def steps(self) -> int:
        return self.blocks.shape[0] - 1

    @property
    def u(self) -> np.ndarray:
        return np.linspace(0.0, self.tau, self.steps + 1)

    def block_list(self) -> np.ndarray:
        """(K + 1, n, 2, 2): one copy of the block per plane."""
        return np.repeat(self.blocks[:, None], self.n, axis=1)

    def hessian(self) -> HessianPath:
        u = self.u
        k = np.asarray(self.stiffness(u), dtype=float) * np.ones_like(u)
        return HessianPath(u, k, np.ones_like(u), self.n)

    def refined(self, factor: int = 2) -> LinearFlowPath:
        return flow_from_stiffness(self.stiffness, self.tau, self.steps * factor, self.n)

    def endpoint(self) -> np.ndarray:
        return self.mats[-1]


def symplectic_form(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def flow_from_stiffness(k_fn: Stiffness, T: float, K: int, n: int) -> LinearFlowPath:
    props = block_propagators(k_fn, T, K)
    _check_finite(props, "propagator")
    blocks = prefix_products(props)
    J = symplectic_form(n)
    u0, um, u1, h = _nodes(T, K)

    def generator(u):
        k = np.asarray(k_fn(u), dtype=float) * np.ones_like(u)
        d = np.zeros(u.shape + (2 * n, 2 * n))
        idx = np.arange(n)
        d[:, idx, idx] = k[:, None]
        d[:, n + idx, n + idx] = 1.0
        return J @ d

    full = prefix_products(rk4_propagators(generator(u0), generator(um), generator(u1), h))
    _check_finite(full, "flow")
    return LinearFlowPath(T, blocks, full, n, k_fn)


def linearized_flow(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                    steps: int | None = None) -> LinearFlowPath:
    """Integrate d phi / du = J D^2H phi from the identity over [0, tau].

    The system is linear, so phi does not depend on the base orbit.
    """
    K = steps or default_steps(params, spec, tau)
    return flow_from_stiffness(stiffness(params, spec, tau), tau, K, params.n)


def doubled_flow(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                 steps: int | None = None) -> LinearFlowPath:
    """Linearised flow over [0, 2 tau] with the reversed second leg."""
    K = steps or 2 * default_steps(params, spec, tau)
    K += K % 2  # the reflection point u = tau must be a grid node
    return flow_from_stiffness(doubled_stiffness(params, spec, tau), 2 * tau, K, params.n)


# --- monodromy of the rescaled Hill equation ------------------------------------

def _hill_k_nodes(params, spec, K):
    s0 = np.arange(K) / K
    return (params.E - np.asarray(spec(s0)), params.E - np.asarray(spec(s0 + 0.5 / K)),
            params.E - np.asarray(spec(s0 + 1.0 / K)))


def hill_steps(params: HamiltonianParams, spec: PotentialSpec, tau_max: float) -> int:
    return default_steps(params, spec, max(tau_max, 1.0))


def monodromy(params: HamiltonianParams, spec: PotentialSpec, tau: float,
              steps: int | None = None) -> tuple[np.ndarray, float]:
    """Monodromy of w'' + tau^2 (E - V(s)) w = 0 over s in [0, 1] and its trace.

    Columns are the solutions with (w, w')(0) = (1, 0) and (0, 1), primes in s.
    """
    require_positive(params, spec)
    K = steps or hill_steps(params, spec, tau)
    m = monodromy_batch(params, spec, np.array([tau]), K)[0]
    return m, float(np.trace(m))


def monodromy_batch(params: HamiltonianParams, spec: PotentialSpec, taus: np.ndarray,
                    K: int, threads: int = 1, chunk: int = 32) -> np.ndarray:
    """Monodromies for many tau on one shared s-grid, shape (len(taus), 2, 2)."""
    k0, km, k1 = _hill_k_nodes(params, spec, K)
    taus = np.asarray(taus, dtype=float)

    def work(ts):
        t2 = (ts ** 2)[:, None]
        props = rk4_propagators(hill_generator(t2 * k0), hill_generator(t2 * km),
                                hill_generator(t2 * k1), 1.0 / K)
        return chain_product(props)

    parts = [taus[i:i + chunk] for i in range(0, taus.size, chunk)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(work, parts))
    else:
        out = [work(p) for p in parts]
    res = np.concatenate(out, axis=0)
    _check_finite(res, "monodromy")
    return res


def monodromy_tau_derivative(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                             K: int) -> tuple[np.ndarray, np.ndarray]:
    """(M, dM/dtau) by RK4 on the variational system in tau.

    With Y' = A Y, A = [[0, 1], [-tau^2 k, 0]], Z = dY/dtau obeys
    Z' = A Z + (dA/dtau) Y; the pair is one linear 4x4 block system.
    """
    k0, km, k1 = _hill_k_nodes(params, spec, K)

    def gen(k):
        a = hill_generator(tau ** 2 * k)
        da = np.zeros_like(a)
        da[..., 1, 0] = -2 * tau * k
        g = np.zeros(k.shape + (4, 4))
        g[..., :2, :2] = a
        g[..., 2:, 2:] = a
        g[..., 2:, :2] = da
        return g

    big = chain_product(rk4_propagators(gen(k0), gen(km), gen(k1), 1.0 / K))
    return big[:2, :2], big[2:, :2]


# --- adaptive oracle --------------------------------------------------------------

def oracle_monodromy(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                     rtol: float = ORACLE_RTOL) -> np.ndarray:
    def rhs(s, y):
        k = tau ** 2 * (params.E - spec(s))
        return [y[2], y[3], -k * y[0], -k * y[1]]

    sol = solve_ivp(rhs, (0.0, 1.0), [1.0, 0.0, 0.0, 1.0], method="RK45", rtol=rtol, atol=1e-14)
    y = sol.y[:, -1]
    return np.array([[y[0], y[1]], [y[2], y[3]]])


def oracle_dirichlet(params: HamiltonianParams, spec: PotentialSpec, tau: float,
                     rtol: float = ORACLE_RTOL) -> float:
    def rhs(s, y):
        return [y[1], -tau ** 2 * (params.E - spec(s)) * y[0]]

    sol = solve_ivp(rhs, (0.0, 1.0), [0.0, 1.0], method="RK45", rtol=rtol, atol=1e-14)
    return float(sol.y[0, -1])


def oracle_linear(k_fn: Stiffness, z0, T: float, t_eval=None, rtol: float = ORACLE_RTOL) -> np.ndarray:
    """Adaptive integration of q' = p, p' = -k(u) q; rows of the result match ``t_eval``."""
    z0 = np.asarray(z0.as_array() if isinstance(z0, PhasePoint) else z0, dtype=float)
    n = z0.size // 2

    def rhs(u, z):
        return np.concatenate([z[n:], -k_fn(u) * z[:n]])

    t_eval = np.array([0.0, T]) if t_eval is None else np.asarray(t_eval)
    sol = solve_ivp(rhs, (0.0, T), z0, method="RK45", rtol=rtol, atol=1e-14, t_eval=t_eval)
    return sol.y.T


def oracle_trajectory(params: HamiltonianParams, spec: PotentialSpec, z0, tau: float,
                      t_eval=None, rtol: float = ORACLE_RTOL) -> np.ndarray:
    return oracle_linear(stiffness(params, spec, tau), z0, tau, t_eval, rtol)


# --- energy averages ---------------------------------------------------------------

def _quadratic_energy(traj: Trajectory, k: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum(traj.p ** 2, axis=1) + 0.5 * k * np.sum(traj.q ** 2, axis=1)


def _loop_mean(values: np.ndarray) -> float:
    """Composite quadrature of samples on the unit loop parameter."""
    t = np.linspace(0.0, 1.0, values.size)
    return float(simpson(values, x=t))


def mean_quadratic_energy(params: HamiltonianParams, spec: PotentialSpec, traj: Trajectory,
                          k_fn: Stiffness | None = None) -> float:
    if traj.steps + 1 < 8:
        raise PreconditionError("average needs at least 8 samples")
    k_fn = k_fn or stiffness(params, spec, traj.tau)
    return _loop_mean(_quadratic_energy(traj, k_fn(traj.u)))


def average_energy(params: HamiltonianParams, spec: PotentialSpec, traj: Trajectory,
                   k_fn: Stiffness | None = None) -> float:
    """Integral over the loop parameter t in [0, 1] of H_t(x(t)), x(t) = traj(tau t)."""
    return mean_quadratic_energy(params, spec, traj, k_fn) - params.c


def rescale_to_zero_mean(params: HamiltonianParams, spec: PotentialSpec, traj: Trajectory,
                         k_fn: Stiffness | None = None) -> tuple[Trajectory, float]:
    """Scale a trajectory so its average energy vanishes. Returns (scaled, factor)."""
    ebar = mean_quadratic_energy(params, spec, traj, k_fn)
    if not ebar > 0:
        raise DegenerateTrajectoryError(f"mean quadratic energy {ebar:.3g} is not positive")
    s = math.sqrt(params.c / ebar)
    return traj.scaled(s), s
