"""Discretised Rabinowitz action functional.

    A(x, eta) = int_0^1 x* lambda - eta int_0^1 H_t(x(t)) dt,   lambda = (p dq - q dp) / 2.

Per configuration plane the loop variables y = (q, p) enter through two
quadratic forms, so on every discretisation

    A = y^T L y / 2 - eta (y^T H y / 2 - c),

and at a discrete critical point L y = eta H y, whence A = eta c exactly.
The default scheme differentiates spectrally (Fourier derivative on the unit
loop, trapezoid quadrature for H); the "midpoint" scheme averages neighbours,
which turns the Liouville sum into a central difference.

Chord mode works on [0, 1] with q pinned to 0 at both ends. Chords are
embedded into loops of 2N samples by reflection through (q, p) -> (-q, p);
the chord action is half the action of the doubled loop at multiplier 2 eta.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .core import HamiltonianParams, PhasePoint, PotentialSpec, Trajectory
from .errors import ConvergenceError, DegenerateCriticalPointError, PreconditionError

MIN_SAMPLES = 32
SCHEMES = ("spectral", "midpoint")
MODES = ("loop", "chord")


# --- loops -------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscretizedLoop:
    """Samples x_j = (q_j, p_j) at t_j = j / N.

    Loop mode stores j = 0..N-1 (periodic); chord mode stores j = 0..N with
    q_0 = q_N = 0. ``q`` and ``p`` have shape (samples, n).
    """

    q: np.ndarray
    p: np.ndarray
    eta: float
    mode: str = "loop"

    def __post_init__(self):
        q = np.array(self.q, dtype=float, ndmin=2)
        p = np.array(self.p, dtype=float, ndmin=2)
        if q.shape != p.shape:
            raise PreconditionError("q and p sample arrays differ in shape")
        if self.mode not in MODES:
            raise PreconditionError(f"unknown mode {self.mode!r}")
        if self.mode == "chord":
            q[0] = 0.0
            q[-1] = 0.0
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eta", float(self.eta))
        if self.N < MIN_SAMPLES:
            raise PreconditionError(f"need N >= {MIN_SAMPLES}, got {self.N}")

    @property
    def N(self) -> int:
        return self.q.shape[0] - (1 if self.mode == "chord" else 0)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.q.shape[0]) / self.N

    def points(self) -> np.ndarray:
        return np.hstack([self.q, self.p])

    def radius(self) -> float:
        return float(np.sqrt((self.q ** 2 + self.p ** 2).sum(axis=1)).max())

    def with_eta(self, eta: float) -> DiscretizedLoop:
        return DiscretizedLoop(self.q, self.p, eta, self.mode)


def constant_loop(z: PhasePoint, N: int, eta: float = 0.0) -> DiscretizedLoop:
    return DiscretizedLoop(np.tile(z.q, (N, 1)), np.tile(z.p, (N, 1)), eta)


# --- operators ---------------------------------------------------------------------

def spectral_derivative(M: int) -> np.ndarray:
    """Fourier differentiation on M equispaced samples of the unit loop, Nyquist mode dropped."""
    k = np.fft.fftfreq(M, 1.0 / M)
    if M % 2 == 0:
        k[M // 2] = 0.0
    return np.real(np.fft.ifft(2j * np.pi * k[:, None] * np.fft.fft(np.eye(M), axis=0), axis=0))


def central_derivative(M: int) -> np.ndarray:
    D = np.zeros((M, M))
    j = np.arange(M)
    D[j, (j + 1) % M] = M / 2.0
    D[j, (j - 1) % M] = -M / 2.0
    return D


def _loop_forms(k_nodes: np.ndarray, k_mid: np.ndarray, scheme: str):
    """(L, H) on one plane of an M-sample periodic loop, variables (q, p)."""
    M = k_nodes.size
    Z = np.zeros((M, M))
    if scheme == "spectral":
        D = spectral_derivative(M)
        Hq, Hp = np.diag(k_nodes) / M, np.eye(M) / M
    else:
        D = central_derivative(M)
        avg = 0.5 * (np.eye(M) + np.roll(np.eye(M), 1, axis=1))
        Hq = avg.T @ np.diag(k_mid) @ avg / M
        Hp = avg.T @ avg / M
    L = np.block([[Z, D.T], [D, Z]]) / M
    H = np.block([[Hq, Z], [Z, Hp]])
    return L, H


def doubling_embedding(N: int) -> np.ndarray:
    """S mapping chord variables (q_1..q_{N-1}, p_0..p_N) to a 2N-sample loop
    (q_hat, p_hat) with q_hat_{2N-j} = -q_j and p_hat_{2N-j} = p_j."""
    M = 2 * N
    S = np.zeros((2 * M, 2 * N))
    for j in range(1, N):
        S[j, j - 1] = 1.0
        S[M - j, j - 1] = -1.0
    off = N - 1
    for j in range(N + 1):
        S[M + j, off + j] = 1.0
        if 0 < j < N:
            S[M + M - j, off + j] = 1.0
    return S


@dataclass(frozen=True)
class Discretization:
    """Quadratic forms of the action on one plane, in the free variables."""

    L: np.ndarray
    H: np.ndarray
    N: int
    mode: str
    scheme: str
    c: float

    def pack(self, loop: DiscretizedLoop) -> np.ndarray:
        """(n, 2N) free-variable array."""
        if self.mode == "loop":
            return np.hstack([loop.q.T, loop.p.T])
        return np.hstack([loop.q[1:-1].T, loop.p.T])

    def unpack(self, y: np.ndarray, eta: float) -> DiscretizedLoop:
        N = self.N
        if self.mode == "loop":
            return DiscretizedLoop(y[:, :N].T, y[:, N:].T, eta, "loop")
        n = y.shape[0]
        q = np.vstack([np.zeros(n), y[:, :N - 1].T, np.zeros(n)])
        return DiscretizedLoop(q, y[:, N - 1:].T, eta, "chord")


@lru_cache(maxsize=32)
def _discretization(E: float, c: float, spec: PotentialSpec, N: int, mode: str, scheme: str) -> Discretization:
    if scheme not in SCHEMES:
        raise PreconditionError(f"unknown scheme {scheme!r}")
    if mode == "loop":
        t = np.arange(N) / N
        L, H = _loop_forms(E - np.asarray(spec(t)), E - np.asarray(spec((t + 0.5 / N) % 1.0)), scheme)
        return Discretization(L, H, N, mode, scheme, c)
    M = 2 * N
    that = np.arange(M) / M
    mirror = lambda s: np.where(s <= 1.0, s, 2.0 - s)  # noqa: E731
    k_nodes = E - np.asarray(spec(mirror(2 * that)))
    k_mid = E - np.asarray(spec(mirror(2 * that + 1.0 / N)))
    L, H = _loop_forms(k_nodes, k_mid, scheme)
    S = doubling_embedding(N)
    return Discretization(0.5 * S.T @ L @ S, S.T @ H @ S, N, mode, scheme, c)


def discretize(params: HamiltonianParams, spec: PotentialSpec, N: int, mode: str = "loop",
               scheme: str = "spectral") -> Discretization:
    return _discretization(float(params.E), float(params.c), spec, int(N), mode, scheme)


# --- action and gradient -----------------------------------------------------------

@dataclass(frozen=True)
class ActionReport:
    action: float
    grad_norm: float
    constraint: float
    eta: float
    liouville: float

    def to_dict(self) -> dict:
        return {"action": self.action, "grad_norm": self.grad_norm, "constraint": self.constraint,
                "eta": self.eta, "liouville": self.liouville}


def _parts(disc: Discretization, y: np.ndarray):
    Ly = y @ disc.L.T
    Hy = y @ disc.H.T
    liou = 0.5 * float(np.sum(y * Ly))
    F = 0.5 * float(np.sum(y * Hy)) - disc.c
    return Ly, Hy, liou, F


def _grad(disc: Discretization, y: np.ndarray, eta: float):
    Ly, Hy, liou, F = _parts(disc, y)
    gy = disc.N * (Ly - eta * Hy)
    return gy, -F, liou, F


def _norm(disc: Discretization, gy: np.ndarray, geta: float) -> float:
    return math.sqrt(float(np.sum(gy ** 2)) / disc.N + geta ** 2)


def action_value(params: HamiltonianParams, spec: PotentialSpec, loop: DiscretizedLoop,
                 scheme: str = "spectral") -> ActionReport:
    disc = discretize(params, spec, loop.N, loop.mode, scheme)
    gy, geta, liou, F = _grad(disc, disc.pack(loop), loop.eta)
    return ActionReport(liou - loop.eta * F, _norm(disc, gy, geta), F, loop.eta, liou)


@dataclass(frozen=True)
class ActionGradient:
    """Gradient in the metric with weight 1/N on samples and 1 on eta.

    ``dq`` and ``dp`` have the loop's sample shape; in chord mode the q rows
    at both ends are zero.
    """

    dq: np.ndarray
    dp: np.ndarray
    deta: float
    norm: float

    def directional(self, vq, vp, veta, N: int) -> float:
        """<grad, v> in the same metric: the first-order change of A along v."""
        return float(np.sum(self.dq * vq) + np.sum(self.dp * vp)) / N + self.deta * veta


def action_gradient(params: HamiltonianParams, spec: PotentialSpec, loop: DiscretizedLoop,
                    scheme: str = "spectral") -> ActionGradient:
    disc = discretize(params, spec, loop.N, loop.mode, scheme)
    gy, geta, _, _ = _grad(disc, disc.pack(loop), loop.eta)
    g = disc.unpack(gy, 0.0)
    return ActionGradient(g.q, g.p, geta, _norm(disc, gy, geta))


# --- Newton ------------------------------------------------------------------------

@dataclass
class NewtonResult:
    loop: DiscretizedLoop
    iterations: int
    history: list = field(default_factory=list)
    iterates: list = field(default_factory=list)


def newton_refine(params: HamiltonianParams, spec: PotentialSpec, seed: DiscretizedLoop,
                  tol: float = 1e-9, max_iter: int = 30, scheme: str = "spectral") -> NewtonResult:
    """Newton iteration on grad A = 0 with minimum-norm steps.

    The critical set is not isolated (time shifts, rotations mixing the
    planes), so the Jacobian has a kernel; least-squares steps move
    orthogonally to it. ``history`` holds the ActionReport of every iterate and
    ``iterates`` the loops themselves.
    """
    disc = discretize(params, spec, seed.N, seed.mode, scheme)
    y = disc.pack(seed)
    eta = seed.eta
    n, m = y.shape
    history, iterates = [], []
    NL = disc.N * disc.L
    NH = disc.N * disc.H
    for it in range(max_iter + 1):
        gy, geta, liou, F = _grad(disc, y, eta)
        norm = _norm(disc, gy, geta)
        history.append(ActionReport(liou - eta * F, norm, F, eta, liou))
        iterates.append(disc.unpack(y, eta))
        if norm <= tol:
            return NewtonResult(iterates[-1], it, history, iterates)
        if it == max_iter:
            break
        Hy = y @ disc.H.T
        J = np.zeros((n * m + 1, n * m + 1))
        for i in range(n):
            sl = slice(i * m, (i + 1) * m)
            J[sl, sl] = NL - eta * NH
            J[sl, -1] = -disc.N * Hy[i]
            J[-1, sl] = -Hy[i]
        rhs = -np.concatenate([gy.ravel(), [geta]])
        step, *_ = np.linalg.lstsq(J, rhs, rcond=1e-12)
        miss = np.linalg.norm(J @ step - rhs)
        if miss > 0.5 * np.linalg.norm(rhs):
            raise DegenerateCriticalPointError(
                f"Newton system inconsistent: residual {miss:.3g} of {np.linalg.norm(rhs):.3g}")
        y = y + step[:-1].reshape(n, m)
        eta = eta + step[-1]
    raise ConvergenceError(f"Newton did not reach |grad A| <= {tol} in {max_iter} iterations "
                           f"(last {history[-1].grad_norm:.3g})")


# --- gradient flow -----------------------------------------------------------------

@dataclass
class FlowLine:
    s: np.ndarray
    reports: list
    loop: DiscretizedLoop
    escaped: bool
    stalled: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("s,action,grad_norm,eta\n")
        for s, r in zip(self.s, self.reports):
            buf.write(",".join(repr(float(x)) for x in (s, r.action, r.grad_norm, r.eta)) + "\n")
        return buf.getvalue()


def flow_line(params: HamiltonianParams, spec: PotentialSpec, start: DiscretizedLoop,
              s_max: float, step: float | None = None, floor: float = -1e8,
              scheme: str = "spectral", max_halvings: int = 30, strict: bool = True) -> FlowLine:
    """Explicit negative-gradient descent with backtracking.

    A step is accepted only if it lowers the action (with ``strict=False``,
    if it does not raise it beyond rounding level); otherwise it is halved.
    Crossing ``floor`` ends the run as an escape (the functional is unbounded
    below); exhausting the halvings ends it as stalled (numerically critical).
    """
    disc = discretize(params, spec, start.N, start.mode, scheme)
    h0 = step if step is not None else 1e-3 / start.N
    y = disc.pack(start)
    eta = start.eta
    s = 0.0
    gy, geta, liou, F = _grad(disc, y, eta)
    A = liou - eta * F
    ss = [0.0]
    reports = [ActionReport(A, _norm(disc, gy, geta), F, eta, liou)]
    escaped = stalled = False
    while s < s_max - 1e-15:
        h = min(h0, s_max - s)
        for _ in range(max_halvings):
            y1 = y - h * gy
            eta1 = eta - h * geta
            g1, ge1, l1, F1 = _grad(disc, y1, eta1)
            A1 = l1 - eta1 * F1
            slack = 64 * np.finfo(float).eps * (abs(A) + abs(l1) + abs(eta1 * F1))
            if A1 < A or (not strict and A1 <= A + slack):
                break
            h *= 0.5
        else:
            stalled = True
            break
        y, eta, gy, geta, A, s = y1, eta1, g1, ge1, A1, s + h
        ss.append(s)
        reports.append(ActionReport(A, _norm(disc, gy, geta), F1, eta, l1))
        if A < floor:
            escaped = True
            break
    return FlowLine(np.array(ss), reports, disc.unpack(y, eta), escaped, stalled)


# --- identities ---------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintReport:
    F: float
    grad: np.ndarray
    mean_stiffness: float
    min_grad_on_zero_set: float
    regular: bool


def constraint_report(params: HamiltonianParams, spec: PotentialSpec, z: PhasePoint) -> ConstraintReport:
    """F(z) = int_0^1 H_t(z) dt = |p|^2/2 + Ebar |q|^2/2 - c, Ebar = E - mean V."""
    ebar = params.E - spec.mean()
    F = 0.5 * float(z.p @ z.p) + 0.5 * ebar * float(z.q @ z.q) - params.c
    grad = np.concatenate([ebar * z.q, z.p])
    regular = ebar > 0 and params.c > 0
    mg = math.sqrt(2 * params.c * min(1.0, ebar)) if regular else 0.0
    return ConstraintReport(F, grad, ebar, mg, regular)


@dataclass(frozen=True)
class ActionPeriodCheck:
    action: float
    eta_c: float
    gap: float


def check_action_period(params: HamiltonianParams, spec: PotentialSpec, loop: DiscretizedLoop,
                        scheme: str = "spectral", crit_tol: float = 1e-6) -> ActionPeriodCheck:
    """Compare A with eta c on a critical loop; ``gap`` is relative unless eta c = 0."""
    rep = action_value(params, spec, loop, scheme)
    if rep.grad_norm > crit_tol:
        raise PreconditionError(f"loop is not critical: |grad A| = {rep.grad_norm:.3g}")
    target = loop.eta * params.c
    gap = abs(rep.action - target)
    return ActionPeriodCheck(rep.action, target, gap / abs(target) if target else gap)


@dataclass(frozen=True)
class MultiplierBound:
    holds: bool
    alpha: float
    lhs: float
    rhs: float
    vacuous: bool


def check_multiplier_bound(params: HamiltonianParams, spec: PotentialSpec, loop: DiscretizedLoop,
                           eps: float, R_K: float | None = None, scheme: str = "spectral") -> MultiplierBound:
    """|eta| <= alpha (|A| + 1) with alpha = max(1/c, c_lambda eps / c), c_lambda = R_K / 2.

    Only asserted when |grad A| <= eps; otherwise reported as vacuously true.
    """
    rep = action_value(params, spec, loop, scheme)
    R_K = loop.radius() if R_K is None else R_K
    alpha = max(1.0 / params.c, 0.5 * R_K * eps / params.c)
    lhs = abs(loop.eta)
    rhs = alpha * (abs(rep.action) + 1.0)
    vacuous = rep.grad_norm > eps
    return MultiplierBound(vacuous or lhs <= rhs, alpha, lhs, rhs, vacuous)


# --- conversion from trajectories --------------------------------------------------------

def loop_from_trajectory(params: HamiltonianParams, spec: PotentialSpec, traj: Trajectory, N: int,
                         mode: str | None = None) -> DiscretizedLoop:
    """Sample x(t) = traj(tau t) at t_j = j / N, with multiplier eta = tau.

    Samples that fall on the trajectory grid are copied; otherwise a cubic
    Hermite interpolant with the vector field as derivative data is used.
    """
    mode = mode or ("chord" if traj.kind == "chord" else "loop")
    count = N if mode == "loop" else N + 1
    if traj.steps % N == 0:
        z = traj.z[:: traj.steps // N][:count]
    else:
        u = traj.u
        k = params.E - np.asarray(spec(u / traj.tau))
        dz = np.hstack([traj.p, -k[:, None] * traj.q])
        z = CubicHermiteSpline(u, traj.z, dz, axis=0)(traj.tau * np.arange(count) / N)
    n = traj.n
    return DiscretizedLoop(z[:, :n], z[:, n:], traj.tau, mode)
