"""Conley-Zehnder index of linearised flows via the polar retract onto U(n).

For a 2x2 symplectic block [[a, b], [c, d]] the retract is the unit complex
number (a + d + i(b - c)) / |a + d + i(b - c)|. The index of a path is the
winding number of det(rho(phi)^2) after the path has been extended from
phi(tau) to a normal form (-I, or diag(2, 1/2) for positive hyperbolic
blocks) without crossing the Maslov cycle det(S - I) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import HessianPath, LinearFlowPath
from .errors import DomainError, InvariantError, ResolutionError

MAX_REFINEMENTS = 6
DEGENERATE_TOL = 1e-9
_INTEGER_SLACK = 1e-7


def symmetric_sqrt_2x2(P) -> np.ndarray:
    """Square root of a symmetric positive definite 2x2 matrix in closed form:
    (P + sqrt(det P) I) / sqrt(tr P + 2 sqrt(det P))."""
    P = np.asarray(P, dtype=float)
    if P.shape != (2, 2) or abs(P[0, 1] - P[1, 0]) > 1e-12 * max(1.0, np.abs(P).max()):
        raise DomainError("expected a symmetric 2x2 matrix")
    det = P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
    tr = P[0, 0] + P[1, 1]
    if det <= 0 or tr <= 0:
        raise DomainError("matrix is not positive definite")
    r = math.sqrt(det)
    return (P + r * np.eye(2)) / math.sqrt(tr + 2 * r)


def polar_retract_2x2(S) -> complex:
    S = np.asarray(S, dtype=float)
    z = complex(S[0, 0] + S[1, 1], S[0, 1] - S[1, 0])
    if abs(z) == 0.0:
        raise InvariantError("polar retract denominator vanished; block is not symplectic")
    return z / abs(z)


def unitary_part(S) -> np.ndarray:
    """rho(S) = iota((S S^T)^(-1/2) S) as a complex n x n matrix.

    Works for any 2n x 2n symplectic matrix in (q_1..q_n, p_1..p_n) ordering;
    uses a symmetric eigendecomposition, independent of the 2x2 closed forms.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0] // 2
    w, v = np.linalg.eigh(S @ S.T)
    if np.any(w <= 0):
        raise DomainError("S S^T is not positive definite")
    U = (v / np.sqrt(w)) @ v.T @ S
    return U[:n, :n] + 1j * U[:n, n:]


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def _raw_angles(blocks: np.ndarray) -> np.ndarray:
    return np.arctan2(blocks[..., 0, 1] - blocks[..., 1, 0], blocks[..., 0, 0] + blocks[..., 1, 1])


def unwrap_angles(raw: np.ndarray) -> tuple[np.ndarray, float]:
    """Continuous angle from 0, plus the largest per-step increment magnitude."""
    inc = _wrap(np.diff(raw, axis=0))
    out = np.concatenate([np.zeros((1,) + raw.shape[1:]), np.cumsum(inc, axis=0)])
    out += raw[0]
    return out, float(np.max(np.abs(inc))) if inc.size else 0.0


@dataclass(frozen=True)
class AnglePath:
    """Continuous per-block polar angles theta_b(u_j) with theta_b(0) = 0."""

    u: np.ndarray
    angles: np.ndarray  # (K + 1, n)

    @property
    def total(self) -> np.ndarray:
        """Phase of det(rho(phi)^2): 2 * sum_b theta_b."""
        return 2.0 * self.angles.sum(axis=1)

    def final(self) -> np.ndarray:
        return self.angles[-1]


def track_angles(flow: LinearFlowPath, max_refinements: int = MAX_REFINEMENTS) -> tuple[AnglePath, LinearFlowPath]:
    """Unwrap the block angles, refining the flow until every step moves < pi/2.

    Returns the angle path and the (possibly refined) flow it was read from.
    """
    for _ in range(max_refinements + 1):
        blocks = flow.block_list()
        theta, biggest = unwrap_angles(_raw_angles(blocks))
        if biggest < np.pi / 2:
            return AnglePath(flow.u, theta), flow
        flow = flow.refined()
    raise ResolutionError("angle increments stay above pi/2 after refinement; raise the step count")


def angle_rate(flow: LinearFlowPath, hess: HessianPath) -> np.ndarray:
    """d theta / du per block from the flow equation, shape (K + 1, n).

    With phi' = J D phi per block, (a', b', c', d') = (D22 c, D22 d, -D11 a, -D11 b)
    and theta' = ((b' - c')(a + d) - (b - c)(a' + d')) / ((a + d)^2 + (b - c)^2).
    """
    B = flow.block_list()
    a, b, c, d = B[..., 0, 0], B[..., 0, 1], B[..., 1, 0], B[..., 1, 1]
    d11 = hess.d11[:, None]
    d22 = hess.d22[:, None]
    da, db, dc, dd = d22 * c, d22 * d, -d11 * a, -d11 * b
    num = (db - dc) * (a + d) - (b - c) * (da + dd)
    return num / ((a + d) ** 2 + (b - c) ** 2)


def rate_numerator(block, d11: float, d22: float) -> tuple[float, float]:
    """Numerator of theta' two ways: from the flow derivatives, and the closed
    form d11 (a^2 + b^2 + 1) + d22 (c^2 + d^2 + 1) valid when det = 1."""
    (a, b), (c, d) = np.asarray(block, dtype=float)
    da, db, dc, dd = d22 * c, d22 * d, -d11 * a, -d11 * b
    direct = (db - dc) * (a + d) - (b - c) * (da + dd)
    closed = d11 * (a * a + b * b + 1) + d22 * (c * c + d * d + 1)
    return direct, closed


@dataclass(frozen=True)
class MonotonicityCertificate:
    min_rate: float
    certified: bool


def monotonicity_certificate(flow: LinearFlowPath, hess: HessianPath | None = None) -> MonotonicityCertificate:
    rate = angle_rate(flow, hess or flow.hessian())
    m = float(rate.min())
    return MonotonicityCertificate(m, m > 0)


# --- endpoint extension -----------------------------------------------------------

def classify_block(S, tol: float = DEGENERATE_TOL) -> str:
    """'elliptic' (|tr| < 2), 'positive-hyperbolic' (tr > 2), 'negative-hyperbolic'
    (tr < -2) or 'degenerate' (det(S - I) = 2 - tr within tol)."""
    tr = float(np.trace(S))
    if abs(2.0 - tr) <= tol:
        return "degenerate"
    if tr > 2:
        return "positive-hyperbolic"
    return "elliptic" if tr > -2 else "negative-hyperbolic"


def block_index(theta: float, kind: str) -> int:
    """Index contribution of one block whose continuous angle ends at ``theta``.

    C_+ blocks (tr < 2) end at -I, the odd multiple of pi inside the open
    interval (2 pi k, 2 pi (k + 1)) containing theta; positive hyperbolic
    blocks end at diag(2, 1/2), the multiple of 2 pi nearest theta (their
    angle never leaves the half-plane cos > 0). Degenerate blocks take the
    lower, left-limit value: the index of the same path stopped just short.
    """
    x = theta / np.pi
    if kind == "degenerate":
        return int(math.ceil(x - _INTEGER_SLACK)) - 1
    if kind == "positive-hyperbolic":
        return 2 * int(round(theta / (2 * np.pi)))
    return 2 * int(math.floor(theta / (2 * np.pi))) + 1


def _rot(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, s], [-s, c]])


def _spd_power(P, a):
    w, v = np.linalg.eigh(P)
    return (v * w ** a) @ v.T


def extension_path(S, theta: float, samples: int = 200) -> tuple[np.ndarray, float]:
    """Explicit path from the block S (continuous angle ``theta``) to its normal form.

    Returns the matrices along the path and the continuous end angle. Elliptic
    and negative hyperbolic blocks first relax the stretch P^(1-s) with the
    rotation fixed, then rotate to the target odd multiple of pi; positive
    hyperbolic blocks first rotate to the nearest multiple of 2 pi, then move
    the log-stretch to that of diag(2, 1/2) along a path that keeps it nonzero.
    """
    S = np.asarray(S, dtype=float)
    kind = classify_block(S)
    if kind == "degenerate":
        raise DomainError("degenerate endpoint has no extension inside C_+ or C_-")
    P = symmetric_sqrt_2x2(S @ S.T)
    s = np.linspace(0.0, 1.0, samples)
    if kind == "positive-hyperbolic":
        target = 2 * np.pi * round(theta / (2 * np.pi))
        leg1 = [P @ _rot(theta + (target - theta) * si) for si in s]
        w, v = np.linalg.eigh(P)
        ell = 0.5 * math.log(w[1] / w[0])
        axis = v[:, 1]
        alpha = math.atan2(axis[1], axis[0])
        two_alpha = (2 * alpha + np.pi) % (2 * np.pi) - np.pi
        leg2 = []
        for si in s:
            l_s = ell + (math.log(2.0) - ell) * si
            a_s = two_alpha * (1 - si)
            L = l_s * np.array([[math.cos(a_s), math.sin(a_s)], [math.sin(a_s), -math.cos(a_s)]])
            ew, ev = np.linalg.eigh(L)
            leg2.append((ev * np.exp(ew)) @ ev.T)
        return np.array(leg1 + leg2), target
    target = (2 * math.floor(theta / (2 * np.pi)) + 1) * np.pi
    U = _rot(theta)
    leg1 = [_spd_power(P, 1 - si) @ U for si in s]
    leg2 = [_rot(theta + (target - theta) * si) for si in s]
    return np.array(leg1 + leg2), target


# --- index ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CZReport:
    index: int
    degenerate: bool
    per_block_angles: tuple[float, ...]
    per_block_index: tuple[int, ...]
    classes: tuple[str, ...]
    min_angle_rate: float
    tau: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "degenerate": self.degenerate,
            "per_block_angles": list(self.per_block_angles),
            "per_block_index": list(self.per_block_index),
            "classes": list(self.classes),
            "min_angle_rate": self.min_angle_rate,
            "tau": self.tau,
        }


def cz_index(flow: LinearFlowPath, tol: float = DEGENERATE_TOL) -> CZReport:
    """Winding number of det(rho(phi_hat)^2) for the block-decoupled flow.

    The degeneracy flag follows det(phi(tau) - I) of the full flow; flagged
    paths get the lower convention on every block.
    """
    path, flow = track_angles(flow)
    end = flow.mats[-1]
    degenerate = abs(np.linalg.det(end - np.eye(end.shape[0]))) <= tol
    theta = path.final()
    blocks = flow.block_list()[-1]
    classes = []
    idx = []
    for b in range(flow.n):
        kind = "degenerate" if degenerate else classify_block(blocks[b], tol=0.0)
        classes.append(kind)
        idx.append(block_index(float(theta[b]), kind))
    rate = monotonicity_certificate(flow).min_rate
    return CZReport(int(sum(idx)), bool(degenerate), tuple(float(t) for t in theta),
                    tuple(idx), tuple(classes), rate, flow.tau)


def brute_force_index(flow: LinearFlowPath, samples: int = 200) -> int:
    """Index by direct winding of det(rho^2) of the full 2n x 2n matrices along
    the flow followed by the explicit extension path. Nondegenerate flows only."""
    path, flow = track_angles(flow)
    mats = list(flow.mats)
    blocks = flow.block_list()[-1]
    theta = path.final()
    n = flow.n
    legs = [extension_path(blocks[b], float(theta[b]), samples)[0] for b in range(n)]
    for j in range(len(legs[0])):
        full = np.zeros((2 * n, 2 * n))
        for b in range(n):
            m = legs[b][j]
            full[b, b], full[b, n + b] = m[0, 0], m[0, 1]
            full[n + b, b], full[n + b, n + b] = m[1, 0], m[1, 1]
        mats.append(full)
    phase = np.array([np.angle(np.linalg.det(unitary_part(m)) ** 2) for m in mats])
    total, biggest = unwrap_angles(phase)
    if biggest >= np.pi / 2:
        raise ResolutionError("brute-force loop sampled too coarsely")
    w = (total[-1] - total[0]) / (2 * np.pi)
    if abs(w - round(w)) > 1e-6:
        raise InvariantError(f"extended loop does not close: winding {w}")
    return int(round(w))
