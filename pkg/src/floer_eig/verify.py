"""Finite-difference checks that wave-function samples solve the eigen-equation.

Everything here works from the profile samples alone; no solver state is used.
The equation in the unit parameter x is -(1/R^2) psi'' + V(x) psi = E psi,
periodic in x for the ring and with psi(0) = psi(1) = 0 for the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EigenstateProfile, PotentialSpec, potential_max, potential_min
from .errors import DomainError, PreconditionError

BOUNDARY_TOL = 1e-7
MIN_GRID = 64


@dataclass(frozen=True)
class Residual:
    max_rel: float
    rms_rel: float
    K: int


def _check_grid(profile: EigenstateProfile, K: int | None):
    if K is not None and K != profile.K:
        raise DomainError(f"grid mismatch: profile has K={profile.K}, caller expects {K}")
    if profile.K < MIN_GRID:
        raise PreconditionError(f"residual needs K >= {MIN_GRID}, got {profile.K}")
    if not np.any(profile.psi != 0):
        raise PreconditionError("profile amplitude is zero")


def schrodinger_residual(profile: EigenstateProfile, spec: PotentialSpec, K: int | None = None) -> Residual:
    """Relative residual of central second differences, normalised by (E + max|V|) max|psi|."""
    _check_grid(profile, K)
    psi = profile.psi
    x = profile.unit_grid
    h = 1.0 / profile.K
    if profile.bc == "periodic":
        lap = (np.roll(psi, -1) - 2 * psi + np.roll(psi, 1)) / h ** 2
        v = np.asarray(spec(x), dtype=float)
        r = -lap / profile.R ** 2 + (v - profile.E) * psi
    else:
        inner = psi[1:-1]
        lap = (psi[2:] - 2 * inner + psi[:-2]) / h ** 2
        v = np.asarray(spec(x[1:-1]), dtype=float)
        r = -lap / profile.R ** 2 + (v - profile.E) * inner
    vmax = max(abs(potential_max(spec)), abs(potential_min(spec)))
    scale = (profile.E + vmax) * np.abs(psi).max()
    a = np.abs(r) / scale
    return Residual(float(a.max()), float(math.sqrt(np.mean(a ** 2))), profile.K)


@dataclass(frozen=True)
class BoundaryCheck:
    passed: bool
    magnitudes: tuple[float, ...]


def boundary_check(profile: EigenstateProfile, tol: float = BOUNDARY_TOL) -> BoundaryCheck:
    """Dirichlet values for the box; for the ring, the gap between psi(0) and the
    value carried round to 2 pi (or, absent that, a cubic extrapolation from the
    last samples)."""
    psi = profile.psi
    amp = float(np.abs(psi).max()) or 1.0
    if profile.bc == "dirichlet":
        mags = (abs(psi[0]) / amp, abs(psi[-1]) / amp)
        return BoundaryCheck(bool(max(mags) <= tol), tuple(float(m) for m in mags))
    if profile.psi_end is not None:
        gap = abs(psi[0] - profile.psi_end) / amp
        return BoundaryCheck(bool(gap <= tol), (float(gap),))
    # without the carried value, compare psi_0 with the cubic extrapolation
    # through psi_{K-4..K-1}: the gap is a fourth difference taken across the
    # seam, so it is judged against the fourth differences away from it
    ext = 4 * psi[-1] - 6 * psi[-2] + 4 * psi[-3] - psi[-4]
    gap = abs(psi[0] - ext) / amp
    mid = psi[4:-4]
    d4 = np.abs(mid[4:] - 4 * mid[3:-1] + 6 * mid[2:-2] - 4 * mid[1:-3] + mid[:-4]).max() / amp
    return BoundaryCheck(bool(gap <= tol + 2 * d4), (float(gap),))

def l2_norm(profile: EigenstateProfile) -> float:
    """Trapezoid L2 norm: over phi in [0, 2 pi) for the ring, s in [0, 1] for the box."""
    w = np.abs(profile.psi) ** 2
    if profile.bc == "periodic":
        return math.sqrt(2 * np.pi * w.mean())
    h = 1.0 / profile.K
    return math.sqrt(h * (w.sum() - 0.5 * (w[0] + w[-1])))


def normalize(profile: EigenstateProfile) -> EigenstateProfile:
    nrm = l2_norm(profile)
    if nrm == 0:
        raise PreconditionError("cannot normalise a zero profile")
    return profile.scaled(1.0 / nrm)


def reference_spectrum_free(bc: str, L: float, n: int) -> float:
    """Free-particle energies with hbar^2/2m = 1: (n pi / L)^2 in a box of
    length L, (2 pi n / L)^2 on a ring of circumference L."""
    if bc in ("dirichlet", "box"):
        if n < 1:
            raise DomainError("box levels start at n = 1")
        return (n * np.pi / L) ** 2
    if bc in ("periodic", "ring"):
        if n < 0:
            raise DomainError("ring levels start at n = 0")
        return (2 * np.pi * n / L) ** 2
    raise DomainError(f"unknown boundary condition {bc!r}")


def convergence_order(coarse: float, fine: float) -> float:
    """Observed order from residuals at K and 2K."""
    return math.log2(coarse / fine)


def verification_report(profile: EigenstateProfile, spec: PotentialSpec) -> dict:
    res = schrodinger_residual(profile, spec)
    bc = boundary_check(profile)
    return {
        "max_residual_rel": res.max_rel,
        "rms_residual_rel": res.rms_rel,
        "bc_pass": bc.passed,
        "bc_magnitudes": list(bc.magnitudes),
        "norm": l2_norm(profile),
        "K": res.K,
    }
