import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from floer_eig.core import HamiltonianParams
from floer_eig.czindex import angle_rate, block_index, brute_force_index, classify_block, cz_index, \
    extension_path, monotonicity_certificate, polar_retract_2x2, rate_numerator, symmetric_sqrt_2x2, \
    track_angles, unitary_part, unwrap_angles
from floer_eig.dynamics import flow_from_stiffness, linearized_flow, stiffness
from floer_eig.errors import DomainError, ResolutionError


def random_symplectic(rng):
    """Product of a rotation, a stretch and a shear: a generic SL(2, R) element."""
    t, s, h = rng.uniform(-np.pi, np.pi), rng.uniform(-1.5, 1.5), rng.uniform(-2, 2)
    R = np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
    return R @ np.diag([math.exp(s), math.exp(-s)]) @ np.array([[1, h], [0, 1]])


def test_sqrt_examples():
    assert np.allclose(symmetric_sqrt_2x2(np.diag([4, 0.25])), np.diag([2, 0.5]), atol=1e-15)
    assert np.allclose(symmetric_sqrt_2x2(np.eye(2)), np.eye(2), atol=1e-15)
    with pytest.raises(DomainError):
        symmetric_sqrt_2x2(np.diag([1.0, -1.0]))


def test_sqrt_random(rng):
    for _ in range(1000):
        S = random_symplectic(rng)
        P = S @ S.T
        R = symmetric_sqrt_2x2(P)
        assert np.abs(R @ R - P).max() <= 1e-10 * max(1.0, np.abs(P).max())
        assert np.all(np.linalg.eigvalsh(R) > 0)


def test_retract_examples(rng):
    assert polar_retract_2x2(np.eye(2)) == 1
    assert polar_retract_2x2(np.diag([2, 0.5])) == 1
    for t in rng.uniform(-np.pi, np.pi, 100):
        R = np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
        assert abs(polar_retract_2x2(R) - np.exp(1j * t)) <= 1e-12


def test_retract_matches_unitary_part(rng):
    for _ in range(200):
        S = random_symplectic(rng)
        assert abs(polar_retract_2x2(S) - unitary_part(S)[0, 0]) <= 1e-10


def test_track_free_half_turn(free):
    path, _ = track_angles(linearized_flow(HamiltonianParams(1.0, n=1), free, np.pi))
    theta = path.angles[:, 0]
    assert theta[0] == 0 and np.all(np.diff(theta) > 0)
    assert theta[-1] == pytest.approx(np.pi, abs=1e-8)


def test_track_two_full_turns(free):
    path, _ = track_angles(linearized_flow(HamiltonianParams(1.0), free, 4 * np.pi))
    assert np.allclose(path.angles[-1], 4 * np.pi, atol=1e-8)


def _theta_oracle(k_fn, tau):
    """Adaptive integration of the block equations together with the angle rate."""
    def rhs(u, y):
        a, b, c, d, _ = y
        k = float(k_fn(u))
        da, db, dc, dd = c, d, -k * a, -k * b
        num = (db - dc) * (a + d) - (b - c) * (da + dd)
        return [da, db, dc, dd, num / ((a + d) ** 2 + (b - c) ** 2)]
    sol = solve_ivp(rhs, (0, tau), [1, 0, 0, 1, 0], method="RK45", rtol=1e-12, atol=1e-14)
    return sol.y[4, -1]


def test_track_mathieu_against_rate_oracle(unit, mathieu):
    tau = 9.0
    path, _ = track_angles(linearized_flow(unit, mathieu, tau))
    assert abs(path.angles[-1, 0] - _theta_oracle(stiffness(unit, mathieu, tau), tau)) <= 1e-6


def test_total_phase_matches_full_retract(unit, mathieu):
    path, flow = track_angles(linearized_flow(unit, mathieu, 12.0))
    full = np.array([np.angle(np.linalg.det(unitary_part(m)) ** 2) for m in flow.mats])
    gap = (path.total - full + np.pi) % (2 * np.pi) - np.pi
    assert np.abs(gap).max() <= 1e-6
    unwrapped, _ = unwrap_angles(full)
    assert np.abs(unwrapped - path.total).max() <= 1e-8


def test_refinement_budget():
    k = lambda u: 400.0 * np.ones_like(u)  # noqa: E731
    coarse = flow_from_stiffness(k, 10.0, 64, 1)
    with pytest.raises(ResolutionError):
        track_angles(coarse, max_refinements=0)
    path, fine = track_angles(coarse)
    assert fine.steps > 64
    assert np.abs(np.diff(path.angles[:, 0])).max() < np.pi / 2


def test_rate_at_identity():
    for d11, d22 in [(1.0, 1.0), (0.3, 2.0), (5.0, 0.1)]:
        direct, closed = rate_numerator(np.eye(2), d11, d22)
        assert direct == pytest.approx(2 * (d11 + d22)) and closed == pytest.approx(2 * (d11 + d22))


def test_rate_on_rotation(free):
    flow = linearized_flow(HamiltonianParams(1.0), free, 7.0)
    assert np.abs(angle_rate(flow, flow.hessian()) - 1).max() <= 1e-8


def test_rate_matches_tracked_angles(unit, mathieu):
    flow = linearized_flow(unit, mathieu, 8.0, 4000)
    path, _ = track_angles(flow)
    rate = angle_rate(flow, flow.hessian())[:, 0]
    h = flow.u[1]
    fd = (path.angles[2:, 0] - path.angles[:-2, 0]) / (2 * h)
    assert rate.min() > 0
    assert np.abs(fd - rate[1:-1]).max() <= 1e-5


def test_numerator_identity(rng):
    for _ in range(1000):
        S = random_symplectic(rng)
        d11, d22 = rng.uniform(0.01, 5, 2)
        direct, closed = rate_numerator(S, d11, d22)
        assert abs(direct - closed) <= 1e-9 * max(1.0, abs(closed))


def test_rotation_path_index(free):
    rng = np.random.default_rng(7)
    taus = []
    while len(taus) < 50:
        t = rng.uniform(0.01, 10 * np.pi)
        if abs(t - 2 * np.pi * round(t / (2 * np.pi))) >= 0.01:
            taus.append(t)
    for t in taus:
        rep = cz_index(linearized_flow(HamiltonianParams(1.0, n=1), free, t))
        assert not rep.degenerate
        assert rep.index == 2 * math.floor(t / (2 * np.pi)) + 1


@pytest.mark.parametrize("tau,n,expected", [(np.pi - 0.01, 1, 1), (2 * np.pi + 0.1, 1, 3), (np.pi - 0.01, 2, 2)])
def test_index_examples(free, tau, n, expected):
    flow = linearized_flow(HamiltonianParams(1.0, n=n), free, tau)
    assert cz_index(flow).index == expected
    assert brute_force_index(flow) == expected


@pytest.mark.parametrize("k_fn,T", [
    (lambda u: -np.ones_like(u), 2.0),
    (lambda u: 1 + 0.8 * np.cos(2 * u), np.pi),
    (lambda u: 1 + 0.8 * np.cos(2 * u), 2 * np.pi),
    (lambda u: 1 + 0.5 * np.cos(2 * u), 3 * np.pi),
    (lambda u: 2 + np.sin(u), 5.0),
])
def test_closed_form_matches_brute_force(k_fn, T):
    flow = flow_from_stiffness(k_fn, T, 2000, 2)
    assert cz_index(flow).index == brute_force_index(flow)


def test_extension_avoids_maslov_cycle(rng):
    for _ in range(50):
        S = random_symplectic(rng)
        if abs(2 - np.trace(S)) < 1e-3:
            continue
        theta = float(np.angle(polar_retract_2x2(S))) + 2 * np.pi * rng.integers(-2, 3)
        mats, _ = extension_path(S, theta)
        g = 2 - np.trace(mats, axis1=1, axis2=2)
        assert np.all(np.sign(g) == np.sign(2 - np.trace(S)))
        end = mats[-1]
        target = np.diag([2, 0.5]) if classify_block(S) == "positive-hyperbolic" else -np.eye(2)
        assert np.abs(end - target).max() <= 1e-12


def test_degenerate_endpoint_lower_convention(free):
    rep = cz_index(linearized_flow(HamiltonianParams(1.0, n=1), free, 2 * np.pi))
    assert rep.degenerate
    # the limit from below is the index of tau slightly under 2 pi
    assert rep.index == cz_index(linearized_flow(HamiltonianParams(1.0, n=1), free, 2 * np.pi - 0.01)).index
    assert block_index(2 * np.pi, "degenerate") == 1


def test_certificate_cases(unit, mathieu):
    k = lambda u: 1 + 0.5 * np.sin(2 * np.pi * u)  # noqa: E731
    assert monotonicity_certificate(flow_from_stiffness(k, 3.0, 600, 2)).certified
    assert monotonicity_certificate(linearized_flow(unit, mathieu, 7.5)).certified
    neg = flow_from_stiffness(lambda u: -np.ones_like(u), 3.0, 600, 2)
    cert = monotonicity_certificate(neg)
    assert isinstance(cert.certified, bool) and cert.min_rate < 0


def test_report_fields(free):
    rep = cz_index(linearized_flow(HamiltonianParams(1.0), free, 3.0))
    d = rep.to_dict()
    assert set(d) >= {"index", "degenerate", "per_block_angles", "min_angle_rate"}
    assert d["per_block_angles"] == pytest.approx([3.0, 3.0], abs=1e-8)
