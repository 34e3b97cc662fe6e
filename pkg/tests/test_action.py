import math

import numpy as np
import pytest

from floer_eig.action import DiscretizedLoop, action_gradient, action_value, check_action_period, \
    check_multiplier_bound, constant_loop, constraint_report, flow_line, loop_from_trajectory, newton_refine
from floer_eig.core import HamiltonianParams, PhasePoint, PotentialSpec
from floer_eig.dynamics import integrate_trajectory
from floer_eig.errors import ConvergenceError, PreconditionError


def circle(N, amp=1.0, eta=1.0):
    t = np.arange(N) / N
    c, s = np.cos(2 * np.pi * t), np.sin(2 * np.pi * t)
    return DiscretizedLoop(amp * np.c_[c, s], amp * np.c_[-s, c], eta)


def random_smooth_loop(rng, N, mode="loop", eta=3.0):
    """Low-order trigonometric loop (or sine-series chord) with random coefficients."""
    t = np.arange(N + (mode == "chord")) / N
    q = np.zeros((t.size, 2))
    p = np.zeros((t.size, 2))
    for m in range(1, 5):
        for i in range(2):
            a, b, c = rng.normal(size=3) / m ** 2
            if mode == "loop":
                q[:, i] += a * np.cos(2 * np.pi * m * t) + b * np.sin(2 * np.pi * m * t)
            else:
                q[:, i] += a * np.sin(np.pi * m * t)
            p[:, i] += c * np.cos(np.pi * m * t)
    return DiscretizedLoop(q, p, eta, mode)


def test_circle_liouville(free):
    rep = action_value(HamiltonianParams(1.0), free, circle(256))
    assert abs(rep.liouville - 2 * np.pi) <= 1e-6


def test_constant_loop(unit, mathieu):
    z = PhasePoint([0.4, -0.2], [0.1, 0.3])
    loop = constant_loop(z, 64, eta=1.7)
    rep = action_value(unit, mathieu, loop)
    assert rep.liouville == pytest.approx(0.0, abs=1e-14)
    t = np.arange(64) / 64
    mean_h = np.mean(0.5 * z.p @ z.p + 0.5 * (1.0 - mathieu(t)) * (z.q @ z.q) - 0.5)
    assert rep.action == pytest.approx(-1.7 * mean_h, abs=1e-14)
    assert rep.action == pytest.approx(rep.liouville - rep.eta * rep.constraint, abs=1e-15)


def test_origin_multiplier_gradient(unit, mathieu):
    g = action_gradient(unit, mathieu, constant_loop(PhasePoint([0, 0], [0, 0]), 64, 2.0))
    assert g.deta == pytest.approx(unit.c)


def test_resampled_orbit_is_critical(unit, mathieu, mathieu_ring):
    loop = loop_from_trajectory(unit, mathieu, mathieu_ring.orbit, 512)
    assert action_value(unit, mathieu, loop).grad_norm <= 1e-5
    assert check_action_period(unit, mathieu, loop).gap <= 1e-6


@pytest.mark.parametrize("mode", ["loop", "chord"])
@pytest.mark.parametrize("scheme", ["spectral", "midpoint"])
def test_gradient_vs_finite_differences(unit, mathieu, rng, mode, scheme):
    N = 64
    for _ in range(10):
        loop = random_smooth_loop(rng, N, mode)
        g = action_gradient(unit, mathieu, loop, scheme)
        for _ in range(20):
            vq, vp, ve = rng.normal(size=loop.q.shape), rng.normal(size=loop.p.shape), rng.normal()
            if mode == "chord":
                vq[0] = vq[-1] = 0.0
            h = 1e-5

            def a(s):
                moved = DiscretizedLoop(loop.q + s * vq, loop.p + s * vp, loop.eta + s * ve, mode)
                return action_value(unit, mathieu, moved, scheme).action
            fd = (a(h) - a(-h)) / (2 * h)
            assert abs(fd - g.directional(vq, vp, ve, N)) <= 1e-6 * max(1.0, abs(fd))
        if mode == "chord":
            assert not np.any(g.dq[[0, -1]])


def test_chord_endpoints_pinned():
    loop = DiscretizedLoop(np.ones((33, 2)), np.ones((33, 2)), 1.0, "chord")
    assert not np.any(loop.q[[0, -1]])
    assert loop.N == 32


def test_loop_size_checked():
    with pytest.raises(PreconditionError):
        DiscretizedLoop(np.zeros((16, 2)), np.zeros((16, 2)), 1.0)


def test_newton_from_noisy_orbit(unit, mathieu, mathieu_ring, rng):
    loop = loop_from_trajectory(unit, mathieu, mathieu_ring.orbit, 256)
    noisy = DiscretizedLoop(loop.q + 1e-3 * rng.normal(size=loop.q.shape),
                            loop.p + 1e-3 * rng.normal(size=loop.p.shape), loop.eta)
    res = newton_refine(unit, mathieu, noisy)
    assert res.history[-1].grad_norm <= 1e-9
    assert abs(res.loop.eta - mathieu_ring.tau_star) <= 1e-7
    # every iterate near enough to critical obeys the multiplier bound
    for it in res.iterates:
        mb = check_multiplier_bound(unit, mathieu, it, 1e-2)
        assert mb.holds
    # the refined loop is the sampled trajectory from its own initial point
    traj = integrate_trajectory(unit, mathieu, PhasePoint(res.loop.q[0], res.loop.p[0]), res.loop.eta, 256 * 8)
    again = traj.z[::8][:256]
    assert np.abs(again - res.loop.points()).max() <= 1e-5 * np.abs(again).max()


def test_newton_fixed_point_on_constraint(unit, mathieu):
    ebar = unit.E - mathieu.mean()
    z = PhasePoint([math.sqrt(2 * unit.c / ebar), 0.0], [0.0, 0.0])
    res = newton_refine(unit, mathieu, constant_loop(z, 64, 0.0))
    assert res.iterations == 0
    assert check_action_period(unit, mathieu, res.loop).action == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("E", [1.0, 2.25])
def test_newton_free_oscillator(free, E):
    p = HamiltonianParams(E)
    res = newton_refine(p, free, circle(128, 1.0, 2 * np.pi / math.sqrt(E) + 0.05))
    assert abs(res.loop.eta - 2 * np.pi / math.sqrt(E)) <= 1e-8
    assert check_action_period(p, free, res.loop).action == pytest.approx(math.pi / math.sqrt(E), rel=1e-10)


def test_newton_iteration_cap(unit, mathieu, rng):
    with pytest.raises(ConvergenceError):
        newton_refine(unit, mathieu, random_smooth_loop(rng, 64), max_iter=1)


def test_newton_chord(unit, mathieu, mathieu_box, rng):
    loop = loop_from_trajectory(unit, mathieu, mathieu_box.chord, 128)
    assert loop.mode == "chord"
    noisy = DiscretizedLoop(loop.q + 1e-3 * rng.normal(size=loop.q.shape), loop.p, loop.eta + 1e-3, "chord")
    res = newton_refine(unit, mathieu, noisy)
    assert abs(res.loop.eta - mathieu_box.tau_star) <= 1e-7
    assert check_action_period(unit, mathieu, res.loop).gap <= 1e-6


def test_flow_line_descends(unit, mathieu, rng):
    start = random_smooth_loop(rng, 64)
    line = flow_line(unit, mathieu, start, s_max=200 * 1e-3 / 64)
    actions = np.array([r.action for r in line.reports])
    assert np.all(np.diff(actions) < 0)
    # dissipation: dA/ds = -|grad A|^2 on the fixed-step stretch
    s = line.s
    h = np.diff(s)
    uniform = np.isclose(h[:-1], h[1:], rtol=1e-12)
    slope = (actions[2:] - actions[:-2]) / (s[2:] - s[:-2])
    rate = np.array([r.grad_norm for r in line.reports])[1:-1] ** 2
    assert np.abs(slope[uniform] + rate[uniform]).max() <= 0.05 * rate[uniform].max()
    assert uniform.sum() > 100


def test_flow_line_at_critical_point(unit, mathieu, mathieu_ring):
    loop = loop_from_trajectory(unit, mathieu, mathieu_ring.orbit, 64)
    loop = newton_refine(unit, mathieu, loop).loop
    line = flow_line(unit, mathieu, loop, s_max=1000 * 1e-3 / 64, strict=False)
    assert len(line.s) == 1001
    assert np.abs(line.loop.points() - loop.points()).max() <= 1e-6
    assert abs(line.loop.eta - loop.eta) <= 1e-6


def test_flow_line_escape(unit, mathieu, rng):
    line = flow_line(unit, mathieu, random_smooth_loop(rng, 32), s_max=10.0, floor=10.0)
    assert line.escaped


def test_flow_log_csv(unit, mathieu, rng):
    line = flow_line(unit, mathieu, random_smooth_loop(rng, 32), s_max=5e-4)
    rows = line.to_csv().splitlines()
    assert rows[0] == "s,action,grad_norm,eta"
    assert len(rows) == len(line.s) + 1
    assert all(len(r.split(",")) == 4 for r in rows[1:])
    float(rows[1].split(",")[0])


def test_constraint_report_sphere(free, rng):
    p = HamiltonianParams(1.0, 0.5)
    for _ in range(20):
        z = rng.normal(size=4)
        z /= np.linalg.norm(z)
        rep = constraint_report(p, free, PhasePoint.from_array(z))
        assert abs(rep.F) <= 1e-15
        assert np.linalg.norm(rep.grad) == pytest.approx(1.0)
    assert rep.min_grad_on_zero_set == pytest.approx(1.0)
    rep0 = constraint_report(p, free, PhasePoint([0, 0], [0, 0]))
    assert rep0.F == -0.5 and rep0.regular


def test_constraint_mean_stiffness(unit, mathieu):
    rep = constraint_report(unit, mathieu, PhasePoint([1, 0], [0, 0]))
    assert abs(rep.mean_stiffness - (1.0 - 0.3)) <= 1e-10
    t = np.arange(4096) / 4096
    spec = PotentialSpec.samples([0.0, 0.4, 0.1, 0.5, 0.2])
    assert abs(constraint_report(unit, spec, PhasePoint([1, 0], [0, 0])).mean_stiffness
               - (1.0 - spec(t).mean())) <= 1e-10


def test_action_period_examples(free, unit, mathieu):
    p = HamiltonianParams(1.0, 0.5)
    res = newton_refine(p, free, circle(128, 1.0, 2 * np.pi))
    assert check_action_period(p, free, res.loop).action == pytest.approx(math.pi, abs=1e-12)
    with pytest.raises(PreconditionError):
        check_action_period(p, free, circle(128, 1.0, 5.0))


def test_multiplier_bound_cases(unit, mathieu, mathieu_ring):
    loop = loop_from_trajectory(unit, mathieu, mathieu_ring.orbit, 256)
    mb = check_multiplier_bound(unit, mathieu, loop, 1e-2)
    assert mb.holds and not mb.vacuous
    assert mb.alpha == pytest.approx(max(1 / unit.c, 0.5 * loop.radius() * 1e-2 / unit.c))
    ebar = unit.E - mathieu.mean()
    const = constant_loop(PhasePoint([math.sqrt(2 * unit.c / ebar), 0], [0, 0]), 64)
    assert check_multiplier_bound(unit, mathieu, const, 1e-2).holds
    far = circle(64, 1.0, 50.0)
    assert check_multiplier_bound(unit, mathieu, far, 1e-2).vacuous


def test_midpoint_convergence(unit, mathieu):
    def smooth(N):
        t = np.arange(N) / N
        q = np.c_[np.exp(np.cos(2 * np.pi * t)), np.sin(2 * np.pi * t) ** 3]
        p = np.c_[np.exp(np.sin(2 * np.pi * t)), np.cos(4 * np.pi * t)]
        return DiscretizedLoop(q, p, 2.0)
    a = [action_value(unit, mathieu, smooth(N), "midpoint").action for N in (64, 128, 256)]
    ratio = (a[0] - a[1]) / (a[1] - a[2])
    assert 3.5 <= ratio <= 4.5
    s = [action_value(unit, mathieu, smooth(N)).action for N in (64, 128)]
    assert abs(s[0] - s[1]) <= abs(a[1] - a[2])
