import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floer_eig.core import EigenstateProfile, HamiltonianParams, PhasePoint, PotentialSpec, Trajectory, \
    emit_potential, evaluate_potential, parse_potential, positivity_margin, potential_from_dict
from floer_eig.errors import DomainError, ParseError


def test_constant_evaluates_everywhere():
    assert evaluate_potential(PotentialSpec.constant(0.3), 0.77) == 0.3


def test_fourier_at_zero():
    assert evaluate_potential(PotentialSpec.fourier(0.3, [0.1]), 0.0) == pytest.approx(0.4, abs=1e-15)


def test_samples_interpolate_sine():
    t = np.arange(64) / 64
    spec = PotentialSpec.samples(np.sin(2 * np.pi * t))
    assert abs(spec(0.25) - 1.0) <= 1e-6
    x = np.linspace(0, 1, 1001)
    assert np.abs(spec(x) - np.sin(2 * np.pi * x)).max() <= 1e-6


def test_box_samples_span_closed_interval():
    spec = PotentialSpec.samples([0.0, 1.0, 2.0, 3.0, 4.0], domain="box")
    assert spec(0.0) == pytest.approx(0.0)
    assert spec(1.0) == pytest.approx(4.0)
    assert spec(0.5) == pytest.approx(2.0)


def test_box_rejects_outside_interval():
    spec = PotentialSpec.fourier(0.3, [0.1], domain="box")
    with pytest.raises(DomainError):
        spec(1.5)
    with pytest.raises(DomainError):
        spec(-0.01)


def test_ring_periodic_extension(rng):
    for spec in (PotentialSpec.fourier(0.2, [0.1, 0.05], [0.03]),
                 PotentialSpec.samples(rng.normal(size=17))):
        t = rng.uniform(-5, 5, 1000)
        assert np.abs(spec(t + 1) - spec(t)).max() <= 1e-12


def test_derivative_matches_finite_difference():
    spec = PotentialSpec.fourier(0.2, [0.1, 0.05], [0.03])
    t = np.linspace(0, 1, 17)
    h = 1e-6
    fd = (spec(t + h) - spec(t - h)) / (2 * h)
    assert np.abs(spec.derivative(t) - fd).max() < 1e-7


@pytest.mark.parametrize("E,spec,expected", [
    (1.0, PotentialSpec.constant(0.3), 0.7),
    (1.0, PotentialSpec.fourier(0.3, [0.1]), 0.6),
    (0.2, PotentialSpec.fourier(0.3, [0.1]), -0.2),
])
def test_positivity_margin(E, spec, expected):
    assert positivity_margin(HamiltonianParams(E), spec) == pytest.approx(expected, abs=1e-12)


def test_margin_of_off_grid_peak():
    # a single harmonic with phase; maximum a0 + sqrt(a^2 + b^2)
    spec = PotentialSpec.fourier(0.1, [0.3], [0.4])
    assert positivity_margin(HamiltonianParams(2.0), spec) == pytest.approx(2.0 - 0.6, abs=1e-12)


def test_params_validation():
    with pytest.raises(DomainError):
        HamiltonianParams(1.0, c=0.0)
    with pytest.raises(DomainError):
        HamiltonianParams(1.0, n=0)


def test_parse_schema_examples():
    a = parse_potential('{"kind":"constant","value":0.0,"domain":"ring"}')
    assert a == PotentialSpec.constant(0.0)
    b = parse_potential('{"kind":"fourier","a0":0.3,"cos":[0.1],"sin":[],"domain":"ring"}')
    assert b == PotentialSpec.fourier(0.3, [0.1])


@pytest.mark.parametrize("text,fragment", [
    ('{"kind": "constant"', "line 1"),
    ('{"kind": "cubic", "value": 1}', "kind"),
    ('{"kind": "constant", "value": "x"}', "value"),
    ('{"kind": "constant", "value": 1, "a0": 2}', "unexpected"),
    ('{"kind": "samples", "values": [1, 2]}', "4 values"),
    ('{"kind": "fourier", "a0": 0, "cos": [1, true]}', "cos[1]"),
    ('[1, 2]', "object"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        parse_potential(text)


def test_parse_error_reports_line():
    with pytest.raises(ParseError, match="line 3"):
        parse_potential('{\n "kind": "constant",\n "value": }')


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
documents = st.one_of(
    st.builds(lambda v, d: {"kind": "constant", "value": v, "domain": d}, finite, st.sampled_from(["ring", "box"])),
    st.builds(lambda a, c, s, d: {"kind": "fourier", "a0": a, "cos": c, "sin": s, "domain": d},
              finite, st.lists(finite, max_size=5), st.lists(finite, max_size=5), st.sampled_from(["ring", "box"])),
    st.builds(lambda v, d: {"kind": "samples", "values": v, "domain": d},
              st.lists(finite, min_size=4, max_size=12), st.sampled_from(["ring", "box"])),
)


@settings(max_examples=200, deadline=None)
@given(documents)
def test_round_trip(doc):
    spec = parse_potential(json.dumps(doc))
    text = emit_potential(spec)
    assert parse_potential(text) == spec
    assert emit_potential(parse_potential(text)) == text


def test_emit_is_canonical():
    spec = potential_from_dict({"domain": "ring", "cos": [0.1], "a0": 0.3, "kind": "fourier"})
    assert emit_potential(spec) == '{"a0": 0.3, "cos": [0.1], "domain": "ring", "kind": "fourier", "sin": []}'


def test_phase_point_and_trajectory():
    z = PhasePoint([1, 0], [0, 1])
    assert np.array_equal(z.as_array(), [1, 0, 0, 1])
    with pytest.raises(DomainError):
        PhasePoint([1, 0], [0])
    with pytest.raises(DomainError):
        PhasePoint([math.inf], [0])
    u = np.linspace(0, 2 * np.pi, 9)
    traj = Trajectory(2 * np.pi, np.c_[np.cos(u), np.sin(u)])
    assert traj.n == 1 and traj.steps == 8
    assert traj.closure() == pytest.approx(0.0, abs=1e-15)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "u,q_1,p_1" and len(lines) == 10


def test_profile_grids():
    ring = EigenstateProfile(2 * np.pi, 1.0, "periodic", np.ones(8))
    assert ring.K == 8 and ring.grid[-1] == pytest.approx(2 * np.pi * 7 / 8)
    box = EigenstateProfile(np.pi, 1.0, "dirichlet", np.zeros(9))
    assert box.K == 8 and box.grid[-1] == 1.0
    with pytest.raises(DomainError):
        EigenstateProfile(1.0, 1.0, "neumann", np.ones(4))
