import math

import numpy as np
import pytest
import sympy as sp

from eventjet import polyalg as pa
from eventjet.dynamics import AU, AffineModel, CubicClockModel, decay_model
from eventjet.errors import ConfigError, EventMissedError, TransversalityError
from eventjet.eventmap import (
    EventSpec,
    detect,
    event_residual,
    event_transition_map,
    event_value,
    expand_to_event,
    invert_trigger_time,
)
from eventjet.jetflow import expand_flow_to_event, integrate
from eventjet.netpoly import Layer, PolicyNet


def _rotation():
    return AffineModel([[0.0, 1.0], [-1.0, 0.0]], names=("x", "y"))


def test_event_value_examples():
    R, rs = 1.3 * AU, 924_000e3
    sph = EventSpec.sphere([R, 0.0, 0.0], rs)
    assert event_value(sph, [R + rs, 0.0, 0.0]) == 0.0
    assert event_value(sph, [R, 0.0, 0.0]) == -(rs**2)
    assert event_value(EventSpec.plane([1.0, 0.0, 0.0]), [0.0, 3.0, -2.0]) == 0.0
    with pytest.raises(ConfigError):
        event_value(EventSpec.plane([1.0, 0.0, 0.0]), [0.0, 1.0])


def test_event_value_is_algebra_generic():
    spec = EventSpec.sphere([1.0, 0.0, 0.0], 0.5)
    p = [pa.variable(i, 3, 2, v) for i, v in enumerate([1.5, 0.0, 0.0])]
    e = event_value(spec, p)
    assert e.const == event_value(spec, [1.5, 0.0, 0.0])
    assert e.coeff((1, 0, 0)) == 1.0 and e.coeff((2, 0, 0)) == 1.0


def test_spec_validation():
    with pytest.raises(ConfigError):
        EventSpec("cone")
    with pytest.raises(ConfigError):
        EventSpec.sphere([0.0, 0.0], 1.0)
    with pytest.raises(ConfigError):
        EventSpec.plane([1.0], direction="sideways")
    net = PolicyNet((Layer(np.ones((2, 3)), np.zeros(2)),), np.zeros(3), np.ones(3))
    with pytest.raises(ConfigError):
        EventSpec.neural(net)


def test_detect_decay_crossing_time():
    spec = EventSpec.plane([1.0], 1.0, indices=(0,), direction="falling")
    hit = detect(integrate(decay_model(), None, [2.0], event=spec, t_max=5.0), spec)
    assert abs(hit.t - math.log(2.0)) < 1e-12
    assert abs(hit.state[0] - 1.0) < 1e-14
    assert hit.rate == pytest.approx(-1.0, abs=1e-12)


def test_detect_on_unmonitored_trajectory():
    spec = EventSpec.plane([1.0], 1.0, indices=(0,))
    tr = integrate(decay_model(), None, [2.0], t_end=3.0)
    assert abs(detect(tr, spec).t - math.log(2.0)) < 1e-12


def test_missed_event():
    spec = EventSpec.plane([1.0], 3.0, indices=(0,))
    with pytest.raises(EventMissedError):
        detect(integrate(decay_model(), None, [2.0], event=spec, t_max=5.0), spec)
    rising = EventSpec.plane([1.0], 1.0, indices=(0,), direction="rising")
    with pytest.raises(EventMissedError):
        detect(integrate(decay_model(), None, [2.0], event=rising, t_max=5.0), rising)


def test_parabolic_graze_is_refused():
    # x'' = -1 from x = -1/2, v = 1 touches x = 0 tangentially at t = 1
    m = AffineModel([[0.0, 1.0], [0.0, 0.0]], b=[0.0, -1.0], names=("x", "v"))
    spec = EventSpec.plane([1.0], 0.0, indices=(0,))
    with pytest.raises(TransversalityError):
        detect(integrate(m, None, [-0.5, 1.0], event=spec, t_max=3.0), spec)
    # a crossing very close to the apex is refused as near-tangent
    with pytest.raises(TransversalityError):
        detect(integrate(m, None, [-0.5 + 1e-12, 1.0], event=spec, t_max=3.0), spec)


def test_decay_inversion_matches_log_series():
    spec = EventSpec.plane([1.0], 1.0, indices=(0,), direction="falling")
    k = 8
    etm = expand_to_event(decay_model(), None, [2.0], ["x"], k, spec, 5.0)
    want = [0.0] + [(-1) ** (n + 1) / (n * 2**n) for n in range(1, k + 1)]
    assert np.max(np.abs(etm.trigger_time.coeffs - want)) < 1e-12
    assert abs(etm.t_star - math.log(2)) < 1e-12
    assert np.max(np.abs(etm.ett[0].coeffs[1:])) < 1e-12
    assert etm.trigger_time.const == 0.0


def test_cubic_trigger_time_closed_form():
    # x0 / sqrt(1 + 2 x0^2 t) = 1/2  =>  t = 2 - 1 / (2 x0^2)
    spec = EventSpec.plane([1.0, 0.0], 0.5, indices=(0, 1), direction="falling")
    k = 6
    etm = expand_to_event(CubicClockModel(), None, [1.0, 0.0], ["x"], k, spec, 10.0)
    want = [-0.5 * (-1) ** n * (n + 1) for n in range(k + 1)]
    want[0] = 0.0
    assert np.max(np.abs(etm.trigger_time.coeffs - want)) < 1e-11
    assert abs(etm.t_star - 1.5) < 1e-12
    # the clock coordinate of the event state is the trigger time itself
    assert np.max(np.abs(etm.ett[1].coeffs[1:] - etm.trigger_time.coeffs[1:])) < 1e-11


def test_independent_event_gives_zero_trigger_time():
    m = AffineModel([[0.0, 0.0], [0.0, 0.0]], b=[1.0, 0.0], names=("clock", "y"))
    spec = EventSpec.plane([1.0], 1.0, indices=(0,))
    etm = expand_to_event(m, None, [0.0, 0.3], ["y"], 4, spec, 3.0)
    assert np.max(np.abs(etm.trigger_time.coeffs)) < 1e-14
    assert abs(etm.t_star - 1.0) < 1e-13


def test_rotation_trigger_time_symbolic():
    k = 5
    spec = EventSpec.plane([1.0, 0.0], 0.0, indices=(0, 1), direction="falling")
    etm = expand_to_event(_rotation(), None, [1.0, 0.0], ["x", "y"], k, spec, 5.0)
    a, b = sp.symbols("a b")
    eps = sp.Symbol("eps")
    # x(t) = x0 cos t + y0 sin t vanishes at t = pi/2 + atan(y0 / x0)
    T = sp.series(sp.atan(eps * b / (1 + eps * a)), eps, 0, k + 1).removeO()
    poly = sp.Poly(sp.expand(T.subs(eps, 1)), a, b)
    for (i, j), c in poly.terms():
        assert abs(etm.trigger_time.coeff((i, j)) - float(c)) < 1e-12
    assert abs(etm.t_star - math.pi / 2) < 1e-12


def test_rotation_ett_conserves_energy():
    k = 4
    spec = EventSpec.plane([1.0, 0.0], 0.0, indices=(0, 1), direction="falling")
    etm = expand_to_event(_rotation(), None, [1.0, 0.0], ["x", "y"], k, spec, 5.0)
    y = etm.ett[1]
    e = (y * y).coeffs
    want = pa.TPoly.from_terms({(0, 0): 1.0, (1, 0): 2.0, (2, 0): 1.0, (0, 2): 1.0}, 2, k).coeffs
    assert np.max(np.abs(e - want)) < 1e-12
    assert np.max(np.abs(etm.ett[0].coeffs)) < 1e-12
    assert np.allclose(etm.state([0.0, 0.0]), [0.0, -1.0], atol=1e-13)


def test_event_satisfaction_identity_for_sphere():
    m = AffineModel(np.block([[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 6))]]),
                    names=("x", "y", "z", "vx", "vy", "vz"))
    spec = EventSpec.sphere([0.0, 0.0, 0.0], 1.0, direction="falling")
    etm = expand_to_event(m, None, [-2.0, 0.2, 0.1, 1.0, 0.0, 0.05], ["x", "y", "z", "vx"], 4, spec, 10.0,
                          var_scales=[0.1] * 4)
    assert event_residual(etm, spec) < 1e-10
    assert etm.transversality < 0


def test_neural_event_matches_plane():
    net = PolicyNet((Layer(np.array([[1.0, 0.0]]), np.array([-0.5])),), np.zeros(2), np.ones(2))
    neural = EventSpec.neural(net, indices=(0, 1), direction="falling")
    plane = EventSpec.plane([1.0, 0.0], 0.5, indices=(0, 1), direction="falling")
    a = expand_to_event(CubicClockModel(), None, [1.0, 0.0], ["x"], 4, neural, 10.0)
    b = expand_to_event(CubicClockModel(), None, [1.0, 0.0], ["x"], 4, plane, 10.0)
    assert np.max(np.abs(a.trigger_time.coeffs - b.trigger_time.coeffs)) < 1e-13


def test_custom_event():
    spec = EventSpec.custom(lambda s: s[0] * s[1] - 0.5, direction="rising")
    m = AffineModel([[0.0, 0.0], [0.0, 0.0]], b=[1.0, 0.0], names=("t", "c"))
    etm = expand_to_event(m, None, [0.0, 1.0], ["c"], 5, spec, 5.0)
    # t * c = 1/2  =>  T = 1 / (2 (1 + d)) - 1/2
    want = [0.0] + [0.5 * (-1) ** n for n in range(1, 6)]
    assert np.max(np.abs(etm.trigger_time.coeffs - want)) < 1e-13


def test_inversion_requires_time_and_transversality():
    from eventjet.jetflow import expand_flow

    spec = EventSpec.plane([1.0], 1.0, indices=(0,))
    flow = expand_flow(decay_model(), None, [2.0], ["x"], 3, 1.0)
    with pytest.raises(ConfigError):
        invert_trigger_time(flow, spec)
    fl = expand_flow_to_event(decay_model(), None, [2.0], ["x"], 3, spec, 5.0)
    flat = EventSpec.plane([1e-12], 1e-12, indices=(0,))
    with pytest.raises(TransversalityError):
        invert_trigger_time(fl, flat)
    T = invert_trigger_time(fl, spec)
    with pytest.raises(ConfigError):
        event_transition_map(fl, T.embed(2, 3))


def test_crossing_hidden_inside_one_step():
    # straight-line motion: the linear flow is integrated in a few long steps,
    # one of which enters and leaves the sphere
    m = AffineModel(np.block([[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 6))]]),
                    names=("x", "y", "z", "vx", "vy", "vz"))
    spec = EventSpec.sphere([0.0, 0.0, 0.0], 1.0, direction="falling")
    tr = integrate(m, None, [-2.0, 0.2, 0.1, 1.0, 0.0, 0.05], event=spec, t_max=10.0)
    hit = detect(tr, spec)
    p0, v = np.array([-2.0, 0.2, 0.1]), np.array([1.0, 0.0, 0.05])
    a, b, c = v @ v, 2 * p0 @ v, p0 @ p0 - 1.0
    t_in = (-b - math.sqrt(b * b - 4 * a * c)) / (2 * a)
    assert abs(hit.t - t_in) < 1e-12
    assert hit.rate < 0
