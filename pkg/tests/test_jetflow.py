import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventjet.dynamics import AffineModel, CubicClockModel, TransferModel, decay_model
from eventjet.errors import ConfigError, IntegrationError
from eventjet.jetflow import (
    IntegratorSettings,
    expand_flow,
    expand_flow_with_time,
    integrate,
    perturbed_initial_state,
)
from eventjet.scenarios import constant_direction_policy


def test_decay_trajectory_accuracy():
    tr = integrate(decay_model(), None, [2.0], t_end=3.0)
    assert tr.times[-1] == 3.0
    assert abs(tr.final[0] - 2 * math.exp(-3.0)) < 1e-13
    assert abs(tr.state_at(1.234)[0] - 2 * math.exp(-1.234)) < 1e-13


def test_integrate_is_deterministic():
    m = CubicClockModel()
    a = integrate(m, None, [1.3, 0.0], t_end=4.0)
    b = integrate(m, None, [1.3, 0.0], t_end=4.0)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.times, b.times)


def test_integrate_argument_errors():
    with pytest.raises(ConfigError):
        integrate(decay_model(), None, [1.0])
    with pytest.raises(IntegrationError):
        integrate(decay_model(), None, [float("nan")], t_end=1.0)
    with pytest.raises(IntegrationError, match="budget"):
        integrate(decay_model(), None, [1.0], t_end=10.0, settings=IntegratorSettings(max_steps=2))


def test_decay_flow_coefficients():
    fx = expand_flow(decay_model(), None, [2.0], ["x"], 6, 1.5)
    c = fx.map[0].coeffs
    e = math.exp(-1.5)
    assert abs(c[0] - 2 * e) < 1e-13 and abs(c[1] - e) < 1e-13
    assert np.max(np.abs(c[2:])) < 1e-13


def test_flow_with_time_is_taylor_in_dt():
    fx = expand_flow_with_time(decay_model(), None, [2.0], ["x"], 5, 0.7)
    p = fx.map[0]
    e = 2 * math.exp(-0.7)
    for j in range(6):
        assert abs(p.coeff((0, j)) - e * (-1) ** j / math.factorial(j)) < 1e-13
        # mixed terms: d/dx0 of x(t) is e^{-t}
        if j < 5:
            assert abs(p.coeff((1, j)) - 0.5 * e * (-1) ** j / math.factorial(j)) < 1e-13
    assert fx.time_var == 1


def test_rotation_flow_is_linear_and_exact():
    m = AffineModel([[0.0, 1.0], [-1.0, 0.0]], names=("x", "y"))
    fx = expand_flow(m, None, [1.0, 0.0], ["x", "y"], 4, 2.0)
    A = fx.map.coefficient_matrix()
    c, s = math.cos(2.0), math.sin(2.0)
    assert np.allclose(A[:, :3], [[c, c, s], [-s, -s, c]], atol=1e-13)
    assert np.max(np.abs(A[:, 3:])) < 1e-13


def test_cubic_flow_pointwise_decay():
    m = CubicClockModel()
    k = 4
    fx = expand_flow(m, None, [1.0, 0.0], ["x"], k, 1.0)
    errs = []
    for h in [0.2, 0.1, 0.05]:
        x0 = 1.0 + h
        exact = x0 / math.sqrt(1 + 2 * x0 * x0)
        errs.append(abs(fx.map.eval([h])[0] - exact))
    for a, b in zip(errs[:-1], errs[1:]):
        assert 2 ** (k + 0.5) < a / b < 2 ** (k + 1.5)


def test_jet_constant_part_matches_scalar_run():
    m = CubicClockModel()
    fx = expand_flow(m, None, [1.0, 0.0], ["x"], 6, 3.0)
    tr = integrate(m, None, [1.0, 0.0], t_end=3.0)
    assert abs(fx.map.nominal[0] - tr.final[0]) < 1e-12


def test_var_scales_rescale_coefficients():
    m = decay_model()
    a = expand_flow(m, None, [2.0], ["x"], 3, 1.0)
    b = expand_flow(m, None, [2.0], ["x"], 3, 1.0, var_scales=[0.5])
    assert abs(b.map[0].coeffs[1] - 0.5 * a.map[0].coeffs[1]) < 1e-15
    assert b.map.labels[0].scale == 0.5


def test_constant_expansion_matches_finite_difference():
    m = TransferModel()
    stub = constant_direction_policy((0.0, 1.0, 0.0))
    x0 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    s = m.consts["gamma"]
    fx = expand_flow(m, stub, x0, ["gamma"], 2, 0.5, var_scales=[s])
    h = 1e-3

    def run(d):
        _, consts = perturbed_initial_state(m, x0, ["gamma"], [d], [s])
        return integrate(m, stub, x0, t_end=0.5, consts=consts).final

    fd = (run(h) - run(-h)) / (2 * h)
    assert np.allclose(fx.map.coefficient_matrix()[:, 1], fd, rtol=1e-6, atol=1e-15)
    h = 1e-2
    fd2 = (run(h) - 2 * run(0.0) + run(-h)) / (2 * h * h)
    assert np.allclose(fx.map.coefficient_matrix()[:, 2], fd2, rtol=1e-4, atol=1e-12)


def test_expansion_argument_errors():
    m = decay_model()
    with pytest.raises(ConfigError):
        expand_flow(m, None, [1.0], ["x"], 0, 1.0)
    with pytest.raises(ConfigError):
        expand_flow(m, None, [1.0], ["x", "x"], 2, 1.0)
    with pytest.raises(ConfigError):
        expand_flow(m, None, [1.0], ["q"], 2, 1.0)
    with pytest.raises(ConfigError):
        expand_flow(m, None, [1.0], ["x"], 2, 1.0, var_scales=[-1.0])
    with pytest.raises(ConfigError):
        expand_flow_with_time(m, None, [1.0], ["x"], 2, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.1, 2.0))
def test_decay_flow_matches_closed_form(x0, t):
    fx = expand_flow(decay_model(), None, [x0], ["x"], 3, t)
    for d in (-0.3, 0.2):
        assert abs(fx.map.eval([d])[0] - (x0 + d) * math.exp(-t)) < 1e-12
