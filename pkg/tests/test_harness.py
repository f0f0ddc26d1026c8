import math

import numpy as np
import pytest

from eventjet.errors import ConfigError, EventMissedError
from eventjet.harness import (
    FILTERED,
    HIT,
    MISSED,
    empirical_moments,
    frobenius_rel_error,
    mc_to_event,
    mean_consistency,
    order_sweep_study,
    sample_box,
    sample_stream,
)
from eventjet.scenarios import cubic_scenario, decay_scenario
from eventjet.uncert import UniformBox, propagate_moments
from eventjet.eventmap import expand_to_event


def test_sample_rows_depend_only_on_index():
    box = UniformBox.centered([1.0, 2.0])
    a = sample_box(box, 20, seed=11)
    b = sample_box(box, 10, seed=11, start=5)
    assert np.array_equal(a[5:15], b)
    assert np.array_equal(a, sample_box(box, 20, seed=11))
    assert not np.array_equal(a, sample_box(box, 20, seed=12))
    assert np.array_equal(sample_stream(3, 7).random(2), sample_stream(3, 7).random(2))
    with pytest.raises(ConfigError):
        sample_box(box, 0)


def test_sample_box_moments():
    box = UniformBox([0.0, -3.0], [1.0, 3.0])
    X = sample_box(box, 4000, seed=2)
    assert np.all(X >= box.lower) and np.all(X <= box.upper)
    var = (np.asarray(box.upper) - np.asarray(box.lower)) ** 2 / 12
    se = np.sqrt(var / len(X))
    assert np.all(np.abs(X.mean(axis=0) - [0.5, 0.0]) < 4 * se)
    assert np.allclose(X.var(axis=0), var, rtol=0.1)


def test_decay_trigger_times():
    sc = decay_scenario()
    box = UniformBox.centered([0.5], ["dx"])
    res = mc_to_event(sc.model, None, sc.x0, box, sc.event, 50, seed=1, t_max=sc.t_max)
    assert res.counts[HIT] == 50
    assert np.max(np.abs(res.times - np.log(2.0 + res.dz[:, 0]))) < 1e-12
    assert np.max(np.abs(res.states[:, 0] - 1.0)) < 1e-13


def test_statuses_are_recorded():
    sc = decay_scenario()
    box = UniformBox.centered([1.5], ["dx"])
    res = mc_to_event(sc.model, None, sc.x0, box, sc.event, 40, seed=0, t_max=sc.t_max,
                      accept=lambda s: s[0] > 10.0)
    below = 2.0 + res.dz[:, 0] < 1.0
    assert np.array_equal(res.status == MISSED, below)
    assert np.all(res.status[~below] == FILTERED)
    assert np.all(np.isnan(res.states[below]))
    assert sum(res.counts.values()) == 40
    with pytest.raises(EventMissedError, match="nominal"):
        mc_to_event(sc.model, None, [0.5], box, sc.event, 5, t_max=sc.t_max)
    with pytest.raises(ConfigError):
        mc_to_event(sc.model, None, sc.x0, UniformBox.centered([1.0, 1.0]), sc.event, 5)


def test_frobenius_examples():
    assert frobenius_rel_error(np.eye(2), 2 * np.eye(2)) == pytest.approx(0.5)
    assert frobenius_rel_error([[1.0]], [[1.0]]) == 0.0
    with pytest.raises(ConfigError):
        frobenius_rel_error(np.eye(2), np.eye(3))
    with pytest.raises(ConfigError):
        frobenius_rel_error(np.eye(2), np.zeros((2, 2)))


def test_empirical_moments_are_unbiased_sample_moments():
    sc = cubic_scenario()
    box = UniformBox.centered([0.3], ["dx"])
    res = mc_to_event(sc.model, None, sc.x0, box, sc.event, 30, seed=5, expand_vars=["x"], t_max=sc.t_max)
    mom = empirical_moments(res, [1])
    t = res.states[:, 1]
    assert mom.mean[0] == pytest.approx(t.mean(), rel=1e-14)
    assert mom.cov[0, 0] == pytest.approx(t.var(ddof=1), rel=1e-12)
    assert len(mom.labels) == 1
    # clock at x = 1/2 is 2 - 1 / (2 x0^2)
    x0 = 1.0 + res.dz[:, 0]
    assert np.max(np.abs(t - (2 - 0.5 / x0**2))) < 1e-10


def test_cubic_sweep_improves_with_order(tmp_path):
    sc = cubic_scenario()
    box = UniformBox.centered([0.3], ["dx"])
    sw = order_sweep_study(sc.model, None, sc.x0, box, sc.event, [1, 2, 4], 400, seed=9,
                           expand_vars=["x"], t_max=sc.t_max, components=[1])
    errs = [r.frobenius_rel_error for r in sw.rows]
    assert errs[-1] < errs[0] / 3
    sw.to_csv(tmp_path / "a.csv")
    sw.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert set(sw.timings()["orders"]) == {1, 2, 4}


def test_sweep_rejects_partial_baseline():
    sc = decay_scenario()
    box = UniformBox.centered([1.5], ["dx"])
    with pytest.raises(EventMissedError):
        order_sweep_study(sc.model, None, sc.x0, box, sc.event, [1], 20, t_max=sc.t_max)


def test_mean_consistency():
    sc = cubic_scenario()
    box = UniformBox.centered([0.2], ["dx"])
    res = mc_to_event(sc.model, None, sc.x0, box, sc.event, 500, seed=2, expand_vars=["x"], t_max=sc.t_max)
    ref = empirical_moments(res, [1])
    etm = expand_to_event(sc.model, None, sc.x0, ["x"], 6, sc.event, sc.t_max)
    mom = propagate_moments(etm.ett, box).subset([1])
    z = mean_consistency(mom, ref)
    assert z.shape == (1,) and z[0] < 4.0
    assert math.isfinite(z[0])
