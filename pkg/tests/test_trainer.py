import io
import json

import numpy as np
import pytest

from saol.errors import TrainingError
from saol.objective import ObjectiveParams, SignalSet, sample_cost
from saol.oblique import AnalysisOperator, is_oblique, random_oblique
from saol.synthetic import CosparseSpec, generate_cosparse
from saol.trainer import (CostWindow, StoppingMonitor, TrainerConfig, armijo_search,
                          riemannian_gradient, sample_batch, sliding_average_update,
                          stopping_check, train)


@pytest.fixture(scope="module")
def small_data():
    gt = AnalysisOperator.random([(4, 3), (4, 3)], np.random.default_rng(11))
    return generate_cosparse(gt, CosparseSpec(4, 0.05, 2000, seed=3))


def small_config(**kw):
    base = dict(batch_size=50, max_iters=300, avg_window=200, stop_window=50, seed=5)
    base.update(kw)
    return TrainerConfig(**base)


# -- config -----------------------------------------------------------------

def test_config_defaults():
    cfg = TrainerConfig()
    assert (cfg.batch_size, cfg.a0, cfg.armijo_b, cfg.armijo_c, cfg.k_max) == (500, 0.1, 0.9, 1e-4, 40)
    assert (cfg.avg_window, cfg.stop_window, cfg.stop_tol) == (2000, 200, 5e-5)
    assert cfg.params == ObjectiveParams(500.0, 6500.0, 1e-4)


@pytest.mark.parametrize("kw", [dict(armijo_b=1.0), dict(armijo_c=0.0), dict(a0=0.0),
                                dict(avg_window=0), dict(stop_window=0), dict(k_max=0),
                                dict(batch_size=0), dict(max_iters=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainerConfig(**kw)


# -- sliding window -----------------------------------------------------------

def test_window_examples():
    w = CostWindow(3)
    assert sliding_average_update(w, 5.0) == 5.0
    w = CostWindow(3)
    for c in (1.0, 2.0, 3.0):
        sliding_average_update(w, c)
    assert sliding_average_update(w, 4.0) == 3.0
    np.testing.assert_array_equal(w.values(), [2.0, 3.0, 4.0])


def test_window_never_exceeds_size_and_matches_tail_mean():
    rng = np.random.default_rng(0)
    w = CostWindow(7)
    costs = rng.standard_normal(50)
    for i, c in enumerate(costs):
        predicted = w.mean_if_pushed(c)
        got = w.push(c)
        assert predicted == got
        assert len(w) == min(i + 1, 7)
        assert got == pytest.approx(costs[max(0, i - 6):i + 1].mean(), rel=1e-12)


def test_empty_window_mean_raises():
    with pytest.raises(ValueError):
        CostWindow(2).mean()


# -- stopping -----------------------------------------------------------------

def test_stopping_constant_stream():
    mon = StoppingMonitor(200, 5e-5)
    for i in range(200):
        v, stop = stopping_check(mon)
        assert not stop
        mon.record(2.5)
    v, stop = stopping_check(mon)
    assert v == 0.0 and stop


def test_stopping_statistic_hand_arithmetic():
    mon = StoppingMonitor(200, 5e-5)
    for _ in range(199):
        mon.record(1.0)
    mon.record(3.0)  # moves the running mean from 1 to 1.01
    assert mon.phi == pytest.approx(1.01, abs=1e-15)
    phibar = (199 * 1.0 + 1.01) / 200
    v, stop = mon.check()
    assert v == pytest.approx((1.01 - phibar) / phibar, rel=1e-12)
    assert not stop


def test_stopping_zero_cost_collapses():
    mon = StoppingMonitor(3, 1e-9)
    for _ in range(3):
        mon.record(0.0)
    assert mon.check() == (0.0, True)


# -- batches and gradient -----------------------------------------------------

def test_sample_batch_range_and_determinism():
    a = sample_batch(10, 1000, np.random.default_rng(1))
    assert a.min() >= 0 and a.max() <= 9
    np.testing.assert_array_equal(a, sample_batch(10, 1000, np.random.default_rng(1)))
    with pytest.raises(ValueError):
        sample_batch(0, 3, np.random.default_rng(0))


def test_riemannian_gradient_is_descent_direction(small_data):
    rng = np.random.default_rng(2)
    params = ObjectiveParams()
    for _ in range(5):
        op = AnalysisOperator.random([(4, 3), (4, 3)], rng)
        batch = small_data.samples[:20]
        g = riemannian_gradient(op, batch, params)
        for f, gi in zip(op.factors, g):
            assert np.max(np.abs(np.sum(f * gi, axis=1))) < 1e-9
        eps = 1e-7
        moved = op.step([-x for x in g], eps)
        slope = (sample_cost(moved, batch, params) - sample_cost(op, batch, params)) / eps
        assert slope < 0


# -- line search ----------------------------------------------------------------

def _circle_op(theta):
    return AnalysisOperator([np.array([[np.cos(theta), np.sin(theta)]])])


def _angle(op):
    w = op.factors[0][0]
    return float(np.arctan2(w[1], w[0]))


def test_armijo_quadratic_on_circle_accepts_first_trial():
    theta0 = 0.5
    op = _circle_op(theta0)
    tangent = np.array([[-np.sin(theta0), np.cos(theta0)]])
    direction = [2 * theta0 * tangent]  # Riemannian gradient of theta^2
    window = CostWindow(1)
    window.push(theta0 ** 2)
    res = armijo_search(op, direction, lambda o: _angle(o) ** 2, window.mean(), window,
                        a_init=0.1, b=0.9, c=1e-4, k_max=40)
    assert res.accepted and res.trials == 1 and res.step == 0.1
    assert _angle(res.op) == pytest.approx(0.8 * theta0, abs=1e-14)
    assert res.fbar == pytest.approx((0.8 * theta0) ** 2, abs=1e-14)
    assert len(window) == 1 and window.mean() == theta0 ** 2


def test_armijo_backtracks_geometrically():
    theta0 = 0.5
    op = _circle_op(theta0)
    direction = [2 * theta0 * np.array([[-np.sin(theta0), np.cos(theta0)]])]
    window = CostWindow(1)
    window.push(theta0 ** 2)
    # a = 5 overshoots to -4.5; shrinking by 0.5 three times reaches 0.625
    res = armijo_search(op, direction, lambda o: _angle(o) ** 2, window.mean(), window,
                        a_init=5.0, b=0.5, c=1e-4, k_max=40)
    assert res.accepted and res.trials == 4 and res.step == 0.625


def test_armijo_failure_leaves_operator_unchanged():
    rng = np.random.default_rng(3)
    op = AnalysisOperator.random([(4, 3), (4, 3)], rng)
    before = [f.copy() for f in op.factors]
    direction = [1e6 * rng.standard_normal(f.shape) for f in op.factors]
    window = CostWindow(5)
    window.push(1.0)
    res = armijo_search(op, direction, lambda o: 2.0, 1.0, window, 0.1, 0.9, 1e-4, 40)
    assert not res.accepted and res.trials == 40
    assert res.op is op
    assert all(np.array_equal(a, b) for a, b in zip(before, op.factors))
    assert len(window) == 1


# -- full loop ------------------------------------------------------------------

def test_train_zero_iterations_returns_init(small_data):
    init = AnalysisOperator.random([(4, 3), (4, 3)], np.random.default_rng(0))
    rep = train(small_data, init, small_config(max_iters=0))
    assert rep.op == init and rep.reason == "max_iters" and rep.iterations == 0


def test_train_posthoc_armijo_and_step_policy(small_data):
    cfg = small_config(k_max=4)
    init = AnalysisOperator.random([(4, 3), (4, 3)], np.random.default_rng(1))
    seen = []
    rep = train(small_data, init, cfg, callback=lambda i, op: seen.append(op))
    assert rep.accepted_steps > 0 and rep.failed_searches > 0
    a_init = cfg.a0
    prev_op = init
    for rec, op in zip(rep.log, seen):
        a = a_init
        for _ in range(rec.trials - 1):
            a = cfg.armijo_b * a
        assert a == rec.step
        if rec.accepted:
            assert rec.fbar <= rec.fbar_prev - rec.step * cfg.armijo_c * rec.grad_sqnorm
            a_init = min(rec.step / cfg.armijo_b, cfg.a0)
        else:
            assert op == prev_op
            assert all(np.array_equal(x, y) for x, y in zip(op.factors, prev_op.factors))
            a_init = cfg.a0
        assert all(is_oblique(f) for f in op.factors)
        prev_op = op


def test_train_log_stream_and_determinism(small_data):
    init = AnalysisOperator.random([(4, 3), (4, 3)], np.random.default_rng(2))
    buf = io.StringIO()
    r1 = train(small_data, init, small_config(max_iters=120), log_stream=buf)
    r2 = train(small_data, init, small_config(max_iters=120))
    assert repr(r1.log) == repr(r2.log)
    assert r1.op == r2.op
    lines = buf.getvalue().splitlines()
    assert len(lines) == r1.iterations
    first = json.loads(lines[0])
    assert {"iteration", "cost", "fbar", "step", "trials", "v"} <= set(first)
    r3 = train(small_data, init, small_config(max_iters=120, seed=6))
    assert r3.op != r1.op


def test_train_stops_only_after_window(small_data):
    init = AnalysisOperator.random([(4, 3), (4, 3)], np.random.default_rng(4))
    rep = train(small_data, init, small_config(max_iters=2000, stop_tol=1e-2))
    assert rep.reason == "converged"
    assert rep.iterations >= 50
    assert all(np.isnan(r.v) for r in rep.log[:49])
    assert rep.log[-1].v < 1e-2


def test_stopping_statistic_trends_down(small_data):
    init = AnalysisOperator.random([(4, 3), (4, 3)], np.random.default_rng(5))
    rep = train(small_data, init, small_config(max_iters=800, stop_tol=0.0))
    v = np.array([r.v for r in rep.log if np.isfinite(r.v)])
    assert np.median(v[-100:]) < np.median(v[:100])


def test_train_rank_deficiency_is_structured():
    data = SignalSet((3,), random_oblique(20, 3, np.random.default_rng(0)))
    init = AnalysisOperator([random_oblique(2, 3, np.random.default_rng(1))])
    with pytest.raises(TrainingError) as info:
        train(data, init, small_config())
    assert info.value.iteration == 0


def test_train_rejects_mismatched_signals(small_data):
    with pytest.raises(ValueError):
        train(small_data, AnalysisOperator.random([(4, 3), (4, 4)], np.random.default_rng(0)),
              small_config())
    with pytest.raises(ValueError):
        train(small_data, AnalysisOperator.random([(3, 1), (9, 9)], np.random.default_rng(0)),
              small_config())
