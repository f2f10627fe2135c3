import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from modesel.controller import (ControllerConfig, ControllerState, WeightNet, blend_weights, convergence_stats,
                                geometric_rate, net_forward, reward, round_update, softmax_weights, temperature,
                                update_alpha)

unit = st.floats(0, 1)


def test_temperature_examples():
    cfg = ControllerConfig()
    assert temperature(cfg, 1.0, 0.0) == 1.0
    assert abs(temperature(cfg, 0.5, 0.5) - math.exp(-1)) <= 1e-12
    assert temperature(cfg, 0.5, 0.5) == pytest.approx(0.3679, abs=5e-5)
    assert temperature(ControllerConfig(alpha_decay=5, beta_decay=5), 0.0, 1.0) == 0.05


def test_reward_examples():
    assert reward(-0.01, 0.25) == 0.0
    assert reward(0.0, 0.25) == 0.0
    assert abs(reward(0.02, 0.25) - 0.005) <= 1e-12


def test_update_alpha_examples():
    assert update_alpha(1.7, 0.001, 0.0) == 1.7
    assert abs(update_alpha(1.0, 0.001, 0.005) - 1.000005) <= 1e-12
    assert update_alpha(1.0, 0.001, 0.2) > update_alpha(1.0, 0.001, 0.1)


def test_softmax_examples():
    for tau in (0.05, 1.0, 7.0):
        assert softmax_weights([0.3] * 4, tau).tolist() == [0.25] * 4
    e = math.e
    ref = np.array([e, 1, 1, 1]) / (e + 3)
    np.testing.assert_allclose(softmax_weights([1, 0, 0, 0], 1.0), ref, rtol=0, atol=1e-12)
    np.testing.assert_allclose(ref, [0.4754, 0.1749, 0.1749, 0.1749], atol=5e-5)
    assert softmax_weights([1, 0, 0, 0], 0.05)[0] >= 1 - 1e-8
    with pytest.raises(ValueError):
        softmax_weights([1, 0, 0, 0], 0.0)


def test_blend_examples():
    w_old = np.full(4, 0.25)
    target = np.array([0.5, 0.5 / 3, 0.5 / 3, 0.5 / 3])
    np.testing.assert_array_equal(blend_weights(w_old, target, 0.0), w_old)
    np.testing.assert_allclose(blend_weights(w_old, target, 1.0), target, atol=1e-12)
    out = blend_weights(w_old, target, 0.2)
    np.testing.assert_allclose(out, [0.3, 0.7 / 3, 0.7 / 3, 0.7 / 3], atol=1e-12)
    np.testing.assert_allclose(out, [0.30, 0.2333, 0.2333, 0.2333], atol=5e-5)
    with pytest.raises(ValueError, match="simplex"):
        blend_weights([0.5, 0.5, 0.5, 0.5], target, 0.2)


def test_round_update_examples():
    cfg = ControllerConfig()
    s0 = ControllerState()
    s1 = round_update(s0, cfg, [0.02, 0, 0, 0])
    # hand-computed chain: r = [0.005, 0, 0, 0], target = softmax([1.005, 1, 1, 1]) at tau = 1
    tgt = np.exp([1.005, 1, 1, 1])
    tgt /= tgt.sum()
    np.testing.assert_allclose(s1.weights, 0.8 * 0.25 + 0.2 * tgt, atol=1e-12)
    assert s1.weights[0] > 0.25 and np.all(s1.weights[1:] < 0.25)
    assert s1.round == 1 and s1.temperature == 1.0
    np.testing.assert_allclose(s1.alpha, [1.000005, 1, 1, 1], atol=1e-12)
    assert s1.weights.sum() == pytest.approx(1.0, abs=1e-12)
    again = round_update(s0, cfg, [0.02, 0, 0, 0])
    np.testing.assert_array_equal(again.weights, s1.weights)


def test_round_update_nonpositive_gains_moves_toward_uniform():
    cfg = ControllerConfig()
    s = ControllerState(weights=np.array([0.7, 0.1, 0.1, 0.1]))
    out = round_update(s, cfg, [-0.1, 0.0, -0.02, 0.0])
    np.testing.assert_allclose(out.weights, 0.8 * s.weights + 0.2 * 0.25, atol=1e-12)
    np.testing.assert_array_equal(out.rewards, np.zeros(4))


def test_strategy_perf_is_window_mean():
    cfg = ControllerConfig()
    s = ControllerState()
    gains = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
    for g in gains:
        s = round_update(s, cfg, np.array(g) * 0.01)
    np.testing.assert_allclose(s.strategy_perf, [0, 0.01 / 3, 0.01 / 3, 0.01 / 3], atol=1e-15)


def test_observe_normalizes_grad_by_running_max():
    s = ControllerState()
    s = s.observe(epoch_progress=0.1, val_accuracy=0.5, raw_grad_norm=4.0, budget_remaining=0.9)
    assert s.grad_norm == 1.0
    s = s.observe(epoch_progress=0.2, val_accuracy=0.6, raw_grad_norm=1.0, budget_remaining=0.8)
    assert s.grad_norm == 0.25 and s.grad_norm_max == 4.0
    assert s.features().shape == (8,)


def test_net_examples():
    s = ControllerState(epoch_progress=0.3, val_accuracy=0.7, grad_norm=0.4, budget_remaining=0.6,
                        strategy_perf=np.array([0.01, -0.02, 0.0, 0.03]))
    assert net_forward(WeightNet.zeros(), s, 0.5).tolist() == [0.25] * 4
    net = WeightNet.random(3)
    np.testing.assert_array_equal(net_forward(net, s, 0.7), net_forward(net, s, 0.7))
    assert net.w1.shape == (64, 8) and net.w2.shape == (4, 64)


def test_net_forward_simplex_sweep():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        net = WeightNet.random(trial)
        s = ControllerState(*rng.random(4), strategy_perf=rng.normal(scale=0.1, size=4))
        w = net_forward(net, s, float(rng.uniform(0.05, 2.0)))
        assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-9


def test_round_update_with_zero_net_matches_default_path():
    cfg = ControllerConfig()
    s = ControllerState()
    a = round_update(s, cfg, [0.03, 0.01, -0.01, 0.0])
    b = round_update(s, cfg, [0.03, 0.01, -0.01, 0.0], net=WeightNet.zeros())
    # zero logits differ from the default by a constant shift of 1
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-15)


def test_convergence_stats_examples():
    steps, total = convergence_stats([[0.25] * 4] * 5)
    assert np.all(steps == 0) and total == 0
    steps, total = convergence_stats([[1, 0, 0, 0], [0, 1, 0, 0]])
    assert abs(total - math.sqrt(2)) <= 1e-12
    m = 7
    hist = [[1, 0, 0, 0] if i % 2 == 0 else [0, 1, 0, 0] for i in range(m)]
    assert abs(convergence_stats(hist)[1] - (m - 1) * math.sqrt(2)) <= 1e-12
    with pytest.raises(ValueError):
        convergence_stats([[0.25] * 4])


def test_geometric_rate():
    assert geometric_rate(0.5 ** np.arange(10)) == pytest.approx(0.5)
    assert geometric_rate([0.0, 0.0]) == 0.0


simplex = arrays(np.float64, 4, elements=st.floats(0.01, 1)).map(lambda v: v / v.sum())


@settings(max_examples=200, deadline=None)
@given(simplex, arrays(np.float64, 4, elements=st.floats(-0.5, 0.5)), unit, unit)
def test_round_update_preserves_simplex(w, gains, b, e):
    s = ControllerState(weights=w, budget_remaining=b, epoch_progress=e)
    for _ in range(3):
        s = round_update(s, ControllerConfig(), gains)
        assert np.all(s.weights >= 0) and abs(s.weights.sum() - 1) <= 1e-9
        assert np.all(s.alpha > 0) and s.temperature >= 0.05


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(-50, 50)), st.floats(-100, 100), st.floats(0.05, 10))
def test_softmax_shift_invariant(v, c, tau):
    np.testing.assert_allclose(softmax_weights(v + c, tau), softmax_weights(v, tau), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(unit, unit), min_size=2, max_size=20),
       st.floats(0, 2), st.floats(0, 2))
def test_temperature_monotone_in_schedule(steps, a, b):
    cfg = ControllerConfig(alpha_decay=a, beta_decay=b)
    drops = sorted(x for x, _ in steps)
    progress = sorted(y for _, y in steps)
    taus = [temperature(cfg, 1 - d, p) for d, p in zip(drops, progress)]
    assert all(t1 <= t0 + 1e-15 for t0, t1 in zip(taus, taus[1:]))


def test_concentration_at_low_temperature():
    cfg = ControllerConfig(blend=1.0, alpha_decay=3.0, beta_decay=3.0)
    s = replace(ControllerState(), budget_remaining=0.0, epoch_progress=1.0)
    out = round_update(s, cfg, [0.0, 0.0, 4.0, 0.0])
    # r_c = 1, so the target softmax at tau_min puts e^{20} times more mass on it
    assert out.temperature == 0.05
    assert out.weights[2] >= 1 - 1e-8
