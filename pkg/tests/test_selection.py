import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modesel import scoring
from modesel.dataset import Dataset, SplitSpec, split_pool_val, stratified_sample
from modesel.probe import accuracy, init_model, train
from modesel.scoring import Strategy
from modesel.seeding import derive_seed
from modesel.selection import (BudgetError, RunConfig, baseline_kcenter, baseline_random, baseline_uncertainty,
                               evaluate_strategy_gain, kcenter_greedy, round_schedule, run_method, run_mode,
                               select_topk)
from modesel.streaming import SetFunctionObjective, WeightedCoverage, run_streaming, sieve_stream
from modesel.synthetic import gaussian_mixture
from modesel.verify import greedy_maximize, random_facility_location

FAST = dict(epochs=5, lr=0.05, strategy_eval_epochs=2)


def blobs(n=400, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = np.array([[-2.0, 0.0], [2.0, 0.0]])[y] + 0.7 * rng.normal(size=(n, 2))
    return Dataset(x, y, 2)


def test_select_topk_examples():
    assert sorted(select_topk([0.1, 0.9, 0.5], 2).tolist()) == [1, 2]
    assert select_topk([0.3, 0.3, 0.3], 2).tolist() == [0, 1]
    assert sorted(select_topk([0.2, 0.1, 0.4], 3).tolist()) == [0, 1, 2]
    with pytest.raises(ValueError):
        select_topk([0.1], 2)


@given(st.integers(1, 5000), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_round_schedule_fills_budget(budget, f_init, f_round):
    init, sizes = round_schedule(budget, f_init, f_round)
    assert init >= 1 and init + sum(sizes) == budget
    assert all(k >= 1 for k in sizes)


def test_round_schedule_example():
    init, sizes = round_schedule(300)
    assert init == 30 and sizes[:3] == [27, 24, 22] and sum(sizes) == 270


def test_budget_config():
    assert RunConfig(budget=0.3).budget_size(1000) == 300
    assert RunConfig(budget=80).budget_size(400) == 80
    with pytest.raises(BudgetError):
        RunConfig(budget=500).budget_size(400)
    with pytest.raises(ValueError):
        RunConfig(init_fraction=0.0)


def test_run_mode_deterministic():
    data = blobs()
    split = split_pool_val(data, 0.1, seed=0)
    cfg = RunConfig(budget=80, seed=3, **FAST)
    a, b = run_mode(cfg, data, split), run_mode(cfg, data, split)
    assert a.selected == b.selected
    np.testing.assert_array_equal(np.array([r.weights for r in a.rounds]), np.array([r.weights for r in b.rounds]))


def test_budget_equal_to_init_gives_stratified_sample():
    data = blobs(200)
    split = split_pool_val(data, 0.1, seed=0)
    cfg = RunConfig(budget=12, init_fraction=1.0, seed=5, **FAST)
    run = run_mode(cfg, data, split)
    expected = stratified_sample(data, split.pool_indices, 12, derive_seed(5, "init"))
    assert run.selected == list(expected)
    assert len(run.rounds) == 1


def _check_run(run, budget):
    assert len(run.selected) == budget
    assert len(set(run.selected)) == len(run.selected)
    sizes = [r.coreset_size for r in run.rounds]
    assert all(b > a for a, b in zip(sizes, sizes[1:]))
    flat = [i for b in run.batches for i in b]
    assert flat == run.selected


@pytest.mark.parametrize("method", ["mode", "random", "uncertainty", "kcenter", "mode-streaming"])
def test_budget_safety_and_monotone_coreset(method):
    data = gaussian_mixture(300, 3, 5, separation=3.0, seed=1)
    split = split_pool_val(data, 0.2, seed=1)
    cfg = RunConfig(budget=0.25, seed=1, **FAST)
    run = run_method(method, cfg, data, split)
    _check_run(run, cfg.budget_size(len(split.pool_indices)))
    pool = set(split.pool_indices.tolist())
    assert set(run.selected) <= pool


def test_cached_matches_naive_end_to_end():
    data = gaussian_mixture(400, 4, 6, separation=3.0, seed=2)
    split = split_pool_val(data, 0.1, seed=2)
    runs = [run_mode(RunConfig(budget=100, seed=2, caching=c, keep_scores=True, **FAST), data, split)
            for c in (True, False)]
    cached, naive = runs
    assert cached.selected == naive.selected
    for rc, rn in zip(cached.rounds, naive.rounds):
        np.testing.assert_array_equal(rc.weights, rn.weights)
        np.testing.assert_array_equal(rc.gains, rn.gains)
    for sc, sn in zip(cached.scores, naive.scores):
        assert np.max(np.abs(sc[2] - sn[2])) <= 1e-12
    assert sum(r.distance_evals for r in cached.rounds) < sum(r.distance_evals for r in naive.rounds)
    assert cached.rounds[-1].cache_misses == len(cached.rounds) - 1


def test_threads_give_identical_runs(monkeypatch):
    data = blobs(200, seed=1)
    split = split_pool_val(data, 0.1, seed=0)
    cfg = RunConfig(budget=40, seed=0, **FAST)
    serial = run_mode(cfg, data, split)
    monkeypatch.setenv("MODESEL_THREADS", "4")
    threaded = run_mode(cfg, data, split)
    assert serial.selected == threaded.selected


def test_use_net_runs_and_stays_on_simplex():
    from modesel.controller import ControllerConfig
    data = blobs(200, seed=2)
    split = split_pool_val(data, 0.1, seed=0)
    run = run_mode(RunConfig(budget=40, controller=ControllerConfig(use_net=True), **FAST), data, split)
    for r in run.rounds:
        assert abs(r.weights.sum() - 1) <= 1e-9 and np.all(r.weights >= 0)


def test_kcenter_square_corners():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert kcenter_greedy(pts, [1, 2, 3], [0], 1).tolist() == [3]


def test_kcenter_spreads_more_than_random():
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(60, 2))
        kc = np.concatenate([[0], kcenter_greedy(x, np.arange(1, 60), [0], 7)])
        rnd = np.concatenate([[0], rng.choice(np.arange(1, 60), 7, replace=False)])

        def spread(sel):
            d = scoring.pairwise_distances(x[sel], x[sel])
            return d[np.triu_indices(len(sel), 1)].min()
        wins += spread(kc) >= spread(rnd)
    assert wins > 50


def test_uncertainty_baseline_ties_by_id():
    # zero features make every prediction uniform regardless of the weights
    data = Dataset(np.zeros((40, 3)), np.arange(40) % 2, 2)
    split = SplitSpec(np.arange(30), np.arange(30, 40), 0)
    cfg = RunConfig(budget=10, epochs=0, seed=0)
    run = baseline_uncertainty(cfg, data, split)
    init = run.batches[0]
    rest = [i for i in range(30) if i not in init]
    assert run.selected[len(init):] == rest[:10 - len(init)]


def test_random_baseline_reproducible():
    data = blobs(200)
    split = split_pool_val(data, 0.1, seed=0)
    cfg = RunConfig(budget=40, seed=9, epochs=2)
    assert baseline_random(cfg, data, split).selected == baseline_random(cfg, data, split).selected
    assert baseline_kcenter(cfg, data, split).selected == baseline_kcenter(cfg, data, split).selected


def _gain_setup(seed):
    data = gaussian_mixture(600, 3, 4, separation=4.0, seed=seed)
    idx = np.random.default_rng(seed).permutation(600)
    val, pool = idx[:150], idx[150:]
    core = np.array([i for i in pool if data.labels[i] != 2][:10])
    unl = np.setdiff1d(pool, core)
    model = init_model(4, 3, seed)
    train(model, data, core, val, epochs=20, lr=0.05)
    raw, _ = scoring.naive_raw_scores(model, data.features, data.features, data.labels, core, unl, 3)
    norm = np.column_stack([scoring.normalize_column(raw[:, j]) for j in range(4)])
    return data, val, core, unl, model, norm


def test_gain_zero_without_training_and_repeatable():
    data, val, core, unl, model, norm = _gain_setup(0)
    p = accuracy(model, data, val)
    cfg0 = RunConfig(strategy_eval_epochs=0)
    assert evaluate_strategy_gain(Strategy.UNCERTAINTY, cfg0, core, unl, norm, model, data, val, p, 1) == 0.0
    cfg = RunConfig(lr=0.05)
    a = evaluate_strategy_gain(Strategy.BOUNDARY, cfg, core, unl, norm, model, data, val, p, 1)
    b = evaluate_strategy_gain(Strategy.BOUNDARY, cfg, core, unl, norm, model, data, val, p, 1)
    assert a == b
    assert model.version == 1  # the fine-tune ran on a clone


def test_class_balance_gain_when_class_missing():
    cfg = RunConfig(lr=0.05)
    wins = 0
    for seed in range(20):
        data, val, core, unl, model, norm = _gain_setup(seed)
        p = accuracy(model, data, val)
        gc = evaluate_strategy_gain(Strategy.CLASS_BALANCE, cfg, core, unl, norm, model, data, val, p, seed)
        gu = evaluate_strategy_gain(Strategy.UNCERTAINTY, cfg, core, unl, norm, model, data, val, p, seed)
        wins += gc > gu
    assert wins > 10


def test_unknown_method():
    data = blobs(100)
    with pytest.raises(ValueError, match="unknown method"):
        run_method("craig", RunConfig(), data, split_pool_val(data, 0.1))


# streaming


def test_sieve_takes_everything_when_budget_covers_stream():
    f = random_facility_location(10, np.random.default_rng(0)).as_set_function()
    order = [3, 1, 4, 0, 9, 2, 6, 5, 8, 7]
    members, value, _ = sieve_stream(SetFunctionObjective(f), order, 10)
    assert members == order and value == pytest.approx(10.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_sieve_half_bound_and_permutations(seed):
    rng = np.random.default_rng(seed)
    f = random_facility_location(40, rng).as_set_function()
    _, g, _ = greedy_maximize(f, 6)
    for _ in range(3):
        members, value, levels = sieve_stream(SetFunctionObjective(f), rng.permutation(40), 6)
        assert len(members) <= 6 and len(set(members)) == len(members)
        assert value == pytest.approx(f(members))
        assert value >= 0.45 * g
        assert levels <= math.ceil(math.log(2 * 6) / math.log1p(0.05)) + 2


def test_weighted_coverage_matches_direct_evaluation():
    rng = np.random.default_rng(4)
    sim = rng.random((15, 8))
    modular = rng.random(15)
    obj = WeightedCoverage(sim, modular, 0.4, scale=2.0)
    st_ = obj.empty()
    for e in [3, 7, 1, 3]:
        obj.add(st_, e)
    members = st_["members"]
    direct = 0.8 * sim[sorted(set(members))].max(axis=0).sum() + modular[members].sum()
    assert obj.value(st_) == pytest.approx(direct)


def test_run_streaming_shapes():
    data = gaussian_mixture(300, 3, 5, separation=3.0, seed=0)
    split = split_pool_val(data, 0.2, seed=0)
    cfg = RunConfig(budget=60, **FAST)
    run = run_streaming(cfg, [0.25] * 4, data, split)
    _check_run(run, 60)
    assert len(run.rounds) == 2 and run.metadata["stream_levels"] > 0
    with pytest.raises(ValueError):
        run_streaming(cfg, [0.5, 0.5, 0.5, 0.0], data, split)
