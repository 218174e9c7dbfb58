import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from queuelearn.exceptions import NonSeparable
from queuelearn.lindley import (
    GRID, MarginPerceptron, PerceptronState, ServiceModeModel, classify, hinge_grad, hinge_loss,
    interarrivals, lindley, lindley_step, mistake_bound_check, oco_bound_check, ogd_trajectory,
    perceptron_update, queue_report, run_perceptron, run_queue_with_perceptron, service_regret,
    wait_trace, waiting_gap_check, zero_one_loss,
)

seeds = st.integers(0, 2**31)


def suffix_max(tau, a):
    """``W_t = max over t' <= t of sum_{s=t'}^{t-1} (tau_s - a_s)``, empty sum included."""
    T = len(a)
    W = np.zeros(T + 1)
    for t in range(1, T + 1):
        W[t] = max(float(np.sum(tau[s:t] - a[s:t])) for s in range(t + 1))
    return W


def test_lindley_step_examples():
    assert lindley_step(0, 1, 2) == 0
    assert lindley_step(3, 1, 2) == 2


def test_lindley_matches_suffix_max():
    rng = np.random.default_rng(0)
    for rate in (0.5, 0.9, 1.2):
        a = interarrivals(rng, rate, 1000)
        tau = np.ceil(rng.exponential(1.0, 1000) / GRID) * GRID
        W = lindley(tau, a)
        # grid-valued inputs keep every partial sum exact
        assert np.array_equal(W, suffix_max(tau, a))


def test_service_regret_examples():
    tr = wait_trace(np.ones(5), np.full(5, 0.5), 0.5)
    assert service_regret(tr) == 0
    tau = np.array([0.5, 2.0, 0.5, 2.0, 2.0])
    tr = wait_trace(np.ones(5), tau, 0.5)
    assert service_regret(tr) == 3 * (2.0 - 0.5)
    assert service_regret(tr, 2) == 1.5
    with pytest.raises(ValueError):
        service_regret(tr, 6)


def test_service_regret_resummation():
    rng = np.random.default_rng(1)
    tau = rng.choice([0.25, 1.5], size=400)
    tr = wait_trace(rng.random(400), tau, 0.25)
    total = 0.0
    for s in tau:
        total += s - 0.25
    assert service_regret(tr) == pytest.approx(total, abs=1e-9)


def test_gap_oracle_policy():
    a = np.random.default_rng(2).random(200)
    tr = wait_trace(a, np.full(200, 0.6), 0.6)
    ok, rhs, _ = waiting_gap_check(tr)
    assert ok.all() and not np.any(tr.gap)


def test_gap_saturated_case():
    tau_star, tau_0 = 0.5, 1.25
    tr = wait_trace(np.full(100, tau_star), np.full(100, tau_0), tau_star)
    assert not np.any(tr.W_star)
    assert np.all(tr.W_pi[1:] > 0)
    t = np.arange(101)
    assert np.array_equal(tr.gap, t * (tau_0 - tau_star))
    ok, rhs, _ = waiting_gap_check(tr)
    assert ok.all() and np.array_equal(rhs, tr.gap[1:])


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.3, 1.5), st.floats(0, 1))
def test_gap_holds_pathwise(seed, rate, wrong):
    rng = np.random.default_rng(seed)
    a = interarrivals(rng, rate, 1000)
    tau_star, tau_0 = 0.5, 1.0 + GRID * rng.integers(0, 512)
    tau = np.where(rng.random(1000) < wrong, tau_0, tau_star)
    ok, rhs, alt = waiting_gap_check(wait_trace(a, tau, tau_star))
    assert ok.all()


def test_hinge_examples():
    assert hinge_loss([1.0, 0], [1.0, 5], 1) == 0
    assert hinge_loss([0, 0], [3.0, 1], -1) == 1
    assert hinge_grad([0, 0], [3.0, 1], -1).tolist() == [3, 1]
    assert hinge_grad([2, 0], [3.0, 1], 1).tolist() == [0, 0]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.sampled_from([-1, 1]))
def test_zero_one_below_hinge(w, x, y):
    assert zero_one_loss(w, x, y) <= hinge_loss(w, x, y)


def test_classify_examples():
    assert classify([0, 0], [1, 2]) == 1
    assert classify([1, 0], [-0.5, 3]) == -1
    rng = np.random.default_rng(3)
    for _ in range(500):
        w, x = rng.normal(size=3), rng.normal(size=3)
        assert classify(w, x) == (1 if w @ x >= 0 else -1)


def test_perceptron_update_examples():
    s = PerceptronState(np.array([2.0, 0.0]))
    same = perceptron_update(s, [1.0, 0.0], 1)
    assert np.array_equal(same.w, s.w) and same.margin_update_count == 0
    s = perceptron_update(PerceptronState.initial(2), [1.0, 0.0], 1)
    assert s.w.tolist() == [1, 0] and s.margin_update_count == 1 and s.mistake_count == 0
    with pytest.raises(ValueError):
        PerceptronState.initial(2, alpha=0)


def test_perceptron_replay():
    model = ServiceModeModel(0.5, 1.0, p=3, D=1.0, w_norm=3.0)
    _, x, y = model.stream(np.random.default_rng(4), 100)
    run = run_perceptron(x, y, alpha=0.7)
    expect = 0.7 * np.sum((y * run.updated)[:, None] * x, axis=0)
    assert np.allclose(run.final.w, expect, atol=1e-12)
    for t in range(100):
        assert run.modes[t] == classify(run.weights[t], x[t])


def test_model_invariants():
    model = ServiceModeModel(0.4, 1.1, p=4, D=2.0, w_norm=1.5)
    w_star, x, y = model.stream(np.random.default_rng(5), 2000)
    assert np.linalg.norm(w_star) == pytest.approx(1.5)
    assert np.all(np.linalg.norm(x, axis=1) <= 2.0 + 1e-12)
    assert np.all(y * (x @ w_star) >= 1)
    with pytest.raises(ValueError):
        ServiceModeModel(1.0, 0.5)


def test_mistake_bound_examples():
    x = np.random.default_rng(6).uniform(0.5, 1.0, size=(50, 1))
    y = np.ones(50, dtype=int)
    assert mistake_bound_check(x, y, [2.0], 1.0).mistakes == 0
    with pytest.raises(NonSeparable):
        mistake_bound_check([[0.1]], [1], [2.0], 1.0)
    with pytest.raises(NonSeparable):
        mistake_bound_check([[3.0]], [1], [2.0], 1.0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_mistake_bound_two_dimensions(seed):
    model = ServiceModeModel(0.5, 1.0, p=2, D=1.0, w_norm=2.0)
    w_star, x, y = model.stream(np.random.default_rng(seed), 400)
    rep = mistake_bound_check(x, y, w_star, 1.0)
    assert rep.bound == pytest.approx(4.0) and rep.mistakes <= 4


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_mistake_driven_rule_is_scale_free(seed):
    model = ServiceModeModel(0.5, 1.0, p=3, D=1.0, w_norm=3.0)
    w_star, x, y = model.stream(np.random.default_rng(seed), 300)
    runs = [run_perceptron(x, y, alpha, margin=0.0) for alpha in (0.1, 1.0, 10.0)]
    for r in runs[1:]:
        assert np.array_equal(r.mistakes, runs[0].mistakes)


def test_oco_zero_losses():
    x = np.array([[1.0, 0.0], [0.5, 0.5], [1.0, -0.2]])
    y = np.array([1, 1, 1])
    W, G = ogd_trajectory(x, y, 1.0, w1=np.array([5.0, 0.0]))
    assert not np.any(G)
    b = oco_bound_check(x, y, W, 1.0, np.array([5.0, 0.0]))
    assert b.lhs == 0 and b.rhs >= 0


def test_oco_constant_step_middle_term_vanishes():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(60, 3))
    y = rng.choice([-1, 1], size=60)
    alpha = 0.3
    W, G = ogd_trajectory(x, y, alpha)
    w = rng.normal(size=3)
    b = oco_bound_check(x, y, W, alpha, w)
    direct = np.sum((W[0] - w) ** 2) / (2 * alpha) + alpha / 2 * np.sum(G ** 2)
    assert b.rhs == pytest.approx(direct, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.booleans())
def test_oco_bound_random_streams(seed, decreasing):
    rng = np.random.default_rng(seed)
    T = 80
    x = rng.normal(size=(T, 2))
    y = rng.choice([-1, 1], size=T)
    alphas = 0.5 / np.sqrt(np.arange(1, T + 1)) if decreasing else 0.5
    W, _ = ogd_trajectory(x, y, alphas)
    for w in rng.normal(scale=2, size=(10, 2)):
        b = oco_bound_check(x, y, W, alphas, w)
        assert b.slack >= -1e-9
        if not decreasing:
            assert b.slack_displayed >= -1e-9


def test_queue_zero_mistakes():
    model = ServiceModeModel(0.5, 1.0, p=1, D=1.0, w_norm=2.0)
    rng = np.random.default_rng(8)
    x = rng.uniform(0.5, 1.0, size=(300, 1))
    y = np.ones(300, dtype=int)
    rep = queue_report(model, x, y, interarrivals(rng, 1.5, 300))
    assert rep.mistakes == 0
    assert np.array_equal(rep.trace.W_pi, rep.trace.W_star)


@pytest.mark.parametrize("rate,seed", [(1.8, 9), (1.0, 10), (0.3, 11)])
def test_queue_gap_bound_and_recovery(rate, seed):
    model = ServiceModeModel(0.5, 1.25, p=2, D=1.0, w_norm=2.0)
    rep = run_queue_with_perceptron(model, rate, 2000, seed=seed)
    assert rep.bound == pytest.approx(4 * 0.75) and rep.bound_unscaled == 4
    assert rep.gap_ok and rep.mistakes <= 4
    assert rep.equal_after
    ok, _, _ = waiting_gap_check(rep.trace)
    assert ok.all()
    if rate == 0.3:
        # light traffic empties the queue right after the last mistake
        assert rep.t_prime <= rep.trace.T


def test_estimator_basics():
    model = ServiceModeModel(0.5, 1.0, p=3, D=1.0, w_norm=3.0)
    w_star, x, y = model.stream(np.random.default_rng(12), 500)
    labels = np.where(y > 0, "fast", "slow")
    est = MarginPerceptron(alpha=0.5).fit(x, labels)
    assert set(est.classes_) == {"fast", "slow"}
    assert est.n_mistakes_ <= 9
    assert np.mean(est.predict(x) == labels) > 0.97
    twin = clone(est)
    assert twin.get_params() == {"alpha": 0.5, "margin": 1.0}
    assert not hasattr(twin, "coef_")
    part = MarginPerceptron(alpha=0.5)
    part.partial_fit(x[:200], labels[:200], classes=["fast", "slow"]).partial_fit(x[200:], labels[200:])
    assert np.allclose(part.coef_, est.coef_)
    with pytest.raises(ValueError):
        MarginPerceptron().fit(x, np.zeros(500))
    with pytest.raises(ValueError):
        MarginPerceptron(alpha=-1).fit(x, labels)


def test_estimator_margin_zero_scale_free():
    model = ServiceModeModel(0.5, 1.0, p=3, D=1.0, w_norm=3.0)
    w_star, x, y = model.stream(np.random.default_rng(13), 500)
    counts = {MarginPerceptron(alpha=a, margin=0.0).fit(x, y).n_mistakes_ for a in (0.1, 1.0, 10.0)}
    assert len(counts) == 1
