import math

import numpy as np
import pytest

from conftest import complete_bigraph, embedded_model, sd_bigraph, theta_model
from mrfrec.corpus import split_corpus
from mrfrec.energy import HyperParams, NonLearnableEnergyError, init_model
from mrfrec.estimator import MRFRecommender
from mrfrec.inference import field_sums, prob_positive
from mrfrec.learning import (
    NoNegativesError,
    TrainInstance,
    data_loglik,
    expected_coef,
    instance_grad,
    instance_loglik,
    negative_sample,
    neighbor_lists,
    sgd_step,
    train,
    with_all_negatives,
)
from mrfrec.synth import default_config, generate
from oracles import fd_loglik_grad, loglik_by_loops, rel_error


def _random_instance(m, rng):
    ny, nx = len(m.graph.y_part), len(m.graph.x_part)
    k = int(rng.integers(1, nx + 1))
    xj = np.sort(rng.choice(nx, k, replace=False))
    xv = rng.choice([-1.0, 0.5, 1.0], k)
    xv[0] = 1.0
    pos = np.sort(rng.choice(ny, int(rng.integers(1, ny + 1)), replace=False))
    return TrainInstance(xj, xv, pos)


def _tiny_model(kind, seed):
    rng = np.random.default_rng(seed)
    ny, nx = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    m = embedded_model(kind, ny, nx, 4, seed, density=0.7)
    if kind == "theta":
        m.theta = rng.uniform(-2, 2, m.theta.shape)
    return m, rng


def test_theta_hand_step():
    m = init_model("theta", complete_bigraph(1, 1))
    sgd_step(m, TrainInstance([0], [1.0], [0]), eta=0.1, lam=0.0)
    assert m.theta[0] == -0.1


def test_loglik_hand_values():
    m = theta_model(np.zeros((1, 1)))
    assert instance_loglik(m, TrainInstance([0], [1.0], [0]), 0.0) == pytest.approx(math.log(0.5), abs=1e-15)
    assert instance_loglik(m, TrainInstance([], [], []), 0.0) == 0.0
    m.theta[0] = 0.4
    t = TrainInstance([0], [1.0], [0])
    assert instance_loglik(m, t, 0.1) < instance_loglik(m, t, 0.0)
    with pytest.raises(ValueError):
        instance_loglik(m, t, -1.0)


@pytest.mark.parametrize("kind", ["theta", "lfm", "trans"])
def test_loglik_matches_loop_oracle(kind):
    for seed in range(20):
        m, rng = _tiny_model(kind, seed)
        t = with_all_negatives(_random_instance(m, rng), m.graph)
        ys = dict(zip(t.y_idx.tolist(), t.y_val.tolist()))
        x = dict(zip(t.x_idx.tolist(), t.x_val.tolist()))
        assert data_loglik(m, t) == pytest.approx(loglik_by_loops(m, x, ys), abs=1e-12)


@pytest.mark.parametrize("kind", ["theta", "lfm", "trans"])
def test_instance_gradient_matches_finite_differences(kind):
    for seed in range(25):
        m, rng = _tiny_model(kind, seed)
        t = with_all_negatives(_random_instance(m, rng), m.graph)
        grads = instance_grad(m, t)
        analytic = {name: np.zeros_like(p) for name, p in m.parameters().items()}
        for group, val in grads.items():
            if group in ("theta", "y", "x"):
                name = {"theta": "theta", "y": "y_emb", "x": "x_emb"}[group]
                analytic[name][val[0]] += val[1]
            else:
                analytic[group] += val
        ys = dict(zip(t.y_idx.tolist(), t.y_val.tolist()))
        x = dict(zip(t.x_idx.tolist(), t.x_val.tolist()))
        assert rel_error(analytic, fd_loglik_grad(m, x, ys)) < 1e-6


@pytest.mark.parametrize("kind", ["theta", "lfm", "trans"])
def test_small_step_never_decreases_likelihood(kind):
    for seed in range(200):
        m, rng = _tiny_model(kind, seed)
        t = with_all_negatives(_random_instance(m, rng), m.graph)
        before = instance_loglik(m, t, 0.0)
        sgd_step(m, t, 1e-4, 0.0)
        assert instance_loglik(m, t, 0.0) >= before - 1e-10


def test_expectation_matches_two_term_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n_y, n_x = rng.integers(1, 6, size=2)
        y = rng.choice([-1.0, 1.0], n_y)
        x = rng.choice([-1.0, 0.5, 1.0], n_x)
        p = rng.uniform(0, 1, n_y)
        coef = expected_coef(y, x, p)
        for a in range(n_y):
            for b in range(n_x):
                # g(y) = -y x per unit df/dp
                expect = p[a] * (-x[b]) + (1 - p[a]) * x[b]
                assert abs(coef[a, b] - (-y[a] * x[b] - expect)) <= 1e-12


@pytest.mark.parametrize("kind", ["lfm", "trans"])
def test_unit_norms_after_every_step(kind):
    m, rng = _tiny_model(kind, 5)
    for _ in range(300):
        sgd_step(m, with_all_negatives(_random_instance(m, rng), m.graph), 0.5, 1e-3)
        for emb in (m.y_emb, m.x_emb):
            assert np.max(np.abs(np.linalg.norm(emb, axis=1) - 1.0)) <= 1e-9


def test_zero_x_term_changes_nothing():
    m = theta_model(np.array([[0.3, -0.2]]))
    before = m.theta.copy()
    sgd_step(m, TrainInstance([1], [0.0], [0]), 0.1, 0.0)
    assert np.array_equal(m.theta, before)


@pytest.mark.parametrize("kind", ["theta", "lfm", "trans"])
def test_empty_instance_is_pure_decay(kind):
    m = embedded_model(kind, 2, 2, 3, seed=0, density=1.0)
    if kind == "theta":
        m.theta[:] = [1.0, -2.0, 0.5, 4.0]
    before = {k: v.copy() for k, v in m.parameters().items()}
    sgd_step(m, TrainInstance([], [], []), 0.1, 0.5)
    for k, v in m.parameters().items():
        np.testing.assert_allclose(v, before[k] * (1 - 0.05), rtol=1e-15)


def test_lazy_kinds_rejected():
    m = init_model("weight", complete_bigraph(1, 1))
    with pytest.raises(NonLearnableEnergyError):
        sgd_step(m, TrainInstance([0], [1.0], [0]), 0.1, 0.0)
    with pytest.raises(NonLearnableEnergyError):
        train(m, [TrainInstance([0], [1.0], [0])], HyperParams())


def test_overlapping_negatives_rejected():
    with pytest.raises(ValueError):
        TrainInstance([0], [1.0], [0, 1], [1])


def test_negative_forced_choice():
    # x0 is adjacent to d0 (positive) and d1; d2 is not a neighbour
    g = sd_bigraph(3, 1, {(0, 0): 2, (1, 0): 1})
    m = init_model("weight", g)
    t = TrainInstance([0], [1.0], [0])
    for seed in range(20):
        assert negative_sample(g, t, np.random.default_rng(seed), model=m).tolist() == [1]


def test_negative_pool_topped_up_uniformly():
    g = sd_bigraph(4, 1, {(0, 0): 2, (1, 0): 1})
    m = init_model("weight", g)
    t = TrainInstance([0], [1.0], [0, 3])
    seen = set()
    for seed in range(50):
        neg = negative_sample(g, t, np.random.default_rng(seed), model=m)
        assert len(neg) == 2 and 1 in neg and not set(neg) & {0, 3}
        seen.update(neg.tolist())
    assert seen == {1, 2}


def test_no_negatives_available():
    g = complete_bigraph(2, 1)
    with pytest.raises(NoNegativesError, match="no negatives available"):
        negative_sample(g, TrainInstance([0], [1.0], [0, 1]), np.random.default_rng(0), model=init_model("weight", g))


def test_neighbor_lists_sorted_by_preference():
    g = sd_bigraph(3, 1, {(0, 0): 1, (1, 0): 5, (2, 0): 3})
    (lst,) = neighbor_lists(init_model("weight", g), 2)
    assert lst.tolist() == [1, 2]


@pytest.fixture(scope="module")
def synth_split():
    corpus, _ = generate(default_config(seed=0))
    return split_corpus(corpus, 0, 350)


def test_sampled_negatives_are_harder_than_uniform(synth_split):
    train_c, _ = synth_split
    est = MRFRecommender(energy="weight", task="sd").fit(train_c)
    m, g = est.model_, est.graph_
    lists = neighbor_lists(m, 10)
    rng = np.random.default_rng(0)
    sampled_f, uniform_f = [], []
    for draw in range(1000):
        t = est.train_instances_[draw % len(est.train_instances_)]
        xj = t.x_idx[t.x_val > 0]
        neg = negative_sample(g, t, rng, k_neg=10, lists=lists)
        others = np.setdiff1d(np.arange(len(g.y_part)), t.positives)
        uni = rng.choice(others, size=len(neg), replace=False)
        sampled_f.append(m.f_block(neg, xj).mean())
        uniform_f.append(m.f_block(uni, xj).mean())
    assert np.mean(sampled_f) < np.mean(uniform_f)


def _toy_instances(m, n, seed):
    rng = np.random.default_rng(seed)
    return [_random_instance(m, rng) for _ in range(n)]


def test_zero_epochs_is_identity():
    m = embedded_model("trans", 4, 4, 4, seed=1)
    before = {k: v.copy() for k, v in m.parameters().items()}
    report = train(m, _toy_instances(m, 10, 0), HyperParams(dim=4, epochs=0))
    assert report.trace == [] and report.epochs == 0
    for k, v in m.parameters().items():
        assert np.array_equal(v, before[k])


def test_training_rejects_empty_instances():
    m = init_model("theta", complete_bigraph(2, 2))
    with pytest.raises(ValueError):
        train(m, [], HyperParams())


@pytest.mark.parametrize("kind", ["theta", "lfm", "trans"])
def test_training_is_deterministic(kind):
    results = []
    for _ in range(2):
        m = embedded_model(kind, 5, 6, 4, seed=3)
        report = train(m, _toy_instances(m, 30, 1), HyperParams(dim=4, epochs=4, k_neg=2, seed=7))
        results.append((report.trace, {k: v.copy() for k, v in m.parameters().items()}))
    assert results[0][0] == results[1][0]
    for k in results[0][1]:
        assert np.array_equal(results[0][1][k], results[1][1][k])
    assert len(results[0][0]) == 4


@pytest.mark.parametrize("kind", ["lfm", "trans"])
def test_norms_after_every_epoch(kind):
    m = embedded_model(kind, 5, 6, 4, seed=3)
    worst = []

    def check(epoch, model, obj):
        worst.append(max(np.max(np.abs(np.linalg.norm(e, axis=1) - 1.0)) for e in (model.y_emb, model.x_emb)))

    train(m, _toy_instances(m, 30, 2), HyperParams(dim=4, epochs=5, k_neg=3), on_epoch=check)
    assert len(worst) == 5 and max(worst) <= 1e-9


def test_training_raises_objective():
    m = theta_model(np.zeros((4, 5)))
    inst = _toy_instances(m, 40, 3)
    report = train(m, inst, HyperParams(epochs=10, eta=0.05, lam=0.0, k_neg=4))
    assert report.trace[-1] > report.trace[0]
    assert set(report.param_norms) == {"theta"}


def test_probabilities_used_in_gradient_are_model_probabilities():
    m = theta_model(np.array([[-0.5, 0.25]]))
    t = TrainInstance([0, 1], [1.0, 0.5], [0])
    p = prob_positive(field_sums(m, t.x_idx, t.x_val))
    # d loglik / d theta_0j = x_j * (-y + (2p - 1))  for y = +1
    expect = np.array([1.0, 0.5]) * (-1.0 + (2 * p[0] - 1))
    assert np.allclose(instance_grad(m, t)["theta"][1], expect, atol=1e-15)
