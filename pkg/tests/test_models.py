from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_topk, numeric_grad, random_connected_graph
from test_induction import path, split_obs
from worldprog.features import state_matrix
from worldprog.graphs import LabeledGraph, State
from worldprog.induction import ActionLibrary, extract_rule
from worldprog.models import (
    ModelError,
    PolicyModel,
    TrainConfig,
    TransitionDataset,
    TransitionModel,
    load_policy,
    load_transition,
    make_transition_dataset,
    policy_distribution,
    policy_loss_grad,
    policy_topk,
    save_policy,
    save_transition,
    score_transition,
    topk_from_probs,
    train_policy,
    train_transition,
    transition_loss_grad,
)


def rel_err(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def random_policy_instance(rng: np.random.Generator):
    n, k, d = int(rng.integers(3, 9)), int(rng.integers(2, 5)), int(rng.integers(2, 7))
    X = rng.poisson(1.0, size=(n, d)).astype(float)
    y = rng.integers(0, k, size=n)
    return rng.normal(size=(k, d)), rng.normal(size=k), X, y, float(rng.uniform(0, 0.1))


def random_transition_instance(rng: np.random.Generator):
    n, d = int(rng.integers(3, 9)), int(rng.integers(2, 9))
    X = rng.integers(-2, 4, size=(n, d)).astype(float)
    y = rng.integers(0, 2, size=n).astype(float)
    return rng.normal(size=d), float(rng.normal()), X, y, float(rng.uniform(0, 0.1))


def two_rule_library() -> ActionLibrary:
    return ActionLibrary([extract_rule(split_obs(path("ABC"), 0, 1)), extract_rule(split_obs(path("ABC"), 1, 2))])


# --- gradients ----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_policy_gradient(seed):
    W, b, X, y, l2 = random_policy_instance(np.random.default_rng(seed))
    _, dW, db = policy_loss_grad(W, b, X, y, l2)
    assert rel_err(dW, numeric_grad(lambda w: policy_loss_grad(w, b, X, y, l2)[0], W.copy())) < 1e-4
    assert rel_err(db, numeric_grad(lambda v: policy_loss_grad(W, v, X, y, l2)[0], b.copy())) < 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_transition_gradient(seed):
    w, b, X, y, l2 = random_transition_instance(np.random.default_rng(100 + seed))
    _, dw, db = transition_loss_grad(w, b, X, y, l2)
    assert rel_err(dw, numeric_grad(lambda v: transition_loss_grad(v, b, X, y, l2)[0], w.copy())) < 1e-4
    num_db = numeric_grad(lambda v: transition_loss_grad(w, float(v[0]), X, y, l2)[0], np.array([b]))
    assert rel_err(db, num_db) < 1e-4


def test_losses_at_zero():
    X = np.ones((4, 3))
    loss, _, _ = policy_loss_grad(np.zeros((5, 3)), np.zeros(5), X, np.array([0, 1, 2, 3]), 0.1)
    assert loss == pytest.approx(np.log(5))
    loss, _, _ = transition_loss_grad(np.zeros(3), 0.0, X, np.array([0.0, 1.0, 1.0, 0.0]), 0.1)
    assert loss == pytest.approx(np.log(2))


# --- policy -------------------------------------------------------------------


def sentinel_states(seed: int, n: int):
    rng = random.Random(seed)
    states, labels = [], []
    for i in range(n):
        g = random_connected_graph(rng, rng.randint(2, 5), 0.3, "ABC", "12")
        sentinel = "S" if i % 2 == 0 else "T"
        g = LabeledGraph(list(g.labels) + [sentinel], list(g.edges) + [(0, len(g), "1")])
        states.append(State([g]))
        labels.append(i % 2)
    return states, labels


def test_sentinel_policy():
    states, labels = sentinel_states(0, 60)
    # 60 states make only two batches per epoch, so train longer than the default
    model = train_policy(two_rule_library(), states, labels, TrainConfig(epochs=100))
    for s, y in zip(states, labels):
        assert policy_distribution(model, s)[y] > 0.9


def test_training_loss_decreases():
    states, labels = sentinel_states(1, 64)
    model = train_policy(two_rule_library(), states, labels, TrainConfig(epochs=10, step=0.05))
    h = model.loss_history
    assert len(h) == 10 and all(b <= a + 1e-12 for a, b in zip(h, h[1:]))


def test_zero_epochs_uniform():
    states, labels = sentinel_states(2, 10)
    model = train_policy(two_rule_library(), states, labels, TrainConfig(epochs=0))
    assert np.allclose(policy_distribution(model, states[0]), 0.5)


def test_policy_preconditions():
    lib = two_rule_library()
    states, labels = sentinel_states(3, 4)
    with pytest.raises(ModelError):
        train_policy(ActionLibrary([lib[0]]), states, [0] * 4)
    with pytest.raises(ModelError):
        train_policy(lib, [], [])
    with pytest.raises(ModelError):
        train_policy(lib, states, labels[:-1])
    with pytest.raises(ModelError):
        train_policy(lib, states, [0, 1, 2, 0])
    with pytest.raises(ModelError):
        PolicyModel(np.zeros((2, 16)), np.zeros(3), n_bits=16)


def test_training_is_seeded():
    states, labels = sentinel_states(4, 40)
    a = train_policy(two_rule_library(), states, labels, TrainConfig(seed=7))
    b = train_policy(two_rule_library(), states, labels, TrainConfig(seed=7))
    c = train_policy(two_rule_library(), states, labels, TrainConfig(seed=8))
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
    assert not np.array_equal(a.weights, c.weights)


def test_zero_model_uniform():
    model = PolicyModel.zeros(4, n_bits=64)
    for s in [State([]), State([path("ABC")])]:
        assert np.allclose(policy_distribution(model, s), 0.25)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_distribution_normalised(seed):
    rng = np.random.default_rng(seed)
    model = PolicyModel(rng.normal(scale=3, size=(5, 32)), rng.normal(size=5), n_bits=32)
    g = random_connected_graph(random.Random(seed), 4, 0.5, "ABC", "12")
    p = policy_distribution(model, State([g]))
    assert (p >= 0).all() and abs(p.sum() - 1) < 1e-9


def test_scores_match_dense_features():
    rng = np.random.default_rng(0)
    model = PolicyModel(rng.normal(size=(3, 64)), rng.normal(size=3), radius=2, n_bits=64)
    s = State([path("ABCA"), path("BB")])
    x = state_matrix([s], 2, 64)[0]
    assert np.allclose(model.scores(s), model.weights @ x + model.bias)


# --- top-k --------------------------------------------------------------------


def test_topk_examples():
    assert [i for i, _ in topk_from_probs([0.6, 0.3, 0.08, 0.02], 0.99)] == [0, 1, 2, 3]
    assert [i for i, _ in topk_from_probs([0.995, 0.003, 0.002], 0.99)] == [0]
    assert len(topk_from_probs([1 / 200] * 200, 0.99, 50)) == 50


def test_topk_ties_by_ordinal():
    assert [i for i, _ in topk_from_probs([0.25, 0.25, 0.25, 0.25], 0.5)] == [0, 1]


def test_topk_mass_range():
    for mass in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            topk_from_probs([0.5, 0.5], mass)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30), st.floats(0.01, 0.99), st.integers(1, 30))
def test_topk_matches_brute_force(raw, mass, k_max):
    total = sum(raw)
    if total <= 0:
        return
    probs = [r / total for r in raw]
    got = topk_from_probs(probs, mass, k_max)
    assert [i for i, _ in got] == brute_topk(probs, mass, k_max)
    if len(got) < k_max and sum(p for _, p in got) >= mass:
        # minimality: dropping the last element falls short
        assert sum(p for _, p in got[:-1]) < mass


def test_policy_topk_uses_model():
    model = PolicyModel.zeros(3, n_bits=16)
    model.bias[:] = [0.0, 5.0, 0.0]
    assert policy_topk(model, State([]), 0.9)[0][0] == 1


# --- transition dataset ---------------------------------------------------------


def test_only_true_rule_gives_no_negatives():
    obs = split_obs(path("AB"), 0, 1)
    ds = make_transition_dataset(ActionLibrary([extract_rule(obs)]), [obs], neg_per_pos=4)
    assert ds.n_positive == 1 and ds.n_negative == 0


def test_zero_negatives_requested():
    obs = split_obs(path("ABC"), 0, 1)
    ds = make_transition_dataset(two_rule_library(), [obs] * 3, neg_per_pos=0)
    assert ds.labels == [1, 1, 1]


def test_wrong_rule_gives_negative():
    obs = split_obs(path("ABC"), 0, 1)
    ds = make_transition_dataset(two_rule_library(), [obs], neg_per_pos=8, seed=0)
    assert ds.n_negative >= 1
    target = obs.after.key()
    for (s, s2), lab in zip(ds.pairs, ds.labels):
        assert s is obs.before
        assert (s2.key() == target) == (lab == 1)


def test_dataset_seeded():
    obs = [split_obs(path("ABCAB"), i, i + 1) for i in range(4)]
    lib = ActionLibrary([extract_rule(o) for o in obs[:3]])
    a = make_transition_dataset(lib, obs, seed=5)
    b = make_transition_dataset(lib, obs, seed=5)
    assert [(p[1].key(), lab) for p, lab in zip(a.pairs, a.labels)] == [(p[1].key(), lab) for p, lab in zip(b.pairs, b.labels)]


def test_empty_library():
    with pytest.raises(ModelError):
        make_transition_dataset(ActionLibrary([]), [split_obs(path("AB"), 0, 1)])


# --- transition model ------------------------------------------------------------


def forbidden_label_data(seed: int, n: int) -> TransitionDataset:
    """Negatives always introduce the label X somewhere in the successor."""
    rng = random.Random(seed)
    pairs, labels = [], []
    for i in range(n):
        g = random_connected_graph(rng, rng.randint(2, 6), 0.3, "ABC", "12")
        h = random_connected_graph(rng, rng.randint(1, 4), 0.3, "ABC", "12")
        if i % 2:
            v = rng.randrange(len(h))
            h = LabeledGraph([("X" if j == v else lab) for j, lab in enumerate(h.labels)], h.edges)
        pairs.append((State([g]), State([g, h])))
        labels.append(1 - i % 2)
    return TransitionDataset(pairs, labels)


def test_forbidden_label_held_out():
    model = train_transition(forbidden_label_data(0, 200))
    test = forbidden_label_data(1, 200)
    hits = sum((score_transition(model, s, s2) >= 0.5) == bool(lab) for (s, s2), lab in zip(test.pairs, test.labels))
    assert hits / len(test.labels) > 0.9


def test_zero_transition_model():
    model = TransitionModel.zeros(n_bits=32)
    s, s2 = State([path("ABC")]), State([path("AB"), LabeledGraph(["C"])])
    assert score_transition(model, s, s2) == 0.5
    assert score_transition(model, s, s) == 0.5


def test_self_transition_ignores_difference_weights():
    rng = np.random.default_rng(0)
    w = np.concatenate([np.zeros(32), rng.normal(size=32)])
    model = TransitionModel(w, 0.0, n_bits=32)
    s = State([path("ABCA")])
    assert score_transition(model, s, s) == 0.5


def test_score_many_agrees():
    model = train_transition(forbidden_label_data(2, 60))
    ds = forbidden_label_data(3, 6)
    s = ds.pairs[0][0]
    succ = [p[1] for p in ds.pairs]
    assert np.allclose(model.score_many(s, succ), [score_transition(model, s, t) for t in succ])
    assert all(0 < x < 1 for x in model.score_many(s, succ))


def test_transition_preconditions():
    ds = forbidden_label_data(0, 10)
    with pytest.raises(ModelError):
        train_transition(TransitionDataset(ds.pairs[:1], [1]))
    with pytest.raises(ModelError):
        TransitionModel(np.zeros(10), n_bits=16)
    with pytest.raises(ModelError):
        TransitionModel.zeros(n_bits=16, tau=1.0)


# --- files ------------------------------------------------------------------------


def test_policy_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    model = PolicyModel(rng.normal(size=(3, 32)), rng.normal(size=3), 1, 32, "abc123")
    save_policy(model, tmp_path / "p.model")
    back = load_policy(tmp_path / "p.model")
    assert np.array_equal(back.weights, model.weights) and np.array_equal(back.bias, model.bias)
    assert (back.radius, back.n_bits, back.library_hash) == (1, 32, "abc123")


def test_transition_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    model = TransitionModel(rng.normal(size=64), 0.25, 3, 32, 0.3)
    save_transition(model, tmp_path / "t.model")
    back = load_transition(tmp_path / "t.model")
    assert np.array_equal(back.weights, model.weights)
    assert (back.bias, back.radius, back.n_bits, back.tau, back.library_hash) == (0.25, 3, 32, 0.3, "")


def test_bad_model_files(tmp_path):
    bad = tmp_path / "bad.model"
    bad.write_bytes(b"hello\n")
    with pytest.raises(ModelError):
        load_policy(bad)
    save_policy(PolicyModel.zeros(2, n_bits=16), bad)
    with pytest.raises(ModelError):
        load_transition(bad)
    bad.write_bytes(bad.read_bytes()[:-8])
    with pytest.raises(ModelError):
        load_policy(bad)
    bad.write_bytes(b"WPMODEL 1\nkind policy\n")
    with pytest.raises(ModelError):
        load_policy(bad)
