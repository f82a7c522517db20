import numpy as np
import pytest
from hypothesis import given, strategies as st

from concert import BadConfig, SimConfig, generate
from concert.simgen import (
    DEMO_LABELS,
    REDUNDANT_SIZES,
    demo_labels,
    gen_demo,
    gen_from_coefficients,
    gen_heterogeneous,
    gen_informative_set,
    gen_redundant,
    gen_test_set,
    gen_tiny,
)


def deltas(truth):
    return [b - truth.beta0 for b in truth.betak]


class TestInformativeSet:
    def test_informative_sources_perturb_h_coordinates(self):
        cfg = SimConfig(A_size=10, h=4)
        problem, truth = gen_informative_set(cfg)
        assert problem.K == 10 and problem.p == 200
        for d in deltas(truth):
            moved = d[d != 0]
            assert moved.size == 4
            assert set(np.abs(moved)) == {0.5}

    def test_noninformative_sources_perturb_twenty(self):
        _, truth = gen_informative_set(SimConfig(A_size=0))
        for d in deltas(truth):
            assert np.count_nonzero(d) == 20
            assert np.all(np.abs(d[d != 0]) == 1.0)

    def test_mixed_set(self):
        _, truth = gen_informative_set(SimConfig(A_size=3, h=6))
        counts = [np.count_nonzero(d) for d in deltas(truth)]
        assert counts == [6, 6, 6] + [20] * 7
        assert truth.structure["A"] == [1, 2, 3]

    def test_target_coefficients(self):
        _, truth = gen_informative_set(SimConfig(s=16))
        assert np.all(truth.beta0[:16] == 0.5) and np.all(truth.beta0[16:] == 0)
        _, truth = gen_informative_set(SimConfig(s=16, family="logistic"))
        assert np.all(truth.beta0[:16] == 1.0)

    def test_dataset_shapes(self):
        problem, _ = gen_informative_set(SimConfig())
        assert problem.target.X.shape == (150, 200)
        assert all(d.X.shape == (100, 200) for d in problem.sources)

    def test_deterministic(self):
        a_prob, a_truth = gen_informative_set(SimConfig(A_size=5, seed=3))
        b_prob, b_truth = gen_informative_set(SimConfig(A_size=5, seed=3))
        assert np.array_equal(a_prob.target.X, b_prob.target.X)
        assert np.array_equal(a_prob.sources[4].y, b_prob.sources[4].y)
        assert a_truth.to_dict() == b_truth.to_dict()

    def test_seed_changes_data(self):
        a, _ = gen_informative_set(SimConfig(seed=1))
        b, _ = gen_informative_set(SimConfig(seed=2))
        assert not np.array_equal(a.target.y, b.target.y)

    @pytest.mark.parametrize("kw", [dict(A_size=11), dict(h=201), dict(s=201), dict(sigma_y=0.0),
                                    dict(p=10, s=2, h=2, A_size=0)])
    def test_bad_config(self, kw):
        with pytest.raises(BadConfig):
            gen_informative_set(SimConfig(**kw))

    def test_wrong_regime(self):
        with pytest.raises(BadConfig):
            gen_informative_set(SimConfig(regime="redundant"))


class TestHeterogeneous:
    def test_full_ratio_keeps_all_signals(self):
        _, truth = gen_heterogeneous(SimConfig(regime="heterogeneous", w=1.0, s=16))
        for b in truth.betak:
            assert np.array_equal(b[:16], truth.beta0[:16])

    def test_partial_ratio_zeroes_four(self):
        cfg = SimConfig(regime="heterogeneous", w=0.6, s=10)
        assert cfg.shared_count == 6
        _, truth = gen_heterogeneous(cfg)
        for b in truth.betak:
            assert np.count_nonzero(b[:10] == 0) == 4

    def test_redundant_part_outside_signals(self):
        _, truth = gen_heterogeneous(SimConfig(regime="heterogeneous", w=0.5))
        for U, d in zip(truth.structure["U"], deltas(truth)):
            assert min(U) >= 16 and len(U) == 20
            assert set(np.flatnonzero(d[16:]) + 16) == set(U)
            assert np.all(np.abs(d[U]) == 0.5)

    def test_bad_ratio(self):
        with pytest.raises(BadConfig):
            gen_heterogeneous(SimConfig(regime="heterogeneous", w=0.0))


class TestRedundant:
    def test_perturbations(self):
        _, truth = gen_redundant(SimConfig(regime="redundant", rho=1.5, U_size=20, s=16))
        for d, T in zip(deltas(truth), truth.Tk_true):
            moved = np.flatnonzero(d)
            assert moved.size == 20 and moved.min() >= 16
            assert np.all(np.abs(d[moved]) == 1.5)
            assert set(moved) == T

    def test_zero_strength_copies_target(self):
        _, truth = gen_redundant(SimConfig(regime="redundant", rho=0.0))
        assert all(np.array_equal(b, truth.beta0) for b in truth.betak)
        assert all(not T for T in truth.Tk_true)

    def test_sizes_list(self):
        assert REDUNDANT_SIZES == (4, 8, 12, 16, 20)
        for u in REDUNDANT_SIZES:
            _, truth = gen_redundant(SimConfig(regime="redundant", U_size=u, rho=1.0))
            assert all(len(T) == u for T in truth.Tk_true)

    def test_too_many_redundant(self):
        with pytest.raises(BadConfig):
            gen_redundant(SimConfig(regime="redundant", p=20, s=16, U_size=5))


class TestDemo:
    def test_labels(self):
        cfg = SimConfig.demo()
        _, truth = gen_demo(cfg)
        labels = demo_labels(truth)
        assert labels.shape == (3, 30)
        assert set(labels.ravel()) == set(DEMO_LABELS)
        assert all(labels[0, j] == "TargetPositive" for j in range(8))
        for k, T in enumerate(truth.Tk_true, start=1):
            assert {j for j in range(30) if labels[k, j] == "SourceNegative"} == set(T)
        assert truth.structure["labels"] == labels.tolist()

    def test_redundant_case(self):
        _, truth = gen_demo(SimConfig.demo(demo_case="redundant"))
        assert all(np.array_equal(b[:8], truth.beta0[:8]) for b in truth.betak)

    def test_deterministic(self):
        a, ta = gen_demo(SimConfig.demo(seed=9))
        b, tb = gen_demo(SimConfig.demo(seed=9))
        assert np.array_equal(a.sources[1].X, b.sources[1].X)
        assert ta.to_dict() == tb.to_dict()

    def test_signal_count_guard(self):
        with pytest.raises(BadConfig):
            gen_demo(SimConfig.demo(s=31))

    def test_unknown_case(self):
        with pytest.raises(BadConfig):
            gen_demo(SimConfig.demo(demo_case="other"))


def test_generate_dispatch_and_unknown_regime():
    problem, _ = generate(SimConfig(regime="redundant", K=2, p=40, s=4, U_size=4))
    assert problem.K == 2
    with pytest.raises(BadConfig):
        generate(SimConfig(regime="nope"))


@given(st.sampled_from(["informative_set", "heterogeneous", "redundant", "demo"]),
       st.integers(0, 2**32 - 1))
def test_truth_consistent_with_coefficients(regime, seed):
    base = SimConfig.demo if regime == "demo" else SimConfig
    cfg = base(regime=regime, seed=seed, K=3, p=40, s=5, U_size=6, A_size=1, h=3, w=0.6, n0=5, nk=5)
    _, truth = generate(cfg)
    assert truth.S_true == frozenset(np.flatnonzero(truth.beta0))
    for b, T in zip(truth.betak, truth.Tk_true):
        assert T == frozenset(np.flatnonzero(b != truth.beta0))


@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_structure_sizes_do_not_depend_on_seed(s1, s2):
    def sizes(seed):
        _, truth = gen_heterogeneous(SimConfig(regime="heterogeneous", seed=seed, K=3, p=40, s=10,
                                               w=0.7, U_size=5, n0=5, nk=5))
        return [len(w) for w in truth.structure["W"]], [len(u) for u in truth.structure["U"]]

    assert sizes(s1) == sizes(s2)


def test_gaussian_data_moments():
    cfg = SimConfig(regime="redundant", n0=20_000, nk=10, K=1, p=5, s=2, U_size=1, sigma_y=2.0)
    problem, truth = gen_redundant(cfg)
    X, y = problem.target.X, problem.target.y
    assert abs(X.mean()) < 0.02 and abs(X.std() - 1) < 0.02
    resid = y - X @ truth.beta0
    assert abs(resid.std() - 2.0) < 0.05


def test_logistic_responses_follow_logit():
    cfg = SimConfig(regime="redundant", n0=40_000, nk=10, K=1, p=3, s=1, U_size=1, family="logistic")
    problem, truth = gen_redundant(cfg)
    X, y = problem.target.X, problem.target.y
    assert set(np.unique(y)) == {0.0, 1.0}
    prob = 1 / (1 + np.exp(-X @ truth.beta0))
    assert abs(y.mean() - prob.mean()) < 0.01


def test_test_set_uses_own_stream():
    cfg = SimConfig(regime="redundant", K=1, p=20, s=2, U_size=2)
    problem, truth = gen_redundant(cfg)
    test = gen_test_set(cfg, truth, 50)
    assert test.X.shape == (50, 20)
    assert not np.array_equal(test.X, problem.target.X[:50])
    assert np.array_equal(test.X, gen_test_set(cfg, truth, 50).X)


def test_tiny_instances():
    problem, truth = gen_tiny(3, 2, n=50, seed=4)
    assert problem.K == 2 and problem.p == 3
    assert set(np.abs(truth.beta0)) <= {0.0, 1.0}
    for d in deltas(truth):
        assert set(np.abs(d)) <= {0.0, 1.0}
    with pytest.raises(BadConfig):
        gen_tiny(0, 1)


def test_from_coefficients():
    beta0 = np.array([1.0, 0.0, -1.0])
    betak = [beta0 + np.array([0.0, 2.0, 0.0]), beta0.copy()]
    problem, truth = gen_from_coefficients(beta0, betak, 30, 20, sigma_y=0.5, seed=2)
    assert problem.target.X.shape == (30, 3) and problem.sources[1].X.shape == (20, 3)
    assert truth.S_true == {0, 2}
    assert truth.Tk_true == [frozenset({1}), frozenset()]
    again, _ = gen_from_coefficients(beta0, betak, 30, 20, sigma_y=0.5, seed=2)
    assert np.array_equal(problem.sources[0].y, again.sources[0].y)
    # a dataset depends only on its own coefficients and seed
    other, _ = gen_from_coefficients(beta0, [betak[0]], 30, 20, sigma_y=0.5, seed=2)
    assert np.array_equal(problem.sources[0].y, other.sources[0].y)
    with pytest.raises(BadConfig):
        gen_from_coefficients(beta0, [np.zeros(2)], 30, 20)
    with pytest.raises(BadConfig):
        gen_from_coefficients(beta0, [], 0, 20)
