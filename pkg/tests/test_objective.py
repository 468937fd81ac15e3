import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from saol.errors import RankDeficiencyError
from saol.objective import (ObjectiveParams, SignalSet, clamped_pairs, cost_and_gradient,
                            euclidean_gradient, incoherence_penalty, incoherence_penalty_grad,
                            kron_factor_contract, rank_penalty, rank_penalty_grad, sample_cost,
                            sparsity_grad, sparsity_lipschitz, sparsity_value)
from saol.oblique import AnalysisOperator, project_to_tangent, random_oblique
from saol.tensor import kron_compose


def central_diff(f, x, eps=1e-6):
    """Gradient of scalar ``f`` at ``x`` by central differences."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# -- sparsity ---------------------------------------------------------------

def test_sparsity_examples():
    assert sparsity_value(np.zeros(5), 500) == 0.0
    assert sparsity_value(np.array([1.0, 0.0]), 1.0) == pytest.approx(np.log(2), abs=1e-12)
    np.testing.assert_array_equal(sparsity_grad(np.zeros(4), 3.0), np.zeros(4))
    nu = 500.0
    assert sparsity_grad(np.array([1 / np.sqrt(nu)]), nu)[0] == pytest.approx(np.sqrt(nu), rel=1e-12)
    assert sparsity_lipschitz(nu) == pytest.approx(np.sqrt(nu))


def test_sparsity_grad_formula():
    a = np.random.default_rng(0).standard_normal(20)
    np.testing.assert_allclose(sparsity_grad(a, 7.0), 14 * a / (1 + 7 * a * a), rtol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_sparsity_grad_fd(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(12) * 0.2
    fd = central_diff(lambda x: sparsity_value(x, 500.0), a)
    assert rel_err(sparsity_grad(a, 500.0), fd) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_sparsity_sign_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(10)
    b = rng.permutation(a * rng.choice([-1.0, 1.0], size=10))
    assert sparsity_value(a, 50.0) == pytest.approx(sparsity_value(b, 50.0), rel=1e-13)
    assert sparsity_value(a, 50.0) >= 0


# -- full-rank penalty ------------------------------------------------------

def test_rank_penalty_examples():
    assert rank_penalty(np.eye(2)) == pytest.approx(1.0, abs=1e-14)
    q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((6, 4)))
    assert abs(rank_penalty(np.sqrt(6) * q)) < 1e-12
    p = 4
    np.testing.assert_allclose(rank_penalty_grad(q), -(2 / (p * np.log(p))) * q, atol=1e-12)


def test_rank_penalty_rejects_deficient():
    with pytest.raises(RankDeficiencyError):
        rank_penalty(np.ones((3, 4)))
    with pytest.raises(RankDeficiencyError):
        rank_penalty(np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))


def test_rank_penalty_grows_toward_collinear_columns():
    q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((6, 3)))
    values = []
    for t in np.linspace(np.pi / 2, 0.05, 12):
        k = q.copy()
        k[:, 1] = np.cos(t) * q[:, 0] + np.sin(t) * q[:, 1]
        values.append(rank_penalty(k))
    assert np.all(np.diff(values) > 0)


@pytest.mark.parametrize("seed", range(5))
def test_rank_penalty_grad_fd(seed):
    k = np.random.default_rng(seed).standard_normal((6, 4))
    assert rel_err(rank_penalty_grad(k), central_diff(rank_penalty, k)) < 1e-6


def test_rank_penalty_gradient_flow_decreases():
    k = np.random.default_rng(3).standard_normal((6, 4))
    start = rank_penalty(k)
    norms = []
    for _ in range(200):
        g = rank_penalty_grad(k)
        norms.append(np.linalg.norm(g))
        k = k - 0.01 * g
    assert np.all(np.diff(norms) <= 1e-15)
    assert rank_penalty(k) < start


# -- incoherence penalty ----------------------------------------------------

def test_incoherence_examples():
    assert incoherence_penalty(np.eye(3)) == 0.0
    np.testing.assert_array_equal(incoherence_penalty_grad(np.eye(3)), np.zeros((3, 3)))
    k = np.array([[1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert incoherence_penalty(k) == pytest.approx(-np.log(0.75), abs=1e-12)


def test_incoherence_clamp_counts_pairs():
    k = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.isfinite(incoherence_penalty(k))
    assert np.all(np.isfinite(incoherence_penalty_grad(k)))
    assert clamped_pairs(k) == 1


@pytest.mark.parametrize("seed", range(5))
def test_incoherence_grad_fd_tangent(seed):
    rng = np.random.default_rng(seed)
    k = random_oblique(5, 4, rng)
    h = project_to_tangent(k, rng.standard_normal((5, 4)))
    eps = 1e-6
    fd = (incoherence_penalty(k + eps * h) - incoherence_penalty(k - eps * h)) / (2 * eps)
    an = np.sum(incoherence_penalty_grad(k) * h)
    assert abs(fd - an) / abs(an) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_incoherence_grad_fd_full(seed):
    k = random_oblique(5, 4, np.random.default_rng(seed))
    assert rel_err(incoherence_penalty_grad(k), central_diff(incoherence_penalty, k)) < 1e-5


# -- Kronecker contraction --------------------------------------------------

def test_kron_contract_single_factor_and_scalars():
    g = np.arange(6.0).reshape(3, 2)
    out = kron_factor_contract(g, [np.ones((3, 2))], 0)
    np.testing.assert_array_equal(out, g)
    fs = [np.array([[2.0]]), np.array([[3.0]]), np.array([[5.0]])]
    assert kron_factor_contract(np.array([[7.0]]), fs, 1)[0, 0] == 7 * 2 * 5


def test_kron_contract_errors():
    fs = [np.ones((2, 2)), np.ones((3, 2))]
    with pytest.raises(ValueError):
        kron_factor_contract(np.ones((5, 4)), fs, 0)
    with pytest.raises(ValueError):
        kron_factor_contract(np.ones((6, 4)), fs, 2)


def test_kron_contract_matches_loop_definition():
    rng = np.random.default_rng(4)
    fs = [rng.standard_normal((3, 2)), rng.standard_normal((2, 2))]
    g = rng.standard_normal((6, 4))
    out = kron_factor_contract(g, fs, 0)
    ref = np.zeros((3, 2))
    for a in range(3):
        for b in range(2):
            e = np.zeros((3, 2))
            e[a, b] = 1.0
            ref[a, b] = np.sum(g * kron_compose([e, fs[1]]))
    np.testing.assert_allclose(out, ref, atol=1e-13)


@pytest.mark.parametrize("i", [0, 1])
def test_kron_contract_fd_rank_penalty(i):
    rng = np.random.default_rng(10 + i)
    fs = [random_oblique(3, 2, rng), random_oblique(2, 2, rng)]
    g = kron_factor_contract(rank_penalty_grad(kron_compose(fs)), fs, i)

    def f(x):
        tmp = list(fs)
        tmp[i] = x
        return rank_penalty(kron_compose(tmp))

    assert rel_err(g, central_diff(f, fs[i])) < 1e-5


# -- cost and gradient ------------------------------------------------------

def test_sample_cost_trivial():
    op = AnalysisOperator.random([(3, 2), (2, 2)], np.random.default_rng(0))
    assert sample_cost(op, np.zeros((1, 4)), ObjectiveParams(kappa=0, mu=0)) == 0.0
    grads = euclidean_gradient(op, np.zeros((3, 4)), ObjectiveParams(kappa=0, mu=0))
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads)


def test_params_stored_verbatim_and_validated():
    p = ObjectiveParams()
    assert (p.nu, p.kappa, p.mu) == (500.0, 6500.0, 0.0001)
    with pytest.raises(ValueError):
        ObjectiveParams(nu=0)
    with pytest.raises(ValueError):
        ObjectiveParams(kappa=-1)


def test_signal_set_validation():
    s = SignalSet((2, 3), np.zeros((4, 6)))
    assert len(s) == 4 and s.p == 6
    with pytest.raises(ValueError):
        SignalSet((2, 3), np.zeros((4, 5)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_separable_cost_equals_composed(seed):
    rng = np.random.default_rng(seed)
    op = AnalysisOperator.random([(4, 3), (3, 2)], rng)
    dense = AnalysisOperator([op.compose()])
    batch = rng.standard_normal((7, 6))
    params = ObjectiveParams(nu=50, kappa=2.0, mu=0.1)
    assert abs(sample_cost(op, batch, params) - sample_cost(dense, batch, params)) < 1e-10


def test_dense_gradient_direct_formula():
    rng = np.random.default_rng(5)
    k = random_oblique(6, 4, rng)
    batch = rng.standard_normal((5, 4))
    params = ObjectiveParams(nu=30.0, kappa=0.5, mu=0.2)
    a = batch @ k.T
    direct = (sparsity_grad(a, params.nu).T @ batch) / 5
    direct += params.kappa * rank_penalty_grad(k) + params.mu * incoherence_penalty_grad(k)
    got = euclidean_gradient(AnalysisOperator([k]), batch, params)[0]
    np.testing.assert_allclose(got, direct, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_euclidean_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    op = AnalysisOperator.random([(3, 3), (2, 2)], rng)
    batch = rng.standard_normal((5, 6))
    params = ObjectiveParams(nu=500.0, kappa=1.0, mu=0.01)
    cost, grads = cost_and_gradient(op, batch, params)
    assert cost == pytest.approx(sample_cost(op, batch, params), rel=1e-12)
    for i, g in enumerate(grads):
        def f(x):
            fs = list(op.factors)
            fs[i] = x
            return sample_cost(AnalysisOperator(fs, check=False), batch, params)
        assert rel_err(g, central_diff(f, np.array(op.factors[i]))) < 1e-5


def test_penalties_finite_on_full_rank_composition():
    rng = np.random.default_rng(6)
    for _ in range(20):
        op = AnalysisOperator.random([(4, 3), (4, 3)], rng)
        k = op.compose()
        assert np.isfinite(rank_penalty(k)) and np.isfinite(incoherence_penalty(k))
