import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_Q, random_instance
from nssvm.dataset import Dataset
from nssvm.linear import (
    DualIterate,
    EmptySupport,
    Penalties,
    apply_Q,
    apply_Qt,
    dual_objective,
    e_diag,
    eta_star,
    grad_g,
    hessian_block,
    kth_largest_abs,
    primal_objective,
    recover_primal,
)
from nssvm.oracle import dual_objective_elementwise, solve_restricted

P = Penalties()


def mirror_pair():
    # x1=(1,0) labelled +1, x2=(-1,0) labelled -1; optimum alpha=(1/6,1/6), b=0
    return Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]), [1.0, -1.0])


def dense_hessian(d, alpha, p):
    Q = dense_Q(d)
    return Q.T @ Q + np.diag(e_diag(alpha, p))


def test_penalties_validation():
    for C, c in ((0.1, 0.1), (0.1, 0.2), (1.0, 0.0), (-1.0, -2.0)):
        with pytest.raises(ValueError):
            Penalties(C, c)


def test_dual_iterate_rejects_nonfinite():
    with pytest.raises(ValueError):
        DualIterate(np.array([1.0, np.nan]), 0.0)
    with pytest.raises(ValueError):
        DualIterate(np.zeros(2), np.inf)


def test_apply_Q_examples(rng):
    d = Dataset(np.array([[2.0, 0.0]]), [-1.0])
    np.testing.assert_array_equal(apply_Q(d, [3.0]), [-6.0, 0.0])
    d = random_instance(rng, 5, 3)
    np.testing.assert_array_equal(apply_Q(d, np.zeros(5)), np.zeros(3))
    a = rng.normal(size=5)
    np.testing.assert_allclose(apply_Q(d, a), dense_Q(d) @ a, rtol=0, atol=1e-14)
    v = rng.normal(size=3)
    np.testing.assert_allclose(apply_Qt(d, v), dense_Q(d).T @ v, rtol=0, atol=1e-14)


def test_apply_Q_sparse_storage(rng):
    d = random_instance(rng, 40, 12, sparse=True)
    assert d.is_sparse
    a = np.zeros(40)
    a[[3, 17, 29]] = rng.normal(size=3)
    np.testing.assert_allclose(apply_Q(d, a), dense_Q(d) @ a, atol=1e-14)


def test_apply_Q_reads_only_support_rows(monkeypatch, rng):
    d = random_instance(rng, 30, 4)
    seen = []

    class Spy(np.ndarray):
        def __getitem__(self, idx):
            if isinstance(idx, np.ndarray):
                seen.append(idx.copy())
            return np.ndarray.__getitem__(self, idx)

    object.__setattr__(d, "X", d.X.view(Spy))
    a = np.zeros(30)
    a[[2, 11]] = 1.0
    apply_Q(d, a)
    assert len(seen) == 1 and seen[0].tolist() == [2, 11]


def test_apply_Q_shape_check(rng):
    d = random_instance(rng, 5, 3)
    with pytest.raises(ValueError):
        apply_Q(d, np.zeros(4))
    with pytest.raises(ValueError):
        apply_Qt(d, np.zeros(4))


def test_e_diag_examples():
    np.testing.assert_allclose(e_diag([0.5, -0.2, 0.0], P), [4.0, 400.0, 4.0])
    assert np.all(e_diag(np.ones(4), P) == 4.0)
    assert np.all(e_diag(-np.ones(4), P) == 400.0)


def test_dual_objective_hand_values():
    d = Dataset(np.array([[1.0, 0.0]]), [1.0])
    assert dual_objective(d, [1.0], P) == pytest.approx(1.5, abs=1e-15)
    assert dual_objective(d, [0.0], P) == 0.0
    assert dual_objective(mirror_pair(), [1 / 6, 1 / 6], P) == pytest.approx(-1 / 6, abs=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_objective_two_formulas(m, n, seed):
    rng = np.random.default_rng(seed)
    d = Dataset(rng.normal(size=(m, n)), np.where(rng.random(m) < 0.5, 1.0, -1.0))
    a = rng.normal(size=m) * (rng.random(m) < 0.7)
    assert abs(dual_objective(d, a, P) - dual_objective_elementwise(d, a, P)) <= 1e-12 * (
        1 + abs(dual_objective_elementwise(d, a, P))
    )


def test_grad_simple_points(rng):
    d = random_instance(rng, 7, 3)
    np.testing.assert_array_equal(grad_g(d, DualIterate(np.zeros(7), 0.0), P), -np.ones(7))
    np.testing.assert_array_equal(grad_g(d, DualIterate(np.zeros(7), 1.0), P), d.y - 1)


def lagrangian(d, a, b, p):
    return dual_objective(d, a, p) + b * float(a @ d.y)


def test_grad_central_differences(rng):
    h = 1e-6
    for _ in range(20):
        m, n = rng.integers(2, 15), rng.integers(1, 6)
        d = random_instance(rng, m, n)
        a = rng.uniform(0.1, 1.0, m) * rng.choice([-1.0, 1.0], m)
        b = rng.normal()
        g = grad_g(d, DualIterate(a, b), P)
        fd = np.empty(m)
        for i in range(m):
            e = np.zeros(m)
            e[i] = h
            fd[i] = (lagrangian(d, a + e, b, P) - lagrangian(d, a - e, b, P)) / (2 * h)
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(g)


def test_hessian_single_index():
    d = Dataset(np.array([[1.0, 1.0], [3.0, -1.0]]), [1.0, -1.0])
    blk = hessian_block(d, np.array([0.3, 0.0]), [0], P)
    np.testing.assert_allclose(blk.theta, [[2.0 + 1 / P.C]])


def test_hessian_block_matches_dense(rng):
    for sparse in (False, True):
        d = random_instance(rng, 25, 6, sparse=sparse)
        a = rng.normal(size=25)
        T = np.sort(rng.choice(25, 7, replace=False))
        blk = hessian_block(d, a, T, P)
        H = dense_hessian(d, a, P)
        np.testing.assert_allclose(blk.theta, H[np.ix_(T, T)], rtol=0, atol=1e-14)
        rhs = rng.normal(size=7)
        np.testing.assert_allclose(blk.solve(rhs), np.linalg.solve(H[np.ix_(T, T)], rhs), rtol=1e-10)


def test_hessian_eigenvalue_floor(rng):
    for _ in range(100):
        m = int(rng.integers(2, 20))
        d = random_instance(rng, m, int(rng.integers(1, 5)))
        a = rng.normal(size=m)
        s = int(rng.integers(1, m + 1))
        T = np.sort(rng.choice(m, s, replace=False))
        lam = np.linalg.eigvalsh(hessian_block(d, a, T, P).theta).min()
        assert lam >= 1 / P.C - 1e-10


def test_strong_convexity(rng):
    for _ in range(50):
        m = int(rng.integers(2, 12))
        d = random_instance(rng, m, 3)
        a, a2 = rng.normal(size=m), rng.normal(size=m)
        grad_D = grad_g(d, DualIterate(a2, 0.0), P)  # b=0: gradient of D
        Q = dense_Q(d)
        Pm = Q.T @ Q + np.eye(m) / P.C
        diff = a - a2
        lhs = dual_objective(d, a, P) - dual_objective(d, a2, P) - grad_D @ diff
        assert lhs >= 0.5 * diff @ Pm @ diff - 1e-10


def test_recover_primal_mirror_pair():
    d = mirror_pair()
    w, b_hat = recover_primal(d, np.array([1 / 6, 1 / 6]), P)
    np.testing.assert_allclose(w, [1 / 3, 0.0], atol=1e-15)
    assert b_hat == pytest.approx(0.0, abs=1e-15)
    assert primal_objective(d, w, b_hat, P) == pytest.approx(1 / 6, abs=1e-15)


def test_recover_primal_matches_oracle_multiplier(rng):
    for _ in range(20):
        d = random_instance(rng, 2, 2)
        a, b, _ = solve_restricted(d, [0, 1], P)
        if not np.any(a):
            continue
        w, b_hat = recover_primal(d, a, P)
        assert b_hat == pytest.approx(b, abs=1e-10)
        assert np.array_equal(w, apply_Q(d, a))


def test_recover_primal_empty_support(rng):
    d = random_instance(rng, 4, 2)
    with pytest.raises(EmptySupport):
        recover_primal(d, np.zeros(4), P)


def test_primal_objective_cases():
    d = Dataset(np.array([[1.0], [2.0], [-1.0]]), [1.0, 1.0, -1.0])
    assert primal_objective(d, np.zeros(1), 0.0, P) == pytest.approx(3 * P.C / 2)
    # margins 1 - y<w,x> = -9 and -19: only the small branch applies
    d2 = Dataset(np.array([[1.0], [-2.0]]), [1.0, -1.0])
    expected = 0.5 * 100 + P.c * (81 + 361) / 2
    assert primal_objective(d2, np.array([10.0]), 0.0, P) == pytest.approx(expected)


def test_weak_duality(rng):
    for _ in range(20):
        m = int(rng.integers(2, 10))
        d = random_instance(rng, m, 2)
        a, b, obj = solve_restricted(d, np.arange(m), P)
        w, b_hat = recover_primal(d, a, P)
        assert primal_objective(d, w, b_hat, P) >= -obj - 1e-8
        # at the unrestricted optimum there is no gap
        assert primal_objective(d, w, b_hat, P) == pytest.approx(-obj, abs=1e-9)


def test_kth_largest_abs():
    assert kth_largest_abs([3, -5, 1], 1) == 5
    assert kth_largest_abs([3, -5, 1], 3) == 1
    assert kth_largest_abs([3, -5, 1], 4) == 0.0
    with pytest.raises(ValueError):
        kth_largest_abs([1.0], 0)


def test_eta_star_cases():
    z = DualIterate(np.array([2.0, 0.0]), 0.0)
    assert eta_star(z, np.array([-1.0, 4.0]), 1) == 0.5
    assert eta_star(z, np.array([-1.0, 4.0]), 2) == np.inf
    assert eta_star(z, np.zeros(2), 1) == np.inf
