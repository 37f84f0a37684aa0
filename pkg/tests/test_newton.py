import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import dense_Q, random_instance
from nssvm.dataset import Dataset, gen_gaussian_2d
from nssvm.linear import DualIterate, NumericalBreakdown, Penalties, dual_objective, e_diag, grad_g
from nssvm.newton import (
    NewtonState,
    SolverConfig,
    check_eta_stationarity,
    default_start,
    default_tolerance,
    newton_direction,
    residual_F,
    sign_start,
    solve_fixed_s,
)
from nssvm.adaptive import profile_config
from nssvm.oracle import enumerate_global, solve_restricted

P = Penalties()


def dense_F(d, z, T, p):
    g = dense_Q(d).T @ (dense_Q(d) @ z.alpha) + e_diag(z.alpha, p) * z.alpha - 1 + z.b * d.y
    off = np.setdiff1d(np.arange(d.m), T)
    return np.concatenate([g[T], z.alpha[off], [z.alpha[T] @ d.y[T]]])


def dense_jacobian(d, z, T, p):
    """Derivative of F(z; T) in the coordinates (alpha in index order, b).

    Rows follow the stacking of F: T-rows of g, then alpha off T, then the
    feasibility row.
    """
    m = d.m
    Q = dense_Q(d)
    H = Q.T @ Q + np.diag(e_diag(z.alpha, p))
    off = np.setdiff1d(np.arange(m), T)
    J = np.zeros((m + 1, m + 1))
    k = len(T)
    J[:k, :m] = H[T, :]
    J[:k, m] = d.y[T]
    J[k + np.arange(off.size), off] = 1.0
    J[m, T] = d.y[T]
    return J


def random_state(rng, d, s, support_in_T):
    T = np.sort(rng.choice(d.m, s, replace=False))
    alpha = np.zeros(d.m)
    if support_in_T:
        alpha[T] = rng.normal(size=s)
    else:
        alpha = rng.normal(size=d.m) * (rng.random(d.m) < 0.6)
    z = DualIterate(alpha, rng.normal())
    return NewtonState(z, T, 0.0, 0, grad_g(d, z, P), s)


def test_defaults():
    assert default_tolerance(100, 4) == pytest.approx(1e-5)
    assert default_tolerance(4, 100) == pytest.approx(1e-5)
    cfg = SolverConfig(s=3).resolve(50, 2)
    assert cfg.eta == pytest.approx(1 / 50)
    assert cfg.eps == pytest.approx(math.sqrt(50) * 1e-6)
    assert cfg.penalties == Penalties(0.25, 0.0025)
    with pytest.raises(ValueError):
        SolverConfig(s=10).resolve(5, 2)
    for bad in (dict(s=0), dict(eta=0.0), dict(eps=-1.0), dict(max_iter=-1), dict(min_iter=2, max_iter=1)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_residual_at_origin(rng):
    d = random_instance(rng, 9, 3)
    T = np.array([1, 4, 6])
    F, norm = residual_F(d, DualIterate(np.zeros(9), 0.0), T, P)
    np.testing.assert_array_equal(F[:3], -1.0)
    assert not F[3:].any()
    assert norm == pytest.approx(math.sqrt(3))


def test_residual_matches_dense(rng):
    for _ in range(30):
        d = random_instance(rng, 12, 3)
        st = random_state(rng, d, 4, support_in_T=False)
        F, norm = residual_F(d, st.z, st.T, P)
        ref = dense_F(d, st.z, st.T, P)
        np.testing.assert_allclose(F, ref, rtol=0, atol=1e-13)
        assert norm == pytest.approx(np.linalg.norm(ref), rel=1e-13)


def test_residual_zero_at_restricted_solution(rng):
    d = random_instance(rng, 10, 3)
    T = np.array([0, 3, 5, 9])
    a, b, _ = solve_restricted(d, T, P)
    _, norm = residual_F(d, DualIterate(a, b), T, P)
    assert norm <= 1e-10


def test_dense_jacobian_is_derivative(rng):
    # sanity of the test oracle itself: finite differences of F
    d = random_instance(rng, 8, 3)
    st = random_state(rng, d, 3, support_in_T=False)
    alpha = st.z.alpha + np.where(st.z.alpha == 0, 0.5, 0.0)  # away from sign kinks
    z = DualIterate(alpha, st.z.b)
    J = dense_jacobian(d, z, st.T, P)
    h = 1e-7
    x = z.stacked()
    for j in range(d.m + 1):
        e = np.zeros(d.m + 1)
        e[j] = h
        hi = DualIterate((x + e)[:-1], (x + e)[-1])
        lo = DualIterate((x - e)[:-1], (x - e)[-1])
        col = (dense_F(d, hi, st.T, P) - dense_F(d, lo, st.T, P)) / (2 * h)
        np.testing.assert_allclose(J[:, j], col, atol=1e-6)


@pytest.mark.parametrize("support_in_T", [True, False])
def test_direction_solves_newton_system(rng, support_in_T):
    for _ in range(40):
        m = int(rng.integers(3, 20))
        d = random_instance(rng, m, int(rng.integers(1, 5)))
        s = int(rng.integers(2, min(m, 8) + 1))
        st = random_state(rng, d, s, support_in_T)
        dvec = newton_direction(d, st, P)
        J = dense_jacobian(d, st.z, st.T, P)
        F = dense_F(d, st.z, st.T, P)
        assert np.linalg.norm(J @ dvec + F) <= 1e-10 * (1 + np.linalg.norm(F))
        np.testing.assert_allclose(dvec, np.linalg.solve(J, -F), atol=1e-10 * (1 + np.linalg.norm(F)))


def test_direction_matches_block_free_jacobian_on_T_support(rng):
    # with alpha supported on T the coupling block is inert
    for _ in range(20):
        d = random_instance(rng, 10, 3)
        st = random_state(rng, d, 4, support_in_T=True)
        J = dense_jacobian(d, st.z, st.T, P)
        T = st.T
        off = np.setdiff1d(np.arange(10), T)
        J[:4, off] = 0.0
        F = dense_F(d, st.z, T, P)
        np.testing.assert_allclose(newton_direction(d, st, P), np.linalg.solve(J, -F), atol=1e-10)


def test_direction_zero_at_fixed_point(rng):
    d = random_instance(rng, 8, 2)
    T = np.array([1, 2, 6])
    a, b, _ = solve_restricted(d, T, P)
    z = DualIterate(a, b)
    st = NewtonState(z, T, 0.0, 0, grad_g(d, z, P), 3)
    assert np.abs(newton_direction(d, st, P)).max() <= 1e-12


def test_mirror_pair_matches_oracle():
    d = Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]), [1.0, -1.0])
    fit = solve_fixed_s(d, SolverConfig(P, s=2, eta=0.5))
    assert fit.converged
    res = enumerate_global(d, 2, P)
    assert dual_objective(d, fit.alpha, P) == pytest.approx(res.best_objective, abs=1e-8)
    np.testing.assert_allclose(fit.alpha, [1 / 6, 1 / 6], atol=1e-12)
    assert fit.b == pytest.approx(0.0, abs=1e-12)


def test_frozen_fixed_s_run():
    d = gen_gaussian_2d(500, 0).train
    fit = solve_fixed_s(d, SolverConfig(P, s=20))
    assert fit.converged and fit.iters == 7
    assert fit.b == pytest.approx(0.14996395463612605, abs=1e-10)
    assert dual_objective(d, fit.alpha, P) == pytest.approx(-1.8036366412510623, abs=1e-10)
    assert fit.support.tolist() == [
        1, 5, 7, 9, 10, 11, 14, 18, 19, 90, 116, 253, 285, 305, 306, 320, 429, 431, 442, 456
    ]


def test_example_data_converges():
    d = gen_gaussian_2d(10_000, 0).train
    cfg = profile_config("synth", d.m).resolve(d.m, d.n).base
    assert cfg.s == 151
    fit = solve_fixed_s(d, cfg)
    assert fit.converged and fit.iters <= 30
    assert fit.residual < cfg.eps
    assert check_eta_stationarity(d, fit.z, cfg).passed


def test_invariants_every_iteration():
    d = gen_gaussian_2d(2000, 4).train
    seen = []

    def cb(st):
        a = st.z.alpha
        seen.append(st.iter)
        assert np.count_nonzero(a) <= st.s
        if st.iter > 0:
            assert abs(a @ d.y) <= 1e-9 * (1 + np.linalg.norm(a))

    fit = solve_fixed_s(d, SolverConfig(P, s=60), callback=cb)
    assert seen == list(range(fit.iters + 1))
    assert fit.support.size <= 60
    np.testing.assert_array_equal(fit.support, np.flatnonzero(fit.alpha))


def test_active_block_exact_when_signs_stay(rng):
    d = gen_gaussian_2d(1000, 2).train
    states = []
    solve_fixed_s(d, SolverConfig(P, s=40), callback=lambda st: states.append(st))
    checked = 0
    for prev, cur in zip(states, states[1:]):
        T = prev.T
        if np.array_equal(prev.z.alpha[T] >= 0, cur.z.alpha[T] >= 0):
            gT = cur.g[T]
            assert np.linalg.norm(gT) <= 1e-9 * (1 + np.linalg.norm(prev.g))
            checked += 1
    assert checked > 0


def test_deterministic():
    d = gen_gaussian_2d(800, 1).train
    a = solve_fixed_s(d, SolverConfig(P, s=30))
    b = solve_fixed_s(d, SolverConfig(P, s=30))
    assert a.residual_history == b.residual_history
    np.testing.assert_array_equal(a.alpha, b.alpha)
    assert a.b == b.b


def test_sign_start_cycles():
    d = gen_gaussian_2d(400, 0).train
    z0 = sign_start(d)
    assert z0.b == -1.0  # balanced labels sum to 0; sgn(0) = -1
    fit = solve_fixed_s(d, SolverConfig(P, s=10, max_iter=20), z0=z0)
    assert not fit.converged
    tail = fit.residual_history[2:]
    np.testing.assert_allclose(tail, 2 * math.sqrt(10), rtol=1e-12)
    assert fit.iters == 20
    assert not fit.alpha.any()


def test_default_start_is_zero():
    d = gen_gaussian_2d(10, 0).train
    z = default_start(d)
    assert z.b == 0.0 and not z.alpha.any()


def test_nonconvergence_returns_best(rng):
    d = gen_gaussian_2d(200, 0).train
    fit = solve_fixed_s(d, SolverConfig(P, s=20, max_iter=25))
    assert not fit.converged and fit.iters == 25
    assert fit.residual_history[-1] >= min(fit.residual_history)
    F, norm = residual_F(d, fit.z, np.flatnonzero(fit.alpha), P)
    assert np.isfinite(norm)


def test_requires_binary_labels():
    d = Dataset(np.ones((3, 1)), [1, 2, 1])
    with pytest.raises(ValueError):
        solve_fixed_s(d, SolverConfig(P, s=1))


def test_z0_shape_checked():
    d = gen_gaussian_2d(10, 0).train
    with pytest.raises(ValueError):
        solve_fixed_s(d, SolverConfig(P, s=2), z0=DualIterate(np.zeros(3), 0.0))


def test_min_iter_forces_steps():
    d = gen_gaussian_2d(600, 3).train
    cfg = SolverConfig(P, s=25)
    fit = solve_fixed_s(d, cfg)
    again = solve_fixed_s(d, replace(cfg, min_iter=1, max_iter=1), z0=fit.z)
    assert again.iters == 1 and again.converged
    assert again.residual <= 1e-10


def test_breakdown_is_typed(monkeypatch):
    import nssvm.newton as newton

    d = gen_gaussian_2d(50, 0).train

    def broken(*args, **kwargs):
        raise NumericalBreakdown("forced")

    monkeypatch.setattr(newton, "hessian_block", broken)
    with pytest.raises(NumericalBreakdown):
        solve_fixed_s(d, SolverConfig(P, s=5))


def test_stationarity_converged_passes():
    d = gen_gaussian_2d(1500, 5).train
    cfg = SolverConfig(P, s=80)
    fit = solve_fixed_s(d, cfg)
    rep = check_eta_stationarity(d, fit.z, cfg)
    assert fit.converged and rep.passed and rep.violations == []


def test_stationarity_zero_fails_off_support(rng):
    d = random_instance(rng, 10, 2)
    rep = check_eta_stationarity(d, DualIterate(np.zeros(10), 0.0), SolverConfig(P, s=3))
    assert not rep.passed
    assert rep.violations == ["off_support_bound"]
    assert rep.alpha_s == 0.0 and rep.off_support == pytest.approx(0.1)


def test_stationarity_full_level_boundary():
    d = Dataset(np.array([[1.0], [2.0], [3.0]]), [1.0, 1.0, 1.0])
    cfg = SolverConfig(P, s=3)
    # all labels +1, b = 1: g = -1 + 1 = 0 everywhere
    assert check_eta_stationarity(d, DualIterate(np.zeros(3), 1.0), cfg).passed
    rep = check_eta_stationarity(d, DualIterate(np.zeros(3), 0.0), cfg)
    assert rep.violations == ["off_support_bound"]
