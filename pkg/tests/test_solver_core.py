import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperrpca.config import SolverConfig, Variant
from hyperrpca.solver_core import (
    DegenerateSystemError,
    FrameState,
    InvalidInputError,
    b_objective,
    compute_weights,
    frame_objective,
    inner_iterate,
    laplacian_objective,
    soft_threshold,
    solve_coefficients,
    solve_frame,
    solve_laplacian,
    solve_multiplier,
    solve_sparse_l1,
)


def grid_min(f, lo, hi, step=1e-4):
    g = np.arange(lo, hi + step / 2, step)
    vals = f(g)
    k = int(np.argmin(vals))
    return g[k], vals[k]


# weights


def test_weights_at_zero_error():
    d = np.array([0.2, 0.5, 0.9])
    assert np.array_equal(compute_weights(d, d, np.zeros(3), 1e3), np.ones(3))


@pytest.mark.parametrize("e, expected", [(2000.0, math.exp(-1)), (1000.0, math.exp(-0.25))])
def test_weights_kernel_values(e, expected):
    w = compute_weights(np.array([e]), np.zeros(1), np.zeros(1), 1000.0)
    assert w[0] == pytest.approx(expected, rel=1e-12)
    assert round(expected, 6) in (0.367879, 0.778801)


def test_weights_reject_nonfinite_naming_index():
    d = np.array([0.0, np.nan, 0.0])
    with pytest.raises(InvalidInputError, match="1"):
        compute_weights(d, np.zeros(3), np.zeros(3), 1.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20), st.floats(1e-2, 1e4))
def test_weights_in_unit_interval(errs, sigma):
    w = compute_weights(np.array(errs), np.zeros(len(errs)), np.zeros(len(errs)), sigma)
    assert np.all(w > 0) and np.all(w <= 1)


# coefficients


def test_coefficients_unweighted_projection():
    U = np.array([[1.0], [0.0]])
    v = solve_coefficients(U, np.ones(2), np.array([3.0, 4.0]), np.zeros(2), 0.0, 1.0)
    assert v[0] == pytest.approx(3.0)


def test_coefficients_ridge_shrinkage():
    U = np.array([[1.0], [0.0]])
    v = solve_coefficients(U, np.ones(2), np.array([3.0, 4.0]), np.zeros(2), 1.0, 1.0)
    assert v[0] == pytest.approx(1.5)


def test_coefficients_weighted_least_squares_oracle():
    U = np.array([[1.0], [1.0]])
    w = np.array([1.0, 0.5])
    y = np.array([2.0, 4.0])
    # oracle: ordinary least squares on rows scaled by w
    oracle, *_ = np.linalg.lstsq(w[:, None] * U, w * y, rcond=None)
    v = solve_coefficients(U, w, y, np.zeros(2), 0.0, 1.0)
    assert v[0] == pytest.approx(oracle[0], abs=1e-12)
    assert v[0] == pytest.approx(2.4, abs=1e-12)


def test_coefficients_singular_without_ridge():
    U = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(DegenerateSystemError):
        solve_coefficients(U, np.ones(2), np.ones(2), np.zeros(2), 0.0, 1.0)


def test_coefficients_match_augmented_lstsq():
    rng = np.random.default_rng(7)
    p, r, ridge = 300, 12, 1e-3
    U = rng.standard_normal((p, r))
    w = rng.uniform(0.1, 1.0, p)
    d, s = rng.standard_normal(p), rng.standard_normal(p) * 0.1
    A = np.vstack([w[:, None] * U, math.sqrt(ridge) * np.eye(r)])
    rhs = np.concatenate([w * (d - s), np.zeros(r)])
    oracle, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    v = solve_coefficients(U, w, d, s, ridge, 1.0)
    np.testing.assert_allclose(v, oracle, rtol=1e-9, atol=1e-12)


# multiplier b


def test_b_objective_values():
    assert b_objective(0.0, 1.0, 2.0, 1.0, 0.25, 1.0) == pytest.approx(4.0)
    assert b_objective(2.0, 1.0, 2.0, 1.0, 0.25, 1.0) == pytest.approx(math.log(3), abs=1e-12)
    direct = 4e-5 * math.log(0.51)
    assert b_objective(0.5, 1.0, 0.5, 1.0, 1e-5, 1e-2) == pytest.approx(direct, rel=1e-12)
    assert direct == pytest.approx(-2.6933e-5, rel=1e-4)


def test_b_objective_rejects_negative():
    with pytest.raises(ValueError):
        b_objective(-0.1, 1.0, 1.0, 1.0, 1e-5, 1e-2)


def test_multiplier_zero_alpha():
    assert solve_multiplier(0.7, 3.0, 0.0, 1e-5, 1e-2) == 0.0


def test_multiplier_noiseless_limit():
    assert solve_multiplier(1.0, 1.0, 1.0, 1e-14, 1e-14) == pytest.approx(1.0, abs=1e-6)


def test_multiplier_against_grid():
    b = solve_multiplier(1.0, 0.5, 1.0, 1e-5, 1e-2)
    gb, gf = grid_min(lambda g: b_objective(g, 1.0, 0.5, 1.0, 1e-5, 1e-2), 0.0, 3.0)
    assert b == pytest.approx(0.5, abs=1e-4)
    assert b_objective(b, 1.0, 0.5, 1.0, 1e-5, 1e-2) <= gf + 1e-12
    assert b_objective(0.0, 1.0, 0.5, 1.0, 1e-5, 1e-2) == pytest.approx(0.24982, abs=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(-1.0, 1.0), st.floats(-2.0, 2.0), st.floats(1e-6, 1e-2))
def test_multiplier_is_global_min(w, y, alpha, s2):
    b = solve_multiplier(w, y, alpha, s2, 1e-2)
    assert b >= 0
    _, gf = grid_min(lambda g: b_objective(g, w, y, alpha, s2, 1e-2), 0.0, 3.0, 1e-3)
    assert b_objective(b, w, y, alpha, s2, 1e-2) <= gf + 1e-9


def test_multiplier_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    w, y, a = rng.uniform(0.1, 1, 50), rng.normal(size=50), rng.normal(size=50)
    vec = solve_multiplier(w, y, a, 1e-5, 1e-2)
    assert np.array_equal(vec, [solve_multiplier(*t, 1e-5, 1e-2) for t in zip(w, y, a)])


# Laplacian alpha


def test_laplacian_formula_at_zero_b():
    # tau = 2e-5 / 1e-4 = 0.2, alpha = 0.1/0.01 - 0.2
    assert solve_laplacian(1.0, 0.1, 0.0, 1e-5, 1e-2) == pytest.approx(9.8, abs=1e-12)


def test_laplacian_zero_residual():
    assert solve_laplacian(1.0, 0.0, 0.7, 1e-5, 1e-2) == 0.0


def test_laplacian_formula_value():
    tau = 2e-5 / 0.51 ** 2
    assert tau == pytest.approx(7.6894e-5, rel=1e-4)
    assert solve_laplacian(1.0, 0.5, 0.5, 1e-5, 1e-2) == pytest.approx(0.5 / 0.51 - tau, abs=1e-12)
    assert 0.5 / 0.51 - tau == pytest.approx(0.980315, abs=1e-6)


def test_laplacian_formula_is_not_the_exact_minimizer():
    # the eps-shifted closed form differs from the true minimizer of the
    # alpha subproblem; the acceptance suite measures the gap
    a = solve_laplacian(1.0, 0.5, 0.5, 1e-5, 1e-2)
    ga, gf = grid_min(lambda g: laplacian_objective(g, 1.0, 0.5, 0.5, 1e-5), -3.0, 3.0)
    assert ga == pytest.approx(0.99996, abs=1e-4)
    assert laplacian_objective(a, 1.0, 0.5, 0.5, 1e-5) - gf > 1e-6


@given(st.floats(-5, 5), st.floats(0, 3))
def test_soft_threshold_properties(x, tau):
    y = soft_threshold(x, tau)
    assert abs(y) <= abs(x) + 1e-15
    assert y == 0 or np.sign(y) == np.sign(x)
    assert abs(x - y) <= tau + 1e-12


# l1 foreground


def test_sparse_l1_values():
    one = np.ones(1)
    assert solve_sparse_l1(one, np.array([0.3]), np.array([0.3]), 0.2)[0] == 0.0
    assert solve_sparse_l1(one, np.array([0.5]), np.zeros(1), 0.2)[0] == pytest.approx(0.4)
    s = solve_sparse_l1(np.array([0.5]), np.array([0.5]), np.zeros(1), 0.2)[0]
    gs, _ = grid_min(lambda g: 0.25 * (0.5 - g) ** 2 + 0.2 * np.abs(g), -1.0, 1.0)
    assert s == pytest.approx(0.1, abs=1e-12)
    assert s == pytest.approx(gs, abs=1e-4)


# inner loop


def _cfg(**kw):
    return SolverConfig(r=kw.pop("r", 4), **kw)


def test_zero_frame_fixed_point():
    p, r = 30, 4
    U = np.random.default_rng(0).standard_normal((p, r))
    out = inner_iterate(np.zeros(p), U, FrameState.initial(p, r), _cfg())
    assert np.array_equal(out.w, np.ones(p))
    for x in (out.v, out.b, out.alpha, out.s):
        assert not np.any(x)


@pytest.mark.parametrize("variant", list(Variant))
def test_unweighted_variants_return_unit_weights(variant):
    rng = np.random.default_rng(1)
    p, r = 40, 4
    cfg = _cfg(variant=variant, sigma=0.05)
    U = rng.standard_normal((p, r))
    out = inner_iterate(rng.random(p), U, FrameState.initial(p, r), cfg)
    if not variant.uses_weights:
        assert np.array_equal(out.w, np.ones(p))
    else:
        assert np.all(out.w <= 1)


def test_clean_low_rank_frame_recovered():
    rng = np.random.default_rng(11)
    p, r = 400, 5
    U = rng.standard_normal((p, r)) / math.sqrt(p)
    vbar = rng.standard_normal(r)
    d = U @ vbar
    cfg = _cfg(r=r, eta=1e-4, sigma_w2=1e-5)  # ridge 1e-9
    state, _ = solve_frame(d, U, FrameState.initial(p, r), cfg)
    assert np.linalg.norm(state.v - vbar) / np.linalg.norm(vbar) <= 1e-4
    assert np.max(np.abs(state.s)) <= cfg.mask_threshold


def test_frame_objective_trivial_cases():
    p, r = 8, 2
    U = np.ones((p, r))
    cfg = _cfg(r=r, eps=1.0)
    assert frame_objective(np.zeros(p), U, FrameState.initial(p, r), cfg) == 0.0
    d = np.zeros(p)
    d[:2] = 1.0
    assert frame_objective(d, U, FrameState.initial(p, r), cfg) == pytest.approx(2.0)


def test_solve_frame_iteration_cap():
    rng = np.random.default_rng(2)
    p, r = 50, 3
    cfg = _cfg(r=r, inner_max_iters=1)
    _, iters = solve_frame(rng.random(p), rng.standard_normal((p, r)), FrameState.initial(p, r), cfg)
    assert iters == 1


def test_state_copy_is_independent():
    s = FrameState.initial(4, 2)
    c = s.copy()
    c.b[0] = 1.0
    assert s.b[0] == 0.0


def test_multiplier_tiny_alpha_is_finite():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        b = solve_multiplier(1.0, 0.5, 1e-160, 1e-5, 1e-2)  # alpha^2 is denormal
    assert b == 0.0
