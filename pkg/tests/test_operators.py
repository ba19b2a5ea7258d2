import math

import numpy as np
import pytest

from source.errors_interpolation import DimensionMismatchError
from source.operators_interpolation import (
    CoupleOperator,
    approx_numbers,
    canonical_operator,
    compactness_modulus,
    constrained_image_norm,
    couple_operator_norm,
    euclidean_envelope,
    fourier_coefficient_bound,
    interpolated_operator_bound,
    op_norm,
    theta_operator_norm,
)
from source.spaces_interpolation import Couple, norm, polytope, weighted_lp


def test_identity_and_diagonal():
    rng = np.random.default_rng(1)
    space = weighted_lp(3.0, np.exp(rng.uniform(-1.0, 1.0, 4)))
    assert op_norm(np.eye(4), space, space).upper == pytest.approx(1.0, rel=1e-12)
    d = np.array([0.5, -2.0, 1.5j])
    ell = weighted_lp(4.0, np.ones(3))
    bracket = op_norm(np.diag(d), ell, ell)
    assert bracket.lower == bracket.upper == pytest.approx(2.0)


def test_l1_source_column_formula():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    src = weighted_lp(1.0, np.exp(rng.uniform(-1.0, 1.0, 4)))
    tgt = weighted_lp(1.5, np.exp(rng.uniform(-1.0, 1.0, 3)))
    expected = max(norm(tgt, A[:, i]) / src.weights[i] for i in range(4))
    bracket = op_norm(A, src, tgt)
    assert bracket.upper == pytest.approx(expected, rel=1e-12)
    assert bracket.solver == 'extreme_points'


def test_weighted_euclidean_is_a_singular_value():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    w_src, w_tgt = np.array([1.0, 2.0, 0.5]), np.array([3.0, 1.0, 1.0])
    expected = np.linalg.svd(w_tgt[:, None] * A / w_src[None, :], compute_uv=False)[0]
    bracket = op_norm(A, weighted_lp(2.0, w_src), weighted_lp(2.0, w_tgt))
    assert bracket.upper == pytest.approx(expected, rel=1e-12)
    assert norm(weighted_lp(2.0, w_tgt), A @ bracket.witness) / norm(weighted_lp(2.0, w_src), bracket.witness) == pytest.approx(expected, rel=1e-9)


def test_general_bracket_is_consistent():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    src, tgt = weighted_lp(3.0, np.ones(3)), weighted_lp(1.5, np.ones(3))
    bracket = op_norm(A, src, tgt, cfg={'ascent_steps': 100, 'multistarts': 2})
    assert bracket.lower <= bracket.upper
    for i in range(3):
        e = np.eye(3)[i]
        assert bracket.lower >= norm(tgt, A @ e) / norm(src, e) * (1 - 1e-12)


def test_sup_source_uses_phase_grid():
    A = np.array([[1.0, 1.0], [1.0, -1.0]])
    src, tgt = weighted_lp(math.inf, np.ones(2)), weighted_lp(2.0, np.ones(2))
    bracket = op_norm(A, src, tgt, cfg={'ascent_steps': 50})
    # ||A (1, e^{i phi})||_2 = 2 for every phase
    assert bracket.lower == pytest.approx(2.0, rel=1e-9)
    assert bracket.upper >= bracket.lower


def test_submultiplicative():
    rng = np.random.default_rng(5)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
    space = weighted_lp(3.0, np.ones(3))
    cfg = {'ascent_steps': 100, 'multistarts': 2}
    product = op_norm(A @ B, space, space, cfg)
    assert product.lower <= op_norm(A, space, space, cfg).upper * op_norm(B, space, space, cfg).upper * (1 + 1e-9)


def test_polytope_envelope():
    F = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    E, lo, hi = euclidean_envelope(polytope(F))
    rng = np.random.default_rng(6)
    for _ in range(20):
        x = rng.standard_normal(2)
        value = norm(polytope(F), x)
        assert lo * np.linalg.norm(E @ x) <= value * (1 + 1e-12)
        assert value <= hi * np.linalg.norm(E @ x) * (1 + 1e-12)


def test_couple_operator():
    couple = Couple(weighted_lp(2.0, [1.0, 1.0]), weighted_lp(1.0, [1.0, 2.0]))
    b0, b1 = couple_operator_norm(CoupleOperator(np.eye(2), couple, couple))
    assert b0.upper == pytest.approx(1.0) and b1.upper == pytest.approx(1.0)
    z0, z1 = couple_operator_norm(CoupleOperator(np.zeros((2, 2)), couple, couple))
    assert z0.upper == 0.0 and z1.upper == 0.0
    with pytest.raises(DimensionMismatchError):
        CoupleOperator(np.eye(3), couple, couple)


@pytest.mark.parametrize("r", [0.25, 1.0, 4.0])
def test_constrained_identity(r):
    euclid = weighted_lp(2.0, np.ones(3))
    T = CoupleOperator(np.eye(3), Couple(euclid, euclid), Couple(euclid, euclid))
    bracket = constrained_image_norm(T, r)
    assert bracket.upper == pytest.approx(min(1.0, r), rel=1e-12)
    assert bracket.lower == pytest.approx(min(1.0, r), rel=1e-9)


def test_operator_cache_is_bounded():
    euclid = weighted_lp(2.0, np.ones(3))
    T = CoupleOperator(np.eye(3), Couple(euclid, euclid), Couple(euclid, euclid), cache_size=4)
    calls = []
    for r in range(1, 11):
        T.cached(('image', float(r)), lambda r=r: calls.append(r) or r)
    assert len(T._cache) == 4
    assert list(T._cache) == [('image', float(r)) for r in (7, 8, 9, 10)]

    # a hit refreshes the entry instead of recomputing it
    assert T.cached(('image', 7.0), lambda: calls.append(-1) or -1) == 7
    T.cached(('image', 11.0), lambda: 11)
    assert ('image', 7.0) in T._cache and ('image', 8.0) not in T._cache
    assert -1 not in calls

    for r in np.linspace(0.1, 3.0, 12):
        constrained_image_norm(T, float(r), certify_lower=False)
    assert len(T._cache) <= 4
    with pytest.raises(ValueError):
        CoupleOperator(np.eye(3), T.source, T.target, cache_size=0)


def test_constrained_image_of_a_diagonal():
    """sup{||Tx|| : ||x||_X0 <= 1, ||x||_X1 <= 1/2} = 1/2, attained at x = e1 / 2."""
    source = Couple(weighted_lp(2.0, np.ones(3)), weighted_lp(2.0, [1.0, 2.0, 4.0]))
    target = Couple(weighted_lp(2.0, np.ones(3)), weighted_lp(2.0, np.ones(3)))
    T = CoupleOperator(np.diag([1.0, 0.5, 0.25]), source, target)
    bracket = constrained_image_norm(T, 0.5)
    assert bracket.upper == pytest.approx(0.5, rel=1e-12)
    assert bracket.lower == pytest.approx(0.5, rel=1e-9)

    # coarse search over nonnegative points of both balls stays below the bound
    grid = np.linspace(0.0, 1.0, 21)
    a = np.stack(np.meshgrid(grid, grid, grid, indexing='ij'), axis=-1).reshape(-1, 3)
    feasible = (np.linalg.norm(a, axis=1) <= 1.0) & (np.linalg.norm(a * [1.0, 2.0, 4.0], axis=1) <= 0.5)
    best = np.linalg.norm(a[feasible] * [1.0, 0.5, 0.25], axis=1).max()
    assert best <= bracket.upper * (1 + 1e-12)

    with pytest.raises(ValueError):
        constrained_image_norm(T, 0.0)


def test_constrained_image_large_r():
    T = canonical_operator(n=4)
    bracket = constrained_image_norm(T, 1e6, certify_lower=False)
    assert bracket.upper == pytest.approx(couple_operator_norm(T)[0].upper)
    assert bracket.lower == 0.0


def test_fourier_coefficient_bound():
    T = canonical_operator(n=4)
    zero = CoupleOperator(np.zeros((4, 4)), T.source, T.target)
    assert fourier_coefficient_bound(zero, 3, 0.5).upper == 0.0
    at_zero = fourier_coefficient_bound(T, 0, 0.5, certify_lower=False)
    # Y_theta = Y0 for the canonical target
    assert at_zero.upper == pytest.approx(constrained_image_norm(T, 1.0, certify_lower=False).upper)
    peak = max(fourier_coefficient_bound(T, k, 0.5, certify_lower=False).upper for k in range(-5, 6))
    far = fourier_coefficient_bound(T, 40, 0.5, certify_lower=False).upper
    assert far <= 1e-3 * peak
    with pytest.raises(ValueError):
        fourier_coefficient_bound(T, 0, 1.0)


def test_fourier_bound_without_lattice_target():
    rng = np.random.default_rng(8)
    T = canonical_operator(n=2)
    target = Couple(polytope(rng.standard_normal((3, 2))), T.target.space1)
    S = CoupleOperator(T.matrix, T.source, target)
    bracket = fourier_coefficient_bound(S, 1, 0.5)
    assert bracket.heuristic
    assert bracket.lower <= bracket.upper


def test_approx_numbers():
    euclid = weighted_lp(2.0, np.ones(3))
    values = [b.upper for b in approx_numbers(np.diag([1.0, 3.0, 2.0]), euclid, euclid, 3)]
    np.testing.assert_allclose(values, [3.0, 2.0, 1.0])

    src, tgt = weighted_lp(4.0, [1.0, 2.0, 4.0]), weighted_lp(4.0, np.ones(3))
    diagonal = [b.upper for b in approx_numbers(np.eye(3), src, tgt, 3)]
    np.testing.assert_allclose(diagonal, [1.0, 0.5, 0.25])

    with pytest.raises(ValueError):
        approx_numbers(np.eye(3), euclid, euclid, 4)


def test_approx_numbers_general_are_monotone():
    rng = np.random.default_rng(9)
    A = rng.standard_normal((3, 3))
    brackets = approx_numbers(A, weighted_lp(3.0, np.ones(3)), weighted_lp(1.5, np.ones(3)), 3)
    uppers = [b.upper for b in brackets]
    assert all(b <= a for a, b in zip(uppers, uppers[1:]))
    assert all(b.lower <= b.upper for b in brackets)


def test_compactness_modulus():
    T = canonical_operator()
    deltas = 2.0 ** -np.arange(6, -1, -1)
    modulus = compactness_modulus(T, deltas)
    assert np.all(np.diff(modulus.eta) > 0), "eta should grow strictly below the X0 -> Y0 norm"
    assert modulus.eta[-1] <= couple_operator_norm(T)[0].upper
    assert not modulus.envelope

    zero = CoupleOperator(np.zeros((10, 10)), T.source, T.target)
    assert np.all(compactness_modulus(zero, deltas).eta == 0.0)
    with pytest.raises(ValueError):
        compactness_modulus(T, [0.5, 0.25])


def test_canonical_operator():
    T = canonical_operator()
    assert T.shape == (10, 10)
    values = [b.upper for b in approx_numbers(T.matrix, T.source.space0, T.target.space0, 4)]
    np.testing.assert_allclose(values, [0.5, 0.25, 0.125, 0.0625])


@pytest.mark.parametrize("theta", [0.25, 0.5, 0.75])
def test_interpolation_bound_is_tight_on_the_canonical_operator(theta):
    T = canonical_operator()
    middle = theta_operator_norm(T, theta)
    bound = interpolated_operator_bound(T, theta)
    assert middle.upper == pytest.approx(math.exp(-theta) / 2.0, rel=1e-12)
    assert middle.lower <= bound * (1 + 1e-12)
