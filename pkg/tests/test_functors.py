import math

import numpy as np
import pytest

from source.annulus_interpolation import AnnulusSpec
from source.errors_interpolation import AliasingError, UnsupportedKindError
from source.functors_interpolation import (
    Representation,
    ThetaSpec,
    calderon_product_norm,
    complex_norm_upper,
    gp_norm_upper,
    k_functional,
    lattice_theta_norm,
    lattice_theta_space,
    peetre_norm_upper,
    peetre_sides,
    product_factorization,
    reiterate,
)
from source.spaces_interpolation import Couple, intersection_norm, norm, polytope, same_space, weighted_lp

FAST = {'max_iter': 150, 'window': 50, 'multistarts': 2}


@pytest.fixture
def l1_linf():
    return Couple(weighted_lp(1.0, [1.0, 1.0]), weighted_lp(math.inf, [1.0, 1.0]))


@pytest.fixture
def mixed():
    return Couple(weighted_lp(1.5, [1.0, 2.0, 0.5]), weighted_lp(4.0, [0.7, 1.0, 3.0]))


def test_theta_space_parameters(l1_linf):
    middle = lattice_theta_space(l1_linf, 0.5)
    assert middle.p == pytest.approx(2.0)
    assert lattice_theta_space(l1_linf, 0.0) is l1_linf.space0
    assert lattice_theta_space(l1_linf, 1.0) is l1_linf.space1

    same_p = Couple(weighted_lp(3.0, [1.0, 4.0]), weighted_lp(3.0, [4.0, 1.0]))
    space = lattice_theta_space(same_p, 0.5)
    assert space.p == 3.0
    np.testing.assert_allclose(space.weights, [2.0, 2.0])

    with pytest.raises(ValueError):
        lattice_theta_space(l1_linf, 1.5)
    with pytest.raises(UnsupportedKindError):
        lattice_theta_space(Couple(polytope(np.eye(2)), weighted_lp(2.0, [1.0, 1.0])), 0.5)


def test_k_functional_wraps_split_norm(l1_linf):
    bracket = k_functional(l1_linf, [1.0, 1.0], 1.0)
    assert bracket.upper == pytest.approx(1.0)


def test_product_factorization(mixed):
    x = np.array([1.0, -0.5j, 2.0 + 1.0j])
    theta = 0.3
    factor = product_factorization(mixed, theta, x)
    assert factor.lam == pytest.approx(lattice_theta_norm(mixed, theta, x), rel=1e-12)
    np.testing.assert_allclose(np.abs(x), factor.lam * factor.x0 ** (1 - theta) * factor.x1 ** theta, rtol=1e-10)
    assert norm(mixed.space0, factor.x0) <= 1.0 + 1e-12
    assert norm(mixed.space1, factor.x1) <= 1.0 + 1e-12


def test_calderon_product_matches_closed_form(mixed):
    x = np.array([1.0, -0.5j, 2.0 + 1.0j])
    for theta in (0.25, 0.5, 0.75):
        oracle = lattice_theta_norm(mixed, theta, x)
        bracket = calderon_product_norm(mixed, theta, x)
        assert bracket.upper == pytest.approx(oracle, rel=1e-6)
        assert bracket.lower <= oracle * (1.0 + 1e-9)


def test_calderon_product_edge_cases(mixed):
    assert calderon_product_norm(mixed, 0.5, np.zeros(3)).upper == 0.0
    x = np.array([1.0, 2.0, 3.0])
    assert calderon_product_norm(mixed, 0.0, x).upper == pytest.approx(norm(mixed.space0, x))
    diagonal = Couple(mixed.space0, mixed.space0)
    assert calderon_product_norm(diagonal, 0.4, x).upper == pytest.approx(norm(mixed.space0, x), rel=1e-6)


def test_complex_norm_of_a_diagonal_couple(mixed):
    """X_theta = X when X0 = X1; the constant family attains it."""
    couple = Couple(mixed.space0, mixed.space0)
    x = np.array([1.0, 2.0j, -1.0])
    bracket = complex_norm_upper(couple, 0.5, x, K=4, spec=AnnulusSpec(32), solver_cfg=FAST)
    assert bracket.upper == pytest.approx(norm(couple.space0, x), rel=1e-9)
    assert bracket.lower == pytest.approx(norm(couple.space0, x), rel=1e-12)


def test_complex_norm_one_dimensional():
    """l2(1) against l2(e) at theta = 1/2 gives e^(1/2) |x|."""
    couple = Couple(weighted_lp(2.0, [1.0]), weighted_lp(2.0, [math.e]))
    bracket = complex_norm_upper(couple, 0.5, [2.0], K=4, spec=AnnulusSpec(32), solver_cfg=FAST)
    assert bracket.upper == pytest.approx(2.0 * math.exp(0.5), rel=1e-6)
    assert bracket.lower == pytest.approx(2.0 * math.exp(0.5), rel=1e-12)


def test_complex_norm_l1_linf(l1_linf):
    x = np.array([1.0, 1.0])
    bracket = complex_norm_upper(l1_linf, 0.5, x, K=8, spec=AnnulusSpec(64), solver_cfg=FAST)
    assert bracket.lower == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert math.sqrt(2.0) * (1 - 1e-9) <= bracket.upper <= 1.15 * math.sqrt(2.0)
    assert bracket.extra['K'] == 8 and bracket.extra['M'] == 64


def test_complex_norm_edge_cases(l1_linf):
    zero = complex_norm_upper(l1_linf, 0.5, np.zeros(2), K=4, spec=AnnulusSpec(32))
    assert zero.upper == 0.0 and zero.lower == 0.0
    endpoint = complex_norm_upper(l1_linf, 1.0, [3.0, -4.0], K=4, spec=AnnulusSpec(32))
    assert endpoint.upper == 4.0 and endpoint.solver == 'endpoint'
    with pytest.raises(AliasingError):
        complex_norm_upper(l1_linf, 0.5, [1.0, 1.0], K=8, spec=AnnulusSpec(32))


def test_warm_start_seeds_the_refinement(mixed):
    x = np.array([1.0, -0.5j, 2.0 + 1.0j])
    first = complex_norm_upper(mixed, 0.5, x, K=4, spec=AnnulusSpec(32), solver_cfg=FAST)
    second = complex_norm_upper(mixed, 0.5, x, K=8, spec=AnnulusSpec(64), solver_cfg=FAST, warm_start=first)
    assert second.upper <= first.upper * (1.0 + 1e-12)
    assert second.witness.K == 8
    # the refined family alone, certified on the fine grid, stays near the coarse witness it started from
    assert second.extra['refined_upper'] >= second.upper
    assert second.extra['refined_upper'] <= first.upper * 1.05


def test_representation_sums_to_x(mixed):
    x = np.array([1.0, -0.5j, 2.0 + 1.0j])
    bracket = peetre_norm_upper(mixed, 0.5, x, K=4, solver_cfg=FAST)
    assert isinstance(bracket.witness, Representation)
    np.testing.assert_allclose(bracket.witness.represented, x, rtol=1e-12, atol=1e-12)
    assert max(peetre_sides(mixed, bracket.witness)) == pytest.approx(bracket.upper, rel=1e-12)


def test_peetre_norm_bounds(mixed):
    x = np.array([1.0, -0.5j, 2.0 + 1.0j])
    oracle = lattice_theta_norm(mixed, 0.5, x)
    bracket = peetre_norm_upper(mixed, 0.5, x, K=6, solver_cfg=FAST)
    assert oracle * (1 - 1e-9) <= bracket.upper <= 1.1 * oracle
    assert bracket.upper <= intersection_norm(mixed, x) * (1 + 1e-12)
    with pytest.raises(ValueError):
        peetre_norm_upper(mixed, 0.0, x)


def test_peetre_norm_of_a_diagonal_couple(mixed):
    couple = Couple(mixed.space1, mixed.space1)
    x = np.array([1.0, 2.0, 3.0])
    assert peetre_norm_upper(couple, 0.5, x, K=3, solver_cfg=FAST).upper == pytest.approx(norm(couple.space0, x), rel=1e-9)


def test_gp_equals_peetre(mixed):
    x = np.array([1.0, -0.5j, 2.0 + 1.0j])
    peetre = peetre_norm_upper(mixed, 0.25, x, K=4, solver_cfg=FAST)
    gp = gp_norm_upper(mixed, 0.25, x, K=4, solver_cfg=FAST)
    assert gp.upper == pytest.approx(peetre.upper, rel=1e-12)
    assert gp.solver == 'gp'
    assert gp_norm_upper(mixed, 0.25, np.zeros(3), K=4).upper == 0.0


def test_peetre_on_a_polytope_couple():
    rng = np.random.default_rng(2)
    couple = Couple(polytope(rng.standard_normal((3, 2))), weighted_lp(2.0, [1.0, 2.0]))
    x = np.array([1.0, 1.0j])
    bracket = peetre_norm_upper(couple, 0.5, x, K=3, solver_cfg=FAST)
    assert not bracket.heuristic
    assert bracket.lower <= bracket.upper <= intersection_norm(couple, x) * (1 + 1e-12)


def test_theta_spec():
    spec = ThetaSpec(0.2, 0.8, 0.5)
    assert spec.s == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ThetaSpec(0.2, 1.2, 0.5)


def test_reiteration(mixed):
    derived, direct = reiterate(mixed, 0.2, 0.8, 0.5)
    assert same_space(derived, direct)
    derived, direct = reiterate(mixed, 0.0, 1.0, 0.3)
    assert same_space(derived, direct)
    assert same_space(direct, lattice_theta_space(mixed, 0.3))
    derived, direct = reiterate(mixed, 0.4, 0.9, 0.0)
    assert same_space(derived, lattice_theta_space(mixed, 0.4))
