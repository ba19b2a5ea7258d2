"""Interpolation functors on finite-dimensional couples.

The complex method is approximated from above by Laurent polynomials on the
annulus; for couples of weighted lp spaces the closed-form theta space is the
oracle every optimized value is compared against.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy import optimize
from scipy.special import logsumexp, softmax

from source.annulus_interpolation import (
    RADII,
    AnnulusSpec,
    LaurentFamily,
    boundary_norm_F,
    spec_for,
)
from source.config_interpolation import CERTIFY_GRID, DEFAULT_K, SEED, SOLVER
from source.errors_interpolation import UnsupportedKindError, check_dim
from source.solvers_interpolation import NormBracket, minimize_subgradient
from source.spaces_interpolation import (
    Couple,
    NormKind,
    NormModel,
    derive_seed,
    dual_space,
    lp_rows,
    norm,
    norming_functional,
    split_norm,
    sum_norm,
    torch_norm_rows,
)

logger = logging.getLogger(__name__)


def _check_theta(theta: float, open_interval: bool = False) -> float:
    theta = float(theta)
    if open_interval and not 0.0 < theta < 1.0:
        raise ValueError(f'theta must lie in (0, 1), got {theta}')
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f'theta must lie in [0, 1], got {theta}')
    return theta


def _require_lattice(couple: Couple, what: str) -> None:
    if not couple.is_lattice:
        raise UnsupportedKindError(f'{what} needs a couple of weighted lp spaces')


@dataclass(frozen=True)
class ThetaSpec:
    theta0: float
    theta1: float
    sigma: float

    def __post_init__(self) -> None:
        for name in ('theta0', 'theta1', 'sigma'):
            object.__setattr__(self, name, _check_theta(getattr(self, name)))

    @property
    def s(self) -> float:
        return (1.0 - self.sigma) * self.theta0 + self.sigma * self.theta1


@dataclass(frozen=True, eq=False)
class Representation:
    """x = sum_k x_k over the window [-K, K], ``terms[k + K] = x_k``."""
    theta: float
    terms: np.ndarray

    def __post_init__(self) -> None:
        _check_theta(self.theta)
        terms = np.atleast_2d(np.asarray(self.terms, dtype=np.complex128))
        if terms.shape[0] % 2 != 1:
            raise ValueError(f'representation needs 2K+1 terms, got {terms.shape[0]}')
        terms = terms.copy()
        terms.setflags(write=False)
        object.__setattr__(self, 'terms', terms)

    @property
    def K(self) -> int:
        return (self.terms.shape[0] - 1) // 2

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    @property
    def represented(self) -> np.ndarray:
        return self.terms.sum(axis=0)


@dataclass(frozen=True, eq=False)
class Factorization:
    """|x| = lam * x0^(1-theta) * x1^theta with ||x0||_X0 <= 1 and ||x1||_X1 <= 1."""
    lam: float
    x0: np.ndarray
    x1: np.ndarray


def k_functional(couple: Couple, x, t: float) -> NormBracket:
    return split_norm(couple, x, t)


def _inverse(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def lattice_theta_space(couple: Couple, theta: float) -> NormModel:
    theta = _check_theta(theta)
    _require_lattice(couple, 'the lattice theta space')
    if theta == 0.0:
        return couple.space0
    if theta == 1.0:
        return couple.space1
    s0, s1 = couple.space0, couple.space1
    if s0.p == s1.p:
        p = s0.p
    else:
        inverse = (1.0 - theta) * _inverse(s0.p) + theta * _inverse(s1.p)
        p = math.inf if inverse == 0.0 else 1.0 / inverse
    weights = np.exp((1.0 - theta) * np.log(s0.weights) + theta * np.log(s1.weights))
    return NormModel(NormKind.WEIGHTED_LP, couple.dim, p=p, weights=weights)


def lattice_theta_norm(couple: Couple, theta: float, x) -> float:
    return norm(lattice_theta_space(couple, theta), x)


def product_factorization(couple: Couple, theta: float, x) -> Factorization:
    theta = _check_theta(theta)
    _require_lattice(couple, 'product factorization')
    x = np.asarray(x, dtype=np.complex128)
    check_dim(couple.dim, x.size)
    s0, s1 = couple.space0, couple.space1
    space = lattice_theta_space(couple, theta)
    lam = norm(space, x)
    if lam == 0.0:
        ones = np.ones(couple.dim)
        return Factorization(0.0, ones / norm(s0, ones), ones / norm(s1, ones))

    u = space.weights * np.abs(x) / lam
    if math.isinf(space.p):
        e0 = 1.0 if math.isinf(s0.p) else 0.0
        e1 = 1.0 if math.isinf(s1.p) else 0.0
    else:
        e0, e1 = space.p * _inverse(s0.p), space.p * _inverse(s1.p)
    x0 = u ** e0 / s0.weights
    x1 = u ** e1 / s1.weights
    # an endpoint carrying exponent zero is free; keep it inside its unit ball
    if theta == 1.0:
        x0 = x0 / max(1.0, norm(s0, x0))
    if theta == 0.0:
        x1 = x1 / max(1.0, norm(s1, x1))
    return Factorization(lam, x0, x1)


def _two_term_weights(couple: Couple, theta: float, x: np.ndarray, K: int) -> np.ndarray:
    """Split |x_i| between the integer shifts floor(s_i), floor(s_i) + 1 around s_i = log(x1_i / x0_i).

    The split balances the two boundary circles of each coordinate.
    """
    factor = product_factorization(couple, theta, x)
    mod = np.abs(x)
    table = np.zeros((2 * K + 1, x.size))
    for i in np.flatnonzero(mod > 0):
        s = math.log(factor.x1[i] / factor.x0[i])
        k = math.floor(s)
        if k < -K:
            table[0, i] = mod[i]
            continue
        if k >= K:
            table[2 * K, i] = mod[i]
            continue
        delta = s - k
        a0, a1 = math.exp(theta * delta), math.exp(-(1.0 - theta) * delta)
        b0, b1 = math.exp(theta * (delta - 1.0)), math.exp((1.0 - theta) * (1.0 - delta))
        denominator = (a0 - a1) - (b0 - b1)
        mu = min(1.0, max(0.0, (a0 - a1) / denominator)) if denominator > 0 else 0.0
        table[k + K, i] = mod[i] * (1.0 - mu)
        table[k + K + 1, i] += mod[i] * mu
    return table


def _phase(x: np.ndarray) -> np.ndarray:
    mod = np.abs(x)
    return np.where(mod > 0, x / np.where(mod > 0, mod, 1.0), 1.0)


def product_witness(couple: Couple, theta: float, x, K: int) -> LaurentFamily:
    """Laurent family through x at e^theta built from the product factorization."""
    x = np.asarray(x, dtype=np.complex128)
    ks = np.arange(-K, K + 1)
    terms = _two_term_weights(couple, theta, x, K) * _phase(x)
    return LaurentFamily(terms * np.exp(-theta * ks)[:, None])


def _certify(f: LaurentFamily, couple: Couple, spec: AnnulusSpec) -> tuple[float, float]:
    grid = boundary_norm_F(f, couple, spec)
    return grid.value + grid.slack, grid.value


def _coefficient_scale(ks: np.ndarray) -> np.ndarray:
    # r^k * scale_k <= 1 on both circles
    return np.exp(-np.maximum(ks, 0).astype(np.float64))


def _refine_family(
    couple: Couple,
    theta: float,
    x: np.ndarray,
    seeds: list[LaurentFamily],
    K: int,
    spec: AnnulusSpec,
    solver_cfg: dict,
):
    n = couple.dim
    ks = np.arange(-K, K + 1)
    free = ks != 0
    scale = _coefficient_scale(ks)
    at_theta = np.exp(theta * ks) * scale
    g = torch.tensor(at_theta[free])

    angles = spec.angles
    bases = []
    for radius in RADII:
        basis = (radius ** ks * scale)[None, :] * np.exp(1j * np.outer(angles, ks))
        bases.append((torch.tensor(basis.real.copy()), torch.tensor(basis.imag.copy())))
    xr, xi = torch.tensor(x.real.copy()), torch.tensor(x.imag.copy())

    def assemble(z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        table = z.view(2 * K, n, 2)
        fr, fi = table[..., 0], table[..., 1]
        c0r = (xr - g @ fr)[None]
        c0i = (xi - g @ fi)[None]
        return torch.cat([fr[:K], c0r, fr[K:]]), torch.cat([fi[:K], c0i, fi[K:]])

    def objective(z: torch.Tensor) -> torch.Tensor:
        cr, ci = assemble(z)
        peaks = []
        for space, (br, bi) in zip((couple.space0, couple.space1), bases):
            vr = br @ cr - bi @ ci
            vi = br @ ci + bi @ cr
            peaks.append(torch_norm_rows(space, vr, vi).amax())
        return torch.maximum(peaks[0], peaks[1])

    def flatten(f: LaurentFamily) -> np.ndarray:
        d = f.padded(K).coefficients[free] / scale[free][:, None]
        return np.stack([d.real, d.imag], axis=-1).reshape(-1)

    def unflatten(z: np.ndarray) -> LaurentFamily:
        d = z.reshape(2 * K, n, 2)
        d = d[..., 0] + 1j * d[..., 1]
        table = np.zeros((2 * K + 1, n), dtype=np.complex128)
        table[free] = d * scale[free][:, None]
        table[K] = x - at_theta[free] @ d
        return LaurentFamily(table)

    rng = np.random.default_rng(derive_seed(SEED, K, n))
    starts = [flatten(f) for f in seeds[:2]]
    base = starts[0]
    spread = max(1e-3, float(np.abs(base).max(initial=0.0)))
    while len(starts) < solver_cfg.get('multistarts', SOLVER['multistarts']):
        starts.append(base + 0.05 * spread * rng.standard_normal(base.size))

    options = {key: solver_cfg[key] for key in ('max_iter', 'window', 'rel_tol', 'lr0', 'print_every') if key in solver_cfg}
    result = minimize_subgradient(objective, starts, scale=float(np.linalg.norm(x)), **options)
    return unflatten(result.x), result


def complex_norm_upper(
    couple: Couple,
    theta: float,
    x,
    K: int = DEFAULT_K,
    spec: AnnulusSpec | None = None,
    solver_cfg: dict | None = None,
    warm_start: NormBracket | None = None,
) -> NormBracket:
    """Upper bound for the complex-method norm from a certified Laurent family.

    The returned ``upper`` is the grid maximum of the witness on a fine
    certification grid plus its Lipschitz slack, so it bounds the exact
    boundary norm of the witness from above.
    """
    theta = _check_theta(theta)
    x = np.asarray(x, dtype=np.complex128)
    check_dim(couple.dim, x.size)
    if K < 0:
        raise ValueError(f'K must be nonnegative, got {K}')
    spec = spec_for(K) if spec is None else spec
    spec.check(K)
    solver_cfg = {**SOLVER, **(solver_cfg or {})}

    if not np.any(x):
        return NormBracket.exact(0.0, solver='zero', witness=LaurentFamily.zeros(K, couple.dim))
    if theta in (0.0, 1.0):
        endpoint = couple[int(theta)]
        return NormBracket.exact(norm(endpoint, x), solver='endpoint', witness=LaurentFamily.constant(x, K))

    certify_spec = AnnulusSpec(max(CERTIFY_GRID, spec_for(K).M))
    seeds = [LaurentFamily.constant(x, K)]
    if couple.is_lattice:
        seeds.insert(0, product_witness(couple, theta, x, K))
    for k in (-2, -1, 1, 2):
        if abs(k) <= K:
            seeds.append(LaurentFamily.monomial(x * math.exp(-k * theta), k, K))
    ranked = sorted(seeds, key=lambda f: _certify(f, couple, certify_spec)[0])
    if warm_start is not None and warm_start.witness is not None and warm_start.witness.K <= K:
        # the coarser witness, zero padded, is the first start of the refinement
        ranked.insert(0, warm_start.witness.padded(K))

    candidates = list(ranked)
    iterations, converged = 0, True
    if K > 0:
        refined, result = _refine_family(couple, theta, x, ranked, K, spec, solver_cfg)
        candidates.insert(0, refined)
        iterations, converged = result.iterations, result.converged

    certified = [_certify(f, couple, certify_spec) for f in candidates]
    best = int(np.argmin([c[0] for c in certified]))
    upper, grid_value = certified[best]
    witness = candidates[best]
    refined_upper = certified[0][0] if K > 0 else upper

    if couple.is_lattice:
        lower = lattice_theta_norm(couple, theta, x)
    else:
        lower = sum_norm(couple, x).lower
    logger.debug('complex norm K=%d theta=%.3g: [%.10g, %.10g]', K, theta, lower, upper)
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        iterations=iterations,
        converged=converged,
        solver='subgradient',
        witness=witness,
        extra={'K': K, 'M': spec.M, 'grid_value': grid_value, 'refined_upper': refined_upper},
    )


def _product_lower(couple: Couple, theta: float, mod: np.ndarray) -> float:
    """Holder bound sum_i |x_i| y0_i^(1-theta) y1_i^theta over dual unit vectors y0, y1."""
    dual = Couple(dual_space(couple.space0), dual_space(couple.space1))
    y = np.abs(norming_functional(lattice_theta_space(couple, theta), mod))
    factor = product_factorization(dual, theta, y)
    y0 = factor.x0 / max(1.0, norm(dual.space0, factor.x0))
    y1 = factor.x1 / max(1.0, norm(dual.space1, factor.x1))
    return float(mod @ (y0 ** (1.0 - theta) * y1 ** theta))


def calderon_product_norm(couple: Couple, theta: float, x) -> NormBracket:
    """inf{lam : |x| <= lam |x0|^(1-theta) |x1|^theta, ||x0||_X0 <= 1, ||x1||_X1 <= 1}.

    Solved by SLSQP in log coordinates y_j = log x_j on the support of x.
    """
    theta = _check_theta(theta)
    _require_lattice(couple, 'the Calderon product')
    x = np.asarray(x, dtype=np.complex128)
    check_dim(couple.dim, x.size)
    mod = np.abs(x)
    if not np.any(mod):
        return NormBracket.exact(0.0, witness={'x0': np.zeros(couple.dim), 'x1': np.zeros(couple.dim)})
    if theta in (0.0, 1.0):
        endpoint = couple[int(theta)]
        value = norm(endpoint, x)
        unit = mod / value
        return NormBracket.exact(value, solver='endpoint', witness={'x0': unit, 'x1': unit})

    support = np.flatnonzero(mod > 0)
    s = support.size
    log_x = np.log(mod[support])
    spaces = (couple.space0, couple.space1)
    log_w = [np.log(space.weights[support]) for space in spaces]

    constraints = [{
        'type': 'ineq',
        'fun': lambda z: z[-1] - log_x + (1.0 - theta) * z[:s] + theta * z[s:2 * s],
        'jac': lambda z: np.hstack([(1.0 - theta) * np.eye(s), theta * np.eye(s), np.ones((s, 1))]),
    }]
    for j, space in enumerate(spaces):
        block = slice(j * s, (j + 1) * s)
        if math.isinf(space.p):
            rows = np.zeros((s, 2 * s + 1))
            rows[:, block] = -np.eye(s)
            constraints.append({
                'type': 'ineq',
                'fun': lambda z, lw=log_w[j], b=block: -(lw + z[b]),
                'jac': lambda z, r=rows: r,
            })
        else:
            p = space.p

            def fun(z, lw=log_w[j], b=block, p=p):
                return -logsumexp(p * (lw + z[b])) / p

            def jac(z, lw=log_w[j], b=block, p=p):
                row = np.zeros(2 * s + 1)
                row[b] = -softmax(p * (lw + z[b]))
                return row

            constraints.append({'type': 'ineq', 'fun': fun, 'jac': jac})

    start = []
    for j, space in enumerate(spaces):
        start.append(np.full(s, -math.log(lp_rows(space.weights[support], space.p))))
    tau = float(np.max(log_x - (1.0 - theta) * start[0] - theta * start[1]))
    z0 = np.concatenate([start[0], start[1], [tau]])
    cost = np.zeros(2 * s + 1)
    cost[-1] = 1.0
    res = optimize.minimize(
        lambda z: z[-1],
        z0,
        jac=lambda z: cost,
        method='SLSQP',
        constraints=constraints,
        options={'ftol': 1e-12, 'maxiter': 500},
    )

    factors = []
    for j, space in enumerate(spaces):
        y = np.zeros(couple.dim)
        y[support] = np.exp(np.clip(res.x[j * s:(j + 1) * s], -700.0, 700.0))
        factors.append(y / norm(space, y))
    log_ratio = log_x - (1.0 - theta) * np.log(factors[0][support]) - theta * np.log(factors[1][support])
    upper = float(np.exp(log_ratio.max()))
    closed = product_factorization(couple, theta, mod)
    closed_ratio = log_x - (1.0 - theta) * np.log(closed.x0[support]) - theta * np.log(closed.x1[support])
    if float(np.exp(closed_ratio.max())) < upper:
        upper = float(np.exp(closed_ratio.max()))
        factors = [closed.x0, closed.x1]
    lower = _product_lower(couple, theta, mod)
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        iterations=int(res.nit),
        converged=bool(res.success),
        solver='slsqp',
        witness={'x0': factors[0], 'x1': factors[1]},
    )


def peetre_sides(couple: Couple, representation: Representation) -> tuple[float, float]:
    """S_j = sup over |lambda_k| <= 1 of ||sum_k lambda_k e^((j - theta) k) x_k||_Xj.

    Lattices: the sup aligns phases coordinatewise. Polytopes: for each row a_l
    the sup of |sum_k lambda_k c_k <a_l, x_k>| is sum_k c_k |<a_l, x_k>|, and
    the max over rows commutes with the sup over lambda.
    """
    theta, terms, ks = representation.theta, representation.terms, representation.ks
    sides = []
    for j, space in enumerate((couple.space0, couple.space1)):
        factors = np.exp((j - theta) * ks)
        if space.is_lattice:
            aligned = factors @ np.abs(terms)
            sides.append(float(lp_rows(space.weights * aligned, space.p)))
        else:
            images = np.abs(terms @ space.functionals.T)
            sides.append(float((factors @ images).max()))
    return sides[0], sides[1]


def _torch_sides(couple: Couple, theta: float, K: int, re: torch.Tensor, im: torch.Tensor) -> torch.Tensor:
    ks = np.arange(-K, K + 1)
    peaks = []
    for j, space in enumerate((couple.space0, couple.space1)):
        factors = torch.tensor(np.exp((j - theta) * ks))
        if space.is_lattice:
            aligned = factors @ torch.sqrt(re ** 2 + im ** 2 + 1e-30)
            weighted = torch.tensor(space.weights.copy()) * aligned
            peaks.append(torch.linalg.vector_norm(weighted, ord=space.p))
        else:
            ar = torch.tensor(space.functionals.real.copy())
            ai = torch.tensor(space.functionals.imag.copy())
            fr = re @ ar.T - im @ ai.T
            fi = re @ ai.T + im @ ar.T
            peaks.append((factors @ torch.sqrt(fr ** 2 + fi ** 2 + 1e-30)).amax())
    return torch.maximum(peaks[0], peaks[1])


def _single_terms(theta: float, x: np.ndarray, K: int) -> list[Representation]:
    reps = []
    for k in range(-K, K + 1):
        terms = np.zeros((2 * K + 1, x.size), dtype=np.complex128)
        terms[k + K] = x
        reps.append(Representation(theta, terms))
    return reps


def peetre_norm_upper(couple: Couple, theta: float, x, K: int = 12, solver_cfg: dict | None = None) -> NormBracket:
    theta = _check_theta(theta, open_interval=True)
    x = np.asarray(x, dtype=np.complex128)
    check_dim(couple.dim, x.size)
    if K < 0:
        raise ValueError(f'K must be nonnegative, got {K}')
    n = couple.dim
    if not np.any(x):
        return NormBracket.exact(0.0, solver='zero', witness=Representation(theta, np.zeros((2 * K + 1, n))))
    solver_cfg = {**SOLVER, **(solver_cfg or {})}

    seeds = _single_terms(theta, x, K)
    if couple.is_lattice:
        seeds.insert(0, Representation(theta, _two_term_weights(couple, theta, x, K) * _phase(x)))
    ranked = sorted(seeds, key=lambda r: max(peetre_sides(couple, r)))

    ks = np.arange(-K, K + 1)
    free = ks != 0
    scale = np.exp(theta * ks - np.maximum(ks, 0))
    candidates = list(ranked)
    iterations, converged = 0, True
    if K > 0:
        xr, xi = torch.tensor(x.real.copy()), torch.tensor(x.imag.copy())
        step = torch.tensor(scale[free])

        def assemble(z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
            table = z.view(2 * K, n, 2)
            fr, fi = table[..., 0] * step[:, None], table[..., 1] * step[:, None]
            c0r, c0i = (xr - fr.sum(0))[None], (xi - fi.sum(0))[None]
            return torch.cat([fr[:K], c0r, fr[K:]]), torch.cat([fi[:K], c0i, fi[K:]])

        def objective(z: torch.Tensor) -> torch.Tensor:
            return _torch_sides(couple, theta, K, *assemble(z))

        def flatten(r: Representation) -> np.ndarray:
            d = r.terms[free] / scale[free][:, None]
            return np.stack([d.real, d.imag], axis=-1).reshape(-1)

        rng = np.random.default_rng(derive_seed(SEED, K, n, 1))
        starts = [flatten(r) for r in ranked[:2]]
        spread = max(1e-3, float(np.abs(starts[0]).max(initial=0.0)))
        while len(starts) < solver_cfg['multistarts']:
            starts.append(starts[0] + 0.05 * spread * rng.standard_normal(starts[0].size))
        options = {key: solver_cfg[key] for key in ('max_iter', 'window', 'rel_tol', 'lr0', 'print_every')}
        result = minimize_subgradient(objective, starts, scale=float(np.linalg.norm(x)), **options)

        d = result.x.reshape(2 * K, n, 2)
        terms = np.zeros((2 * K + 1, n), dtype=np.complex128)
        terms[free] = (d[..., 0] + 1j * d[..., 1]) * scale[free][:, None]
        terms[K] = x - terms[free].sum(axis=0)
        candidates.insert(0, Representation(theta, terms))
        iterations, converged = result.iterations, result.converged

    values = [max(peetre_sides(couple, r)) for r in candidates]
    best = int(np.argmin(values))
    upper = values[best]
    if couple.is_lattice:
        lower = lattice_theta_norm(couple, theta, x)
    else:
        lower = sum_norm(couple, x).lower
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        iterations=iterations,
        converged=converged,
        solver='subgradient',
        witness=candidates[best],
        extra={'K': K},
    )


def gp_sides(couple: Couple, representation: Representation) -> tuple[float, float]:
    """Peetre sides maximized over finite subsets F of the window.

    Every summand of the aligned sums is nonnegative, so the full window is
    the maximizing subset; lambda_k = 0 already covers the others.
    """
    return peetre_sides(couple, representation)


def gp_norm_upper(couple: Couple, theta: float, x, K: int = 12, solver_cfg: dict | None = None) -> NormBracket:
    bracket = peetre_norm_upper(couple, theta, x, K, solver_cfg)
    if bracket.witness is not None and np.any(bracket.witness.terms):
        upper = max(gp_sides(couple, bracket.witness))
    else:
        upper = bracket.upper
    return NormBracket(
        lower=min(bracket.lower, upper),
        upper=upper,
        iterations=bracket.iterations,
        converged=bracket.converged,
        solver='gp',
        witness=bracket.witness,
        extra=dict(bracket.extra),
    )


def reiterate(couple: Couple, theta0: float, theta1: float, sigma: float) -> tuple[NormModel, NormModel]:
    """([X_theta0, X_theta1]_sigma, X_s) with s = (1 - sigma) theta0 + sigma theta1."""
    spec = ThetaSpec(theta0, theta1, sigma)
    derived = Couple(lattice_theta_space(couple, spec.theta0), lattice_theta_space(couple, spec.theta1))
    return lattice_theta_space(derived, spec.sigma), lattice_theta_space(couple, spec.s)
