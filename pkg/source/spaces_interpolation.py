import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import torch
from scipy import optimize

from source.config_interpolation import LOG_WEIGHT_RANGE, P_VALUES, SEED, SOLVER
from source.errors_interpolation import ConfigError, UnsupportedKindError, check_dim
from source.solvers_interpolation import NormBracket, minimize_subgradient

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


class NormKind(str, Enum):
    WEIGHTED_LP = 'weighted_lp'
    POLYTOPE = 'polytope'


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class NormModel:
    """A norm on C^n.

    Weighted lp: ||x|| = (sum_i (w_i |x_i|)^p)^(1/p), max over i when p is inf.
    Polytope: ||x|| = max_j |sum_i a_ji x_i| for the rows a_j of ``functionals``.
    """
    kind: NormKind
    dim: int
    p: float = 2.0
    weights: np.ndarray | None = None
    functionals: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f'dimension must be positive, got {self.dim}')
        if self.kind == NormKind.WEIGHTED_LP:
            p = float(self.p)
            if math.isnan(p) or p < 1.0:
                raise ValueError(f'exponent must satisfy p >= 1, got {self.p}')
            weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            check_dim(self.dim, weights.size, 'weights')
            if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
                raise ValueError(f'weights must be positive and finite, got {weights}')
            object.__setattr__(self, 'p', p)
            object.__setattr__(self, 'weights', _frozen(weights))
            object.__setattr__(self, 'functionals', None)
        elif self.kind == NormKind.POLYTOPE:
            functionals = np.atleast_2d(np.asarray(self.functionals, dtype=np.complex128))
            check_dim(self.dim, functionals.shape[1], 'functionals')
            if not np.all(np.isfinite(functionals)):
                raise ValueError('polytope functionals must be finite')
            if np.linalg.matrix_rank(functionals) < self.dim:
                raise ValueError(f'{functionals.shape[0]} functionals do not span C^{self.dim}')
            object.__setattr__(self, 'p', math.inf)
            object.__setattr__(self, 'weights', None)
            object.__setattr__(self, 'functionals', _frozen(functionals))
        else:
            raise UnsupportedKindError(f'unknown norm kind {self.kind!r}')

    @property
    def is_lattice(self) -> bool:
        return self.kind == NormKind.WEIGHTED_LP

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormModel) or other.kind != self.kind or other.dim != self.dim:
            return False
        if self.is_lattice:
            return self.p == other.p and np.array_equal(self.weights, other.weights)
        return np.array_equal(self.functionals, other.functionals)

    __hash__ = None

    def __repr__(self) -> str:
        if self.is_lattice:
            return f'NormModel(weighted_lp, dim={self.dim}, p={self.p}, weights={self.weights.tolist()})'
        return f'NormModel(polytope, dim={self.dim}, functionals={self.functionals.shape[0]})'


def weighted_lp(p: float, weights) -> NormModel:
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    return NormModel(NormKind.WEIGHTED_LP, weights.size, p=p, weights=weights)


def polytope(functionals) -> NormModel:
    functionals = np.atleast_2d(np.asarray(functionals, dtype=np.complex128))
    return NormModel(NormKind.POLYTOPE, functionals.shape[1], functionals=functionals)


@dataclass(frozen=True)
class Couple:
    space0: NormModel
    space1: NormModel

    def __post_init__(self) -> None:
        check_dim(self.space0.dim, self.space1.dim, 'space1')

    @property
    def dim(self) -> int:
        return self.space0.dim

    @property
    def is_lattice(self) -> bool:
        return self.space0.is_lattice and self.space1.is_lattice

    def __getitem__(self, j: int) -> NormModel:
        return (self.space0, self.space1)[j]


def same_space(a: NormModel, b: NormModel, rtol: float = 1e-12) -> bool:
    """Parameter equality up to ``rtol``; exponents are compared through 1/p."""
    if a.kind != b.kind or a.dim != b.dim:
        return False
    if not a.is_lattice:
        return bool(np.allclose(a.functionals, b.functionals, rtol=rtol, atol=0.0))
    return abs(1.0 / a.p - 1.0 / b.p) <= rtol and bool(np.allclose(a.weights, b.weights, rtol=rtol, atol=0.0))


def conjugate_exponent(p: float) -> float:
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def lp_rows(values: np.ndarray, p: float) -> np.ndarray:
    """lp norm over the last axis of a nonnegative array."""
    values = np.asarray(values, dtype=np.float64)
    if math.isinf(p):
        return values.max(axis=-1)
    if p == 1.0:
        return values.sum(axis=-1)
    scale = values.max(axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return scale[..., 0] * np.sum((values / safe) ** p, axis=-1) ** (1.0 / p)


def norm_rows(space: NormModel, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.complex128)
    check_dim(space.dim, values.shape[-1])
    if space.is_lattice:
        return lp_rows(space.weights * np.abs(values), space.p)
    return np.abs(values @ space.functionals.T).max(axis=-1)


def norm(space: NormModel, x) -> float:
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise ValueError(f'norm expects a vector, got shape {x.shape}')
    return float(norm_rows(space, x))


def intersection_norm(couple: Couple, x) -> float:
    return max(norm(couple.space0, x), norm(couple.space1, x))


def pairing(x, y) -> complex:
    """<x, y> = sum_i x_i conj(y_i)."""
    return complex(np.vdot(np.asarray(y, dtype=np.complex128), np.asarray(x, dtype=np.complex128)))


def dual_space(space: NormModel) -> NormModel:
    if not space.is_lattice:
        raise UnsupportedKindError('duals of polytope norms are not supported')
    return NormModel(NormKind.WEIGHTED_LP, space.dim, p=conjugate_exponent(space.p), weights=1.0 / space.weights)


def _polytope_dual_upper(space: NormModel, y: np.ndarray) -> float:
    # ||y||_* <= sum_j |mu_j| whenever sum_j mu_j a_j = conj(y)
    a = space.functionals
    m = a.shape[0]
    ar, ai = a.real.T, a.imag.T
    target = np.concatenate([y.real, -y.imag])
    block = np.block([[ar, -ar, -ai, ai], [ai, -ai, ar, -ar]])
    res = optimize.linprog(np.ones(4 * m), A_eq=block, b_eq=target, bounds=(0, None), method='highs')
    if res.status != 0:
        return math.inf
    mr = res.x[:m] - res.x[m:2 * m]
    mi = res.x[2 * m:3 * m] - res.x[3 * m:]
    residual = np.abs(a.T @ (mr + 1j * mi) - np.conj(y)).max()
    if residual > 1e-9 * max(1.0, np.abs(y).max()):
        return math.inf
    return float(np.abs(mr + 1j * mi).sum() * (1.0 + 1e-12))


def dual_norm_upper(space: NormModel, y) -> float:
    """Exact dual norm for lattices, a certified upper bound for polytopes."""
    y = np.asarray(y, dtype=np.complex128)
    check_dim(space.dim, y.size)
    if space.is_lattice:
        return float(lp_rows(np.abs(y) / space.weights, conjugate_exponent(space.p)))
    return _polytope_dual_upper(space, y)


def norming_functional(space: NormModel, x) -> np.ndarray:
    """A y with dual norm at most 1 and <x, y> = ||x||."""
    x = np.asarray(x, dtype=np.complex128)
    if not np.any(x):
        return np.zeros_like(x)
    phase = np.where(np.abs(x) > 0, x / np.where(np.abs(x) > 0, np.abs(x), 1.0), 1.0)
    if not space.is_lattice:
        values = space.functionals @ x
        j = int(np.argmax(np.abs(values)))
        return np.conj(space.functionals[j]) * (values[j] / abs(values[j]))
    v = space.weights * np.abs(x)
    if space.p == 1.0:
        return space.weights * phase
    if math.isinf(space.p):
        y = np.zeros_like(x)
        i = int(np.argmax(v))
        y[i] = space.weights[i] * phase[i]
        return y
    return space.weights * phase * (v / lp_rows(v, space.p)) ** (space.p - 1.0)


def _linear_rows(p, u, c, sign, size, bound_index, bound_value):
    n = u.size
    if p == 1.0:
        row = np.zeros(size)
        row[:n] = sign * u
        rhs = -float(u @ c)
        if bound_index is None:
            rhs += bound_value
        else:
            row[bound_index] = -1.0
        return row[None, :], np.array([rhs])
    rows = np.zeros((n, size))
    rows[np.arange(n), np.arange(n)] = sign * u
    rhs = -u * c
    if bound_index is None:
        rhs = rhs + bound_value
    else:
        rows[:, bound_index] = -1.0
    return rows, rhs


def _smooth_constraint(p, u, c, sign, size, bound_index, bound_value) -> dict:
    n = u.size

    def inner(z):
        return np.maximum(u * (c + sign * z[:n]), 0.0)

    def fun(z):
        bound = z[bound_index] if bound_index is not None else bound_value
        return np.array([bound - lp_rows(inner(z), p)])

    def jac(z):
        v = inner(z)
        nv = lp_rows(v, p)
        g = np.zeros(size)
        if nv > 0:
            g[:n] = -sign * u * (v / nv) ** (p - 1.0)
        if bound_index is not None:
            g[bound_index] = 1.0
        return g[None, :]

    return {'type': 'ineq', 'fun': fun, 'jac': jac}


def solve_ball_program(cost: np.ndarray, balls: list[tuple], bounds: list[tuple], start: np.ndarray):
    """Minimise cost @ z subject to ||u * (c + sign * z[:n])||_p <= bound for each ball.

    A ball is (p, u, c, sign, bound_index, bound_value); the bound is z[bound_index]
    when the index is given. All lp balls with p in {1, inf} become linear rows:
    the problem goes to ``linprog`` when every ball is linear, otherwise to SLSQP.
    """
    size = cost.size
    rows, rhs, smooth = [], [], []
    for p, u, c, sign, bound_index, bound_value in balls:
        if p == 1.0 or math.isinf(p):
            r, b = _linear_rows(p, u, c, sign, size, bound_index, bound_value)
            rows.append(r)
            rhs.append(b)
        else:
            smooth.append(_smooth_constraint(p, u, c, sign, size, bound_index, bound_value))
    a_ub = np.vstack(rows) if rows else None
    b_ub = np.concatenate(rhs) if rhs else None

    if not smooth:
        res = optimize.linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method='highs')
        if res.status != 0 or res.x is None:
            return start, False, int(getattr(res, 'nit', 0))
        return res.x, True, int(res.nit)

    constraints = list(smooth)
    if a_ub is not None:
        constraints.append({'type': 'ineq', 'fun': lambda z: b_ub - a_ub @ z, 'jac': lambda z: -a_ub})
    res = optimize.minimize(
        lambda z: float(cost @ z),
        start,
        jac=lambda z: cost,
        method='SLSQP',
        bounds=bounds,
        constraints=constraints,
        options={'ftol': 1e-12, 'maxiter': 500},
    )
    return res.x, bool(res.success), int(res.nit)


def _lattice_split(couple: Couple, x: np.ndarray, t: float) -> NormBracket:
    s0, s1 = couple.space0, couple.space1
    n = x.size
    mod = np.abs(x)
    w0, w1 = s0.weights, s1.weights

    def cost_of(a: np.ndarray) -> float:
        return float(lp_rows(w0 * a, s0.p) + t * lp_rows(w1 * (mod - a), s1.p))

    half = mod / 2.0
    primal_start = np.concatenate([half, [lp_rows(w0 * half, s0.p), lp_rows(w1 * half, s1.p)]])
    z, ok_primal, it_primal = solve_ball_program(
        cost=np.concatenate([np.zeros(n), [1.0, t]]),
        balls=[(s0.p, w0, np.zeros(n), 1.0, n, None), (s1.p, w1, mod, -1.0, n + 1, None)],
        bounds=[(0.0, float(m)) for m in mod] + [(0.0, None), (0.0, None)],
        start=primal_start,
    )
    candidates = [np.clip(z[:n], 0.0, mod), mod, np.zeros(n), np.where(w0 <= t * w1, mod, 0.0)]
    costs = [cost_of(a) for a in candidates]
    best = int(np.argmin(costs))
    upper = costs[best]

    q0, q1 = conjugate_exponent(s0.p), conjugate_exponent(s1.p)
    b, ok_dual, it_dual = solve_ball_program(
        cost=-mod,
        balls=[(q0, 1.0 / w0, np.zeros(n), 1.0, None, 1.0), (q1, 1.0 / w1, np.zeros(n), 1.0, None, t)],
        bounds=[(0.0, None)] * n,
        start=np.minimum(w0, t * w1) / n,
    )
    b = np.maximum(b, 0.0)
    scale = max(lp_rows(b / w0, q0), lp_rows(b / w1, q1) / t)
    lower = float(b @ mod / scale) if scale > 0 else 0.0

    phase = np.where(mod > 0, x / np.where(mod > 0, mod, 1.0), 1.0)
    x0 = candidates[best] * phase
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        iterations=it_primal + it_dual,
        converged=ok_primal and ok_dual,
        solver='lp' if {s0.p, s1.p} <= {1.0, math.inf} else 'slsqp',
        witness={'x0': x0, 'x1': x - x0},
    )


def torch_norm_rows(space: NormModel, re: torch.Tensor, im: torch.Tensor) -> torch.Tensor:
    if space.is_lattice:
        modulus = torch.sqrt(re ** 2 + im ** 2 + 1e-30)
        weighted = torch.tensor(space.weights.copy()) * modulus
        return torch.linalg.vector_norm(weighted, ord=space.p, dim=-1)
    ar = torch.tensor(space.functionals.real.copy())
    ai = torch.tensor(space.functionals.imag.copy())
    fr = re @ ar.T - im @ ai.T
    fi = re @ ai.T + im @ ar.T
    return torch.sqrt(fr ** 2 + fi ** 2 + 1e-30).amax(dim=-1)


def _general_split(couple: Couple, x: np.ndarray, t: float) -> NormBracket:
    s0, s1 = couple.space0, couple.space1
    n = x.size
    xr = torch.as_tensor(x.real)
    xi = torch.as_tensor(x.imag)

    def objective(z: torch.Tensor) -> torch.Tensor:
        return torch_norm_rows(s0, z[:n], z[n:]) + t * torch_norm_rows(s1, xr - z[:n], xi - z[n:])

    def exact(x0: np.ndarray) -> float:
        return norm(s0, x0) + t * norm(s1, x - x0)

    flat = np.concatenate([x.real, x.imag])
    rng = np.random.default_rng(SEED)
    starts = [flat, np.zeros(2 * n), flat / 2.0]
    scale = float(np.linalg.norm(flat))
    starts += [flat * rng.uniform(0.0, 1.0, 2 * n) for _ in range(max(0, SOLVER['multistarts'] - 3))]
    result = minimize_subgradient(objective, starts, scale=scale)

    candidates = [result.x[:n] + 1j * result.x[n:], x, np.zeros(n, dtype=np.complex128)]
    costs = [exact(c) for c in candidates]
    best = int(np.argmin(costs))
    upper = costs[best]

    duals = [norming_functional(s0, x), norming_functional(s1, x)]
    for space in (s0, s1):
        if not space.is_lattice:
            duals.extend(np.conj(space.functionals))
    lower = 0.0
    for y in duals:
        scale_y = max(dual_norm_upper(s0, y), dual_norm_upper(s1, y) / t)
        if scale_y > 0 and math.isfinite(scale_y):
            lower = max(lower, abs(pairing(x, y)) / scale_y)

    x0 = candidates[best]
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        iterations=result.iterations,
        converged=result.converged,
        solver='subgradient',
        witness={'x0': x0, 'x1': x - x0},
    )


def split_norm(couple: Couple, x, t: float = 1.0) -> NormBracket:
    """Bracket around inf{||x0||_X0 + t ||x1||_X1 : x0 + x1 = x}."""
    if not t > 0:
        raise ValueError(f't must be positive, got {t}')
    x = np.asarray(x, dtype=np.complex128)
    check_dim(couple.dim, x.size)
    if not np.any(x):
        zero = np.zeros_like(x)
        return NormBracket.exact(0.0, witness={'x0': zero, 'x1': zero})
    if couple.is_lattice:
        return _lattice_split(couple, x, t)
    return _general_split(couple, x, t)


def sum_norm(couple: Couple, x) -> NormBracket:
    return split_norm(couple, x, 1.0)


def dual_norm_numeric(space: NormModel, y) -> float:
    """sup{|<x, y>| : ||x|| <= 1} by LP or SLSQP over moduli; a certified lower estimate."""
    if not space.is_lattice:
        raise UnsupportedKindError('numeric dual norms are computed for weighted lp spaces only')
    y = np.asarray(y, dtype=np.complex128)
    check_dim(space.dim, y.size)
    mod = np.abs(y)
    if not np.any(mod):
        return 0.0
    n = space.dim
    s, _, _ = solve_ball_program(
        cost=-mod,
        balls=[(space.p, space.weights, np.zeros(n), 1.0, None, 1.0)],
        bounds=[(0.0, None)] * n,
        start=1.0 / (n * space.weights),
    )
    s = np.maximum(s, 0.0)
    size = lp_rows(space.weights * s, space.p)
    return float(s @ mod / size) if size > 0 else 0.0


def derive_seed(seed: int, *indices: int) -> int:
    """splitmix64 chain: one independent 64-bit seed per index path."""

    def mix(state: int) -> int:
        z = (state + 0x9E3779B97F4A7C15) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    state = mix(int(seed) & MASK64)
    for index in indices:
        state = mix(state ^ (int(index) & MASK64))
    return state


@dataclass(frozen=True)
class GenConfig:
    seed: int = SEED
    dim_range: tuple[int, int] = (1, 6)
    p_values: tuple[float, ...] = P_VALUES
    log_weight_range: tuple[float, float] = LOG_WEIGHT_RANGE
    functional_count_range: tuple[int, int] = (0, 3)
    polytope_probability: float = 0.0

    def __post_init__(self) -> None:
        lo, hi = self.dim_range
        if lo < 1 or lo > hi:
            raise ConfigError(f'invalid dim_range {self.dim_range}')
        if not self.p_values or any(not p >= 1.0 for p in self.p_values):
            raise ConfigError(f'invalid p_values {self.p_values}')
        if self.log_weight_range[0] > self.log_weight_range[1]:
            raise ConfigError(f'invalid log_weight_range {self.log_weight_range}')
        c_lo, c_hi = self.functional_count_range
        if c_lo < 0 or c_lo > c_hi:
            raise ConfigError(f'invalid functional_count_range {self.functional_count_range}')
        if not 0.0 <= self.polytope_probability <= 1.0:
            raise ConfigError(f'invalid polytope_probability {self.polytope_probability}')


def _random_space(rng: np.random.Generator, cfg: GenConfig, n: int) -> NormModel:
    if rng.random() < cfg.polytope_probability:
        m = n + int(rng.integers(cfg.functional_count_range[0], cfg.functional_count_range[1] + 1))
        while True:
            functionals = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
            if np.linalg.matrix_rank(functionals) == n:
                return polytope(functionals)
    p = float(cfg.p_values[int(rng.integers(len(cfg.p_values)))])
    weights = np.exp(rng.uniform(cfg.log_weight_range[0], cfg.log_weight_range[1], n))
    return weighted_lp(p, weights)


def random_couple(cfg: GenConfig, dim: int | None = None) -> Couple:
    rng = np.random.default_rng(cfg.seed)
    n = int(rng.integers(cfg.dim_range[0], cfg.dim_range[1] + 1))
    if dim is not None:
        n = dim
    return Couple(_random_space(rng, cfg, n), _random_space(rng, cfg, n))


def random_vector(cfg: GenConfig, n: int, stream: int = 0) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed & MASK64, stream])
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)
