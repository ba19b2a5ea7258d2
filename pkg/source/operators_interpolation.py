import itertools
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import optimize

from source.config_interpolation import (
    CANONICAL,
    ENUMERATION_LIMIT,
    OPERATOR_CACHE_SIZE,
    PHASES,
    PHASES_REFINED,
    SEED,
    SOLVER,
    WIDE_BRACKET,
)
from source.errors_interpolation import check_dim
from source.functors_interpolation import lattice_theta_space
from source.solvers_interpolation import NormBracket, maximize_adam
from source.spaces_interpolation import (
    Couple,
    NormModel,
    derive_seed,
    dual_space,
    norm,
    norm_rows,
    norming_functional,
    sum_norm,
    torch_norm_rows,
    weighted_lp,
)

logger = logging.getLogger(__name__)


def _as_matrix(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.complex128))
    if A.ndim != 2 or not np.all(np.isfinite(A)):
        raise ValueError(f'operator must be a finite matrix, got shape {A.shape}')
    return A


@dataclass(eq=False)
class CoupleOperator:
    matrix: np.ndarray
    source: Couple
    target: Couple
    cache_size: int = OPERATOR_CACHE_SIZE
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self) -> None:
        self.matrix = _as_matrix(self.matrix)
        self.matrix.setflags(write=False)
        check_dim(self.source.dim, self.matrix.shape[1], 'operator columns')
        check_dim(self.target.dim, self.matrix.shape[0], 'operator rows')
        if self.cache_size < 1:
            raise ValueError(f'cache_size must be positive, got {self.cache_size}')

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def cached(self, key, compute):
        """Memoized ``compute()`` under ``key``; the least recently used entry is evicted past ``cache_size``."""
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        value = self._cache[key] = compute()
        while len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return value


def _is_diagonal(A: np.ndarray) -> bool:
    return A.shape[0] == A.shape[1] and not np.any(A - np.diag(np.diag(A)))


def euclidean_envelope(space: NormModel) -> tuple[np.ndarray, float, float]:
    """(E, lo, hi) with lo ||E x||_2 <= ||x|| <= hi ||E x||_2."""
    n = space.dim
    if space.is_lattice:
        exponent = (0.0 if math.isinf(space.p) else 1.0 / space.p) - 0.5
        factor = n ** exponent
        return np.diag(space.weights).astype(np.complex128), min(1.0, factor), max(1.0, factor)
    F = space.functionals
    m = F.shape[0]
    sigma = np.linalg.svd(F, compute_uv=False)
    return np.eye(n, dtype=np.complex128), float(sigma[-1] / math.sqrt(m)), float(np.linalg.norm(F, axis=1).max())


def _ratio(A: np.ndarray, src: NormModel, tgt: NormModel, x: np.ndarray) -> float:
    size = norm(src, x)
    return norm(tgt, A @ x) / size if size > 0 else 0.0


def _exact_norm(A: np.ndarray, src: NormModel, tgt: NormModel) -> NormBracket | None:
    if not src.is_lattice:
        return None
    n = A.shape[1]
    w = src.weights
    if src.p == 1.0:
        values = norm_rows(tgt, A.T) / w
        i = int(np.argmax(values))
        witness = np.zeros(n, dtype=np.complex128)
        witness[i] = 1.0 / w[i]
        return NormBracket.exact(float(values[i]), solver='extreme_points', witness=witness)
    if tgt.is_lattice and src.p == 2.0 and tgt.p == 2.0:
        B = tgt.weights[:, None] * A / w[None, :]
        _, sigma, vh = np.linalg.svd(B)
        witness = np.conj(vh[0]) / w
        return NormBracket.exact(float(sigma[0]), solver='svd', witness=witness)
    if tgt.is_lattice and _is_diagonal(A) and src.p == tgt.p:
        effective = np.abs(np.diag(A)) * tgt.weights / w
        i = int(np.argmax(effective))
        witness = np.zeros(n, dtype=np.complex128)
        witness[i] = 1.0 / w[i]
        return NormBracket.exact(float(effective[i]), solver='diagonal', witness=witness)
    if not tgt.is_lattice or math.isinf(tgt.p):
        rows = tgt.functionals if not tgt.is_lattice else np.diag(tgt.weights).astype(np.complex128)
        images = rows @ A
        dual = dual_space(src)
        values = norm_rows(dual, images)
        j = int(np.argmax(values))
        witness = norming_functional(dual, np.conj(images[j]))
        return NormBracket.exact(float(values[j]), solver='dual_rows', witness=witness)
    return None


def _phase_grid(n: int) -> int | None:
    if n <= 3:
        return PHASES_REFINED
    if PHASES ** (n - 1) <= ENUMERATION_LIMIT:
        return PHASES
    return None


def _enumerate_phases(A: np.ndarray, src: NormModel, tgt: NormModel, P: int) -> NormBracket:
    """Extreme points e^{i phi} / w of the weighted sup ball; the first phase is fixed at 0."""
    n = A.shape[1]
    grid = np.exp(2j * np.pi * np.arange(P) / P)
    patterns = np.array(list(itertools.product(range(P), repeat=n - 1)), dtype=np.int64).reshape(P ** (n - 1), n - 1)
    points = np.ones((patterns.shape[0], n), dtype=np.complex128)
    points[:, 1:] = grid[patterns]
    points /= src.weights[None, :]
    values = norm_rows(tgt, points @ A.T)
    best = int(np.argmax(values))
    lower = float(values[best])
    # every phase vector lies within 2 sin(pi / 2P) of a grid point in the sup ball
    upper = lower / (1.0 - 2.0 * math.sin(math.pi / (2 * P)))
    return NormBracket(
        lower=lower,
        upper=upper,
        solver='phase_grid',
        witness=points[best],
        extra={'phases': P, 'wide': (upper - lower) > WIDE_BRACKET * upper},
    )


def _ascent_starts(A: np.ndarray, src: NormModel, count: int, seed: int) -> list[np.ndarray]:
    n = A.shape[1]
    E, _, _ = euclidean_envelope(src)
    _, _, vh = np.linalg.svd(A @ np.linalg.inv(E))
    top = np.linalg.solve(E, np.conj(vh[0]))
    complex_starts = [np.eye(n)[i].astype(np.complex128) for i in range(n)] + [np.ones(n, dtype=np.complex128), top]
    rng = np.random.default_rng(seed)
    complex_starts += [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(count)]
    return [np.concatenate([z.real, z.imag]) for z in complex_starts]


def _split(z: np.ndarray) -> np.ndarray:
    n = z.size // 2
    return z[:n] + 1j * z[n:]


def _torch_apply(A: np.ndarray):
    ar, ai = torch.tensor(A.real.copy()), torch.tensor(A.imag.copy())

    def apply(z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        n = z.shape[0] // 2
        re, im = z[:n], z[n:]
        return ar @ re - ai @ im, ar @ im + ai @ re

    return apply


def op_norm(A, src: NormModel, tgt: NormModel, cfg: dict | None = None) -> NormBracket:
    """Bracket around sup ||Ax||_tgt / ||x||_src."""
    A = _as_matrix(A)
    check_dim(src.dim, A.shape[1], 'operator columns')
    check_dim(tgt.dim, A.shape[0], 'operator rows')
    cfg = {**SOLVER, **(cfg or {})}
    if not np.any(A):
        return NormBracket.exact(0.0, witness=np.eye(A.shape[1])[0].astype(np.complex128))
    exact = _exact_norm(A, src, tgt)
    if exact is not None:
        return exact

    grid = None
    if src.is_lattice and math.isinf(src.p) and A.shape[1] <= 12:
        P = _phase_grid(A.shape[1])
        if P is not None:
            grid = _enumerate_phases(A, src, tgt, P)

    apply = _torch_apply(A)

    def objective(z: torch.Tensor) -> torch.Tensor:
        n = z.shape[0] // 2
        re, im = apply(z)
        return torch_norm_rows(tgt, re, im) / torch_norm_rows(src, z[:n], z[n:])

    seed = derive_seed(SEED, *A.shape)
    starts = _ascent_starts(A, src, cfg['multistarts'], seed)
    if grid is not None:
        starts.insert(0, np.concatenate([grid.witness.real, grid.witness.imag]))
    result = maximize_adam(
        objective, starts, score=lambda z: _ratio(A, src, tgt, _split(z)),
        steps=cfg['ascent_steps'], lr=cfg['ascent_lr'], print_every=cfg['print_every'],
    )
    lower, witness = result.value, _split(result.x)

    E_s, lo_s, _ = euclidean_envelope(src)
    E_t, _, hi_t = euclidean_envelope(tgt)
    upper = hi_t * float(np.linalg.norm(E_t @ A @ np.linalg.inv(E_s), 2)) / lo_s
    solver = 'envelope'
    if grid is not None and grid.upper < upper:
        upper, solver = grid.upper, 'phase_grid'
    if grid is not None and grid.lower > lower:
        lower, witness = grid.lower, grid.witness
    upper = max(upper, lower)
    wide = upper - lower > WIDE_BRACKET * upper
    if wide:
        logger.debug('wide operator norm bracket [%.6g, %.6g] (%s)', lower, upper, solver)
    return NormBracket(
        lower=lower,
        upper=upper,
        iterations=result.iterations,
        solver=solver,
        witness=witness,
        extra={'wide': wide},
    )


def couple_operator_norm(T: CoupleOperator) -> tuple[NormBracket, NormBracket]:
    return T.cached('couple_norm', lambda: (
        op_norm(T.matrix, T.source.space0, T.target.space0),
        op_norm(T.matrix, T.source.space1, T.target.space1),
    ))


def _constrained_sup(A: np.ndarray, source: Couple, target: NormModel, r: float, certify_lower: bool = True) -> NormBracket:
    """sup{||Ax||_target : ||x||_X0 <= 1, ||x||_X1 <= r}.

    With ``certify_lower`` off only the feasibility upper bound is computed.
    """
    if not np.any(A):
        return NormBracket.exact(0.0, witness=np.zeros(A.shape[1], dtype=np.complex128))
    s0, s1 = source.space0, source.space1
    upper = min(op_norm(A, s0, target).upper, r * op_norm(A, s1, target).upper)
    if not certify_lower:
        return NormBracket(lower=0.0, upper=upper, solver='envelope')

    def size(x: np.ndarray) -> float:
        return max(norm(s0, x), norm(s1, x) / r)

    def score(z: np.ndarray) -> float:
        x = _split(z)
        scale = size(x)
        return norm(target, A @ x) / scale if scale > 0 else 0.0

    apply = _torch_apply(A)

    def objective(z: torch.Tensor) -> torch.Tensor:
        n = z.shape[0] // 2
        re, im = apply(z)
        bound = torch.maximum(torch_norm_rows(s0, z[:n], z[n:]), torch_norm_rows(s1, z[:n], z[n:]) / r)
        return torch_norm_rows(target, re, im) / bound

    starts = _ascent_starts(A, s0, SOLVER['multistarts'], derive_seed(SEED, *A.shape, 2))
    result = maximize_adam(objective, starts, score=score)
    best_z, lower = result.x, result.value

    # polish the best ascent point with SLSQP on the explicit two-ball program
    scale = size(_split(best_z))
    if scale > 0:
        polished = optimize.minimize(
            lambda z: -norm(target, A @ _split(z)),
            best_z / scale,
            method='SLSQP',
            constraints=[
                {'type': 'ineq', 'fun': lambda z: 1.0 - norm(s0, _split(z))},
                {'type': 'ineq', 'fun': lambda z: r - norm(s1, _split(z))},
            ],
            options={'ftol': 1e-12, 'maxiter': 200},
        )
        value = score(polished.x)
        if value > lower:
            best_z, lower = polished.x, value

    x = _split(best_z)
    scale = size(x)
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        iterations=result.iterations,
        solver='ascent',
        witness=x / scale if scale > 0 else x,
    )


def constrained_image_norm(T: CoupleOperator, r: float, certify_lower: bool = True) -> NormBracket:
    if not r > 0:
        raise ValueError(f'r must be positive, got {r}')
    return T.cached(
        ('image', float(r), certify_lower),
        lambda: _constrained_sup(T.matrix, T.source, T.target.space0, float(r), certify_lower),
    )


def fourier_coefficient_bound(T: CoupleOperator, k: int, theta: float, certify_lower: bool = True) -> NormBracket:
    """e^{k theta} sup{||Tx||_{Y_theta} : ||x||_X0 <= 1, ||x||_X1 <= e^{-k}}.

    Without a lattice target the theta norm is bounded through log-convexity
    and the result is flagged heuristic.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f'theta must lie in (0, 1), got {theta}')
    k = int(k)
    r = math.exp(-k)
    factor = math.exp(k * theta)
    if T.target.is_lattice:
        target = lattice_theta_space(T.target, theta)
        inner = T.cached(
            ('coefficient', k, float(theta), certify_lower),
            lambda: _constrained_sup(T.matrix, T.source, target, r, certify_lower),
        )
        return NormBracket(
            lower=factor * inner.lower,
            upper=factor * inner.upper,
            iterations=inner.iterations,
            solver=inner.solver,
            witness=inner.witness,
            extra={'k': k},
        )
    ends = [_constrained_sup(T.matrix, T.source, space, r, certify_lower) for space in (T.target.space0, T.target.space1)]
    upper = factor * ends[0].upper ** (1.0 - theta) * ends[1].upper ** theta
    lower = 0.0
    if ends[0].witness is not None and np.any(T.matrix @ ends[0].witness):
        lower = factor * sum_norm(T.target, T.matrix @ ends[0].witness).lower
    return NormBracket(
        lower=min(lower, upper),
        upper=upper,
        solver='log_convexity',
        witness=ends[0].witness,
        heuristic=True,
        extra={'k': k},
    )


def _monotone(brackets: list[NormBracket]) -> list[NormBracket]:
    uppers = np.minimum.accumulate([b.upper for b in brackets])
    lowers = np.maximum.accumulate([b.lower for b in brackets][::-1])[::-1]
    return [
        NormBracket(lower=min(lo, up), upper=up, iterations=b.iterations, converged=b.converged,
                    solver=b.solver, witness=b.witness, heuristic=b.heuristic, extra=b.extra)
        for b, lo, up in zip(brackets, lowers, uppers)
    ]


def approx_numbers(A, src: NormModel, tgt: NormModel, kmax: int) -> list[NormBracket]:
    """Brackets around a_k = inf{||A - F|| : rank F < k} for k = 1..kmax."""
    A = _as_matrix(A)
    m, n = A.shape
    if not 1 <= kmax <= min(m, n):
        raise ValueError(f'kmax must lie in [1, {min(m, n)}], got {kmax}')
    check_dim(src.dim, n, 'operator columns')
    check_dim(tgt.dim, m, 'operator rows')

    if src.is_lattice and tgt.is_lattice and src.p == 2.0 and tgt.p == 2.0:
        sigma = np.linalg.svd(tgt.weights[:, None] * A / src.weights[None, :], compute_uv=False)
        return [NormBracket.exact(float(s), solver='svd') for s in sigma[:kmax]]
    if src.is_lattice and tgt.is_lattice and _is_diagonal(A) and src.p == tgt.p:
        effective = np.sort(np.abs(np.diag(A)) * tgt.weights / src.weights)[::-1]
        return [NormBracket.exact(float(e), solver='diagonal') for e in effective[:kmax]]

    E_s, lo_s, hi_s = euclidean_envelope(src)
    E_t, lo_t, _ = euclidean_envelope(tgt)
    B = E_t @ A @ np.linalg.inv(E_s)
    u, sigma, vh = np.linalg.svd(B)
    order = np.argsort(-np.abs(np.diag(A))) if _is_diagonal(A) else None

    brackets = [op_norm(A, src, tgt)]
    for k in range(2, kmax + 1):
        truncated = (u[:, :k - 1] * sigma[:k - 1]) @ vh[:k - 1]
        residual = A - np.linalg.solve(E_t, truncated) @ E_s
        upper = op_norm(residual, src, tgt).upper
        if order is not None:
            kept = A.copy()
            kept[order[:k - 1], order[:k - 1]] = 0.0
            upper = min(upper, op_norm(kept, src, tgt).upper)
        lower = sigma[k - 1] * lo_t / hi_s
        brackets.append(NormBracket(lower=min(lower, upper), upper=upper, solver='svd_truncation'))
    return _monotone(brackets)


@dataclass(frozen=True, eq=False)
class CompactnessModulus:
    deltas: np.ndarray
    eta: np.ndarray
    raw: np.ndarray
    envelope: bool = True


def compactness_modulus(T: CoupleOperator, deltas) -> CompactnessModulus:
    """eta(delta) = sup{||Tx||_Y0 : ||x||_X0 <= 1, ||x||_X1 <= delta}, upper values."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 1 or deltas.size == 0 or np.any(deltas <= 0) or np.any(np.diff(deltas) <= 0):
        raise ValueError(f'delta grid must be positive and strictly ascending, got {deltas}')
    raw = np.array([constrained_image_norm(T, float(d), certify_lower=False).upper for d in deltas])
    eta = np.maximum.accumulate(raw)
    return CompactnessModulus(deltas=deltas, eta=eta, raw=raw, envelope=bool(np.any(eta != raw)))


def canonical_operator(n: int = CANONICAL['n'], p: float = CANONICAL['p'], step: float = CANONICAL['step']) -> CoupleOperator:
    """diag(2^-i) from (l_p(1), l_p(e^{step i})) to (l_p(1), l_p(1)), i = 1..n."""
    i = np.arange(1, n + 1, dtype=np.float64)
    source = Couple(weighted_lp(p, np.ones(n)), weighted_lp(p, np.exp(step * i)))
    target = Couple(weighted_lp(p, np.ones(n)), weighted_lp(p, np.ones(n)))
    return CoupleOperator(np.diag(2.0 ** -i), source, target)


def interpolated_operator_bound(T: CoupleOperator, theta: float) -> float:
    """||T||_{X0->Y0}^(1-theta) ||T||_{X1->Y1}^theta from the endpoint upper values."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f'theta must lie in [0, 1], got {theta}')
    b0, b1 = couple_operator_norm(T)
    return float(b0.upper ** (1.0 - theta) * b1.upper ** theta)


def theta_operator_norm(T: CoupleOperator, theta: float) -> NormBracket:
    """op_norm of T between the lattice theta spaces of its couples."""
    return op_norm(T.matrix, lattice_theta_space(T.source, theta), lattice_theta_space(T.target, theta))

