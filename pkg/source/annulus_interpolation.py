"""Laurent families on the annulus 1 < |z| < e.

Norms of a family are only ever sampled on the two boundary circles: z -> ||f(z)||
is subharmonic for any norm, so its maximum over the closed annulus is attained
on the boundary.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from source.config_interpolation import DEFAULT_M
from source.errors_interpolation import AliasingError, AnnulusDomainError, check_dim
from source.spaces_interpolation import Couple, NormModel, derive_seed, norm_rows, sum_norm

logger = logging.getLogger(__name__)

RADII = (1.0, math.e)


@dataclass(frozen=True)
class AnnulusSpec:
    M: int = DEFAULT_M

    def __post_init__(self) -> None:
        if self.M < 8 or self.M & (self.M - 1):
            raise ValueError(f'grid size must be a power of two >= 8, got {self.M}')

    def check(self, K: int) -> None:
        if self.M < 8 * K:
            raise AliasingError(f'grid size {self.M} is below 8 * K = {8 * K}')

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.M) / self.M


def spec_for(K: int) -> AnnulusSpec:
    """Smallest admissible grid for degree K."""
    M = 8
    while M < 8 * K:
        M *= 2
    return AnnulusSpec(M)


@dataclass(frozen=True, eq=False)
class LaurentFamily:
    """f(z) = sum_{k=-K}^{K} c_k z^k with ``coefficients[k + K] = c_k``."""
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=np.complex128))
        if c.shape[0] % 2 != 1:
            raise ValueError(f'coefficient table needs 2K+1 rows, got {c.shape[0]}')
        if not np.all(np.isfinite(c)):
            raise ValueError('Laurent coefficients must be finite')
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, 'coefficients', c)

    @classmethod
    def zeros(cls, K: int, dim: int) -> 'LaurentFamily':
        return cls(np.zeros((2 * K + 1, dim), dtype=np.complex128))

    @classmethod
    def constant(cls, v, K: int = 0) -> 'LaurentFamily':
        v = np.asarray(v, dtype=np.complex128)
        c = np.zeros((2 * K + 1, v.size), dtype=np.complex128)
        c[K] = v
        return cls(c)

    @classmethod
    def monomial(cls, v, k: int, K: int | None = None) -> 'LaurentFamily':
        K = abs(k) if K is None else K
        v = np.asarray(v, dtype=np.complex128)
        c = np.zeros((2 * K + 1, v.size), dtype=np.complex128)
        c[k + K] = v
        return cls(c)

    @property
    def K(self) -> int:
        return (self.coefficients.shape[0] - 1) // 2

    @property
    def dim(self) -> int:
        return self.coefficients.shape[1]

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def coefficient(self, k: int) -> np.ndarray:
        if abs(k) > self.K:
            return np.zeros(self.dim, dtype=np.complex128)
        return self.coefficients[k + self.K]

    def padded(self, K: int) -> 'LaurentFamily':
        if K < self.K:
            raise ValueError(f'cannot pad degree {self.K} down to {K}')
        c = np.zeros((2 * K + 1, self.dim), dtype=np.complex128)
        c[K - self.K:K + self.K + 1] = self.coefficients
        return LaurentFamily(c)

    def scaled(self, factor: float) -> 'LaurentFamily':
        return LaurentFamily(self.coefficients * factor)

    def with_multipliers(self, multipliers: np.ndarray) -> 'LaurentFamily':
        return LaurentFamily(self.coefficients * np.asarray(multipliers)[:, None])


@dataclass(frozen=True, eq=False)
class CircleSamples:
    radius: float
    values: np.ndarray

    @property
    def M(self) -> int:
        return self.values.shape[0]


class GridMax(NamedTuple):
    value: float
    slack: float


def evaluate(f: LaurentFamily, z: complex) -> np.ndarray:
    r = abs(z)
    if not (1.0 - 1e-12 <= r <= math.e * (1.0 + 1e-12)):
        raise AnnulusDomainError(f'|z| = {r!r} lies outside the closed annulus [1, e]')
    powers = np.power(complex(z), f.ks.astype(np.float64))
    return powers @ f.coefficients


def _check_radius(radius: float) -> None:
    if not (1.0 - 1e-12 <= radius <= math.e * (1.0 + 1e-12)):
        raise AnnulusDomainError(f'radius {radius!r} lies outside [1, e]')


def sample_circle(f: LaurentFamily, radius: float, spec: AnnulusSpec) -> CircleSamples:
    _check_radius(radius)
    spec.check(f.K)
    table = np.zeros((spec.M, f.dim), dtype=np.complex128)
    scale = radius ** f.ks.astype(np.float64)
    table[f.ks % spec.M] = f.coefficients * scale[:, None]
    values = spec.M * np.fft.ifft(table, axis=0)
    return CircleSamples(radius=radius, values=values)


def fourier_coefficients(samples: CircleSamples, K: int) -> np.ndarray:
    if samples.M < 8 * K:
        raise AliasingError(f'{samples.M} samples cannot resolve degree {K} (need 8 * K)')
    spectrum = np.fft.fft(samples.values, axis=0) / samples.M
    ks = np.arange(-K, K + 1)
    return spectrum[ks % samples.M] / (samples.radius ** ks.astype(np.float64))[:, None]


def riesz_project(f: LaurentFamily) -> LaurentFamily:
    return f.with_multipliers((f.ks >= 0).astype(np.float64))


def riesz_minus(f: LaurentFamily) -> LaurentFamily:
    return f.with_multipliers((f.ks < 0).astype(np.float64))


def smoothing_multipliers(ks: np.ndarray, N: int) -> np.ndarray:
    """de la Vallee Poussin weights: 1 on |k| <= N, 2 - |k|/N up to 2N, then 0."""
    if N < 1:
        raise ValueError(f'N must be positive, got {N}')
    return np.clip(2.0 - np.abs(ks) / N, 0.0, 1.0)


def smooth(f: LaurentFamily, N: int) -> LaurentFamily:
    return f.with_multipliers(smoothing_multipliers(f.ks, N))


def circle_slack(f: LaurentFamily, space: NormModel, radius: float, M: int) -> float:
    """Bound on sup minus grid max of ||f|| on one circle.

    ||f(r e^{it})|| = ||e^{-ijt} f(r e^{it})|| for every integer j, so the
    Lipschitz constant is min_j sum_k |k - j| r^k ||c_k||.
    """
    weights = radius ** f.ks.astype(np.float64) * norm_rows(space, f.coefficients)
    spread = np.abs(f.ks[:, None] - f.ks[None, :]) @ weights
    return float(np.pi / M * spread.min())


def boundary_slack(f: LaurentFamily, couple: Couple, spec: AnnulusSpec) -> tuple[float, float]:
    return (
        circle_slack(f, couple.space0, RADII[0], spec.M),
        circle_slack(f, couple.space1, RADII[1], spec.M),
    )


def boundary_norm_F(f: LaurentFamily, couple: Couple, spec: AnnulusSpec) -> GridMax:
    check_dim(couple.dim, f.dim, 'family')
    maxima = [
        float(norm_rows(space, sample_circle(f, radius, spec).values).max())
        for space, radius in zip((couple.space0, couple.space1), RADII)
    ]
    slacks = boundary_slack(f, couple, spec)
    value = max(maxima)
    return GridMax(value, max(m + s for m, s in zip(maxima, slacks)) - value)


def certified_F(f: LaurentFamily, couple: Couple, spec: AnnulusSpec) -> float:
    grid = boundary_norm_F(f, couple, spec)
    return grid.value + grid.slack


def boundary_norm_H(f: LaurentFamily, couple: Couple, spec: AnnulusSpec) -> GridMax:
    check_dim(couple.dim, f.dim, 'family')
    totals = []
    for radius in RADII:
        values = sample_circle(f, radius, spec).values
        grid_max = max(sum_norm(couple, v).upper for v in values)
        weights = radius ** f.ks.astype(np.float64) * np.minimum(
            norm_rows(couple.space0, f.coefficients), norm_rows(couple.space1, f.coefficients)
        )
        spread = np.abs(f.ks[:, None] - f.ks[None, :]) @ weights
        totals.append((grid_max, float(np.pi / spec.M * spread.min())))
    value = max(t[0] for t in totals)
    return GridMax(value, max(m + s for m, s in totals) - value)


def circle_l2_norm(f: LaurentFamily, space: NormModel, radius: float, spec: AnnulusSpec) -> float:
    norms = norm_rows(space, sample_circle(f, radius, spec).values)
    return float(np.sqrt(np.mean(norms ** 2)))


def circle_mean_norm(f: LaurentFamily, space: NormModel, radius: float, spec: AnnulusSpec) -> float:
    return float(np.mean(norm_rows(space, sample_circle(f, radius, spec).values)))


def _coefficient(seed: int, trial: int, k: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(seed, trial, k + (1 << 20)))
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)


def random_family(seed: int, trial: int, dim: int, K: int, decay: float = 0.0) -> LaurentFamily:
    """Coefficient k is drawn from its own derived seed, so lower degrees are truncations."""
    ks = np.arange(-K, K + 1)
    table = np.array([_coefficient(seed, trial, int(k), dim) for k in ks])
    return LaurentFamily(table * np.exp(-decay * np.abs(ks))[:, None])


def tail_family(seed: int, trial: int, dim: int, offset: int, width: int) -> LaurentFamily:
    """Random family supported on offset < |k| <= offset + width.

    Positive modes are damped by e^{-k} so both boundary circles carry comparable mass.
    """
    K = offset + width
    ks = np.arange(-K, K + 1)
    table = np.array([_coefficient(seed, trial, int(k), dim) for k in ks])
    table[np.abs(ks) <= offset] = 0.0
    table *= np.exp(-np.maximum(ks, 0))[:, None]
    return LaurentFamily(table)


def riesz_l2_constant(space: NormModel, K: int, spec: AnnulusSpec, trials: int, seed: int) -> float:
    """Sampled lower bound for the L2 norm of R on trigonometric families with values in ``space``.

    Trial 0 is an analytic family (ratio 1); the maximum runs over all trials
    and all truncation degrees d <= K, so the estimate is monotone in both.
    """
    if trials < 1:
        raise ValueError(f'trials must be >= 1, got {trials}')
    spec.check(K)
    best = 0.0
    for trial in range(trials):
        full = random_family(seed, trial, space.dim, K)
        if trial == 0:
            full = riesz_project(full)
        for d in range(K + 1):
            f = LaurentFamily(full.coefficients[K - d:K + d + 1])
            denominator = circle_l2_norm(f, space, 1.0, spec)
            if denominator == 0.0:
                continue
            best = max(best, circle_l2_norm(riesz_project(f), space, 1.0, spec) / denominator)
    logger.debug('riesz estimate %.12g over %d trials, K=%d', best, trials, K)
    return best


def riesz_h_ratio(f: LaurentFamily, couple: Couple, spec: AnnulusSpec) -> float:
    """Observed ||R f||_H / ||f||_H on the grid; the constant it samples has no known value."""
    denominator = boundary_norm_H(f, couple, spec).value
    if denominator == 0.0:
        return 0.0
    return boundary_norm_H(riesz_project(f), couple, spec).value / denominator
