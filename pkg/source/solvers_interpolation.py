import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch

from source.config_interpolation import SOLVER

logger = logging.getLogger(__name__)

torch.set_default_dtype(torch.float64)

Objective = Callable[[torch.Tensor], torch.Tensor]


@dataclass
class NormBracket:
    """A certified interval around a norm value.

    ``upper`` is always realised by the feasible object kept in ``witness``;
    ``lower`` comes from a dual certificate or a closed-form oracle.
    """
    lower: float
    upper: float
    iterations: int = 0
    converged: bool = True
    solver: str = 'exact'
    witness: Any = None
    heuristic: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.lower = float(self.lower)
        self.upper = float(self.upper)
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError(f'bracket contains nan: [{self.lower}, {self.upper}]')
        if self.lower > self.upper * (1.0 + 1e-9) + 1e-300:
            raise ValueError(f'bracket lower {self.lower!r} exceeds upper {self.upper!r}')
        self.lower = max(0.0, min(self.lower, self.upper))

    @classmethod
    def exact(cls, value: float, solver: str = 'exact', witness: Any = None) -> 'NormBracket':
        return cls(lower=value, upper=value, solver=solver, witness=witness)

    @property
    def value(self) -> float:
        return self.upper

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            'lower': self.lower,
            'upper': self.upper,
            'gap': self.gap,
            'iterations': self.iterations,
            'converged': self.converged,
            'solver': self.solver,
            'heuristic': self.heuristic,
            **self.extra,
        }


@dataclass
class SolverResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    start: int


def minimize_subgradient(
    objective: Objective,
    starts: Sequence[np.ndarray],
    scale: float,
    max_iter: int = SOLVER['max_iter'],
    window: int = SOLVER['window'],
    rel_tol: float = SOLVER['rel_tol'],
    lr0: float = SOLVER['lr0'],
    print_every: int = SOLVER['print_every'],
) -> SolverResult:
    """Normalised subgradient descent with step lr0 * scale / sqrt(t + 1), one run per start.

    Each run keeps its best iterate and stops once the best value improved by
    less than ``rel_tol`` (relative) over the last ``window`` iterations.
    The lowest start index wins exact ties.
    """
    best: SolverResult | None = None
    total = 0
    for index, start in enumerate(starts):
        x = torch.tensor(np.asarray(start, dtype=np.float64), requires_grad=True)
        run_value = math.inf
        run_x = np.array(start, dtype=np.float64)
        history: list[float] = []
        converged = False

        for it in range(max_iter):
            value = objective(x)
            current = float(value.detach())
            if current < run_value:
                run_value = current
                run_x = x.detach().numpy().copy()
            history.append(run_value)
            if it >= window and history[it - window] - run_value <= rel_tol * abs(history[it - window]):
                converged = True
                break

            (grad,) = torch.autograd.grad(value, x)
            g_norm = float(torch.linalg.vector_norm(grad))
            if not math.isfinite(g_norm) or g_norm == 0.0:
                converged = True
                break
            with torch.no_grad():
                x -= (lr0 * scale / math.sqrt(it + 1) / g_norm) * grad

            if print_every and it % print_every == 0:
                logger.debug('start %d iter %d best %.10g', index, it, run_value)

        total += len(history)
        if best is None or run_value < best.value:
            best = SolverResult(x=run_x, value=run_value, iterations=0, converged=converged, start=index)

    if best is None:
        raise ValueError('minimize_subgradient needs at least one start')
    best.iterations = total
    return best


def maximize_adam(
    objective: Objective,
    starts: Sequence[np.ndarray],
    score: Callable[[np.ndarray], float],
    steps: int = SOLVER['ascent_steps'],
    lr: float = SOLVER['ascent_lr'],
    print_every: int = SOLVER['print_every'],
) -> SolverResult:
    """Adam ascent on a scale-invariant objective; iterates are renormalised after each step.

    The best point is chosen with the exact ``score`` evaluated in numpy, so the
    returned value is a certified lower bound for the supremum.
    """
    best: SolverResult | None = None
    for index, start in enumerate(starts):
        start = np.asarray(start, dtype=np.float64)
        if not np.any(start):
            continue
        x = torch.tensor(start / np.linalg.norm(start), requires_grad=True)
        optimizer = torch.optim.Adam([x], lr=lr)
        candidates = [start]
        peak, peak_x = -math.inf, start

        for step in range(steps):
            optimizer.zero_grad(set_to_none=True)
            loss = -objective(x)
            if not torch.isfinite(loss):
                break
            if -float(loss.detach()) > peak:
                peak, peak_x = -float(loss.detach()), x.detach().numpy().copy()
            loss.backward()
            optimizer.step()
            with torch.no_grad():
                x /= torch.linalg.vector_norm(x).clamp_min(1e-300)
            if print_every and step % print_every == 0:
                logger.debug('ascent start %d step %d value %.10g', index, step, -float(loss.detach()))
        candidates.extend([peak_x, x.detach().numpy().copy()])

        for candidate in candidates:
            value = score(candidate)
            if best is None or value > best.value:
                best = SolverResult(x=candidate, value=value, iterations=steps, converged=True, start=index)

    if best is None:
        return SolverResult(x=np.zeros(0), value=0.0, iterations=0, converged=True, start=-1)
    return best
