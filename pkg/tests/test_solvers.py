import numpy as np
import pytest
import torch

from source.solvers_interpolation import NormBracket, maximize_adam, minimize_subgradient


def test_bracket_validation():
    with pytest.raises(ValueError):
        NormBracket(lower=2.0, upper=1.0)
    with pytest.raises(ValueError):
        NormBracket(lower=float('nan'), upper=1.0)
    b = NormBracket(lower=-1e-18, upper=1.0)
    assert b.lower == 0.0
    exact = NormBracket.exact(3.0)
    assert exact.gap == 0.0 and exact.value == 3.0


def test_bracket_to_dict_carries_extra():
    b = NormBracket(lower=1.0, upper=1.5, solver='svd', extra={'K': 4})
    d = b.to_dict()
    assert d['gap'] == pytest.approx(0.5)
    assert d['K'] == 4 and d['solver'] == 'svd'


def test_subgradient_reaches_minimum():
    """Euclidean distance to c has its minimum 0 at c."""
    c = torch.tensor([3.0, -1.0])

    def objective(z):
        return torch.linalg.vector_norm(z - c)

    result = minimize_subgradient(objective, [np.zeros(2)], scale=5.0, max_iter=600, window=200)
    assert result.value < 0.05, f"subgradient stalled at {result.value}"
    assert result.value <= float(np.linalg.norm(c.numpy()))


def test_subgradient_ties_keep_first_start():
    def objective(z):
        return torch.linalg.vector_norm(z)

    start = np.array([1.0, 1.0])
    result = minimize_subgradient(objective, [start, start.copy()], scale=1.0, max_iter=50, window=10)
    assert result.start == 0


def test_adam_score_is_exact():
    A = torch.tensor([[3.0, 0.0], [0.0, 1.0]])

    def objective(z):
        return torch.linalg.vector_norm(A @ z) / torch.linalg.vector_norm(z)

    def score(z):
        return float(np.linalg.norm(A.numpy() @ z) / np.linalg.norm(z))

    result = maximize_adam(objective, [np.array([1.0, 1.0]), np.array([1.0, 0.0])], score, steps=100)
    assert result.value == pytest.approx(3.0, rel=1e-12)
    assert result.value <= 3.0 + 1e-12
