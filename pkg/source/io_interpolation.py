import json
import logging
import math
from pathlib import Path

import numpy as np

from source.annulus_interpolation import LaurentFamily
from source.errors_interpolation import InterpolationError, check_dim
from source.functors_interpolation import Representation
from source.operators_interpolation import CoupleOperator
from source.solvers_interpolation import NormBracket
from source.spaces_interpolation import Couple, NormModel, polytope, weighted_lp
from source.verify_interpolation import ExperimentReport

logger = logging.getLogger(__name__)


def _exponent_out(p: float):
    return 'inf' if math.isinf(p) else float(p)


def _exponent_in(value) -> float:
    if value == 'inf':
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InterpolationError(f'exponent must be a number or "inf", got {value!r}')
    return float(value)


def complex_out(values) -> list:
    values = np.asarray(values, dtype=np.complex128)
    if values.ndim == 0:
        return [float(values.real), float(values.imag)]
    return [complex_out(v) for v in values]


def complex_in(values) -> np.ndarray:
    try:
        array = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InterpolationError(f'malformed complex array: {exc}') from exc
    if array.ndim == 0 or array.shape[-1] != 2:
        raise InterpolationError(f'complex entries must be [re, im] pairs, got shape {array.shape}')
    return array[..., 0] + 1j * array[..., 1]


def space_to_dict(space: NormModel) -> dict:
    if space.is_lattice:
        return {'kind': 'weighted_lp', 'dim': space.dim, 'p': _exponent_out(space.p), 'weights': space.weights.tolist()}
    return {'kind': 'polytope', 'dim': space.dim, 'functionals': complex_out(space.functionals)}


def space_from_dict(data: dict) -> NormModel:
    try:
        kind = data['kind']
        if kind == 'weighted_lp':
            space = weighted_lp(_exponent_in(data['p']), data['weights'])
        elif kind == 'polytope':
            space = polytope(complex_in(data['functionals']))
        else:
            raise InterpolationError(f'unknown space kind {kind!r}')
    except (KeyError, TypeError) as exc:
        raise InterpolationError(f'malformed space description: {exc!r}') from exc
    if 'dim' in data:
        check_dim(int(data['dim']), space.dim, kind)
    return space


def couple_to_dict(couple: Couple) -> dict:
    return {'space0': space_to_dict(couple.space0), 'space1': space_to_dict(couple.space1)}


def couple_from_dict(data: dict) -> Couple:
    try:
        return Couple(space_from_dict(data['space0']), space_from_dict(data['space1']))
    except (KeyError, TypeError) as exc:
        raise InterpolationError(f'malformed couple description: {exc!r}') from exc


def family_to_dict(f: LaurentFamily) -> dict:
    """Interleaved table: row k + K holds re, im of each coordinate of c_k in turn."""
    table = np.stack([f.coefficients.real, f.coefficients.imag], axis=-1).reshape(2 * f.K + 1, 2 * f.dim)
    return {'K': f.K, 'dim': f.dim, 'coefficients': table.tolist()}


def family_from_dict(data: dict) -> LaurentFamily:
    table = np.asarray(data['coefficients'], dtype=np.float64)
    n = int(data['dim'])
    if table.shape != (2 * int(data['K']) + 1, 2 * n):
        raise InterpolationError(f'family table has shape {table.shape}, expected {(2 * data["K"] + 1, 2 * n)}')
    return LaurentFamily(table[:, 0::2] + 1j * table[:, 1::2])


def operator_to_dict(T: CoupleOperator) -> dict:
    m, n = T.shape
    return {
        'm': m,
        'n': n,
        'matrix': complex_out(T.matrix),
        'source': couple_to_dict(T.source),
        'target': couple_to_dict(T.target),
    }


def operator_from_dict(data: dict) -> CoupleOperator:
    try:
        matrix = complex_in(data['matrix']).reshape(int(data['m']), int(data['n']))
        return CoupleOperator(matrix, couple_from_dict(data['source']), couple_from_dict(data['target']))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InterpolationError):
            raise
        raise InterpolationError(f'malformed operator description: {exc!r}') from exc


def witness_to_plain(witness):
    if witness is None:
        return None
    if isinstance(witness, LaurentFamily):
        return {'family': family_to_dict(witness)}
    if isinstance(witness, Representation):
        return {'representation': {'theta': witness.theta, 'terms': complex_out(witness.terms)}}
    if isinstance(witness, dict):
        return {key: witness_to_plain(value) for key, value in witness.items()}
    return complex_out(witness)


def bracket_to_dict(bracket: NormBracket) -> dict:
    return {**bracket.to_dict(), 'witness': witness_to_plain(bracket.witness)}


def to_plain(value):
    """JSON-ready copy: numpy scalars unwrapped, infinities as "inf"."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


def dumps(value) -> str:
    return json.dumps(to_plain(value), sort_keys=True, indent=2) + '\n'


def read_json(path: Path) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise InterpolationError(f'cannot read {path}: {exc}') from exc


def read_norm_input(path: Path) -> tuple[Couple, np.ndarray, dict]:
    """A couple, a vector and optional scalar parameters (theta, t, K)."""
    data = read_json(path)
    if not isinstance(data, dict) or 'couple' not in data or 'x' not in data:
        raise InterpolationError(f'{path} must hold "couple" and "x"')
    couple = couple_from_dict(data['couple'])
    x = complex_in(data['x'])
    if x.ndim != 1:
        raise InterpolationError(f'x must be a vector of [re, im] pairs, got shape {x.shape}')
    params = {key: data[key] for key in ('theta', 't', 'K') if key in data}
    return couple, x, params


def write_report(report: ExperimentReport, out_dir: Path, fmt: str = 'json') -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == 'csv':
        path = out_dir / f'{report.experiment}.csv'
        report.table().to_csv(path, index=False)
    else:
        path = out_dir / f'{report.experiment}.json'
        path.write_text(dumps(report.to_dict()))
    logger.info('wrote %s', path)
    return path
