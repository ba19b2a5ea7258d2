"""Command-line front end: norms, experiments, suites and random instances.

Precedence for every setting: built-in default, then the --config file, then
the command-line flag.
"""
import argparse
import fnmatch
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import torch

from source.annulus_interpolation import AnnulusSpec
from source.config_interpolation import (
    DEFAULT_K,
    DEFAULT_M,
    EXPERIMENT_ALIASES,
    EXPERIMENT_DEFAULTS,
    EXPERIMENT_ORDER,
    PROCESSES,
    REPORTS_DIR,
    SEED,
    SOLVER,
    THETAS,
)
from source.errors_interpolation import ConfigError
from source.functors_interpolation import (
    calderon_product_norm,
    complex_norm_upper,
    gp_norm_upper,
    k_functional,
    lattice_theta_norm,
    peetre_norm_upper,
)
from source.io_interpolation import bracket_to_dict, complex_out, couple_to_dict, dumps, read_json, read_norm_input, write_report
from source.solvers_interpolation import NormBracket
from source.spaces_interpolation import GenConfig, derive_seed, random_couple, random_vector
from source.verify_interpolation import ExperimentConfig, run_experiment, summary_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_FAILED = 4

METHODS = ('k', 'complex', 'peetre', 'gp', 'oracle', 'calderon')
FORMATS = ('json', 'csv')


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    method: str = 'oracle'
    experiment: str | None = None
    select: str = '*'
    seed: int = SEED
    K: int = DEFAULT_K
    M: int = DEFAULT_M
    theta: float = 0.5
    t: float = 1.0
    thetas: tuple = THETAS
    rel_tol: float = SOLVER['rel_tol']
    max_iter: int = SOLVER['max_iter']
    output_dir: str = str(REPORTS_DIR)
    format: str = 'json'
    overrides: dict = field(default_factory=dict)
    count: int = 1
    dim: int | None = None
    processes: int = PROCESSES
    explicit: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f'unknown method {self.method!r}, expected one of {METHODS}')
        if self.format not in FORMATS:
            raise ConfigError(f'unknown format {self.format!r}, expected one of {FORMATS}')
        if self.K < 0 or self.M < 8 or self.M & (self.M - 1):
            raise ConfigError(f'invalid grid K={self.K}, M={self.M}')
        if not 0.0 <= self.theta <= 1.0 or any(not 0.0 < th < 1.0 for th in self.thetas):
            raise ConfigError(f'theta values out of range: {self.theta}, {self.thetas}')
        if not self.t > 0 or not self.rel_tol > 0 or self.max_iter < 1 or self.count < 1:
            raise ConfigError('t, rel_tol, max_iter and count must be positive')
        if self.dim is not None and self.dim < 1:
            raise ConfigError(f'dim must be positive, got {self.dim}')
        if self.processes < 0:
            raise ConfigError(f'processes must be non-negative, got {self.processes}')
        self.thetas = tuple(float(th) for th in self.thetas)

    @classmethod
    def from_sources(cls, command: str, file_values: dict, flag_values: dict) -> 'RunConfig':
        names = {f.name for f in fields(cls)} - {'command', 'explicit'}
        unknown = sorted(set(file_values) - names)
        if unknown:
            raise ConfigError(f'unknown config keys: {unknown}')
        merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None and k in names}}
        try:
            return cls(command=command, explicit=frozenset(merged), **merged)
        except TypeError as exc:
            raise ConfigError(f'invalid config: {exc}') from exc

    @property
    def solver_cfg(self) -> dict:
        return {'rel_tol': self.rel_tol, 'max_iter': self.max_iter}

    def experiment_overrides(self, name: str) -> dict:
        """File overrides for ``name`` plus K, M and thetas when set and meaningful for it."""
        name = EXPERIMENT_ALIASES.get(name, name)
        defaults = EXPERIMENT_DEFAULTS.get(name, {})
        result = dict(self.overrides.get(name, {}))
        for key in ('K', 'M', 'thetas'):
            if key in self.explicit and key in defaults:
                result.setdefault(key, getattr(self, key))
        return result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='interp', description='Interpolation laboratory for finite-dimensional Banach couples')
    parser.add_argument('--config', type=Path, help='JSON run file; flags override its values')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--threads', type=int, help='torch intra-op thread cap')
    parser.add_argument('--processes', type=int, help='worker processes for per-trial fan-out')
    parser.add_argument('--verbose', action='store_true')
    parser.add_argument('--output-dir', dest='output_dir')
    parser.add_argument('--format', choices=FORMATS)
    sub = parser.add_subparsers(dest='command', required=True)

    norm = sub.add_parser('norm', help='norm bracket of a vector in a couple')
    norm.add_argument('input', nargs='?')
    norm.add_argument('--method', choices=METHODS)
    norm.add_argument('--theta', type=float)
    norm.add_argument('--t', type=float)
    norm.add_argument('-K', type=int, dest='K')
    norm.add_argument('-M', type=int, dest='M')
    norm.add_argument('--rel-tol', type=float, dest='rel_tol')
    norm.add_argument('--max-iter', type=int, dest='max_iter')

    experiment = sub.add_parser('experiment', help='run one experiment')
    experiment.add_argument('experiment', nargs='?')
    experiment.add_argument('-K', type=int, dest='K')
    experiment.add_argument('-M', type=int, dest='M')
    experiment.add_argument('--thetas', type=float, nargs='+')

    suite = sub.add_parser('suite', help='run every experiment matching a glob, in fixed order')
    suite.add_argument('--select')
    suite.add_argument('-K', type=int, dest='K')
    suite.add_argument('-M', type=int, dest='M')
    suite.add_argument('--thetas', type=float, nargs='+')

    gen = sub.add_parser('gen', help='emit random couples and vectors')
    gen.add_argument('--count', type=int)
    gen.add_argument('--dim', type=int)
    return parser


def _norm_bracket(cfg: RunConfig, couple, x, params: dict) -> NormBracket:
    theta = float(params.get('theta', cfg.theta)) if 'theta' not in cfg.explicit else cfg.theta
    t = float(params.get('t', cfg.t)) if 't' not in cfg.explicit else cfg.t
    K = int(params.get('K', cfg.K)) if 'K' not in cfg.explicit else cfg.K
    if cfg.method == 'k':
        return k_functional(couple, x, t)
    if cfg.method == 'oracle':
        return NormBracket.exact(lattice_theta_norm(couple, theta, x), solver='oracle')
    if cfg.method == 'calderon':
        return calderon_product_norm(couple, theta, x)
    if cfg.method == 'complex':
        M = max(cfg.M, 8 * K) if 'M' not in cfg.explicit else cfg.M
        return complex_norm_upper(couple, theta, x, K, AnnulusSpec(M), cfg.solver_cfg)
    if cfg.method == 'peetre':
        return peetre_norm_upper(couple, theta, x, K, cfg.solver_cfg)
    return gp_norm_upper(couple, theta, x, K, cfg.solver_cfg)


def cmd_norm(cfg: RunConfig) -> int:
    if cfg.input is None:
        raise ConfigError('norm needs an input file')
    couple, x, params = read_norm_input(Path(cfg.input))
    bracket = _norm_bracket(cfg, couple, x, params)
    record = {'method': cfg.method, 'value': bracket.value, **bracket_to_dict(bracket)}
    sys.stdout.write(dumps(record))
    return EXIT_OK if bracket.converged else EXIT_NOT_CONVERGED


def cmd_experiment(cfg: RunConfig) -> int:
    if cfg.experiment is None:
        raise ConfigError('experiment needs an experiment id')
    name = EXPERIMENT_ALIASES.get(cfg.experiment, cfg.experiment)
    report = run_experiment(ExperimentConfig(name, cfg.experiment_overrides(name), cfg.seed, cfg.processes))
    write_report(report, Path(cfg.output_dir), cfg.format)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_suite(cfg: RunConfig) -> int:
    names = [name for name in EXPERIMENT_ORDER if fnmatch.fnmatch(name, cfg.select)]
    if not names:
        raise ConfigError(f'no experiment matches {cfg.select!r}')
    out_dir = Path(cfg.output_dir)
    reports = []
    for name in names:
        # each report is on disk before the next experiment starts
        report = run_experiment(ExperimentConfig(name, cfg.experiment_overrides(name), cfg.seed, cfg.processes))
        write_report(report, out_dir, cfg.format)
        reports.append(report)
    summary_table(reports).to_csv(out_dir / 'summary.csv', index=False)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAILED


def cmd_gen(cfg: RunConfig) -> int:
    instances = []
    for index in range(cfg.count):
        gen = GenConfig(seed=derive_seed(cfg.seed, index))
        couple = random_couple(gen, dim=cfg.dim)
        instances.append({
            'couple': couple_to_dict(couple),
            'x': complex_out(random_vector(gen, couple.dim)),
            'theta': cfg.theta,
        })
    sys.stdout.write(dumps(instances[0] if cfg.count == 1 else {'instances': instances}))
    return EXIT_OK


COMMANDS = {'norm': cmd_norm, 'experiment': cmd_experiment, 'suite': cmd_suite, 'gen': cmd_gen}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(name)s %(levelname)s %(message)s',
    )
    if args.threads:
        torch.set_num_threads(args.threads)

    try:
        file_values = read_json(args.config) if args.config else {}
        if not isinstance(file_values, dict):
            raise ConfigError('config file must hold a JSON object')
        flags = {k: v for k, v in vars(args).items() if k not in ('config', 'threads', 'verbose', 'command')}
        if flags.get('thetas') is not None:
            flags['thetas'] = tuple(flags['thetas'])
        cfg = RunConfig.from_sources(args.command, file_values, flags)
        return COMMANDS[cfg.command](cfg)
    except ValueError as exc:
        logger.error('%s', exc)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
