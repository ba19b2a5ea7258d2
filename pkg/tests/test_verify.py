import math

import numpy as np
import pytest

from source.annulus_interpolation import AnnulusSpec, LaurentFamily, certified_F, random_family
from source.config_interpolation import EXPERIMENT_DEFAULTS, EXPERIMENT_ORDER
from source.errors_interpolation import ConfigError
from source.operators_interpolation import canonical_operator
from source.spaces_interpolation import Couple, weighted_lp
from source.verify_interpolation import (
    EffectiveFamilySampler,
    ExperimentConfig,
    _coefficient_images,
    cauchy_subsequence,
    run_experiment,
    run_suite,
    summary_table,
    three_line_ratio,
)


def _run(name, **overrides):
    return run_experiment(ExperimentConfig(name, overrides, processes=0))


def test_config_rejects_unknown_names():
    with pytest.raises(ConfigError):
        ExperimentConfig('no_such_experiment')
    with pytest.raises(ConfigError):
        ExperimentConfig('reiteration', {'trails': 3})


def test_config_echo_and_seeds():
    cfg = ExperimentConfig('reiteration', {'trials': 5})
    echo = cfg.echo()
    assert echo['trials'] == 5 and echo['experiment'] == 'reiteration'
    assert cfg.trial_seed(1) != cfg.trial_seed(2)
    assert cfg.trial_seed(1) != ExperimentConfig('duality').trial_seed(1)


def test_three_line_ratio_of_constants():
    """A constant family satisfies the three lines bound with constant 1."""
    couple = Couple(weighted_lp(1.0, [1.0, 2.0]), weighted_lp(math.inf, [1.0, 0.5]))
    f = LaurentFamily.constant([1.0, -2.0j], 2)
    assert three_line_ratio(f, couple, 0.5, AnnulusSpec(32)) <= 1.0 + 1e-12


def test_three_lines_records():
    report = _run('three_lines', trials=9, n_max=2)
    assert len(report.records) == 9
    for record in report.records:
        assert record['log_convexity_margin'] <= 1e-9 * max(1.0, record['log_convexity_scale'])
        if record['kind'] != 'random':
            assert record['c_obs'] == pytest.approx(record['c_obs_refined'], rel=1e-12)
            assert record['c_obs'] <= 1.0 + 1e-9, f"trial {record['trial']}: {record['c_obs']}"


def test_reiteration_passes():
    report = _run('reiteration', trials=30, spot_checks=2, K=4, M=32)
    assert report.passed, report.statistics
    assert report.statistics['max_parameter_error'] < 1e-12


def test_reiteration_forced_failure():
    report = _run('reiteration', trials=3, spot_checks=0, tolerance=0.0)
    assert not report.passed


def test_reports_are_deterministic():
    a = _run('reiteration', trials=10, spot_checks=1, K=4, M=32)
    b = _run('reiteration', trials=10, spot_checks=1, K=4, M=32)
    assert a.to_dict() == b.to_dict()
    assert 'wall_time' not in a.to_dict()


@pytest.mark.slow
def test_oracle_match():
    report = _run('oracle_match', trials=3, n_max=2, K=16, M=128)
    assert report.passed, report.statistics
    assert report.statistics['ratio_min'] >= 1.0 - 1e-6
    for record in report.records:
        assert record['ratio_refined_solve'] <= record['ratio'] * 1.01


def test_smoothing():
    report = _run(
        'smoothing', trials=3, n_max=2, K=8, M=64, N_max=8,
        offsets=(4, 8), tail_width=4, tail_trials=2, thetas=(0.5,), tolerance=1.0,
    )
    assert report.passed, report.statistics
    assert report.statistics['ratio_max'] <= 3.01
    assert report.statistics['multiplier_k6_N4'] == 0.5


def test_coefficient_decay():
    report = _run('coefficient_decay', samples=3, thetas=(0.25, 0.75))
    assert report.passed, report.statistics
    summaries = [r for r in report.records if r['part'] == 'decay_summary']
    assert all(r['unimodal'] and r['decayed'] for r in summaries)


def test_compactness_propagation():
    report = _run('compactness_propagation', trials=6, steps=4, k_max=4, thetas=(0.5,))
    assert report.passed, report.statistics
    consecutive = [r for r in report.records if r['part'] == 'consecutive']
    assert len(consecutive) == 4 == report.statistics['chain_length'] - 1
    for record in consecutive:
        assert record['coefficient_gap'] > 0.0
        assert record['difference'] <= record['bound'] * (1.0 + 1e-9) + 1e-12


@pytest.mark.slow
def test_duality():
    report = _run('duality', trials=6, spot_checks=1, K=16, M=128)
    assert report.passed, report.statistics
    assert report.header, "duality reports carry the finite-dimension note"
    assert report.statistics['exponent_half_half'] == 0.75


def test_riesz():
    report = _run('riesz_projection', trials=10, samples=40, K=8, M=64, offsets=(4,))
    assert report.passed, report.statistics
    assert report.statistics['eta_monotone']
    assert 0.0 < report.statistics['riesz_H_ratio_max']
    assert len([r for r in report.records if r['part'] == 'h_ratio']) == 5


def test_gp_containment():
    report = _run('gp_containment', trials=3, K=4)
    assert report.passed, report.statistics


def test_interpolation_property():
    report = _run('interpolation_property', trials=4)
    assert report.passed, report.statistics


def test_effective_sampler():
    T = canonical_operator(n=3)
    spec = AnnulusSpec(64)
    sampler = EffectiveFamilySampler(1, T.source, offset=2, width=3, spec=spec)
    f = sampler.sample(0)
    assert not np.any(f.coefficients[np.abs(f.ks) <= 2])
    assert certified_F(f, T.source, spec) == pytest.approx(1.0, rel=1e-12)


def test_suite_order_and_summary():
    overrides = {
        'reiteration': {'trials': 3, 'spot_checks': 0},
        'interpolation_property': {'trials': 2},
    }
    reports = run_suite(['interpolation_property', 'reiteration'], overrides)
    assert [r.experiment for r in reports] == ['reiteration', 'interpolation_property']
    table = summary_table(reports)
    assert list(table['experiment']) == ['reiteration', 'interpolation_property']
    assert table['passed'].all()


FAST = {
    'three_lines': {'trials': 1, 'K': 4, 'M': 32},
    'oracle_match': {'trials': 1, 'n_max': 2, 'K': 4, 'M': 32},
    'reiteration': {'trials': 1, 'spot_checks': 1, 'K': 4, 'M': 32},
    'smoothing': {'trials': 1, 'K': 8, 'M': 64, 'N_max': 8, 'offsets': (4,), 'tail_width': 4, 'tail_trials': 1},
    'coefficient_decay': {'k_max': 6, 'k_far': 5, 'samples': 1, 'K': 4, 'M': 32},
    'compactness_propagation': {'trials': 1, 'steps': 1, 'k_max': 2, 'K': 4, 'M': 32},
    'duality': {'trials': 1, 'spot_checks': 1, 'K': 4, 'M': 32},
    'riesz_projection': {'trials': 1, 'samples': 2, 'K': 4, 'M': 32, 'offsets': (4,), 'h_samples': 1},
    'gp_containment': {'trials': 1, 'K': 2},
    'interpolation_property': {'trials': 1},
}


@pytest.mark.parametrize('name', EXPERIMENT_ORDER)
def test_every_experiment_runs_one_trial(name):
    """Each experiment only reads keys it declares, so a single trial runs to a report."""
    assert set(FAST[name]) <= set(EXPERIMENT_DEFAULTS[name])
    report = _run(name, **FAST[name])
    assert report.experiment == name
    assert report.records
    assert isinstance(report.passed, bool)


def test_fast_overrides_cover_the_suite():
    assert set(FAST) == set(EXPERIMENT_ORDER)


def test_missing_parameter_is_a_config_error():
    cfg = ExperimentConfig('reiteration', processes=0)
    with pytest.raises(ConfigError):
        cfg['thetas']


def test_experiment_alias():
    cfg = ExperimentConfig('riesz_lemma8', {'h_samples': 2})
    assert cfg.experiment == 'riesz_projection'
    assert cfg.index == ExperimentConfig('riesz_projection').index


def test_process_pool_keeps_reports_identical():
    cfg = {'trials': 6, 'spot_checks': 1, 'K': 4, 'M': 32}
    serial = run_experiment(ExperimentConfig('reiteration', cfg, processes=0))
    pooled = run_experiment(ExperimentConfig('reiteration', cfg, processes=2))
    assert serial.to_dict() == pooled.to_dict()


def test_cauchy_subsequence_is_a_chain_without_repeats():
    T = canonical_operator()
    families = [random_family(seed, 0, T.source.dim, 4) for seed in range(7)]
    images = [_coefficient_images(T, f, 2) for f in families]
    chain = cauchy_subsequence(T, images, 2, 5)
    assert chain[0] == 0 and len(chain) == 5
    assert len(set(chain)) == len(chain)
    assert cauchy_subsequence(T, images, 2, 20) == cauchy_subsequence(T, images, 2, 7)
    assert sorted(cauchy_subsequence(T, images, 2, 20)) == list(range(7))


def test_decay_is_relative_to_the_zero_coefficient():
    report = _run('coefficient_decay', samples=1, thetas=(0.5,))
    decay = [r for r in report.records if r['part'] == 'decay']
    zero = next(r for r in decay if r['k'] == 0)
    assert zero['relative'] == pytest.approx(1.0)
    summary = next(r for r in report.records if r['part'] == 'decay_summary')
    assert summary['peak'] == zero['bound']
