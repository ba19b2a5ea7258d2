import os
from pathlib import Path

import numpy as np
import torch

SEED = 20240601
torch.manual_seed(SEED)
BASE_DIR = Path(__file__).resolve().parents[1]
DATA_DIR = BASE_DIR / "data"
REPORTS_DIR = Path(os.environ.get("INTERP_OUTPUT_DIR", BASE_DIR / "reports"))
SAMPLE_COUPLE_PATH = DATA_DIR / "sample_couple.json"
SAMPLE_EXPECTED_PATH = DATA_DIR / "sample_couple_expected.json"

# Laurent degree and boundary grid; M >= 8 * K and M a power of two
DEFAULT_K = 32
DEFAULT_M = 256
CERTIFY_GRID = 4096

# Worker processes for per-trial fan-out; 0 or 1 runs trials in the calling process
PROCESSES = int(os.environ.get("INTERP_PROCESSES", os.cpu_count() or 1))

THETAS = (0.25, 0.5, 0.75)
P_VALUES = (1.0, 1.5, 2.0, 4.0, np.inf)
LOG_WEIGHT_RANGE = (-1.0, 1.0)

SOLVER = {
    'multistarts': 4,
    'max_iter': 600,
    'window': 200,
    'rel_tol': 1e-7,
    'lr0': 0.05,
    'ascent_lr': 0.05,
    'ascent_steps': 300,
    'print_every': 250,
}

# Phase grid for p = inf extreme points, refined on demand
PHASES = 16
PHASES_REFINED = 64
ENUMERATION_LIMIT = 70000
WIDE_BRACKET = 1e-6

# Most recently used norm results kept per operator
OPERATOR_CACHE_SIZE = 256

# Canonical compact operator: diag(2^-i) between (l_p(1), l_p(e^{step i})) and (l_p(1), l_p(1))
CANONICAL = {
    'n': 10,
    'p': 2.0,
    'step': 1.0,
}

EXPERIMENT_ORDER = (
    'three_lines',
    'oracle_match',
    'reiteration',
    'smoothing',
    'coefficient_decay',
    'compactness_propagation',
    'duality',
    'riesz_projection',
    'gp_containment',
    'interpolation_property',
)
EXPERIMENT_ALIASES = {'riesz_lemma8': 'riesz_projection'}

EXPERIMENT_DEFAULTS = {
    'three_lines': {'trials': 500, 'n_max': 4, 'K': 8, 'M': 64, 'thetas': THETAS, 'stability': 2.0, 'decay': 0.25},
    'oracle_match': {
        'trials': 100, 'n_max': 6, 'K': 32, 'M': 256, 'thetas': THETAS,
        'ratio_low': 1.0 - 1e-6, 'ratio_high': 1.15, 'refine_tolerance': 1e-2,
    },
    'reiteration': {'trials': 1000, 'spot_checks': 6, 'n_max': 3, 'K': 16, 'M': 128, 'tolerance': 1e-12},
    'smoothing': {
        'trials': 1000, 'K': 32, 'M': 256, 'n_max': 3, 'N_max': 64, 'bound': 3.01,
        'offsets': (4, 8, 16, 32), 'tail_width': 8, 'tail_trials': 20, 'thetas': THETAS,
        'tolerance': 1e-3,
    },
    'coefficient_decay': {
        'k_max': 48, 'k_far': 40, 'thetas': THETAS, 'decay': 1e-3,
        'samples': 20, 'K': 16, 'M': 128, 'delta': 0.05,
    },
    'compactness_propagation': {
        'k_max': 8, 'thetas': THETAS, 'slack': 1e-9,
        'N': 4, 'steps': 12, 'trials': 40, 'K': 8, 'M': 64,
    },
    'duality': {
        'trials': 200, 'spot_checks': 6, 'n_max': 4, 'K': 16, 'M': 128, 'thetas': THETAS,
        'tolerance': 1e-12, 'agreement': 0.10,
    },
    'riesz_projection': {
        'trials': 200, 'n': 4, 'K': 16, 'M': 128, 'riesz_high': 0.05,
        'samples': 400, 'decades': 4, 'grid_points': 9, 'eta_ratio': 0.2,
        'offsets': (4, 8, 16), 'h_samples': 5, 'h_K': 4, 'h_M': 32,
    },
    'gp_containment': {'trials': 60, 'n_max': 4, 'K': 12, 'thetas': THETAS, 'tolerance': 1e-6},
    'interpolation_property': {'trials': 100, 'n_max': 4, 'thetas': THETAS, 'slack': 1e-9},
}
