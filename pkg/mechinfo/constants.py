from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Tuple

# ---- Stress metrics ----
DEGENERATE_REL = 1e-6  # sigma_eq below this fraction of the field max is unclassifiable

# ---- Elasticity ----
# Sheet aluminium; inelastic models fall back to this when no elastic block is given.
DEFAULT_E = 70_000.0  # MPa
DEFAULT_NU = 0.33

# ---- Return mapping ----
RETURN_TOL = 1e-10  # relative to sigma0, on f
RETURN_MAX_ITER = 50
FD_GRAD_STEP = 1e-7  # times sigma0, central differences on the equivalent stress
FD_HESS_STEP = 1e-4  # times sigma0, differences of the gradient
BRACKET_GROWTH = 4.0
BRACKET_MAX_EXPAND = 60

# ---- FE solver ----
DEFAULT_DISPLACEMENT = 2.0  # mm
DEFAULT_N_STEPS = 10
DEFAULT_ELEMENT_SIZE = 0.5  # mm
NEWTON_RTOL = 1e-8  # residual / applied-force scale
NEWTON_ATOL = 1e-10  # N, floor for an unloaded state
NEWTON_MAX_ITER = 25
MAX_HALVINGS = 4
MIN_LIGAMENT_ELEMENTS = 2.0
MAX_FEATURES = 6
SNAP_MIN_DETJ = 0.05  # fraction of the undistorted |J|

# ---- Entropy ----
DELTA_ETA = 0.08
DELTA_THETA = 0.15
DELTA_ANGLE = math.radians(15.0)
DELTA_RATIO = 0.1
PLASTIC_GATE = 1e-4  # ebar_p must exceed this to classify
ZERO_ENTROPY_TOL = 1e-3  # nats, "H = 0" acceptance in the shear design

# ---- Synthetic data ----
RESOLUTION_FLOOR = 5e-4  # 0.05 % strain

# ---- Identification ----
LOSS_SENTINEL = 1e12
NM_TOL = 1e-8
NM_MAX_ITER = 300
NM_INITIAL_STEP = 0.05  # fraction of each parameter range
NM_REFLECT, NM_EXPAND, NM_CONTRACT, NM_SHRINK = 1.0, 2.0, 0.5, 0.5
NORMALIZATION_WEIGHT = 1e-2  # YLD2000 (Sigma - 2)^2 penalty

# ---- Design (TPE) ----
TPE_GAMMA = 0.25
TPE_N_CANDIDATES = 24
TPE_N_STARTUP = 10
TPE_PRIOR_WEIGHT = 1.0
DESIGN_BUDGET = 200
DESIGN_SEEDS = (11, 23, 37, 41, 53)

# ---- UQ ----
PROPOSAL_FRACTION = 0.02
BURN_IN_FRACTION = 0.2
CHAIN_LENGTH = 20_000
CACHE_QUANTUM = 1e-6  # fraction of each prior range
CACHE_MAX_ENTRIES = 4096
CREDIBLE_LEVEL = 0.90
MIN_BAND_SAMPLES = 100

# ---- Output ----
FLOAT_FORMAT = ".17g"

# ---- Reference material data ----
# Hill48 + Swift ground truth and the two start points.
HILL48_TRUTH: Dict[str, float] = {"A": 471.92, "sigma0": 123.4, "n": 0.29, "F": 0.278, "G": 0.373, "N": 2.340}
HILL48_THETA1: Dict[str, float] = {"A": 600.0, "sigma0": 90.0, "n": 0.4, "F": 0.5, "G": 0.5, "N": 1.5}
HILL48_THETA2: Dict[str, float] = {"A": 300.0, "sigma0": 150.0, "n": 0.1, "F": 0.13, "G": 0.13, "N": 3.5}
HILL48_BOUNDS: Dict[str, Tuple[float, float]] = {
    "A": (200.0, 800.0),
    "sigma0": (50.0, 250.0),
    "n": (0.05, 0.6),
    "F": (0.05, 1.0),
    "G": (0.05, 0.95),
    "N": (0.5, 5.0),
}

ORTHO_TRUTH: Dict[str, float] = {"E1": 210.0, "E2": 150.0, "nu12": 0.49, "G12": 46.0}
ORTHO_START: Dict[str, float] = {"E1": 100.0, "E2": 100.0, "nu12": 0.33, "G12": 37.59}
ORTHO_BOUNDS: Dict[str, Tuple[float, float]] = {
    "E1": (50.0, 400.0),
    "E2": (50.0, 400.0),
    "nu12": (0.05, 0.6),
    "G12": (10.0, 120.0),
}

YLD2000_ALPHA_TRUTH: Tuple[float, ...] = (0.979, 0.998, 0.885, 1.008, 1.001, 0.965, 0.953, 1.242)
YLD2000_EXPONENT = 8
ALPHA_BOUNDS: Tuple[float, float] = (0.5, 1.6)
SWIFT_BOUNDS: Dict[str, Tuple[float, float]] = {k: HILL48_BOUNDS[k] for k in ("A", "sigma0", "n")}

# Normalized-yield-stress anchors of the truth set (MPa).
ANCHOR_ANGLES: Tuple[float, ...] = (15.0, 30.0, 45.0, 60.0, 75.0, 90.0)
YIELD_STRESS_ANCHORS: Tuple[float, ...] = (118.27, 109.87, 106.89, 111.99, 123.01, 129.72)


# Instrumentation toggles (runtime-togglable)
@dataclass
class DebugFlags:
    trace_newton: bool = False
    trace_return_mapping: bool = False
    trace_trials: bool = True
    chain_report_every: int = 1000


DEBUG = DebugFlags()
