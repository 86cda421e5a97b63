"""Change point detection on the Hurst index of piecewise fractional Brownian motion.

The Increment Bernoulli Statistic (IBS) estimates ``Lambda(H)``, the
sign-agreement probability of consecutive second-order increments; the
Filtered Derivative with p-Value (FDpV) procedure locates changes of the
windowed IBS and screens them with two-sample tests.
"""

from .detector import (
    Candidate,
    ChangePointReport,
    DetectorConfig,
    FilteredDerivativeTrace,
    Step2Result,
    calibrate_threshold,
    detect,
    filtered_derivative,
    select_potential,
    step2_pvalues,
    windowed_ibs,
)
from .estimators import FDpVDetector, IBSHurstEstimator
from .ibs import (
    HurstEstimate,
    IbsValue,
    estimate_hurst,
    hurst_of_lambda,
    ibs,
    lambda_of_hurst,
    psi,
    psi_sequence,
    rho,
    second_order_increments,
)
from .synthesis import (
    PiecewiseModel,
    SegmentSpec,
    SimulationError,
    fgn,
    fgn_autocovariance,
    simulate_fbm,
    simulate_piecewise_fbm,
)
from .variance import CalibrationError, VarianceTable, cached_variance_table, calibrate_variance

__all__ = [
    "Candidate",
    "CalibrationError",
    "ChangePointReport",
    "DetectorConfig",
    "FDpVDetector",
    "FilteredDerivativeTrace",
    "HurstEstimate",
    "IBSHurstEstimator",
    "IbsValue",
    "PiecewiseModel",
    "SegmentSpec",
    "SimulationError",
    "Step2Result",
    "VarianceTable",
    "cached_variance_table",
    "calibrate_threshold",
    "calibrate_variance",
    "detect",
    "estimate_hurst",
    "fgn",
    "fgn_autocovariance",
    "filtered_derivative",
    "hurst_of_lambda",
    "ibs",
    "lambda_of_hurst",
    "psi",
    "psi_sequence",
    "rho",
    "second_order_increments",
    "select_potential",
    "simulate_fbm",
    "simulate_piecewise_fbm",
    "step2_pvalues",
    "windowed_ibs",
]

__version__ = "0.1.0"
