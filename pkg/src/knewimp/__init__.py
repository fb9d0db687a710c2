"""Missing-value imputation by kernelized particle flow.

The pipeline alternates two phases: estimating the score (log-density
gradient) of the joint data distribution with a small MLP trained by
denoising score matching, and moving the missing coordinates of every row
along a kernel-smoothed, attraction-regularized velocity field integrated
with forward Euler. Masks for the standard missingness mechanisms and the
usual pointwise/distributional metrics round out the toolkit.
"""

from .imputer import (
    ImputationResult,
    TrajectoryPoint,
    WgfConfig,
    euler_impute,
    knewimp,
    masked_score,
    mean_impute,
    velocity,
)
from .kernel import KernelConfig, grad_gram_second, gram, median_bandwidth
from .metrics import (
    MetricReport,
    evaluate,
    mae,
    wasserstein2,
    wasserstein2_bruteforce,
)
from .missingness import (
    Mechanism,
    MissingSpec,
    calibrate_bias,
    simulate_mar,
    simulate_mcar,
    simulate_mnar,
)
from .score import (
    DsmConfig,
    ScoreNetwork,
    dsm_loss_and_grad,
    forward,
    init_network,
    train,
)
from .tabular import (
    StandardizationStats,
    TabularDataset,
    destandardize,
    from_complete,
    initialize_missing,
    load_csv,
    standardize,
    write_csv,
)

__all__ = [
    "DsmConfig",
    "ImputationResult",
    "KernelConfig",
    "Mechanism",
    "MetricReport",
    "MissingSpec",
    "ScoreNetwork",
    "StandardizationStats",
    "TabularDataset",
    "TrajectoryPoint",
    "WgfConfig",
    "calibrate_bias",
    "destandardize",
    "dsm_loss_and_grad",
    "euler_impute",
    "evaluate",
    "forward",
    "from_complete",
    "grad_gram_second",
    "gram",
    "init_network",
    "initialize_missing",
    "knewimp",
    "load_csv",
    "mae",
    "masked_score",
    "mean_impute",
    "median_bandwidth",
    "simulate_mar",
    "simulate_mcar",
    "simulate_mnar",
    "standardize",
    "train",
    "velocity",
    "wasserstein2",
    "wasserstein2_bruteforce",
    "write_csv",
]

__version__ = "0.1.0"
