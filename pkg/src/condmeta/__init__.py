"""Conditional meta-learning of biases for regularized linear learners.

Tasks carry side information ``s``; a conditioning function
``tau(s) = M Phi(s) + b`` supplies the bias ``theta`` used by an inner
biased-regularization or fine-tuning algorithm, and ``(M, b)`` is learned by
SGD on a convex surrogate meta-loss.
"""

from .core import (
    ABSOLUTE,
    ConditioningParams,
    Dataset,
    DimensionError,
    EmptyDataError,
    Loss,
    NumericInputError,
    ParameterError,
    SideInfo,
    TaskInstance,
    apply_tau,
    loss_eval,
    squared_loss,
)
from .features import FeatureMap, make_feature_map, rff_new, zero_map
from .inner import InnerConfig, InnerResult, run_inner, solve_batch, solve_online
from .kernels import KernelFn, KernelModel, kernel_predict, kernel_train_meta
from .meta import (
    MetaConfig,
    MetaTrainResult,
    meta_gradient,
    surrogate_loss,
    theoretical_hyperparams,
    train_meta,
    train_meta_grid,
)

__version__ = "0.1.0"
