"""Sparse Bayesian logistic classifiers with a diagonal quasi-Newton MAP solver.

The outer loop re-estimates per-weight ARD precisions and prunes irrelevant
basis columns; the inner loop finds the posterior mode with an O(M) diagonal
inverse-Hessian update, so no M x M matrix is ever formed.
"""

from .ard import ArdState, FitReport, SblConfig, classic_sbl_fit, dqn_sbl_fit
from .data_io import SparseDataset, load_libsvm, parse_libsvm
from .dqn import DqnConfig, DqnResult, diag_bfgs_update, dqn_minimize
from .errors import (
    ConvergenceError,
    DataFormatError,
    DqnSblError,
    IllConditionedError,
    OracleGuardError,
)
from .models import BinaryModel, OvoEnsemble, load_model, save_model, train_binary, train_ovo
from .objective import DesignMatrix, MapObjective

__version__ = "0.1.0"

__all__ = [
    "ArdState", "BinaryModel", "ConvergenceError", "DataFormatError", "DesignMatrix",
    "DqnConfig", "DqnResult", "DqnSblError", "FitReport", "IllConditionedError",
    "MapObjective", "OracleGuardError", "OvoEnsemble", "SblConfig", "SparseDataset",
    "classic_sbl_fit", "diag_bfgs_update", "dqn_minimize", "dqn_sbl_fit", "load_libsvm",
    "load_model", "parse_libsvm", "save_model", "train_binary", "train_ovo",
]
