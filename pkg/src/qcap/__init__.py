"""Numerics for one-shot capacity quantities and the non-convexity constructions
for private and environment-assisted classical capacity."""

from .qmat import ATOL, DensityMatrix, PureState
from .channels import KrausChannel, HelperIsometry, FlaggedBranch
from .infomeasures import CQEnsemble, InfoValue

__all__ = [
    "ATOL",
    "DensityMatrix",
    "PureState",
    "KrausChannel",
    "HelperIsometry",
    "FlaggedBranch",
    "CQEnsemble",
    "InfoValue",
]
__version__ = "0.1.0"
