from .model import TVGPVAE, ElboBreakdown, LatentSpec, PosteriorFactorParams
from .optim import AdamState, adam_step
from .train import NumericalError, TrainResult, evaluate, nll_report, train

__all__ = [
    "TVGPVAE", "ElboBreakdown", "LatentSpec", "PosteriorFactorParams",
    "AdamState", "adam_step", "NumericalError", "TrainResult", "evaluate", "nll_report", "train",
]
