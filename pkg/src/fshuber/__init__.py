"""Exact collapsed marginal likelihood for finite-support Huber contamination models.

The contamination fraction (Beta prior) and the contaminating distribution
(Dirichlet prior) are integrated out in closed form; the remaining sum over
count allocations is evaluated by a forward convolution over support atoms.
"""

from .collapsed import CollapsedLikelihoodProblem, PlainLikelihoodProblem
from .core import CountVector, LogScaledVector, NuisancePrior, ProbabilityVector
from .kernels import BACKEND
from .models import BinomialModel, TwoComponentBinomialModel, make_model
from .score import BetaThetaPrior

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BetaThetaPrior",
    "BinomialModel",
    "CollapsedLikelihoodProblem",
    "CountVector",
    "LogScaledVector",
    "NuisancePrior",
    "PlainLikelihoodProblem",
    "ProbabilityVector",
    "TwoComponentBinomialModel",
    "make_model",
]
