"""Desk-scale workbench for machine unlearning and its evaluation.

Trains small fully connected classifiers, applies three forgetting
algorithms (retraining, training-update reversal, Fisher-noise scrubbing),
and scores forgetting success with an epistemic-uncertainty efficacy
metric, its cheap upper bound, and a black-box membership inference
attack.
"""

__version__ = "0.1.0"

from .data import DatasetSplit, LabeledDataset  # noqa: F401
from .errors import DataFormatError, NumericalFailureError, UnlearnBenchError  # noqa: F401
from .metrics import EfficacyReport, FimDiagonal  # noqa: F401
from .nn import Architecture, ModelParameters, TrainConfig, UpdateLog  # noqa: F401
from .unlearn import FisherConfig  # noqa: F401
