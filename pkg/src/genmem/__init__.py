"""Generalization-memorization kernel classifiers (hgmm, sgmm) with svm baselines."""

from .dataset import Dataset, load_csv
from .influence import InfluenceSpec
from .kernel import KernelSpec
from .models import ModelSpec, TrainedModel, predict, train

__all__ = ["Dataset", "InfluenceSpec", "KernelSpec", "ModelSpec", "TrainedModel", "load_csv", "predict", "train"]
__version__ = "0.1.0"
