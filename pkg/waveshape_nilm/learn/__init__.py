"""
Classifiers for appliance identification: ANN (Levenberg-Marquardt),
ANN with evolutionary momentum refinement, Gaussian SVM and SAMME AdaBoost.
"""

from enum import Enum
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, Field

from ..errors import LoadError
from ..utils import derive_seed
from .ann import AnnModel, EaState, accuracy, ea_refine, ea_step, train_ann
from .boost import BoostModel, Stump, samme_alpha, train_adaboost
from .dataset import Dataset, LabeledExample, SplitDataset, split
from .predict import confusion_matrix, predict, predict_many
from .svm import SvmModel, train_svm


class Algorithm(str, Enum):
    ANN = "ANN"
    ANN_EA = "ANN+EA"
    SVM = "SVM"
    ADABOOST = "AdaBoost"


class ClassifierParams(BaseModel):
    """Hyperparameters of the four classifiers (model selection may override some)."""

    n_h: int = Field(default=10, ge=1)
    max_epochs: int = Field(default=200, ge=1)
    ea_m: float = Field(default=0.5, gt=0.0, lt=1.0)
    ea_g: float = Field(default=0.01, gt=0.0, lt=0.1)
    ea_generations: int = Field(default=20, ge=0)
    ea_population: int = Field(default=10, ge=1)
    svm_gamma: Optional[float] = Field(default=None, gt=0.0)
    svm_cbox: float = Field(default=10.0, gt=0.0)
    svm_tol: float = Field(default=1e-3, gt=0.0)
    boost_rounds: int = Field(default=50, ge=1)


Model = Union[AnnModel, SvmModel, BoostModel]


def train_model(
    algorithm: Union[Algorithm, str],
    data: SplitDataset,
    params: Optional[ClassifierParams] = None,
    seed: int = 0,
) -> Model:
    """Train one of the four classifiers on a split."""
    algorithm = Algorithm(algorithm)
    params = params or ClassifierParams()
    if algorithm == Algorithm.ANN:
        return train_ann(data, params.n_h, seed, max_epochs=params.max_epochs)
    if algorithm == Algorithm.ANN_EA:
        model = train_ann(data, params.n_h, seed, max_epochs=params.max_epochs)
        return ea_refine(
            model,
            data,
            m=params.ea_m,
            g=params.ea_g,
            generations=params.ea_generations,
            seed=derive_seed(seed, "ea"),
            population=params.ea_population,
        )
    if algorithm == Algorithm.SVM:
        return train_svm(data, gamma=params.svm_gamma, cbox=params.svm_cbox, tol=params.svm_tol)
    return train_adaboost(data, T=params.boost_rounds, seed=seed)


MODEL_KINDS = {cls.kind: cls for cls in (AnnModel, SvmModel, BoostModel)}


def model_from_dict(data: Dict[str, Any]) -> Model:
    kind = data.get("kind")
    if kind not in MODEL_KINDS:
        raise LoadError(f"Unknown model kind {kind!r}")
    return MODEL_KINDS[kind].from_dict(data)


__all__ = [
    "Algorithm",
    "AnnModel",
    "BoostModel",
    "ClassifierParams",
    "Dataset",
    "EaState",
    "LabeledExample",
    "Model",
    "SplitDataset",
    "Stump",
    "SvmModel",
    "accuracy",
    "confusion_matrix",
    "ea_refine",
    "ea_step",
    "model_from_dict",
    "predict",
    "predict_many",
    "samme_alpha",
    "split",
    "train_adaboost",
    "train_ann",
    "train_model",
    "train_svm",
]
