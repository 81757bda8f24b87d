"""
Feedforward ANN (one tanh hidden layer, linear outputs) trained with
Levenberg-Marquardt, and the evolutionary momentum local search that refines it.
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import ArgumentError, InvariantViolation, SizeError, TrainingStalledError
from .dataset import Dataset, SplitDataset

logger = logging.getLogger(__name__)

LM_LAMBDA_START = 1e-3
LM_LAMBDA_MAX = 1e10
LM_MAX_EPOCHS = 200
LM_PATIENCE = 6
LM_GRAD_TOL = 1e-7
EA_POPULATION = 10
EA_JITTER = 1e-3
# Samples per Jacobian block when accumulating J^T J
JACOBIAN_CHUNK = 256


def zscore_stats(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std; zero std is replaced by 1."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


@dataclass(frozen=True, eq=False)
class AnnModel:
    """Layer sizes [F, N_h, C], weights, and the z-score stats of the training set."""

    w1: np.ndarray  # (N_h, F)
    b1: np.ndarray  # (N_h,)
    w2: np.ndarray  # (C, N_h)
    b2: np.ndarray  # (C,)
    mean: np.ndarray
    std: np.ndarray

    kind = "ann"

    @property
    def layer_sizes(self) -> List[int]:
        return [self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]]

    @property
    def n_features(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def outputs(self, X: np.ndarray) -> np.ndarray:
        Z = self.normalize(np.atleast_2d(X))
        return np.tanh(Z @ self.w1.T + self.b1) @ self.w2.T + self.b2

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Argmax of outputs; ties go to the lowest class id."""
        return np.argmax(self.outputs(X), axis=1)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def with_vector(self, w: np.ndarray) -> "AnnModel":
        h, f = self.w1.shape
        c = self.w2.shape[0]
        parts = np.split(np.asarray(w, dtype=float), np.cumsum([h * f, h, c * h]))
        return replace(
            self,
            w1=parts[0].reshape(h, f),
            b1=parts[1],
            w2=parts[2].reshape(c, h),
            b2=parts[3],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "w1": self.w1,
            "b1": self.b1,
            "w2": self.w2,
            "b2": self.b2,
            "mean": self.mean,
            "std": self.std,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AnnModel":
        arrays = {k: np.array(data[k], dtype=float) for k in ("w1", "b1", "w2", "b2", "mean", "std")}
        return cls(**arrays)


def init_ann(n_features: int, n_h: int, n_classes: int, mean, std, seed: int) -> AnnModel:
    rng = np.random.default_rng(seed)
    return AnnModel(
        w1=rng.normal(0.0, 1.0 / np.sqrt(n_features), size=(n_h, n_features)),
        b1=rng.uniform(-0.5, 0.5, size=n_h),
        w2=rng.normal(0.0, 1.0 / np.sqrt(n_h), size=(n_classes, n_h)),
        b2=np.zeros(n_classes),
        mean=np.asarray(mean, dtype=float),
        std=np.asarray(std, dtype=float),
    )


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[np.asarray(y, dtype=int)]


def _jacobian_block(model: AnnModel, Z: np.ndarray) -> np.ndarray:
    """d outputs / d parameters for normalized inputs Z, shape (n*C, P)."""
    n = len(Z)
    c, h = model.w2.shape
    hidden = np.tanh(Z @ model.w1.T + model.b1)
    g = model.w2[None, :, :] * (1.0 - hidden**2)[:, None, :]  # (n, C, H)
    d_w1 = (g[:, :, :, None] * Z[:, None, None, :]).reshape(n, c, -1)
    d_w2 = np.einsum("kl,nj->nklj", np.eye(c), hidden).reshape(n, c, c * h)
    d_b2 = np.broadcast_to(np.eye(c), (n, c, c))
    return np.concatenate([d_w1, g, d_w2, d_b2], axis=2).reshape(n * c, -1)


def _normal_equations(model: AnnModel, Z: np.ndarray, T: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """J^T J, J^T r and SSE accumulated over sample blocks."""
    p = model.to_vector().size
    jtj = np.zeros((p, p))
    jtr = np.zeros(p)
    sse = 0.0
    for start in range(0, len(Z), JACOBIAN_CHUNK):
        z = Z[start:start + JACOBIAN_CHUNK]
        r = (_forward(model, z) - T[start:start + JACOBIAN_CHUNK]).ravel()
        J = _jacobian_block(model, z)
        jtj += J.T @ J
        jtr += J.T @ r
        sse += float(r @ r)
    return jtj, jtr, sse


def _forward(model: AnnModel, Z: np.ndarray) -> np.ndarray:
    return np.tanh(Z @ model.w1.T + model.b1) @ model.w2.T + model.b2


def _sse(model: AnnModel, Z: np.ndarray, T: np.ndarray) -> float:
    r = _forward(model, Z) - T
    return float(np.sum(r * r))


def accuracy(model: Any, data: Dataset) -> float:
    """Share of examples of data the model labels correctly (0 for empty data)."""
    if len(data) == 0:
        return 0.0
    return float(np.mean(model.predict(data.X) == data.y))


def train_ann(
    split: SplitDataset,
    n_h: int,
    seed: int,
    max_epochs: int = LM_MAX_EPOCHS,
    patience: int = LM_PATIENCE,
) -> AnnModel:
    """
    Train a one-hidden-layer ANN on one-hot targets with Levenberg-Marquardt.

    Each epoch takes one accepted damped Gauss-Newton step (lambda x10 on a
    failed step, /10 on success). Training stops when the cross-validation MSE
    has not improved for `patience` epochs, after max_epochs, or when the
    gradient norm falls below 1e-7; the best-CV weights are returned.

    Args:
        split: train/cv/test data (an empty cv set monitors the training error)
        n_h: hidden neurons
        seed: weight initialization seed

    Returns:
        AnnModel
    """
    if n_h < 1:
        raise ArgumentError(f"n_h must be at least 1, got {n_h}")
    train, cv = split.train, split.cv
    if len(train) == 0:
        raise SizeError("Training set is empty")
    c = split.n_classes

    mean, std = zscore_stats(train.X)
    model = init_ann(train.n_features, n_h, c, mean, std, seed)
    Z, T = model.normalize(train.X), one_hot(train.y, c)
    monitor = cv if len(cv) else train
    Zc, Tc = model.normalize(monitor.X), one_hot(monitor.y, c)

    lam = LM_LAMBDA_START
    best_model, best_cv = model, _sse(model, Zc, Tc) / len(monitor)
    stale = 0
    stop = "max epochs"
    for epoch in range(1, max_epochs + 1):
        jtj, jtr, sse = _normal_equations(model, Z, T)
        if np.linalg.norm(jtr) < LM_GRAD_TOL:
            stop = "gradient tolerance"
            break

        w = model.to_vector()
        accepted = None
        while accepted is None:
            try:
                step = np.linalg.solve(jtj + lam * np.eye(len(w)), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                if lam > LM_LAMBDA_MAX:
                    raise TrainingStalledError(
                        f"Normal equations stayed singular up to lambda={lam:.3g}"
                    ) from None
                continue

            candidate = model.with_vector(w + step)
            new_sse = _sse(candidate, Z, T) if np.all(np.isfinite(step)) else np.inf
            if new_sse < sse:
                accepted = candidate
                lam = max(lam / 10.0, 1e-300)
            else:
                lam *= 10.0
                if lam > LM_LAMBDA_MAX:
                    break

        if accepted is None:
            stop = "damping limit"
            break
        if _sse(accepted, Z, T) >= sse:
            raise InvariantViolation("Accepted LM step did not reduce the training SSE")
        model = accepted

        cv_mse = _sse(model, Zc, Tc) / len(monitor)
        if cv_mse < best_cv:
            best_model, best_cv, stale = model, cv_mse, 0
        else:
            stale += 1
            if stale >= patience:
                stop = "early stop"
                break

    logger.debug(f"LM training ({n_h} hidden) stopped: {stop}, best CV MSE {best_cv:.4g}")
    return best_model


@dataclass(frozen=True, eq=False)
class EaState:
    """Momentum constant m, gain g and the running weight increment."""

    m: float
    g: float
    delta_w: np.ndarray

    def __post_init__(self):
        check_ea_params(self.m, self.g)
        object.__setattr__(self, "delta_w", np.asarray(self.delta_w, dtype=float))

    def step(self, w: np.ndarray) -> "EaState":
        return EaState(m=self.m, g=self.g, delta_w=ea_step(self.delta_w, w, self.m, self.g))


def check_ea_params(m: float, g: float) -> None:
    if not 0.0 < m < 1.0:
        raise ArgumentError(f"Momentum constant m must be in (0, 1), got {m}")
    if not 0.0 < g < 0.1:
        raise ArgumentError(f"Gain g must be in (0, 0.1), got {g}")


def ea_step(delta_w: np.ndarray, w: np.ndarray, m: float, g: float) -> np.ndarray:
    """Momentum update: next increment = m * delta_w + (1 - m) * g * w."""
    return m * np.asarray(delta_w, dtype=float) + (1.0 - m) * g * np.asarray(w, dtype=float)


def ea_refine(
    model: AnnModel,
    split: SplitDataset,
    m: float,
    g: float = 0.01,
    generations: int = 20,
    seed: int = 0,
    population: int = EA_POPULATION,
) -> AnnModel:
    """
    Local search around a trained ANN with momentum weight updates.

    A population seeded at the input weights takes momentum steps plus Gaussian
    jitter (sigma = 1e-3 * |W|); an individual keeps a step only when its CV
    accuracy does not drop. Returns the best-CV individual, so the result is
    never worse than the input on the CV set.
    """
    if generations < 0:
        raise ArgumentError(f"generations must be non-negative, got {generations}")
    if generations == 0:
        return model
    check_ea_params(m, g)

    monitor = split.cv if len(split.cv) else split.train
    rng = np.random.default_rng(seed)
    w0 = model.to_vector()
    base = accuracy(model, monitor)
    weights = [w0.copy() for _ in range(population)]
    states = [EaState(m=m, g=g, delta_w=np.zeros_like(w0)) for _ in range(population)]
    scores = [base] * population

    for _ in range(generations):
        for k in range(population):
            state = states[k].step(weights[k])
            sigma = EA_JITTER * np.linalg.norm(weights[k])
            dw = state.delta_w + rng.normal(0.0, sigma, size=w0.size)
            trial = weights[k] + dw
            if not np.all(np.isfinite(trial)):
                continue
            score = accuracy(model.with_vector(trial), monitor)
            if score >= scores[k]:
                weights[k] = trial
                states[k] = EaState(m=m, g=g, delta_w=dw)
                scores[k] = score

    best = int(np.argmax(scores))
    if scores[best] < base:
        raise InvariantViolation("EA refinement lowered CV accuracy")
    logger.debug(f"EA refinement: CV accuracy {base:.4f} -> {scores[best]:.4f}")
    return model.with_vector(weights[best])
