import itertools
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from forecast import linear_ar, lstm
from forecast.dataset import SequenceDataset, Standardizer, split_dataset
from forecast.predictors import PredictorModel
from utils.logger import get_logger

logger = get_logger(__name__)

DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "config" / "forecast_defaults.yaml"
SOLVERS = ("adam", "sgdm")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDivergedError(RuntimeError):
    """Training loss became NaN or infinite."""


@dataclass(frozen=True)
class Hyper:
    solver: str = "adam"
    learning_rate: float = 1e-2
    epochs: int = 200
    drop_factor: float = 0.5
    drop_period: int = 50
    momentum: float = 0.9
    hidden: Tuple[int, ...] = (32, 16)
    batch_size: int = 64
    gradient_threshold: float = 5.0
    n_steps: int = 3
    ridge: float = linear_ar.DEFAULT_RIDGE

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"Unknown solver '{self.solver}', expected one of: {', '.join(SOLVERS)}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 < self.drop_factor <= 1:
            raise ValueError(f"drop_factor must be in (0, 1], got {self.drop_factor}")
        if self.drop_period < 1 or self.batch_size < 1:
            raise ValueError("drop_period and batch_size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not self.gradient_threshold > 0:
            raise ValueError(f"gradient_threshold must be > 0, got {self.gradient_threshold}")

    def learning_rate_at(self, epoch: int) -> float:
        """Piecewise learning-rate schedule: multiplied by drop_factor every drop_period epochs."""
        return self.learning_rate * self.drop_factor ** (epoch // self.drop_period)


def load_default_hyper(path: Union[str, Path] = DEFAULTS_PATH) -> Hyper:
    try:
        with open(path, "r", encoding="utf-8") as file:
            values = yaml.safe_load(file) or {}
    except yaml.YAMLError as e:
        raise ValueError(f"Failed to read hyper-parameters from {path}: {e}") from e
    known = set(Hyper.__dataclass_fields__)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValueError(f"Unknown hyper-parameters in {path}: {unknown}")
    if "hidden" in values:
        values["hidden"] = tuple(int(h) for h in values["hidden"])
    return Hyper(**values)


@dataclass(frozen=True)
class Metrics:
    """RMSE, Pearson r, R² and the slope of predicted on observed (1 for a perfect fit)."""

    rmse: float
    r: float
    r2: float
    slope: float
    n: int

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def metrics(y_true: Sequence[float], y_pred: Sequence[float]) -> Metrics:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError(f"Need two equally long non-empty series, got {y_true.shape} and {y_pred.shape}")
    residual = y_pred - y_true
    rmse = float(np.sqrt(np.mean(residual ** 2)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual ** 2)) / ss_tot if ss_tot > 0 else float("nan")
    var_true = float(np.var(y_true))
    if var_true > 0 and np.var(y_pred) > 0:
        r = float(np.clip(np.corrcoef(y_true, y_pred)[0, 1], -1.0, 1.0))
    else:
        r = 0.0
    slope = float(np.mean((y_true - y_true.mean()) * (y_pred - y_pred.mean())) / var_true) if var_true > 0 else float("nan")
    return Metrics(rmse=rmse, r=r, r2=r2, slope=slope, n=int(y_true.size))


@dataclass
class TrainResult:
    model: PredictorModel
    train_metrics: Optional[Metrics]
    test_metrics: Optional[Metrics]
    loss_history: List[float] = field(default_factory=list)


class _Optimizer:
    """Adam or SGD with momentum over a parameter dict, updated in place."""

    def __init__(self, params: lstm.Params, hyper: Hyper):
        self.hyper = hyper
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: lstm.Params, grads: lstm.Params, lr: float) -> None:
        self.t += 1
        for name, g in grads.items():
            if self.hyper.solver == "adam":
                self.m[name] = ADAM_BETA1 * self.m[name] + (1 - ADAM_BETA1) * g
                self.v[name] = ADAM_BETA2 * self.v[name] + (1 - ADAM_BETA2) * g * g
                m_hat = self.m[name] / (1 - ADAM_BETA1 ** self.t)
                v_hat = self.v[name] / (1 - ADAM_BETA2 ** self.t)
                params[name] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            else:
                self.m[name] = self.hyper.momentum * self.m[name] - lr * g
                params[name] += self.m[name]


def clip_gradients(grads: lstm.Params, threshold: float) -> float:
    """Rescale all gradients together when their global norm exceeds threshold; returns the norm."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > threshold:
        scale = threshold / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def _fit_lstm(Xs, ys, hyper: Hyper, seed: int, log_every: int) -> Tuple[lstm.Params, List[float]]:
    rng = np.random.default_rng(seed)
    params = lstm.init_params(Xs.shape[2], hyper.hidden, rng)
    optimizer = _Optimizer(params, hyper)
    history: List[float] = []
    n = len(ys)
    for epoch in range(hyper.epochs):
        lr = hyper.learning_rate_at(epoch)
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            loss, grads = lstm.mse_loss_and_grads(params, Xs[batch], ys[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"Loss became {loss} at epoch {epoch + 1}, batch starting {start} (lr {lr:g}, solver {hyper.solver})"
                )
            clip_gradients(grads, hyper.gradient_threshold)
            optimizer.step(params, grads, lr)
        epoch_loss = float(np.mean((lstm.predict(params, Xs) - ys) ** 2))
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"Training loss became {epoch_loss} after epoch {epoch + 1} (lr {lr:g})")
        history.append(epoch_loss)
        if log_every and (epoch + 1) % log_every == 0:
            logger.info(f"Epoch {epoch + 1}/{hyper.epochs}: train loss {epoch_loss:.5f}, lr {lr:g}")
    return params, history


def train(
    train_set: SequenceDataset,
    hyper: Hyper = Hyper(),
    seed: int = 0,
    test_set: Optional[SequenceDataset] = None,
    kind: str = "lstm",
    log_every: int = 25,
) -> TrainResult:
    """
    Fit a t+1 predictor on standardized windows by minimizing mean squared error.
    Deterministic for a given (data, hyper, seed).
    """
    if len(train_set) == 0:
        raise ValueError("Cannot train on an empty dataset")
    if kind not in ("lstm", "linear_ar"):
        raise ValueError(f"Cannot train a '{kind}' predictor")

    x_scaler = Standardizer.fit(train_set.X)
    y_scaler = Standardizer.fit(train_set.y)
    Xs = x_scaler.transform(train_set.X)
    ys = y_scaler.transform(train_set.y)

    logger.info(f"Training {kind} {train_set.target} model on {len(train_set)} samples ({hyper.solver}, {hyper.epochs} epochs)")
    if kind == "lstm":
        params, history = _fit_lstm(Xs, ys, hyper, seed, log_every)
    else:
        params, history = linear_ar.fit(Xs, ys, hyper.ridge), []

    model = PredictorModel(
        kind=kind,
        target=train_set.target,
        n_steps=train_set.n_steps,
        features=train_set.features,
        params=params,
        x_scaler=x_scaler,
        y_scaler=y_scaler,
        metadata={
            "solver": hyper.solver,
            "epochs": hyper.epochs,
            "seed": seed,
            "learning_rate": hyper.learning_rate,
            "hidden": list(hyper.hidden) if kind == "lstm" else [],
            "train_samples": len(train_set),
        },
    )
    train_metrics = metrics(train_set.y, model.predict_raw(train_set.X))
    test_metrics = None
    if test_set is not None and len(test_set):
        test_metrics = metrics(test_set.y, model.predict_raw(test_set.X))
        logger.info(
            f"{kind} {train_set.target}: test RMSE {test_metrics.rmse:.4f}, r {test_metrics.r:.3f}, "
            f"R² {test_metrics.r2:.3f}, slope {test_metrics.slope:.3f}"
        )
    return TrainResult(model=model, train_metrics=train_metrics, test_metrics=test_metrics, loss_history=history)


def grid_search(
    dataset: SequenceDataset,
    grid: Mapping[str, Sequence],
    seed: int = 0,
    base: Hyper = Hyper(),
    validation_fraction: float = 0.2,
    kind: str = "lstm",
) -> Tuple[Hyper, pd.DataFrame]:
    """
    Try every combination in grid (hyper-parameter name → candidate values), scoring by
    RMSE on the latest validation_fraction of the training samples.
    """
    unknown = sorted(set(grid) - set(Hyper.__dataclass_fields__))
    if unknown:
        raise ValueError(f"Unknown hyper-parameters in grid: {unknown}")
    fit_part, validation = split_dataset(dataset, 1.0 - validation_fraction)
    if len(fit_part) == 0 or len(validation) == 0:
        raise ValueError(f"Dataset of {len(dataset)} samples is too small for a validation split")

    names = list(grid)
    rows = []
    best, best_rmse = base, float("inf")
    for values in itertools.product(*(grid[n] for n in names)):
        candidate = replace(base, **dict(zip(names, values)))
        result = train(fit_part, candidate, seed=seed, test_set=validation, kind=kind, log_every=0)
        rmse = result.test_metrics.rmse
        rows.append({**dict(zip(names, values)), "val_rmse": rmse, "val_r": result.test_metrics.r})
        if rmse < best_rmse:
            best, best_rmse = candidate, rmse
    logger.info(f"Grid search over {len(rows)} combinations: best validation RMSE {best_rmse:.4f}")
    return best, pd.DataFrame(rows)
