"""Autoregressive baseline: ridge regression on the flattened standardized window."""
from typing import Dict

import numpy as np

DEFAULT_RIDGE = 1e-3


def fit(X: np.ndarray, y: np.ndarray, ridge: float = DEFAULT_RIDGE) -> Dict[str, np.ndarray]:
    """Closed-form fit; the intercept is not penalized."""
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    flat = np.asarray(X, dtype=float).reshape(len(X), -1)
    y = np.asarray(y, dtype=float)
    design = np.hstack([flat, np.ones((len(flat), 1))])
    penalty = ridge * np.eye(design.shape[1])
    penalty[-1, -1] = 0.0
    solution = np.linalg.lstsq(design.T @ design + penalty, design.T @ y, rcond=None)[0]
    return {"coef": solution[:-1], "intercept": solution[-1:]}


def predict(params: Dict[str, np.ndarray], X: np.ndarray) -> np.ndarray:
    flat = np.asarray(X, dtype=float).reshape(len(X), -1)
    return flat @ params["coef"] + params["intercept"][0]
