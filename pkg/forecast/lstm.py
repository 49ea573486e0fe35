"""
Stacked LSTM regressor in numpy: one or two recurrent layers and a linear readout of the
last hidden state. Gate blocks are stacked in the order input, forget, output, candidate.

Parameters live in a plain dict so the optimizers, the gradient check and the model file
can treat them uniformly:
    W<l>  (4·H_l, D_l + H_l)   b<l>  (4·H_l,)       for each layer l
    Wy    (H_last,)            by    (1,)
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np

Params = Dict[str, np.ndarray]


class ShapeMismatchError(ValueError):
    """Input or parameter shapes do not fit the model."""


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def layer_count(params: Params) -> int:
    return sum(1 for name in params if name.startswith("W") and name != "Wy")


def param_names(n_layers: int) -> List[str]:
    names = []
    for layer in range(n_layers):
        names += [f"W{layer}", f"b{layer}"]
    return names + ["Wy", "by"]


def init_params(n_features: int, hidden: Sequence[int], rng: np.random.Generator) -> Params:
    """Glorot-uniform weights, forget-gate bias 1, other biases 0."""
    if not 1 <= len(hidden) <= 2:
        raise ValueError(f"Expected one or two recurrent layers, got {len(hidden)}")
    params: Params = {}
    d_in = n_features
    for layer, h in enumerate(hidden):
        if h < 1:
            raise ValueError(f"Hidden units must be >= 1, got {h}")
        limit = np.sqrt(6.0 / (d_in + h + 4 * h))
        params[f"W{layer}"] = rng.uniform(-limit, limit, size=(4 * h, d_in + h))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        params[f"b{layer}"] = b
        d_in = h
    limit = np.sqrt(6.0 / (d_in + 1))
    params["Wy"] = rng.uniform(-limit, limit, size=d_in)
    params["by"] = np.zeros(1)
    return params


def check_shapes(params: Params, n_features: int) -> None:
    d_in = n_features
    for layer in range(layer_count(params)):
        W, b = params[f"W{layer}"], params[f"b{layer}"]
        h = W.shape[0] // 4
        if W.shape != (4 * h, d_in + h) or b.shape != (4 * h,):
            raise ShapeMismatchError(
                f"Layer {layer}: W{W.shape} / b{b.shape} do not fit {d_in} inputs and {h} units"
            )
        d_in = h
    if params["Wy"].shape != (d_in,) or params["by"].shape != (1,):
        raise ShapeMismatchError(f"Readout Wy{params['Wy'].shape} / by{params['by'].shape} do not fit {d_in} units")


def _layer_forward(W: np.ndarray, b: np.ndarray, inputs: np.ndarray):
    n, steps, _ = inputs.shape
    h_units = W.shape[0] // 4
    h = np.zeros((n, h_units))
    c = np.zeros((n, h_units))
    outputs = np.empty((n, steps, h_units))
    cache = []
    for t in range(steps):
        z = np.concatenate([inputs[:, t, :], h], axis=1)
        a = z @ W.T + b
        i = _sigmoid(a[:, :h_units])
        f = _sigmoid(a[:, h_units:2 * h_units])
        o = _sigmoid(a[:, 2 * h_units:3 * h_units])
        g = np.tanh(a[:, 3 * h_units:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        outputs[:, t, :] = h
        cache.append((z, i, f, o, g, c_prev, tc))
    return outputs, cache


def _layer_backward(W: np.ndarray, cache, d_outputs: np.ndarray):
    n, steps, h_units = d_outputs.shape
    d_in = W.shape[1] - h_units
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[0])
    d_inputs = np.zeros((n, steps, d_in))
    dh_next = np.zeros((n, h_units))
    dc_next = np.zeros((n, h_units))
    for t in reversed(range(steps)):
        z, i, f, o, g, c_prev, tc = cache[t]
        dh = d_outputs[:, t, :] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        da = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)],
            axis=1,
        )
        dW += da.T @ z
        db += da.sum(axis=0)
        dz = da @ W
        d_inputs[:, t, :] = dz[:, :d_in]
        dh_next = dz[:, d_in:]
    return d_inputs, dW, db


def forward(params: Params, X: np.ndarray) -> Tuple[np.ndarray, list]:
    """Standardized predictions for standardized inputs X of shape (N, n_steps, n_features)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ShapeMismatchError(f"Expected input of shape (N, steps, features), got {X.shape}")
    check_shapes(params, X.shape[2])
    caches = []
    seq = X
    for layer in range(layer_count(params)):
        seq, cache = _layer_forward(params[f"W{layer}"], params[f"b{layer}"], seq)
        caches.append(cache)
    last = seq[:, -1, :]
    y_hat = last @ params["Wy"] + params["by"][0]
    return y_hat, [caches, seq]


def backward(params: Params, cache: list, d_yhat: np.ndarray) -> Params:
    caches, top = cache
    n, steps, h_top = top.shape
    grads: Params = {
        "Wy": top[:, -1, :].T @ d_yhat,
        "by": np.array([d_yhat.sum()]),
    }
    d_seq = np.zeros((n, steps, h_top))
    d_seq[:, -1, :] = np.outer(d_yhat, params["Wy"])
    for layer in reversed(range(len(caches))):
        d_seq, dW, db = _layer_backward(params[f"W{layer}"], caches[layer], d_seq)
        grads[f"W{layer}"] = dW
        grads[f"b{layer}"] = db
    return grads


def mse_loss_and_grads(params: Params, X: np.ndarray, y: np.ndarray) -> Tuple[float, Params]:
    y_hat, cache = forward(params, X)
    residual = y_hat - np.asarray(y, dtype=float)
    loss = float(np.mean(residual ** 2))
    grads = backward(params, cache, 2.0 * residual / len(residual))
    return loss, grads


def predict(params: Params, X: np.ndarray) -> np.ndarray:
    return forward(params, X)[0]
