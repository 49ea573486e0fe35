import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from forecast import linear_ar, lstm
from forecast.dataset import DEFAULT_N_STEPS, Standardizer, target_column
from forecast.lstm import ShapeMismatchError
from linkstate.records import LinkIntervalRecord
from netcore.network import Link
from utils.logger import get_logger

logger = get_logger(__name__)

KINDS = ("lstm", "linear_ar", "oracle", "identity")
TRAINED_KINDS = ("lstm", "linear_ar")
FORMAT_VERSION = 1

PathLike = Union[str, Path]

# CSV column → LinkIntervalRecord attribute
RECORD_FIELDS = {
    "V_kmh": "speed_kmh",
    "density_lane": "density_lane",
    "flow_vph": "flow_vph",
    "flow_lane_vph": "flow_lane_vph",
    "delay_s": "delay_s",
    "ghg_er_gps": "ghg_er",
    "inlink_mean_V_kmh": "inlink_speed_kmh",
}


@dataclass(frozen=True)
class PredictorModel:
    """
    t+1 predictor for one link variable. identity and oracle carry no parameters; trained
    kinds carry their parameters and the scalers fitted on the training set.
    """

    kind: str
    target: str
    n_steps: int = DEFAULT_N_STEPS
    features: Tuple[str, ...] = ()
    params: Mapping[str, np.ndarray] = field(default_factory=dict)
    x_scaler: Optional[Standardizer] = None
    y_scaler: Optional[Standardizer] = None
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown predictor kind '{self.kind}', expected one of: {', '.join(KINDS)}")
        target_column(self.target)
        if self.kind not in TRAINED_KINDS:
            return
        if not self.features:
            raise ValueError(f"A {self.kind} model needs its feature list")
        if self.x_scaler is None or self.y_scaler is None:
            raise ValueError(f"A {self.kind} model needs its normalization constants")
        for scaler in (self.x_scaler, self.y_scaler):
            if not np.all(scaler.sd > 0):
                raise ValueError("Normalization sd must be strictly positive")
        if self.x_scaler.mean.shape != (len(self.features),):
            raise ShapeMismatchError(
                f"Scaler has {self.x_scaler.mean.shape[0]} features, model lists {len(self.features)}"
            )
        if self.kind == "lstm":
            lstm.check_shapes(dict(self.params), len(self.features))
        elif self.params["coef"].shape != (self.n_steps * len(self.features),):
            raise ShapeMismatchError(
                f"AR coefficients {self.params['coef'].shape} do not fit {self.n_steps} steps × {len(self.features)} features"
            )

    @property
    def hidden(self) -> Tuple[int, ...]:
        if self.kind != "lstm":
            return ()
        return tuple(self.params[f"W{l}"].shape[0] // 4 for l in range(lstm.layer_count(dict(self.params))))

    def predict_raw(self, X: np.ndarray) -> np.ndarray:
        """Unclamped predictions in physical units for windows X of shape (N, n_steps, n_features)."""
        if self.kind not in TRAINED_KINDS:
            raise ValueError(f"A {self.kind} predictor has no model to evaluate")
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[1:] != (self.n_steps, len(self.features)):
            raise ShapeMismatchError(
                f"Expected windows of shape (N, {self.n_steps}, {len(self.features)}), got {X.shape}"
            )
        Xs = self.x_scaler.transform(X)
        if self.kind == "lstm":
            ys = lstm.predict(dict(self.params), Xs)
        else:
            ys = linear_ar.predict(dict(self.params), Xs)
        return self.y_scaler.inverse(ys)


def identity_predictor(target: str) -> PredictorModel:
    return PredictorModel(kind="identity", target=target)


def oracle_predictor(target: str) -> PredictorModel:
    """Perfect lookahead; its prediction is the next interval's record from a shadow run."""
    return PredictorModel(kind="oracle", target=target)


def record_value(rec: LinkIntervalRecord, column: str) -> float:
    return float(getattr(rec, RECORD_FIELDS[column]))


def clamp(value: float, target: str, speed_limit_kmh: float) -> float:
    """Negative predictions become 0; speeds above the link limit become the limit."""
    target_column(target)
    if math.isnan(value) or value <= 0.0:
        return 0.0
    if target == "speed" and value > speed_limit_kmh:
        return float(speed_limit_kmh)
    return value


def _window(history: Sequence[LinkIntervalRecord], model: PredictorModel) -> Optional[np.ndarray]:
    if len(history) < model.n_steps:
        return None
    recent = history[-model.n_steps:]
    if recent[-1].interval - recent[0].interval != model.n_steps - 1:
        return None
    return np.array([[record_value(r, c) for c in model.features] for r in recent], dtype=float)


def predict_link(
    model: PredictorModel,
    history: Sequence[LinkIntervalRecord],
    link: Link,
    lookahead: Optional[LinkIntervalRecord] = None,
) -> float:
    """
    Clamped prediction of the next interval's value for one link. history ends with the
    interval just closed; with fewer than n_steps consecutive intervals the current value
    is returned.
    """
    return predict_links(
        model, {link.id: history}, {link.id: link}, {link.id: lookahead} if lookahead is not None else None
    )[link.id]


def predict_links(
    model: PredictorModel,
    histories: Mapping[int, Sequence[LinkIntervalRecord]],
    links: Mapping[int, Link],
    lookahead: Optional[Mapping[int, LinkIntervalRecord]] = None,
) -> Dict[int, float]:
    """predict_link for many links at once; trained models run one batch."""
    column = target_column(model.target)
    raw: Dict[int, float] = {}
    batch_ids, batch = [], []
    for link_id, history in histories.items():
        if not history:
            raise ValueError(f"Link {link_id}: no closed interval to predict from")
        current = record_value(history[-1], column)
        if model.kind == "identity":
            raw[link_id] = current
        elif model.kind == "oracle":
            if lookahead is None or link_id not in lookahead:
                raise ValueError(f"Oracle prediction for link {link_id} needs the next interval's record")
            raw[link_id] = record_value(lookahead[link_id], column)
        else:
            window = _window(history, model)
            if window is None:
                raw[link_id] = current
            else:
                batch_ids.append(link_id)
                batch.append(window)
    if batch:
        for link_id, value in zip(batch_ids, model.predict_raw(np.stack(batch))):
            raw[link_id] = float(value)
    return {lid: clamp(v, model.target, links[lid].speed_limit) for lid, v in raw.items()}


def _encode_array(values: np.ndarray) -> dict:
    return {"shape": list(values.shape), "values": [float(v) for v in np.ravel(values)]}


def _decode_array(payload: Mapping) -> np.ndarray:
    return np.array(payload["values"], dtype=float).reshape(payload["shape"])


def save_model(model: PredictorModel, path: PathLike) -> Path:
    path = Path(path)
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "target": model.target,
        "n_steps": model.n_steps,
        "features": list(model.features),
        "params": {name: _encode_array(values) for name, values in model.params.items()},
        "metadata": dict(model.metadata),
    }
    if model.x_scaler is not None:
        doc["x_mean"] = _encode_array(model.x_scaler.mean)
        doc["x_sd"] = _encode_array(model.x_scaler.sd)
        doc["y_mean"] = _encode_array(model.y_scaler.mean)
        doc["y_sd"] = _encode_array(model.y_scaler.sd)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    logger.info(f"Saved {model.kind} {model.target} model to {path}")
    return path


def load_model(path: PathLike) -> PredictorModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"Failed to load model {path}: {e}") from e

    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"Failed to load model {path}: unsupported format_version {version}")
    try:
        scalers = {}
        if "x_mean" in doc:
            scalers["x_scaler"] = Standardizer(_decode_array(doc["x_mean"]), _decode_array(doc["x_sd"]))
            scalers["y_scaler"] = Standardizer(_decode_array(doc["y_mean"]), _decode_array(doc["y_sd"]))
        model = PredictorModel(
            kind=doc["kind"],
            target=doc["target"],
            n_steps=int(doc.get("n_steps", DEFAULT_N_STEPS)),
            features=tuple(doc.get("features") or ()),
            params={name: _decode_array(p) for name, p in doc.get("params", {}).items()},
            metadata=doc.get("metadata", {}),
            **scalers,
        )
    except (KeyError, TypeError) as e:
        raise ValueError(f"Failed to load model {path}: missing or malformed field {e}") from e
    logger.info(f"Loaded {model.kind} {model.target} model from {path}")
    return model

