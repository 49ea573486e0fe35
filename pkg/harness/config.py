from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml

from emissions.opmode import DEFAULT_TABLE_PATH, OpModeTable, load_opmode_table
from forecast.predictors import PredictorModel, identity_predictor, load_model, oracle_predictor
from linkstate.costing import CostingApproach
from microsim.world import DEFAULT_GUARD_MULTIPLE
from netcore.generator import DISTRIBUTIONS, generate_scenario
from netcore.network import DemandTable, Network
from netcore.scenario_io import load_scenario
from routing.objectives import DEFAULT_WEIGHT, ObjectiveConfig, ObjectiveConfigError, Strategy
from utils.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]

PREDICTORS = ("identity", "oracle", "lstm", "linear_ar")
SCENARIO_KEYS = {"rows", "cols", "vehicles", "distribution", "horizon", "seed"}
CONFIG_KEYS = {
    "scenario", "network", "demand", "opmode_table", "predictor", "speed_model", "ghg_model",
    "strategies", "costing", "seeds", "w_t", "w_e", "output_dir", "workers", "guard_multiple",
    "departure_jitter_s", "check_invariants", "dump_guidance", "export_excel",
}


class ExperimentConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as file:
            values = yaml.safe_load(file)
    except FileNotFoundError:
        raise ExperimentConfigError(f"Config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ExperimentConfigError(f"Failed to parse {path}: {e}") from e
    if values is None:
        return {}
    if not isinstance(values, dict):
        raise ExperimentConfigError(f"{path} must hold a key/value mapping")
    return values


@dataclass(frozen=True)
class ScenarioSpec:
    """Generator settings of a shipped scenario; the scenario is rebuilt from them on load."""

    rows: int
    cols: int
    vehicles: int
    distribution: str = "uniform"
    horizon: float = 900.0
    seed: int = 0

    def build(self) -> Tuple[Network, DemandTable]:
        return generate_scenario(self.rows, self.cols, self.vehicles, self.distribution, self.horizon, self.seed)


def load_scenario_spec(path: PathLike) -> ScenarioSpec:
    path = Path(path)
    values = _read_yaml(path)
    unknown = sorted(set(values) - SCENARIO_KEYS)
    if unknown:
        raise ExperimentConfigError(f"{path.name}: unknown scenario keys {unknown}")
    missing = sorted({"rows", "cols", "vehicles"} - set(values))
    if missing:
        raise ExperimentConfigError(f"{path.name}: missing scenario keys {missing}")
    if values.get("distribution", "uniform") not in DISTRIBUTIONS:
        raise ExperimentConfigError(f"{path.name}: distribution must be one of {DISTRIBUTIONS}")
    try:
        return ScenarioSpec(
            rows=int(values["rows"]),
            cols=int(values["cols"]),
            vehicles=int(values["vehicles"]),
            distribution=values.get("distribution", "uniform"),
            horizon=float(values.get("horizon", 900.0)),
            seed=int(values.get("seed", 0)),
        )
    except (TypeError, ValueError) as e:
        raise ExperimentConfigError(f"{path.name}: {e}") from e


@dataclass(frozen=True)
class ExperimentConfig:
    strategies: Tuple[Strategy, ...]
    seeds: Tuple[int, ...]
    scenario: Optional[Path] = None
    network: Optional[Path] = None
    demand: Optional[Path] = None
    opmode_table: Path = DEFAULT_TABLE_PATH
    predictor: str = "oracle"
    speed_model: Optional[Path] = None
    ghg_model: Optional[Path] = None
    costing: Tuple[CostingApproach, ...] = (CostingApproach.MARGINAL,)
    w_t: float = DEFAULT_WEIGHT
    w_e: float = DEFAULT_WEIGHT
    output_dir: Path = Path("reports")
    workers: int = 1
    guard_multiple: float = DEFAULT_GUARD_MULTIPLE
    departure_jitter_s: float = 10.0
    check_invariants: bool = True
    dump_guidance: bool = False
    export_excel: bool = False

    def __post_init__(self):
        if not self.strategies:
            raise ExperimentConfigError("At least one strategy is required")
        if not self.seeds:
            raise ExperimentConfigError("At least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ExperimentConfigError(f"Duplicate seeds in {list(self.seeds)}")
        if (self.scenario is None) == (self.network is None or self.demand is None):
            raise ExperimentConfigError("Give either 'scenario' or both 'network' and 'demand'")
        if self.predictor not in PREDICTORS:
            raise ExperimentConfigError(f"predictor must be one of {PREDICTORS}, got '{self.predictor}'")
        if self.workers < 1:
            raise ExperimentConfigError(f"workers must be >= 1, got {self.workers}")
        if not self.guard_multiple > 0:
            raise ExperimentConfigError(f"guard_multiple must be > 0, got {self.guard_multiple}")
        if self.departure_jitter_s < 0:
            raise ExperimentConfigError(f"departure_jitter_s must be >= 0, got {self.departure_jitter_s}")
        if self.predictor in ("lstm", "linear_ar") and any(s.anticipatory for s in self.strategies):
            if self.speed_model is None:
                raise ExperimentConfigError(f"predictor '{self.predictor}' needs speed_model")
            if self.ghg_model is None and any(s.anticipatory and s.uses_emissions for s in self.strategies):
                raise ExperimentConfigError(f"predictor '{self.predictor}' needs ghg_model")
        for name in ("scenario", "network", "demand", "opmode_table", "speed_model", "ghg_model"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ExperimentConfigError(f"{name}: file not found: {path}")

    def load_scenario(self) -> Tuple[Network, DemandTable]:
        if self.scenario is not None:
            return load_scenario_spec(self.scenario).build()
        return load_scenario(self.network, self.demand)

    def load_table(self) -> OpModeTable:
        return load_opmode_table(self.opmode_table)

    def predictors(self) -> Tuple[Optional[PredictorModel], Optional[PredictorModel]]:
        """(speed model, GHG-ER model) bound to the anticipatory strategies."""
        if self.predictor == "identity":
            return identity_predictor("speed"), identity_predictor("ghg_er")
        if self.predictor == "oracle":
            return oracle_predictor("speed"), oracle_predictor("ghg_er")
        models = []
        for path, target in ((self.speed_model, "speed"), (self.ghg_model, "ghg_er")):
            if path is None:
                models.append(None)
                continue
            model = load_model(path)
            if model.kind != self.predictor or model.target != target:
                raise ExperimentConfigError(
                    f"{path}: holds a {model.kind} {model.target} model, expected {self.predictor} {target}"
                )
            models.append(model)
        return models[0], models[1]

    def objectives(self) -> List[ObjectiveConfig]:
        """One objective per (strategy, costing) pair; non-marginal costing only for myopic emission strategies."""
        speed_model, ghg_model = self.predictors()
        objectives = []
        for strategy in self.strategies:
            for costing in self.costing:
                if costing is not CostingApproach.MARGINAL and (strategy.anticipatory or not strategy.uses_emissions):
                    continue
                try:
                    objectives.append(
                        ObjectiveConfig(
                            strategy=strategy,
                            w_t=self.w_t,
                            w_e=self.w_e,
                            costing=costing,
                            speed_model=speed_model if strategy.anticipatory else None,
                            ghg_model=ghg_model if strategy.anticipatory else None,
                            tt_cap_multiple=self.guard_multiple,
                        )
                    )
                except ObjectiveConfigError as e:
                    raise ExperimentConfigError(str(e)) from e
        if not objectives:
            raise ExperimentConfigError("No (strategy, costing) combination to run")
        return objectives


def _as_list(value: Any) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def load_experiment_config(path: PathLike, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Read a flat YAML experiment config; relative paths resolve against the config's folder."""
    path = Path(path)
    values = _read_yaml(path)
    values.update(overrides or {})
    unknown = sorted(set(values) - CONFIG_KEYS)
    if unknown:
        raise ExperimentConfigError(f"{path.name}: unknown keys {unknown}")

    base = path.resolve().parent
    kwargs: Dict[str, Any] = {}
    for name in ("scenario", "network", "demand", "opmode_table", "speed_model", "ghg_model", "output_dir"):
        if values.get(name) is not None:
            p = Path(values[name])
            kwargs[name] = p if p.is_absolute() else base / p
    try:
        kwargs["strategies"] = tuple(Strategy.parse(s) for s in _as_list(values.get("strategies", [s.value for s in Strategy])))
        kwargs["costing"] = tuple(CostingApproach.parse(c) for c in _as_list(values.get("costing", ["marginal"])))
        kwargs["seeds"] = tuple(int(s) for s in _as_list(values.get("seeds", [1, 2, 3, 4, 5])))
        for name in ("w_t", "w_e", "guard_multiple", "departure_jitter_s"):
            if name in values:
                kwargs[name] = float(values[name])
        if "workers" in values:
            kwargs["workers"] = int(values["workers"])
        for name in ("check_invariants", "dump_guidance", "export_excel"):
            if name in values:
                if not isinstance(values[name], bool):
                    raise ValueError(f"{name} must be true or false")
                kwargs[name] = values[name]
        if "predictor" in values:
            kwargs["predictor"] = str(values["predictor"])
    except (TypeError, ValueError) as e:
        raise ExperimentConfigError(f"{path.name}: {e}") from e

    cfg = ExperimentConfig(**kwargs)
    logger.info(
        f"Loaded experiment config {path.name}: {len(cfg.strategies)} strategies × {len(cfg.seeds)} seeds, "
        f"predictor {cfg.predictor}"
    )
    return cfg
