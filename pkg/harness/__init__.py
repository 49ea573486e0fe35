from harness.config import (
    ExperimentConfig,
    ExperimentConfigError,
    ScenarioSpec,
    load_experiment_config,
    load_scenario_spec,
)
from harness.experiment import collect_training_data, run_cell, run_experiment, summary_row
from harness.reporting import (
    INDICATORS,
    MetricsReport,
    UnknownStrategyError,
    UnknownVehicleError,
    compare,
    extract_path,
    indicators,
    load_report,
    paths_frame,
    write_report,
)
