# src/mlflow_tracking.py

import logging
from pathlib import Path
from typing import Iterable, Optional

import mlflow

from src.config import MLFLOW_EXPERIMENT, MLFLOW_TRACKING_URI
from src.reports import ExperimentReport

logger = logging.getLogger(__name__)


class ExperimentTracker:
    def __init__(self, experiment_name: str = MLFLOW_EXPERIMENT, tracking_uri: Optional[str] = None):
        """Scenario reports go to one MLflow experiment. tracking_uri overrides MLFLOW_TRACKING_URI."""
        uri = tracking_uri or MLFLOW_TRACKING_URI
        if uri:
            mlflow.set_tracking_uri(uri)
        mlflow.set_experiment(experiment_name)
        self.run = None

    def log_report(self, report: ExperimentReport, paths: Iterable[Path] = ()):
        """
        Log one scenario as a run: config as params, every estimate, stderr and
        decay ratio as metrics, the written files as artifacts.
        """
        config = report.config
        self.run = mlflow.start_run(run_name=config.scenario, tags={"scenario": config.scenario, "schema": report.schema_version})
        logger.info("🚀 Tracking %s as MLflow run %s", config.scenario, self.run.info.run_id)
        try:
            params = {"seed": config.seed, "trials": config.trials, "tol_mult": config.tol_mult,
                      "dims": ";".join("x".join(map(str, d)) for d in config.dims)}
            params.update({k: str(v) for k, v in config.params.items()})
            mlflow.log_params(params)

            metrics = {"passed": float(report.passed)}
            for stat in report.statistics:
                key = _metric_key(stat.name)
                metrics[f"{key}.estimate"] = stat.estimate
                metrics[f"{key}.stderr"] = stat.stderr
            for fit in report.decay_fits:
                metrics[f"{_metric_key(fit.statistic)}.min_ratio"] = min(fit.ratios)
            if report.wall_time is not None:
                metrics["wall_time"] = report.wall_time
            mlflow.log_metrics(metrics)

            for path in paths:
                mlflow.log_artifact(str(path))
        except Exception:
            logger.exception("MLflow logging failed for scenario %s", config.scenario)
            raise
        finally:
            mlflow.end_run()
            logger.info("✅ MLflow run for %s closed", config.scenario)


def _metric_key(name: str) -> str:
    # MLflow keys allow alphanumerics, underscores, dashes, periods, spaces and slashes
    return "".join(c if c.isalnum() or c in "_-./ " else "_" for c in name)
