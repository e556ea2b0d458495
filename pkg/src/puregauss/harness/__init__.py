"""Data ingestion, metrics, experiment runners and output writers."""

from puregauss.harness.datasets import (
    SeriesDataset,
    generate_synthetic_series,
    ingest_series,
)
from puregauss.harness.experiments import (
    ExperimentRow,
    run_heatmap,
    run_mc_spread,
    run_offline_experiment,
    run_online_experiment,
    stopping_overlay,
)
from puregauss.harness.metrics import accuracy_metric, f1_score, ground_truth_vector

__all__ = [
    "ExperimentRow",
    "SeriesDataset",
    "accuracy_metric",
    "f1_score",
    "generate_synthetic_series",
    "ground_truth_vector",
    "ingest_series",
    "run_heatmap",
    "run_mc_spread",
    "run_offline_experiment",
    "run_online_experiment",
    "stopping_overlay",
]
