"""Manifests, synthetic corpus, noise-adapted training sets, evaluation grids and reports."""

from .adapt import AdaptationPlan, LabeledImages, build_adapted_training_set
from .evaluate import (EvalGrid, EvaluationReport, evaluate_clipping, evaluate_noise_grid,
                       evaluate_reverb_grid)
from .frontend import FrontendConfig
from .manifest import DatasetManifest, ManifestEntry, read_manifest, write_manifest
from .pipeline import PipelineConfig, TrainingConfig, run_pipeline
from .report import read_report_csv, write_report
from .synth import synth_speaker_dataset

__all__ = [
    "AdaptationPlan", "LabeledImages", "build_adapted_training_set", "EvalGrid",
    "EvaluationReport", "evaluate_clipping", "evaluate_noise_grid", "evaluate_reverb_grid",
    "FrontendConfig", "DatasetManifest", "ManifestEntry", "read_manifest", "write_manifest",
    "PipelineConfig", "TrainingConfig", "run_pipeline", "read_report_csv", "write_report",
    "synth_speaker_dataset",
]
