"""End-to-end desk-scale run: synthetic corpus, clean and noise-adapted models, evaluation grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..corruption import NoiseSource
from ..nn.model import SpeakerModel
from ..nn.optim import OptimizerState
from ..nn.serialize import save_model
from ..nn.train import train, write_training_log
from .adapt import AdaptationPlan, build_adapted_training_set
from .evaluate import (DEFAULT_SNRS, EvalGrid, EvaluationReport, TestSet, evaluate_noise_grid,
                       evaluate_reverb_grid)
from .frontend import FrontendConfig
from .manifest import DatasetManifest
from .report import write_report
from .synth import synth_speaker_dataset


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    l2_lambda: float = 1e-4

    def optimizer(self) -> OptimizerState:
        return OptimizerState(self.learning_rate, self.momentum, self.l2_lambda)


def train_for_plan(manifest: DatasetManifest, plan: AdaptationPlan, frontend: FrontendConfig,
                   training: TrainingConfig, seed: int, threads: int = 1):
    """Build the plan's training images and fit a freshly initialized model on them."""
    data = build_adapted_training_set(manifest, plan, frontend, seed, threads)
    model = SpeakerModel.create(manifest.n_speakers, frontend.input_shape, seed=seed)
    model, log = train(model, data.images, data.labels, training.epochs, training.batch_size,
                       seed, training.optimizer())
    return model, log


@dataclass(frozen=True)
class PipelineConfig:
    n_speakers: int = 10
    utts_per_speaker: int = 12
    utt_seconds: float = 2.0
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    adapt_kind: str = "white"
    adapt_snrs: tuple[float, ...] = (-5.0,)
    eval_kinds: tuple[str, ...] = ("white", "pink")
    eval_snrs: tuple[float, ...] = DEFAULT_SNRS
    reverb_delays_ms: tuple[float, ...] = (200.0,)
    reverb_snrs: tuple[float, ...] = (-5.0,)
    seed: int = 42
    threads: int = 1


@dataclass
class PipelineResult:
    out_dir: Path
    manifest: DatasetManifest
    models: dict[str, SpeakerModel]
    noise: dict[str, EvaluationReport]
    reverb: dict[str, EvaluationReport]


def run_pipeline(out_dir, config: PipelineConfig = PipelineConfig(), progress=None) -> PipelineResult:
    """Write ``corpus/``, ``<name>.cspk``, ``<name>_train.csv`` and per-model report CSVs under ``out_dir``.

    Two models are trained: ``clean`` (clean images only) and ``adapted`` (clean plus
    the adaptation noise at each adaptation SNR). Both are evaluated on the same grids.
    """
    say = progress or (lambda msg: None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed, fe = config.seed, config.frontend
    say("synthesizing corpus")
    manifest = synth_speaker_dataset(out / "corpus", config.n_speakers, config.utts_per_speaker,
                                     config.utt_seconds, fe.sample_rate, seed)
    adapt_noise = NoiseSource(config.adapt_kind, seed=seed)
    plans = {"clean": AdaptationPlan.clean_only(),
             "adapted": AdaptationPlan(adapt_noise, config.adapt_snrs)}
    noises = tuple(NoiseSource(k, seed=seed) for k in config.eval_kinds)
    tests = TestSet.load(manifest, fe, config.threads)
    result = PipelineResult(out, manifest, {}, {}, {})
    for name, plan in plans.items():
        say(f"training {name} model")
        model, log = train_for_plan(manifest, plan, fe, config.training, seed, config.threads)
        save_model(model, out / f"{name}.cspk")
        write_training_log(log, out / f"{name}_train.csv")
        say(f"evaluating {name} model")
        noise = evaluate_noise_grid(model, manifest, EvalGrid(noises, config.eval_snrs), fe, seed,
                                    config.threads, tests)
        reverb = evaluate_reverb_grid(model, manifest,
                                      EvalGrid(reverb_delays_ms=config.reverb_delays_ms), fe,
                                      (adapt_noise, config.reverb_snrs), seed, config.threads, tests)
        write_report(noise, out / f"{name}_noise.csv")
        write_report(reverb, out / f"{name}_reverb.csv")
        result.models[name], result.noise[name], result.reverb[name] = model, noise, reverb
    return result
