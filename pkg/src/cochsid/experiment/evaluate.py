"""Accuracy grids over noise/SNR, reverberation and clipping conditions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corruption import ClipSpec, CorruptionSpec, NoiseSource, apply_corruption
from ..nn.model import SpeakerModel, predict_batch
from ..seeding import derive_seed
from .frontend import FrontendConfig, feature_image, load_preprocessed, parallel_map
from .manifest import DatasetManifest

DEFAULT_SNRS = (-5.0, 0.0, 5.0, 10.0, 15.0)
DEFAULT_DELAYS_MS = (100.0, 200.0, 500.0, 800.0)
DEFAULT_CLIP_FRACTIONS = (0.3, 0.6, 0.9)
CLIP_REPEATS = 5


@dataclass(frozen=True)
class EvalGrid:
    noises: tuple[NoiseSource, ...] = ()
    snrs: tuple[float, ...] = DEFAULT_SNRS
    reverb_delays_ms: tuple[float, ...] = DEFAULT_DELAYS_MS
    clip_specs: tuple[ClipSpec, ...] = tuple(
        ClipSpec(k, f) for k in ("center", "peak") for f in DEFAULT_CLIP_FRACTIONS)


@dataclass
class Cell:
    condition: str
    noise: str = ""
    snr_db: float | None = None
    reverb_ms: float | None = None
    clip_kind: str = ""
    clip_fraction: float | None = None
    n_correct: float = 0
    n_total: int = 0
    runs: list[float] = field(default_factory=list, compare=False)
    spec: CorruptionSpec | None = field(default=None, compare=False, repr=False)

    @property
    def accuracy(self) -> float:
        return 100.0 * self.n_correct / self.n_total if self.n_total else 0.0

    @classmethod
    def for_spec(cls, condition: str, spec: CorruptionSpec | None) -> "Cell":
        if spec is None:
            return cls(condition)
        return cls(condition,
                   noise=spec.noise.name if spec.noise else "",
                   snr_db=spec.snr_db,
                   reverb_ms=spec.reverb_delay_ms,
                   clip_kind=spec.clip.kind if spec.clip else "",
                   clip_fraction=spec.clip.threshold_fraction if spec.clip else None,
                   spec=spec)


@dataclass
class EvaluationReport:
    cells: list[Cell]
    layout: str = "noise"
    seed: int = 0

    def cell(self, **match) -> Cell:
        hits = [c for c in self.cells if all(getattr(c, k) == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {match}")
        return hits[0]

    def accuracy(self, **match) -> float:
        return self.cell(**match).accuracy


@dataclass
class TestSet:
    """Preprocessed clean test utterances, loaded once and reused across cells."""

    clips: list
    labels: np.ndarray
    utterance_ids: list[str]

    @classmethod
    def load(cls, manifest: DatasetManifest, frontend: FrontendConfig, threads: int = 1):
        test = manifest.split("test")
        if not test:
            raise ValueError("manifest test split is empty")
        index = manifest.speaker_index()
        clips = parallel_map(lambda e: load_preprocessed(e.wav_path, frontend), test, threads)
        return cls(clips, np.array([index[e.speaker_id] for e in test]),
                   [e.utterance_id for e in test])


def eval_corruption_seed(seed: int, utterance_id: str, condition: str, repeat: int = 0) -> int:
    return derive_seed(seed, "eval", utterance_id, condition, repeat)


def _run_cell(model, tests: TestSet, spec: CorruptionSpec | None, frontend, seed,
              repeat=0, threads=1) -> int:
    key = spec.to_text() if spec is not None else "clean"

    def one(i):
        clip = tests.clips[i]
        if spec is not None:
            clip = apply_corruption(clip, spec,
                                    eval_corruption_seed(seed, tests.utterance_ids[i], key, repeat))
        return feature_image(clip, frontend)

    images = np.stack(parallel_map(one, range(len(tests.clips)), threads))
    pred = predict_batch(model, images).argmax(axis=1)
    return int((pred == tests.labels).sum())


def _fill(model, tests, cell: Cell, frontend, seed, threads, repeats=1):
    runs = [_run_cell(model, tests, cell.spec, frontend, seed, r, threads) for r in range(repeats)]
    cell.n_total = len(tests.clips)
    cell.n_correct = runs[0] if repeats == 1 else float(np.mean(runs))
    cell.runs = [100.0 * r / cell.n_total for r in runs]
    return cell


def _ensure_eval_mode(model: SpeakerModel):
    if model.train_mode:
        model.eval()


def evaluate_noise_grid(model: SpeakerModel, manifest: DatasetManifest, grid: EvalGrid,
                        frontend: FrontendConfig, seed: int = 0, threads: int = 1,
                        tests: TestSet | None = None) -> EvaluationReport:
    """Clean cell followed by one cell per (noise, snr), grid-major."""
    _ensure_eval_mode(model)
    tests = tests or TestSet.load(manifest, frontend, threads)
    cells = [Cell("clean")]
    for noise in grid.noises:
        cells += [Cell.for_spec("noise", CorruptionSpec(noise=noise, snr_db=float(s)))
                  for s in grid.snrs]
    for c in cells:
        _fill(model, tests, c, frontend, seed, threads)
    return EvaluationReport(cells, "noise", seed)


def evaluate_reverb_grid(model: SpeakerModel, manifest: DatasetManifest, grid: EvalGrid,
                         frontend: FrontendConfig, noisy: tuple[NoiseSource, tuple] | None = None,
                         seed: int = 0, threads: int = 1,
                         tests: TestSet | None = None) -> EvaluationReport:
    """Reverberated test speech, one cell per delay, or per (delay, snr) when ``noisy`` is given."""
    _ensure_eval_mode(model)
    tests = tests or TestSet.load(manifest, frontend, threads)
    cells = []
    for delay in grid.reverb_delays_ms:
        if noisy is None:
            cells.append(Cell.for_spec("reverb", CorruptionSpec(reverb_delay_ms=float(delay))))
        else:
            noise, snrs = noisy
            cells += [Cell.for_spec("noise+reverb",
                                    CorruptionSpec(noise=noise, snr_db=float(s),
                                                   reverb_delay_ms=float(delay)))
                      for s in snrs]
    for c in cells:
        _fill(model, tests, c, frontend, seed, threads)
    return EvaluationReport(cells, "reverb", seed)


def evaluate_clipping(model: SpeakerModel, manifest: DatasetManifest, grid: EvalGrid,
                      frontend: FrontendConfig, seed: int = 0, threads: int = 1,
                      repeats: int = CLIP_REPEATS, tests: TestSet | None = None) -> EvaluationReport:
    """One cell per clip spec; each accuracy is the mean over ``repeats`` seeded runs."""
    _ensure_eval_mode(model)
    tests = tests or TestSet.load(manifest, frontend, threads)
    cells = [Cell.for_spec("clip", CorruptionSpec(clip=c)) for c in grid.clip_specs]
    for c in cells:
        _fill(model, tests, c, frontend, seed, threads, repeats)
    return EvaluationReport(cells, "clip", seed)
