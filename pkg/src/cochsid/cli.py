"""``cochsid`` command line: feature extraction, corruption, corpus synthesis, training, evaluation.

Exit codes: 0 success, 1 internal error (or failed gradient check), 2 I/O error, 3 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .audio import VadParams, WavError, load_wav, resample, save_wav, vad_trim
from .corruption import (ClipSpec, CorruptionError, CorruptionSpec, CorruptionTrace, NoiseSource,
                         apply_corruption)
from .experiment.adapt import AdaptationPlan
from .experiment.evaluate import (CLIP_REPEATS, DEFAULT_CLIP_FRACTIONS, DEFAULT_DELAYS_MS, DEFAULT_SNRS,
                                  EvalGrid, evaluate_clipping, evaluate_noise_grid,
                                  evaluate_reverb_grid)
from .experiment.frontend import FrontendConfig
from .experiment.manifest import ManifestError, read_manifest
from .experiment.pipeline import PipelineConfig, TrainingConfig, run_pipeline, train_for_plan
from .experiment.report import FORMATS, write_report
from .experiment.synth import synth_speaker_dataset
from .featureio import FeatureFormatError, write_cgrm, write_pgm
from .gammatone import FilterbankConfig, cochleagram, make_filterbank, to_feature_image
from .nn.gradcheck import check_model, flipped_conv_backward, toy_network
from .nn.model import SpeakerModel
from .nn.serialize import ModelFormatError, load_model, save_model
from .nn.train import write_training_log

log = logging.getLogger("cochsid")

EXIT_OK, EXIT_INTERNAL, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3
IO_ERRORS = (OSError, WavError, ManifestError, ModelFormatError, FeatureFormatError)


class UsageError(Exception):
    pass


@contextmanager
def _params():
    """Report bad parameter values as usage errors rather than internal ones."""
    try:
        yield
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- argument types

def _image_dims(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("image dimensions must be positive")
    return h, w


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _noise(text: str, seed: int) -> NoiseSource:
    if text.startswith("file:"):
        return NoiseSource("file", text[5:], seed)
    return NoiseSource(text, None, seed)


# ---------------------------------------------------------------- shared flag groups

def _frontend_flags(p, image_default="100x80"):
    g = p.add_argument_group("front end")
    g.add_argument("--channels", type=_positive_int, default=128, help="gammatone channels (default 128)")
    g.add_argument("--fmin", type=float, default=50.0, help="lowest center frequency, Hz (default 50)")
    g.add_argument("--fmax", type=float, default=8000.0,
                   help="highest center frequency, Hz; capped just below Nyquist (default 8000)")
    g.add_argument("--frame-ms", type=float, default=40.0,
                   help="cochleagram frame length in ms, 50%% overlap (default 40)")
    g.add_argument("--image", type=_image_dims, default=_image_dims(image_default) if image_default else None,
                   metavar="HxW", help=f"feature image size (default {image_default or 'none'})")


def _frame_len(args) -> int:
    n = int(round(args.frame_ms * args.sample_rate / 1000.0))
    n += n % 2
    if n < 2:
        raise UsageError("--frame-ms too short for the sample rate")
    return n


def _frontend(args, image=None) -> FrontendConfig:
    with _params():
        fe = FrontendConfig(args.sample_rate, args.channels, args.fmin, args.fmax, _frame_len(args),
                            tuple(image or args.image), VadParams())
        fe.filterbank_config  # validates the frequency range
    return fe


def _training_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=30, help="training epochs (default 30)")
    g.add_argument("--batch-size", type=_positive_int, default=64, help="minibatch size (default 64)")
    g.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3)")
    g.add_argument("--momentum", type=float, default=0.9, help="SGD momentum (default 0.9)")
    g.add_argument("--l2", type=float, default=1e-4, help="L2 weight decay (default 1e-4)")


def _training(args) -> TrainingConfig:
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    cfg = TrainingConfig(args.epochs, args.batch_size, args.lr, args.momentum, args.l2)
    with _params():
        cfg.optimizer()
    return cfg


# ---------------------------------------------------------------- subcommands

def cmd_cochleagram(args) -> int:
    with _params():
        config = FilterbankConfig(args.sample_rate, args.channels, args.fmin, args.fmax)
    frame_len = _frame_len(args)
    clip = load_wav(args.in_wav)
    if args.vad:
        clip = vad_trim(clip, VadParams())
    clip = resample(clip, args.sample_rate)
    if clip.samples.size < frame_len:
        raise UsageError(f"input shorter than one {args.frame_ms:g} ms frame")
    coch = cochleagram(make_filterbank(config), clip, frame_len)
    matrix = coch.values if args.image is None else to_feature_image(coch, *args.image).values
    write_cgrm(matrix, args.out_file)
    if args.pgm:
        write_pgm(matrix, args.pgm)
    print(f"{matrix.shape[0]}x{matrix.shape[1]}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    try:
        spec = CorruptionSpec.parse(args.spec, noise_seed=args.seed)
    except CorruptionError as exc:
        raise UsageError(str(exc)) from exc
    clip = load_wav(args.in_wav)
    trace = CorruptionTrace(np.empty(0))
    out = apply_corruption(clip, spec, args.seed, trace)
    save_wav(out, args.out_wav)
    if trace.measured_snr_db is not None:
        snr = round(trace.measured_snr_db, 6) + 0.0  # no "-0.000000"
        print(f"measured SNR: {snr:.6f} dB", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    with _params():
        m = synth_speaker_dataset(args.out_dir, args.speakers, args.utts, args.seconds,
                                  args.sample_rate, args.seed)
    print(f"{len(m.entries)} utterances, {m.n_speakers} speakers -> {Path(args.out_dir) / 'manifest.csv'}")
    return EXIT_OK


def cmd_train(args) -> int:
    fe = _frontend(args)
    training = _training(args)
    manifest = read_manifest(args.manifest)
    if args.adapt_noise == "none":
        plan = AdaptationPlan.clean_only()
    else:
        with _params():
            plan = AdaptationPlan(_noise(args.adapt_noise, args.seed), args.adapt_snrs,
                                  not args.no_clean)
    if training.epochs == 0:
        model, entries = SpeakerModel.create(manifest.n_speakers, fe.input_shape, seed=args.seed), []
    else:
        model, entries = train_for_plan(manifest, plan, fe, training, args.seed, args.threads)
    save_model(model, args.out_model)
    if args.log:
        write_training_log(entries, args.log)
    for e in entries:
        log.info("epoch %d loss %.4f train_acc %.3f", e.epoch, e.loss, e.train_acc)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    if args.image is not None and tuple(args.image) != tuple(model.input_shape[1:]):
        raise UsageError(f"--image {args.image[0]}x{args.image[1]} does not match the model input "
                         f"{model.input_shape[1]}x{model.input_shape[2]}")
    fe = _frontend(args, image=model.input_shape[1:])
    manifest = read_manifest(args.manifest)
    if model.n_speakers != manifest.n_speakers:
        raise UsageError(f"model has {model.n_speakers} outputs but manifest has "
                         f"{manifest.n_speakers} speakers")
    with _params():
        noises = tuple(_noise(n, args.seed) for n in args.noises.split(",") if n)
        fractions = args.fractions
        clip_specs = tuple(ClipSpec(k, f) for k in args.clip_kinds.split(",") for f in fractions)
        grid = EvalGrid(noises, args.snrs, args.delays, clip_specs)
    if args.grid == "noise":
        report = evaluate_noise_grid(model, manifest, grid, fe, args.seed, args.threads)
    elif args.grid == "reverb":
        noisy = None
        if args.reverb_noise:
            with _params():
                noisy = (_noise(args.reverb_noise, args.seed), args.snrs)
        report = evaluate_reverb_grid(model, manifest, grid, fe, noisy, args.seed, args.threads)
    else:
        report = evaluate_clipping(model, manifest, grid, fe, args.seed, args.threads, args.repeats)
    write_report(report, args.out, args.format)
    for c in report.cells:
        log.info("%s %s snr=%s reverb=%s clip=%s:%s -> %.2f%%", c.condition, c.noise, c.snr_db,
                 c.reverb_ms, c.clip_kind, c.clip_fraction, c.accuracy)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    with _params():
        model, x, y = toy_network(args.classes, (1, *args.input), args.batch, args.seed)
    backward = flipped_conv_backward if args.negative_control else None
    report = check_model(model, x, y, seed=args.seed, tolerance=args.tolerance,
                         conv_backward=backward, max_samples=args.max_samples)
    for line in report.lines():
        print(line)
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_INTERNAL


def cmd_pipeline(args) -> int:
    fe = _frontend(args)
    config = PipelineConfig(args.speakers, args.utts, args.seconds, fe, _training(args),
                            seed=args.seed, threads=args.threads)
    result = run_pipeline(args.out_dir, config, progress=log.info)
    for name in result.noise:
        parts = [f"{c.noise or 'clean'}@{c.snr_db:g}={c.accuracy:.1f}" if c.snr_db is not None
                 else f"clean={c.accuracy:.1f}" for c in result.noise[name].cells]
        print(f"{name}: " + " ".join(parts))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cochsid", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=42,
                   help="seed governing every stochastic step (default 42)")
    p.add_argument("--sample-rate", type=_positive_int, default=8000,
                   help="processing sample rate in Hz (default 8000)")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads for feature extraction and evaluation "
                        "(default: available CPUs); training is always single-threaded")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cochleagram", help="write a cochleagram (or resized feature image) as CGRM")
    c.add_argument("in_wav")
    c.add_argument("out_file", help="output CGRM file")
    _frontend_flags(c, image_default=None)
    c.add_argument("--pgm", metavar="PATH", help="also write an 8-bit PGM preview")
    c.add_argument("--vad", action="store_true", help="energy-VAD trim before extraction")
    c.set_defaults(fn=cmd_cochleagram)

    c = sub.add_parser("corrupt", help="apply a corruption spec to a WAV file")
    c.add_argument("in_wav")
    c.add_argument("out_wav")
    c.add_argument("--spec", required=True,
                   help='canonical spec, e.g. "noise=white@-5dB;reverb=200ms;clip=center:0.6"')
    c.set_defaults(fn=cmd_corrupt)

    c = sub.add_parser("synth", help="generate the synthetic speaker corpus and its manifest")
    c.add_argument("out_dir")
    c.add_argument("--speakers", type=int, default=10, help="number of speakers (default 10)")
    c.add_argument("--utts", type=int, default=12, help="utterances per speaker (default 12)")
    c.add_argument("--seconds", type=float, default=2.0, help="utterance length in s (default 2)")
    c.set_defaults(fn=cmd_synth)

    c = sub.add_parser("train", help="train a speaker model (CSPK) from a manifest")
    c.add_argument("manifest")
    c.add_argument("out_model")
    c.add_argument("--log", metavar="CSV", help="per-epoch loss/accuracy log")
    c.add_argument("--adapt-noise", default="white",
                   help="white, pink, file:PATH, or none for clean-only (default white)")
    c.add_argument("--adapt-snrs", type=_floats, default=(-5.0,),
                   help="comma list, dB; write --adapt-snrs=-5,0 (default -5)")
    c.add_argument("--no-clean", action="store_true", help="omit the clean images")
    _frontend_flags(c)
    _training_flags(c)
    c.set_defaults(fn=cmd_train)

    c = sub.add_parser("eval", help="evaluate a model over a corruption grid, write a report")
    c.add_argument("model")
    c.add_argument("manifest")
    c.add_argument("out", help="report output file")
    c.add_argument("--grid", choices=("noise", "reverb", "clip"), default="noise")
    c.add_argument("--noises", default="white,pink",
                   help="comma list of white, pink, file:PATH (default white,pink)")
    c.add_argument("--snrs", type=_floats, default=DEFAULT_SNRS,
                   help="comma list, dB; write --snrs=-5,0 for negative values "
                        "(default -5,0,5,10,15)")
    c.add_argument("--delays", type=_floats, default=DEFAULT_DELAYS_MS,
                   help="reverb delays, ms (default 100,200,500,800)")
    c.add_argument("--reverb-noise", help="add this noise at each --snrs value to reverb cells")
    c.add_argument("--clip-kinds", default="center,peak", help="default center,peak")
    c.add_argument("--fractions", type=_floats, default=DEFAULT_CLIP_FRACTIONS,
                   help="clip threshold fractions of the peak (default 0.3,0.6,0.9)")
    c.add_argument("--repeats", type=_positive_int, default=CLIP_REPEATS,
                   help="repeated runs per clipping cell (default 5)")
    c.add_argument("--format", choices=FORMATS, default="csv", help="report format (default csv)")
    _frontend_flags(c, image_default=None)
    c.set_defaults(fn=cmd_eval)

    c = sub.add_parser("gradcheck", help="finite-difference check of the full network on a toy input")
    c.add_argument("--tolerance", type=float, default=1e-4, help="max relative error (default 1e-4)")
    c.add_argument("--max-samples", type=_positive_int, default=50,
                   help="checked entries per tensor (default 50)")
    c.add_argument("--classes", type=_positive_int, default=8, help="toy output classes (default 8)")
    c.add_argument("--input", type=_image_dims, default=(64, 64), metavar="HxW",
                   help="toy input size (default 64x64)")
    c.add_argument("--batch", type=_positive_int, default=4, help="toy batch size (default 4)")
    c.add_argument("--negative-control", action="store_true",
                   help="sign-flip the conv weight gradient; the check should then fail")
    c.set_defaults(fn=cmd_gradcheck)

    c = sub.add_parser("pipeline", help="synth -> train clean and adapted -> evaluate, in one run")
    c.add_argument("out_dir")
    c.add_argument("--speakers", type=int, default=10, help="number of speakers (default 10)")
    c.add_argument("--utts", type=int, default=12, help="utterances per speaker (default 12)")
    c.add_argument("--seconds", type=float, default=2.0, help="utterance length in s (default 2)")
    _frontend_flags(c)
    _training_flags(c)
    c.set_defaults(fn=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"cochsid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IO_ERRORS as exc:
        print(f"cochsid: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - mapped to the internal-error exit code
        log.debug("internal error", exc_info=True)
        print(f"cochsid: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
