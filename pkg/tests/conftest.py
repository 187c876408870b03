import numpy as np
import pytest

from cochsid.audio import AudioClip
from cochsid.experiment.frontend import FrontendConfig
from cochsid.experiment.synth import synth_speaker_dataset


def tone(freq, seconds=1.0, fs=8000, amp=1.0, phase=0.0):
    t = np.arange(int(round(seconds * fs))) / fs
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), fs)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """3 speakers x 4 utterances of 0.8 s: fast enough for plumbing tests."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    manifest = synth_speaker_dataset(out, n_speakers=3, utts_per_speaker=4, utt_seconds=0.8,
                                     sample_rate=8000, seed=5)
    return out, manifest


@pytest.fixture(scope="session")
def small_frontend():
    return FrontendConfig(n_channels=32, image=(64, 64))


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    """The full desk-scale run (10 speakers, 100x80 images, seed 42): about two minutes."""
    import time

    from cochsid.experiment import PipelineConfig, run_pipeline

    out = tmp_path_factory.mktemp("pipeline") / "run1"
    t0 = time.perf_counter()
    result = run_pipeline(out, PipelineConfig(seed=42, threads=1))
    return result, time.perf_counter() - t0


# ---------------------------------------------------------------- acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    details = "; ".join(v for k, v in item.user_properties if k == "detail")
    prev = _CRITERIA.get(number)
    if prev is None or prev[0] == "PASS":
        _CRITERIA[number] = ("PASS" if rep.passed else "FAIL", title, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, details = _CRITERIA[number]
        line = f"criterion {number:>2}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
