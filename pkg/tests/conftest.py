"""Session-wide fixtures: synthetic manifests are built and parsed once."""
from __future__ import annotations

import sys

import pytest

import synth
from canvas_fss.folds import build_folds
from canvas_fss.manifest import parse_manifest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance gate's PASS/FAIL lines after the run."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "GATE_LINES", None)
    if lines:
        terminalreporter.section("acceptance gate")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def manifest_bytes() -> bytes:
    return synth.dataset_bytes(seed=5)


@pytest.fixture(scope="session")
def manifest(manifest_bytes):
    return parse_manifest(manifest_bytes)


@pytest.fixture(scope="session")
def fold0(manifest):
    return build_folds("pascal5i", manifest)[0]


@pytest.fixture(scope="session")
def multi_manifest():
    # every image carries distractor instances next to the target
    return parse_manifest(synth.dataset_bytes(seed=9, multi_category=True))


@pytest.fixture(scope="session")
def multi_fold0(multi_manifest):
    return build_folds("pascal5i", multi_manifest)[0]


@pytest.fixture(scope="session")
def manifest_path(tmp_path_factory, manifest_bytes):
    path = tmp_path_factory.mktemp("data") / "synth.json"
    path.write_bytes(manifest_bytes)
    return path


@pytest.fixture(scope="session")
def multi_manifest_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("data_multi") / "synth_multi.json"
    path.write_bytes(synth.dataset_bytes(seed=9, multi_category=True))
    return path


@pytest.fixture(scope="session")
def closed_loop_manifest_path(tmp_path_factory):
    # sources no larger than 400 px per side, so the default 1-shot query
    # placement (1008x404) holds them without downscaling and the oracle
    # round trip is pixel-exact
    path = tmp_path_factory.mktemp("data_small") / "synth_small.json"
    path.write_bytes(synth.dataset_bytes(seed=21, size_range=(320, 400)))
    return path


@pytest.fixture(scope="session")
def five_shot_manifest_path(tmp_path_factory):
    # 5-shot episodes draw six distinct images per class, so pools need
    # more images than the default fixture carries
    path = tmp_path_factory.mktemp("data_5shot") / "synth_5shot.json"
    path.write_bytes(synth.dataset_bytes(seed=13, images_per_class=7))
    return path
