"""Shared fixtures: synthetic scenes, a reference edit, and the acceptance log."""

from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from mvmotion.authoring import AuthoredMotion, estimate_motion_flows
from mvmotion.diffusion import BlockMatchingFlow, GuidanceConfig, ToyCodec, ToyDenoiser, run_mmds
from mvmotion.synth import OBJECT_LABEL, SynthConfig, make_scene

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

CRITERIA = [
    "rotation flow oracle",
    "translation drag oracle",
    "scaling factor bounds",
    "stretch plane geometry",
    "projection round trip",
    "guidance math",
    "end-to-end toy edit",
    "metric correctness",
    "file format round trips",
]


class AcceptanceLog:
    """Collects one pass/fail verdict per acceptance criterion."""

    def __init__(self) -> None:
        self.results: dict[str, tuple[str, str]] = {name: ("NOT RUN", "") for name in CRITERIA}

    def check(self, name: str, ok: bool, detail: str) -> None:
        assert name in self.results, f"unregistered criterion {name!r}"
        self.results[name] = ("PASS" if ok else "FAIL", detail)
        assert ok, f"{name}: {detail}"


_LOG = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceLog:
    return _LOG


def pytest_terminal_summary(terminalreporter) -> None:
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in _LOG.results.items():
        line = f"{status:7s} {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def scene512():
    return make_scene(SynthConfig(views=4, size=512, seed=0))


@pytest.fixture(scope="session")
def scene128():
    return make_scene(SynthConfig(views=4, size=128, seed=0))


@pytest.fixture(scope="session")
def scene256():
    return make_scene(SynthConfig(views=2, size=256, seed=0))


@pytest.fixture(scope="session")
def translation128(scene128):
    scene, _ = scene128
    motion = AuthoredMotion(
        mode="translation",
        reference_view="view0",
        drag=[(64.0, 64.0, 8.0, 0.0)],
    )
    return estimate_motion_flows(scene, OBJECT_LABEL, motion)


def run_reference_edit(scene, flows):
    """Run the 20-step toy edit with everything constructed fresh.

    Both the end-to-end fixture and the determinism check call this, so two
    invocations share no state beyond the inputs.
    """
    config = GuidanceConfig(num_steps=20, seed=7)
    estimator = BlockMatchingFlow(radius=6, patch=9, block_grid=8)
    return run_mmds(scene, flows, config, ToyDenoiser(), ToyCodec(), estimator, preview_every=10)


@pytest.fixture(scope="session")
def toy_run128(scene128, translation128):
    scene, _ = scene128
    return run_reference_edit(scene, translation128.flows)
