"""Shared fixtures: one camera model and a couple of pre-rendered scenes that
several test files reuse instead of rendering their own."""

from types import SimpleNamespace

import numpy as np
import pytest

from cuboidpose import CameraIntrinsics, CuboidSpec, Pose, SceneSpec, render_scene
from cuboidpose.bench import BenchConfig, draw_trial, scene_spec_for
from cuboidpose.synth import BackgroundPlane

FACE = CuboidSpec(0.30, 0.20, 0.05)


@pytest.fixture(scope="session")
def intr640():
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture(scope="session")
def frontal(intr640):
    """Noiseless face looking straight down the camera axis at 1 m."""
    spec = SceneSpec(
        FACE,
        Pose(np.eye(3), np.array([0.0, 0.0, 1.0])),
        intr640,
        background=[BackgroundPlane(1.5)],
    )
    rgb, depth, mask, cloud, gt = render_scene(spec)
    return SimpleNamespace(
        spec=spec, rgb=rgb, depth=depth, mask=mask, cloud=cloud, gt=gt, intr=intr640
    )


@pytest.fixture(scope="session")
def drawn():
    """Noiseless render of the first benchmark trial: yawed and slightly
    tilted, the usual viewing geometry."""
    config = BenchConfig()
    scene_seed, gt_pose, corner, _, _ = draw_trial(config, 0)
    spec = scene_spec_for(config, scene_seed, gt_pose, corner)
    spec.noise_sigma = 0.0
    spec.dropout = []
    rgb, depth, mask, cloud, gt = render_scene(spec)
    return SimpleNamespace(
        config=config,
        spec=spec,
        rgb=rgb,
        depth=depth,
        mask=mask,
        cloud=cloud,
        gt=gt,
        gt_pose=gt_pose,
        intr=config.intrinsics,
    )


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
