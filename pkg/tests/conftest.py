"""Test configuration and fixtures for the colabelcrf test suite.

This module provides common fixtures for small CRF instances, random
problems and synthetic datasets written to temporary directories.
"""

from __future__ import annotations

from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from colabelcrf.core.hoc import CliqueSet, PnPottsParams
from colabelcrf.core.model import (
    Compatibility,
    CrfProblem,
    KernelKind,
    KernelSpec,
    UnaryField,
    VideoVolume,
)
from colabelcrf.utils.synth import SynthConfig, generate, write_dataset


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixed-seed generator; every test gets a fresh one."""
    return np.random.default_rng(12345)


@pytest.fixture
def two_pixel_problem() -> CrfProblem:
    """1 frame, 2 pixels one unit apart, L=2, unaries (0,1) and (1,0), one unit smoothness kernel."""
    volume = VideoVolume(np.zeros((1, 1, 2, 3)))
    unary = UnaryField(np.array([[[0.0, 1.0], [1.0, 0.0]]]), width=2, height=1)
    kernel = KernelSpec(KernelKind.SMOOTHNESS, weight=1.0, sigma_xy=1.0, sigma_time=1.0)
    return CrfProblem(volume, unary, (kernel,), Compatibility.potts_model(2))


ProblemFactory = Callable[..., CrfProblem]


@pytest.fixture
def make_problem(rng: np.random.Generator) -> ProblemFactory:
    """Build random problems: colors, unaries and optional random cliques."""

    def factory(
        frames: int = 1,
        width: int = 6,
        height: int = 5,
        labels: int = 3,
        kernels: tuple[KernelSpec, ...] | None = None,
        cliques: int = 0,
        clique_size: int = 4,
        alpha: float = 0.3,
        unary_scale: float = 1.0,
    ) -> CrfProblem:
        rgb = rng.integers(0, 256, size=(frames, height, width, 3)).astype(np.float64)
        costs = rng.uniform(0.0, unary_scale, size=(frames, width * height, labels))
        if kernels is None:
            kernels = (
                KernelSpec(KernelKind.SMOOTHNESS, 1.0, 2.0, 1.0),
                KernelSpec(KernelKind.APPEARANCE, 1.5, 4.0, 2.0, 60.0),
            )
        n = frames * width * height
        params = PnPottsParams(alpha=alpha)
        if cliques:
            members = [
                rng.choice(n, size=min(clique_size, n), replace=False) for _ in range(cliques)
            ]
            clique_set = CliqueSet.from_lists([sorted(m) for m in members], "random", params)
        else:
            clique_set = CliqueSet.empty(params)
        return CrfProblem(
            VideoVolume(rgb),
            UnaryField(costs, width, height),
            kernels,
            Compatibility.potts_model(labels),
            clique_set,
        )

    return factory


@pytest.fixture
def small_dataset(tmp_path: Path) -> tuple[Path, dict]:
    """A 3-frame 24x16 synthetic dataset on disk."""
    config = SynthConfig(seed=7, frames=3, width=24, height=16, labels=3, noise=0.4,
                         kmeans_clusters=6)
    out = tmp_path / "data"
    manifest = write_dataset(generate(config), out)
    return out, manifest


# Pytest configuration
def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "performance: Performance tests")
    config.addinivalue_line("markers", "slow: Slow running tests")


def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers based on test location."""
    for item in items:
        path = str(item.fspath)
        if "unit" in path:
            item.add_marker(pytest.mark.unit)
        elif "integration" in path:
            item.add_marker(pytest.mark.integration)
        elif "bench" in path:
            item.add_marker(pytest.mark.performance)
            item.add_marker(pytest.mark.slow)
