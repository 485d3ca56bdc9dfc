"""
Shared pytest fixtures for hogscan tests.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hogscan.hog import CLASSIC, HogConfig, descriptor_len
from hogscan.raster import GrayImage, encode_pgm
from hogscan.svm import LinearModel, save_model

settings.register_profile(
    "hogscan", deadline=None, print_blob=True, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("hogscan")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> HogConfig:
    """16x16 window holding a single 2x2-cell block: 36 components."""
    return HogConfig(window_width=16, window_height=16, cell_size=8, block_size=16, block_stride=8, gamma=None)


@pytest.fixture
def small_config() -> HogConfig:
    """24x32 window, 4-pixel cells, 2x2-cell blocks at a 4-pixel stride."""
    return HogConfig(window_width=24, window_height=32, cell_size=4, block_size=8, block_stride=4, gamma=None)


@pytest.fixture
def make_gray(rng) -> Callable[..., GrayImage]:
    """Factory for random gray images."""

    def _make(width: int, height: int, low: int = 0, high: int = 256) -> GrayImage:
        return GrayImage(rng.integers(low, high, size=(height, width), dtype=np.uint8))

    return _make


@pytest.fixture
def make_model(rng) -> Callable[..., LinearModel]:
    """Factory for models with random N(0, scale) weights."""

    def _make(config: HogConfig, scale: float = 1.0, rho: float = 0.0) -> LinearModel:
        weights = rng.normal(0.0, scale, size=descriptor_len(config))
        return LinearModel(weights=weights, rho=rho, config=config)

    return _make


@pytest.fixture
def blank_pgm(tmp_path: Path) -> Path:
    """A constant 160x176 PGM with no gradient anywhere."""
    path = tmp_path / "blank.pgm"
    path.write_bytes(encode_pgm(GrayImage(np.full((176, 160), 90, dtype=np.uint8))))
    return path


@pytest.fixture
def classic_model_file(tmp_path: Path) -> Path:
    """An all-zero model under the 3780-component geometry."""
    model = LinearModel(weights=np.zeros(descriptor_len(CLASSIC)), rho=0.0, config=CLASSIC, meta={"seed": 42})
    path = tmp_path / "classic.model"
    path.write_bytes(save_model(model))
    return path
