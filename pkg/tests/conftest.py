import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ivton.backends import stub_backends
from ivton.fixtures import Layout, body_raster, dress_person, write_garment, write_person
from ivton.raster import BODY_LEGEND, BODY_PARTS, CLOTHING, LabelRaster

CATEGORY_POOL = ["upper_garment", "lower_garment", "overall_garment", "outerwear", "footwear", "accessory"]


def random_partition(rng, max_side=64):
    """Blocky random body/clothing partitions of one random figure.

    Labels come from a coarse grid upsampled by a random block size, so regions
    are contiguous-ish rather than per-pixel noise.
    """
    h = int(rng.integers(4, max_side + 1))
    w = int(rng.integers(4, max_side + 1))
    block = int(rng.integers(1, 9))
    gh, gw = -(-h // block), -(-w // block)

    def blocky(values):
        return np.kron(values, np.ones((block, block), dtype=np.int32))[:h, :w]

    figure = blocky(rng.random((gh, gw)) < 0.8)
    body = np.where(figure, blocky(rng.integers(1, 10, size=(gh, gw))), 0)
    n_cloth = int(rng.integers(2, 7))
    cloth_block = blocky(rng.integers(1, n_cloth + 1, size=(gh, gw)))
    # Shift clothing blocks so they don't align with body blocks.
    cloth = np.where(figure, np.roll(cloth_block, int(rng.integers(0, 3)), axis=1), 0)
    cloth = np.where(figure & (cloth == 0), 1, cloth)
    legend = {0: "background", 1: "unclothed", **{k: f"seg{k}" for k in range(2, n_cloth + 1)}}
    categories = {k: CATEGORY_POOL[int(rng.integers(0, len(CATEGORY_POOL)))] for k in range(2, n_cloth + 1)}
    return (LabelRaster(body, BODY_LEGEND, BODY_PARTS),
            LabelRaster(cloth, legend, CLOTHING, categories))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def person_factory(tmp_path):
    """Write a canonical stick-figure person wearing ``outfit``; returns its path."""
    def make(outfit, name="person", layout=None):
        body = body_raster(layout or Layout())
        return write_person(tmp_path / "people", name, body, dress_person(body, outfit))
    return make


@pytest.fixture
def garment_factory(tmp_path):
    def make(kind, gid=None):
        return write_garment(tmp_path / "garments", kind, gid)
    return make


@pytest.fixture
def backends(tmp_path):
    return stub_backends(tmp_path / "work")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
