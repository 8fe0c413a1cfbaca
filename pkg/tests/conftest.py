import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_png(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path, format="PNG")
    return path


@pytest.fixture
def png_dir(tmp_path):
    """Three small natural-ish grayscale/RGB PNGs with varied sizes."""
    rng = np.random.default_rng(7)
    d = tmp_path / "images"
    d.mkdir()
    yy, xx = np.mgrid[0:70, 0:90]
    smooth = 127 + 60 * np.sin(xx / 7.0) * np.cos(yy / 5.0)
    write_png(d / "a.png", np.clip(smooth + rng.normal(0, 8, smooth.shape), 0, 255))
    rgb = rng.integers(0, 256, (58, 45, 3))
    write_png(d / "b.png", rgb)
    write_png(d / "c.png", np.full((40, 48), 200))
    return d


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
