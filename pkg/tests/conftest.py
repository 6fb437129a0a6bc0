from pathlib import Path

import pytest

from ltm.config import LtmSettings
from ltm.schemas import ModelParams
from ltm.services.parameters import with_overrides

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running calibration and sweep checks")


@pytest.fixture
def settings():
    return LtmSettings(_env_file=None)


@pytest.fixture
def green_params():
    """NV-pumped, microwave far off resonance (the built-in defaults)."""
    return ModelParams()


@pytest.fixture
def gray_params(green_params):
    return with_overrides(green_params, {"nv.Lambda_NV": 0.0})


@pytest.fixture
def blue_params(green_params):
    return with_overrides(green_params, {"nv.Delta": 0.0})


@pytest.fixture
def nv_sweep_params(green_params):
    """MECSEL refit used for NV-pump sweeps, MECSEL pumped at 1.3 W."""
    return with_overrides(
        green_params,
        {"mecsel.L_eg": 5.1e6, "mecsel.G_eg": 354e6, "mecsel.Lambda_ge": 1.3 * 10.4e6, "nv.Lambda_NV": 0.0},
    )


@pytest.fixture
def config_file(tmp_path):
    def write(text: str) -> Path:
        path = tmp_path / "params.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    return write
