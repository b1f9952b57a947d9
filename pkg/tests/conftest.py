import pathlib

import pytest

from iswaplab import clifford
from iswaplab.calibration import CalibrationRecord
from iswaplab.config import load_config

ROOT = pathlib.Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = ROOT / "configs" / "default.toml"


@pytest.fixture(scope="session")
def run_config():
    return load_config(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def device(run_config):
    return run_config.device


@pytest.fixture(scope="session")
def engine(run_config):
    return run_config.engine


@pytest.fixture(scope="session")
def group():
    return clifford.CliffordGroup.build()


@pytest.fixture(scope="session")
def quick_record():
    """Frozen output of the default-config calibration pipeline (unit tests
    use it directly; the acceptance suite re-derives it end to end)."""
    return CalibrationRecord(
        v_dc=3.775,
        amplitude=0.236,
        drive_frequency=527048731.5279458,
        duration=290,
        eta=0.45518371708599537,
        vz_q1=-0.6093193440965168,
        vz_q2=0.30455938992173026,
    )
