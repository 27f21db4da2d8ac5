import numpy as np
import pytest

from headshadow.spatial import SphericalHeadModel, bundled_hrtf_set, synthetic_hrtf_set

FS = 44100


@pytest.fixture(scope="session")
def hrtfs():
    """Bundled synthetic set, bright spot off."""
    return bundled_hrtf_set()


@pytest.fixture(scope="session")
def hrtfs_bright():
    return bundled_hrtf_set(bright_spot=True)


@pytest.fixture(scope="session")
def hrtfs_small():
    """Experiment grid only, for quick tests."""
    return synthetic_hrtf_set(range(-90, 91, 15), FS, SphericalHeadModel())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tone_level_db(x: np.ndarray, freq: float, fs: int = FS) -> float:
    """Amplitude (dB re 1) of a sinusoid at ``freq`` by least-squares fit."""
    t = np.arange(x.size) / fs
    a = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(a, x, rcond=None)
    return 20 * np.log10(np.hypot(*coef))
