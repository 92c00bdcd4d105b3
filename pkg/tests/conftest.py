import pathlib

import numpy as np
import pytest

DATA = pathlib.Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def desk_scp() -> pathlib.Path:
    return DATA / "desk10" / "wav.scp"


@pytest.fixture(scope="session")
def golden_dir() -> pathlib.Path:
    return DATA / "golden"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(12345))


def make_sine(utt_id: str, freq: float, seconds: float = 1.0, rate: int = 16000,
              amplitude: float = 0.4):
    from sslprep import WaveRecord

    t = np.arange(int(seconds * rate)) / rate
    samples = (amplitude * np.sin(2 * np.pi * freq * t)).astype(np.float32)
    return WaveRecord(utt_id, rate, samples)
