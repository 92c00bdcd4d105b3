"""Regenerate the bundled synthetic corpus under tests/data/desk10/.

Ten one-second 16 kHz utterances with distinct spectral content: sine
mixtures at different fundamentals, a chirp, band-limited noise, and one
near-silent file.  Deterministic (seeded), so the committed bytes are
reproducible:

    python3 scripts/make_desk_corpus.py
"""

import pathlib

import numpy as np

from sslprep import WaveRecord, write_wav

HERE = pathlib.Path(__file__).resolve().parent.parent
DESK = HERE / "tests" / "data" / "desk10"

SAMPLE_RATE = 16000


def make_signal(index: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
    if index == 8:
        # band-limited noise
        noise = rng.standard_normal(SAMPLE_RATE)
        spectrum = np.fft.rfft(noise)
        spectrum[: 40] = 0.0
        spectrum[2000:] = 0.0
        sig = np.fft.irfft(spectrum, SAMPLE_RATE)
        return 0.3 * sig / np.abs(sig).max()
    if index == 9:
        # near silence with a faint tone
        return 0.001 * np.sin(2 * np.pi * 1000.0 * t)
    if index == 7:
        # linear chirp 100 -> 3000 Hz
        phase = 2 * np.pi * (100.0 * t + (2900.0 / 2.0) * t * t)
        return 0.4 * np.sin(phase)
    fundamental = 110.0 * (index + 1)
    sig = 0.35 * np.sin(2 * np.pi * fundamental * t)
    sig += 0.15 * np.sin(2 * np.pi * 2.0 * fundamental * t + 0.5)
    sig += 0.02 * rng.standard_normal(SAMPLE_RATE)
    peak = np.abs(sig).max()
    return 0.5 * sig / peak if peak > 0.5 else sig


def main() -> None:
    DESK.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(20240416))
    lines = []
    for index in range(10):
        utt_id = f"desk{index:02d}"
        samples = make_signal(index, rng).astype(np.float32)
        write_wav(DESK / f"{utt_id}.wav", WaveRecord(utt_id, SAMPLE_RATE, samples))
        lines.append(f"{utt_id} {utt_id}.wav\n")
    (DESK / "wav.scp").write_text("".join(lines), encoding="utf-8")
    print(f"wrote 10 utterances under {DESK}")


if __name__ == "__main__":
    main()
