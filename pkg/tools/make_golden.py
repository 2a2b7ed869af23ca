"""Regenerate tests/golden/mfcc_golden.npz from librosa.

librosa is a development-only dependency (``pip install .[golden]``). It is
called with the settings librosa 0.7.2 used by default: Slaney mel scale
and normalisation, reflect-padded centred frames, power spectrum,
``power_to_db`` with top_db=80, orthonormal DCT-II. Later librosa releases
changed the padding default to constant, so ``pad_mode`` is pinned.

Usage: python tools/make_golden.py [output.npz]
"""

import sys
from pathlib import Path

import librosa
import numpy as np

SR = 16000
N_FFT, HOP, N_MELS, N_MFCC = 2048, 512, 128, 20


def signals() -> dict[str, np.ndarray]:
    """Twenty deterministic test signals (float32, 16 kHz)."""
    rng = np.random.default_rng(20240101)
    n = SR  # one second unless stated
    t = np.arange(n) / SR
    out = {}
    for f, a in [(100, 0.5), (440, 0.8), (1000, 0.3), (3000, 0.6), (7000, 0.2), (7999, 0.5)]:
        out[f"sine_{f}hz"] = a * np.sin(2 * np.pi * f * t)
    out["sine_pair"] = 0.4 * np.sin(2 * np.pi * 300 * t) + 0.3 * np.sin(2 * np.pi * 2500 * t)
    out["chirp_linear"] = 0.5 * np.sin(2 * np.pi * (50 * t + 0.5 * (7000 - 50) * t**2))
    k = np.log(6000 / 60)
    out["chirp_log"] = 0.5 * np.sin(2 * np.pi * 60 * (np.exp(k * t) - 1) / k)
    out["chirp_down_short"] = 0.7 * np.sin(2 * np.pi * (4000 * t[:4000] - 0.5 * 3500 / 0.25 * t[:4000]**2))
    out["noise_white"] = 0.1 * rng.standard_normal(n)
    out["noise_loud"] = np.clip(0.6 * rng.standard_normal(n), -1, 1)
    burst = np.zeros(n)
    burst[4000:6000] = 0.3 * rng.standard_normal(2000)
    out["noise_burst"] = burst
    bursts = np.zeros(n)
    for start in (1000, 7000, 12000):
        bursts[start:start + 800] = 0.5 * rng.standard_normal(800) * np.hanning(800)
    out["noise_bursts_windowed"] = bursts
    pink = np.cumsum(rng.standard_normal(n))
    out["noise_brown"] = 0.9 * pink / np.abs(pink).max()
    out["silence"] = np.zeros(n)
    out["silence_long"] = np.zeros(5 * SR)
    impulse = np.zeros(n)
    impulse[8000] = 1.0
    out["impulse"] = impulse
    out["tone_then_silence"] = np.where(t < 0.5, 0.5 * np.sin(2 * np.pi * 660 * t), 0.0)
    full = np.arange(5 * SR) / SR
    out["speechlike_5s"] = (0.3 * np.sin(2 * np.pi * 150 * full) * (1 + np.sin(2 * np.pi * 3 * full))
                            + 0.02 * rng.standard_normal(5 * SR))
    assert len(out) == 20
    return {k: np.asarray(v, dtype=np.float32) for k, v in out.items()}


def main(path: str) -> None:
    fb = librosa.filters.mel(sr=SR, n_fft=N_FFT, n_mels=N_MELS, fmin=0.0, fmax=SR / 2,
                             htk=False, norm="slaney", dtype=np.float64)
    arrays = {"filterbank": fb}
    for name, y in signals().items():
        m = librosa.feature.mfcc(y=y.astype(np.float64), sr=SR, n_mfcc=N_MFCC, n_fft=N_FFT,
                                 hop_length=HOP, n_mels=N_MELS, fmin=0.0, fmax=SR / 2,
                                 htk=False, center=True, pad_mode="reflect")
        arrays[f"signal/{name}"] = y
        arrays[f"mfcc/{name}"] = m
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, librosa_version=np.array(librosa.__version__), **arrays)
    print(f"wrote {len(arrays) // 2} signals to {path} (librosa {librosa.__version__})")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/golden/mfcc_golden.npz")
