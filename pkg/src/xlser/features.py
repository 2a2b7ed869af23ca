"""MFCC extraction, per-coefficient standardisation and the on-disk feature cache.

The default configuration reproduces ``librosa.feature.mfcc`` as shipped in
librosa 0.7.2 (Slaney mel scale, Slaney area normalisation, reflect-padded
centred frames, ``power_to_db`` with ``top_db=80``, orthonormal DCT-II).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import urllib.parse
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import Clip, preprocess, read_wav
from .errors import CacheMissError, ConfigError, DecodeError, ShapeError, UserError

SERF_MAGIC = b"SERF"
SERF_VERSION = 1


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    n_fft: int = 2048
    hop: int = 512
    n_mels: int = 128
    n_mfcc: int = 20
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    top_db: float | None = 80.0
    mel_scale: str = "slaney"  # or "htk"
    center: bool = True

    def validate(self) -> "MfccConfig":
        problems = []
        if self.sample_rate <= 0:
            problems.append("sample_rate must be positive")
        if self.n_fft <= 0 or self.hop <= 0:
            problems.append("n_fft and hop must be positive")
        elif self.hop > self.n_fft:
            problems.append("hop must not exceed n_fft")
        if not 0 < self.n_mfcc <= self.n_mels:
            problems.append("need 0 < n_mfcc <= n_mels")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            problems.append("need 0 <= fmin < fmax <= sample_rate/2")
        if self.log_floor <= 0:
            problems.append("log_floor must be positive")
        if self.top_db is not None and self.top_db < 0:
            problems.append("top_db must be non-negative")
        if self.mel_scale not in ("slaney", "htk"):
            problems.append("mel_scale must be 'slaney' or 'htk'")
        if problems:
            raise ConfigError("invalid MFCC config: " + "; ".join(problems))
        return self

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.md5(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: Mapping) -> "MfccConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown MFCC config keys: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass(eq=False)
class FeatureMatrix:
    values: np.ndarray  # (n_mfcc, n_frames)
    config_fingerprint: str
    clip_id: str = ""

    @property
    def n_mfcc(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def hz_to_mel(f, scale: str = "slaney"):
    f = np.asanyarray(f, dtype=np.float64)
    if scale == "htk":
        return 2595.0 * np.log10(1.0 + f / 700.0)
    # Slaney: linear below 1 kHz, logarithmic above
    f_sp = 200.0 / 3
    mels = f / f_sp
    min_log_mel = 1000.0 / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(f >= 1000.0,
                    min_log_mel + np.log(np.maximum(f, 1e-12) / 1000.0) / logstep,
                    mels)


def mel_to_hz(m, scale: str = "slaney"):
    m = np.asanyarray(m, dtype=np.float64)
    if scale == "htk":
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    f_sp = 200.0 / 3
    min_log_mel = 1000.0 / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel,
                    1000.0 * np.exp(logstep * (m - min_log_mel)),
                    f_sp * m)


def mel_filterbank(config: MfccConfig) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, n_fft // 2 + 1).

    Centres are uniform on the mel scale between fmin and fmax; each filter
    is scaled by 2 / (upper edge - lower edge) in Hz so that it has unit area.
    """
    config.validate()
    n_bins = config.n_fft // 2 + 1
    fft_hz = np.linspace(0.0, config.sample_rate / 2, n_bins)
    edges = mel_to_hz(
        np.linspace(hz_to_mel(config.fmin, config.mel_scale),
                    hz_to_mel(config.fmax, config.mel_scale),
                    config.n_mels + 2),
        config.mel_scale,
    )
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_hz[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    return weights


def filter_centers(config: MfccConfig) -> np.ndarray:
    pts = np.linspace(hz_to_mel(config.fmin, config.mel_scale),
                      hz_to_mel(config.fmax, config.mel_scale), config.n_mels + 2)
    return mel_to_hz(pts[1:-1], config.mel_scale)


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant used for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(y: np.ndarray, n_fft: int, hop: int, center: bool = True) -> np.ndarray:
    """Frames of shape (n_frames, n_fft); centred frames use reflect padding."""
    if center:
        pad = n_fft // 2
        if y.size <= pad:
            raise ShapeError(f"signal of {y.size} samples too short for reflect padding")
        y = np.pad(y, pad, mode="reflect")
    if y.size < n_fft:
        raise ShapeError(f"signal of {y.size} samples shorter than one frame")
    return sliding_window_view(y, n_fft)[::hop]


def power_spectrogram(y: np.ndarray, config: MfccConfig) -> np.ndarray:
    """|FFT|^2 of Hann-windowed frames, shape (n_frames, n_fft // 2 + 1)."""
    frames = frame_signal(np.asarray(y, dtype=np.float64), config.n_fft, config.hop,
                          config.center)
    spec = np.fft.rfft(frames * hann(config.n_fft), axis=1)
    return spec.real**2 + spec.imag**2


def log_mel(power: np.ndarray, fbank: np.ndarray, config: MfccConfig) -> np.ndarray:
    mel = power @ fbank.T
    db = 10.0 * np.log10(np.maximum(mel, config.log_floor))
    if config.top_db is not None:
        db = np.maximum(db, db.max() - config.top_db)
    return db


_FBANK_CACHE: dict[str, np.ndarray] = {}


def _cached_filterbank(config: MfccConfig) -> np.ndarray:
    key = config.fingerprint()
    fb = _FBANK_CACHE.get(key)
    if fb is None:
        fb = _FBANK_CACHE[key] = mel_filterbank(config)
        fb.setflags(write=False)
    return fb


def mfcc(clip: Clip, config: MfccConfig = MfccConfig(), clip_id: str = "") -> FeatureMatrix:
    """MFCC matrix of shape (n_mfcc, 1 + len // hop) for a mono clip."""
    config.validate()
    if clip.channels != 1:
        raise ConfigError("mfcc expects a mono clip; run preprocess first")
    if clip.sample_rate != config.sample_rate:
        raise ConfigError(
            f"clip rate {clip.sample_rate} Hz does not match config {config.sample_rate} Hz"
        )
    power = power_spectrogram(clip.samples, config)
    db = log_mel(power, _cached_filterbank(config), config)
    coeffs = scipy.fft.dct(db, type=2, norm="ortho", axis=1)[:, : config.n_mfcc]
    return FeatureMatrix(np.ascontiguousarray(coeffs.T), config.fingerprint(),
                         clip_id or clip.source)


# -- standardisation --------------------------------------------------------


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray]) -> "FeatureStats":
        """Per-coefficient mean and population std over every frame of every array."""
        stacked = np.concatenate([np.asarray(a, dtype=np.float64) for a in arrays], axis=1)
        return cls(stacked.mean(axis=1), stacked.std(axis=1))

    def to_json(self) -> str:
        return json.dumps({"mean": self.mean.tolist(), "std": self.std.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FeatureStats":
        d = json.loads(text)
        return cls(np.asarray(d["mean"], dtype=np.float64),
                   np.asarray(d["std"], dtype=np.float64))


def standardize_array(values: np.ndarray, stats: FeatureStats, floor: float = 1e-8) -> np.ndarray:
    """Row-wise z-score of an (n_mfcc, ...) or (batch, n_mfcc, ...) array."""
    n = stats.mean.shape[0]
    axis = 0 if values.ndim == 2 else 1
    if values.shape[axis] != n:
        raise ShapeError(f"features have {values.shape[axis]} coefficients, stats have {n}")
    shape = [1] * values.ndim
    shape[axis] = n
    mean = stats.mean.reshape(shape)
    std = np.maximum(stats.std, floor).reshape(shape)
    return (values - mean) / std


def standardize(features: FeatureMatrix, stats: FeatureStats) -> FeatureMatrix:
    return FeatureMatrix(standardize_array(features.values, stats),
                         features.config_fingerprint, features.clip_id)


# -- SERF cache files -------------------------------------------------------


def write_serf(path: str | os.PathLike, values: np.ndarray, fingerprint: str) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ShapeError("SERF stores 2-D matrices only")
    if len(fingerprint) != 32:
        raise ValueError("fingerprint must be 32 hex characters")
    n_mfcc, n_frames = values.shape
    data = (SERF_MAGIC + struct.pack("<III", SERF_VERSION, n_mfcc, n_frames)
            + np.ascontiguousarray(values, dtype="<f4").tobytes()
            + fingerprint.encode("ascii"))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_serf(path: str | os.PathLike) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != SERF_MAGIC:
        raise DecodeError(f"{path}: bad magic", chunk="SERF")
    version, n_mfcc, n_frames = struct.unpack("<III", data[4:16])
    if version != SERF_VERSION:
        raise DecodeError(f"{path}: unsupported SERF version {version}", chunk="SERF")
    n = n_mfcc * n_frames
    if len(data) != 16 + 4 * n + 32:
        raise DecodeError(f"{path}: truncated SERF payload", chunk="SERF")
    values = np.frombuffer(data, dtype="<f4", count=n, offset=16).reshape(n_mfcc, n_frames)
    return values.astype(np.float32), data[16 + 4 * n:].decode("ascii")


class FeatureCache:
    """Directory of SERF files keyed by config fingerprint and clip id."""

    def __init__(self, root: str | os.PathLike, config: MfccConfig = MfccConfig()):
        self.root = Path(root)
        self.config = config.validate()
        self.fingerprint = config.fingerprint()

    @property
    def directory(self) -> Path:
        return self.root / self.fingerprint

    def path_for(self, clip_id: str) -> Path:
        return self.directory / (urllib.parse.quote(clip_id, safe="") + ".serf")

    def has(self, clip_id: str) -> bool:
        return self.path_for(clip_id).is_file()

    def put(self, clip_id: str, values: np.ndarray) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        write_serf(self.path_for(clip_id), values, self.fingerprint)
        meta = self.directory / "config.json"
        if not meta.exists():
            meta.write_text(json.dumps(asdict(self.config), sort_keys=True, indent=2) + "\n")

    def get(self, clip_id: str) -> np.ndarray:
        path = self.path_for(clip_id)
        if not path.is_file():
            raise CacheMissError([clip_id])
        values, fp = read_serf(path)
        if fp != self.fingerprint:
            raise CacheMissError([clip_id], reason="fingerprint mismatch")
        return values

    def load_store(self, clip_ids: Iterable[str]) -> "FeatureStore":
        ids = list(clip_ids)
        missing = [c for c in ids if not self.has(c)]
        if missing:
            raise CacheMissError(missing)
        return FeatureStore({c: self.get(c) for c in ids})


@dataclass
class ExtractReport:
    computed: list = field(default_factory=list)
    cached: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (clip_id, error message)


def extract_to_cache(items: Iterable[tuple[str, str | os.PathLike]], cache: FeatureCache,
                     force: bool = False) -> ExtractReport:
    """Preprocess and featurise every (clip_id, wav path) not already cached.

    Files that fail to decode are collected in the report rather than
    aborting the batch.
    """
    report = ExtractReport()
    for clip_id, path in items:
        if not force and cache.has(clip_id):
            report.cached.append(clip_id)
            continue
        try:
            clip = preprocess(read_wav(path), cache.config.sample_rate)
        except (UserError, OSError) as exc:
            report.failures.append((clip_id, f"{path}: {exc}"))
            continue
        cache.put(clip_id, mfcc(clip, cache.config, clip_id).values)
        report.computed.append(clip_id)
    return report


class FeatureStore:
    """In-memory clip_id -> (n_mfcc, n_frames) lookup with optional access scope.

    A scoped view raises on any lookup outside its scope; training code
    scopes its store to the train and validation partitions.
    """

    def __init__(self, data: Mapping[str, np.ndarray], scope: frozenset | None = None):
        self._data = data
        self._scope = scope

    def __contains__(self, clip_id) -> bool:
        return clip_id in self._data and (self._scope is None or clip_id in self._scope)

    def __len__(self) -> int:
        return len(self._data) if self._scope is None else len(self._scope)

    def scoped(self, clip_ids: Iterable[str]) -> "FeatureStore":
        ids = frozenset(clip_ids)
        if self._scope is not None:
            ids = ids & self._scope
        return FeatureStore(self._data, ids)

    def check(self, clip_ids: Iterable[str]) -> None:
        ids = list(clip_ids)
        if self._scope is not None:
            outside = [c for c in ids if c not in self._scope]
            if outside:
                raise CacheMissError(outside, reason="outside partition scope")
        missing = [c for c in ids if c not in self._data]
        if missing:
            raise CacheMissError(missing)

    def get(self, clip_id: str) -> np.ndarray:
        self.check([clip_id])
        return self._data[clip_id]

    def stack(self, clip_ids: Sequence[str]) -> np.ndarray:
        """(len(clip_ids), n_mfcc, n_frames) float32 array."""
        self.check(clip_ids)
        return np.stack([np.asarray(self._data[c], dtype=np.float32) for c in clip_ids])
