"""WAV decoding and normalisation of clips to 16 kHz mono, 5 seconds."""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, replace
from typing import BinaryIO, NamedTuple

import numpy as np

from .errors import DecodeError, UnsupportedFormatError

TARGET_RATE = 16000
TARGET_SECONDS = 5.0

_PCM = 0x0001
_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class Clip:
    """Decoded audio.

    ``samples`` is a 1-D float64 array, interleaved when ``channels > 1``.
    """

    sample_rate: int
    channels: int
    samples: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.samples.ndim != 1 or self.samples.size % self.channels:
            raise ValueError(
                f"samples must be 1-D with length a multiple of {self.channels}"
            )

    @property
    def n_frames(self) -> int:
        return self.samples.size // self.channels

    @property
    def duration(self) -> float:
        return self.n_frames / self.sample_rate

    def frames(self) -> np.ndarray:
        """Samples reshaped to (n_frames, channels)."""
        return self.samples.reshape(-1, self.channels)


class WavInfo(NamedTuple):
    sample_rate: int
    channels: int
    bits_per_sample: int
    n_frames: int

    @property
    def duration(self) -> float:
        return self.n_frames / self.sample_rate


def _iter_chunks(fh: BinaryIO):
    """Yield (chunk_id, size, offset_of_payload) and skip over each payload."""
    head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF":
        raise DecodeError("missing RIFF header", chunk="RIFF")
    if head[8:12] != b"WAVE":
        raise DecodeError("RIFF form type is not WAVE", chunk="WAVE")
    while True:
        hdr = fh.read(8)
        if len(hdr) == 0:
            return
        if len(hdr) < 8:
            raise DecodeError("truncated chunk header", chunk=hdr[:4].decode("latin-1"))
        cid = hdr[:4].decode("latin-1")
        (size,) = struct.unpack("<I", hdr[4:])
        start = fh.tell()
        yield cid, size, start
        # chunks are word aligned
        fh.seek(start + size + (size & 1))


def _parse_fmt(payload: bytes) -> tuple[int, int, int, int]:
    if len(payload) < 16:
        raise DecodeError("fmt chunk shorter than 16 bytes", chunk="fmt ")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack(
        "<HHIIHH", payload[:16]
    )
    if tag == _EXTENSIBLE:
        if len(payload) < 26:
            raise DecodeError("truncated WAVE_FORMAT_EXTENSIBLE block", chunk="fmt ")
        (tag,) = struct.unpack("<H", payload[24:26])
    if tag != _PCM:
        raise UnsupportedFormatError(f"format tag 0x{tag:04x} is not integer PCM")
    if bits != 16:
        raise UnsupportedFormatError(f"{bits}-bit PCM is not supported (16-bit only)")
    if channels < 1 or rate < 1:
        raise DecodeError(f"invalid channels={channels} / rate={rate}", chunk="fmt ")
    if block_align != channels * 2:
        raise DecodeError(f"block_align {block_align} inconsistent", chunk="fmt ")
    return rate, channels, bits, block_align


def _read_header(fh: BinaryIO) -> tuple[WavInfo, int, int]:
    """Return (info, data offset, data byte count) without reading samples."""
    fmt = None
    for cid, size, start in _iter_chunks(fh):
        if cid == "fmt ":
            fmt = _parse_fmt(fh.read(size))
        elif cid == "data":
            if fmt is None:
                raise DecodeError("data chunk before fmt chunk", chunk="fmt ")
            rate, channels, bits, block_align = fmt
            fh.seek(0, os.SEEK_END)
            available = max(0, min(size, fh.tell() - start))
            n_frames = available // block_align
            return WavInfo(rate, channels, bits, n_frames), start, n_frames * block_align
    if fmt is None:
        raise DecodeError("no fmt chunk", chunk="fmt ")
    raise DecodeError("no data chunk", chunk="data")


def decode_wav(data: bytes, source: str = "") -> Clip:
    """Decode a 16-bit PCM RIFF/WAVE byte string; samples are scaled by 1/32768."""
    fh = io.BytesIO(data)
    info, offset, nbytes = _read_header(fh)
    raw = np.frombuffer(data, dtype="<i2", count=nbytes // 2, offset=offset)
    samples = raw.astype(np.float64) / 32768.0
    return Clip(info.sample_rate, info.channels, samples, source)


def read_wav(path: str | os.PathLike) -> Clip:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_wav(data, source=os.fspath(path))


def read_wav_info(path: str | os.PathLike) -> WavInfo:
    """Header-only read: rate, channels and frame count."""
    with open(path, "rb") as fh:
        info, _, _ = _read_header(fh)
    return info


def encode_wav(clip: Clip) -> bytes:
    """Encode as 16-bit PCM; values are clipped to the representable range."""
    q = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = q.tobytes()
    fmt = struct.pack(
        "<HHIIHH", _PCM, clip.channels, clip.sample_rate,
        clip.sample_rate * clip.channels * 2, clip.channels * 2, 16,
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path: str | os.PathLike, clip: Clip) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_wav(clip))


def to_mono(clip: Clip) -> Clip:
    """Average channels frame by frame."""
    if clip.channels == 1:
        return clip
    mono = clip.frames().mean(axis=1)
    return Clip(clip.sample_rate, 1, mono, clip.source)


def _kaiser_sinc_bank(up: int, down: int, taps: int, cutoff: float, beta: float):
    """Polyphase bank of shape (up, taps), one normalised FIR per output phase.

    ``cutoff`` is in cycles per input sample. Phase ``p`` evaluates the
    continuous kernel at fractional offset ``p / up`` past the base sample.
    """
    half = taps // 2
    k = np.arange(-half + 1, half + 1)
    frac = np.arange(up)[:, None] / up
    d = frac - k[None, :]
    x = np.clip(d / half, -1.0, 1.0)
    window = np.i0(beta * np.sqrt(1.0 - x * x)) / np.i0(beta)
    bank = 2 * cutoff * np.sinc(2 * cutoff * d) * window
    bank /= bank.sum(axis=1, keepdims=True)
    return k, bank


def resample(
    clip: Clip,
    target_rate: int,
    taps: int = 64,
    rolloff: float = 0.45,
    beta: float = 8.0,
    chunk: int = 16384,
) -> Clip:
    """Windowed-sinc polyphase resampling of a mono clip.

    The anti-alias cutoff sits at ``rolloff * min(source, target)`` Hz, and
    every output sample is a ``taps``-point dot product with a Kaiser-windowed
    sinc evaluated at that sample's fractional input position.
    """
    if clip.channels != 1:
        raise ValueError("resample expects a mono clip")
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    src = clip.sample_rate
    if src == target_rate:
        return clip
    g = math.gcd(src, target_rate)
    up, down = target_rate // g, src // g
    n_in = clip.samples.size
    n_out = (2 * n_in * up + down) // (2 * down)  # round half up
    cutoff = rolloff * min(src, target_rate) / src
    k, bank = _kaiser_sinc_bank(up, down, taps, cutoff, beta)

    lo = -int(k[0])
    hi = int(k[-1])
    xp = np.concatenate([np.zeros(lo), clip.samples, np.zeros(hi + 1)])
    out = np.empty(n_out)
    for s in range(0, n_out, chunk):
        n = np.arange(s, min(s + chunk, n_out), dtype=np.int64)
        pos = n * down
        base, phase = pos // up, pos % up
        idx = base[:, None] + k[None, :] + lo
        out[s : s + n.size] = np.einsum("ij,ij->i", xp[idx], bank[phase])
    np.clip(out, -1.0, 1.0, out=out)
    return Clip(target_rate, 1, out, clip.source)


def normalize_duration(clip: Clip, target_seconds: float = TARGET_SECONDS) -> Clip:
    """Truncate the tail or append silence so the clip lasts exactly ``target_seconds``."""
    if clip.channels != 1:
        raise ValueError("normalize_duration expects a mono clip")
    n = int(round(target_seconds * clip.sample_rate))
    x = clip.samples
    if x.size == n:
        return clip
    if x.size > n:
        return replace(clip, samples=x[:n].copy())
    return replace(clip, samples=np.concatenate([x, np.zeros(n - x.size)]))


def preprocess(clip: Clip, sample_rate: int = TARGET_RATE,
               seconds: float = TARGET_SECONDS) -> Clip:
    """Mono, resampled to ``sample_rate``, padded or cut to ``seconds``."""
    return normalize_duration(resample(to_mono(clip), sample_rate), seconds)
