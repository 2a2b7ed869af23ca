"""Deterministic synthetic emotional-speech corpora for desk-scale verification.

Each pseudo-language has its own voice (base f0 and harmonic profile) and
writes files following one of the real corpus naming conventions, so the
generated trees go through the same :func:`scan_corpus` path as real data.
Valence is carried by cues shared across every language: amplitude
modulation rate, pitch vibrato, spectral tilt and energy contour.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from .audio_io import Clip, write_wav
from .corpus import (
    EMODB_CODES,
    RAVDESS_CODES,
    VALENCE_TABLE,
    CorpusManifest,
    Valence,
    canonical_corpus,
    scan_corpus,
    write_manifest,
)
from .errors import ConfigError


@dataclass(frozen=True)
class ValenceCue:
    am_rate: float  # Hz
    am_depth: float
    fm_rate: float  # Hz
    fm_depth: float  # fraction of f0
    tilt_db: float  # gain change per harmonic number, dB
    contour: float  # log-energy slope across the clip


@dataclass(frozen=True)
class LanguageSpec:
    corpus: str
    f0: float
    harmonics: tuple[float, ...]
    n_sentences: int = 10


DEFAULT_LANGUAGES = (
    LanguageSpec("ASED", 150.0, (1.0, 0.5, 0.8, 0.3, 0.4, 0.2, 0.15, 0.1)),
    LanguageSpec("RAVDESS", 195.0, (1.0, 0.9, 0.4, 0.5, 0.2, 0.25, 0.1, 0.1)),
    LanguageSpec("EMODB", 120.0, (0.7, 1.0, 0.6, 0.6, 0.3, 0.2, 0.2, 0.1)),
    LanguageSpec("URDU", 170.0, (1.0, 0.3, 0.6, 0.2, 0.4, 0.1, 0.2, 0.05)),
)


@dataclass(frozen=True)
class SynthSpec:
    languages: tuple[LanguageSpec, ...] = DEFAULT_LANGUAGES
    speakers: int = 10
    clips_per_speaker: int = 20
    sample_rate: int = 16000
    min_seconds: float = 2.0
    max_seconds: float = 5.0
    noise_db: float = -35.0
    positive: ValenceCue = ValenceCue(2.0, 0.8, 1.0, 0.01, -4.0, 0.6)
    negative: ValenceCue = ValenceCue(8.0, 0.8, 6.0, 0.03, -1.5, -0.6)

    def validate(self) -> "SynthSpec":
        if not self.languages:
            raise ConfigError("languages: at least one language required")
        names = [canonical_corpus(lang.corpus) for lang in self.languages]
        if len(set(names)) != len(names):
            raise ConfigError("languages: corpus conventions must be distinct")
        for lang in self.languages:
            if lang.f0 <= 0 or not lang.harmonics:
                raise ConfigError("languages: f0 must be positive and harmonics non-empty")
            if lang.n_sentences < 1:
                raise ConfigError("languages: n_sentences must be >= 1")
        if self.speakers < 1:
            raise ConfigError("speakers: must be >= 1")
        if self.clips_per_speaker < 1:
            raise ConfigError("clips_per_speaker: must be >= 1")
        if not 0 < self.min_seconds <= self.max_seconds:
            raise ConfigError("min_seconds/max_seconds: need 0 < min <= max")
        if self.sample_rate < 8000:
            raise ConfigError("sample_rate: must be >= 8000")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        def build(klass, data, where):
            if not isinstance(data, Mapping):
                raise ConfigError(f"{where}: expected an object")
            known = {f.name for f in fields(klass)}
            unknown = set(data) - known
            if unknown:
                raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown field")
            return data

        def make(klass, data, where, **extra):
            try:
                return klass(**{**build(klass, data, where), **extra})
            except TypeError as exc:
                raise ConfigError(f"{where}: {exc}") from None

        d = dict(build(cls, d, "spec"))
        if "languages" in d:
            d["languages"] = tuple(
                make(LanguageSpec, lang, f"languages[{i}]",
                     harmonics=tuple(lang.get("harmonics", ())) if isinstance(lang, Mapping) else ())
                for i, lang in enumerate(d["languages"])
            )
        for key in ("positive", "negative"):
            if key in d:  # partial cues override the defaults field by field
                d[key] = make(ValenceCue, {**asdict(getattr(cls(), key)), **build(ValenceCue, d[key], key)}, key)
        return make(cls, d, "spec").validate()


def _plan(lang: LanguageSpec, spec: SynthSpec):
    """Yield (speaker index, clip index, valence, emotion, relative path)."""
    corpus = canonical_corpus(lang.corpus)
    table = VALENCE_TABLE[corpus]
    by_valence = {v: [e for e, val in table.items() if val is v] for v in Valence}
    emodb_speakers = ["03", "08", "09", "10", "11", "12", "13", "14", "15", "16"]
    emodb_texts = ["a01", "a02", "a04", "a05", "a07", "b01", "b02", "b03", "b09", "b10"]
    for s in range(spec.speakers):
        seen: dict[tuple, int] = {}
        for j in range(spec.clips_per_speaker):
            valence = Valence.POSITIVE if j % 2 == 0 else Valence.NEGATIVE
            pool = by_valence[valence]
            emotion = pool[(j // 2 + s) % len(pool)]
            sentence = (j // 2) % lang.n_sentences
            key = (emotion, sentence)
            k = seen.get(key, 0)
            seen[key] = k + 1
            if corpus == "RAVDESS":
                spk = f"{s + 1:02d}"
                stmt = sentence % 2 + 1
                k = k * (lang.n_sentences // 2 or 1) + sentence // 2
                rel = (f"Actor_{spk}/03-01-{RAVDESS_CODES[emotion]}-{k % 2 + 1:02d}-"
                       f"{stmt:02d}-{k // 2 + 1:02d}-{spk}.wav")
            elif corpus == "EMODB":
                spk = emodb_speakers[s] if s < len(emodb_speakers) else f"{s + 7:02d}"
                text = emodb_texts[sentence % len(emodb_texts)]
                k = k * (lang.n_sentences // len(emodb_texts) + 1) + sentence // len(emodb_texts)
                rel = f"{spk}{text}{EMODB_CODES[emotion]}{chr(ord('a') + k)}.wav"
            elif corpus == "URDU":
                spk = f"S{'M' if s % 2 == 0 else 'F'}{s + 1}"
                rel = f"{emotion.capitalize()}/{spk}_F{j + 1}_{emotion[0].upper()}{j + 1:02d}.wav"
            elif corpus == "ASED":
                rel = f"{emotion.capitalize()}/S{s + 1:02d}_{sentence + 1:02d}_{k + 1:02d}.wav"
            else:
                rel = f"spk{s + 1:02d}_s{sentence + 1:02d}_{emotion}_{k + 1:02d}.wav"
            yield s, j, valence, emotion, sentence, rel


def _render(lang: LanguageSpec, cue: ValenceCue, emo_shift: float, spk_factor: float,
            sentence: int, spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    sr = spec.sample_rate
    dur = rng.uniform(spec.min_seconds, spec.max_seconds)
    n = int(dur * sr)
    t = np.arange(n) / sr
    u = t / dur - 0.5
    glide = 0.08 * np.sin(2 * np.pi * (sentence + 1) * 0.37) * u
    vib = cue.fm_depth * np.sin(2 * np.pi * cue.fm_rate * (1 + emo_shift) * t
                                + rng.uniform(0, 2 * np.pi))
    f0 = lang.f0 * spk_factor * (1 + 0.1 * emo_shift) * (1 + glide) * (1 + vib)
    phase = 2 * np.pi * np.cumsum(f0) / sr
    sig = np.zeros(n)
    nyq_guard = 0.45 * sr
    for h, amp in enumerate(lang.harmonics, start=1):
        if h * f0.max() >= nyq_guard:
            break
        gain = amp * 10 ** (cue.tilt_db * (h - 1) / 20)
        sig += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    am = 1 + cue.am_depth * np.sin(2 * np.pi * cue.am_rate * (1 + emo_shift) * t
                                   + rng.uniform(0, 2 * np.pi))
    env = am / (1 + cue.am_depth) * np.exp(cue.contour * u)
    fade = np.minimum(1.0, np.minimum(t, dur - t) / 0.02)
    sig *= env * fade
    level = rng.uniform(0.3, 0.7)
    sig *= level / np.max(np.abs(sig))
    sig += rng.normal(0.0, level * 10 ** (spec.noise_db / 20), n)
    return np.clip(sig, -1.0, 1.0 - 1 / 32768)


def synth_corpus(spec: SynthSpec, seed: int, out_dir: str | os.PathLike) -> dict[str, CorpusManifest]:
    """Write one corpus tree per language under ``out_dir`` and return their manifests.

    Output is a pure function of (spec, seed): the same inputs give
    byte-identical WAV files. Each tree gets a ``<CORPUS>.csv`` manifest
    beside it in ``out_dir``.
    """
    spec.validate()
    out = Path(out_dir)
    manifests = {}
    for li, lang in enumerate(spec.languages):
        corpus = canonical_corpus(lang.corpus)
        root = out / corpus
        root.mkdir(parents=True, exist_ok=True)
        spk_rng = np.random.default_rng([seed, li, 0])
        spk_factors = spk_rng.uniform(0.85, 1.2, spec.speakers)
        table = VALENCE_TABLE[corpus]
        for s, j, valence, emotion, sentence, rel in _plan(lang, spec):
            pool = [e for e, v in table.items() if v is valence]
            emo_shift = 0.1 * (pool.index(emotion) - (len(pool) - 1) / 2) / max(len(pool) - 1, 1)
            cue = spec.positive if valence is Valence.POSITIVE else spec.negative
            rng = np.random.default_rng([seed, li, s + 1, j])
            y = _render(lang, cue, emo_shift, spk_factors[s], sentence, spec, rng)
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            write_wav(path, Clip(spec.sample_rate, 1, y, str(path)))
        manifest = scan_corpus(root, corpus)
        write_manifest(manifest, out / f"{corpus}.csv")
        manifests[corpus] = manifest
    (out / "synth_spec.json").write_text(
        json.dumps({"seed": seed, "spec": spec.to_dict()}, indent=2, sort_keys=True) + "\n")
    return manifests
