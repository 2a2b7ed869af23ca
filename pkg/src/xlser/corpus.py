"""Corpus manifests: filename conventions, valence mapping and duration statistics."""

from __future__ import annotations

import csv
import enum
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Iterable, NamedTuple

from .audio_io import read_wav_info
from .errors import CorpusScanError, MappingError, ParseError, UserError


class Valence(str, enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"

    @property
    def index(self) -> int:
        return 0 if self is Valence.POSITIVE else 1


CORPORA = ("ASED", "RAVDESS", "EMODB", "URDU", "SYNTH")

_P, _N = Valence.POSITIVE, Valence.NEGATIVE

# Labels are lower-cased forms of the emotion names each corpus uses.
VALENCE_TABLE: dict[str, dict[str, Valence]] = {
    "ASED": {"neutral": _P, "happy": _P, "fear": _N, "sadness": _N, "angry": _N},
    "RAVDESS": {"neutral": _P, "happy": _P, "calm": _P, "surprise": _P,
                "fear": _N, "sadness": _N, "angry": _N, "disgust": _N},
    "EMODB": {"neutral": _P, "happiness": _P, "anger": _N, "sadness": _N,
              "fear": _N, "disgust": _N, "boredom": _N},
    "URDU": {"neutral": _P, "happy": _P, "angry": _N, "sad": _N},
    "SYNTH": {"positive": _P, "negative": _N},
}

_CORPUS_ALIASES = {"EMO-DB": "EMODB", "EMO_DB": "EMODB"}


def canonical_corpus(name: str) -> str:
    key = name.strip().upper()
    key = _CORPUS_ALIASES.get(key, key)
    if key not in VALENCE_TABLE:
        raise MappingError(f"unknown corpus {name!r}; expected one of {', '.join(CORPORA)}")
    return key


def to_valence(corpus: str, emotion: str) -> Valence:
    table = VALENCE_TABLE[canonical_corpus(corpus)]
    try:
        return table[emotion]
    except KeyError:
        raise MappingError(
            f"emotion {emotion!r} is not defined for {corpus}; "
            f"valid labels: {', '.join(sorted(table))}"
        ) from None


@dataclass(frozen=True)
class ClipMeta:
    clip_id: str
    path: str
    corpus: str
    speaker_id: str
    sentence_id: str | None
    emotion: str
    valence: Valence
    duration_s: float


class ParsedName(NamedTuple):
    speaker_id: str
    sentence_id: str | None
    emotion: str
    extra: dict


# -- filename conventions ---------------------------------------------------

RAVDESS_EMOTIONS = {"01": "neutral", "02": "calm", "03": "happy", "04": "sadness",
                    "05": "angry", "06": "fear", "07": "disgust", "08": "surprise"}
RAVDESS_CODES = {v: k for k, v in RAVDESS_EMOTIONS.items()}
RAVDESS_FIELDS = ("modality", "vocal_channel", "emotion", "intensity",
                  "statement", "repetition", "actor")

EMODB_EMOTIONS = {"W": "anger", "L": "boredom", "E": "disgust", "A": "fear",
                  "F": "happiness", "T": "sadness", "N": "neutral"}
EMODB_CODES = {v: k for k, v in EMODB_EMOTIONS.items()}

# Directory names seen in emotion-per-directory distributions.
_DIR_ALIASES = {
    "ASED": {"fearful": "fear", "sad": "sadness", "anger": "angry", "happiness": "happy"},
    "URDU": {"anger": "angry", "sadness": "sad", "happiness": "happy"},
}


def _parse_ravdess(name: str) -> ParsedName:
    stem = PurePosixPath(name).name
    if not stem.lower().endswith(".wav"):
        raise ParseError(f"{name!r}: expected .wav extension", position=len(stem))
    stem = stem[:-4]
    parts = stem.split("-")
    if len(parts) != 7:
        raise ParseError(f"{name!r}: expected 7 dash-separated fields, got {len(parts)}",
                         position=0)
    pos = 0
    for label, part in zip(RAVDESS_FIELDS, parts):
        if len(part) != 2 or not part.isdigit():
            raise ParseError(f"{name!r}: {label} field {part!r} is not two digits",
                             position=pos)
        pos += len(part) + 1
    fields = dict(zip(RAVDESS_FIELDS, parts))
    code = fields["emotion"]
    if code not in RAVDESS_EMOTIONS:
        raise MappingError(f"{name!r}: unknown RAVDESS emotion code {code!r}; "
                           f"valid codes 01-08")
    return ParsedName(fields["actor"], fields["statement"], RAVDESS_EMOTIONS[code],
                      {"intensity": fields["intensity"], "vocal_channel": fields["vocal_channel"],
                       "repetition": fields["repetition"], "modality": fields["modality"]})


def _parse_emodb(name: str) -> ParsedName:
    stem = PurePosixPath(name).name
    checks = [
        (0, 2, str.isdigit, "two-digit speaker"),
        (2, 3, lambda s: s in "ab", "text code letter a/b"),
        (3, 5, str.isdigit, "two-digit text number"),
        (5, 6, str.isupper, "upper-case emotion letter"),
        (6, 7, str.islower, "lower-case version letter"),
    ]
    for start, stop, ok, what in checks:
        part = stem[start:stop]
        if len(part) != stop - start or not ok(part):
            raise ParseError(f"{name!r}: expected {what}", position=start)
    if stem[7:].lower() != ".wav":
        raise ParseError(f"{name!r}: expected '.wav' after version letter", position=7)
    letter = stem[5]
    if letter not in EMODB_EMOTIONS:
        raise MappingError(f"{name!r}: unknown EMO-DB emotion letter {letter!r}; "
                           f"valid letters {''.join(sorted(EMODB_EMOTIONS))}")
    return ParsedName(stem[0:2], stem[2:5], EMODB_EMOTIONS[letter], {"version": stem[6]})


def _emotion_from_dir(corpus: str, name: str) -> tuple[str, str]:
    p = PurePosixPath(name)
    if len(p.parts) < 2:
        raise ParseError(f"{name!r}: expected <emotion directory>/<file>.wav", position=0)
    raw = p.parts[-2]
    label = re.sub(r"^[\d\s_.-]+", "", raw).lower()
    label = _DIR_ALIASES.get(corpus, {}).get(label, label)
    if label not in VALENCE_TABLE[corpus]:
        raise MappingError(f"{name!r}: emotion directory {raw!r} is not a {corpus} label; "
                           f"valid labels: {', '.join(sorted(VALENCE_TABLE[corpus]))}")
    return label, p.name


def _split_stem(name: str, fname: str) -> list[str]:
    if not fname.lower().endswith(".wav"):
        raise ParseError(f"{name!r}: expected .wav extension", position=len(name))
    fields = re.split(r"[_-]", fname[:-4])
    if not fields[0]:
        raise ParseError(f"{name!r}: missing speaker prefix", position=len(name) - len(fname))
    return fields


def _parse_urdu(name: str) -> ParsedName:
    emotion, fname = _emotion_from_dir("URDU", name)
    fields = _split_stem(name, fname)
    return ParsedName(fields[0], None, emotion, {})


def _parse_ased(name: str) -> ParsedName:
    emotion, fname = _emotion_from_dir("ASED", name)
    fields = _split_stem(name, fname)
    if len(fields) < 2 or not fields[1]:
        raise ParseError(f"{name!r}: expected <speaker>_<sentence>[_...].wav",
                         position=len(name) - len(fname) + len(fields[0]))
    return ParsedName(fields[0], fields[1], emotion, {})


def _parse_synth(name: str) -> ParsedName:
    fname = PurePosixPath(name).name
    fields = _split_stem(name, fname)
    if len(fields) != 4:
        raise ParseError(f"{name!r}: expected <speaker>_<sentence>_<emotion>_<take>.wav",
                         position=0)
    speaker, sentence, emotion, _take = fields
    if emotion not in VALENCE_TABLE["SYNTH"]:
        raise MappingError(f"{name!r}: unknown SYNTH emotion {emotion!r}")
    return ParsedName(speaker, None if sentence == "x" else sentence, emotion, {})


_PARSERS = {"RAVDESS": _parse_ravdess, "EMODB": _parse_emodb, "URDU": _parse_urdu,
            "ASED": _parse_ased, "SYNTH": _parse_synth}


def parse_filename(corpus: str, name: str) -> ParsedName:
    """Speaker, sentence and canonical emotion label from a corpus-relative path.

    RAVDESS and EMO-DB encode everything in the file name. ASED and URDU are
    distributed as one directory per emotion, so ``name`` must include that
    directory (``Angry/SM1_F1_A01.wav``).
    """
    corpus = canonical_corpus(corpus)
    return _PARSERS[corpus](name.replace(os.sep, "/"))


# -- manifests --------------------------------------------------------------


@dataclass(frozen=True)
class CorpusManifest:
    corpus: str
    entries: tuple[ClipMeta, ...]
    counts: dict = field(default=None, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        tally = self.tally(self.entries)
        if self.counts is None:
            object.__setattr__(self, "counts", tally)
        elif dict(self.counts) != tally:
            raise ValueError(f"counts {self.counts} disagree with entries {tally}")
        ids = [e.clip_id for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = [c for c, n in Counter(ids).items() if n > 1]
            raise ValueError(f"duplicate clip ids: {dupes[:5]}")

    @staticmethod
    def tally(entries: Iterable[ClipMeta]) -> dict:
        c = Counter(e.valence.value for e in entries)
        return {v.value: c.get(v.value, 0) for v in Valence}

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def speakers(self) -> list[str]:
        return sorted({e.speaker_id for e in self.entries})

    @property
    def sentences(self) -> list[str]:
        return sorted({e.sentence_id for e in self.entries if e.sentence_id is not None})

    def by_id(self) -> dict[str, ClipMeta]:
        return {e.clip_id: e for e in self.entries}


def make_clip_id(corpus: str, relpath: str) -> str:
    rel = relpath.replace(os.sep, "/")
    if rel.lower().endswith(".wav"):
        rel = rel[:-4]
    return f"{corpus}:{rel}"


def scan_corpus(root: str | os.PathLike, corpus: str) -> CorpusManifest:
    """Parse every ``.wav`` under ``root``; any failure aborts with a full report."""
    corpus = canonical_corpus(corpus)
    root = Path(root)
    if not root.is_dir():
        raise UserError(f"directory not found: {root}")
    wavs = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".wav")
    entries, failures = [], []
    for path in wavs:
        rel = path.relative_to(root).as_posix()
        try:
            parsed = parse_filename(corpus, rel)
            info = read_wav_info(path)
        except UserError as exc:
            failures.append((rel, str(exc)))
            continue
        entries.append(ClipMeta(
            clip_id=make_clip_id(corpus, rel), path=str(path), corpus=corpus,
            speaker_id=parsed.speaker_id, sentence_id=parsed.sentence_id,
            emotion=parsed.emotion, valence=to_valence(corpus, parsed.emotion),
            duration_s=info.duration,
        ))
    if failures:
        raise CorpusScanError(failures)
    entries.sort(key=lambda e: e.clip_id)
    return CorpusManifest(corpus, tuple(entries))


MANIFEST_COLUMNS = ("clip_id", "path", "corpus", "speaker_id", "sentence_id",
                    "emotion", "valence", "duration_s")


def write_manifest(manifest: CorpusManifest, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            w.writerow([e.clip_id, e.path, e.corpus, e.speaker_id, e.sentence_id or "",
                        e.emotion, e.valence.value, repr(float(e.duration_s))])


def read_manifest(path: str | os.PathLike, corpus: str | None = None) -> CorpusManifest:
    """Read a manifest CSV.

    Besides the full format written by :func:`write_manifest`, this accepts a
    reduced adapter form with at least ``path``, ``speaker_id`` and
    ``emotion`` columns (plus ``corpus`` or the ``corpus`` argument) for
    distributions whose layout does not match a known convention. Missing
    valences are derived, missing durations are read from the WAV headers.
    """
    base = Path(path).parent
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        required = {"path", "speaker_id", "emotion"}
        if not required <= cols:
            raise UserError(f"{path}: manifest needs columns {sorted(required)}")
        entries = []
        for row in reader:
            c = canonical_corpus(row.get("corpus") or corpus or "")
            wav = row["path"]
            if not os.path.isabs(wav) and not os.path.exists(wav):
                wav = str(base / wav)
            emotion = row["emotion"].strip().lower()
            valence = to_valence(c, emotion)
            if row.get("valence") and row["valence"] != valence.value:
                raise MappingError(f"{row.get('clip_id', wav)}: valence {row['valence']!r} "
                                   f"contradicts {c}/{emotion} -> {valence.value}")
            dur = row.get("duration_s")
            duration = float(dur) if dur else read_wav_info(wav).duration
            clip_id = row.get("clip_id") or make_clip_id(c, row["path"])
            entries.append(ClipMeta(clip_id, wav, c, row["speaker_id"],
                                    row.get("sentence_id") or None, emotion, valence,
                                    duration))
    entries.sort(key=lambda e: e.clip_id)
    corpora = {e.corpus for e in entries}
    name = corpus and canonical_corpus(corpus) or (corpora.pop() if len(corpora) == 1 else "MIXED")
    return CorpusManifest(name, tuple(entries))


# -- duration statistics ----------------------------------------------------


@dataclass(frozen=True)
class DurationStats:
    """Clip-length histogram in one-second buckets.

    ``mean`` and ``std`` are computed over bucket lower bounds with the
    population formula; ``raw_mean`` and ``raw_std`` use exact durations.
    """

    histogram: dict[int, int]
    mean: float
    std: float
    raw_mean: float
    raw_std: float
    n: int

    def rows(self, lo: int = 1, hi: int = 9) -> list[tuple[str, int]]:
        keys = range(min([lo, *self.histogram]), max([hi - 1, *self.histogram]) + 1)
        return [(f"{k}-{k + 1}", self.histogram.get(k, 0)) for k in keys]


def corpus_stats(manifest: CorpusManifest) -> DurationStats:
    durations = [e.duration_s for e in manifest.entries]
    n = len(durations)
    if n == 0:
        return DurationStats({}, math.nan, math.nan, math.nan, math.nan, 0)
    buckets = [math.floor(d) for d in durations]
    hist = dict(sorted(Counter(buckets).items()))

    def mean_std(xs):
        m = math.fsum(xs) / len(xs)
        return m, math.sqrt(math.fsum((x - m) ** 2 for x in xs) / len(xs))

    mean, std = mean_std(buckets)
    raw_mean, raw_std = mean_std(durations)
    return DurationStats(hist, mean, std, raw_mean, raw_std, n)


def format_stats_table(stats: dict[str, DurationStats]) -> str:
    """Markdown table with one column per corpus, in the clip-length table layout."""
    names = list(stats)
    lo = min([1, *(k for s in stats.values() for k in s.histogram)])
    hi = max([9, *(k + 1 for s in stats.values() for k in s.histogram)])
    lines = ["| Duration | " + " | ".join(names) + " |",
             "|---" * (len(names) + 1) + "|"]
    for k in range(lo, hi):
        cells = [str(stats[c].histogram.get(k, "")) for c in names]
        lines.append(f"| {k}-{k + 1} | " + " | ".join(cells) + " |")
    lines.append("| STD | " + " | ".join(f"{stats[c].std:.3f}" for c in names) + " |")
    lines.append("| Mean | " + " | ".join(f"{stats[c].mean:.3f}" for c in names) + " |")
    return "\n".join(lines)
