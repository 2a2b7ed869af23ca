"""Train/validation/test partitions for the monolingual, sentence-independent,
cross-lingual and multilingual protocols, plus an independent verifier."""

from __future__ import annotations

import json
import math
import os
import zlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import ClipMeta, CorpusManifest, Valence, canonical_corpus
from .errors import InfeasibleSplitError, ProtocolError, SplitVerificationError

SCENARIOS = ("Monolingual", "SentenceIndependent", "CrossLingual", "Multilingual")
PARTITIONS = ("train", "validation", "test")
MONO_RATIOS = (0.7, 0.1, 0.2)
SENTENCE_RATIOS = (0.8, 0.2)
HOLDOUT = 0.1


@dataclass(frozen=True)
class SplitSpec:
    scenario: str
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    ratios: tuple[float, ...]
    source_corpora: tuple[str, ...]
    target_corpus: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for name in PARTITIONS:
            object.__setattr__(self, name, tuple(sorted(getattr(self, name))))
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        object.__setattr__(self, "source_corpora", tuple(self.source_corpora))

    def partition(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)

    @property
    def name(self) -> str:
        src = "+".join(self.source_corpora)
        tgt = f"-{self.target_corpus}" if self.target_corpus not in (None, *self.source_corpora) else ""
        return f"{self.scenario}-{src}{tgt}-seed{self.seed}"

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "ratios": list(self.ratios),
                "source_corpora": list(self.source_corpora),
                "target_corpus": self.target_corpus,
                **{p: list(getattr(self, p)) for p in PARTITIONS}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SplitSpec":
        return cls(d["scenario"], d["train"], d["validation"], d["test"], int(d["seed"]),
                   d["ratios"], d["source_corpora"], d.get("target_corpus"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SplitSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _greedy(order: Sequence[str], sizes: Mapping[str, int],
            ratios: Sequence[float]) -> list[list[str]]:
    total = sum(sizes.values())
    deficit = [r * total for r in ratios]
    bins: list[list[str]] = [[] for _ in ratios]
    for i, key in enumerate(order):
        empty = [b for b in range(len(bins)) if not bins[b] and ratios[b] > 0]
        remaining = len(order) - i
        candidates = empty if 0 < remaining <= len(empty) else range(len(bins))
        best = max(candidates, key=lambda b: (deficit[b], -b))
        bins[best].append(key)
        deficit[best] -= sizes[key]
    return bins


def pack_groups(sizes: Mapping[str, int], ratios: Sequence[float],
                rng: np.random.Generator, tries: int = 32) -> list[list[str]]:
    """Assign whole groups to bins so bin totals approach ``ratios``.

    Groups are visited in seeded shuffle order; each goes to the bin with the
    largest remaining deficit (earliest bin on ties), which keeps every bin
    within one group's size of its target. When the groups left exactly
    cover the bins still empty, those bins are filled first so no partition
    ends up empty. That forcing can break the bound for an unlucky order, so
    ``tries`` orders are packed and the one with the smallest worst-case
    deviation wins (earliest order on ties).
    """
    keys = sorted(sizes)
    total = sum(sizes.values())
    best, best_dev = None, math.inf
    for _ in range(max(tries, 1)):
        bins = _greedy([keys[i] for i in rng.permutation(len(keys))], sizes, ratios)
        dev = max(abs(sum(sizes[k] for k in b) - r * total) for b, r in zip(bins, ratios))
        if dev < best_dev - 1e-9:
            best, best_dev = bins, dev
    return best


def _rng(seed: int, *salt: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(zlib.crc32(s.encode()) for s in salt)]))


def _speaker_sizes(entries: Iterable[ClipMeta]) -> dict[str, int]:
    return dict(Counter(e.speaker_id for e in entries))


def _clips_of(entries: Iterable[ClipMeta], key: str, groups: Iterable[str]) -> list[str]:
    groups = set(groups)
    return [e.clip_id for e in entries if getattr(e, key) in groups]


def speaker_split(manifest: CorpusManifest, ratios: Sequence[float] = MONO_RATIOS,
                  seed: int = 0) -> SplitSpec:
    """Speaker-independent train/validation/test split packed by clip counts."""
    ratios = tuple(ratios)
    if len(ratios) != 3 or min(ratios) < 0 or not np.isclose(sum(ratios), 1.0):
        raise ProtocolError(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    sizes = _speaker_sizes(manifest.entries)
    if len(sizes) < 3:
        raise InfeasibleSplitError(
            f"{manifest.corpus}: speaker-independent split needs at least 3 speakers, "
            f"found {len(sizes)}")
    bins = pack_groups(sizes, ratios, _rng(seed, manifest.corpus, "speaker"))
    parts = [_clips_of(manifest.entries, "speaker_id", b) for b in bins]
    return SplitSpec("Monolingual", *parts, seed=seed, ratios=ratios,
                     source_corpora=(manifest.corpus,), target_corpus=manifest.corpus)


def sentence_split(manifest: CorpusManifest, ratios: Sequence[float] = SENTENCE_RATIOS,
                   seed: int = 0) -> SplitSpec:
    """Train/test split in which no sentence appears on both sides; no validation share."""
    ratios = tuple(ratios)
    if len(ratios) != 2 or min(ratios) <= 0 or not np.isclose(sum(ratios), 1.0):
        raise ProtocolError(f"ratios must be two positive fractions summing to 1, got {ratios}")
    missing = [e.clip_id for e in manifest.entries if e.sentence_id is None]
    if missing:
        raise ProtocolError(f"{manifest.corpus}: sentence-independent split needs sentence ids; "
                            f"{len(missing)} clip(s) have none (e.g. {missing[0]})")
    sentences = manifest.sentences
    if len(sentences) < 2:
        raise InfeasibleSplitError(f"{manifest.corpus}: need at least 2 sentences, "
                                   f"found {len(sentences)}")
    rng = _rng(seed, manifest.corpus, "sentence")
    order = [sentences[i] for i in rng.permutation(len(sentences))]
    n_train = min(max(int(round(ratios[0] * len(order))), 1), len(order) - 1)
    train = _clips_of(manifest.entries, "sentence_id", order[:n_train])
    test = _clips_of(manifest.entries, "sentence_id", order[n_train:])
    return SplitSpec("SentenceIndependent", train, (), test, seed=seed, ratios=ratios,
                     source_corpora=(manifest.corpus,), target_corpus=manifest.corpus)


def _holdout(manifest: CorpusManifest, seed: int, fraction: float = HOLDOUT):
    """Hold out roughly ``fraction`` of a corpus's clips as whole speakers."""
    sizes = _speaker_sizes(manifest.entries)
    if len(sizes) < 2:
        raise InfeasibleSplitError(f"{manifest.corpus}: validation holdout needs at least "
                                   f"2 speakers, found {len(sizes)}")
    train, val = pack_groups(sizes, (1 - fraction, fraction), _rng(seed, manifest.corpus, "holdout"))
    return (_clips_of(manifest.entries, "speaker_id", train),
            _clips_of(manifest.entries, "speaker_id", val))


def cross_lingual_split(train_manifest: CorpusManifest, test_manifest: CorpusManifest,
                        seed: int = 0) -> SplitSpec:
    src, tgt = canonical_corpus(train_manifest.corpus), canonical_corpus(test_manifest.corpus)
    if src == tgt:
        raise ProtocolError(f"cross-lingual split needs two different corpora, got {src} twice")
    train, val = _holdout(train_manifest, seed)
    test = [e.clip_id for e in test_manifest.entries]
    return SplitSpec("CrossLingual", train, val, test, seed=seed, ratios=(1 - HOLDOUT, HOLDOUT),
                     source_corpora=(src,), target_corpus=tgt)


def multilingual_split(train_manifests: Sequence[CorpusManifest], test_manifest: CorpusManifest,
                       seed: int = 0) -> SplitSpec:
    sources = [canonical_corpus(m.corpus) for m in train_manifests]
    tgt = canonical_corpus(test_manifest.corpus)
    if not 2 <= len(sources) <= 3:
        raise ProtocolError(f"multilingual split takes 2 or 3 training corpora, got {len(sources)}")
    if len(set(sources)) != len(sources):
        raise ProtocolError(f"duplicate training corpora: {'+'.join(sources)}")
    if tgt in sources:
        raise ProtocolError(f"test corpus {tgt} is among the training corpora "
                            f"{'+'.join(sources)}")
    train, val = [], []
    for m in train_manifests:
        t, v = _holdout(m, seed)
        train += t
        val += v
    test = [e.clip_id for e in test_manifest.entries]
    return SplitSpec("Multilingual", train, val, test, seed=seed, ratios=(1 - HOLDOUT, HOLDOUT),
                     source_corpora=tuple(sources), target_corpus=tgt)


# -- verification -----------------------------------------------------------


@dataclass
class SplitReport:
    name: str
    scenario: str
    counts: dict  # partition -> {"Positive": n, "Negative": n}
    checks: list = field(default_factory=list)  # (label, ok)
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def table(self) -> str:
        """Per-partition class counts as one Markdown row (Train, Test, Validation order)."""
        return format_distribution_table({self.name: self})

    def __str__(self) -> str:
        lines = [self.table(), ""]
        lines += [f"{label}: {'OK' if ok else 'FAILED'}" for label, ok in self.checks]
        lines += [f"  - {f}" for f in self.failures]
        return "\n".join(lines)


def _lookup(manifests) -> dict[str, ClipMeta]:
    if isinstance(manifests, CorpusManifest):
        manifests = [manifests]
    elif isinstance(manifests, Mapping):
        manifests = list(manifests.values())
    table: dict[str, ClipMeta] = {}
    for m in manifests:
        table.update(m.by_id())
    return table


def _preview(items, n: int = 5) -> str:
    items = sorted(items)
    more = f" (+{len(items) - n} more)" if len(items) > n else ""
    return ", ".join(map(str, items[:n])) + more


def verify_split(spec: SplitSpec, manifests, strict: bool = True) -> SplitReport:
    """Recompute every invariant of ``spec`` from the manifests.

    Returns a report with per-partition valence counts. With ``strict`` a
    violated invariant raises :class:`SplitVerificationError` whose
    ``report`` attribute holds the details.
    """
    meta = _lookup(manifests)
    report = SplitReport(spec.name, spec.scenario,
                         {p: {v.value: 0 for v in Valence} for p in PARTITIONS})

    def check(label: str, problems: list[str]):
        report.checks.append((label, not problems))
        report.failures.extend(problems)

    unknown = [c for p in PARTITIONS for c in spec.partition(p) if c not in meta]
    check("clip ids resolvable", [f"unknown clip ids: {_preview(unknown)}"] if unknown else [])
    members = {p: [meta[c] for c in spec.partition(p) if c in meta] for p in PARTITIONS}
    for p, entries in members.items():
        for e in entries:
            report.counts[p][e.valence.value] += 1

    problems = []
    for i, a in enumerate(PARTITIONS):
        for b in PARTITIONS[i + 1:]:
            shared = set(spec.partition(a)) & set(spec.partition(b))
            if shared:
                problems.append(f"clips in both {a} and {b}: {_preview(shared)}")
    for p in PARTITIONS:
        dupes = [c for c, n in Counter(spec.partition(p)).items() if n > 1]
        if dupes:
            problems.append(f"clips repeated in {p}: {_preview(dupes)}")
    check("partitions disjoint", problems)

    def groups(p, key):
        out = defaultdict(list)
        for e in members[p]:
            out[(e.corpus, getattr(e, key))].append(e.clip_id)
        return out

    if spec.scenario == "Monolingual":
        problems = []
        by_part = {p: groups(p, "speaker_id") for p in PARTITIONS}
        for i, a in enumerate(PARTITIONS):
            for b in PARTITIONS[i + 1:]:
                for corpus, spk in sorted(set(by_part[a]) & set(by_part[b])):
                    clips = by_part[a][(corpus, spk)] + by_part[b][(corpus, spk)]
                    problems.append(f"speaker {corpus}/{spk} in both {a} and {b} "
                                    f"(clips {_preview(clips, 3)})")
        check("speaker-independent", problems)
    elif spec.scenario == "SentenceIndependent":
        train_s, test_s = groups("train", "sentence_id"), groups("test", "sentence_id")
        problems = [f"sentence {c}/{s} in both train and test "
                    f"(clips {_preview(train_s[(c, s)] + test_s[(c, s)], 3)})"
                    for c, s in sorted(set(train_s) & set(test_s))]
        unlabeled = [e.clip_id for p in PARTITIONS for e in members[p] if e.sentence_id is None]
        if unlabeled:
            problems.append(f"clips without sentence ids: {_preview(unlabeled)}")
        check("sentence-independent", problems)
    else:
        problems = []
        if spec.target_corpus in spec.source_corpora:
            problems.append(f"target corpus {spec.target_corpus} is also a source corpus")
        stray = [e.clip_id for e in members["test"] if e.corpus != spec.target_corpus]
        if stray:
            problems.append(f"test clips outside {spec.target_corpus}: {_preview(stray)}")
        stray = [e.clip_id for p in ("train", "validation") for e in members[p]
                 if e.corpus not in spec.source_corpora]
        if stray:
            problems.append(f"training clips outside {'+'.join(spec.source_corpora)}: "
                            f"{_preview(stray)}")
        check("corpus-independent", problems)
        shared = set(groups("train", "speaker_id")) & set(groups("validation", "speaker_id"))
        check("validation speakers unseen",
              [f"speaker {c}/{s} in both train and validation" for c, s in sorted(shared)])

    if strict and report.failures:
        err = SplitVerificationError(report.failures)
        err.report = report
        raise err
    return report


def format_distribution_table(reports: Mapping[str, SplitReport]) -> str:
    """Several split reports as one class-distribution table, one row per dataset."""
    order = ("train", "test", "validation")
    head = "| Dataset | " + " | ".join(
        f"{p.capitalize()} {v.value}" for p in order for v in Valence) + " |"
    rule = "|" + "---|" * (1 + 2 * len(order))
    rows = [f"| {name} | " + " | ".join(str(r.counts[p][v.value]) for p in order for v in Valence)
            + " |" for name, r in reports.items()]
    return "\n".join([head, rule, *rows])
