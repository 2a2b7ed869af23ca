"""Training, evaluation and the three experiment protocols.

Each run is one (model, split, seed) triple. Runs are independent, so they
can fan out over worker processes; results are merged by key and sorted,
which keeps the emitted JSON independent of completion order.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import io
import itertools
import json
import logging
import math
import statistics
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .corpus import CorpusManifest, canonical_corpus
from .errors import ConfigError, LabelError, ProtocolError
from .features import FeatureStats, FeatureStore, standardize_array
from .models import build_model
from .nn import AdamState, Model, ModelConfig, adam_step, backward, forward, loss_softmax_ce
from .nn import predict_logits
from .splits import (SplitSpec, cross_lingual_split, multilingual_split, sentence_split,
                     speaker_split)

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (11, 22, 33, 44, 55)
DEFAULT_MODELS = ("AlexNetMini", "VGGE", "ResNetMini")
DISPLAY = {"EMODB": "EMO-DB"}


def display(corpus: str) -> str:
    return DISPLAY.get(corpus, corpus)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    strict_determinism: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be a non-empty list of distinct integers, got {self.seeds}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


# -- metrics ------------------------------------------------------------------


def confusion_matrix(y_true, y_pred, n_classes: int = 2) -> np.ndarray:
    """Counts with true classes on rows and predicted classes on columns."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise LabelError(f"label and prediction vectors differ in shape: {t.shape} vs {p.shape}")
    for name, v in (("labels", t), ("predictions", p)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise LabelError(f"{name} must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


@dataclass(frozen=True)
class Metrics:
    """Accuracy, per-class precision/recall/F1 and macro-F1 from one confusion matrix.

    Undefined ratios (no predictions or no members of a class) count as 0.
    """

    accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_f1: float
    confusion: tuple[tuple[int, ...], ...]

    @classmethod
    def from_confusion(cls, cm) -> "Metrics":
        cm = np.asarray(cm, dtype=np.int64)
        total = int(cm.sum())
        if total == 0:
            raise ProtocolError("cannot score an empty test set")
        tp = np.diag(cm)
        precision = tuple(_ratio(tp[k], cm[:, k].sum()) for k in range(len(cm)))
        recall = tuple(_ratio(tp[k], cm[k, :].sum()) for k in range(len(cm)))
        f1 = tuple(_ratio(2 * p * r, p + r) for p, r in zip(precision, recall))
        return cls(accuracy=_ratio(tp.sum(), total), precision=precision, recall=recall,
                   f1=f1, macro_f1=math.fsum(f1) / len(f1),
                   confusion=tuple(tuple(int(x) for x in row) for row in cm))

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int = 2) -> "Metrics":
        return cls.from_confusion(confusion_matrix(y_true, y_pred, n_classes))

    @property
    def n(self) -> int:
        return sum(map(sum, self.confusion))

    def consistent(self) -> bool:
        """Whether the scalar scores agree with the confusion matrix."""
        again = Metrics.from_confusion(self.confusion)
        return all(math.isclose(a, b, abs_tol=1e-12) for a, b in
                   [(again.accuracy, self.accuracy), (again.macro_f1, self.macro_f1),
                    *zip(again.f1, self.f1)])

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": list(self.precision),
                "recall": list(self.recall), "f1": list(self.f1), "macro_f1": self.macro_f1,
                "confusion": [list(r) for r in self.confusion]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Metrics":
        return cls(d["accuracy"], tuple(d["precision"]), tuple(d["recall"]), tuple(d["f1"]),
                   d["macro_f1"], tuple(tuple(r) for r in d["confusion"]))


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n: int

    @property
    def single(self) -> bool:
        return self.n == 1

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n, "single_run": self.single}


def aggregate(values: Iterable[float]) -> Aggregate:
    """Mean and sample standard deviation; a single value gets std 0."""
    xs = [float(v) for v in values]
    if not xs:
        raise ProtocolError("cannot aggregate an empty list of runs")
    std = statistics.stdev(xs) if len(xs) > 1 else 0.0
    return Aggregate(statistics.fmean(xs), std, len(xs))


def aggregate_runs(metrics: Sequence[Metrics]) -> dict[str, Aggregate]:
    if not metrics:
        raise ProtocolError("cannot aggregate an empty list of runs")
    return {"accuracy": aggregate(m.accuracy for m in metrics),
            "macro_f1": aggregate(m.macro_f1 for m in metrics)}


# -- training -----------------------------------------------------------------


def _rng(seed: int, salt: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(salt.encode())]))


def label_lookup(manifests: Iterable[CorpusManifest]) -> dict[str, int]:
    return {e.clip_id: e.valence.index for m in manifests for e in m.entries}


@dataclass
class TrainResult:
    model: Model
    stats: FeatureStats
    history: list = field(default_factory=list)
    steps: int = 0


def _limits(strict: bool):
    return threadpool_limits(limits=1) if strict else contextlib.nullcontext()


def _labels(ids: Sequence[str], labels: Mapping[str, int]) -> np.ndarray:
    missing = [c for c in ids if c not in labels]
    if missing:
        raise LabelError(f"no valence label for {len(missing)} clip(s), e.g. {missing[0]}")
    return np.array([labels[c] for c in ids], dtype=np.int64)


def _accuracy(model: Model, x: np.ndarray, y: np.ndarray) -> float:
    pred = predict_logits(model, x).argmax(axis=1)
    return float(np.mean(pred == y))


def train(model_config: ModelConfig, split: SplitSpec, features: FeatureStore,
          config: TrainConfig, seed: int, labels: Mapping[str, int],
          dtype=np.float32) -> TrainResult:
    """Fixed-budget Adam training on the split's train partition.

    Feature access is scoped to train and validation clips. Standardisation
    statistics come from the training clips alone. Runs exactly
    ``epochs * ceil(n_train / batch_size)`` optimiser steps and returns the
    final-epoch weights; validation accuracy is recorded per epoch for
    diagnostics only.
    """
    if not split.train:
        raise ProtocolError(f"{split.name}: empty training partition")
    store = features.scoped(split.train + split.validation)
    store.check(split.train + split.validation)
    x = store.stack(split.train)
    stats = FeatureStats.from_arrays(x)
    x = standardize_array(x, stats).astype(dtype)
    y = _labels(split.train, labels)
    if split.validation:
        xv = standardize_array(store.stack(split.validation), stats).astype(dtype)
        yv = _labels(split.validation, labels)

    with _limits(config.strict_determinism):
        model = Model.build(model_config, seed, dtype)
        state = AdamState.create(model.params, config.learning_rate)
        order_rng = _rng(seed, "batch-order")
        n, bs = len(y), config.batch_size
        history, step = [], 0
        for epoch in range(1, config.epochs + 1):
            perm = order_rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = perm[start:start + bs]
                logits, cache = forward(model, x[idx], "train", rng_seed=seed * 1_000_003 + step)
                loss, dlogits = loss_softmax_ce(logits, y[idx])
                grads = backward(model, cache, dlogits)
                params, state = adam_step(model.params, grads, state)
                model.set_params(params)
                model.commit(cache)
                total += loss * len(idx)
                step += 1
            record = {"epoch": epoch, "loss": total / n}
            if split.validation:
                record["val_accuracy"] = _accuracy(model, xv, yv)
            history.append(record)
            log.debug("%s seed %d epoch %d: %s", split.name, seed, epoch, record)
    return TrainResult(model, stats, history, step)


def evaluate(result: TrainResult, test_ids: Sequence[str], features: FeatureStore,
             labels: Mapping[str, int], strict: bool = False) -> Metrics:
    """Argmax predictions on the test clips, scored against their valence labels."""
    if not len(test_ids):
        raise ProtocolError("cannot evaluate on an empty test set")
    store = features.scoped(test_ids)
    x = standardize_array(store.stack(test_ids), result.stats).astype(result.model.dtype)
    y = _labels(test_ids, labels)
    with _limits(strict):
        pred = predict_logits(result.model, x).argmax(axis=1)
    return Metrics.from_predictions(y, pred, result.model.config.n_classes)


# -- runs ---------------------------------------------------------------------


@dataclass(frozen=True)
class RunTask:
    model: str
    split: SplitSpec
    seed: int
    options: tuple = ()  # sorted (key, value) builder overrides

    @property
    def key(self) -> tuple:
        return (self.model, "+".join(self.split.source_corpora), self.split.target_corpus,
                self.seed)


def split_digest(split: SplitSpec) -> str:
    return hashlib.sha256(split.to_json().encode()).hexdigest()[:16]


def run_one(task: RunTask, features: FeatureStore, labels: Mapping[str, int],
            config: TrainConfig, input_shape: tuple) -> dict:
    cfg = build_model(task.model, input_shape, **dict(task.options))
    result = train(cfg, task.split, features, config, task.seed, labels)
    metrics = evaluate(result, task.split.test, features, labels, config.strict_determinism)
    if not metrics.consistent():
        raise AssertionError(f"{task.key}: metrics disagree with their confusion matrix")
    return {"model": task.model, "train": "+".join(task.split.source_corpora),
            "test": task.split.target_corpus, "seed": task.seed, "scenario": task.split.scenario,
            "split": task.split.name, "split_sha256": split_digest(task.split),
            "sizes": {"train": len(task.split.train), "validation": len(task.split.validation),
                      "test": len(task.split.test)},
            "steps": result.steps, "history": result.history, "metrics": metrics.to_dict()}


_WORKER: dict = {}


def _worker_init(features, labels, config, input_shape):
    _WORKER.update(features=features, labels=labels, config=config, input_shape=input_shape)


def _worker_run(task: RunTask) -> dict:
    return run_one(task, _WORKER["features"], _WORKER["labels"], _WORKER["config"],
                   _WORKER["input_shape"])


def execute(tasks: Sequence[RunTask], features: FeatureStore, labels: Mapping[str, int],
            config: TrainConfig, input_shape: tuple, jobs: int = 1,
            progress: Callable[[dict], None] | None = None) -> list[dict]:
    """Run every task, in-process or over ``jobs`` worker processes, sorted by key."""
    out = []
    if jobs <= 1:
        for t in tasks:
            out.append(run_one(t, features, labels, config, input_shape))
            if progress:
                progress(out[-1])
    else:
        with ProcessPoolExecutor(jobs, initializer=_worker_init,
                                 initargs=(features, labels, config, input_shape)) as pool:
            for rec in pool.map(_worker_run, tasks):
                out.append(rec)
                if progress:
                    progress(rec)
    return sorted(out, key=lambda r: (r["model"], r["train"], r["test"] or "", r["seed"]))


# -- tables -------------------------------------------------------------------


@dataclass(frozen=True)
class RunRow:
    model: str
    train: str
    test: str
    accuracy: Aggregate
    macro_f1: Aggregate

    def to_dict(self) -> dict:
        return {"model": self.model, "train": self.train, "test": self.test,
                "accuracy": self.accuracy.to_dict(), "macro_f1": self.macro_f1.to_dict()}


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def _train_label(train: str) -> str:
    return "+".join(display(c) for c in train.split("+"))


@dataclass
class RunTable:
    """Aggregated rows keyed by (model, training corpora, test corpus).

    ``kind`` selects the layout: ``mono``/``sent`` pivot models against
    corpora; ``cross``/``multi`` list one row per direction with per-model
    averages, and ``multi`` adds a per-combination cross-model table.
    """

    kind: str
    rows: list[RunRow]
    models: tuple[str, ...]
    columns: tuple[str, ...]  # corpora (mono/sent) or train labels in order (cross/multi)

    def row(self, model: str, train: str, test: str) -> RunRow:
        for r in self.rows:
            if (r.model, r.train, r.test) == (model, train, test):
                return r
        raise KeyError((model, train, test))

    def model_average(self, model: str, stat: str = "accuracy") -> float:
        return statistics.fmean(getattr(r, stat).mean for r in self.rows if r.model == model)

    def column_average(self, column: str, stat: str = "accuracy") -> float:
        key = (lambda r: r.test) if self.kind in ("mono", "sent") else (lambda r: r.train)
        return statistics.fmean(getattr(r, stat).mean for r in self.rows if key(r) == column)

    def _cell(self, agg: Aggregate) -> str:
        return _pct(agg.mean) + ("*" if agg.single else "")

    def layouts(self) -> list[tuple[str, list[str], list[list[str]]]]:
        """(title, header, rows) for every table of this kind."""
        if self.kind in ("mono", "sent"):
            out = []
            for stat, title in (("accuracy", "Accuracy"), ("macro_f1", "F1-score")):
                header = ["Model", *(display(c) for c in self.columns)]
                body = [[m, *(self._cell(getattr(self.row(m, c, c), stat)) for c in self.columns)]
                        for m in self.models]
                body.append(["Average", *(_pct(self.column_average(c, stat)) for c in self.columns)])
                out.append((title, header, body))
            return out
        header = ["Model", "Training", "Testing", "Accuracy", "F1-score"]
        body = []
        for m in self.models:
            for i, r in enumerate(r for r in self.rows if r.model == m):
                body.append([m if i == 0 else "", _train_label(r.train), display(r.test),
                             self._cell(r.accuracy), self._cell(r.macro_f1)])
            body.append(["Average", "", "", _pct(self.model_average(m)),
                         _pct(self.model_average(m, "macro_f1"))])
        out = [("Results", header, body)]
        if self.kind == "multi":
            test = self.rows[0].test if self.rows else ""
            for stat, title in (("accuracy", "Average accuracy"), ("macro_f1", "Average F1-score")):
                header = ["Training", "Testing", *self.models, title]
                rows = []
                for combo in self.columns:
                    vals = [getattr(self.row(m, combo, test), stat).mean for m in self.models]
                    rows.append([_train_label(combo), display(test), *map(_pct, vals),
                                 _pct(statistics.fmean(vals))])
                out.append((title, header, rows))
        return out

    def to_markdown(self) -> str:
        parts = []
        for title, header, body in self.layouts():
            lines = [f"**{title}**", "", "| " + " | ".join(header) + " |",
                     "|" + "---|" * len(header)]
            lines += ["| " + " | ".join(r) + " |" for r in body]
            parts.append("\n".join(lines))
        if any(r.accuracy.single for r in self.rows):
            parts.append("\\* single run: standard deviation undefined, reported as 0")
        return "\n\n".join(parts) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "train", "test", "n_runs", "accuracy_mean", "accuracy_std",
                    "macro_f1_mean", "macro_f1_std"])
        for r in self.rows:
            w.writerow([r.model, _train_label(r.train), display(r.test), r.accuracy.n,
                        r.accuracy.mean, r.accuracy.std, r.macro_f1.mean, r.macro_f1.std])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "models": list(self.models), "columns": list(self.columns),
                "rows": [r.to_dict() for r in self.rows]}


def build_table(kind: str, records: Sequence[dict], models: Sequence[str],
                columns: Sequence[str], n_seeds: int,
                directions: Sequence[tuple[str, str]] = ()) -> RunTable:
    """Aggregate run records into rows; ``directions`` fixes the row order for cross/multi."""
    groups: dict[tuple, list[Metrics]] = {}
    for rec in records:
        groups.setdefault((rec["model"], rec["train"], rec["test"]), []).append(
            Metrics.from_dict(rec["metrics"]))
    rows = []
    for (model, tr, te), ms in groups.items():
        if len(ms) != n_seeds:
            raise AssertionError(f"{model} {tr}->{te}: {len(ms)} runs, expected {n_seeds}")
        agg = aggregate_runs(ms)
        rows.append(RunRow(model, tr, te, agg["accuracy"], agg["macro_f1"]))
    order_m = {m: i for i, m in enumerate(models)}
    if kind in ("mono", "sent"):
        order_c = {c: i for i, c in enumerate(columns)}
        rows.sort(key=lambda r: (order_m[r.model], order_c[r.test]))
    else:
        order_d = {tuple(d): i for i, d in enumerate(directions)}
        rows.sort(key=lambda r: (order_m[r.model], order_d.get((r.train, r.test), len(order_d)),
                                 r.train, r.test))
    return RunTable(kind, rows, tuple(models), tuple(columns))


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentResult:
    kind: str
    table: RunTable
    runs: list[dict]
    splits: list[SplitSpec]
    settings: dict

    def to_json(self) -> str:
        doc = {"experiment": self.kind, "settings": self.settings,
               "table": self.table.to_dict(), "runs": self.runs}
        return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class Workspace:
    """Manifests and a feature store covering every clip an experiment may touch."""

    manifests: Mapping[str, CorpusManifest]
    features: FeatureStore

    def manifest(self, corpus: str) -> CorpusManifest:
        key = canonical_corpus(corpus)
        if key not in self.manifests:
            raise ProtocolError(f"corpus {key} is not loaded; available: "
                                f"{', '.join(sorted(self.manifests)) or 'none'}")
        return self.manifests[key]

    @property
    def labels(self) -> dict[str, int]:
        return label_lookup(self.manifests.values())

    @property
    def input_shape(self) -> tuple:
        clip = next(iter(next(iter(self.manifests.values())).entries)).clip_id
        n_mfcc, n_frames = self.features.get(clip).shape
        return (n_mfcc, n_frames, 1)


def _settings(kind: str, config: TrainConfig, models, extra: dict) -> dict:
    return {"kind": kind, "train_config": config.to_dict(), "models": list(models), **extra}


def _options(model_options: Mapping | None, model: str) -> tuple:
    opts = dict((model_options or {}).get(model, {}))
    return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in opts.items()))


def _run(kind, ws: Workspace, splits: list[SplitSpec], models, config: TrainConfig,
         columns, jobs, progress, extra, directions=(), model_options=None) -> ExperimentResult:
    for m in models:
        build_model(m, ws.input_shape, **dict(_options(model_options, m)))  # fail fast
    by_seed = {s.seed for s in splits}
    tasks = [RunTask(m, s, s.seed, _options(model_options, m)) for m in models for s in splits]
    records = execute(tasks, ws.features, ws.labels, config, ws.input_shape, jobs, progress)
    table = build_table(kind, records, models, columns, len(by_seed), directions)
    extra = {**extra, "model_options": {m: dict(_options(model_options, m)) for m in models}}
    return ExperimentResult(kind, table, records, splits,
                            _settings(kind, config, models, extra))


def run_experiment1(ws: Workspace, corpora: Sequence[str], models: Sequence[str] = DEFAULT_MODELS,
                    config: TrainConfig = TrainConfig(), sentence: bool = False, jobs: int = 1,
                    progress=None, model_options: Mapping | None = None) -> ExperimentResult:
    """Monolingual runs: speaker-independent splits, or sentence-independent with ``sentence``."""
    corpora = [canonical_corpus(c) for c in corpora]
    if sentence and "URDU" in corpora:
        raise ProtocolError("URDU has no sentence ids; it cannot be used for sentence-independent runs")
    splits = []
    for c in corpora:
        m = ws.manifest(c)
        for seed in config.seeds:
            splits.append(sentence_split(m, seed=seed) if sentence else speaker_split(m, seed=seed))
    kind = "sent" if sentence else "mono"
    return _run(kind, ws, splits, models, config, corpora, jobs, progress, {"corpora": corpora},
                model_options=model_options)


ASED_DIRECTIONS = (("ASED", "EMODB"), ("EMODB", "ASED"), ("ASED", "RAVDESS"),
                    ("RAVDESS", "ASED"), ("ASED", "URDU"), ("URDU", "ASED"))


def run_experiment2(ws: Workspace, pairs: Sequence[tuple[str, str]] = ASED_DIRECTIONS,
                    models: Sequence[str] = DEFAULT_MODELS, config: TrainConfig = TrainConfig(),
                    jobs: int = 1, progress=None,
                    model_options: Mapping | None = None) -> ExperimentResult:
    """Cross-lingual runs, one per requested direction; both directions must be present."""
    pairs = [(canonical_corpus(a), canonical_corpus(b)) for a, b in pairs]
    for a, b in pairs:
        if a == b:
            raise ProtocolError(f"cross-lingual direction {a}->{b} trains and tests on one corpus")
        if (b, a) not in pairs:
            raise ProtocolError(f"direction {a}->{b} requested without its reverse {b}->{a}")
    splits = [cross_lingual_split(ws.manifest(a), ws.manifest(b), seed)
              for a, b in pairs for seed in config.seeds]
    columns = [a for a, _ in pairs]
    return _run("cross", ws, splits, models, config, columns, jobs, progress,
                {"pairs": [list(p) for p in pairs]}, directions=pairs,
                model_options=model_options)


def default_combos(target: str = "ASED", pool: Sequence[str] = ("EMODB", "RAVDESS", "URDU")):
    others = [c for c in pool if c != canonical_corpus(target)]
    return [*itertools.combinations(others, 2), tuple(others)]


def run_experiment3(ws: Workspace, train_combos: Sequence[Sequence[str]] | None = None,
                    test_corpus: str = "ASED", models: Sequence[str] = DEFAULT_MODELS,
                    config: TrainConfig = TrainConfig(), jobs: int = 1,
                    progress=None, model_options: Mapping | None = None) -> ExperimentResult:
    """Multilingual runs: each combination of training corpora against one target."""
    target = canonical_corpus(test_corpus)
    combos = [tuple(canonical_corpus(c) for c in combo)
              for combo in (train_combos or default_combos(target))]
    for combo in combos:
        if target in combo:
            raise ProtocolError(f"target corpus {target} is inside training combination "
                                f"{'+'.join(combo)}")
    splits = [multilingual_split([ws.manifest(c) for c in combo], ws.manifest(target), seed)
              for combo in combos for seed in config.seeds]
    columns = ["+".join(c) for c in combos]
    return _run("multi", ws, splits, models, config, columns, jobs, progress,
                {"combos": [list(c) for c in combos], "target": target},
                directions=[(c, target) for c in columns], model_options=model_options)


def table_from_json(text: str) -> RunTable:
    """Rebuild a table from a results JSON document."""
    doc = json.loads(text)
    t = doc["table"]
    rows = [RunRow(r["model"], r["train"], r["test"],
                   *(Aggregate(r[k]["mean"], r[k]["std"], r[k]["n"]) for k in ("accuracy", "macro_f1")))
            for r in t["rows"]]
    return RunTable(t["kind"], rows, tuple(t["models"]), tuple(t["columns"]))


__all__ = [
    "DEFAULT_MODELS", "DEFAULT_SEEDS", "ASED_DIRECTIONS", "Aggregate", "ExperimentResult",
    "Metrics", "RunRow", "RunTable", "RunTask", "TrainConfig", "TrainResult", "Workspace",
    "aggregate", "aggregate_runs", "build_table", "confusion_matrix", "default_combos", "evaluate",
    "execute", "label_lookup", "run_experiment1", "run_experiment2", "run_experiment3", "run_one",
    "table_from_json", "train",
]
