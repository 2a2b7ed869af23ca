"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``. The end-to-end training
criteria (3, 4 and 8) take several minutes on one core and carry the
``slow`` marker, so ``-m "not slow"`` skips them.
"""

import hashlib
import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest
from _util import bound_holds, make_manifest, write_config

from xlser.audio_io import Clip
from xlser.cli import main
from xlser.corpus import VALENCE_TABLE, Valence, corpus_stats, scan_corpus, to_valence
from xlser.errors import MappingError
from xlser.experiments import (DEFAULT_SEEDS, ASED_DIRECTIONS, Metrics, TrainConfig, Workspace,
                               default_combos, run_experiment1, run_experiment2, run_experiment3)
from xlser.features import FeatureCache, MfccConfig, extract_to_cache, mel_filterbank, mfcc
from xlser.models import build_model
from xlser.nn import AdamState, Model, ModelConfig, adam_step, dense, grad_check
from xlser.splits import MONO_RATIOS, sentence_split, speaker_split

GOLDEN = Path(__file__).parent / "golden" / "mfcc_golden.npz"
REAL_CORPORA_ENV = "XLSER_REAL_CORPORA"


@pytest.fixture
def verdict(capsys):
    """Print one criterion line to the terminal, then assert it."""

    def emit(number, ok, detail, started):
        with capsys.disabled():
            print(f"\nCriterion {number}: {'PASS' if ok else 'FAIL'} "
                  f"({detail}; {time.perf_counter() - started:.1f} s)")
        assert ok, f"criterion {number}: {detail}"

    return emit


@pytest.fixture(scope="session")
def full_workspace(full_corpus):
    """Every synthetic clip featurised once into a cache shared by the slow criteria."""
    from xlser.corpus import read_manifest
    manifests = {c: read_manifest(full_corpus / f"{c}.csv")
                 for c in ("ASED", "EMODB", "RAVDESS", "URDU")}
    cache = FeatureCache(full_corpus / "cache")
    ids = []
    for m in manifests.values():
        report = extract_to_cache([(e.clip_id, e.path) for e in m.entries], cache)
        assert not report.failures, report.failures
        ids += [e.clip_id for e in m.entries]
    return Workspace(manifests, cache.load_store(ids))


# -- 1. MFCC golden files --------------------------------------------------------------------


def test_criterion_1_mfcc_matches_reference(verdict):
    t0 = time.perf_counter()
    g = np.load(GOLDEN)
    names = sorted(k.split("/", 1)[1] for k in g.files if k.startswith("signal/"))
    fb_err = float(np.abs(mel_filterbank(MfccConfig()) - g["filterbank"]).max())
    worst = 0.0
    for name in names:
        y = g[f"signal/{name}"].astype(np.float64)
        out = mfcc(Clip(16000, 1, y)).values
        worst = max(worst, float(np.abs(out - g[f"mfcc/{name}"]).max()))
    elapsed = time.perf_counter() - t0
    ok = len(names) == 20 and worst < 1e-4 and fb_err < 1e-6 and elapsed < 10
    verdict(1, ok, f"{len(names)} signals, max mfcc err {worst:.2e}, filterbank err "
                   f"{fb_err:.2e}", t0)


# -- 2. gradient verification ---------------------------------------------------------------


def test_criterion_2_grad_check_all_models(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    errors = {}
    for name in ("VGGE", "AlexNetMini", "ResNetMini"):
        model = Model.build(build_model(name), seed=5).astype(np.float64)
        x = rng.normal(size=(2, *model.config.input_shape))
        errors[name] = grad_check(model, x, [0, 1], per_layer=20, seed=1)
    control = Model.build(ModelConfig("control", (6,), 2, (dense(5), dense(2))), 0,
                          np.float64)
    errors["Dense-only"] = grad_check(control, rng.normal(size=(2, 6)), [1, 0])
    elapsed = time.perf_counter() - t0
    ok = (max(v for k, v in errors.items() if k != "Dense-only") < 1e-3
          and errors["Dense-only"] < 1e-6 and elapsed < 120)
    verdict(2, ok, ", ".join(f"{k} {v:.1e}" for k, v in errors.items()), t0)


# -- 3. synthetic monolingual training ----------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_synthetic_monolingual(full_workspace, verdict):
    t0 = time.perf_counter()
    cfg = TrainConfig(epochs=30, seeds=DEFAULT_SEEDS)
    result = run_experiment1(full_workspace, ["ASED"], ["VGGE"], cfg)
    accs = [r["metrics"]["accuracy"] for r in result.runs]
    mean = statistics.fmean(accs)
    elapsed = time.perf_counter() - t0
    ok = len(accs) == 5 and mean >= 0.95 and elapsed < 600
    verdict(3, ok, f"VGGE on ASED, 30 epochs, seeds {list(DEFAULT_SEEDS)}: accuracies "
                   f"{[round(a, 3) for a in accs]}, mean {mean:.4f}", t0)


# -- 4. synthetic cross-lingual and multilingual harness ------------------------------------------


def _body_rows(markdown, title):
    block = markdown.split(f"**{title}**")[1].split("\n\n")[1]
    return block.splitlines()[2:]


@pytest.mark.slow
def test_criterion_4_cross_and_multilingual(full_workspace, verdict):
    t0 = time.perf_counter()
    models = ("AlexNetMini", "VGGE", "ResNetMini")
    cfg = TrainConfig(epochs=10, seeds=(11,), strict_determinism=True)
    cross = run_experiment2(full_workspace, ASED_DIRECTIONS, models, cfg)
    multi = run_experiment3(full_workspace, default_combos("ASED"), "ASED", models, cfg)
    cross_rows = _body_rows(cross.table.to_markdown(), "Results")
    multi_md = multi.table.to_markdown()
    layout_ok = (len(cross_rows) == 21
                 and sum(r.startswith("| Average") for r in cross_rows) == 3
                 and len(multi.table.rows) == 12
                 and len(_body_rows(multi_md, "Average accuracy")) == 4)
    accs = [r["metrics"]["accuracy"] for r in (*cross.runs, *multi.runs)]
    mean = statistics.fmean(accs)
    elapsed = time.perf_counter() - t0
    ok = layout_ok and len(accs) == 30 and mean >= 0.60 and elapsed < 1800
    verdict(4, ok, f"{len(cross.runs)} cross + {len(multi.runs)} multilingual runs, layout "
                   f"{'ok' if layout_ok else 'WRONG'}, mean accuracy {mean:.4f}", t0)


# -- 5. split protocol properties -----------------------------------------------------------------


def test_criterion_5_split_properties(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    failures = []
    for i in range(1000):
        sizes = [int(s) for s in rng.integers(1, 41, size=int(rng.integers(3, 31)))]
        m = make_manifest("ASED", sizes, n_sentences=int(rng.integers(2, 28)), rng=rng)
        seed = int(rng.integers(0, 2**31))
        spec = speaker_split(m, seed=seed)
        meta = m.by_id()
        spk = [{meta[c].speaker_id for c in spec.partition(p)}
               for p in ("train", "validation", "test")]
        if spk[0] & spk[1] or spk[0] & spk[2] or spk[1] & spk[2]:
            failures.append((i, "speaker overlap"))
        counts = [len(spec.train), len(spec.validation), len(spec.test)]
        if not bound_holds(counts, sizes, MONO_RATIOS):
            failures.append((i, f"ratio deviation {counts} for {sizes}"))
        if speaker_split(m, seed=seed) != spec:
            failures.append((i, "speaker split not reproducible"))
        if len(m.sentences) >= 2:
            sent = sentence_split(m, seed=seed)
            train_s = {meta[c].sentence_id for c in sent.train}
            if train_s & {meta[c].sentence_id for c in sent.test}:
                failures.append((i, "sentence overlap"))
            if sentence_split(m, seed=seed) != sent:
                failures.append((i, "sentence split not reproducible"))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    verdict(5, ok, f"1000 manifests, {len(failures)} violations {failures[:3]}", t0)


# -- 6. valence mapping totality ----------------------------------------------------------------

VALENCE_ORACLE = {
    "ASED": {"neutral": "+", "happy": "+", "fear": "-", "sadness": "-", "angry": "-"},
    "RAVDESS": {"neutral": "+", "calm": "+", "happy": "+", "surprise": "+",
                "fear": "-", "sadness": "-", "angry": "-", "disgust": "-"},
    "EMODB": {"neutral": "+", "happiness": "+", "anger": "-", "sadness": "-", "fear": "-",
              "disgust": "-", "boredom": "-"},
    "URDU": {"neutral": "+", "happy": "+", "angry": "-", "sad": "-"},
}
INVALID = [("ASED", "calm"), ("ASED", "surprise"), ("ASED", "disgust"), ("ASED", "boredom"),
           ("URDU", "fear"), ("URDU", "disgust"), ("URDU", "calm"), ("EMODB", "calm"),
           ("EMODB", "surprise"), ("RAVDESS", "boredom")]


def test_criterion_6_valence_mapping(verdict):
    t0 = time.perf_counter()
    pairs = [(c, e) for c, table in VALENCE_ORACLE.items() for e in table]
    sign = {"+": Valence.POSITIVE, "-": Valence.NEGATIVE}
    wrong = [(c, e) for c, e in pairs if to_valence(c, e) is not sign[VALENCE_ORACLE[c][e]]]
    table_pairs = {(c, e) for c, t in VALENCE_TABLE.items() if c in VALENCE_ORACLE for e in t}
    accepted = []
    for c, e in INVALID:
        try:
            to_valence(c, e)
            accepted.append((c, e))
        except MappingError:
            pass
    ok = len(pairs) == 24 and not wrong and table_pairs == set(pairs) and not accepted
    verdict(6, ok, f"{len(pairs)} pairs, {len(wrong)} wrong, "
                   f"{len(INVALID) - len(accepted)}/{len(INVALID)} invalid rejected", t0)


# -- 7. metrics oracle ---------------------------------------------------------------------------

# (labels, predictions, accuracy, macro-F1, confusion) worked out by hand
METRIC_CASES = [
    ([0, 1, 1, 0], [0, 1, 1, 0], 1.0, 1.0, [[2, 0], [0, 2]]),
    ([0, 0, 1, 1], [0, 1, 1, 1], 0.75, 11 / 15, [[1, 1], [0, 2]]),
    ([0, 0, 1, 1], [1, 1, 1, 1], 0.5, 1 / 3, [[0, 2], [0, 2]]),
    ([0, 0, 1, 1], [0, 0, 0, 0], 0.5, 1 / 3, [[2, 0], [2, 0]]),
    ([0, 1, 0, 1], [1, 0, 1, 0], 0.0, 0.0, [[0, 2], [2, 0]]),
    ([1, 1, 1], [1, 1, 1], 1.0, 0.5, [[0, 0], [0, 3]]),
    ([0, 0, 0, 1, 1], [0, 0, 1, 1, 0], 0.6, 7 / 12, [[2, 1], [1, 1]]),
    ([0] * 6 + [1] * 4, [0] * 5 + [1] * 4 + [0], 0.8, 19 / 24, [[5, 1], [1, 3]]),
    ([0, 1, 1, 1, 1, 1], [1] * 6, 5 / 6, 5 / 11, [[0, 1], [0, 5]]),
    ([0, 0, 0, 0, 1], [0, 0, 0, 1, 1], 0.8, 16 / 21, [[3, 1], [0, 1]]),
]


def test_criterion_7_metrics_oracle(verdict):
    t0 = time.perf_counter()
    bad = []
    for i, (y, p, acc, mf1, cm) in enumerate(METRIC_CASES):
        m = Metrics.from_predictions(y, p)
        if (abs(m.accuracy - acc) > 1e-9 or abs(m.macro_f1 - mf1) > 1e-9
                or [list(r) for r in m.confusion] != cm):
            bad.append((i, m))
    verdict(7, not bad, f"{len(METRIC_CASES)} vectors, {len(bad)} mismatches {bad[:2]}", t0)


# -- 8. determinism --------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_strict_rerun_is_byte_identical(full_workspace, full_corpus, tmp_path,
                                                     verdict):
    t0 = time.perf_counter()
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        cfg = write_config(tmp_path / f"{run}.json", full_corpus, ["ASED", "URDU"], out,
                           train={"epochs": 2, "seeds": [11, 22]}, models=["VGGE"])
        assert main(["expt", "mono", "--config", str(cfg), "--strict"]) == 0
        digests.append(hashlib.sha256((out / "results_mono.json").read_bytes()).hexdigest())
    verdict(8, digests[0] == digests[1], f"sha256 {digests[0][:16]} vs {digests[1][:16]}", t0)


# -- 9. real corpora (conditional) ----------------------------------------------------------------

REAL_COUNTS = {"RAVDESS": 1440, "EMODB": 535, "URDU": 400}
REAL_DURATIONS = {"URDU": (2.5, 0.5), "RAVDESS": (3.0, 0.0)}
ASED_REFERENCE = {"train": (693, 804), "validation": (99, 115), "test": (199, 230)}


def test_criterion_9_real_corpora(capsys, verdict):
    t0 = time.perf_counter()
    root = os.environ.get(REAL_CORPORA_ENV)
    if not root:
        with capsys.disabled():
            print(f"\nCriterion 9: SKIP (set {REAL_CORPORA_ENV} to a directory holding "
                  "ASED, RAVDESS, EMODB and URDU)")
        pytest.skip(f"{REAL_CORPORA_ENV} not set")
    root = Path(root)
    manifests = {c: scan_corpus(root / c, c) for c in ("ASED", "RAVDESS", "EMODB", "URDU")}
    problems = [f"{c}: {len(manifests[c])} clips, expected {n}"
                for c, n in REAL_COUNTS.items() if len(manifests[c]) != n]
    for c, (mean, std) in REAL_DURATIONS.items():
        s = corpus_stats(manifests[c])
        if abs(s.mean - mean) > 1e-9 or abs(s.std - std) > 1e-9:
            problems.append(f"{c}: duration mean/std {s.mean:.3f}/{s.std:.3f}")
    ased = manifests["ASED"]
    from xlser.splits import verify_split
    report = verify_split(speaker_split(ased, seed=0), ased)
    tolerance = 2 * len(ased) / len(ased.speakers)
    for part, (pos, neg) in ASED_REFERENCE.items():
        got = report.counts[part]
        if abs(got["Positive"] - pos) > tolerance or abs(got["Negative"] - neg) > tolerance:
            problems.append(f"ASED {part}: {got} vs {pos}/{neg} (tolerance {tolerance:.0f})")
    verdict(9, not problems, f"ASED total {len(ased)}; "
                             f"{'; '.join(problems) if problems else 'all checks met'}", t0)


# -- 10. Adam unit suite ------------------------------------------------------------------------


def test_criterion_10_adam(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    params = {"W": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    p, state = params, AdamState.create(params)
    fixed = True
    for _ in range(5):
        p, state = adam_step(p, zeros, state)
        fixed &= all(np.array_equal(p[k], params[k]) for k in params)
    grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
    stepped, _ = adam_step(params, grads, AdamState.create(params, lr=1e-3))
    first = max(float(np.abs(np.abs(stepped[k] - params[k]) - 1e-3).max()) for k in params)
    p, state = params, AdamState.create(params, lr=0.0)
    for _ in range(3):
        p, state = adam_step(p, grads, state)
    noop = all(np.array_equal(p[k], params[k]) for k in params)
    ok = fixed and first < 1e-6 and noop
    verdict(10, ok, f"fixed point {'exact' if fixed else 'MOVED'}, first-step deviation "
                    f"{first:.1e}, lr=0 {'exact' if noop else 'MOVED'}", t0)
