"""Command-line entry point.

Exit status: 0 on success, 2 for bad input or configuration, 1 for
anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import (CorpusManifest, canonical_corpus, corpus_stats, format_stats_table,
                     read_manifest, scan_corpus, write_manifest)
from .errors import ConfigError, UserError, XlserError
from .experiments import (DEFAULT_MODELS, ASED_DIRECTIONS, TrainConfig, TrainResult, Workspace,
                          default_combos, evaluate, run_experiment1,
                          run_experiment2, run_experiment3, table_from_json, train)
from .features import FeatureCache, FeatureStats, MfccConfig, extract_to_cache
from .models import build_model
from .nn import load_checkpoint, save_checkpoint
from .splits import (SplitSpec, cross_lingual_split, multilingual_split, sentence_split,
                     speaker_split, verify_split)
from .synth import SynthSpec, synth_corpus

log = logging.getLogger("xlser")

EXPERIMENT_KEYS = {"mono": {"corpora"}, "sent": {"corpora"}, "cross": {"pairs"},
                   "multi": {"combos", "target"}}
CONFIG_KEYS = {"corpora", "cache_dir", "mfcc", "train", "models", "model_options",
               "experiments", "output_dir"}


# -- configuration ------------------------------------------------------------


@dataclass
class ExperimentConfig:
    corpora: dict[str, Path]
    output_dir: Path
    cache_dir: Path
    mfcc: MfccConfig = MfccConfig()
    train: TrainConfig = TrainConfig()
    models: tuple[str, ...] = DEFAULT_MODELS
    experiments: dict = field(default_factory=dict)
    model_options: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc, path.parent)

    @classmethod
    def from_dict(cls, doc: Mapping, base: Path = Path(".")) -> "ExperimentConfig":
        if not isinstance(doc, Mapping):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        for key in ("corpora", "output_dir"):
            if key not in doc:
                raise ConfigError(f"config is missing required key {key!r}")

        def resolve(p) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        corpora = {}
        for name, p in doc["corpora"].items():
            corpus = canonical_corpus(name)
            target = resolve(p)
            if not target.exists():
                raise ConfigError(f"corpora.{name}: path does not exist: {target}")
            corpora[corpus] = target
        output_dir = resolve(doc["output_dir"])
        cache_dir = resolve(doc.get("cache_dir", output_dir / "cache"))
        try:
            mfcc = MfccConfig.from_dict(doc.get("mfcc", {}))
        except ConfigError as exc:
            raise ConfigError(f"mfcc: {exc}") from None
        train_cfg = TrainConfig.from_dict(doc.get("train", {}))
        models = tuple(doc.get("models", DEFAULT_MODELS))
        model_options = dict(doc.get("model_options", {}))
        for m in models:
            try:
                build_model(m, **model_options.get(m, {}))
            except TypeError as exc:
                raise ConfigError(f"model_options.{m}: {exc}") from None
        stray = set(model_options) - set(models)
        if stray:
            raise ConfigError(f"model_options for unused model(s): {', '.join(sorted(stray))}")
        experiments = dict(doc.get("experiments", {}))
        for kind, sub in experiments.items():
            if kind not in EXPERIMENT_KEYS:
                raise ConfigError(f"unknown experiment {kind!r}; choose from "
                                  f"{', '.join(EXPERIMENT_KEYS)}")
            bad = set(sub) - EXPERIMENT_KEYS[kind]
            if bad:
                raise ConfigError(f"experiments.{kind}: unknown key(s) {', '.join(sorted(bad))}")
        return cls(corpora, output_dir, cache_dir, mfcc, train_cfg, models, experiments,
                   model_options)


def load_corpus(corpus: str, path: str | os.PathLike) -> CorpusManifest:
    """A manifest from a corpus directory (scanned) or a manifest CSV."""
    path = Path(path)
    if path.is_dir():
        return scan_corpus(path, corpus)
    if not path.is_file():
        raise UserError(f"not found: {path}")
    return read_manifest(path, corpus)


def prepare_workspace(cfg: ExperimentConfig, corpora) -> Workspace:
    """Load the named corpora and make sure every clip has cached features."""
    manifests = {}
    for c in corpora:
        c = canonical_corpus(c)
        if c not in cfg.corpora:
            raise ConfigError(f"corpus {c} is used by the experiment but not listed under 'corpora'")
        manifests[c] = load_corpus(c, cfg.corpora[c])
    cache = FeatureCache(cfg.cache_dir, cfg.mfcc)
    ids = []
    for m in manifests.values():
        report = extract_to_cache([(e.clip_id, e.path) for e in m.entries], cache)
        _fail_on_extract(report)
        log.info("%s: %d computed, %d cached", m.corpus, len(report.computed), len(report.cached))
        ids += [e.clip_id for e in m.entries]
    return Workspace(manifests, cache.load_store(ids))


def _fail_on_extract(report) -> None:
    if report.failures:
        lines = "\n".join(f"  {cid}: {msg}" for cid, msg in report.failures)
        raise UserError(f"{len(report.failures)} clip(s) could not be decoded:\n{lines}")


def _train_config(cfg: TrainConfig, args) -> TrainConfig:
    return replace(cfg, strict_determinism=True) if args.strict else cfg


# -- commands -----------------------------------------------------------------


def cmd_scan(args) -> int:
    manifest = scan_corpus(args.root, args.corpus)
    out = Path(args.out or f"{manifest.corpus}.csv")
    write_manifest(manifest, out)
    print(f"{len(manifest)} clips, {len(manifest.speakers)} speakers "
          f"({manifest.counts['Positive']} positive, {manifest.counts['Negative']} negative)")
    if len(manifest):
        print(format_stats_table({manifest.corpus: corpus_stats(manifest)}))
    print(f"manifest written to {out}")
    return 0


def cmd_features(args) -> int:
    mfcc = MfccConfig()
    if args.mfcc_config:
        mfcc = MfccConfig.from_dict(json.loads(Path(args.mfcc_config).read_text()))
    cache = FeatureCache(args.cache, mfcc)
    items = [(e.clip_id, e.path) for path in args.manifest for e in read_manifest(path).entries]
    total = extract_to_cache(items, cache, args.force)
    print(f"{len(total.computed)} computed, {len(total.cached)} cached, "
          f"{len(total.failures)} failed (config {cache.fingerprint})")
    for cid, msg in total.failures:
        print(f"  {cid}: {msg}", file=sys.stderr)
    return 2 if total.failures else 0


def cmd_synth(args) -> int:
    spec = SynthSpec()
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except FileNotFoundError:
            raise ConfigError(f"spec file not found: {args.spec}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: invalid JSON ({exc})") from None
        spec = SynthSpec.from_dict(doc)
    manifests = synth_corpus(spec, args.seed, args.out)
    for c, m in manifests.items():
        print(f"{c}: {len(m)} clips, {len(m.speakers)} speakers -> {Path(args.out) / c}.csv")
    return 0


def _manifests(paths) -> dict[str, CorpusManifest]:
    out = {}
    for p in paths:
        m = read_manifest(p)
        out[m.corpus] = m
    return out


def cmd_split(args) -> int:
    ms = _manifests(args.manifest)
    if args.scenario in ("mono", "sent"):
        if len(ms) != 1:
            raise UserError(f"{args.scenario} split takes exactly one manifest")
        (m,) = ms.values()
        spec = speaker_split(m, seed=args.seed) if args.scenario == "mono" else \
            sentence_split(m, seed=args.seed)
    else:
        if not args.test:
            raise UserError(f"{args.scenario} split needs --test CORPUS")
        target = canonical_corpus(args.test)
        if target not in ms:
            raise UserError(f"no manifest given for test corpus {target}")
        sources = [m for c, m in ms.items() if c != target]
        if args.scenario == "cross":
            if len(sources) != 1:
                raise UserError("cross split takes one training and one test manifest")
            spec = cross_lingual_split(sources[0], ms[target], args.seed)
        else:
            spec = multilingual_split(sources, ms[target], args.seed)
    report = verify_split(spec, ms)
    out = Path(args.out or f"{spec.name}.json")
    spec.save(out)
    print(report)
    print(f"split written to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    spec = SplitSpec.load(args.split)
    corpora = sorted({*spec.source_corpora, spec.target_corpus} - {None})
    ws = prepare_workspace(cfg, corpora)
    model_cfg = build_model(args.model, ws.input_shape, **cfg.model_options.get(args.model, {}))
    tcfg = _train_config(cfg.train, args)
    result = train(model_cfg, spec, ws.features, tcfg, args.seed, ws.labels)
    save_checkpoint(result.model, args.out, {
        "stats": json.loads(result.stats.to_json()), "history": result.history,
        "split": spec.name, "mfcc_fingerprint": cfg.mfcc.fingerprint(),
        "train_config": tcfg.to_dict()})
    last = result.history[-1]
    print(f"{result.steps} steps; final loss {last['loss']:.4f}"
          + (f", validation accuracy {last['val_accuracy']:.4f}" if "val_accuracy" in last else ""))
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    spec = SplitSpec.load(args.split)
    model, extra = load_checkpoint(args.checkpoint)
    if extra.get("mfcc_fingerprint") not in (None, cfg.mfcc.fingerprint()):
        raise ConfigError("checkpoint was trained on features from a different MFCC config")
    ws = prepare_workspace(cfg, [spec.target_corpus])
    stats = FeatureStats(np.asarray(extra["stats"]["mean"]), np.asarray(extra["stats"]["std"]))
    metrics = evaluate(TrainResult(model, stats), spec.test, ws.features, ws.labels,
                       cfg.train.strict_determinism or args.strict)
    print(json.dumps(metrics.to_dict(), indent=1))
    return 0


def cmd_expt(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    sub = cfg.experiments.get(args.kind, {})
    tcfg = _train_config(cfg.train, args)
    opts = cfg.model_options
    progress = lambda r: log.info("%s %s->%s seed %d: accuracy %.4f", r["model"], r["train"],
                                  r["test"], r["seed"], r["metrics"]["accuracy"])
    if args.kind in ("mono", "sent"):
        corpora = sub.get("corpora") or sorted(cfg.corpora)
        if args.kind == "sent":
            corpora = sub.get("corpora") or [c for c in sorted(cfg.corpora) if c != "URDU"]
        ws = prepare_workspace(cfg, corpora)
        result = run_experiment1(ws, corpora, cfg.models, tcfg, sentence=args.kind == "sent",
                                 jobs=args.jobs, progress=progress, model_options=opts)
    elif args.kind == "cross":
        pairs = [tuple(p) for p in sub.get("pairs", ASED_DIRECTIONS)]
        ws = prepare_workspace(cfg, sorted({c for p in pairs for c in p}))
        result = run_experiment2(ws, pairs, cfg.models, tcfg, jobs=args.jobs, progress=progress,
                                 model_options=opts)
    else:
        target = sub.get("target", "ASED")
        combos = sub.get("combos") or default_combos(target)
        ws = prepare_workspace(cfg, sorted({target, *(c for combo in combos for c in combo)}))
        result = run_experiment3(ws, combos, target, cfg.models, tcfg, jobs=args.jobs,
                                 progress=progress, model_options=opts)
    result.settings["mfcc_fingerprint"] = cfg.mfcc.fingerprint()
    out = cfg.output_dir
    (out / "splits").mkdir(parents=True, exist_ok=True)
    for s in result.splits:
        s.save(out / "splits" / f"{s.name}.json")
    write = lambda name, text: (out / name).write_text(text, encoding="utf-8", newline="\n")
    write(f"results_{args.kind}.json", result.to_json())
    write(f"table_{args.kind}.md", result.table.to_markdown())
    write(f"table_{args.kind}.csv", result.table.to_csv())
    print(result.table.to_markdown())
    print(f"results written to {out / f'results_{args.kind}.json'}")
    return 0


def cmd_report(args) -> int:
    try:
        text = Path(args.results).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UserError(f"results file not found: {args.results}") from None
    table = table_from_json(text)
    print(table.to_csv() if args.format == "csv" else table.to_markdown(), end="")
    return 0


# -- parser -------------------------------------------------------------------


def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="random seed (default 0)")
    parser.add_argument("--jobs", type=int, default=default(1),
                        help="worker processes for independent runs (default 1)")
    parser.add_argument("--strict", action="store_true", default=default(False),
                        help="single-threaded numerics for bit-reproducible results")
    parser.add_argument("-v", "--verbose", action="count", default=default(0))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xlser", description="Cross-lingual speech emotion recognition toolkit")
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)

    s = sub.add_parser("scan", parents=[common], help="parse a corpus directory into a manifest")
    s.add_argument("--corpus", required=True)
    s.add_argument("--root", required=True)
    s.add_argument("--out", help="manifest CSV path (default <CORPUS>.csv)")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("features", parents=[common], help="extract MFCCs into the feature cache")
    s.add_argument("--manifest", required=True, action="append")
    s.add_argument("--cache", required=True)
    s.add_argument("--mfcc-config", help="JSON file of MFCC overrides")
    s.add_argument("--force", action="store_true", help="recompute cached entries")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic pseudo-language corpora")
    s.add_argument("--out", required=True)
    s.add_argument("--spec", help="JSON synthesis spec (default built-in)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", parents=[common], help="generate and verify a split")
    s.add_argument("--scenario", required=True, choices=["mono", "sent", "cross", "multi"])
    s.add_argument("--manifest", required=True, action="append")
    s.add_argument("--test", help="test corpus for cross/multi")
    s.add_argument("--out")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", parents=[common], help="train one model on one split")
    s.add_argument("--config", required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--model", default="VGGE")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="score a checkpoint on a split's test partition")
    s.add_argument("--config", required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--checkpoint", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("expt", parents=[common], help="run an experiment protocol")
    s.add_argument("kind", choices=["mono", "sent", "cross", "multi"])
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_expt)

    s = sub.add_parser("report", parents=[common], help="render tables from a results JSON")
    s.add_argument("--results", required=True)
    s.add_argument("--format", choices=["md", "csv"], default="md")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except XlserError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers everything
        log.debug("unhandled exception", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
