"""Command-line front end for reproducible runs driven by a config file.

Commands: validate, eval, fuse, oracle, fewshot, sweep, report. Every run
is a pure function of the config file (plus --set overrides), so reports
are bit-reproducible: no timestamps, no absolute paths, canonical JSON,
and content hashes of every input store for provenance.

Exit codes: 0 success, 1 validation/metric failure, 2 I/O or config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import store as store_mod
from .evaluation import (
    EvalReport,
    class_level_oracle,
    double_oracle,
    few_shot_eval,
    ground_truth,
    image_level_oracle,
    per_class_accuracy,
    real_accuracy,
    top1_accuracy,
)
from .fusion import fuse_predictions, train_fusion
from .knn import K_GRID_DEFAULT, classify_knn, sweep_k, top_k, vote_prefixes
from .predictions import GroundTruth, PredictionSet, VariantFamily
from .store import (
    ClassCatalog,
    EmbeddingStore,
    InvariantError,
    PromptBank,
    StoreError,
    data_sha256,
)
from .zeroshot import build_prototypes, classify_zeroshot, named_preset, prompt_space_knn, single_template

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

THREADS_ENV = "EMBCLASS_THREADS"


class ConfigError(Exception):
    """Bad or missing configuration; maps to exit code 2."""


# ---------------------------------------------------------------- config


def _set_override(config: dict, item: str) -> None:
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    node = config
    parts = key.split(".")
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"--set {key}: {part!r} is not a mapping")
        node = nxt
    try:
        node[parts[-1]] = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigError(f"--set {key}: unparsable value {value!r} ({e})") from e


def load_config(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = yaml.safe_load(path.read_text())
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid config ({e})") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        config = loaded
    for item in args.set or []:
        _set_override(config, item)
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        config["out_dir"] = args.out_dir
    config.setdefault("seed", 42)
    return config


def resolve_threads(config: dict, flag_threads: int | None) -> int:
    if flag_threads is not None:
        return max(1, flag_threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if "threads" in config:
        return max(1, int(config["threads"]))
    return os.cpu_count() or 1


def _require(config: dict, key: str):
    if key not in config or config[key] is None:
        raise ConfigError(f"config key {key!r} is required")
    return config[key]


def _existing_path(config: dict, key: str) -> Path:
    path = Path(str(_require(config, key)))
    if not path.exists():
        raise ConfigError(f"{key}: file not found: {path}")
    return path


def _k_grid(config: dict) -> tuple[int, ...]:
    grid = config.get("k_grid", list(K_GRID_DEFAULT))
    if not isinstance(grid, (list, tuple)) or not grid:
        raise ConfigError("k_grid must be a non-empty list of integers")
    return tuple(int(k) for k in grid)


def _out_dir(config: dict) -> Path:
    out = Path(str(config.get("out_dir", ".")))
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- I/O helpers


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_predictions_csv(preds: PredictionSet, path: Path) -> None:
    _write_csv(path, ["sample_id", "class_id"],
               [[s, int(c)] for s, c in zip(preds.sample_ids, preds.class_ids)])


def read_predictions_csv(path: Path) -> tuple[tuple[str, ...], np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "class_id"]:
            raise StoreError(f"{path}: expected header 'sample_id,class_id'")
        ids: list[str] = []
        classes: list[int] = []
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise StoreError(f"{path}: malformed row {row!r}")
            ids.append(row[0])
            classes.append(int(row[1]))
    return tuple(ids), np.asarray(classes, dtype=np.int64)


def _align_imported(
    ids: tuple[str, ...], classes: np.ndarray, eval_ids: tuple[str, ...], provenance: str
) -> PredictionSet:
    lookup = {s: int(c) for s, c in zip(ids, classes)}
    if len(lookup) != len(ids):
        raise StoreError("imported predictions contain duplicate sample ids")
    missing = [s for s in eval_ids if s not in lookup]
    if missing:
        raise StoreError(f"imported predictions missing {len(missing)} sample id(s), "
                         f"e.g. {missing[0]!r}")
    ordered = np.asarray([lookup[s] for s in eval_ids], dtype=np.int64)
    return PredictionSet(eval_ids, ordered, provenance=provenance)


def _load_triple(config: dict, key: str):
    path = _existing_path(config, key)
    return (*store_mod.load_store(path), path)


def _load_bank(config: dict, key: str = "bank") -> tuple[PromptBank, Path]:
    bank_store, labels, manifest, path = _load_triple(config, key)
    try:
        return PromptBank(bank_store, labels, manifest), path
    except ValueError as e:
        raise StoreError(f"{path}: not a prompt bank ({e})") from e


def _per_class_csv(path: Path, per_class: np.ndarray, truth: GroundTruth) -> None:
    counts = np.bincount(truth.labels.values, minlength=truth.num_classes)
    rows = []
    for c in range(truth.num_classes):
        acc = None if np.isnan(per_class[c]) else float(per_class[c])
        rows.append([c, int(counts[c]), acc])
    _write_csv(path, ["class_id", "count", "accuracy"], rows)


def _real_metric(preds, eval_store, eval_labels, manifest):
    """ReaL accuracy on the corrected subset, or None when unavailable."""
    if manifest.cleaner_mask is None or manifest.multi_labels is None:
        return None
    sub_store, sub_labels, sub_manifest = store_mod.subset(
        eval_store, eval_labels, manifest, manifest.cleaner_mask
    )
    truth = ground_truth(sub_store, sub_labels, sub_manifest, use_multi=True)
    keep = np.flatnonzero(manifest.cleaner_mask)
    sub_preds = PredictionSet(sub_store.sample_ids, preds.class_ids[keep], preds.provenance)
    return real_accuracy(sub_preds, truth)


# ---------------------------------------------------------------- commands


def cmd_validate(config: dict, threads: int) -> int:
    paths = _require(config, "stores")
    if not isinstance(paths, list) or not paths:
        raise ConfigError("validate needs a non-empty 'stores' list")
    failed = False
    for raw in paths:
        path = Path(str(raw))
        if not path.exists():
            raise ConfigError(f"store file not found: {path}")
        try:
            loaded, labels, manifest = store_mod.load_store(path)
            if loaded.role == "text" and manifest.templates:
                PromptBank(loaded, labels, manifest)
        except InvariantError as e:
            failed = True
            for diag in e.diagnostics:
                print(f"FAIL {path}: {diag}")
        except (StoreError, ValueError) as e:
            failed = True
            print(f"FAIL {path}: {e}")
        else:
            print(f"OK {path} (n={loaded.n}, d={loaded.d}, role={loaded.role})")
    for raw in config.get("catalogs", []) or []:
        path = Path(str(raw))
        if not path.exists():
            raise ConfigError(f"catalog file not found: {path}")
        diags = ClassCatalog.load(path).validate()
        if diags:
            failed = True
            for diag in diags:
                print(f"FAIL {path}: {diag}")
        else:
            print(f"OK {path} (catalog)")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_eval(config: dict, threads: int) -> int:
    classifier = str(_require(config, "classifier"))
    eval_store, eval_labels, eval_manifest, eval_path = _load_triple(config, "eval_store")
    seed = int(config.get("seed", 42))
    hashes = {"eval_store": data_sha256(eval_store)}
    params: dict = {"classifier": classifier, "seed": seed}

    if classifier == "zeroshot":
        bank, _ = _load_bank(config)
        preset = str(config.get("template_preset", "avg_prime"))
        renormalize = bool(config.get("renormalize", True))
        protos = build_prototypes(bank, named_preset(bank, preset), renormalize)
        preds = classify_zeroshot(eval_store, protos, threads=threads)
        hashes["bank"] = data_sha256(bank.store)
        params.update(template_preset=preset, renormalize=renormalize,
                      name_set=bank.manifest.name_set)
    elif classifier == "knn":
        train_store, train_labels, _, _ = _load_triple(config, "train_store")
        k = int(_require(config, "k"))
        exclude = bool(config.get("exclude_self", False))
        preds = classify_knn(eval_store, train_store, train_labels, k,
                             exclude_self=exclude, threads=threads)
        hashes["train_store"] = data_sha256(train_store)
        params.update(k=k, exclude_self=exclude)
    elif classifier == "prompt-knn":
        bank, _ = _load_bank(config)
        k = int(_require(config, "k"))
        preds = prompt_space_knn(eval_store, bank, k, threads=threads)
        hashes["bank"] = data_sha256(bank.store)
        params.update(k=k, name_set=bank.manifest.name_set)
    elif classifier == "import":
        pred_path = _existing_path(config, "predictions")
        ids, classes = read_predictions_csv(pred_path)
        preds = _align_imported(ids, classes, eval_store.sample_ids,
                                provenance=f"import({pred_path.name})")
        params.update(predictions=pred_path.name)
    else:
        raise ConfigError(f"unknown classifier {classifier!r} "
                          "(expected zeroshot | knn | prompt-knn | import)")

    truth = ground_truth(eval_store, eval_labels, eval_manifest)
    top1 = top1_accuracy(preds, truth)
    per_class = per_class_accuracy(preds, truth)
    real = _real_metric(preds, eval_store, eval_labels, eval_manifest)

    report = EvalReport(
        variant=preds.provenance, n=eval_store.n, num_classes=truth.num_classes,
        top1=top1, real=real, per_class=per_class, input_hashes=hashes, params=params,
    )
    out = _out_dir(config)
    report.save(out / "report.json")
    _per_class_csv(out / "per_class.csv", per_class, truth)
    if config.get("save_predictions", False):
        write_predictions_csv(preds, out / "predictions.csv")
    real_text = "" if real is None else f" real {real:.4f}"
    print(f"eval {preds.provenance}: top1 {top1:.4f}{real_text} (n={eval_store.n}) -> {out}")
    return EXIT_OK


def cmd_sweep(config: dict, threads: int) -> int:
    eval_store, eval_labels, _, _ = _load_triple(config, "eval_store")
    train_store, train_labels, _, _ = _load_triple(config, "train_store")
    k_grid = _k_grid(config)
    exclude = bool(config.get("exclude_self", False))
    accs = sweep_k(eval_store, train_store, train_labels, k_grid, eval_labels,
                   exclude_self=exclude, threads=threads)
    best_k = min(k for k in accs if accs[k] == max(accs.values()))
    out = _out_dir(config)
    _write_csv(out / "sweep.csv", ["k", "accuracy"],
               [[k, float(accs[k])] for k in sorted(accs)])
    _write_json(out / "report.json", {
        "command": "sweep",
        "accuracy_per_k": {str(k): accs[k] for k in sorted(accs)},
        "best_k": best_k,
        "input_hashes": {"eval_store": data_sha256(eval_store),
                         "train_store": data_sha256(train_store)},
        "params": {"k_grid": list(k_grid), "exclude_self": exclude},
    })
    print(f"sweep: best k={best_k} accuracy {accs[best_k]:.4f} -> {out}")
    return EXIT_OK


def cmd_fewshot(config: dict, threads: int) -> int:
    eval_store, eval_labels, _, _ = _load_triple(config, "eval_store")
    train_store, train_labels, _, _ = _load_triple(config, "train_store")
    m_grid = _require(config, "m_grid")
    if not isinstance(m_grid, list) or not m_grid:
        raise ConfigError("m_grid must be a non-empty list of integers")
    m_grid = [int(m) for m in m_grid]
    k_grid = _k_grid(config)
    seed = int(config.get("seed", 42))
    trials = config.get("trials")
    budget = config.get("trial_budget")
    if trials is not None and budget is not None:
        raise ConfigError("give either 'trials' or 'trial_budget', not both")
    if budget is not None:
        from .evaluation import few_shot_trials

        trials_per_m = {m: few_shot_trials(m, int(budget)) for m in m_grid}
    else:
        trials_per_m = None if trials is None else int(trials)

    result = few_shot_eval(train_store, train_labels, eval_store, eval_labels,
                           m_grid, trials_per_m, k_grid, seed, threads=threads)
    out = _out_dir(config)
    _write_csv(out / "fewshot.csv",
               ["m", "k", "trials", "mean_accuracy", "ci95_half_width"],
               [[c.m, c.k, c.trials, c.mean, c.half_width] for c in result.rows()])
    _write_json(out / "report.json", {
        "command": "fewshot",
        "cells": [{"m": c.m, "k": c.k, "trials": c.trials, "mean_accuracy": c.mean,
                   "ci95_half_width": c.half_width} for c in result.rows()],
        "input_hashes": {"eval_store": data_sha256(eval_store),
                         "train_store": data_sha256(train_store)},
        "params": {"m_grid": list(result.m_grid), "k_grid": list(result.k_grid),
                   "seed": seed, "trials": trials, "trial_budget": budget},
    })
    print(f"fewshot: {len(result.cells)} cells -> {out}")
    return EXIT_OK


def cmd_fuse(config: dict, threads: int) -> int:
    train_store, train_labels, _, _ = _load_triple(config, "train_store")
    eval_store, eval_labels, eval_manifest, _ = _load_triple(config, "eval_store")
    bank, _ = _load_bank(config)
    k_grid = _k_grid(config)
    folds = int(config.get("folds", 10))
    seed = int(config.get("seed", 42))
    preset = str(config.get("template_preset", "avg_prime"))
    renormalize = bool(config.get("renormalize", True))
    sel = named_preset(bank, preset)

    model = train_fusion(train_store, train_labels, bank, sel, k_grid,
                         folds=folds, seed=seed, renormalize=renormalize, threads=threads)

    protos = build_prototypes(bank, sel, renormalize)
    language = classify_zeroshot(eval_store, protos, threads=threads)
    vision = classify_knn(eval_store, train_store, train_labels, model.chosen_k,
                          threads=threads)
    fused = fuse_predictions(language, vision, model)

    truth = ground_truth(eval_store, eval_labels, eval_manifest)
    accuracy = {"language": top1_accuracy(language, truth),
                "vision": top1_accuracy(vision, truth),
                "fused": top1_accuracy(fused, truth)}
    real = {name: _real_metric(p, eval_store, eval_labels, eval_manifest)
            for name, p in (("language", language), ("vision", vision), ("fused", fused))}
    if any(v is None for v in real.values()):
        real = None

    val_accs = sweep_k(eval_store, train_store, train_labels, k_grid, eval_labels,
                       threads=threads)
    best_val_k = min(k for k in val_accs if val_accs[k] == max(val_accs.values()))

    out = _out_dir(config)
    model.save(out / "fusion_model.json")
    _write_json(out / "report.json", {
        "command": "fuse",
        "chosen_k": model.chosen_k,
        "accuracy": accuracy,
        "real_accuracy": real,
        "cv_accuracy_per_k": model.provenance["cv_accuracy_per_k"],
        "validation_accuracy_per_k": {str(k): val_accs[k] for k in sorted(val_accs)},
        "best_validation_k": best_val_k,
        "input_hashes": {"eval_store": data_sha256(eval_store),
                         "train_store": data_sha256(train_store),
                         "bank": data_sha256(bank.store)},
        "params": {"k_grid": list(k_grid), "folds": folds, "seed": seed,
                   "template_preset": preset, "renormalize": renormalize,
                   "name_set": bank.manifest.name_set},
    })
    _per_class_csv(out / "fused_per_class.csv", per_class_accuracy(fused, truth), truth)
    print(f"fuse: language {accuracy['language']:.4f} vision {accuracy['vision']:.4f} "
          f"(k={model.chosen_k}) fused {accuracy['fused']:.4f} -> {out}")
    return EXIT_OK


def _build_family(spec: dict, eval_store: EmbeddingStore, threads: int) -> tuple[VariantFamily, dict]:
    """Family of prediction sets built from a config mapping; returns (family, hashes)."""
    if not isinstance(spec, dict):
        raise ConfigError("a family spec must be a mapping")
    kind = str(spec.get("family", "")) or None
    if kind is None:
        raise ConfigError("family spec needs a 'family' key (templates | knn | files)")
    if kind == "templates":
        bank, _ = _load_bank(spec)
        renormalize = bool(spec.get("renormalize", True))
        names, members = [], []
        for t in range(bank.num_templates):
            protos = build_prototypes(bank, single_template(bank, t), renormalize)
            members.append(classify_zeroshot(eval_store, protos, threads=threads))
            names.append(bank.templates[t])
        return (VariantFamily(tuple(names), tuple(members)),
                {"bank": data_sha256(bank.store)})
    if kind == "knn":
        train_store, train_labels, _, _ = _load_triple(spec, "train_store")
        k_grid = _k_grid(spec)
        exclude = bool(spec.get("exclude_self", False))
        neighbors = top_k(eval_store, train_store, max(k_grid),
                          exclude_self=exclude, threads=threads)
        votes = vote_prefixes(neighbors, train_labels, k_grid)
        members = tuple(
            PredictionSet(eval_store.sample_ids, votes[k], provenance=f"knn(k={k})")
            for k in k_grid
        )
        names = tuple(f"k={k}" for k in k_grid)
        return VariantFamily(names, members), {"train_store": data_sha256(train_store)}
    if kind == "files":
        entries = spec.get("predictions")
        if not isinstance(entries, list) or not entries:
            raise ConfigError("files family needs a non-empty 'predictions' list")
        names, members = [], []
        for raw in entries:
            path = Path(str(raw))
            if not path.exists():
                raise ConfigError(f"prediction file not found: {path}")
            ids, classes = read_predictions_csv(path)
            members.append(_align_imported(ids, classes, eval_store.sample_ids,
                                           provenance=f"import({path.name})"))
            names.append(path.name)
        return VariantFamily(tuple(names), tuple(members)), {}
    raise ConfigError(f"unknown family kind {kind!r}")


def cmd_oracle(config: dict, threads: int) -> int:
    level = str(_require(config, "level"))
    if level not in ("class", "image"):
        raise ConfigError("level must be 'class' or 'image'")
    eval_store, eval_labels, eval_manifest, _ = _load_triple(config, "eval_store")
    truth = ground_truth(eval_store, eval_labels, eval_manifest)
    hashes = {"eval_store": data_sha256(eval_store)}

    doc: dict = {"command": "oracle", "level": level}
    out = _out_dir(config)
    if "vision" in config or "language" in config:
        vision_spec = _require(config, "vision")
        language_spec = _require(config, "language")
        vision, h1 = _build_family(vision_spec, eval_store, threads)
        language, h2 = _build_family(language_spec, eval_store, threads)
        hashes.update({f"vision_{k}": v for k, v in h1.items()})
        hashes.update({f"language_{k}": v for k, v in h2.items()})
        doc["oracle"] = "double"
        doc["accuracy"] = double_oracle(vision, language, truth, level)
        doc["member_accuracies"] = {
            f"vision:{n}": top1_accuracy(m, truth) for n, m in zip(vision.names, vision.members)
        } | {
            f"language:{n}": top1_accuracy(m, truth)
            for n, m in zip(language.names, language.members)
        }
    else:
        family, extra = _build_family(config, eval_store, threads)
        hashes.update(extra)
        doc["oracle"] = "single"
        doc["member_accuracies"] = {
            n: top1_accuracy(m, truth) for n, m in zip(family.names, family.members)
        }
        if level == "class":
            result = class_level_oracle(family, truth)
            doc["accuracy"] = result.accuracy
            _write_csv(out / "chosen_variants.csv", ["class_id", "variant"],
                       [[c, result.variant_names[v]] for c, v in enumerate(result.chosen)])
        else:
            doc["accuracy"] = image_level_oracle(family, truth)
    doc["input_hashes"] = hashes
    doc["params"] = {"seed": int(config.get("seed", 42))}
    _write_json(out / "report.json", doc)
    print(f"oracle ({doc['oracle']}, {level}-level): accuracy {doc['accuracy']:.4f} -> {out}")
    return EXIT_OK


def cmd_report(config: dict, threads: int) -> int:
    path = _existing_path(config, "report")
    doc = json.loads(Path(path).read_text())
    command = doc.get("command", "eval")
    print(f"# report: {command}")
    if "cells" in doc:
        print(f"{'m':>6} {'k':>4} {'trials':>7} {'mean':>9} {'ci95':>9}")
        for cell in doc["cells"]:
            print(f"{cell['m']:>6} {cell['k']:>4} {cell['trials']:>7} "
                  f"{cell['mean_accuracy']:>9.4f} {cell['ci95_half_width']:>9.4f}")
    elif "accuracy_per_k" in doc and command == "sweep":
        print(f"{'k':>4} {'accuracy':>9}")
        for k in sorted(doc["accuracy_per_k"], key=int):
            print(f"{k:>4} {doc['accuracy_per_k'][k]:>9.4f}")
        print(f"best k: {doc['best_k']}")
    elif command == "fuse":
        acc = doc["accuracy"]
        print(f"chosen k (cross-validation): {doc['chosen_k']}")
        print(f"{'language':>10} {'vision':>10} {'fused':>10}")
        print(f"{acc['language']:>10.4f} {acc['vision']:>10.4f} {acc['fused']:>10.4f}")
        if doc.get("real_accuracy"):
            r = doc["real_accuracy"]
            print(f"{r['language']:>10.4f} {r['vision']:>10.4f} {r['fused']:>10.4f} (corrected labels)")
    elif command == "oracle":
        print(f"{doc['oracle']} oracle, {doc['level']}-level: {doc['accuracy']:.4f}")
        for name, acc in sorted(doc.get("member_accuracies", {}).items()):
            print(f"  {name}: {acc:.4f}")
    else:
        print(f"variant: {doc.get('variant')}")
        print(f"top-1 accuracy: {doc.get('top1_accuracy')}")
        if doc.get("real_accuracy") is not None:
            print(f"set-membership accuracy: {doc['real_accuracy']}")
        if doc.get("ci"):
            ci = doc["ci"]
            print(f"ci: {ci['mean']:.4f} +/- {ci['half_width']:.4f} ({ci['trials']} trials)")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "eval": cmd_eval,
    "fuse": cmd_fuse,
    "oracle": cmd_oracle,
    "fewshot": cmd_fewshot,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embclass",
        description="Classification and evaluation over precomputed embedding stores.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"{name} command")
        p.add_argument("--config", "-c", help="YAML/JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable, dotted keys allowed)")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--threads", type=int, help="worker thread count")
        p.add_argument("--out-dir", help="output directory")
        if name == "report":
            p.add_argument("path", nargs="?", help="report.json to render")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        if args.command == "report" and getattr(args, "path", None):
            config["report"] = args.path
        threads = resolve_threads(config, args.threads)
        return COMMANDS[args.command](config, threads)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (StoreError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
