"""Batch command-line front end: ``stats``, ``synth``, ``train``, ``eval``, ``compare``.

Each command resolves a :class:`~perspectivist.config.RunConfig` from
``--config`` (a flat config file or any output of a previous run), then
applies command-line flags on top.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus
from .features import featurize
from .config import ConfigError, RunConfig, format_value, load_config_source, resolve
from .metrics import EvalReport, evaluate
from .models import checkpoint
from .models.training import EpochRecord, prepare_features, predict_arrays, train
from .synthgen import generate_dataset, generate_population, oracle_soft_labels

log = logging.getLogger("perspectivist")


class CommandError(RuntimeError):
    pass


# --------------------------------------------------------------------------- output helpers


def write_flat(path: Path, values: dict[str, object], cfg: RunConfig) -> None:
    lines = [f"{k}={format_value(v)}" for k, v in values.items()]
    lines += cfg.lines(prefix="config.")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_flat(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            key, value = line.split("=", 1)
            out[key] = value
    return out


def dataset_identity(instances) -> str:
    h = hashlib.sha256()
    for inst in instances:
        h.update(json.dumps([inst.id, inst.text, inst.annotations], ensure_ascii=False).encode("utf-8"))
    return h.hexdigest()[:16]


def write_history(path: Path, history: list[EpochRecord], cfg: RunConfig) -> None:
    lines = [f"# {line}" for line in cfg.lines(prefix="config.")]
    lines.append("epoch\ttrain_loss\tdev_soft_ce\tdev_f1")
    lines += [f"{r.epoch}\t{r.train_loss!r}\t{r.dev_soft_ce!r}\t{r.dev_f1!r}" for r in history]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load(cfg: RunConfig) -> corpus.Dataset:
    if not cfg.data:
        raise CommandError("no dataset path given (positional argument or 'data' config key)")
    return corpus.load_dataset(cfg.data, cfg.label_mapping)


# --------------------------------------------------------------------------- commands


def cmd_stats(cfg: RunConfig, out: Path) -> list[Path]:
    dataset = _load(cfg)
    report = corpus.dataset_stats(dataset, cfg.alpha_split)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "stats.txt"
    write_flat(path, report.to_flat(), cfg)
    return [path]


def cmd_synth(cfg: RunConfig, out: Path) -> list[Path]:
    gen = cfg.gen_config()
    population = generate_population(gen)
    dataset = generate_dataset(population, gen)
    meta = {"config": cfg.to_dict(), "generator": gen.to_dict()}
    written = corpus.save_dataset(dataset, out, meta)
    oracle = {}
    for split, instances in dataset.splits.items():
        soft = oracle_soft_labels(population, instances) if instances else np.zeros((0, 2))
        oracle[split] = {inst.id: [float(a), float(b)] for inst, (a, b) in zip(instances, soft)}
    oracle_path = out / "oracle.json"
    oracle_path.write_text(json.dumps({"meta": meta, "oracle": oracle}, indent=1) + "\n", encoding="utf-8")
    return [*written, oracle_path]


def cmd_train(cfg: RunConfig, out: Path) -> list[Path]:
    dataset = _load(cfg)
    if "dev" not in dataset.splits or not dataset.splits["dev"]:
        raise CommandError("training needs a dev split for checkpoint selection")
    tcfg = cfg.train_config()
    feats = prepare_features(dataset, tcfg.min_df, tcfg.tie_break)
    trained = train(cfg.model, feats, tcfg)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, hist, vocab = out / "checkpoint.bin", out / "history.tsv", out / "vocab.tsv"
    checkpoint.save(trained, ckpt, cfg.to_dict())
    write_history(hist, trained.history, cfg)
    comments = "".join(f"# {line}\n" for line in cfg.lines(prefix="config."))
    vocab.write_text(comments + trained.vocab.dumps(), encoding="utf-8")
    return [ckpt, hist, vocab]


def cmd_eval(cfg: RunConfig, out: Path, inject_gold: bool = False) -> list[Path]:
    if not cfg.checkpoint:
        raise CommandError("no checkpoint given (positional argument or 'checkpoint' config key)")
    trained = checkpoint.load(cfg.checkpoint)
    dataset = _load(cfg)
    if dataset.registry.annotator_ids != trained.annotator_ids:
        raise CommandError("annotator registry of the dataset does not match the checkpoint")
    instances = dataset.split(cfg.split)
    if not instances:
        raise CommandError(f"{cfg.split} split is empty")
    matrix = corpus.annotation_matrix(instances, dataset.registry)
    if not matrix.mask.any(axis=1).all():
        raise CommandError(f"every {cfg.split} instance needs gold annotations for evaluation")
    gold_hard, gold_soft = corpus.gold_labels(matrix, cfg.tie_break)
    X = featurize([i.text for i in instances], trained.vocab)
    hard, _, soft, head_probs = predict_arrays(trained, X, matrix.mask, cfg.mode, cfg.aggregation, cfg.tie_break)
    if inject_gold:
        hard, soft = gold_hard, gold_soft
        onehot = np.zeros((*matrix.shape, 2))
        np.put_along_axis(onehot, matrix.values.astype(np.int64)[..., None], 1.0, axis=-1)
        head_probs = np.where(matrix.mask[..., None], onehot, head_probs)
    report = evaluate(hard, soft, head_probs, matrix, dataset.registry.annotator_ids, gold_hard, gold_soft,
                      cfg.ce_epsilon)
    report.extra.update({
        "model": trained.kind,
        "mode": cfg.mode,
        "aggregation": cfg.aggregation,
        "split": cfg.split,
        "dataset_id": dataset_identity(instances),
        "inject_gold": int(inject_gold),
    })
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"eval_{cfg.split}.txt"
    write_flat(path, report.to_flat(), cfg)
    return [path]


def compare_reports(paths: list[Path]) -> tuple[list[dict], str]:
    """Rows ``{name, model, mode, aggregation, f1, ce, best_f1, best_ce}`` plus the dataset id."""
    if len(paths) < 2:
        raise CommandError("compare needs at least two reports")
    rows, identities = [], set()
    for p in paths:
        flat = read_flat(p)
        if "micro_f1" not in flat:
            raise CommandError(f"{p} is not an evaluation report")
        report = EvalReport.from_flat(flat)
        identities.add((flat.get("dataset_id"), flat.get("split")))
        rows.append({"name": p.parent.name or p.stem, "model": flat.get("model", "?"),
                     "mode": flat.get("mode", "?"), "aggregation": flat.get("aggregation", "?"),
                     "f1": report.micro_f1, "ce": report.soft_ce})
    if len(identities) != 1:
        raise CommandError(f"reports come from different datasets: {sorted(map(str, identities))}")
    best_f1 = max(r["f1"] for r in rows)
    best_ce = min(r["ce"] for r in rows)
    for r in rows:
        r["best_f1"] = r["f1"] == best_f1
        r["best_ce"] = r["ce"] == best_ce
    return rows, next(iter(identities))[0] or ""


def cmd_compare(reports: list[Path], out: Path) -> list[Path]:
    rows, dataset_id = compare_reports(reports)
    out.mkdir(parents=True, exist_ok=True)
    header = [f"# input={p}" for p in reports] + [f"# dataset_id={dataset_id}"]
    tsv = ["name\tmodel\tmode\taggregation\tf1\tce\tbest_f1\tbest_ce"]
    tsv += [f"{r['name']}\t{r['model']}\t{r['mode']}\t{r['aggregation']}\t{r['f1']!r}\t{r['ce']!r}\t"
            f"{int(r['best_f1'])}\t{int(r['best_ce'])}" for r in rows]
    tsv_path = out / "comparison.tsv"
    tsv_path.write_text("\n".join(header + tsv) + "\n", encoding="utf-8")

    def cell(value: float, best: bool) -> str:
        text = f"{value:.3f}"
        return f"**{text}**" if best else text

    md = ["| Model | F1 (↑) | CE (↓) |", "|---|---|---|"]
    md += [f"| {r['name']} ({r['model']}, {r['mode']}, {r['aggregation']}) | {cell(r['f1'], r['best_f1'])} "
           f"| {cell(r['ce'], r['best_ce'])} |" for r in rows]
    md_path = out / "comparison.md"
    md_path.write_text("\n".join(md) + "\n", encoding="utf-8")
    return [tsv_path, md_path]


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perspectivist", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, positional: str | None = None, positional_help: str = ""):
        if positional:
            p.add_argument(positional, nargs="?", help=positional_help)
        p.add_argument("--config", type=Path, help="flat key=value config, or any output file of a previous run")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")

    common(sub.add_parser("stats", help="descriptive statistics of a dataset"), "data", "dataset directory or file")
    common(sub.add_parser("synth", help="generate a synthetic dataset"))
    common(sub.add_parser("train", help="train svm / singletask / multitask"), "data", "dataset directory")
    ev = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    common(ev, "checkpoint", "checkpoint file written by 'train'")
    ev.add_argument("--data", help="dataset directory (default: config 'data')")
    ev.add_argument("--split", choices=corpus.SPLITS)
    ev.add_argument("--constrained", action="store_true", help="aggregate only the instance's own annotators")
    ev.add_argument("--aggregation", choices=("argmax-count", "mean-prob"))
    ev.add_argument("--inject-gold", action="store_true", help=argparse.SUPPRESS)
    cmp_ = sub.add_parser("compare", help="side-by-side table of evaluation reports")
    cmp_.add_argument("reports", nargs="+", type=Path)
    cmp_.add_argument("--out", type=Path, default=Path("."))
    return parser


def resolve_args(args: argparse.Namespace) -> RunConfig:
    if args.config:
        base = load_config_source(args.config)
    elif getattr(args, "checkpoint", None):
        # evaluate against the data and settings the checkpoint was trained with
        base = load_config_source(args.checkpoint)
    else:
        base = {}
    overrides: dict[str, object] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "data", None):
        overrides["data"] = str(args.data)
    if getattr(args, "checkpoint", None):
        overrides["checkpoint"] = str(args.checkpoint)
    if getattr(args, "split", None):
        overrides["split"] = args.split
    if getattr(args, "constrained", False):
        overrides["mode"] = "constrained"
    if getattr(args, "aggregation", None):
        overrides["aggregation"] = args.aggregation
    return resolve(base, **overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            written = cmd_compare(args.reports, args.out)
        else:
            cfg = resolve_args(args)
            if args.command == "stats":
                written = cmd_stats(cfg, args.out)
            elif args.command == "synth":
                written = cmd_synth(cfg, args.out)
            elif args.command == "train":
                written = cmd_train(cfg, args.out)
            else:
                written = cmd_eval(cfg, args.out, args.inject_gold)
    except (CommandError, ConfigError, ValueError, OSError, KeyError) as e:
        print(f"perspectivist {args.command}: error: {e}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
