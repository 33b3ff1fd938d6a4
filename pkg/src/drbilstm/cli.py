"""Command-line interface.

Every run writes ``manifest.json`` beside its outputs: the resolved
configuration, seed, library versions and a SHA-256 of every input and
output file. There are no timestamps, so two identical runs give identical
manifests.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import itertools
import json
import logging
import os
import platform
import sys
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .analysis import annotate, categorical_accuracy, chi_square, export_heatmap
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ABLATIONS, ROSTER, ModelConfig, TrainConfig, from_key_values, load_config_file
from .data import LABEL_INDEX, LABELS, SentencePair, load_pairs, read_snli, write_tokenized
from .embeddings import Vocabulary, build_vocabulary, init_embeddings
from .ensemble import (
    EnsembleConfig,
    accuracy_weights,
    combine,
    greedy_select,
    read_predictions,
    weighted_average,
    write_predictions,
)
from .errors import DrBilstmError
from .gradcheck import PASS_THRESHOLD, check_model
from .model import build_model, forward
from .oov import count_unknown, recover_pairs
from .trainer import encode_pairs, evaluate, train, write_history

logger = logging.getLogger("drbilstm")

DATA_ENV = "DRBL_DATA_DIR"
SNLI_FILES = {split: f"snli_1.0_{split}.jsonl" for split in ("train", "dev", "test")}
SUBCOMMANDS = ("preprocess", "train", "eval", "ensemble", "analyze", "heatmap", "gradcheck")


# --------------------------------------------------------------------------
# helpers


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    out = {"python": platform.python_version(), "drbilstm": __version__}
    for pkg in ("numpy", "scipy", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(out_dir: Path, command: str, spec: dict, inputs: Sequence, outputs: Sequence) -> Path:
    manifest = {
        "command": command,
        "spec": spec,
        "versions": versions(),
        "inputs": {Path(p).name: sha256(p) for p in inputs if p and Path(p).is_file()},
        "outputs": {Path(p).name: sha256(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def data_path(explicit: Optional[str], split: str) -> Path:
    if explicit:
        return Path(explicit)
    root = os.environ.get(DATA_ENV)
    if not root:
        raise FileNotFoundError(f"no {split} file given and {DATA_ENV} is not set")
    for candidate in (Path(root) / SNLI_FILES[split], Path(root) / "snli_1.0" / SNLI_FILES[split]):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{SNLI_FILES[split]} not found under {root}")


def load_vocab(path: Path) -> Vocabulary:
    counts = path.with_name("counts.tsv")
    return Vocabulary.load(path, counts if counts.exists() else None)


def prepare(pairs: List[SentencePair], vocab: Vocabulary, recover: bool) -> List[SentencePair]:
    if not recover:
        return pairs
    before = count_unknown(pairs, vocab)
    fixed, after = recover_pairs(pairs, vocab)
    logger.info("unknown tokens: %d before recovery, %d after", before, after)
    return fixed


def _arg_type(tp):
    if tp in (int, "int", "Optional[int]"):
        return int
    if tp in (float, "float", "Optional[float]"):
        return float
    return str


def add_config_flags(parser: argparse.ArgumentParser, cls, skip=("seed", "dtype")) -> None:
    group = parser.add_argument_group(f"{cls.__name__} fields")
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type in (bool, "bool"):
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            group.add_argument(flag, dest=f.name, type=_arg_type(f.type), default=None, metavar=f.name.upper())


def resolve_configs(args) -> tuple:
    """Defaults, then preset, then ``--config`` file, then explicit flags."""
    model, tcfg = ModelConfig(), TrainConfig()
    if getattr(args, "ablation", None):
        model = model.replace(**ABLATIONS[args.ablation])
    if getattr(args, "variant", None):
        model = model.replace(**ROSTER[args.variant])
    if getattr(args, "config", None):
        values = load_config_file(args.config)
        model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
        train_keys = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(values) - model_keys - train_keys
        if unknown:
            raise DrBilstmError(f"unknown config keys: {', '.join(sorted(unknown))}")
        model = from_key_values(ModelConfig, {k: v for k, v in values.items() if k in model_keys}, model)
        tcfg = from_key_values(TrainConfig, {k: v for k, v in values.items() if k in train_keys}, tcfg)
    overrides = vars(args)
    model = model.replace(**{f.name: overrides[f.name] for f in dataclasses.fields(ModelConfig)
                             if overrides.get(f.name) is not None})
    tcfg = dataclasses.replace(tcfg, **{f.name: overrides[f.name] for f in dataclasses.fields(TrainConfig)
                                        if overrides.get(f.name) is not None})
    if args.seed is not None:
        model = model.replace(seed=args.seed)
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    model.validate()
    return model, tcfg


def out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> int:
    out = out_dir(args.out)
    paths = {split: data_path(getattr(args, split), split) for split in ("train", "dev", "test")
             if getattr(args, split) or split == "train" or os.environ.get(DATA_ENV)}
    loaded = {split: read_snli(p, use_parse=not args.no_parse) for split, p in paths.items()}
    vocab = build_vocabulary(loaded["train"][0])
    outputs = [out / "vocab.txt", out / "counts.tsv"]
    vocab.dump(outputs[0])
    vocab.dump_counts(outputs[1])
    lines = ["split\tpairs\tdropped\tunknown_before\tunknown_after"]
    for split, (pairs, dropped) in loaded.items():
        before = count_unknown(pairs, vocab)
        fixed, after = recover_pairs(pairs, vocab) if not args.no_recover else (pairs, before)
        target = out / f"{split}.tsv"
        write_tokenized(fixed, target)
        outputs.append(target)
        lines.append(f"{split}\t{len(pairs)}\t{dropped}\t{before}\t{after}")
    report = out / "preprocess.tsv"
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs.append(report)
    print("\n".join(lines))
    write_manifest(out, "preprocess", {"no_parse": args.no_parse, "no_recover": args.no_recover},
                   paths.values(), outputs)
    return 0


def cmd_train(args) -> int:
    from .plotting import plot_history

    model_cfg, tcfg = resolve_configs(args)
    out = out_dir(args.out)
    train_path, dev_path = data_path(args.train, "train"), data_path(args.dev, "dev")
    train_pairs = load_pairs(train_path)
    vocab = load_vocab(Path(args.vocab)) if args.vocab else build_vocabulary(train_pairs)
    dev_pairs = prepare(load_pairs(dev_path), vocab, not args.no_recover)
    if args.limit:
        train_pairs, dev_pairs = train_pairs[:args.limit], dev_pairs[:args.limit]

    rng = np.random.default_rng(model_cfg.seed)
    embedding = init_embeddings(vocab, model_cfg.r, rng, args.embeddings, model_cfg.np_dtype)
    params = build_model(model_cfg, vocab, rng, embedding)
    logger.info("%d parameters", params.parameter_count())

    def report(rec):
        print(f"epoch {rec.epoch}\ttrain_acc {rec.train_acc:.4f}\tdev_acc {rec.dev_acc:.4f}\tloss {rec.mean_loss:.4f}",
              flush=True)

    result = train(params, model_cfg, encode_pairs(train_pairs, vocab), encode_pairs(dev_pairs, vocab), tcfg,
                   on_epoch=report, threads=args.threads)
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, result.params, model_cfg, result.optimizer, result.best_dev_acc, tcfg.seed)
    vocab.dump(out / "vocab.txt")
    vocab.dump_counts(out / "counts.tsv")
    write_history(result.history, out / "history.csv")
    plot_history(result.history, out / "history.svg")
    dev_eval = evaluate(result.params, model_cfg, encode_pairs(dev_pairs, vocab), args.threads)
    write_predictions(out / "dev_predictions.csv", [p.pair_id for p in dev_pairs], dev_eval.probs())
    print(f"best dev accuracy {result.best_dev_acc:.4f} at epoch {result.best_epoch}")
    outputs = [ckpt, out / "vocab.txt", out / "counts.tsv", out / "history.csv", out / "history.svg",
               out / "dev_predictions.csv"]
    spec = {"model": dataclasses.asdict(model_cfg), "train": dataclasses.asdict(tcfg),
            "embeddings": bool(args.embeddings), "recover": not args.no_recover, "limit": args.limit}
    write_manifest(out, "train", spec, [train_path, dev_path, args.embeddings, args.vocab], outputs)
    return 0


def _load_model(checkpoint: str, vocab_path: Optional[str]):
    ckpt = load_checkpoint(checkpoint)
    vocab = load_vocab(Path(vocab_path) if vocab_path else Path(checkpoint).with_name("vocab.txt"))
    if len(vocab) != ckpt.vocab_size:
        raise DrBilstmError(f"vocabulary has {len(vocab)} entries but the checkpoint expects {ckpt.vocab_size}")
    return ckpt, ckpt.to_params(), vocab


def cmd_eval(args) -> int:
    ckpt, params, vocab = _load_model(args.checkpoint, args.vocab)
    data = Path(args.data)
    pairs = prepare(load_pairs(data), vocab, not args.no_recover)
    result = evaluate(params, ckpt.config, encode_pairs(pairs, vocab), args.threads)
    out = out_dir(args.out)
    target = out / f"{data.stem}_predictions.csv"
    write_predictions(target, [p.pair_id for p in pairs], result.probs())
    print(f"accuracy {result.accuracy!r}")
    if ckpt.best_dev_accuracy is not None:
        print(f"recorded dev accuracy {ckpt.best_dev_accuracy!r}")
    write_manifest(out, "eval", {"config": dataclasses.asdict(ckpt.config), "seed": ckpt.seed,
                                 "recover": not args.no_recover},
                   [args.checkpoint, data], [target])
    return 0


def _gold_indices(path, ids: Sequence[str]) -> np.ndarray:
    by_id = {p.pair_id: LABEL_INDEX[p.label] for p in load_pairs(path)}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise DrBilstmError(f"{len(missing)} predicted pairs have no gold label (first: {missing[0]})")
    return np.array([by_id[i] for i in ids])


def _read_members(paths):
    ids, probs = [], []
    for p in paths:
        pid, pr = read_predictions(p)
        ids.append(pid)
        probs.append(pr)
    for p, other in zip(paths[1:], ids[1:]):
        if other != ids[0]:
            raise DrBilstmError(f"{p} covers different pairs than {paths[0]}")
    return ids[0] if ids else [], probs


def member_names(paths: Sequence[str]) -> List[str]:
    """File stems, qualified by their directory when stems repeat."""
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return [f"{Path(p).parent.name}/{Path(p).stem}" for p in paths]


def cmd_ensemble(args) -> int:
    from .plotting import plot_ensemble_curve

    out = out_dir(args.out)
    dev_ids, dev_probs = _read_members(args.members)
    dev_golds = _gold_indices(args.dev, dev_ids)
    test_ids, test_probs, test_golds = None, None, None
    if args.test_members:
        if len(args.test_members) != len(args.members):
            raise DrBilstmError("--test-members must list one file per member")
        if not args.test:
            raise DrBilstmError("--test-members needs --test for gold labels")
        test_ids, test_probs = _read_members(args.test_members)
        test_golds = _gold_indices(args.test, test_ids)

    names = member_names(args.members)
    max_n = args.max_n or len(names)
    outputs = []
    if args.weights == "accuracy":
        accs = [float(np.mean(np.argmax(p, axis=1) == dev_golds)) for p in dev_probs]
        members, weights = list(range(len(names))), accuracy_weights(accs)
        dev_acc = float(np.mean(combine(EnsembleConfig(weights, args.strategy), dev_probs) == dev_golds))
        print(f"accuracy-proportional weights: dev accuracy {dev_acc:.4f}")
    else:
        selection = greedy_select(dev_probs, dev_golds, max_n, test_probs, test_golds, strategy=args.strategy)
        lines = ["n\tmembers\tweights\tdev_acc\ttest_acc"]
        for s in selection.steps:
            test = "" if s.test_accuracy is None else repr(s.test_accuracy)
            lines.append(f"{s.n}\t{','.join(names[i] for i in s.members)}\t"
                         f"{','.join(f'{w:.2f}' for w in s.weights)}\t{s.dev_accuracy!r}\t{test}")
        print("\n".join(lines))
        table = out / "selection.tsv"
        table.write_text("\n".join(lines) + "\n", encoding="utf-8")
        plot_ensemble_curve(selection.steps, out / "ensemble_curve.svg")
        outputs += [table, out / "ensemble_curve.svg"]
        best = selection.best
        members, weights = best.members, best.weights
        print(f"best: {best.n} members, dev accuracy {best.dev_accuracy:.4f}")

    for split, ids, probs in (("dev", dev_ids, dev_probs), ("test", test_ids, test_probs)):
        if probs is None:
            continue
        chosen = [probs[i] for i in members]
        combined = weighted_average(chosen, weights) if args.strategy != "majority_vote" else None
        if combined is None:
            labels = combine(EnsembleConfig(weights, args.strategy), chosen)
            combined = np.eye(len(LABELS))[labels]
        target = out / f"ensemble_{split}.csv"
        write_predictions(target, ids, combined)
        outputs.append(target)
    spec = {"strategy": args.strategy, "weights": args.weights, "max_n": max_n, "members": names}
    write_manifest(out, "ensemble", spec, [*args.members, *(args.test_members or []), args.dev, args.test], outputs)
    return 0


def cmd_analyze(args) -> int:
    from .plotting import plot_categorical

    out = out_dir(args.out)
    data = data_path(args.data, "test")
    pairs = load_pairs(data)
    tagsets = [annotate(p) for p in pairs]
    golds = [p.label for p in pairs]
    index = {p.pair_id: i for i, p in enumerate(pairs)}
    predictions: Dict[str, List[str]] = {}
    for item in args.predictions or []:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        ids, probs = read_predictions(path)
        if sorted(ids) != sorted(index):
            raise DrBilstmError(f"{path} does not cover the same pairs as {data}")
        labels = [None] * len(pairs)
        for pid, row in zip(ids, probs):
            labels[index[pid]] = LABELS[int(np.argmax(row))]
        predictions[name] = labels
    report = categorical_accuracy(predictions, golds, tagsets)
    outputs = [out / "categories.tsv"]
    report.write(outputs[0])
    print(report.to_tsv(), end="")
    if predictions:
        plot_categorical(report, out / "categories.svg")
        outputs.append(out / "categories.svg")
    if len(predictions) >= 2:
        lines = ["system_a\tsystem_b\tstatistic\tp_value\tlow_expected"]
        for a, b in itertools.combinations(predictions, 2):
            res = chi_square(predictions[a], predictions[b], golds)
            lines.append(f"{a}\t{b}\t{res.statistic!r}\t{res.p_value!r}\t{res.low_expected}")
        (out / "chi_square.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        outputs.append(out / "chi_square.tsv")
        print("\n".join(lines))
    write_manifest(out, "analyze", {"systems": list(predictions)}, [data], outputs)
    return 0


def cmd_heatmap(args) -> int:
    ckpt, params, vocab = _load_model(args.checkpoint, args.vocab)
    pairs = prepare(load_pairs(args.data), vocab, not args.no_recover)
    if args.pair_id:
        wanted = set(args.pair_id)
        pairs = [p for p in pairs if p.pair_id in wanted]
        if len(pairs) != len(wanted):
            raise DrBilstmError("some requested pair ids are not in the data")
    else:
        pairs = pairs[:args.limit]
    out = out_dir(args.out)
    outputs = []
    for pair in pairs:
        res = forward(params, ckpt.config, vocab.encode(pair.premise), vocab.encode(pair.hypothesis))
        base = out / f"heatmap_{pair.pair_id}"
        export_heatmap(res.alignment.energy.data, pair.premise, pair.hypothesis, base)
        outputs += [base.with_suffix(".csv"), base.with_suffix(".svg")]
        print(f"{pair.pair_id}\t{pair.label}\t{res.prediction.label}\t{base}.svg")
    write_manifest(out, "heatmap", {"pairs": [p.pair_id for p in pairs]}, [args.checkpoint, args.data], outputs)
    return 0


def cmd_gradcheck(args) -> int:
    config = ModelConfig(r=args.r, d=args.d)
    worst = 0.0
    lines = []
    for seed in range(args.seed, args.seed + args.instances):
        report = check_model(config, seed=seed, max_len=args.max_len, samples=args.samples)
        lines += [f"seed {seed}"] + [f"  {line}" for line in report.lines()]
        worst = max(worst, report.max_error)
    lines.append(f"max relative error {worst:.3e}")
    print("\n".join(lines))
    if args.out:
        out = out_dir(args.out)
        target = out / "gradcheck.txt"
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        write_manifest(out, "gradcheck", {"r": args.r, "d": args.d, "seed": args.seed,
                                          "instances": args.instances, "samples": args.samples}, [], [target])
    return 0 if worst < PASS_THRESHOLD else 1


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drbilstm", description="Dependent-reading BiLSTM for natural language inference.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("preprocess", help="tokenize SNLI, build the vocabulary, recover unknown words")
    p.add_argument("--train", help=f"training jsonl (default: ${DATA_ENV}/{SNLI_FILES['train']})")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--out", required=True)
    p.add_argument("--no-parse", action="store_true", help="tokenize text instead of using parse leaves")
    p.add_argument("--no-recover", action="store_true", help="skip unknown-word recovery")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--train", help="training pairs (.jsonl or tokenized .tsv)")
    p.add_argument("--dev", help="development pairs")
    p.add_argument("--vocab", help="vocabulary file (default: built from the training pairs)")
    p.add_argument("--embeddings", help="pretrained word vectors, one word and its values per line")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key = value file; explicit flags take precedence")
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    p.add_argument("--variant", choices=sorted(ROSTER), help="ensemble member variant")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--limit", type=int, help="use only the first N pairs of each split")
    p.add_argument("--no-recover", action="store_true")
    add_config_flags(p, ModelConfig)
    add_config_flags(p, TrainConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", help="default: vocab.txt beside the checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-recover", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble", help="combine member prediction files")
    p.add_argument("--members", nargs="+", required=True, help="dev prediction CSVs, one per member")
    p.add_argument("--dev", required=True, help="dev pairs with gold labels")
    p.add_argument("--test-members", nargs="+")
    p.add_argument("--test")
    p.add_argument("--strategy", choices=["weighted_average", "majority_vote", "average"], default="weighted_average")
    p.add_argument("--weights", choices=["grid", "accuracy"], default="grid",
                   help="grid: maximise dev accuracy over the weight simplex; accuracy: proportional to dev accuracy")
    p.add_argument("--max-n", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("analyze", help="annotation tags, categorical accuracy and chi-square tests")
    p.add_argument("--data", help=f"test pairs (default: ${DATA_ENV}/{SNLI_FILES['test']})")
    p.add_argument("--predictions", nargs="*", metavar="NAME=CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("heatmap", help="export attention heatmaps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--pair-id", nargs="*")
    p.add_argument("--limit", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--no-recover", action="store_true")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full network's gradients")
    p.add_argument("--d", type=int, default=12)
    p.add_argument("--r", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=1, help="random sentence pairs to check")
    p.add_argument("--samples", type=int, default=30, help="coordinates per parameter tensor")
    p.add_argument("--max-len", type=int, default=7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, DrBilstmError) as exc:
        print(f"drbilstm {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
