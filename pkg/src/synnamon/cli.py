"""Command-line pipeline: corpus statistics, filtering, splitting,
training, evaluation, probes, gradient checking, and synthetic data.

Every run writes a manifest (resolved flags, seeds, input digests,
timestamps) next to its outputs, on success and on failure alike. Exit
codes: 0 success, 1 invalid input, 2 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, synth
from .autodiff import grad_check, Tape
from .dataset import load_dataset, save_dataset, split_records
from .distill import (
    TrainConfig,
    evaluate,
    export_history_csv,
    train,
)
from .errors import InputError, SynnamonError
from .modules import (
    Architecture,
    ModuleRegistry,
    init_module,
    load_checkpoint,
    module_forward,
    save_checkpoint,
)
from .probe import (
    DEFAULT_PROBE_RULE,
    export_category_csv,
    load_phrase_pairs,
    probe_eval,
    probe_train,
)
from .trees import (
    CorpusFilterConfig,
    corpus_rule_frequencies,
    filter_corpus,
    read_treebank,
    split_corpus,
    write_treebank,
)
from . import autodiff

log = logging.getLogger("synnamon")


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; the contract wants 1
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


@dataclass
class RunManifest:
    subcommand: str
    version: str
    flags: dict
    seeds: dict
    input_digests: dict
    started_at: str
    finished_at: str = ""
    status: str = "running"
    error: str = ""

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _parse_heights(text: str) -> frozenset:
    try:
        return frozenset(int(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"bad --heights value {text!r}; expected e.g. 4,5") from None


def _arch(name: str) -> Architecture:
    try:
        return Architecture(name)
    except ValueError:
        raise UsageError(
            f"unknown architecture {name!r}; pick linear, nonlin, or double"
        ) from None


# ---------------------------------------------------------------------------
# subcommands; each returns the manifest directory/file mapping it used


def cmd_stats(args) -> None:
    corpus = read_treebank(args.trees, normalize=not args.keep_labels)
    freqs = corpus_rule_frequencies(corpus)
    ranked = sorted(freqs.items(), key=lambda item: (-item[1], item[0].text))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("rule,count\n")
        for rule, count in ranked:
            fh.write(f"\"{rule.text}\",{count}\n")
    print(f"{len(corpus)} trees, {len(ranked)} distinct rules -> {out}")
    if not args.no_plot:
        from .plots import plot_rule_frequencies
        png = out.with_suffix(".png")
        plot_rule_frequencies([(r.text, c) for r, c in ranked], png)
        print(f"frequency chart -> {png}")


def cmd_filter(args) -> None:
    corpus = read_treebank(args.trees, normalize=not args.keep_labels)
    cfg = CorpusFilterConfig(
        allowed_heights=_parse_heights(args.heights),
        top_k_rules=args.top_rules,
        height_convention=args.height_convention,
    )
    survivors = filter_corpus(corpus, cfg)
    write_treebank(args.out, survivors)
    print(f"{len(survivors)} of {len(corpus)} trees kept -> {args.out}")


def cmd_split(args) -> None:
    corpus = read_treebank(args.trees, normalize=not args.keep_labels)
    result = split_corpus(corpus, args.val_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_treebank(out / "train.txt", result.train)
    write_treebank(out / "val.txt", result.val)
    if result.short:
        print(f"warning: coverage allowed only {len(result.val)} of "
              f"{result.requested_val_size} requested validation trees",
              file=sys.stderr)
    print(f"train {len(result.train)} / val {len(result.val)} -> {out}")


def cmd_train(args) -> None:
    train_records = load_dataset(args.data)
    val_records = load_dataset(args.val) if args.val else []
    cfg = TrainConfig(
        arch=_arch(args.arch),
        lr=args.lr,
        epochs=args.epochs,
        accumulation=args.accumulation,
        seed=args.seed,
        shuffle=not args.no_shuffle,
        pos_layer=not args.no_pos_modules,
    )
    out = Path(args.out)
    registry, history = train(train_records, val_records, None, cfg,
                              out_dir=out, threads=args.threads)
    export_history_csv(history, out / "history.csv")
    if not args.no_plot:
        from .plots import plot_history
        plot_history(history, out / "learning_curves.png")
    print(f"{len(registry.modules)} modules, "
          f"{registry.count_parameters()} parameters")
    print(f"chance MSE {history.chance_mse!r}")
    print(f"best epoch {history.best_epoch}: val MSE {history.best_val_mse!r} "
          f"(normalized {history.best_val_normalized!r})")
    print(f"history -> {out / 'history.csv'}; checkpoints -> "
          f"{out / 'best.synm'}, {out / 'final.synm'}")


def cmd_eval(args) -> None:
    records = load_dataset(args.data)
    registry = load_checkpoint(args.checkpoint)
    mean_mse, normalized = evaluate(records, registry, threads=args.threads)
    print(f"mean MSE {mean_mse!r}")
    print(f"normalized {normalized!r}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("mean_mse,normalized\n")
            fh.write(f"{mean_mse!r},{normalized!r}\n")


def cmd_probe_train(args) -> None:
    pairs = load_phrase_pairs(args.data)
    chosen = [p for p in pairs if p.category == args.category]
    cfg = TrainConfig(arch=_arch(args.arch), lr=args.lr, epochs=args.epochs,
                      accumulation=args.accumulation, seed=args.seed)
    module = probe_train(chosen, cfg.arch, cfg, rule_key=args.rule)
    registry = ModuleRegistry(dim=module.dim, arch=module.arch,
                              seed=args.seed, pos_layer=False,
                              modules={module.rule_key: module})
    save_checkpoint(registry, args.out)
    final = probe_eval(module, chosen)
    print(f"trained on {len(chosen)} {args.category} pairs; "
          f"training-set MSE {final.mean_mse(args.category)!r}")
    print(f"module checkpoint -> {args.out}")


def cmd_probe_eval(args) -> None:
    pairs = load_phrase_pairs(args.data)
    registry = load_checkpoint(args.checkpoint)
    if args.rule:
        module = registry.get(args.rule)
    elif len(registry.modules) == 1:
        module = next(iter(registry.modules.values()))
    else:
        raise UsageError(
            f"checkpoint holds {len(registry.modules)} modules; pass --rule"
        )
    report = probe_eval(module, pairs)
    export_category_csv(report, args.out)
    for category in sorted(report.rows):
        count, mean = report.rows[category]
        print(f"{category}: n={count} mean MSE {mean!r}")
    print(f"report -> {args.out}")
    if not args.no_plot:
        from .plots import plot_category_report
        png = Path(args.out).with_suffix(".png")
        plot_category_report(report, png)
        print(f"chart -> {png}")


def cmd_gradcheck(args) -> None:
    arch = _arch(args.arch)
    fan_ins = [int(p) for p in args.fan_ins.split(",")]
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for fan_in in fan_ins:
        module = init_module(f"CHECK -> {'X ' * fan_in}".strip(), fan_in, arch,
                             args.dim, args.seed)
        x_val = rng.normal(0.0, 1.0, size=(1, fan_in * args.dim))
        target = rng.normal(0.0, 1.0, size=(1, args.dim))
        params = module.parameters()
        # keep ReLU preactivations away from the kink so the central
        # difference stays on one side
        if arch is not Architecture.LINEAR:
            pre = x_val @ params[(module.rule_key, "w1")].T + params[(module.rule_key, "b1")]
            shift = np.where(np.abs(pre) < 1e-2, 0.05, 0.0)
            params[(module.rule_key, "b1")] = params[(module.rule_key, "b1")] + shift

        def build(tape, nodes, _mod=module, _x=x_val, _t=target):
            w1 = nodes[(_mod.rule_key, "w1")]
            b1 = nodes[(_mod.rule_key, "b1")]
            x = tape.constant(_x)
            h = autodiff.affine(w1, b1, x, tape)
            if _mod.arch is not Architecture.LINEAR:
                h = autodiff.relu(h, tape)
            if _mod.arch is Architecture.DOUBLE:
                h = autodiff.affine(nodes[(_mod.rule_key, "w2")],
                                    nodes[(_mod.rule_key, "b2")], h, tape)
            return autodiff.mse(h, tape.constant(_t), tape)

        err = grad_check(build, params, epsilon=args.eps)
        worst = max(worst, err)
        print(f"arch={arch.value} fan_in={fan_in} dim={args.dim}: "
              f"max relative error {err:.3e}")
    print(f"overall max relative error {worst:.3e} "
          f"({'OK' if worst < args.threshold else 'FAIL'} at {args.threshold:g})")
    if worst >= args.threshold:
        raise SynnamonError(
            f"gradient check failed: {worst:.3e} >= {args.threshold:g}"
        )


def cmd_synth(args) -> None:
    records, teacher = synth.make_dataset(
        n_trees=args.trees,
        dim=args.dim,
        teacher_arch=_arch(args.teacher_arch),
        seed=args.seed,
        teacher_scale=args.teacher_scale,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(out / "data.jsonl", records)
    result = split_records(records, args.val_fraction, args.seed)
    save_dataset(out / "train.jsonl", result.train)
    save_dataset(out / "val.jsonl", result.val)
    save_checkpoint(teacher, out / "teacher.synm")
    if result.short:
        print(f"warning: coverage allowed only {len(result.val)} of "
              f"{result.requested_val_size} requested validation records",
              file=sys.stderr)
    print(f"{len(records)} records (train {len(result.train)} / "
          f"val {len(result.val)}) -> {out}")


# ---------------------------------------------------------------------------
# argument grammar


def build_parser() -> _Parser:
    parser = _Parser(prog="synnamon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("stats", cmd_stats, "rule frequency table for a treebank")
    p.add_argument("--trees", required=True, help="treebank file, one tree per line")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--keep-labels", action="store_true",
                   help="keep functional tags / empty elements verbatim")
    p.add_argument("--no-plot", action="store_true")

    p = add("filter", cmd_filter, "height and top-k rule filtering")
    p.add_argument("--trees", required=True)
    p.add_argument("--out", required=True, help="filtered treebank path")
    p.add_argument("--heights", default="4,5")
    p.add_argument("--top-rules", type=int, default=300)
    p.add_argument("--height-convention", choices=("nodes", "edges"), default="nodes")
    p.add_argument("--keep-labels", action="store_true")

    p = add("split", cmd_split, "coverage-preserving train/val split")
    p.add_argument("--trees", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--val-fraction", type=float, default=0.163)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-labels", action="store_true")

    p = add("train", cmd_train, "distill teacher embeddings into a module net")
    p.add_argument("--data", required=True, help="training JSONL")
    p.add_argument("--val", help="validation JSONL")
    p.add_argument("--arch", default="linear")
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--accumulation", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--no-pos-modules", action="store_true",
                   help="compose directly on word embeddings")
    p.add_argument("--no-plot", action="store_true")

    p = add("eval", cmd_eval, "score a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="optional metrics CSV")
    p.add_argument("--threads", type=int, default=1)

    p = add("probe-train", cmd_probe_train, "train one module on phrase pairs")
    p.add_argument("--data", required=True, help="probe JSONL")
    p.add_argument("--category", default="determiner")
    p.add_argument("--arch", default="linear")
    p.add_argument("--rule", default=DEFAULT_PROBE_RULE)
    p.add_argument("--lr", type=float, default=5e-5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--accumulation", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="module checkpoint path")

    p = add("probe-eval", cmd_probe_eval, "per-category MSE of a probe module")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rule", help="module key when several are stored")
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--no-plot", action="store_true")

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient check")
    p.add_argument("--arch", default="linear")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--fan-ins", default="1,2,3")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--threshold", type=float, default=1e-5)

    p = add("synth", cmd_synth, "synthetic teacher dataset for benchmarks")
    p.add_argument("--trees", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--teacher-arch", default="linear")
    p.add_argument("--teacher-scale", type=float, default=1.0)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    return parser


_INPUT_FLAGS = ("trees", "data", "val", "checkpoint")


def _manifest_path(args) -> Path | None:
    out = getattr(args, "out", None)
    if out is None:
        return None
    out = Path(out)
    # directory-producing commands keep the manifest inside the directory
    if args.subcommand in ("split", "train", "synth"):
        return out / "manifest.json"
    return out.with_name(out.name + ".manifest.json")


def _start_manifest(args) -> RunManifest:
    flags = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    digests = {}
    for flag in _INPUT_FLAGS:
        value = getattr(args, flag, None)
        if value and Path(str(value)).is_file():
            digests[str(value)] = _sha256(value)
    return RunManifest(
        subcommand=args.subcommand,
        version=__version__,
        flags=flags,
        seeds={"seed": getattr(args, "seed", None)},
        input_digests=digests,
        started_at=_utc_now(),
    )


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SYNNAMON_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1

    manifest = _start_manifest(args)
    manifest_path = _manifest_path(args)
    try:
        args.func(args)
    except UsageError as exc:
        manifest.status, manifest.error = "error", str(exc)
        print(exc, file=sys.stderr)
        return 1
    except InputError as exc:
        manifest.status, manifest.error = "error", str(exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SynnamonError as exc:
        manifest.status, manifest.error = "error", str(exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        manifest.status, manifest.error = "error", str(exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    else:
        manifest.status = "ok"
        return 0
    finally:
        manifest.finished_at = _utc_now()
        if manifest_path is not None:
            try:
                manifest.write(manifest_path)
            except OSError as exc:  # manifest failure must not mask results
                log.warning("could not write manifest %s: %s", manifest_path, exc)


if __name__ == "__main__":
    sys.exit(main())
