"""``nnfuzz`` command line: data, train, seeds, fuzz, baseline, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .campaign import (RunSpec, build_report, merged_trace_rows, read_seed_dir, replay, resume_campaign, run_campaign,
                       run_dirs, write_seed_dir)
from .coverage import MODES as COVERAGE_MODES
from .engine import CHOOSERS, BATCH_PARENTS, EvaluationError
from .experiments import (DEFAULTS, EXPERIMENTS, NAN_RECIPE, QUANT_RECIPE, TEXT_CORPUS_SIZE, TEXT_RECIPE,
                          MlpRecipe, image_seeds)
from .models.charrnn import train_char_rnn
from .models.data import load_digits_split, make_text_corpus
from .models.mlp import train_mlp
from .models.targets import COVERAGE_LAYERS
from .mutation import MutationConfig, TextInput
from .numeric import ParameterError

log = logging.getLogger("nnfuzz")

RECIPES = {"nan": NAN_RECIPE, "quant": QUANT_RECIPE}


# data / train / seeds ----------------------------------------------------

def cmd_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    xtr, ytr, xte, yte = load_digits_split(args.seed)
    np.savez(out / "digits.npz", x_train=xtr, y_train=ytr, x_test=xte, y_test=yte)
    (out / "corpus.txt").write_text(make_text_corpus(args.text_size, args.seed), encoding="utf-8")
    print(f"wrote {out / 'digits.npz'} ({len(xtr)} train / {len(xte)} test) and {out / 'corpus.txt'}")
    return 0


def load_image_dataset(path):
    """``(x_train, y_train, x_test, y_test)`` from an ``.npz``; raises on anything malformed."""
    try:
        with np.load(path, allow_pickle=False) as f:
            parts = [np.asarray(f[k]) for k in ("x_train", "y_train", "x_test", "y_test")]
    except (OSError, ValueError, KeyError) as e:
        raise ParameterError(f"{path}: not a usable image dataset ({e})") from None
    xtr, ytr, xte, yte = parts
    for x, y in ((xtr, ytr), (xte, yte)):
        if x.ndim != 2 or y.ndim != 1 or len(x) != len(y) or len(x) == 0:
            raise ParameterError(f"{path}: expected (n, d) images with n labels")
        if not np.all(np.isfinite(x)) or x.min() < 0 or x.max() > 1:
            raise ParameterError(f"{path}: pixels must be finite and in [0, 1]")
        if y.dtype.kind not in "iu" or y.min() < 0:
            raise ParameterError(f"{path}: labels must be non-negative integers")
    if xtr.shape[1] != xte.shape[1]:
        raise ParameterError(f"{path}: train and test images differ in size")
    return xtr.astype(np.float32), ytr.astype(np.int64), xte.astype(np.float32), yte.astype(np.int64)


def load_text_dataset(path) -> str:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ParameterError(f"{path}: not a usable text corpus ({e})") from None
    if len(text) < 64:
        raise ParameterError(f"{path}: corpus too short to train on")
    return text


def cmd_train(args) -> int:
    if args.experiment == "text":
        text = load_text_dataset(args.data)
        cfg = TEXT_RECIPE
        over = {k: v for k, v in (("steps", args.steps), ("lr", args.lr), ("seed", args.seed)) if v is not None}
        if args.hidden:
            over["hidden_size"] = args.hidden[0]
            over["num_layers"] = len(args.hidden)
        cfg = replace(cfg, **over)
        result = train_char_rnn(text, cfg)
        info = {"experiment": "text", "recipe": vars_of(cfg), "final_loss": result.losses[-1] if result.losses else None}
        checkpoint.save(args.out, result.model, info)
        print(f"trained char model: final loss {info['final_loss']}")
        return 0
    xtr, ytr, xte, yte = load_image_dataset(args.data)
    recipe: MlpRecipe = RECIPES[args.experiment]
    over = {k: v for k, v in (("steps", args.steps), ("lr", args.lr), ("seed", args.seed), ("loss", args.loss),
                               ("output_bias", args.output_bias)) if v is not None}
    if args.hidden:
        over["hidden"] = tuple(args.hidden)
    recipe = replace(recipe, **over)
    result = train_mlp(xtr, ytr, list(recipe.hidden), recipe.steps, recipe.batch, recipe.lr, recipe.seed,
                       recipe.loss, int(max(ytr.max(), yte.max())) + 1, xte, yte, (0.0, 1.0), recipe.output_bias)
    info = {"experiment": args.experiment, "recipe": vars_of(recipe),
            "train_accuracy": result.train_accuracy, "test_accuracy": result.val_accuracy}
    checkpoint.save(args.out, result.model, info)
    print(f"trained MLP: train accuracy {result.train_accuracy:.4f}, test accuracy {result.val_accuracy:.4f}")
    return 0


def vars_of(dc) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in vars(dc).items()}


def cmd_seeds(args) -> int:
    n = args.n if args.n is not None else DEFAULTS[args.experiment].num_seeds
    out = Path(args.out)
    if args.experiment == "text":
        text = load_text_dataset(args.data)
        sentences = [s.strip() + ". " for s in text.replace("\n", " ").split(".") if s.strip()][:n]
        out.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(sentences):
            (out / f"{i:06d}.txt").write_bytes(s.encode("utf-8"))
        print(f"wrote {len(sentences)} text seeds to {out}")
        return 0
    _, _, xte, yte = load_image_dataset(args.data)
    write_seed_dir(out, image_seeds(xte, yte, n, args.seed))
    print(f"wrote {n} image seeds to {out}")
    return 0


# fuzz / baseline ---------------------------------------------------------

def build_spec(args, mode: str) -> RunSpec:
    d = DEFAULTS[args.experiment]
    pick = lambda v, default: default if v is None else v  # noqa: E731
    radius = d.radius if args.radius is None else (None if args.radius <= 0 else args.radius)
    fuzz_cfg = d.fuzz_config(
        iterations=pick(args.iterations, d.iterations),
        batch_size=pick(args.batch_size, d.batch_size),
        mutation=MutationConfig(sigma=pick(args.sigma, d.sigma), radius=radius),
        coverage_mode=args.coverage_mode,
        threshold=None if args.threshold is not None and args.threshold < 0 else pick(args.threshold, d.threshold),
        chooser=args.chooser,
        batch_parents=args.batch_parents,
        mode=mode,
        seed=args.seed,
        stop_on_first=pick(args.stop_on_first, d.stop_on_first),
        standardize_coverage=args.standardize_coverage,
    )
    blacklist = None
    if args.blacklist:
        blacklist = [w.strip() for w in Path(args.blacklist).read_text(encoding="utf-8").splitlines() if w.strip()]
    return RunSpec(args.experiment, str(Path(args.checkpoint).resolve()), fuzz_cfg, args.coverage_layer,
                   args.sample_length, blacklist, args.max_repeats)


def sub_runs(spec: RunSpec, seeds: list, repeat: int, per_seed: bool):
    """``(relative dir, spec, seeds)`` for every sub-run; campaign seeds are base + index."""
    base = spec.fuzz.seed
    groups = [(f"seed_{j:03d}", [s]) for j, s in enumerate(seeds)] if per_seed else [("", seeds)]
    out = []
    for i in range(repeat):
        for j, (name, group) in enumerate(groups):
            offset = i * len(groups) + j if per_seed else i
            parts = [p for p in ((f"run_{i:03d}" if repeat > 1 else ""), name) if p]
            out.append(("/".join(parts), replace(spec, fuzz=replace(spec.fuzz, seed=base + offset)), group))
    return out


def cmd_fuzz(args, mode: str | None = None) -> int:
    if args.resume:
        if args.iterations is None:
            raise ParameterError("--resume needs -N/--iterations (the new total)")
        for run in run_dirs(args.resume):
            summary = resume_campaign(run, args.iterations)
            print(f"{run}: {summary['iterations']} iterations, corpus {summary['corpus_size']}, "
                  f"{summary['testcases']} test cases")
        return 0
    if args.out is None:
        raise ParameterError("--out is required")
    out = Path(args.out)
    if args.config:
        summary = replay(args.config, out)
        print(json.dumps(summary, sort_keys=True))
        return 0
    for name in ("experiment", "checkpoint", "seeds"):
        if getattr(args, name) is None:
            raise ParameterError(f"--{name} is required unless --config is given")
    spec = build_spec(args, mode or args.mode)
    model, train_config = checkpoint.load(spec.checkpoint)
    spec.train_config = train_config
    seeds = read_seed_dir(args.seeds, getattr(model, "vocabulary", None))
    if args.experiment == "text" and not all(isinstance(s, TextInput) for s in seeds):
        raise ParameterError("the text experiment needs .txt seeds")
    runs = sub_runs(spec, seeds, args.repeat, args.per_seed)
    if len(runs) > 1:
        out.mkdir(parents=True, exist_ok=True)
        (out / "campaign.json").write_text(json.dumps(
            {"runs": [r[0] for r in runs], "repeat": args.repeat, "per_seed": args.per_seed,
             "base_seed": spec.fuzz.seed}, indent=2, sort_keys=True) + "\n")
    for name, sub_spec, group in runs:
        try:
            summary = run_campaign(sub_spec, group, out / name if name else out, model)
        except EvaluationError as e:
            print(f"error: {e}; failing batch saved under {out / name / 'crash'}", file=sys.stderr)
            return 3
        print(f"{name or out}: {summary['iterations']} iterations, corpus {summary['corpus_size']}, "
              f"{summary['testcases']} test cases")
    if len(runs) > 1:
        print(build_report(out).text())
    return 0


def cmd_report(args) -> int:
    report = build_report(args.campaign)
    print(report.text())
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("run", "iteration", "corpus_size", "testcases"))
            w.writerows(merged_trace_rows(args.campaign))
    return 0 if report.monotone else 2


# parser ------------------------------------------------------------------

def _fuzz_flags(p: argparse.ArgumentParser, with_mode: bool) -> None:
    p.add_argument("--config", help="re-run a campaign from its config.json snapshot")
    p.add_argument("--experiment", choices=EXPERIMENTS)
    p.add_argument("--checkpoint")
    p.add_argument("--seeds", help="directory of seed files")
    p.add_argument("--out", help="campaign directory (must be new or empty)")
    p.add_argument("--resume", help="extend every run under this directory to -N iterations")
    p.add_argument("-N", "--iterations", type=int, help="number of iterations (batches)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--sigma", type=float, help="mutation noise standard deviation")
    p.add_argument("--radius", type=float, help="L-inf ball radius around the seed ancestor; <= 0 disables")
    p.add_argument("-L", "--threshold", type=float,
                   help="coverage distance threshold; negative calibrates from the seeds")
    p.add_argument("--coverage-layer", choices=COVERAGE_LAYERS)
    p.add_argument("--coverage-mode", choices=COVERAGE_MODES, default="approximate")
    p.add_argument("--chooser", choices=CHOOSERS, default="recency")
    p.add_argument("--batch-parents", choices=BATCH_PARENTS, default="iid")
    if with_mode:
        p.add_argument("--mode", choices=("guided", "random"), default="guided")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--blacklist", help="text file, one word per line")
    p.add_argument("--max-repeats", type=int, default=2)
    p.add_argument("--sample-length", type=int, default=40)
    p.add_argument("--stop-on-first", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--standardize-coverage", action="store_true",
                   help="z-score coverage vectors with the seeds' statistics before the distance test")
    p.add_argument("--repeat", type=int, default=1, help="independent sub-runs with seeds seed+i")
    p.add_argument("--per-seed", action="store_true", help="one sub-run per seed input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnfuzz", description="Coverage-guided fuzzing of small neural networks.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("data", help="write the desk-scale datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--text-size", type=int, default=TEXT_CORPUS_SIZE)
    p.set_defaults(func=cmd_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p.add_argument("--data", required=True, help=".npz image dataset or .txt corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--loss", choices=("safe", "unsafe"))
    p.add_argument("--output-bias", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("seeds", help="export a seed corpus")
    p.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_seeds)

    p = sub.add_parser("fuzz", help="run a fuzzing campaign")
    _fuzz_flags(p, with_mode=True)
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("baseline", help="random-search baseline (fuzz --mode random)")
    _fuzz_flags(p, with_mode=False)
    p.set_defaults(func=lambda a: cmd_fuzz(a, "random"))

    p = sub.add_parser("report", help="summarise a campaign directory")
    p.add_argument("campaign")
    p.add_argument("--csv", help="write the merged trace of every run here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
