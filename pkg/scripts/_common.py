"""Shared driver for the experiment scripts: guided vs random campaigns written to disk."""

import argparse
from dataclasses import asdict, replace
from pathlib import Path

from nnfuzz import checkpoint
from nnfuzz.campaign import RunSpec, build_report, run_campaign
from nnfuzz.experiments import train_digits_model


def parser(description: str, runs: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", required=True, help="empty or missing directory for checkpoint and campaigns")
    p.add_argument("--runs", type=int, default=runs)
    p.add_argument("--checkpoint", help="reuse a trained model instead of training one")
    p.add_argument("--iterations", type=int, help="override the default iteration budget")
    p.add_argument("--random-iterations", type=int, help="iteration budget for the random baseline")
    return p


def load_or_train(args, train):
    """``train()`` returns ``(model, config)``; the config is stored in the checkpoint."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.ckpt"
    if args.checkpoint:
        model, config = checkpoint.load(args.checkpoint)
    else:
        print("training ...", flush=True)
        model, config = train()
    checkpoint.save(path, model, config)
    return model, path


def train_digits(recipe, data):
    res = train_digits_model(recipe, data)
    print(f"train accuracy {res.train_accuracy:.4f}, test accuracy {res.val_accuracy:.4f}")
    return res.model, {**asdict(recipe), "train_accuracy": res.train_accuracy, "test_accuracy": res.val_accuracy}


def compare(experiment: str, model, ckpt, config, seeds_for_run, out, runs: int,
            random_iterations: int | None = None, **spec_kw):
    """Run ``runs`` guided and ``runs`` random campaigns; print both reports."""
    out = Path(out)
    for mode in ("guided", "random"):
        for r in range(runs):
            cfg = replace(config, seed=r, mode=mode)
            if mode == "random" and random_iterations:
                cfg = replace(cfg, iterations=random_iterations)
            spec = RunSpec(experiment=experiment, checkpoint=str(ckpt), fuzz=cfg,
                           train_config=checkpoint.load(ckpt)[1], **spec_kw)
            summary = run_campaign(spec, seeds_for_run(r), out / mode / f"run_{r:03d}", model=model)
            print(f"{mode} run {r}: {summary['testcases']} test cases after {summary['iterations']} iterations, "
                  f"corpus {summary['corpus_size']}", flush=True)
    for mode in ("guided", "random"):
        print(f"\n== {mode} ==")
        print(build_report(out / mode).text())
