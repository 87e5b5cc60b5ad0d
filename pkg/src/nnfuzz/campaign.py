"""Campaign directories: persisted seeds, corpus, test cases, trace and reports.

A single run directory looks like::

    config.json      everything needed to re-run (experiment, checkpoint, fuzz config)
    seeds/           the seed corpus, one file per input
    corpus/          every corpus record: payload file + NNNNNN.json lineage sidecar
    testcases/       payload file + NNNNNN.json (iteration, lineage, details, metadata)
    trace.csv        iteration,corpus_size,testcases
    coverage/        stored coverage vectors and index parameters (guided runs)
    run.json         wall time and summary counts; the only non-deterministic file
    crash/           present only if the model raised during evaluation

Image payloads are ``.npy`` float32 vectors with range and label in the
sidecar; text payloads are UTF-8 ``.txt`` files. A multi-run directory holds
one such run per subdirectory plus ``campaign.json``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .coverage import CoverageIndex, ForestParams
from .engine import EvaluationError, FuzzConfig, TestCase, TraceRow, fuzz, run_iterations, start_campaign
from .experiments import DEFAULTS, make_mutator, make_objective, make_target
from .models.targets import Metadata
from .mutation import ImageInput, MutationConfig, TextInput
from .numeric import ParameterError

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "corpus_size", "testcases")


# payload files -----------------------------------------------------------

def write_payload(directory: Path, stem: str, payload, vocabulary: str | None = None, extra: dict | None = None):
    directory.mkdir(parents=True, exist_ok=True)
    side = dict(extra or {})
    if isinstance(payload, ImageInput):
        np.save(directory / f"{stem}.npy", np.asarray(payload.pixels, dtype="<f4"))
        side.update(kind="image", lo=payload.lo, hi=payload.hi, label=payload.label)
    elif isinstance(payload, TextInput):
        if vocabulary is None:
            raise ParameterError("writing text payloads needs the model vocabulary")
        text = "".join(vocabulary[c] for c in payload.chars)
        (directory / f"{stem}.txt").write_bytes(text.encode("utf-8"))
        side.update(kind="text")
    else:
        raise TypeError(f"cannot persist {type(payload).__name__}")
    (directory / f"{stem}.json").write_text(json.dumps(side, sort_keys=True) + "\n")


def read_payload(path: Path, vocabulary: str | None = None):
    """Read an ``.npy`` or ``.txt`` payload; the ``.json`` sidecar is optional for seeds."""
    path = Path(path)
    side_path = path.with_suffix(".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    if path.suffix == ".npy":
        px = np.load(path, allow_pickle=False)
        if px.ndim != 1 or px.dtype.kind != "f":
            raise ParameterError(f"{path}: expected a flat float array, got {px.dtype} {px.shape}")
        return ImageInput(px, side.get("lo", 0.0), side.get("hi", 1.0), side.get("label"))
    if path.suffix == ".txt":
        if vocabulary is None:
            raise ParameterError("reading text payloads needs the model vocabulary")
        text = path.read_bytes().decode("utf-8")
        lookup = {c: i for i, c in enumerate(vocabulary)}
        missing = sorted(set(text) - set(lookup))
        if missing:
            raise ParameterError(f"{path}: characters {missing!r} are not in the model vocabulary")
        return TextInput(tuple(lookup[c] for c in text), len(vocabulary))
    raise ParameterError(f"{path}: unknown payload type")


def payload_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ParameterError(f"{directory} is not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix in (".npy", ".txt"))


def read_seed_dir(directory, vocabulary: str | None = None) -> list:
    files = payload_files(directory)
    if not files:
        raise ParameterError(f"no seed files in {directory}")
    return [read_payload(p, vocabulary) for p in files]


def write_seed_dir(directory, seeds, vocabulary: str | None = None) -> None:
    for i, s in enumerate(seeds):
        write_payload(Path(directory), f"{i:06d}", s, vocabulary)


# configs -----------------------------------------------------------------

def config_to_dict(cfg: FuzzConfig) -> dict:
    d = asdict(cfg)
    if d["mutation"]["clip"] is not None:
        d["mutation"]["clip"] = list(d["mutation"]["clip"])
    return d


def config_from_dict(d: dict) -> FuzzConfig:
    d = dict(d)
    mut = dict(d.pop("mutation"))
    if mut.get("clip") is not None:
        mut["clip"] = tuple(mut["clip"])
    return FuzzConfig(mutation=MutationConfig(**mut), forest=ForestParams(**d.pop("forest")), **d)


@dataclass
class RunSpec:
    """One campaign: what to fuzz, with which seeds, under which config."""

    experiment: str
    checkpoint: str
    fuzz: FuzzConfig
    coverage_layer: str | None = None
    sample_length: int = 40
    blacklist: list[str] | None = None
    max_repeats: int = 2
    train_config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "checkpoint": str(self.checkpoint),
            "fuzz": config_to_dict(self.fuzz),
            "coverage_layer": self.coverage_layer or DEFAULTS[self.experiment].coverage_layer,
            "sample_length": self.sample_length,
            "blacklist": None if self.blacklist is None else sorted(self.blacklist),
            "max_repeats": self.max_repeats,
            "train_config": self.train_config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        return cls(d["experiment"], d["checkpoint"], config_from_dict(d["fuzz"]), d.get("coverage_layer"),
                   d.get("sample_length", 40), d.get("blacklist"), d.get("max_repeats", 2),
                   d.get("train_config", {}))


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# running -----------------------------------------------------------------

def run_campaign(spec: RunSpec, seeds: list, out, model=None) -> dict:
    """Fuzz and persist into ``out``; returns the ``run.json`` summary."""
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        raise ParameterError(f"{out} already exists and is not empty")
    if model is None:
        model, train_config = checkpoint.load(spec.checkpoint)
        spec.train_config = spec.train_config or train_config
    vocabulary = getattr(model, "vocabulary", None)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = spec.to_dict()
    snapshot["checkpoint_sha256"] = _sha256(spec.checkpoint) if Path(spec.checkpoint).exists() else None
    (out / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    write_seed_dir(out / "seeds", seeds, vocabulary)

    target = make_target(spec.experiment, model, spec.coverage_layer, spec.sample_length)
    objective = make_objective(spec.experiment, spec.blacklist, spec.max_repeats)
    mutator = make_mutator(spec.experiment, spec.fuzz)
    start = time.perf_counter()
    try:
        state = fuzz(spec.fuzz, target, seeds, mutator, objective)
    except EvaluationError as e:
        crash = out / "crash"
        for i, p in enumerate(e.inputs):
            write_payload(crash, f"{i:06d}", p, vocabulary)
        (crash / "error.log").write_text(f"iteration {e.iteration}: {e.__cause__!r}\n")
        raise
    wall = time.perf_counter() - start
    write_state(out, state, vocabulary)
    summary = _summary(state, wall)
    (out / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("%s: %d iterations, corpus %d, %d test cases, %.1fs", out, summary["iterations"],
             summary["corpus_size"], summary["testcases"], wall)
    return summary


def write_state(out: Path, state, vocabulary: str | None = None, corpus_from: int = 0, tests_from: int = 0) -> None:
    """Write corpus records and test cases from the given offsets on; rewrite trace and coverage."""
    for rec in state.corpus.records[corpus_from:]:
        write_payload(out / "corpus", f"{rec.id:06d}", rec.payload, vocabulary, {
            "id": rec.id, "parent_id": rec.parent_id, "seed_ancestor_id": rec.seed_ancestor_id, "t_k": rec.t_k,
        })
    (out / "testcases").mkdir(exist_ok=True)
    for i, tc in enumerate(state.test_cases[tests_from:], start=tests_from):
        meta = tc.metadata.to_json() if isinstance(tc.metadata, Metadata) else {}
        write_payload(out / "testcases", f"{i:06d}", tc.payload, vocabulary, {
            "objective": tc.objective, "iteration": tc.iteration, "parent_id": tc.parent_id,
            "seed_ancestor_id": tc.seed_ancestor_id, "details": tc.details, "metadata": meta,
        })
    with open(out / "trace.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in state.trace:
            w.writerow((row.iteration, row.corpus_size, row.testcases))
    if state.index is not None:
        state.index.save(out / "coverage")


def resume_campaign(run_dir, iterations: int, model=None) -> dict:
    """Extend a finished run to ``iterations`` total, continuing from its persisted state.

    The result matches a fresh run with the larger budget, apart from ``run.json``.
    """
    run_dir = Path(run_dir)
    spec = RunSpec.from_dict(json.loads((run_dir / "config.json").read_text()))
    if iterations < spec.fuzz.iterations:
        raise ParameterError(f"run already has a budget of {spec.fuzz.iterations} iterations")
    if model is None:
        model, _ = checkpoint.load(spec.checkpoint)
    vocabulary = getattr(model, "vocabulary", None)
    seeds = read_seed_dir(run_dir / "seeds", vocabulary)
    spec.fuzz = replace(spec.fuzz, iterations=iterations)
    target = make_target(spec.experiment, model, spec.coverage_layer, spec.sample_length)
    objective = make_objective(spec.experiment, spec.blacklist, spec.max_repeats)
    state = start_campaign(spec.fuzz, target, seeds)
    for p in payload_files(run_dir / "corpus")[len(seeds):]:
        side = json.loads(p.with_suffix(".json").read_text())
        state.corpus.add(read_payload(p, vocabulary), state.corpus[side["parent_id"]], side["t_k"])
    if state.index is not None:
        state.index = CoverageIndex.load(run_dir / "coverage")
    state.trace = [TraceRow(*row) for row in read_trace(run_dir / "trace.csv")]
    for p in payload_files(run_dir / "testcases"):
        side = json.loads(p.with_suffix(".json").read_text())
        state.test_cases.append(TestCase(read_payload(p, vocabulary), side["metadata"], side["objective"],
                                         side["iteration"], side["parent_id"], side["seed_ancestor_id"],
                                         side["details"]))
    previous = json.loads((run_dir / "run.json").read_text())
    state.next_iteration = len(state.trace)
    state.stopped = previous["stopped_early"]
    n_corpus, n_tests = len(state.corpus), len(state.test_cases)
    start = time.perf_counter()
    run_iterations(state, target, make_mutator(spec.experiment, spec.fuzz), objective)
    wall = time.perf_counter() - start
    write_state(run_dir, state, vocabulary, n_corpus, n_tests)
    snapshot = json.loads((run_dir / "config.json").read_text())
    snapshot["fuzz"]["iterations"] = iterations
    (run_dir / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    summary = _summary(state, previous["wall_time_s"] + wall)
    (run_dir / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _summary(state, wall: float) -> dict:
    return {
        "iterations": len(state.trace),
        "corpus_size": len(state.corpus),
        "testcases": len(state.test_cases),
        "threshold": state.threshold,
        "stopped_early": state.stopped,
        "wall_time_s": wall,
    }


def replay(config_path, out, seeds_dir=None, model=None) -> dict:
    """Re-run the campaign described by a ``config.json`` snapshot into ``out``."""
    config_path = Path(config_path)
    d = json.loads(config_path.read_text())
    spec = RunSpec.from_dict(d)
    if model is None:
        model, _ = checkpoint.load(spec.checkpoint)
    seeds = read_seed_dir(seeds_dir or config_path.parent / "seeds", getattr(model, "vocabulary", None))
    return run_campaign(spec, seeds, out, model)


# reporting ---------------------------------------------------------------

def read_trace(path) -> list[tuple[int, int, int]]:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r, None)
        if header is None:
            return []
        if tuple(header) != TRACE_COLUMNS:
            raise ParameterError(f"{path}: unexpected trace header {header}")
        return [tuple(int(v) for v in row) for row in r]


def run_dirs(root) -> list[Path]:
    """``root`` itself if it is a run, else every run directory below it."""
    root = Path(root)
    if (root / "config.json").exists():
        return [root]
    return sorted(p.parent for p in root.rglob("config.json"))


@dataclass
class RunReport:
    name: str
    iterations: int
    corpus_size: int
    testcases: int
    wall_time_s: float | None
    blacklist_words: list[str]
    monotone: bool
    model_accuracy: float | None = None


def report_run(run: Path, name: str | None = None) -> RunReport:
    trace = read_trace(run / "trace.csv") if (run / "trace.csv").exists() else []
    sizes = [r[1] for r in trace]
    monotone = all(a <= b for a, b in zip(sizes, sizes[1:]))
    tc_dir = run / "testcases"
    sidecars = sorted(tc_dir.glob("*.json")) if tc_dir.is_dir() else []
    words: set[str] = set()
    for p in sidecars:
        words.update(json.loads(p.read_text()).get("details", {}).get("blacklisted", []))
    wall = None
    if (run / "run.json").exists():
        wall = json.loads((run / "run.json").read_text()).get("wall_time_s")
    corpus = len(payload_files(run / "corpus")) if (run / "corpus").is_dir() else 0
    train = json.loads((run / "config.json").read_text()).get("train_config", {})
    return RunReport(name or run.name, len(trace), corpus, len(sidecars), wall, sorted(words), monotone,
                     train.get("test_accuracy"))


@dataclass
class CampaignReport:
    runs: list[RunReport]

    @property
    def success_rate(self) -> float:
        return sum(r.testcases > 0 for r in self.runs) / len(self.runs) if self.runs else 0.0

    @property
    def successes(self) -> int:
        return sum(r.testcases > 0 for r in self.runs)

    @property
    def blacklist_words(self) -> list[str]:
        return sorted(set().union(*(r.blacklist_words for r in self.runs))) if self.runs else []

    @property
    def monotone(self) -> bool:
        return all(r.monotone for r in self.runs)

    def text(self) -> str:
        lines = ["run\titerations\tcorpus\ttestcases\twall_s"]
        for r in self.runs:
            wall = "-" if r.wall_time_s is None else f"{r.wall_time_s:.1f}"
            lines.append(f"{r.name}\t{r.iterations}\t{r.corpus_size}\t{r.testcases}\t{wall}")
        lines.append(f"runs: {len(self.runs)}")
        accs = sorted({r.model_accuracy for r in self.runs if r.model_accuracy is not None})
        if accs:
            lines.append("model test accuracy: " + ", ".join(f"{a:.4f}" for a in accs))
        lines.append(f"success rate: {self.successes}/{len(self.runs)} ({100 * self.success_rate:.0f}%)")
        if self.blacklist_words:
            lines.append(f"distinct blacklist words: {len(self.blacklist_words)} ({', '.join(self.blacklist_words)})")
        lines.append("corpus size non-decreasing: " + ("yes" if self.monotone else "NO"))
        return "\n".join(lines)


def build_report(root) -> CampaignReport:
    root = Path(root)
    return CampaignReport([report_run(d, str(d.relative_to(root)) if d != root else d.name) for d in run_dirs(root)])


def merged_trace_rows(root) -> list[tuple]:
    root = Path(root)
    rows = []
    for d in run_dirs(root):
        name = str(d.relative_to(root)) if d != root else d.name
        if (d / "trace.csv").exists():
            rows += [(name, *r) for r in read_trace(d / "trace.csv")]
    return rows
