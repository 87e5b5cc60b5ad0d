"""The fuzzing loop: choose parents, mutate, evaluate, keep novel inputs, collect test cases."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .coverage import CoverageIndex, ForestParams, calibrate_threshold
from .mutation import MutationConfig
from .numeric import ParameterError, make_rng

log = logging.getLogger(__name__)

CHOOSERS = ("recency", "uniform")
MODES = ("guided", "random")
BATCH_PARENTS = ("iid", "single")


class StateError(RuntimeError):
    pass


class EvaluationError(RuntimeError):
    """The model raised while evaluating a batch; ``inputs`` holds that batch."""

    def __init__(self, iteration: int, inputs: list, cause: BaseException):
        super().__init__(f"model evaluation failed at iteration {iteration}: {cause!r}")
        self.iteration = iteration
        self.inputs = inputs


@dataclass(frozen=True)
class InputRecord:
    id: int
    payload: Any
    seed_ancestor_id: int
    parent_id: int | None
    t_k: int

    @property
    def is_seed(self) -> bool:
        return self.parent_id is None


class Corpus:
    """Append-only list of records; duplicate payloads are allowed."""

    def __init__(self):
        self.records: list[InputRecord] = []
        self._times = np.zeros(16, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> InputRecord:
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    @property
    def times(self) -> np.ndarray:
        return self._times[: len(self.records)]

    def _append(self, rec: InputRecord) -> InputRecord:
        n = len(self.records)
        if n == len(self._times):
            self._times = np.concatenate([self._times, np.zeros(n)])
        self._times[n] = rec.t_k
        self.records.append(rec)
        return rec

    def add_seed(self, payload) -> InputRecord:
        i = len(self.records)
        return self._append(InputRecord(i, payload, i, None, 0))

    def add(self, payload, parent: InputRecord, t_k: int) -> InputRecord:
        if self.records and t_k < self.records[-1].t_k:
            raise StateError("insertion times must be non-decreasing")
        return self._append(InputRecord(len(self.records), payload, parent.seed_ancestor_id, parent.id, t_k))


@dataclass
class TestCase:
    payload: Any
    metadata: Any
    objective: str
    iteration: int
    parent_id: int
    seed_ancestor_id: int
    details: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    corpus_size: int
    testcases: int


@dataclass(frozen=True)
class FuzzConfig:
    iterations: int = 1000
    batch_size: int = 10
    mutation: MutationConfig = field(default_factory=MutationConfig)
    coverage_mode: str = "approximate"
    threshold: float | None = None  # None: calibrate from the seed coverage
    threshold_percentile: float = 5.0
    standardize_coverage: bool = False  # z-score coverage with the seeds' per-dimension statistics
    forest: ForestParams = field(default_factory=ForestParams)
    chooser: str = "recency"
    batch_parents: str = "iid"
    mode: str = "guided"
    seed: int = 0
    stop_on_first: bool = False

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ParameterError("iterations and batch_size must be at least 1")
        if self.chooser not in CHOOSERS:
            raise ParameterError(f"unknown chooser {self.chooser!r}")
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.batch_parents not in BATCH_PARENTS:
            raise ParameterError(f"unknown batch_parents {self.batch_parents!r}")


def chooser_probabilities(times: np.ndarray, t: float, mode: str = "recency") -> np.ndarray:
    """Selection probability of each corpus element at time ``t``.

    Recency mode weights element ``k`` by ``exp(t_k - t)``; if every weight
    underflows to zero the distribution falls back to uniform.
    """
    n = len(times)
    if n == 0:
        raise StateError("cannot sample from an empty corpus")
    if mode == "uniform":
        return np.full(n, 1.0 / n)
    if mode != "recency":
        raise ParameterError(f"unknown chooser {mode!r}")
    w = np.exp(np.asarray(times, dtype=np.float64) - t)
    total = w.sum()
    if total == 0.0:
        return np.full(n, 1.0 / n)
    return w / total


def sample_parents(corpus: Corpus, t: float, rng, mode: str = "recency", size: int = 1) -> list[InputRecord]:
    p = chooser_probabilities(corpus.times, t, mode)
    cdf = np.cumsum(p)
    u = rng.random(size) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(p) - 1)
    return [corpus[int(i)] for i in idx]


def sample_parent(corpus: Corpus, t: float, rng, mode: str = "recency") -> InputRecord:
    return sample_parents(corpus, t, rng, mode, 1)[0]


def admit_if_new(corpus: Corpus, index: CoverageIndex, payload, parent: InputRecord, coverage, t: int):
    """Add ``payload`` to the corpus when its coverage is new; returns the record or None.

    There is no deduplication by payload: an input whose coverage differs between
    evaluations enters once per novel evaluation, each time with its own id.
    """
    new, _ = index.is_new_coverage(coverage)
    if not new:
        return None
    index.add_coverage(coverage)
    return corpus.add(payload, parent, t)


@dataclass
class FuzzState:
    config: FuzzConfig
    corpus: Corpus
    seeds: list
    index: CoverageIndex | None
    test_cases: list[TestCase] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)
    next_iteration: int = 0
    stopped: bool = False
    coverage_shift: np.ndarray | None = None
    coverage_scale: np.ndarray | None = None

    def coverage_view(self, cov) -> np.ndarray:
        """Coverage as the index sees it (standardised when configured)."""
        cov = np.asarray(cov)
        if self.coverage_shift is None:
            return cov
        return (cov - self.coverage_shift) / self.coverage_scale

    @property
    def threshold(self) -> float | None:
        return None if self.index is None else self.index.threshold


FuzzResult = FuzzState


def start_campaign(config: FuzzConfig, model, seed_corpus) -> FuzzState:
    """Validate and register the seeds (t_k = 0) before the first iteration."""
    seeds = list(seed_corpus)
    if not seeds:
        raise ParameterError("the seed corpus is empty")
    for s in seeds:
        model.validate(s)
    corpus = Corpus()
    for s in seeds:
        corpus.add_seed(s)
    index = None
    shift = scale = None
    if config.mode == "guided":
        cov, _ = _evaluate(model, seeds, -1)
        if config.standardize_coverage:
            c = np.asarray(cov, dtype=np.float64)
            shift, scale = c.mean(axis=0), c.std(axis=0)
            scale[scale == 0] = 1.0
            cov = (c - shift) / scale
        threshold = config.threshold
        if threshold is None:
            threshold = calibrate_threshold(cov, config.threshold_percentile)
        index = CoverageIndex(threshold, config.coverage_mode, replace(config.forest, seed=config.seed))
        for v in cov:
            index.add_coverage(v)
        log.info("registered %d seeds, threshold L=%.6g", len(seeds), threshold)
    return FuzzState(config, corpus, seeds, index, coverage_shift=shift, coverage_scale=scale)


def _evaluate(model, inputs, iteration):
    try:
        return model.evaluate_batch(inputs)
    except Exception as e:  # surface with the batch attached
        raise EvaluationError(iteration, list(inputs), e) from e


def run_iterations(state: FuzzState, model, mutator: Callable, objective, until: int | None = None,
                   progress: Callable[[FuzzState], None] | None = None) -> FuzzState:
    """Run iterations ``state.next_iteration .. until`` (default: the budget)."""
    cfg = state.config
    corpus = state.corpus
    guided = cfg.mode == "guided"
    stop = cfg.iterations if until is None else min(until, cfg.iterations)
    nseeds = len(state.seeds)
    while state.next_iteration < stop and not state.stopped:
        it = state.next_iteration
        rng = make_rng(cfg.seed, it, 0)
        b = cfg.batch_size
        n_draw = 1 if cfg.batch_parents == "single" else b
        if guided:
            # Snapshot semantics: weights come from the corpus as it stood at the start of the batch.
            parents = sample_parents(corpus, it, rng, cfg.chooser, n_draw)
        else:
            parents = [corpus[int(i)] for i in rng.integers(nseeds, size=n_draw)]
        if n_draw == 1:
            parents = parents * b
        mutants = [
            mutator(p.payload, corpus[p.seed_ancestor_id].payload, make_rng(cfg.seed, it, j + 1))
            for j, p in enumerate(parents)
        ]
        cov, meta = _evaluate(model, mutants, it)
        if guided:
            cov = state.coverage_view(cov)
        for j, (payload, parent) in enumerate(zip(mutants, parents)):
            if guided:
                admit_if_new(corpus, state.index, payload, parent, cov[j], it)
            if objective(meta[j]):
                state.test_cases.append(TestCase(
                    payload, meta[j], objective.name, it, parent.id, parent.seed_ancestor_id,
                    objective.details(meta[j]),
                ))
                if cfg.stop_on_first:
                    state.stopped = True
                    break
        state.trace.append(TraceRow(it, len(corpus), len(state.test_cases)))
        state.next_iteration = it + 1
        if progress is not None:
            progress(state)
    return state


def fuzz(config: FuzzConfig, model, seed_corpus, mutator, objective, progress=None) -> FuzzResult:
    """Coverage-guided campaign (or the random baseline when ``config.mode == "random"``)."""
    state = start_campaign(config, model, seed_corpus)
    return run_iterations(state, model, mutator, objective, progress=progress)


def random_search(config: FuzzConfig, model, seed_corpus, mutator, objective, progress=None) -> FuzzResult:
    """Same machinery without coverage guidance: parents are always original seeds."""
    return fuzz(replace(config, mode="random"), model, seed_corpus, mutator, objective, progress)
