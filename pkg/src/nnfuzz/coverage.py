"""Coverage analyzer: novelty of activation vectors under a nearest-neighbour distance test.

An input exercises new coverage when the Euclidean distance from its coverage
vector to the closest stored vector is strictly greater than the threshold.
Two lookup strategies share one store:

* ``exact``: linear scan, the reference behaviour.
* ``approximate``: a forest of randomised kd-trees built over a snapshot of the
  store, searched best-bin-first under a budget of point checks, plus an
  insertion buffer that is always scanned exactly. The forest is rebuilt once
  the buffer grows past ``rebuild_size`` or ``rebuild_fraction`` of the indexed
  points, whichever is larger, so rebuild cost stays amortised.

Approximate lookups only ever return real stored vectors, so the reported
distance is never below the true minimum; the approximation can only make an
input look new, never suppress one.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .numeric import ParameterError, make_rng

MODES = ("exact", "approximate")


@dataclass(frozen=True)
class ForestParams:
    num_trees: int = 4
    leaf_size: int = 8
    checks: int = 256
    rebuild_size: int = 64
    rebuild_fraction: float = 0.25
    top_dims: int = 5
    seed: int = 0


class _KdTree:
    """One randomised kd-tree stored as flat arrays.

    Internal node ``i`` splits on ``dim[i]`` at ``split[i]``; ``left``/``right``
    hold child indices, negative values ``-(k + 1)`` point at leaf ``k``.
    """

    def __init__(self, data: np.ndarray, ids: np.ndarray, params: ForestParams, rng):
        self.dim: list[int] = []
        self.split: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.leaves: list[np.ndarray] = []
        self.root = self._build(data, ids, params, rng)

    def _leaf(self, ids) -> int:
        self.leaves.append(ids)
        return -len(self.leaves)

    def _build(self, data, ids, params, rng) -> int:
        if len(ids) <= params.leaf_size:
            return self._leaf(ids)
        pts = data[ids]
        var = pts.var(axis=0)
        top = np.argsort(-var, kind="stable")[: params.top_dims]
        d = int(top[rng.integers(len(top))])
        if var[d] <= 0.0:
            return self._leaf(ids)
        cut = float(pts[:, d].mean())
        mask = pts[:, d] < cut
        if mask.all() or not mask.any():
            return self._leaf(ids)
        node = len(self.dim)
        self.dim.append(d)
        self.split.append(cut)
        self.left.append(0)
        self.right.append(0)
        self.left[node] = self._build(data, ids[mask], params, rng)
        self.right[node] = self._build(data, ids[~mask], params, rng)
        return node


class CoverageIndex:
    """Stored coverage vectors plus the novelty threshold ``threshold`` (``L``)."""

    def __init__(self, threshold: float, mode: str = "exact", params: ForestParams | None = None,
                 dim: int | None = None):
        if mode not in MODES:
            raise ParameterError(f"unknown coverage mode {mode!r}")
        if not threshold >= 0:
            raise ParameterError(f"threshold must be non-negative, got {threshold}")
        self.threshold = float(threshold)
        self.mode = mode
        self.params = params or ForestParams()
        self.dim = dim
        self._data = np.empty((0, dim or 0), dtype=np.float64)
        self._n = 0
        self._trees: list[_KdTree] = []
        self._snapshot = 0
        self._builds = 0

    def __len__(self) -> int:
        return self._n

    @property
    def vectors(self) -> np.ndarray:
        return self._data[: self._n]

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64).ravel()
        if self.dim is not None and v.shape[0] != self.dim:
            raise ParameterError(f"coverage vector has dimension {v.shape[0]}, index expects {self.dim}")
        return v

    def add_coverage(self, v) -> int:
        v = self._check(v)
        if self.dim is None:
            self.dim = v.shape[0]
            self._data = np.empty((0, self.dim), dtype=np.float64)
        if self._n == len(self._data):
            grown = np.empty((max(16, 2 * len(self._data)), self.dim), dtype=np.float64)
            grown[: self._n] = self._data[: self._n]
            self._data = grown
        self._data[self._n] = v
        self._n += 1
        limit = max(self.params.rebuild_size, self.params.rebuild_fraction * self._snapshot)
        if self.mode == "approximate" and self._n - self._snapshot > limit:
            self._rebuild()
        return self._n - 1

    def _rebuild(self):
        rng = make_rng(self.params.seed, self._builds)
        self._builds += 1
        data = self.vectors
        ids = np.arange(self._n)
        self._trees = [_KdTree(data, ids, self.params, rng) for _ in range(self.params.num_trees)]
        self._snapshot = self._n

    def _scan(self, v, lo: int, hi: int) -> tuple[int, float]:
        if hi <= lo:
            return -1, float("inf")
        diff = self._data[lo:hi] - v
        d2 = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(d2))
        return lo + i, float(np.sqrt(d2[i]))

    def nearest_neighbor_exact(self, v) -> tuple[int, float]:
        """Linear scan over every stored vector; ties go to the lowest id."""
        return self._scan(self._check(v), 0, self._n)

    def nearest_neighbor_approx(self, v) -> tuple[int, float]:
        v = self._check(v)
        best_id, best = self._scan(v, self._snapshot, self._n)
        if self._snapshot == 0:
            return best_id, best
        best2 = best * best
        checked = 0
        seen = np.zeros(self._snapshot, dtype=bool)
        heap: list[tuple[float, int, int, int]] = []  # (bound, tiebreak, tree, node)
        counter = 0
        for t, tree in enumerate(self._trees):
            heap.append((0.0, counter, t, tree.root))
            counter += 1
        heapq.heapify(heap)
        while heap and checked < self.params.checks:
            bound, _, t, node = heapq.heappop(heap)
            if bound > best2:
                break
            tree = self._trees[t]
            while node >= 0:
                diff = v[tree.dim[node]] - tree.split[node]
                near, far = (tree.left[node], tree.right[node]) if diff < 0 else (tree.right[node], tree.left[node])
                heapq.heappush(heap, (bound + diff * diff, counter, t, far))
                counter += 1
                node = near
            ids = tree.leaves[-node - 1]
            ids = ids[~seen[ids]]
            if len(ids) == 0:
                continue
            seen[ids] = True
            checked += len(ids)
            diff = self._data[ids] - v
            d2 = np.einsum("ij,ij->i", diff, diff)
            i = int(np.argmin(d2))
            cand = int(ids[i])
            if d2[i] < best2 or (d2[i] == best2 and cand < best_id):
                best2, best_id = float(d2[i]), cand
        return best_id, float(np.sqrt(best2))

    def nearest(self, v) -> tuple[int, float]:
        if self.mode == "exact":
            return self.nearest_neighbor_exact(v)
        return self.nearest_neighbor_approx(v)

    def is_new_coverage(self, v) -> tuple[bool, float]:
        """``(new, distance)``; distance exactly equal to the threshold is not new."""
        v = self._check(v)
        if self._n == 0:
            return True, float("inf")
        _, dist = self.nearest(v)
        return dist > self.threshold, dist

    # persistence ---------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.save(directory / "vectors.npy", self.vectors.astype("<f8"))
        params = {"threshold": self.threshold, "mode": self.mode, "dim": self.dim,
                  "forest": asdict(self.params)}
        (directory / "params.json").write_text(json.dumps(params, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "CoverageIndex":
        directory = Path(directory)
        params = json.loads((directory / "params.json").read_text())
        index = cls(params["threshold"], params["mode"], ForestParams(**params["forest"]), params["dim"])
        for v in np.load(directory / "vectors.npy"):
            index.add_coverage(v)
        return index


def calibrate_threshold(vectors, percentile: float = 5.0) -> float:
    """Percentile of the pairwise Euclidean distances among ``vectors``.

    Used as the default threshold: 5th percentile of the seed corpus's coverage
    vectors. Fewer than two vectors give 0.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if len(x) < 2:
        return 0.0
    sq = np.einsum("ij,ij->i", x, x)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0)
    iu = np.triu_indices(len(x), k=1)
    return float(np.percentile(np.sqrt(d2[iu]), percentile))
