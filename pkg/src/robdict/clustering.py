"""k-medoids (PAM) over a precomputed dissimilarity matrix.

The objective is the sum over points of the *squared* dissimilarity to the
nearest medoid.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import DissimilarityMatrix

IMPROVEMENT_TOL = 1e-12


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray
    medoids: np.ndarray
    cost: float
    restarts_used: int = 1
    seed: int | None = None
    measure: str | None = None
    n: int | None = None

    @property
    def K(self) -> int:
        return len(self.medoids)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def to_json(self) -> dict:
        return {"measure": self.measure, "n": self.n, "K": self.K, "seed": self.seed,
                "restarts": self.restarts_used, "cost": self.cost,
                "medoids": [int(i) for i in self.medoids],
                "labels": [int(i) for i in self.labels]}

    @classmethod
    def from_json(cls, obj: dict) -> "Clustering":
        return cls(np.asarray(obj["labels"], dtype=np.intp),
                   np.asarray(obj["medoids"], dtype=np.intp), float(obj["cost"]),
                   int(obj.get("restarts", 1)), obj.get("seed"), obj.get("measure"),
                   obj.get("n"))


def _matrix(D) -> np.ndarray:
    return D.d if isinstance(D, DissimilarityMatrix) else np.asarray(D, dtype=np.float64)


def assign(d_to_medoids) -> int:
    """Index of the nearest medoid; ties go to the lowest index."""
    d = np.asarray(d_to_medoids, dtype=np.float64)
    if d.size == 0:
        raise ValueError("empty dissimilarity vector")
    if np.any(np.isnan(d)):
        raise ValueError("NaN dissimilarity")
    return int(np.argmin(d))


def assign_all(d_to_medoids: np.ndarray) -> np.ndarray:
    """Row-wise :func:`assign` for an ``(m, K)`` matrix."""
    d = np.asarray(d_to_medoids, dtype=np.float64)
    if np.any(np.isnan(d)):
        raise ValueError("NaN dissimilarity")
    return np.argmin(d, axis=1)


def _cost(S: np.ndarray, medoids: np.ndarray) -> float:
    return float(S[:, medoids].min(axis=1).sum())


def _swap_descent(S: np.ndarray, medoids: np.ndarray, trace: list | None = None):
    """Best-improvement PAM swaps on squared dissimilarities ``S``."""
    m = S.shape[0]
    medoids = medoids.copy()
    K = medoids.size
    cost = _cost(S, medoids)
    if trace is not None:
        trace.append(cost)
    while True:
        Sm = S[:, medoids]
        order = np.argsort(Sm, axis=1, kind="stable")
        nearest = order[:, 0]
        d1 = Sm[np.arange(m), nearest]
        d2 = Sm[np.arange(m), order[:, 1]] if K > 1 else np.full(m, np.inf)
        is_medoid = np.zeros(m, dtype=bool)
        is_medoid[medoids] = True
        best_delta, best = 0.0, None
        for k in range(K):
            # cost of each point if medoid k is removed, before adding h
            base = np.where(nearest == k, d2, d1)
            # rows: candidate h, cols: point j
            new = np.minimum(S, base[None, :])
            delta = new.sum(axis=1) - d1.sum()
            delta[is_medoid] = np.inf
            h = int(np.argmin(delta))
            if delta[h] < best_delta:
                best_delta, best = float(delta[h]), (k, h)
        if best is None or best_delta > -IMPROVEMENT_TOL * max(1.0, cost):
            break
        medoids[best[0]] = best[1]
        new_cost = _cost(S, medoids)
        cost = new_cost
        if trace is not None:
            trace.append(cost)
    return medoids, cost


def _finish(S: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    return np.argmin(S[:, medoids], axis=1)


def _build_init(S: np.ndarray, K: int) -> np.ndarray:
    first = int(np.argmin(S.sum(axis=0)))
    medoids = [first]
    current = S[:, first].copy()
    for _ in range(1, K):
        gain = np.maximum(current[:, None] - S, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        h = int(np.argmax(gain))
        medoids.append(h)
        current = np.minimum(current, S[:, h])
    return np.asarray(medoids, dtype=np.intp)


def pam(
    D,
    K: int,
    restarts: int = 10,
    seed: int = 0,
    init: str | Sequence[int] = "random",
    trace: list | None = None,
) -> Clustering:
    """Partitioning Around Medoids with steepest-descent swaps.

    Parameters
    ----------
    D : DissimilarityMatrix or (m, m) array
    K : int
        Number of clusters, ``1 <= K <= m``.
    restarts : int
        Number of random initializations; the lowest cost wins (ties go to
        the earliest restart).
    seed : int
        Seed of the initialization stream.
    init : {"random", "build", "exhaustive"} or sequence of int
        ``"exhaustive"`` starts from every K-subset (small problems only);
        an explicit sequence is used as the single starting medoid set.
    trace : list, optional
        Receives, for every restart, the starting cost and the cost after
        each accepted swap.
    """
    d = _matrix(D)
    m = d.shape[0]
    if m < 2:
        raise ValueError("need at least 2 points")
    if not 1 <= K <= m:
        raise ValueError(f"K={K} must lie in [1, {m}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    S = d**2
    if isinstance(init, str):
        if init == "random":
            rng = np.random.default_rng(seed)
            starts = [rng.choice(m, size=K, replace=False) for _ in range(restarts)]
        elif init == "build":
            starts = [_build_init(S, K)]
        elif init == "exhaustive":
            if math.comb(m, K) > 1_000_000:
                raise ValueError("exhaustive initialization exceeds 1e6 subsets")
            starts = [np.array(c) for c in itertools.combinations(range(m), K)]
        else:
            raise ValueError(f"unknown init {init!r}")
    else:
        start = np.asarray(init, dtype=np.intp)
        if start.size != K or np.unique(start).size != K:
            raise ValueError("explicit init must hold K distinct indices")
        starts = [start]
    best_med, best_cost = None, np.inf
    for start in starts:
        med, cost = _swap_descent(S, np.asarray(start, dtype=np.intp), trace)
        if cost < best_cost:
            best_med, best_cost = med, cost
    labels = _finish(S, best_med)
    measure = D.measure if isinstance(D, DissimilarityMatrix) else None
    n = D.n if isinstance(D, DissimilarityMatrix) else None
    return Clustering(labels, best_med, best_cost, len(starts), seed, measure, n)


def brute_force_kmedoids(D, K: int) -> Clustering:
    """Global optimum of the squared k-medoids cost by enumeration."""
    d = _matrix(D)
    m = d.shape[0]
    if not 1 <= K <= m:
        raise ValueError(f"K={K} must lie in [1, {m}]")
    if math.comb(m, K) > 1_000_000:
        raise ValueError(f"C({m}, {K}) exceeds the 1e6 enumeration budget")
    S = d**2
    best, best_cost = None, np.inf
    for c in itertools.combinations(range(m), K):
        cost = _cost(S, np.asarray(c))
        if cost < best_cost:
            best, best_cost = np.asarray(c, dtype=np.intp), cost
    return Clustering(_finish(S, best), best, best_cost, 1, None)


def select_snapshots(D, clustering: Clustering, n_s: int,
                     restarts: int | None = None, seed: int | None = None) -> list[list[int]]:
    """Two-stage selection: ``n_s`` sub-medoids inside each cluster.

    Returns one list of global indices per cluster. With ``n_s = 1`` these
    are the cluster medoids.
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    d = _matrix(D)
    restarts = clustering.restarts_used if restarts is None else restarts
    seed = (clustering.seed or 0) if seed is None else seed
    out = []
    for k in range(clustering.K):
        members = clustering.members(k)
        if members.size < n_s:
            raise ValueError(f"cluster {k} has {members.size} members, fewer than n_s={n_s}")
        if n_s == 1:
            out.append([int(clustering.medoids[k])])
        elif members.size == n_s:
            out.append([int(i) for i in members])
        else:
            sub = pam(d[np.ix_(members, members)], n_s, restarts=max(1, restarts),
                      seed=seed + 7919 * (k + 1))
            out.append([int(members[i]) for i in sub.medoids])
    return out


def swap_optimal(D, clustering: Clustering, tol: float = IMPROVEMENT_TOL) -> bool:
    """True when no single medoid/non-medoid swap lowers the cost."""
    S = _matrix(D) ** 2
    base = clustering.cost
    med = clustering.medoids
    others = np.setdiff1d(np.arange(S.shape[0]), med)
    for k in range(len(med)):
        for h in others:
            trial = med.copy()
            trial[k] = h
            if _cost(S, trial) < base - tol * max(1.0, base):
                return False
    return True


def save_clustering(c: Clustering, path: str | Path, extra: dict | None = None) -> None:
    obj = c.to_json()
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1))


def load_clustering(path: str | Path) -> Clustering:
    return Clustering.from_json(json.loads(Path(path).read_text()))
