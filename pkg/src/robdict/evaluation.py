"""Projection-error statistics, gains, profitability and hyperparameter search.

Also holds the six-strategy comparison on the heat problem, correlation
analysis between projection errors and dissimilarities, and classical MDS.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.stats

from .clustering import assign_all, pam, select_snapshots
from .dictionary import RomDictionary, build_dictionary, build_global_rom, integer_cube_root
from .geometry import (DissimilarityMatrix, ParameterScaler, ReducedBasis, cross_dissimilarity,
                       dissimilarity_matrix, projection_errors)
from .problems import SnapshotSet, parameter_vectors

GAIN_FLOOR = 1e-15


@dataclass(frozen=True)
class ErrorSummary:
    eta: np.ndarray
    labels: np.ndarray
    q1: float
    median: float
    q3: float
    mean: float

    @classmethod
    def from_samples(cls, eta, labels=None) -> "ErrorSummary":
        eta = np.asarray(eta, dtype=np.float64)
        q1, med, q3 = np.percentile(eta, [25, 50, 75])
        labels = np.zeros(eta.size, dtype=np.intp) if labels is None else np.asarray(labels)
        return cls(eta, labels, float(q1), float(med), float(q3), float(eta.mean()))

    def row(self) -> dict:
        return {"q1": self.q1, "median": self.median, "q3": self.q3, "mean": self.mean}


def _item_columns(s: SnapshotSet, by: str) -> list[np.ndarray]:
    return s.blocks(by)


def _check_weights(test: SnapshotSet, basis: ReducedBasis):
    if not np.array_equal(test.weights, basis.weights):
        raise ValueError("test set and bases use different inner-product weights")


def local_errors(test: SnapshotSet, dictionary: RomDictionary, labels: np.ndarray,
                 by: str = "trajectory") -> np.ndarray:
    """Per-column projection errors on the basis each item is assigned to."""
    _check_weights(test, dictionary.bases[0])
    out = []
    for block, k in zip(_item_columns(test, by), labels):
        out.append(projection_errors(block, dictionary.bases[int(k)]))
    return np.concatenate(out)


def evaluate_errors(test: SnapshotSet, dictionary: RomDictionary, d_test_to_medoids: np.ndarray,
                    by: str = "trajectory") -> ErrorSummary:
    """Projection errors under nearest-medoid (perfect classifier) assignment."""
    d = np.asarray(d_test_to_medoids)
    if d.shape[1] != dictionary.K:
        raise ValueError(f"{d.shape[1]} medoid columns for a dictionary of {dictionary.K}")
    labels = assign_all(d)
    eta = local_errors(test, dictionary, labels, by)
    return ErrorSummary.from_samples(eta, labels)


@dataclass(frozen=True)
class GainSamples:
    gains: np.ndarray
    n_floored: int
    labels: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.gains.mean())

    @property
    def cv(self) -> float:
        """Coefficient of variation of the perfect-classifier gain."""
        m = self.gains.mean()
        return float(self.gains.std() / m) if m else float("nan")


def gain_samples(test: SnapshotSet, dictionary: RomDictionary, global_basis: ReducedBasis,
                 d_test_to_medoids: np.ndarray, by: str = "trajectory") -> GainSamples:
    """Per-column ratio of global to assigned-local projection error.

    Denominators below ``1e-15`` are floored; the number of floored samples
    is reported.
    """
    if any(b.n_modes != global_basis.n_modes for b in dictionary.bases):
        raise ValueError("dictionary and global basis have different numbers of modes")
    _check_weights(test, global_basis)
    labels = assign_all(d_test_to_medoids)
    local = local_errors(test, dictionary, labels, by)
    glob = projection_errors(test.values, global_basis) if by == "column" else np.concatenate(
        [projection_errors(b, global_basis) for b in test.blocks(by)])
    floored = local < GAIN_FLOOR
    return GainSamples(glob / np.maximum(local, GAIN_FLOOR), int(floored.sum()), labels)


def expected_real_gain(perfect_gain: float, p: float, E: float) -> float:
    """Mean gain of a classifier with accuracy ``p`` when wrong choices yield ``E`` on average."""
    return p * perfect_gain + (1.0 - p) * E


# ---------------------------------------------------------------------------
# accuracy model and profitability


@dataclass(frozen=True)
class AccuracyModel:
    """Quadratic model ``p(K) = a K^2 + b K + c`` of classifier accuracy."""

    coeffs: tuple[float, float, float]
    K_max: int

    def __call__(self, K):
        a, b, c = self.coeffs
        return a * np.square(K) + b * np.asarray(K) + c


def fit_accuracy_model(p1: float = 1.0, K_mid: int = 6, p_mid: float = 0.8,
                       K_max: int = 20) -> AccuracyModel:
    """Quadratic through ``(1, p1)``, ``(K_mid, p_mid)`` and ``(K_max, 1/K_max)``."""
    if not 1 < K_mid < K_max:
        raise ValueError("need 1 < K_mid < K_max")
    ks = np.array([1.0, K_mid, K_max])
    A = np.column_stack([ks**2, ks, np.ones(3)])
    rhs = np.array([p1, p_mid, 1.0 / K_max])
    try:
        coeffs = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular accuracy-model system: {exc}") from exc
    a, b, _ = coeffs
    # derivative is linear in K: checking both ends covers the interval
    if 2 * a + b > 0 or 2 * a * K_max + b > 0:
        raise ValueError("fitted accuracy model is not decreasing on [1, K_max]")
    return AccuracyModel(tuple(float(x) for x in coeffs), int(K_max))


def perfect_profit_threshold(G_r_star: float, p: float, E: float) -> float:
    """Minimum perfect-classifier mean gain for a real mean gain of ``G_r_star``."""
    if not p > 0:
        raise ValueError("accuracy p must be > 0")
    return (G_r_star - (1.0 - p) * E) / p


# ---------------------------------------------------------------------------
# admissible set


@dataclass
class HyperparameterRow:
    K: int
    N: int
    n_s: int
    mean_eta: float
    median_eta: float
    mean_gain_perfect: float
    median_gain_perfect: float
    gain_cv: float
    n_floored: int
    p_K: float
    perfect_profit_threshold: float
    R1: bool
    R2: bool
    R3: bool
    R4: bool
    error: str | None = None

    @property
    def admissible(self) -> bool:
        return self.R1 and self.R2 and self.R3 and self.R4


@dataclass
class HyperparameterReport:
    rows: list[HyperparameterRow]
    thresholds: dict
    errors_by_cell: dict = field(default_factory=dict, repr=False)
    gains_by_cell: dict = field(default_factory=dict, repr=False)

    @property
    def admissible(self) -> list[tuple[int, int, int]]:
        return [(r.K, r.N, r.n_s) for r in self.rows if r.admissible]

    def recommend(self) -> tuple[int, int, int] | None:
        """Smallest admissible ``N``, then the ``K`` with the lowest mean error."""
        ok = [r for r in self.rows if r.admissible]
        if not ok:
            return None
        n_min = min(r.N for r in ok)
        best = min((r for r in ok if r.N == n_min), key=lambda r: (r.mean_eta, r.K))
        return best.K, best.N, best.n_s

    def verdict(self) -> str:
        rec = self.recommend()
        if rec is None:
            return "admissible set empty"
        return f"admissible set nonempty; recommended (K, N, n_s) = {rec}"

    def to_json(self) -> dict:
        rows = []
        for r in self.rows:
            # NaN (failed cells) becomes null so the file stays strict JSON
            d = {k: None if isinstance(v, float) and np.isnan(v) else v
                 for k, v in asdict(r).items()}
            d["admissible"] = r.admissible
            rows.append(d)
        return {"thresholds": self.thresholds, "rows": rows,
                "admissible": [list(a) for a in self.admissible],
                "recommended": list(self.recommend()) if self.recommend() else None,
                "verdict": self.verdict()}

    def write_csv(self, path: str | Path) -> None:
        data = self.to_json()["rows"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(data[0]))
            writer.writeheader()
            writer.writerows(data)


def admissible_set(
    train: SnapshotSet,
    test: SnapshotSet,
    K_range: Iterable[int],
    N_range: Iterable[int],
    budget: int,
    eta_star: float,
    G_r_star: float,
    E: float = 0.75,
    model: AccuracyModel | None = None,
    *,
    measure: str = "sine",
    n: int = 1,
    by: str = "trajectory",
    n_s: int | Mapping[int, int] | None = None,
    restarts: int = 10,
    seed: int = 0,
    D: DissimilarityMatrix | None = None,
    d_test: np.ndarray | None = None,
) -> HyperparameterReport:
    """Grid search over ``(K, N)`` flagging the four admissibility requirements.

    For every cell the dictionary and a global basis are built from the
    same ``K * n_s`` selected snapshots. ``n_s`` defaults to ``N``; an int
    fixes it, a mapping gives it per ``N``. ``D`` (train x train) and
    ``d_test`` (test x train) may be passed precomputed.

    Flags: R1 ``K * n_s <= budget``; R2 ``N <= floor(n_dof^(1/3))``;
    R3 mean error ``<= eta_star``; R4 mean perfect gain at least the
    profitability threshold for ``p(K)``.
    """
    K_range, N_range = sorted(set(K_range)), sorted(set(N_range))
    if not K_range or not N_range:
        raise ValueError("empty hyperparameter grid")
    model = fit_accuracy_model() if model is None else model
    if D is None:
        D = dissimilarity_matrix(train, measure, n, by)
    if d_test is None:
        scaler = ParameterScaler.fit(parameter_vectors(train, by)) if measure == "euclid_parameter" else None
        d_test = cross_dissimilarity(test, train, measure, n, by, scaler)
    n_max = integer_cube_root(train.n_dof)
    rows, errors, gains = [], {}, {}
    for K in K_range:
        clustering = pam(D, K, restarts=restarts, seed=seed)
        d_med = d_test[:, clustering.medoids]
        p = float(model(K))
        threshold = perfect_profit_threshold(G_r_star, p, E)
        for N in N_range:
            ns = N if n_s is None else (n_s[N] if isinstance(n_s, Mapping) else int(n_s))
            flags = dict(R1=K * ns <= budget, R2=N <= n_max)
            try:
                sel = select_snapshots(D, clustering, ns)
                dic = build_dictionary(train, clustering, sel, N)
                glob = build_global_rom(train, [i for g in sel for i in g], N)
                summ = evaluate_errors(test, dic, d_med, by)
                g = gain_samples(test, dic, glob, d_med, by)
            except ValueError as exc:
                rows.append(HyperparameterRow(K, N, ns, float("nan"), float("nan"), float("nan"),
                                              float("nan"), float("nan"), 0, p, threshold,
                                              R3=False, R4=False, error=str(exc), **flags))
                continue
            errors[(K, N)] = summ.eta
            gains[(K, N)] = g.gains
            rows.append(HyperparameterRow(
                K, N, ns, summ.mean, summ.median, g.mean, float(np.median(g.gains)), g.cv,
                g.n_floored, p, threshold,
                R3=summ.mean <= eta_star, R4=g.mean >= threshold, **flags))
    thresholds = {"eta_star": eta_star, "G_r_star": G_r_star, "E": E, "budget": budget,
                  "N_max": n_max, "accuracy_coeffs": list(model.coeffs), "K_max": model.K_max,
                  "measure": measure, "n": n}
    return HyperparameterReport(rows, thresholds, errors, gains)


# ---------------------------------------------------------------------------
# six-strategy comparison


STRATEGY_MEASURES = (("euclid_parameter", "1"), ("euclid_solution", "2"), ("sine", "3"))


@dataclass
class StrategyResult:
    name: str
    measure: str
    summary: ErrorSummary
    selected: list[int]


@dataclass
class StrategyTable:
    results: list[StrategyResult]
    hyper: tuple[int, int, int]

    def __getitem__(self, name: str) -> StrategyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def rows(self) -> list[dict]:
        return [{"strategy": r.name, "dissimilarity": r.measure, **r.summary.row()}
                for r in self.results]

    def format(self) -> str:
        lines = [f"{'Strategy':<18}{'Dissimilarity':<18}{'Q1':>8}{'Median':>8}{'Q3':>8}{'Mean':>8}"]
        for row in self.rows():
            lines.append(f"{row['strategy']:<18}{row['dissimilarity']:<18}"
                         f"{row['q1']:8.4f}{row['median']:8.4f}{row['q3']:8.4f}{row['mean']:8.4f}")
        return "\n".join(lines)


def compare_strategies(train: SnapshotSet, test: SnapshotSet, K: int, N: int, n_s: int | None = None,
                       seed: int = 0, restarts: int = 10, n: int = 1,
                       matrices: Mapping[str, DissimilarityMatrix] | None = None,
                       cross: Mapping[str, np.ndarray] | None = None) -> StrategyTable:
    """Three global ROMs and three dictionaries under three dissimilarities.

    Global ROM i uses the medoids of a single ``K * n_s``-medoids clustering;
    dictionary i uses ``K`` clusters with ``n_s`` sub-medoids each. Test
    items are assigned to their nearest medoid under the same measure.
    """
    n_s = N if n_s is None else n_s
    matrices = dict(matrices or {})
    cross = dict(cross or {})
    scaler = ParameterScaler.fit(parameter_vectors(train))
    globals_, dicts = [], []
    for measure, tag in STRATEGY_MEASURES:
        if measure not in matrices:
            matrices[measure] = dissimilarity_matrix(train, measure, n)
        if measure not in cross:
            cross[measure] = cross_dissimilarity(test, train, measure, n, scaler=scaler)
        D = matrices[measure]
        cg = pam(D, K * n_s, restarts=restarts, seed=seed)
        glob = build_global_rom(train, cg.medoids, N)
        eta_g = np.concatenate([projection_errors(b, glob) for b in test.blocks()])
        globals_.append(StrategyResult(f"Global ROM {tag}", measure,
                                       ErrorSummary.from_samples(eta_g), [int(i) for i in cg.medoids]))
        c = pam(D, K, restarts=restarts, seed=seed)
        sel = select_snapshots(D, c, n_s)
        dic = build_dictionary(train, c, sel, N)
        summ = evaluate_errors(test, dic, cross[measure][:, c.medoids])
        dicts.append(StrategyResult(f"ROM dictionary {tag}", measure, summ, dic.selected()))
    return StrategyTable(globals_ + dicts, (K, N, n_s))


# ---------------------------------------------------------------------------
# correlation analysis


@dataclass(frozen=True)
class Correlation:
    pearson: float
    spearman: float
    constant: bool = False


def correlation_report(eta, dissimilarities: Mapping[str, np.ndarray]) -> dict[str, Correlation]:
    """Pearson and Spearman coefficients between errors and each dissimilarity.

    A constant input yields NaN coefficients with ``constant=True``.
    """
    eta = np.asarray(eta, dtype=np.float64)
    out = {}
    for name, d in dissimilarities.items():
        d = np.asarray(d, dtype=np.float64)
        if d.shape != eta.shape:
            raise ValueError(f"{name}: length {d.size} != {eta.size}")
        if np.ptp(d) == 0 or np.ptp(eta) == 0:
            out[name] = Correlation(float("nan"), float("nan"), True)
            continue
        out[name] = Correlation(float(scipy.stats.pearsonr(eta, d)[0]),
                                float(scipy.stats.spearmanr(eta, d)[0]))
    return out


def nearest_snapshot_dissimilarity(d_test_to_train: np.ndarray, snapshots: Sequence[int]) -> np.ndarray:
    """Dissimilarity from each test item to the closest of the given snapshots."""
    return np.asarray(d_test_to_train)[:, list(snapshots)].min(axis=1)


def write_scatter_csv(path: str | Path, eta, dissimilarities: Mapping[str, np.ndarray]) -> None:
    names = list(dissimilarities)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eta"] + names)
        for i, e in enumerate(eta):
            w.writerow([repr(float(e))] + [repr(float(dissimilarities[k][i])) for k in names])


# ---------------------------------------------------------------------------
# classical multidimensional scaling


def classical_mds(D, dim: int = 2):
    """Torgerson embedding of a dissimilarity matrix.

    Returns ``(coords, eigenvalues)`` with ``coords`` of shape ``(m, dim)``.
    Axes whose eigenvalue is not positive are returned as zero columns and
    trigger a warning. Each axis is oriented so that its first nonzero
    coordinate is positive.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    d = D.d if isinstance(D, DissimilarityMatrix) else np.asarray(D, dtype=np.float64)
    m = d.shape[0]
    J = np.eye(m) - 1.0 / m
    B = -0.5 * J @ (d**2) @ J
    B = 0.5 * (B + B.T)
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][: min(dim, m)]
    vals, vecs = vals[order], vecs[:, order]
    scale = max(abs(vals).max(initial=0.0), 1.0) * 1e-12 * m
    positive = vals > scale
    if not np.all(positive):
        warnings.warn(f"only {int(positive.sum())} of {dim} requested axes have positive eigenvalues",
                      RuntimeWarning, stacklevel=2)
    vals = np.where(positive, vals, 0.0)
    coords = vecs * np.sqrt(vals)
    for j in range(coords.shape[1]):
        nz = np.flatnonzero(np.abs(coords[:, j]) > 1e-12 * max(1.0, np.abs(coords[:, j]).max()))
        if nz.size and coords[nz[0], j] < 0:
            coords[:, j] *= -1.0
    return coords, vals


def write_mds_csv(path: str | Path, coords: np.ndarray, labels=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(coords.shape[1])] + (["label"] if labels is not None else []))
        for i, row in enumerate(coords):
            w.writerow([repr(float(x)) for x in row] + ([int(labels[i])] if labels is not None else []))


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")
