"""Weighted inner products, POD bases, principal angles and dissimilarities.

All inner products are ``<u, v>_W = sum_i w_i u_i v_i`` with a diagonal
(lumped mass) weight vector ``w``.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .problems import SnapshotSet, parameter_vectors

RANK_TOL = 1e-12
MEASURES = ("sine", "euclid_solution", "euclid_parameter", "grassmann")


def weighted_dot(u, v, weights) -> float:
    u, v, w = (np.asarray(a, dtype=np.float64) for a in (u, v, weights))
    if not (u.shape == v.shape == w.shape):
        raise ValueError(f"length mismatch: {u.shape}, {v.shape}, {w.shape}")
    return float(np.sum(w * u * v))


def weighted_norm(u, weights) -> float:
    return float(np.sqrt(np.sum(weights * np.square(u))))


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ReducedBasis:
    """W-orthonormal modes (one per column) and their singular values.

    ``discarded_energy`` is the sum of squared singular values that were not
    retained, so ``sum(singular_values**2) + discarded_energy`` is the
    snapshot energy.
    """

    modes: np.ndarray
    singular_values: np.ndarray
    weights: np.ndarray
    discarded_energy: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes", _frozen(np.atleast_2d(self.modes.T).T))
        object.__setattr__(self, "singular_values", _frozen(self.singular_values))
        object.__setattr__(self, "weights", _frozen(self.weights))

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    @property
    def n_dof(self) -> int:
        return self.modes.shape[0]

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        return self.modes.T @ (self.weights[:, None] * u.reshape(self.n_dof, -1))

    def project(self, u: np.ndarray) -> np.ndarray:
        """W-orthogonal projection of ``u`` (vector or matrix of columns)."""
        proj = self.modes @ self.coefficients(u)
        return proj.reshape(u.shape)

    def truncate(self, n: int) -> "ReducedBasis":
        extra = float(np.sum(self.singular_values[n:] ** 2))
        return ReducedBasis(self.modes[:, :n], self.singular_values[:n], self.weights,
                            self.discarded_energy + extra)


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[idx, np.arange(modes.shape[1])])
    signs[signs == 0] = 1.0
    return modes * signs


def numerical_rank(singular_values: np.ndarray) -> int:
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > RANK_TOL * singular_values[0]))


def pod_basis(
    columns: np.ndarray,
    weights: np.ndarray,
    n_modes: int | None = None,
    tol: float | None = None,
) -> ReducedBasis:
    """POD of a snapshot matrix in the W inner product.

    Exactly one of ``n_modes`` (fixed size) and ``tol`` must be given. With
    ``tol`` the smallest ``N`` whose relative discarded energy
    ``sqrt(sum_{k>N} s_k^2 / sum_k s_k^2)`` is at most ``tol`` is kept.
    Each mode is signed so that its largest-magnitude entry is positive.
    """
    if (n_modes is None) == (tol is None):
        raise ValueError("give exactly one of n_modes and tol")
    columns = np.asarray(columns, dtype=np.float64)
    if columns.ndim == 1:
        columns = columns[:, None]
    weights = np.asarray(weights, dtype=np.float64)
    if not np.any(columns):
        raise ValueError("cannot build a POD basis from all-zero snapshots")
    sw = np.sqrt(weights)
    left, s, _ = np.linalg.svd(sw[:, None] * columns, full_matrices=False)
    rank = numerical_rank(s)
    energy = s**2
    if tol is not None:
        if not tol > 0:
            raise ValueError("tol must be > 0")
        total = energy.sum()
        tail = np.concatenate([np.cumsum(energy[::-1])[::-1][1:], [0.0]])
        n_modes = int(np.argmax(np.sqrt(tail / total) <= tol)) + 1
        n_modes = min(n_modes, rank)
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    if n_modes > rank:
        raise ValueError(f"requested {n_modes} modes but achievable rank is {rank}")
    modes = _fix_signs(left[:, :n_modes] / sw[:, None])
    return ReducedBasis(modes, s[:n_modes], weights, float(energy[n_modes:].sum()))


def principal_angles(b1: ReducedBasis, b2: ReducedBasis) -> np.ndarray:
    """Principal angles between ``span(b1)`` and ``span(b2)``, increasing.

    Cosines come from the singular values of the cross Gram matrix; small
    angles are taken from the sines of the projection residual instead,
    which keeps them accurate down to rounding level.
    """
    if b1.weights.shape != b2.weights.shape or not np.array_equal(b1.weights, b2.weights):
        raise ValueError("bases use different inner-product weights")
    if b1.n_modes > b2.n_modes:
        b1, b2 = b2, b1
    cross = b1.modes.T @ (b1.weights[:, None] * b2.modes)
    cos = np.clip(np.linalg.svd(cross, compute_uv=False), 0.0, 1.0)
    resid = b1.modes - b2.modes @ cross.T
    sw = np.sqrt(b1.weights)[:, None]
    sin = np.clip(np.sort(np.linalg.svd(sw * resid, compute_uv=False)), 0.0, 1.0)
    theta = np.where(sin**2 < 0.5, np.arcsin(sin), np.arccos(cos))
    return np.sort(theta)


def _residual_norm(b1: ReducedBasis, b2: ReducedBasis) -> float:
    # ||Psi_1 - P_2 Psi_1||_{W,F}: root-sum-square of the sines
    cross = b2.modes.T @ (b2.weights[:, None] * b1.modes)
    resid = b1.modes - b2.modes @ cross
    return float(np.sqrt(np.sum(b1.weights[:, None] * resid**2)))


def _as_block(traj) -> np.ndarray:
    traj = np.asarray(traj, dtype=np.float64)
    return traj[:, None] if traj.ndim == 1 else traj


def elementary_basis(traj, n: int, weights) -> ReducedBasis:
    """n-mode POD basis of a single trajectory; fails if its rank is below n."""
    traj = _as_block(traj)
    if not np.any(traj):
        raise ValueError("zero-norm trajectory")
    return pod_basis(traj, weights, n_modes=n)


def _unit(u: np.ndarray, weights: np.ndarray) -> np.ndarray:
    nrm = weighted_norm(u, weights)
    if nrm == 0:
        raise ValueError("zero-norm trajectory")
    return u / nrm


def _sine_single(u, v, weights) -> float:
    # sqrt(1 - <u,v>^2 / (|u|^2 |v|^2)), evaluated through the residual
    # u_hat - <u_hat, v_hat> v_hat to avoid cancellation near collinearity
    a, b = _unit(u, weights), _unit(v, weights)
    ra = a - np.sum(weights * a * b) * b
    rb = b - np.sum(weights * a * b) * a
    d = 0.5 * (weighted_norm(ra, weights) + weighted_norm(rb, weights))
    return min(d, 1.0)


def sine_dissimilarity(traj_u, traj_v, n: int = 1, weights=None) -> float:
    """Chordal distance between the n-dimensional elementary POD spaces of
    two trajectories (root-sum-square of the principal-angle sines)."""
    u, v = _as_block(traj_u), _as_block(traj_v)
    weights = np.ones(u.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1 and u.shape[1] == 1 and v.shape[1] == 1:
        if np.array_equal(u, v) and np.any(u):
            return 0.0
        return _sine_single(u[:, 0], v[:, 0], weights)
    bu, bv = elementary_basis(u, n, weights), elementary_basis(v, n, weights)
    if u.shape == v.shape and np.array_equal(u, v):
        return 0.0
    return _sine_from_bases(bu, bv)


def _sine_from_bases(bu: ReducedBasis, bv: ReducedBasis) -> float:
    d = 0.5 * (_residual_norm(bu, bv) + _residual_norm(bv, bu))
    return min(d, float(np.sqrt(min(bu.n_modes, bv.n_modes))))


def grassmann_dissimilarity(traj_u, traj_v, n: int = 1, weights=None) -> float:
    """Euclidean norm of the principal-angle vector between elementary spaces."""
    u, v = _as_block(traj_u), _as_block(traj_v)
    weights = np.ones(u.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    bu, bv = elementary_basis(u, n, weights), elementary_basis(v, n, weights)
    if u.shape == v.shape and np.array_equal(u, v):
        return 0.0
    return _grassmann_from_bases(bu, bv)


def _grassmann_from_bases(bu, bv) -> float:
    a = float(np.linalg.norm(principal_angles(bu, bv)))
    b = float(np.linalg.norm(principal_angles(bv, bu)))
    return 0.5 * (a + b)


def euclid_solution_dissimilarity(traj_u, traj_v, weights=None) -> float:
    """W-norm of the difference, root-sum-square over the trajectory's columns."""
    u, v = _as_block(traj_u), _as_block(traj_v)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    weights = np.ones(u.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.sqrt(np.sum(weights[:, None] * (u - v) ** 2)))


def euclid_parameter_dissimilarity(x, x_prime) -> float:
    """Euclidean distance between two already standardized parameter vectors."""
    x, x_prime = np.ravel(x), np.ravel(x_prime)
    if x.shape != x_prime.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    return float(np.sqrt(np.sum((x - x_prime) ** 2)))


@dataclass(frozen=True)
class ParameterScaler:
    """Centering and unit-variance scaling fitted on a training set.

    Zero-variance coordinates are dropped.
    """

    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "ParameterScaler":
        X = np.asarray(X, dtype=np.float64)
        mean, std = X.mean(axis=0), X.std(axis=0)
        keep = std > 1e-14 * np.maximum(1.0, np.abs(mean))
        if not np.all(keep):
            warnings.warn(
                f"dropping {int(np.sum(~keep))} zero-variance parameter coordinate(s)",
                RuntimeWarning, stacklevel=2,
            )
        return cls(mean[keep], std[keep], keep)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.keep.size:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {self.keep.size}")
        return (X[:, self.keep] - self.mean) / self.scale


def relative_projection_error(u, basis: ReducedBasis) -> float:
    """``||u - P u||_W / ||u||_W``, clamped to [0, 1]."""
    u = np.asarray(u, dtype=np.float64)
    nrm = weighted_norm(u, basis.weights)
    if nrm == 0:
        raise ValueError("relative projection error of a zero vector")
    return min(weighted_norm(u - basis.project(u), basis.weights) / nrm, 1.0)


def projection_errors(columns: np.ndarray, basis: ReducedBasis) -> np.ndarray:
    """Column-wise relative projection errors."""
    columns = _as_block(columns)
    w = basis.weights[:, None]
    norms = np.sqrt(np.sum(w * columns**2, axis=0))
    if np.any(norms == 0):
        raise ValueError("relative projection error of a zero vector")
    resid = columns - basis.modes @ (basis.modes.T @ (w * columns))
    return np.minimum(np.sqrt(np.sum(w * resid**2, axis=0)) / norms, 1.0)


# ---------------------------------------------------------------------------
# pairwise matrices


@dataclass(frozen=True)
class DissimilarityMatrix:
    d: np.ndarray
    measure: str
    n: int | None = None

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        object.__setattr__(self, "d", _frozen(self.d))

    @property
    def m(self) -> int:
        return self.d.shape[0]

    def submatrix(self, idx: Sequence[int]) -> "DissimilarityMatrix":
        idx = np.asarray(idx, dtype=np.intp)
        return DissimilarityMatrix(self.d[np.ix_(idx, idx)], self.measure, self.n)


class _Items:
    """Per-item data prepared once for a given measure."""

    def __init__(self, blocks, measure, n, weights, params=None):
        self.measure, self.n, self.weights = measure, n, weights
        self.blocks = blocks
        self.single = measure == "sine" and n == 1 and all(b.shape[1] == 1 for b in blocks)
        if measure == "euclid_parameter":
            if params is None:
                raise ValueError("euclid_parameter needs standardized parameter vectors")
            self.params = np.asarray(params, dtype=np.float64)
        elif measure in ("sine", "grassmann") and not self.single:
            self.bases = []
            for k, b in enumerate(blocks):
                try:
                    self.bases.append(elementary_basis(b, n, weights))
                except ValueError as exc:
                    raise ValueError(f"item {k}: {exc}") from exc
        elif self.single:
            M = np.column_stack([b[:, 0] for b in blocks])
            norms = np.sqrt(weights @ M**2)
            bad = np.flatnonzero(norms == 0)
            if bad.size:
                raise ValueError(f"item {int(bad[0])}: zero-norm trajectory")
            self.unit = M / norms

    def __len__(self):
        return len(self.blocks)


def _cross(a: _Items, b: _Items, same: bool) -> np.ndarray:
    ma, mb = len(a), len(b)
    w = a.weights
    if a.measure == "euclid_parameter":
        pa, pb = a.params, b.params
        sq = (pa**2).sum(1)[:, None] + (pb**2).sum(1)[None, :] - 2 * pa @ pb.T
        out = np.sqrt(np.maximum(sq, 0.0))
        # recompute exactly where the expansion loses accuracy
        loose = np.argwhere(out < 1e-6 * np.sqrt(pa.shape[1]))
        for i, j in loose:
            out[i, j] = euclid_parameter_dissimilarity(pa[i], pb[j])
        return out
    if a.measure == "euclid_solution":
        if all(x.shape[1] == 1 for x in a.blocks + b.blocks):
            A = np.column_stack([x[:, 0] for x in a.blocks]) * np.sqrt(w)[:, None]
            B = np.column_stack([x[:, 0] for x in b.blocks]) * np.sqrt(w)[:, None]
            sq = (A**2).sum(0)[:, None] + (B**2).sum(0)[None, :] - 2 * A.T @ B
            out = np.sqrt(np.maximum(sq, 0.0))
            scale = np.sqrt((A**2).sum(0))[:, None] + np.sqrt((B**2).sum(0))[None, :]
            loose = np.argwhere(out < 1e-6 * scale)
            for i, j in loose:
                out[i, j] = euclid_solution_dissimilarity(a.blocks[i], b.blocks[j], w)
            return out
        out = np.empty((ma, mb))
        for i in range(ma):
            for j in range(mb):
                if same and j < i:
                    out[i, j] = out[j, i]
                    continue
                out[i, j] = euclid_solution_dissimilarity(a.blocks[i], b.blocks[j], w)
        return out
    if a.single and b.single:
        g = a.unit.T @ (w[:, None] * b.unit)
        out = np.sqrt(np.clip(1.0 - g**2, 0.0, 1.0))
        # cancellation in 1 - g^2 near collinearity: use the residual form there
        loose = np.argwhere(out < 1e-4)
        for i, j in loose:
            out[i, j] = _sine_single(a.unit[:, i], b.unit[:, j], w)
        return out
    f = _sine_from_bases if a.measure == "sine" else _grassmann_from_bases
    out = np.empty((ma, mb))
    for i in range(ma):
        for j in range(mb):
            if same and j < i:
                out[i, j] = out[j, i]
                continue
            out[i, j] = f(a.bases[i], b.bases[j])
    return out


def prepare_items(s: SnapshotSet, measure: str, n: int = 1, by: str = "trajectory",
                  scaler: ParameterScaler | None = None) -> _Items:
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    params = None
    if measure == "euclid_parameter":
        X = parameter_vectors(s, by)
        scaler = ParameterScaler.fit(X) if scaler is None else scaler
        params = scaler.transform(X)
    return _Items(s.blocks(by), measure, n, s.weights, params)


def dissimilarity_matrix(s: SnapshotSet, measure: str = "sine", n: int = 1,
                         by: str = "trajectory") -> DissimilarityMatrix:
    """All pairwise dissimilarities between the items of ``s``.

    Items are trajectories (``by="trajectory"``) or single snapshots
    (``by="column"``). Elementary bases are built once per item. Parameter
    vectors for ``euclid_parameter`` are standardized over ``s``.
    """
    items = prepare_items(s, measure, n, by)
    if len(items) < 2:
        raise ValueError("need at least 2 items")
    d = _cross(items, items, same=True)
    d = np.triu(d, 1)
    d = d + d.T
    return DissimilarityMatrix(d, measure, n if measure in ("sine", "grassmann") else None)


def cross_dissimilarity(a: SnapshotSet, b: SnapshotSet, measure: str = "sine", n: int = 1,
                        by: str = "trajectory", scaler: ParameterScaler | None = None,
                        b_indices: Sequence[int] | None = None) -> np.ndarray:
    """Rectangular dissimilarities from the items of ``a`` to those of ``b``.

    ``b_indices`` restricts the targets (e.g. to medoids). For
    ``euclid_parameter`` the scaler should be the one fitted on the training
    set; by default it is fitted on ``b``.
    """
    if measure == "euclid_parameter" and scaler is None:
        scaler = ParameterScaler.fit(parameter_vectors(b, by))
    ia = prepare_items(a, measure, n, by, scaler)
    if b_indices is not None:
        ib = prepare_items(_item_subset(b, b_indices, by), measure, n, by, scaler)
    else:
        ib = prepare_items(b, measure, n, by, scaler)
    return _cross(ia, ib, same=False)


def _item_subset(s: SnapshotSet, idx, by):
    return s.subset(idx) if by == "trajectory" else s.split_columns().subset(idx)


def save_dissimilarity(D: DissimilarityMatrix, path: str | Path, extra: dict | None = None) -> None:
    """CSV with a one-line JSON comment header."""
    head = {"measure": D.measure, "n": D.n, "m": D.m}
    if extra:
        head.update(extra)
    buf = io.StringIO()
    np.savetxt(buf, D.d, delimiter=",", fmt="%.17g")
    Path(path).write_text("# " + json.dumps(head, sort_keys=True) + "\n" + buf.getvalue())


def load_dissimilarity(path: str | Path) -> DissimilarityMatrix:
    text = Path(path).read_text()
    first, _, body = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing JSON header line")
    head = json.loads(first[2:])
    rows = [list(map(float, r)) for r in csv.reader(io.StringIO(body)) if r]
    d = np.array(rows, dtype=np.float64)
    if d.shape != (head["m"], head["m"]):
        raise ValueError(f"{path}: matrix is {d.shape}, header says m={head['m']}")
    return DissimilarityMatrix(d, head["measure"], head.get("n"))
