"""Snapshot datasets: the 1D bimaterial heat problem, the 2D advected Gaussian,
and binary import/export of snapshot matrices.

A :class:`SnapshotSet` stores one discretized field per column. Columns are
grouped into trajectories (one per parameter point); steady problems have
trajectories of length one.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy.linalg

MAGIC = b"ROBSNAP1"
CONDUCTIVITY_RATIO = 1000.0


class SnapshotFormatError(ValueError):
    """Raised when a snapshot file or its sidecar is malformed."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="F", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SnapshotSet:
    """Snapshot matrix with inner-product weights and trajectory grouping.

    Parameters
    ----------
    values : (n_dof, m_total) array
        One discretized field per column.
    weights : (n_dof,) array
        Diagonal (lumped) inner-product weights, all strictly positive.
    trajectories : sequence of (start, stop)
        Contiguous, disjoint column ranges covering ``values``.
    params : list of dict
        One parameter record per trajectory.
    mesh_meta : dict
        Free-form mesh description (node coordinates, grid size).
    """

    values: np.ndarray
    weights: np.ndarray
    trajectories: tuple[tuple[int, int], ...]
    params: tuple[dict, ...] = ()
    mesh_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = _frozen(np.atleast_2d(self.values))
        weights = _frozen(np.ravel(self.weights))
        if values.ndim != 2:
            raise ValueError("values must be a 2-D matrix")
        if weights.shape[0] != values.shape[0]:
            raise ValueError(
                f"weights: length {weights.shape[0]} != n_dof {values.shape[0]}"
            )
        bad = np.flatnonzero(~(weights > 0))
        if bad.size:
            raise ValueError(f"weights: non-positive entry at index {int(bad[0])}")
        trajectories = tuple((int(a), int(b)) for a, b in self.trajectories)
        expected = 0
        for k, (a, b) in enumerate(trajectories):
            if a != expected or b <= a:
                raise ValueError(f"trajectories: range {k} = ({a}, {b}) is not contiguous")
            expected = b
        if expected != values.shape[1]:
            raise ValueError(
                f"trajectories: cover {expected} columns, values has {values.shape[1]}"
            )
        params = tuple(dict(p) for p in self.params)
        if params and len(params) != len(trajectories):
            raise ValueError(
                f"params: {len(params)} records for {len(trajectories)} trajectories"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "trajectories", trajectories)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "mesh_meta", dict(self.mesh_meta))

    @property
    def n_dof(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)

    def trajectory(self, i: int) -> np.ndarray:
        a, b = self.trajectories[i]
        return self.values[:, a:b]

    def blocks(self, by: str = "trajectory") -> list[np.ndarray]:
        """Column blocks treated as clustering items.

        ``by="trajectory"`` yields one block per trajectory, ``by="column"``
        one single-column block per snapshot.
        """
        if by == "trajectory":
            return [self.trajectory(i) for i in range(self.n_trajectories)]
        if by == "column":
            return [self.values[:, j : j + 1] for j in range(self.n_columns)]
        raise ValueError(f"unknown grouping {by!r}")

    def column_owner(self) -> np.ndarray:
        """Trajectory index of every column."""
        owner = np.empty(self.n_columns, dtype=np.intp)
        for k, (a, b) in enumerate(self.trajectories):
            owner[a:b] = k
        return owner

    def split_columns(self) -> "SnapshotSet":
        """Same data with every column promoted to its own trajectory."""
        owner = self.column_owner()
        params = []
        if self.params:
            for j in range(self.n_columns):
                rec = dict(self.params[owner[j]])
                if "times" in rec:
                    rec["times"] = [rec["times"][j - self.trajectories[owner[j]][0]]]
                params.append(rec)
        return SnapshotSet(self.values, self.weights, [(j, j + 1) for j in range(self.n_columns)],
                           params, self.mesh_meta)

    def subset(self, indices: Sequence[int]) -> "SnapshotSet":
        """New set holding the given trajectories, in the given order."""
        indices = [int(i) for i in indices]
        cols, ranges, start = [], [], 0
        for i in indices:
            block = self.trajectory(i)
            cols.append(block)
            ranges.append((start, start + block.shape[1]))
            start += block.shape[1]
        params = [self.params[i] for i in indices] if self.params else []
        return SnapshotSet(np.hstack(cols), self.weights, ranges, params, self.mesh_meta)


# ---------------------------------------------------------------------------
# 1D heterogeneous steady heat equation


@dataclass(frozen=True)
class Heat1dParams:
    zeta: float
    eps: float
    source: np.ndarray
    lambda1: float = 1.0
    L: float = 1.0
    u0: float = 0.0
    contrast: float = CONDUCTIVITY_RATIO

    def __post_init__(self):
        if not 0.1 <= self.zeta <= 0.5:
            raise ValueError(f"zeta={self.zeta} outside [0.1, 0.5]")
        if not 0.0 <= self.eps <= 1.0 - self.zeta + 1e-12:
            raise ValueError(f"eps={self.eps} outside [0, 1 - zeta]")
        object.__setattr__(self, "source", np.asarray(self.source, dtype=np.float64))

    def element_conductivity(self, n_nodes: int) -> np.ndarray:
        """Conductivity at the midpoint of each of the ``n_nodes - 1`` elements.

        Elements inside ``[eps L, (eps + zeta) L]`` get ``lambda1``, the others
        ``contrast * lambda1`` (``contrast=1`` gives a homogeneous bar).
        """
        h = self.L / (n_nodes - 1)
        mid = (np.arange(n_nodes - 1) + 0.5) * h
        lo, hi = self.eps * self.L, (self.eps + self.zeta) * self.L
        inside = (mid >= lo) & (mid <= hi)
        return np.where(inside, self.lambda1, self.contrast * self.lambda1)


@lru_cache(maxsize=8)
def _gp_factor(n_nodes: int, L: float, sigma: float, corr_len: float) -> np.ndarray:
    x = np.linspace(0.0, L, n_nodes)
    cov = sigma**2 * np.exp(-np.abs(x[:, None] - x[None, :]) / corr_len)
    jitter = 1e-12 * sigma**2
    for _ in range(8):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n_nodes))
        except np.linalg.LinAlgError:
            jitter *= 100.0
    raise np.linalg.LinAlgError(
        f"GP covariance factorization failed with jitter up to {jitter / 100:.1e}"
    )


def sample_gp_source(
    n_nodes: int,
    L: float = 1.0,
    sigma: float = 1.0,
    corr_len: float = 0.1,
    rng_seed: int | np.random.Generator = 0,
    size: int | None = None,
) -> np.ndarray:
    """Draw a zero-mean Gaussian process with exponential covariance on a
    uniform grid of ``n_nodes`` points over ``[0, L]``.

    Returns one vector, or an ``(size, n_nodes)`` array when ``size`` is given.
    """
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    if not sigma > 0 or not corr_len > 0:
        raise ValueError("sigma and corr_len must be > 0")
    rng = np.random.default_rng(rng_seed)
    chol = _gp_factor(int(n_nodes), float(L), float(sigma), float(corr_len))
    if size is None:
        return chol @ rng.standard_normal(n_nodes)
    return (chol @ rng.standard_normal((n_nodes, size))).T


def assemble_heat1d(params: Heat1dParams, n_nodes: int):
    """Interior stiffness (banded, ``solve_banded`` layout) and load vector.

    The load uses the trapezoidal rule, so ``f_i = h * s_i`` at interior nodes.
    """
    if n_nodes < 3:
        raise ValueError("n_nodes must be >= 3")
    if params.source.shape != (n_nodes,):
        raise ValueError(f"source has {params.source.size} entries, expected {n_nodes}")
    lam = params.element_conductivity(n_nodes)
    if np.any(lam <= 0):
        raise ValueError("conductivity must be positive everywhere")
    h = params.L / (n_nodes - 1)
    k = lam / h
    ab = np.zeros((3, n_nodes - 2))
    ab[1] = k[:-1] + k[1:]
    ab[0, 1:] = -k[1:-1]
    ab[2, :-1] = -k[1:-1]
    f = h * params.source[1:-1]
    return ab, f


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)


def solve_heat1d(params: Heat1dParams, n_nodes: int | None = None) -> np.ndarray:
    """P1 finite-element solution of ``-(lambda u')' = s`` with ``u = u0`` at both ends.

    Returns all nodal temperatures, boundary values included.
    """
    n_nodes = params.source.size if n_nodes is None else n_nodes
    ab, f = assemble_heat1d(params, n_nodes)
    try:
        q = scipy.linalg.solve_banded((1, 1), ab, f)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"singular heat system: {exc}") from exc
    u = np.full(n_nodes, params.u0, dtype=np.float64)
    u[1:-1] += q
    return u


def trapezoidal_weights(n_nodes: int, L: float = 1.0) -> np.ndarray:
    h = L / (n_nodes - 1)
    w = np.full(n_nodes, h)
    w[[0, -1]] = h / 2
    return w


def generate_heat1d_dataset(
    n_samples: int,
    n_nodes: int = 2000,
    rng_seed: int = 0,
    *,
    sigma: float = 1.0,
    corr_len: float | None = None,
    lambda1: float = 1.0,
    L: float = 1.0,
    u0: float = 0.0,
) -> SnapshotSet:
    """Random bimaterial heat solutions: ``zeta ~ U(0.1, 0.5)``,
    ``eps ~ U(0, 1 - zeta)`` and a GP heat source per sample."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    corr_len = 0.1 * L if corr_len is None else corr_len
    rng = np.random.default_rng(rng_seed)
    values = np.empty((n_nodes, n_samples), order="F")
    params = []
    for i in range(n_samples):
        zeta = rng.uniform(0.1, 0.5)
        eps = rng.uniform(0.0, 1.0 - zeta)
        source = sample_gp_source(n_nodes, L, sigma, corr_len, rng)
        p = Heat1dParams(zeta, eps, source, lambda1, L, u0)
        try:
            values[:, i] = solve_heat1d(p, n_nodes)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise type(exc)(f"sample {i}: {exc}") from exc
        params.append(
            {"zeta": zeta, "eps": eps, "source": source.tolist(),
             "lambda1": lambda1, "L": L, "u0": u0}
        )
    return SnapshotSet(
        values,
        trapezoidal_weights(n_nodes, L),
        [(i, i + 1) for i in range(n_samples)],
        params,
        {"kind": "heat1d", "x": np.linspace(0.0, L, n_nodes).tolist()},
    )


def heat1d_params(record: dict) -> Heat1dParams:
    """Rebuild :class:`Heat1dParams` from a stored parameter record."""
    return Heat1dParams(
        record["zeta"], record["eps"], np.asarray(record["source"]),
        record.get("lambda1", 1.0), record.get("L", 1.0), record.get("u0", 0.0),
    )


# ---------------------------------------------------------------------------
# 2D advected Gaussian (analytical solution)


@dataclass(frozen=True)
class Advection2dParams:
    U0: float
    xi2_0: float
    l: float = 0.1
    c: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError("l must be > 0")
        if self.t < 0:
            raise ValueError("t must be >= 0")


def advection2d_field(p: Advection2dParams, xi1: np.ndarray, xi2: np.ndarray) -> np.ndarray:
    return p.U0 * np.exp(-((xi1 - p.c * p.t) ** 2 + (xi2 - p.xi2_0) ** 2) / p.l**2)


def generate_advection2d_dataset(
    amplitudes: Sequence[float] = (0.1, 1.0),
    centers: Sequence[float] = (0.0, 0.5, 1.0),
    n_timesteps: int = 100,
    t_end: float = 1.0,
    grid_n: int = 101,
    *,
    l: float = 0.1,
    c: float = 1.0,
) -> SnapshotSet:
    """Analytical advected-Gaussian snapshots on a ``grid_n x grid_n`` node grid.

    One trajectory per ``(U0, xi2_0)`` pair, evaluated at ``n_timesteps``
    equispaced times in ``(0, t_end]``.
    """
    if grid_n < 2 or n_timesteps < 1:
        raise ValueError("grid_n must be >= 2 and n_timesteps >= 1")
    s = np.linspace(0.0, 1.0, grid_n)
    xi1, xi2 = (a.ravel() for a in np.meshgrid(s, s, indexing="xy"))
    times = t_end * np.arange(1, n_timesteps + 1) / n_timesteps
    cols, params, ranges = [], [], []
    for U0 in amplitudes:
        for xc in centers:
            start = len(cols)
            for t in times:
                cols.append(advection2d_field(Advection2dParams(U0, xc, l, c, t), xi1, xi2))
            ranges.append((start, len(cols)))
            params.append({"U0": float(U0), "xi2_0": float(xc), "l": l, "c": c,
                           "times": times.tolist()})
    h = 1.0 / (grid_n - 1)
    return SnapshotSet(
        np.column_stack(cols),
        np.full(grid_n * grid_n, h * h),
        ranges,
        params,
        {"kind": "advection2d", "grid_n": grid_n, "x": xi1.tolist(), "y": xi2.tolist()},
    )


# ---------------------------------------------------------------------------
# train/test split and parameter vectors


def split_snapshot_set(s: SnapshotSet, n_train: int, rng_seed: int = 0):
    """Seeded shuffle of the trajectories, then first ``n_train`` / the rest."""
    if not 0 < n_train < s.n_trajectories:
        raise ValueError(f"n_train must lie in (0, {s.n_trajectories})")
    perm = np.random.default_rng(rng_seed).permutation(s.n_trajectories)
    return s.subset(perm[:n_train]), s.subset(perm[n_train:])


def parameter_vectors(s: SnapshotSet, by: str = "trajectory") -> np.ndarray:
    """Flatten numeric parameter records into one row per clustering item.

    Array-valued entries are concatenated in record key order. With
    ``by="column"`` each row is its trajectory's record followed by the time
    of the column when a ``times`` entry exists.
    """
    if not s.params:
        raise ValueError("snapshot set carries no parameter records")
    rows = []
    for rec, (a, b) in zip(s.params, s.trajectories):
        base = []
        for key in sorted(rec):
            if key == "times":
                continue
            base.append(np.ravel(np.asarray(rec[key], dtype=np.float64)))
        base = np.concatenate(base) if base else np.empty(0)
        if by == "trajectory":
            rows.append(base)
        else:
            times = rec.get("times", [np.nan] * (b - a))
            rows.extend(np.append(base, t) for t in times)
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# import / export


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def export_snapshots(s: SnapshotSet, path: str | Path, extra_meta: dict | None = None) -> None:
    """Write ``s`` as a little-endian ROBSNAP1 file plus a ``.meta.json`` sidecar."""
    path = Path(path)
    offsets = np.array([0] + [b for _, b in s.trajectories], dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3Q", s.n_dof, s.n_columns, s.n_trajectories))
        fh.write(s.weights.astype("<f8").tobytes())
        fh.write(offsets.tobytes())
        fh.write(np.asfortranarray(s.values).astype("<f8").tobytes(order="F"))
    meta: dict[str, Any] = {"params": list(s.params), "mesh_meta": s.mesh_meta}
    if extra_meta:
        meta.update(extra_meta)
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh)


def import_snapshots(path: str | Path) -> SnapshotSet:
    """Read a ROBSNAP1 file (and its sidecar when present)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 32 or raw[:8] != MAGIC:
        raise SnapshotFormatError(f"{path}: header: bad magic or truncated header")
    n_dof, m, n_traj = struct.unpack_from("<3Q", raw, 8)
    expected = 32 + 8 * (n_dof + n_traj + 1 + n_dof * m)
    if len(raw) != expected:
        raise SnapshotFormatError(
            f"{path}: values: file holds {len(raw)} bytes, header implies {expected}"
        )
    pos = 32
    weights = np.frombuffer(raw, "<f8", n_dof, pos).astype(np.float64)
    pos += 8 * n_dof
    offsets = np.frombuffer(raw, "<u8", n_traj + 1, pos).astype(np.int64)
    pos += 8 * (n_traj + 1)
    values = np.frombuffer(raw, "<f8", n_dof * m, pos).reshape((n_dof, m), order="F")
    bad = np.flatnonzero(~(weights > 0))
    if bad.size:
        raise SnapshotFormatError(f"{path}: weights: non-positive entry at index {int(bad[0])}")
    if offsets[0] != 0 or offsets[-1] != m or np.any(np.diff(offsets) <= 0):
        raise SnapshotFormatError(f"{path}: trajectories: invalid offsets")
    params, mesh_meta = [], {}
    side = _sidecar(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise SnapshotFormatError(f"{side}: params: invalid JSON ({exc})") from exc
        params, mesh_meta = meta.get("params", []), meta.get("mesh_meta", {})
    ranges = list(zip(offsets[:-1].tolist(), offsets[1:].tolist()))
    try:
        return SnapshotSet(values, weights, ranges, params, mesh_meta)
    except ValueError as exc:
        raise SnapshotFormatError(f"{path}: {exc}") from exc


def export_snapshots_csv(s: SnapshotSet, path: str | Path) -> None:
    """Plain CSV of the value matrix (one row per dof) with a header row."""
    if s.values.size > 1_000_000:
        raise ValueError(f"CSV export limited to 1e6 entries, got {s.values.size}")
    header = ",".join(["weight"] + [f"c{j}" for j in range(s.n_columns)])
    np.savetxt(path, np.column_stack([s.weights, s.values]), delimiter=",",
               header=header, comments="", fmt="%.17g")
