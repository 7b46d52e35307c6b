"""Dictionaries of local reduced-order bases and the matched global basis."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from .clustering import Clustering
from .geometry import ReducedBasis, pod_basis
from .problems import (Heat1dParams, SnapshotSet, assemble_heat1d, export_snapshots,
                       import_snapshots)


def integer_cube_root(n: int) -> int:
    r = int(round(n ** (1.0 / 3.0)))
    while r**3 > n:
        r -= 1
    while (r + 1) ** 3 <= n:
        r += 1
    return r


@dataclass(frozen=True)
class RomDictionary:
    bases: tuple[ReducedBasis, ...]
    medoid_indices: tuple[int, ...]
    selection: tuple[tuple[int, ...], ...]
    hyper: tuple[int, int, int]
    measure: str | None = None

    @property
    def K(self) -> int:
        return len(self.bases)

    @property
    def N(self) -> int:
        return self.hyper[1]

    @property
    def weights(self) -> np.ndarray:
        return self.bases[0].weights

    def selected(self) -> list[int]:
        return [i for group in self.selection for i in group]


def _columns(s: SnapshotSet, indices: Sequence[int]) -> np.ndarray:
    return np.hstack([s.trajectory(i) for i in indices])


def build_dictionary(
    s: SnapshotSet,
    clustering: Clustering,
    selection: Sequence[Sequence[int]],
    N: int | None = None,
    *,
    tol: float | None = None,
    enforce_speedup: bool = False,
) -> RomDictionary:
    """One POD basis per cluster from that cluster's selected trajectories.

    ``N`` fixes the size of every basis; ``tol`` instead truncates each
    cluster by its own energy criterion (bases of unequal sizes). With
    ``enforce_speedup`` the size must not exceed the integer cube root of
    the number of dofs.
    """
    if len(selection) != clustering.K:
        raise ValueError(f"selection has {len(selection)} groups for K={clustering.K}")
    sizes = {len(g) for g in selection}
    if len(sizes) != 1:
        raise ValueError("every cluster must contribute the same number of snapshots")
    n_s = sizes.pop()
    if N is not None and enforce_speedup and N > integer_cube_root(s.n_dof):
        raise ValueError(f"N={N} exceeds floor(n_dof^(1/3))={integer_cube_root(s.n_dof)}")
    bases = []
    for k, group in enumerate(selection):
        cols = _columns(s, group)
        try:
            if N is None:
                bases.append(pod_basis(cols, s.weights, tol=tol))
            else:
                bases.append(pod_basis(cols, s.weights, n_modes=N))
        except ValueError as exc:
            raise ValueError(f"cluster {k}: {exc}") from exc
    n_label = N if N is not None else max(b.n_modes for b in bases)
    return RomDictionary(
        tuple(bases),
        tuple(int(i) for i in clustering.medoids),
        tuple(tuple(int(i) for i in g) for g in selection),
        (clustering.K, n_label, n_s),
        clustering.measure,
    )


def build_global_rom(s: SnapshotSet, selection: Sequence[int], N: int) -> ReducedBasis:
    """Single POD basis with ``N`` modes from the selected trajectories."""
    return pod_basis(_columns(s, [int(i) for i in np.ravel(selection)]), s.weights, n_modes=N)


def _banded_times(ab: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Product of the tridiagonal matrix stored in ``solve_banded`` layout with ``X``."""
    Y = ab[1][:, None] * X
    Y[:-1] += ab[0, 1:][:, None] * X[1:]
    Y[1:] += ab[2, :-1][:, None] * X[:-1]
    return Y


def reduced_operator_heat1d(params: Heat1dParams, basis: ReducedBasis) -> np.ndarray:
    """Dense ``N x N`` reduced stiffness ``Psi^T K Psi`` on the interior unknowns."""
    ab, _ = assemble_heat1d(params, basis.n_dof)
    psi = basis.modes[1:-1]
    return psi.T @ _banded_times(ab, psi)


def reduced_galerkin_solve_heat1d(params: Heat1dParams, basis: ReducedBasis):
    """Galerkin projection of the heat system onto ``basis``.

    The basis spans ``u - u0`` (it vanishes at both boundary nodes). Returns
    the reduced coordinates and the reconstructed nodal field.
    """
    ab, f = assemble_heat1d(params, basis.n_dof)
    psi = basis.modes[1:-1]
    A = psi.T @ _banded_times(ab, psi)
    b = psi.T @ f
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            gamma = scipy.linalg.solve(A, b, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise np.linalg.LinAlgError(f"singular reduced system: {exc}") from exc
    if not np.all(np.isfinite(gamma)):
        raise np.linalg.LinAlgError("singular reduced system")
    return gamma, params.u0 + basis.modes @ gamma


# ---------------------------------------------------------------------------
# persistence


def _basis_set(b: ReducedBasis) -> SnapshotSet:
    return SnapshotSet(b.modes, b.weights, [(j, j + 1) for j in range(b.n_modes)])


def save_basis(b: ReducedBasis, path: str | Path, extra: dict | None = None) -> None:
    meta = {"singular_values": b.singular_values.tolist(), "discarded_energy": b.discarded_energy}
    export_snapshots(_basis_set(b), path, {**(extra or {}), **meta})


def load_basis(path: str | Path) -> ReducedBasis:
    path = Path(path)
    s = import_snapshots(path)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    return ReducedBasis(s.values, np.asarray(meta["singular_values"]), s.weights,
                        meta.get("discarded_energy", 0.0))


def save_dictionary(d: RomDictionary, directory: str | Path, extra: dict | None = None) -> None:
    """Directory with one snapshot-format file per basis and ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, b in enumerate(d.bases):
        name = f"basis_{k:03d}.robsnap"
        save_basis(b, directory / name, extra)
        files.append(name)
    manifest = {"K": d.hyper[0], "N": d.hyper[1], "n_s": d.hyper[2], "measure": d.measure,
                "medoids": list(d.medoid_indices), "selection": [list(g) for g in d.selection],
                "bases": files}
    if extra:
        manifest.update(extra)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dictionary(directory: str | Path) -> RomDictionary:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    bases = tuple(load_basis(directory / f) for f in manifest["bases"])
    return RomDictionary(bases, tuple(manifest["medoids"]),
                         tuple(tuple(g) for g in manifest["selection"]),
                         (manifest["K"], manifest["N"], manifest["n_s"]), manifest.get("measure"))


def cluster_basis_sizes(s: SnapshotSet, clustering: Clustering, tol: float) -> list[int]:
    """Size of the tolerance-truncated POD basis of every cluster's full membership."""
    return [pod_basis(_columns(s, clustering.members(k)), s.weights, tol=tol).n_modes
            for k in range(clustering.K)]
