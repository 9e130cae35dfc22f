"""Periodic structured meshes on 1-D and 2-D model spaces, and fields sampled on them.

Nodes are numbered in C order over ``mesh.shape``; in 2-D node ``(i, j)`` has
index ``i * shape[1] + j``.  Every axis wraps around.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

MIN_NODES_PER_AXIS = 8
METRIC_EIGEN_FLOOR = 1e-10


class MeshError(ValueError):
    """Raised for invalid mesh parameters or non-samplable data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Periodic tensor-product grid.

    Attributes
    ----------
    shape : tuple of int
        Node count per axis.
    spacing : tuple of float
        Grid step per axis.
    origin : tuple of float
        Chart coordinate of node 0.
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] = None  # type: ignore[assignment]
    periodic: tuple[bool, ...] = field(init=False)

    def __post_init__(self):
        if len(self.shape) not in (1, 2) or len(self.spacing) != len(self.shape):
            raise MeshError(f"unsupported mesh shape {self.shape}")
        if any(n < MIN_NODES_PER_AXIS for n in self.shape):
            raise MeshError(
                f"every axis needs at least {MIN_NODES_PER_AXIS} nodes, got {self.shape}"
            )
        if any(not np.isfinite(h) or h <= 0 for h in self.spacing):
            raise MeshError(f"spacing must be positive, got {self.spacing}")
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * len(self.shape))
        object.__setattr__(self, "periodic", (True,) * len(self.shape))

    @property
    def dimension(self) -> int:
        return len(self.shape)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axes(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays, each of length ``n_nodes``."""
        ticks = [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]
        grids = np.meshgrid(*ticks, indexing="ij")
        return [g.ravel() for g in grids]

    @property
    def coordinates(self) -> np.ndarray:
        """Array of shape ``(n_nodes, dimension)``."""
        return np.stack(self.axes, axis=1)

    def grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape per-node data (leading axis) to grid layout."""
        values = np.asarray(values)
        return values.reshape(self.shape + values.shape[1:])

    def flat(self, values: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`grid`."""
        values = np.asarray(values)
        return values.reshape((self.n_nodes,) + values.shape[self.dimension:])

    def index(self, *ijk: int) -> int:
        return int(np.ravel_multi_index(tuple(i % n for i, n in zip(ijk, self.shape)), self.shape))

    def offset_index(self, offset: Sequence[int]) -> np.ndarray:
        """Index of the node ``offset`` grid steps away from every node (periodic)."""
        idx = np.arange(self.n_nodes).reshape(self.shape)
        shift = tuple(-int(o) for o in offset)
        return np.roll(idx, shift, axis=tuple(range(self.dimension))).ravel()

    @property
    def neighbors(self) -> np.ndarray:
        """Array ``(n_nodes, 2 * dimension)``: the -/+ neighbour along each axis."""
        cols = []
        for axis in range(self.dimension):
            for step in (-1, 1):
                off = [0] * self.dimension
                off[axis] = step
                cols.append(self.offset_index(off))
        return np.stack(cols, axis=1)


def build_circle_mesh(n_nodes: int, circumference: float, origin: float = 0.0) -> Mesh:
    if circumference <= 0:
        raise MeshError("circumference must be positive")
    return Mesh((int(n_nodes),), (circumference / n_nodes,), (float(origin),))


def build_torus_mesh(nx: int, ny: int, lx: float, ly: float,
                     origin: tuple[float, float] = (0.0, 0.0)) -> Mesh:
    if lx <= 0 or ly <= 0:
        raise MeshError("side lengths must be positive")
    return Mesh((int(nx), int(ny)), (lx / nx, ly / ny), tuple(map(float, origin)))


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.broadcast_to(np.asarray(self.values, dtype=float), (self.mesh.n_nodes,))
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise MeshError(f"non-finite value at node {bad[0]} (of {bad.size} bad nodes)")
        object.__setattr__(self, "values", _frozen(values))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def grid(self) -> np.ndarray:
        return self.mesh.grid(self.values)

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.mesh, values)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric positive definite ``d x d`` matrix at every node."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        d = self.mesh.dimension
        g = np.broadcast_to(np.asarray(self.values, dtype=float), (self.mesh.n_nodes, d, d))
        bad = np.flatnonzero(~np.isfinite(g).all(axis=(1, 2)))
        if bad.size:
            raise MeshError(f"non-finite metric at node {bad[0]}")
        asym = np.abs(g - np.swapaxes(g, 1, 2)).max(axis=(1, 2))
        scale = np.abs(g).max(axis=(1, 2))
        bad = np.flatnonzero(asym > 1e-12 * scale)
        if bad.size:
            raise MeshError(f"metric not symmetric at node {bad[0]}")
        lam = np.linalg.eigvalsh(g)[:, 0]
        bad = np.flatnonzero(lam < METRIC_EIGEN_FLOOR)
        if bad.size:
            raise MeshError(
                f"metric not positive definite at node {bad[0]} "
                f"(smallest eigenvalue {lam[bad[0]]:.3e})"
            )
        object.__setattr__(self, "values", _frozen(g))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.values)

    @property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.values)

    def conformal(self, w: ScalarField) -> "MetricField":
        """The metric ``exp(2w) g``."""
        return MetricField(self.mesh, np.exp(2 * w.values)[:, None, None] * self.values)


def sample_scalar(mesh: Mesh, fn: Callable[..., np.ndarray]) -> ScalarField:
    """Evaluate ``fn(*axes)`` at every node.

    ``fn`` receives one coordinate array per axis (numpy broadcasting
    convention) and may return a scalar for constant fields.
    """
    with np.errstate(all="ignore"):
        values = np.asarray(fn(*mesh.axes), dtype=float)
    return ScalarField(mesh, np.broadcast_to(values, (mesh.n_nodes,)))


def sample_metric(mesh: Mesh, fn: Callable[..., object]) -> MetricField:
    """Evaluate a metric callback at every node.

    ``fn(*axes)`` returns either an array broadcastable to
    ``(n_nodes, d, d)`` or a nested ``d x d`` list of scalars/arrays.
    In 1-D a bare scalar or array is read as the single component ``g_11``.
    """
    d, n = mesh.dimension, mesh.n_nodes
    with np.errstate(all="ignore"):
        raw = fn(*mesh.axes)
    if isinstance(raw, (list, tuple)):
        rows = [[np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in row] for row in raw]
        g = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    else:
        g = np.asarray(raw, dtype=float)
        if d == 1 and g.ndim <= 1:
            g = np.broadcast_to(g, (n,))[:, None, None]
    return MetricField(mesh, np.broadcast_to(g, (n, d, d)))


def flat_metric(mesh: Mesh) -> MetricField:
    return MetricField(mesh, np.eye(mesh.dimension))


def write_field_csv(path: str | Path, mesh: Mesh, **columns: np.ndarray) -> Path:
    """Write ``node, x0[, x1], <columns...>``; matrix-valued columns are flattened."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coords = mesh.coordinates
    flat_cols: dict[str, np.ndarray] = {}
    for name, arr in columns.items():
        arr = np.asarray(getattr(arr, "values", arr), dtype=float)
        if arr.ndim == 1:
            flat_cols[name] = arr
        else:
            arr = arr.reshape(arr.shape[0], -1)
            d = int(round(np.sqrt(arr.shape[1])))
            for k in range(arr.shape[1]):
                flat_cols[f"{name}_{k // d}{k % d}"] = arr[:, k]
    header = ["node"] + [f"x{i}" for i in range(mesh.dimension)] + list(flat_cols)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(mesh.n_nodes):
            writer.writerow([i, *(repr(float(c)) for c in coords[i]),
                             *(repr(float(v[i])) for v in flat_cols.values())])
    return path
