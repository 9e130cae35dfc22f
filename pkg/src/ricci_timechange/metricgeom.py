"""Conformal distances ``e^w (.) d`` on mesh graphs.

Edges join each node to its axis neighbours (and, in 2-D, its diagonal
neighbours).  An edge has the Riemannian length of the straight chart
segment under the endpoint-averaged metric, times ``exp(w)`` at the segment
midpoint (midpoint rule for the line integral of ``e^w``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .mesh import Mesh, MetricField, ScalarField

TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PathGraph:
    """Undirected weighted graph over mesh nodes.

    Attributes
    ----------
    i, j : ndarray
        Edge endpoints, ``i < j``.
    base_length : ndarray
        Edge length for ``w = 0``.
    weight : ndarray
        The conformal log-factor ``w`` at the nodes.
    length : ndarray
        ``base_length * exp(w(midpoint))``.
    """

    mesh: Mesh
    i: np.ndarray
    j: np.ndarray
    base_length: np.ndarray
    weight: np.ndarray
    length: np.ndarray
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def with_weight(self, w) -> "PathGraph":
        return _assemble(self.mesh, self.i, self.j, self.base_length, _weight(self.mesh, w))


def _weight(mesh: Mesh, w) -> np.ndarray:
    if w is None:
        return np.zeros(mesh.n_nodes)
    wv = np.asarray(getattr(w, "values", w), dtype=float)
    wv = np.broadcast_to(wv, (mesh.n_nodes,)).copy()
    if not np.all(np.isfinite(wv)):
        raise ValueError("weight must be finite")
    return wv


def _assemble(mesh, i, j, base, wv) -> PathGraph:
    length = base * np.exp(0.5 * (wv[i] + wv[j]))
    n = mesh.n_nodes
    mat = sp.coo_matrix((np.concatenate([length, length]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                        shape=(n, n)).tocsr()
    mat.sort_indices()
    return PathGraph(mesh, i, j, base, wv, length, mat)


def build_path_graph(mesh: Mesh, metric: MetricField | None = None, w=None, diagonals: bool = True) -> PathGraph:
    """Graph with axis edges and, in 2-D when ``diagonals`` is set, both diagonals."""
    d = mesh.dimension
    g = np.broadcast_to(np.eye(d), (mesh.n_nodes, d, d)) if metric is None else metric.values
    offsets = [tuple(int(a == k) for a in range(d)) for k in range(d)]
    if d == 2 and diagonals:
        offsets += [(1, 1), (1, -1)]
    nodes = np.arange(mesh.n_nodes)
    ii, jj, ll = [], [], []
    h = np.asarray(mesh.spacing)
    for off in offsets:
        nb = mesh.offset_index(off)
        dx = np.asarray(off, dtype=float) * h
        gm = 0.5 * (g + g[nb])
        ll.append(np.sqrt(np.einsum("i,nij,j->n", dx, gm, dx)))
        ii.append(nodes)
        jj.append(nb)
    i, j, base = np.concatenate(ii), np.concatenate(jj), np.concatenate(ll)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    key = lo * mesh.n_nodes + hi
    _, first = np.unique(key, return_index=True)
    if len(first) != len(key):
        raise ValueError("mesh too small: two stencil offsets reach the same neighbour")
    return _assemble(mesh, lo, hi, base, _weight(mesh, w))


def _check_node(graph: PathGraph, x: int, name: str) -> int:
    x = int(x)
    if not 0 <= x < graph.n_nodes:
        raise IndexError(f"{name} = {x} outside [0, {graph.n_nodes})")
    return x


def primal_distances(graph: PathGraph, sources) -> np.ndarray:
    """Dijkstra distances from each source (rows) to every node."""
    return np.atleast_2d(dijkstra(graph.matrix, directed=False, indices=sources))


def _predecessors(graph: PathGraph, dist: np.ndarray) -> np.ndarray:
    """Smallest-index neighbour realizing the shortest distance (deterministic tie-break)."""
    m = graph.matrix
    pred = np.full(graph.n_nodes, -1)
    row = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
    cand = dist[m.indices] + m.data
    ok = np.abs(cand - dist[row]) <= TIE_RTOL * np.maximum(dist[row], 1e-300)
    ok &= dist[m.indices] < dist[row]
    # indices are sorted within each row, so the first hit is the smallest index
    hit_rows, first = np.unique(row[ok], return_index=True)
    pred[hit_rows] = m.indices[np.flatnonzero(ok)[first]]
    return pred


def shortest_path(graph: PathGraph, x: int, y: int) -> tuple[float, list[int]]:
    """``(d(x, y), [x, ..., y])``."""
    x, y = _check_node(graph, x, "x"), _check_node(graph, y, "y")
    dist = primal_distances(graph, x)[0]
    if not np.isfinite(dist[y]):
        raise ValueError(f"nodes {x} and {y} lie in different components")
    pred = _predecessors(graph, dist)
    path = [y]
    while path[-1] != x:
        p = pred[path[-1]]
        if p < 0 or len(path) > graph.n_nodes:
            raise RuntimeError("predecessor chain broken")
        path.append(int(p))
    return float(dist[y]), path[::-1]


def conformal_distance(graph: PathGraph, x: int, y: int) -> float:
    x, y = _check_node(graph, x, "x"), _check_node(graph, y, "y")
    d = float(primal_distances(graph, x)[0, y])
    if not math.isfinite(d):
        raise ValueError(f"nodes {x} and {y} lie in different components")
    return d


def dual_potential(graph: PathGraph, y: int, max_iter: int | None = None) -> np.ndarray:
    """Largest ``phi`` with ``phi(y) = 0`` and ``|phi(u) - phi(v)| <= len(u, v)`` on every edge.

    Computed as the fixed point of ``phi(u) = min(phi(u), min_v phi(v) + len(u, v))``
    with synchronous (Jacobi) sweeps over all nodes.
    """
    y = _check_node(graph, y, "y")
    m = graph.matrix
    phi = np.full(graph.n_nodes, np.inf)
    phi[y] = 0.0
    starts = m.indptr[:-1]
    cap = graph.n_nodes + 1 if max_iter is None else max_iter
    for _ in range(cap):
        cand = np.minimum.reduceat(phi[m.indices] + m.data, starts)
        new = np.minimum(phi, cand)
        if np.array_equal(new, phi):
            if not np.all(np.isfinite(phi)):
                raise ValueError("graph is disconnected")
            return phi
        phi = new
    raise RuntimeError(f"label propagation did not converge in {cap} sweeps")


def dual_distance(graph: PathGraph, x: int, y: int) -> float:
    """``sup {phi(x) - phi(y)}`` over edge-1-Lipschitz ``phi``."""
    return float(dual_potential(graph, y)[_check_node(graph, x, "x")])


@dataclass(frozen=True)
class DistanceReport:
    source: int
    target: int
    d_primal: float
    d_dual: float
    path: tuple[int, ...]

    @property
    def relative_gap(self) -> float:
        return abs(self.d_primal - self.d_dual) / max(self.d_primal, 1e-300)


def distance_report(graph: PathGraph, x: int, y: int) -> DistanceReport:
    d, path = shortest_path(graph, x, y)
    return DistanceReport(int(x), int(y), d, dual_distance(graph, x, y), tuple(path))


def duality_sweep(graph: PathGraph, sources: Iterable[int], targets: Iterable[int]) -> dict:
    """Primal/dual agreement on all ``sources x targets`` pairs.

    One Dijkstra run serves all sources and one label propagation serves each
    target.
    """
    sources, targets = list(map(int, sources)), list(map(int, targets))
    primal = primal_distances(graph, sources)
    worst, arg = 0.0, None
    for y in targets:
        phi = dual_potential(graph, y)
        for s_idx, x in enumerate(sources):
            p, d = primal[s_idx, y], phi[x]
            gap = abs(p - d) / max(p, 1e-300) if x != y else abs(p - d)
            if gap >= worst:
                worst, arg = gap, (x, y)
    return {"pairs": len(sources) * len(targets), "max_relative_gap": worst, "argmax": arg}


def comparison_bounds_check(graph: PathGraph, w, samples) -> dict:
    """``e^{min w} d <= d^w <= e^{max w} d`` on sampled pairs ``[(x, y), ...]``.

    ``d`` uses the same graph with ``w = 0``.  Reports the smallest relative
    slack of each bound (non-negative means the bound holds).
    """
    wv = _weight(graph.mesh, w)
    gw = graph.with_weight(wv)
    g0 = graph.with_weight(0.0)
    pairs = np.asarray(list(samples), dtype=int).reshape(-1, 2)
    src = np.unique(pairs[:, 0])
    row = {s: k for k, s in enumerate(src)}
    dw_all, d0_all = primal_distances(gw, src), primal_distances(g0, src)
    r = np.array([row[s] for s in pairs[:, 0]])
    dw, d0 = dw_all[r, pairs[:, 1]], d0_all[r, pairs[:, 1]]
    lo, hi = math.exp(wv.min()) * d0, math.exp(wv.max()) * d0
    scale = np.maximum(dw, 1e-300)
    lower_slack = (dw - lo) / scale
    upper_slack = (hi - dw) / scale
    nz = pairs[:, 0] != pairs[:, 1]
    return {
        "pairs": int(len(pairs)),
        "min_lower_slack": float(lower_slack[nz].min()) if nz.any() else 0.0,
        "min_upper_slack": float(upper_slack[nz].min()) if nz.any() else 0.0,
        "w_min": float(wv.min()),
        "w_max": float(wv.max()),
    }


@dataclass(frozen=True)
class VolumeGrowthVerdict:
    """Finite-window reading of the volume-growth condition.

    ``lower_*`` track ``f(r)/r`` and ``upper_*`` track ``p(f^{-1}(r))/r^2``
    on the tail window (second half of the range) and the window before it
    (second quarter).  A quantity is judged to escape its bound when it moves
    by more than ``growth`` between the two windows.
    """

    r_max: float
    grid: int
    growth: float
    window: tuple[float, float]
    lower_tail: float
    lower_prior: float
    upper_tail: float
    upper_prior: float

    @property
    def lower_ok(self) -> bool:
        return self.lower_tail > 0 and self.lower_tail * self.growth >= self.lower_prior

    @property
    def upper_ok(self) -> bool:
        if not math.isfinite(self.upper_tail):
            return False
        return self.upper_tail <= self.growth * self.upper_prior or self.upper_tail == 0.0

    @property
    def satisfied(self) -> bool:
        return self.lower_ok and self.upper_ok


def volume_growth_condition(p: Callable[[np.ndarray], np.ndarray], q: Callable[[np.ndarray], np.ndarray],
                            r_max: float, grid: int, growth: float = 4.0) -> VolumeGrowthVerdict:
    """Check ``liminf f(r)/r > 0`` and ``limsup p(f^{-1}(r))/r^2 < inf`` on ``[0, r_max]``.

    ``f(r) = int_0^r exp(-q(s)) ds`` by the composite trapezoidal rule.

    Raises
    ------
    ValueError
        If the computed ``f`` is not strictly increasing.
    """
    if grid < 8 or r_max <= 0:
        raise ValueError("need grid >= 8 and r_max > 0")
    r = np.linspace(0.0, r_max, grid + 1)
    with np.errstate(over="ignore"):
        e = np.exp(-np.broadcast_to(np.asarray(q(r), dtype=float), r.shape))
    f = np.concatenate([[0.0], np.cumsum(0.5 * (e[1:] + e[:-1]) * np.diff(r))])
    if not np.all(np.diff(f) > 0) or not np.all(np.isfinite(f)):
        raise ValueError("f is not strictly increasing; quadrature of exp(-q) failed")
    tail, prior = r >= r_max / 2, (r >= r_max / 4) & (r < r_max / 2)
    ratio = f[1:] / r[1:]
    lower_tail, lower_prior = ratio[tail[1:]].min(), ratio[prior[1:]].min()
    s = f[1:]
    finv = np.interp(s, f, r)
    with np.errstate(over="ignore", invalid="ignore"):
        pv = np.broadcast_to(np.asarray(p(finv), dtype=float), s.shape)
    top = f[-1]
    upper = pv / s**2
    st, sp_ = s >= top / 2, (s >= top / 4) & (s < top / 2)
    return VolumeGrowthVerdict(r_max, grid, growth, (r_max / 2, r_max),
                               float(lower_tail), float(lower_prior),
                               float(np.max(upper[st])), float(np.max(upper[sp_])))


def write_path_csv(path: str | Path, graph: PathGraph, nodes) -> Path:
    """``order, node, x0[, x1]`` rows along the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coords = graph.mesh.coordinates
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["order", "node"] + [f"x{k}" for k in range(graph.mesh.dimension)])
        for k, v in enumerate(nodes):
            wr.writerow([k, int(v), *(repr(float(c)) for c in coords[v])])
    return path
