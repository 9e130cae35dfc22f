"""Convexifying a domain by a conformal weight built from its signed distance.

For a domain ``Omega`` with signed distance ``V`` (negative inside), the
weight ``w = phi(-l' V)`` with the cutoff :class:`Cutoff` makes paths that
dip into the complement more expensive, so ``d^w``-geodesics between nearby
points of ``Omega`` stay in ``Omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .dimension import check_dimension
from .dirichlet import Generator
from .mesh import Mesh, ScalarField
from .metricgeom import PathGraph, _predecessors, build_path_graph, primal_distances

BAND_CELLS = 4
AUDIT_POINTS = 1000


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Inside flags of a domain on a mesh.

    Attributes
    ----------
    inside : ndarray of bool
    band_radius : float
        Width excluded around the boundary from interior checks;
        defaults to ``4 h``.
    level_set : ndarray or None
        Optional nodal values of a continuous function negative exactly on
        ``inside``; enables the polyline signed distance.
    level_set_is_distance : bool
        Declares ``level_set`` to be the exact signed distance itself
        (as for :func:`disc_mask`), enabling ``method="level_set"``.
    """

    mesh: Mesh
    inside: np.ndarray
    band_radius: float | None = None
    level_set: np.ndarray | None = None
    level_set_is_distance: bool = False

    def __post_init__(self):
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != (self.mesh.n_nodes,):
            raise ValueError("inside must have one flag per node")
        if inside.all() or not inside.any():
            raise ValueError("domain mask needs both inside and outside nodes")
        object.__setattr__(self, "inside", inside)
        if self.band_radius is None:
            object.__setattr__(self, "band_radius", BAND_CELLS * max(self.mesh.spacing))
        if self.level_set is not None:
            ls = np.asarray(self.level_set, dtype=float)
            if not np.array_equal(ls < 0, inside):
                raise ValueError("level set must be negative exactly on the inside nodes")
            object.__setattr__(self, "level_set", ls)
        elif self.level_set_is_distance:
            raise ValueError("level_set_is_distance needs a level set")

    @property
    def best_method(self) -> str:
        """Most accurate signed-distance method this mask supports."""
        if self.level_set_is_distance:
            return "level_set"
        return "polyline" if self.level_set is not None else "graph"


def periodic_offset(mesh: Mesh, center) -> np.ndarray:
    """Minimal-image displacement ``x - center`` for every node, shape ``(n_nodes, d)``."""
    L = np.asarray(mesh.lengths)
    d = mesh.coordinates - np.asarray(center, dtype=float)
    return d - L * np.round(d / L)


def disc_mask(mesh: Mesh, center, radius: float, complement: bool = False,
              band_radius: float | None = None) -> DomainMask:
    """Disc (or its complement) in the flat periodic chart, with its distance level set.

    The level set ``+-(|x - center| - radius)`` is the exact signed distance
    while the periodic copies of the disc are disjoint (``radius`` below half
    the shortest period).
    """
    if not 0 < radius < 0.5 * min(mesh.lengths):
        raise ValueError("radius must lie in (0, min period / 2) for an exact distance level set")
    r = np.linalg.norm(periodic_offset(mesh, center), axis=1)
    level = r - radius if not complement else radius - r
    level = np.where(level == 0.0, np.finfo(float).tiny, level)
    return DomainMask(mesh, level < 0, band_radius, level, level_set_is_distance=True)


@dataclass(frozen=True)
class ConvexifyParams:
    ell_prime: float
    r0: float
    K: float = 0.0
    N: float = 2.0

    def __post_init__(self):
        if not self.ell_prime < 0:
            raise ValueError("l' must be negative")
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        N = check_dimension(self.N, "N")
        if math.isinf(N) or N <= 1:
            raise ValueError("N must be finite and > 1")

    @property
    def laplacian_bound(self) -> float:
        """``-l' (cot_{K,N}(r0/4) + 2/r0)``."""
        return -self.ell_prime * (cot_kn(self.K, self.N, self.r0 / 4) + 2 / self.r0)


def cot_kn(K: float, N: float, x: float) -> float:
    """Comparison cotangent: ``sqrt(K(N-1)) cot(x sqrt(K/(N-1)))``, ``(N-1)/x`` or the ``coth`` branch."""
    if not N > 1:
        raise ValueError("N must exceed 1")
    if not x > 0:
        raise ValueError("x must be positive")
    if K > 0:
        s = math.sqrt(K / (N - 1))
        if x * s >= math.pi:
            raise ValueError(f"x = {x} is at or beyond the pole pi sqrt((N-1)/K) = {math.pi / s}")
        return math.sqrt(K * (N - 1)) / math.tan(x * s)
    if K == 0:
        return (N - 1) / x
    s = math.sqrt(-K / (N - 1))
    return math.sqrt(-K * (N - 1)) / math.tanh(x * s)


class Cutoff:
    """Odd non-decreasing cutoff with ``phi(t) = t`` near 0 and constant tails.

    With ``a = -l' r0 / 4``: identity on ``[-a, a]``; on ``a <= |t| <= 3a`` the
    quadratic ``a + s - s^2/(4a)`` (``s = |t| - a``), which turns the slope
    from 1 to 0 at the largest allowed curvature ``1/(2a)``; the plateau value
    ``2a = -l' r0 / 2`` beyond.  The function is ``C^{1,1}``.
    """

    def __init__(self, ell_prime: float, r0: float):
        if not ell_prime < 0 or not r0 > 0:
            raise ValueError("need l' < 0 and r0 > 0")
        self.a = -ell_prime * r0 / 4
        self.plateau = -0.5 * ell_prime * r0
        self.curvature_bound = -2.0 / (ell_prime * r0)
        self.audit = self._audit()
        if not self.audit["passed"]:
            raise ValueError(f"cutoff violates its constraints: {self.audit}")

    def __call__(self, t):
        return self.evaluate(t)[0]

    def evaluate(self, t):
        """``(phi, phi', phi'')`` at ``t``."""
        t = np.asarray(t, dtype=float)
        a = self.a
        s = np.abs(t)
        sign = np.sign(t)
        u = s - a
        mid = (s > a) & (s < 3 * a)
        top = s >= 3 * a
        phi = np.where(mid, sign * (a + u - u**2 / (4 * a)), t)
        phi = np.where(top, sign * self.plateau, phi)
        d1 = np.where(mid, 1 - u / (2 * a), 1.0)
        d1 = np.where(top, 0.0, d1)
        d2 = np.where(mid, -sign / (2 * a), 0.0)
        return phi, d1, d2

    def _audit(self, n: int = AUDIT_POINTS) -> dict:
        t = np.linspace(-4 * self.a, 4 * self.a, n)
        phi, d1, d2 = self.evaluate(t)
        core = np.abs(t) <= self.a
        outer = np.abs(t) >= 3 * self.a
        # one-sided difference quotients confirm the stated derivatives
        fd = np.diff(phi) / np.diff(t)
        res = {
            "grid_points": n,
            "min_slope": float(d1.min()),
            "max_slope": float(d1.max()),
            "max_abs_curvature": float(np.abs(d2).max()),
            "curvature_bound": self.curvature_bound,
            "identity_error": float(np.abs(phi[core] - t[core]).max()),
            "plateau_error": float(np.abs(np.abs(phi[outer]) - self.plateau).max()),
            "max_difference_quotient": float(fd.max()),
            "min_difference_quotient": float(fd.min()),
        }
        res["passed"] = bool(
            res["min_slope"] >= 0 and res["max_slope"] <= 1
            and res["max_abs_curvature"] <= self.curvature_bound * (1 + 1e-12)
            and res["identity_error"] == 0.0 and res["plateau_error"] == 0.0
            and -1e-12 <= res["min_difference_quotient"] and res["max_difference_quotient"] <= 1 + 1e-12
        )
        return res


def cutoff_phi(ell_prime: float, r0: float, t):
    """``(phi(t), phi'(t), phi''(t))`` of :class:`Cutoff`."""
    return Cutoff(ell_prime, r0).evaluate(t)


# ---------------------------------------------------------------------------
# signed distance


def _graph_signed_distance(graph: PathGraph, mask: DomainMask) -> np.ndarray:
    inside = np.flatnonzero(mask.inside)
    outside = np.flatnonzero(~mask.inside)
    to_in = dijkstra(graph.matrix, directed=False, indices=inside, min_only=True)
    to_out = dijkstra(graph.matrix, directed=False, indices=outside, min_only=True)
    return to_in - to_out


def zero_set_segments(mesh: Mesh, level: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Marching-squares segments of ``{level = 0}`` from linear interpolation along cell edges.

    Returns endpoint arrays ``(A, B)`` of shape ``(n_segments, 2)`` in
    unwrapped chart coordinates.
    """
    if mesh.dimension != 2:
        raise ValueError("zero-set segments need a 2-D mesh")
    nx, ny = mesh.shape
    hx, hy = mesh.spacing
    ox, oy = mesh.origin
    f = mesh.grid(level)
    neg = f < 0
    fx, fy = np.roll(f, -1, 0), np.roll(f, -1, 1)
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    X, Y = ox + I * hx, oy + J * hy
    with np.errstate(invalid="ignore", divide="ignore"):
        tx = f / (f - fx)
        ty = f / (f - fy)
    cx = neg != np.roll(neg, -1, 0)
    cy = neg != np.roll(neg, -1, 1)
    # crossing points on the edge leaving (i, j) along each axis, unwrapped
    px = np.stack([X + tx * hx, Y], axis=-1)
    py = np.stack([X, Y + ty * hy], axis=-1)
    # cell (i, j): bottom = x-edge at (i, j), top = x-edge at (i, j+1),
    # left = y-edge at (i, j), right = y-edge at (i+1, j); wrapped neighbours are unwrapped
    pts = np.stack([
        px,
        np.roll(px, -1, 1) + np.where(J[..., None] == ny - 1, [0.0, ny * hy], 0.0),
        py,
        np.roll(py, -1, 0) + np.where(I[..., None] == nx - 1, [nx * hx, 0.0], 0.0),
    ], axis=2)
    has = np.stack([cx, np.roll(cx, -1, 1), cy, np.roll(cy, -1, 0)], axis=2)
    count = has.sum(axis=2)
    A, B = [], []
    two = count == 2
    if two.any():
        p2, h2 = pts[two], has[two]
        order = np.argsort(~h2, axis=1, kind="stable")[:, :2]
        rows = np.arange(len(p2))
        A.append(p2[rows, order[:, 0]])
        B.append(p2[rows, order[:, 1]])
    for i, j in zip(*np.nonzero(count == 4)):
        p = pts[i, j]
        corner = neg[i, j]
        center = 0.25 * (f[i, j] + fx[i, j] + fy[i, j] + f[(i + 1) % nx, (j + 1) % ny]) < 0
        if center == corner:
            A += [p[0][None], p[2][None]]
            B += [p[3][None], p[1][None]]
        else:
            A += [p[0][None], p[3][None]]
            B += [p[2][None], p[1][None]]
    if not A:
        return np.empty((0, 2)), np.empty((0, 2))
    return np.concatenate(A), np.concatenate(B)


def _distance_to_segments(mesh: Mesh, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    L = np.asarray(mesh.lengths)
    origin = np.asarray(mesh.origin)
    mid = np.mod(0.5 * (A + B) - origin, L)
    half = 0.5 * np.linalg.norm(B - A, axis=1).max()
    tree = cKDTree(mid, boxsize=L)
    P = np.mod(mesh.coordinates - origin, L)
    out = np.full(len(P), np.inf)
    todo = np.arange(len(P))
    k = min(8, len(mid))
    while todo.size:
        dmid, idx = tree.query(P[todo], k=k)
        dmid, idx = dmid.reshape(len(todo), -1), idx.reshape(len(todo), -1)
        a = np.mod(A[idx] - origin, L)
        ab = B[idx] - A[idx]
        ap = P[todo][:, None, :] - a
        ap -= L * np.round(ap / L)
        t = np.clip(np.einsum("nki,nki->nk", ap, ab) / np.maximum(np.einsum("nki,nki->nk", ab, ab), 1e-300), 0, 1)
        dist = np.linalg.norm(ap - t[..., None] * ab, axis=2).min(axis=1)
        safe = (k >= len(mid)) | (dist <= dmid[:, -1] - half)
        out[todo[safe]] = dist[safe]
        todo = todo[~safe]
        k = min(2 * k, len(mid))
    return out


def signed_distance(graph: PathGraph | None, mask: DomainMask, method: str = "graph") -> ScalarField:
    """``V = d(., Omega) - d(., X \\ Omega)``: negative inside, positive outside.

    ``method="graph"`` uses two multi-source shortest-path sweeps on ``graph``
    (distances to the nearest node of the opposite region).  ``"polyline"``
    uses the exact chart distance to the piecewise-linear zero set of
    ``mask.level_set`` (flat periodic 2-D charts only); it is ``O(h^2)``
    accurate but its second differences carry ``O(1)`` noise from the
    polygon's corners.  ``"level_set"`` returns ``mask.level_set`` when the
    mask declares it to be a distance.  ``"auto"`` picks
    :attr:`DomainMask.best_method`.
    """
    if method == "auto":
        method = mask.best_method
    if method == "level_set":
        if not mask.level_set_is_distance:
            raise ValueError("mask.level_set is not declared to be a signed distance")
        V = mask.level_set.copy()
    elif method == "graph":
        if graph is None:
            graph = build_path_graph(mask.mesh)
        V = _graph_signed_distance(graph, mask)
    elif method == "polyline":
        if mask.level_set is None:
            raise ValueError("polyline signed distance needs mask.level_set")
        A, B = zero_set_segments(mask.mesh, mask.level_set)
        if len(A) == 0:
            raise ValueError("level set has no zero crossings on this mesh")
        d = _distance_to_segments(mask.mesh, A, B)
        V = np.where(mask.inside, -d, d)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(V)):
        raise ValueError("signed distance is infinite somewhere: graph disconnected")
    return ScalarField(mask.mesh, V)


def build_weight(V: ScalarField, params: ConvexifyParams) -> ScalarField:
    """``w = phi(-l' V)``."""
    phi = Cutoff(params.ell_prime, params.r0)
    return V.with_values(phi(-params.ell_prime * V.values))


@dataclass(frozen=True)
class LaplacianReport:
    bound: float
    min_defect: float
    argmin_node: int
    checked_nodes: int
    defect: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.min_defect >= 0.0


def laplacian_bound_check(gen: Generator, w: ScalarField, params: ConvexifyParams, mask: DomainMask,
                          V: ScalarField | None = None) -> LaplacianReport:
    """``bound - (L w)_i`` on nodes with ``|V| > band_radius``; other nodes get ``nan``."""
    if V is None:
        V = signed_distance(None, mask, "auto")
    lw = gen.apply(w.values)
    bound = params.laplacian_bound
    eligible = np.abs(V.values) > mask.band_radius
    defect = np.where(eligible, bound - lw, np.nan)
    k = int(np.nanargmin(defect))
    return LaplacianReport(bound, float(defect[k]), k, int(eligible.sum()), defect)


# ---------------------------------------------------------------------------
# convexity certificate


@dataclass(frozen=True)
class ConvexityCertificate:
    pairs: int
    violations: int
    max_depth: float
    band_radius: float
    max_pair_distance: float
    seed: int
    violating_pairs: tuple = ()

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def summary(self) -> dict:
        return {
            "pairs": self.pairs,
            "violations": self.violations,
            "max_depth": self.max_depth,
            "band_radius": self.band_radius,
            "max_pair_distance": self.max_pair_distance,
            "seed": self.seed,
            "verdict": "pass" if self.passed else "fail",
        }


def sample_pairs(mask: DomainMask, V: ScalarField, pairs: int, seed: int, max_pair_distance: float,
                 sources: int | None = None) -> list[tuple[int, int]]:
    """Pairs of inside nodes at chart distance ``<= max_pair_distance``.

    Sources are drawn from inside nodes within ``max_pair_distance`` of the
    boundary (the only ones whose short paths can leave the domain);
    ``pairs // sources`` targets are drawn per source.
    """
    rng = np.random.default_rng(seed)
    inside = mask.inside
    near = np.flatnonzero(inside & (np.abs(V.values) <= max_pair_distance))
    if near.size == 0:
        raise ValueError("no inside nodes near the boundary")
    n_src = sources or max(1, int(round(math.sqrt(pairs))))
    per = int(math.ceil(pairs / n_src))
    src = rng.choice(near, size=min(n_src, near.size), replace=False)
    L = np.asarray(mask.mesh.lengths)
    origin = np.asarray(mask.mesh.origin)
    pts = np.mod(mask.mesh.coordinates - origin, L)
    tree = cKDTree(pts, boxsize=L)
    out = []
    for s in src:
        cand = np.array(tree.query_ball_point(pts[s], max_pair_distance), dtype=int)
        cand = np.sort(cand[inside[cand] & (cand != s)])
        if cand.size == 0:
            continue
        tg = rng.choice(cand, size=min(per, cand.size), replace=False)
        out.extend((int(s), int(t)) for t in tg)
    return out[:pairs]


def convexity_certificate(graph_w: PathGraph, mask: DomainMask, pairs: int = 1000, seed: int = 0,
                          V: ScalarField | None = None, max_pair_distance: float | None = None,
                          sources: int | None = None) -> ConvexityCertificate:
    """Count sampled ``d^w``-geodesics that leave the domain by more than the band.

    A path violates when one of its nodes has ``V > band_radius``.  Pairs
    are local (``max_pair_distance``, default ``8 band_radius``), since
    convexity produced by the weight is a local property.
    """
    if V is None:
        V = signed_distance(None, mask, "auto")
    D = 8 * mask.band_radius if max_pair_distance is None else max_pair_distance
    sample = sample_pairs(mask, V, pairs, seed, D, sources)
    by_src: dict[int, list[int]] = {}
    for s, t in sample:
        by_src.setdefault(s, []).append(t)
    violations, depth, bad = 0, 0.0, []
    for s, targets in by_src.items():
        dist = primal_distances(graph_w, s)[0]
        pred = _predecessors(graph_w, dist)
        for t in targets:
            node, worst = t, V.values[t]
            while node != s:
                node = pred[node]
                if node < 0:
                    raise RuntimeError("predecessor chain broken")
                worst = max(worst, V.values[node])
            if worst > mask.band_radius:
                violations += 1
                bad.append((s, t))
            depth = max(depth, worst)
    return ConvexityCertificate(len(sample), violations, float(depth), float(mask.band_radius),
                                float(D), seed, tuple(bad[:20]))


# ---------------------------------------------------------------------------
# Minkowski content


@dataclass(frozen=True)
class MinkowskiEstimate:
    eps: tuple[float, ...]
    ratios: tuple[float, ...]
    extrapolated: float


def minkowski_content(mask, graph: PathGraph | None = None, eps_list=None) -> MinkowskiEstimate:
    """Outer Minkowski content ``lim (m(Z^eps) - m(Z))/eps`` of the inside set ``Z``.

    ``mask`` is a :class:`DomainMask` or a boolean node array (which may be
    empty or full).  Distances to ``Z`` come from the mask's best signed
    distance when a level set is available and from graph sweeps otherwise.
    The ratios at ``eps_list`` (default ``2h, 3h, ..., 8h``) are fitted
    linearly in ``eps`` and extrapolated to ``eps = 0``.
    """
    if isinstance(mask, DomainMask):
        mesh, inside = mask.mesh, mask.inside
    else:
        if graph is None:
            raise ValueError("a graph is needed for a bare node set")
        mesh, inside = graph.mesh, np.asarray(mask, dtype=bool)
    h = max(mesh.spacing)
    eps = np.arange(2, 9) * h if eps_list is None else np.asarray(eps_list, dtype=float)
    if np.any(eps < 2 * h * (1 - 1e-12)):
        raise ValueError("every eps must be at least 2h")
    if not inside.any() or inside.all():
        ratios = np.zeros(len(eps))
    else:
        if isinstance(mask, DomainMask) and mask.level_set is not None:
            d = np.maximum(signed_distance(None, mask, "auto").values, 0.0)
        else:
            g = graph if graph is not None else build_path_graph(mesh)
            d = dijkstra(g.matrix, directed=False, indices=np.flatnonzero(inside), min_only=True)
        cell = mesh.cell_volume
        base = inside.sum() * cell
        ratios = np.array([((d <= e).sum() * cell - base) / e for e in eps])
    slope, intercept = np.polyfit(eps, ratios, 1)
    return MinkowskiEstimate(tuple(map(float, eps)), tuple(map(float, ratios)), float(intercept))
