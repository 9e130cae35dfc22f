"""Finite-difference Riemannian geometry on periodic charts.

This module never calls the transformation formula to produce its answer:
curvature of a time-changed space is obtained by differentiating the
conformal metric ``exp(2w) g`` directly.  All derivatives are second-order
central differences on the mesh, so charts that are not genuinely periodic
(e.g. a latitude band of the sphere) must be evaluated through a node mask
that keeps stencils away from the seam.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dimension import check_dimension, excess_reciprocal
from .mesh import Mesh, MetricField, ScalarField, write_field_csv
from .timechange import coefficient, jsonable

DEFAULT_ORDER = 4
STENCIL_RADIUS = {2: 3, 4: 6}


def _shift(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    """Value at index ``i + k`` (periodic)."""
    return np.roll(a, -k, axis=axis)


def _d(a: np.ndarray, axis: int, h: float, order: int = 2) -> np.ndarray:
    if order == 2:
        return (_shift(a, 1, axis) - _shift(a, -1, axis)) / (2 * h)
    return (8 * (_shift(a, 1, axis) - _shift(a, -1, axis))
            - (_shift(a, 2, axis) - _shift(a, -2, axis))) / (12 * h)


def _dd(a: np.ndarray, axis: int, h: float, order: int = 2) -> np.ndarray:
    if order == 2:
        return (_shift(a, 1, axis) - 2 * a + _shift(a, -1, axis)) / h**2
    return (16 * (_shift(a, 1, axis) + _shift(a, -1, axis)) - 30 * a
            - (_shift(a, 2, axis) + _shift(a, -2, axis))) / (12 * h**2)


class Calculus:
    """Coordinate differential calculus for one metric on one mesh.

    Arrays are kept in grid layout ``mesh.shape + (...)``.
    """

    def __init__(self, metric: MetricField, order: int = DEFAULT_ORDER):
        if order not in STENCIL_RADIUS:
            raise ValueError(f"stencil order must be 2 or 4, got {order}")
        self.order = order
        self.mesh = metric.mesh
        self.n = self.mesh.dimension
        self.h = self.mesh.spacing
        self.g = self.mesh.grid(metric.values)
        self.ginv = np.linalg.inv(self.g)
        self._christoffel = None

    # scalar calculus -------------------------------------------------
    def partial(self, u: np.ndarray) -> np.ndarray:
        """``[..., k] = d_k u`` for grid-shaped ``u``."""
        return np.stack([_d(u, k, self.h[k], self.order) for k in range(self.n)], axis=-1)

    def second_partials(self, u: np.ndarray) -> np.ndarray:
        out = np.empty(u.shape + (self.n, self.n))
        for i in range(self.n):
            out[..., i, i] = _dd(u, i, self.h[i], self.order)
            for j in range(i + 1, self.n):
                out[..., i, j] = out[..., j, i] = _d(_d(u, i, self.h[i], self.order), j, self.h[j], self.order)
        return out

    @property
    def christoffel(self) -> np.ndarray:
        """``[..., k, i, j] = Gamma^k_ij``."""
        if self._christoffel is None:
            dg = np.stack([_d(self.g, l, self.h[l], self.order) for l in range(self.n)], axis=self.n)
            # dg[..., l, i, j] = d_l g_ij
            lower = 0.5 * (dg + np.swapaxes(dg, -3, -2) - np.moveaxis(dg, -3, -1))
            # lower[..., i, j, l] = (d_i g_jl + d_j g_il - d_l g_ij) / 2
            self._christoffel = np.einsum("...kl,...ijl->...kij", self.ginv, lower)
        return self._christoffel

    def hessian(self, u: np.ndarray) -> np.ndarray:
        return self.second_partials(u) - np.einsum("...kij,...k->...ij", self.christoffel, self.partial(u))

    def grad_sq(self, u: np.ndarray, v: np.ndarray | None = None) -> np.ndarray:
        du = self.partial(u)
        dv = du if v is None else self.partial(v)
        return np.einsum("...ij,...i,...j->...", self.ginv, du, dv)

    def laplacian(self, u: np.ndarray, V: np.ndarray | None = None) -> np.ndarray:
        """Weighted Laplacian ``Delta_g u - <grad V, grad u>``."""
        out = np.einsum("...ij,...ij->...", self.ginv, self.hessian(u))
        if V is not None:
            out = out - self.grad_sq(V, u)
        return out

    # curvature ------------------------------------------------------
    def ricci(self, return_asymmetry: bool = False):
        G = self.christoffel
        dG = np.stack([_d(G, m, self.h[m], self.order) for m in range(self.n)], axis=self.n)
        # dG[..., m, k, i, j] = d_m Gamma^k_ij
        term1 = np.einsum("...kkij->...ij", dG)
        term2 = np.einsum("...jkik->...ij", dG)
        term3 = np.einsum("...kkl,...lij->...ij", G, G)
        term4 = np.einsum("...kjl,...lik->...ij", G, G)
        ric = term1 - term2 + term3 - term4
        asym = np.abs(ric - np.swapaxes(ric, -1, -2)).max() if self.n > 1 else 0.0
        ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
        return (ric, float(asym)) if return_asymmetry else ric


def _grid(mesh: Mesh, f) -> np.ndarray:
    values = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    return mesh.grid(np.broadcast_to(values, (mesh.n_nodes,)))


def _select(mesh: Mesh, grid_array: np.ndarray, node):
    flat = mesh.flat(grid_array)
    return flat if node is None else flat[node]


def christoffel(metric: MetricField, node: int | None = None, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Christoffel symbols ``Gamma^k_ij`` as ``[..., k, i, j]`` at ``node`` (all nodes if None)."""
    return _select(metric.mesh, Calculus(metric, order).christoffel, node)


def ricci(metric: MetricField, node: int | None = None, order: int = DEFAULT_ORDER) -> np.ndarray:
    return _select(metric.mesh, Calculus(metric, order).ricci(), node)


def _check_bound(mesh: Mesh, V: np.ndarray, N: float) -> float:
    n = mesh.dimension
    N = check_dimension(N, "N", minimum=float(n))
    if N == n:
        spread = float(np.ptp(V))
        if spread > 1e-12 * max(1.0, float(np.abs(V).max())):
            raise ValueError(
                f"N equals the dimension {n}: the potential must be constant (spread {spread:.3e})"
            )
    return N


def _tensor(calc: Calculus, V: np.ndarray, N: float) -> np.ndarray:
    t = calc.ricci() + calc.hessian(V)
    c = excess_reciprocal(N, calc.n)
    if c:
        dV = calc.partial(V)
        t = t - c * dV[..., :, None] * dV[..., None, :]
    return t


@dataclass(frozen=True, eq=False)
class BakryEmeryTensorField:
    mesh: Mesh
    values: np.ndarray
    metric: MetricField
    potential: ScalarField
    N: float


def bakry_emery_tensor(metric: MetricField, V, N: float, node: int | None = None,
                       order: int = DEFAULT_ORDER):
    """``Ric + Hess V - dV (x) dV / (N - n)``; the last term is dropped for ``N = inf`` or ``N = n``."""
    mesh = metric.mesh
    Vg = _grid(mesh, V)
    N = _check_bound(mesh, Vg, N)
    t = mesh.flat(_tensor(Calculus(metric, order), Vg, N))
    if node is not None:
        return t[node]
    pot = V if isinstance(V, ScalarField) else ScalarField(mesh, np.broadcast_to(V, (mesh.n_nodes,)))
    return BakryEmeryTensorField(mesh, t, metric, pot, N)


def min_generalized_eigenvalue(T: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Smallest ``lambda`` with ``det(T - lambda g) = 0``, closed form for ``d <= 2``.

    In 2-D, ``T`` is reduced by the Cholesky factor of ``g`` to a symmetric
    ``S``; its eigenvalues ``mean -+ sqrt(((s11 - s22)/2)^2 + s12^2)`` carry no
    cancellation at a double eigenvalue, unlike the ``b^2 - 4ac`` form.
    """
    d = g.shape[-1]
    if d == 1:
        return T[..., 0, 0] / g[..., 0, 0]
    if d != 2:
        raise ValueError("only d <= 2 is supported")
    l11 = np.sqrt(g[..., 0, 0])
    l21 = g[..., 1, 0] / l11
    l22 = np.sqrt(g[..., 1, 1] - l21**2)
    # rows of L^{-1}: (1/l11, 0) and (-l21/(l11 l22), 1/l22)
    u0 = 1 / l11
    u1, v1 = -l21 / (l11 * l22), 1 / l22
    t00, t01, t11 = T[..., 0, 0], T[..., 0, 1], T[..., 1, 1]
    s00 = u0 * u0 * t00
    s01 = u0 * (u1 * t00 + v1 * t01)
    s11 = u1 * u1 * t00 + 2 * u1 * v1 * t01 + v1 * v1 * t11
    return 0.5 * (s00 + s11) - np.hypot(0.5 * (s00 - s11), s01)


def _optimal_k(calc: Calculus, V: np.ndarray, N: float) -> np.ndarray:
    return min_generalized_eigenvalue(_tensor(calc, V, N), calc.g)


def optimal_k(metric: MetricField, V, N: float, order: int = DEFAULT_ORDER) -> ScalarField:
    """Pointwise sharp lower bound ``k(x)`` of the Bakry-Emery N-tensor relative to ``g``."""
    mesh = metric.mesh
    Vg = _grid(mesh, V)
    N = _check_bound(mesh, Vg, N)
    return ScalarField(mesh, mesh.flat(_optimal_k(Calculus(metric, order), Vg, N)))


def conformal_data(metric: MetricField, V0, w) -> tuple[MetricField, ScalarField]:
    """``(exp(2w) g, V0 + (n-2) w)``: the weighted manifold whose Dirichlet form is the time change."""
    mesh = metric.mesh
    wv = np.broadcast_to(getattr(w, "values", w), (mesh.n_nodes,))
    v0 = np.broadcast_to(getattr(V0, "values", V0), (mesh.n_nodes,))
    n = mesh.dimension
    return (MetricField(mesh, np.exp(2 * wv)[:, None, None] * metric.values),
            ScalarField(mesh, v0 + (n - 2) * wv))


def improved_bochner_check(metric: MetricField, V, N: float, f, order: int = DEFAULT_ORDER) -> ScalarField:
    """Per-node ``Gamma_2(f) - [k Gamma(f) + |H_f|^2 + (tr H_f - Delta f)^2/(N - n)]``.

    ``k`` is :func:`optimal_k`; every term is a finite difference on the smooth
    side.  For ``N = n`` the trace term is taken to be zero.
    """
    mesh = metric.mesh
    Vg, fg = _grid(mesh, V), _grid(mesh, f)
    N = _check_bound(mesh, Vg, N)
    calc = Calculus(metric, order)
    lf = calc.laplacian(fg, Vg)
    gam = calc.grad_sq(fg)
    gamma2 = 0.5 * calc.laplacian(gam, Vg) - calc.grad_sq(fg, lf)
    hess = calc.hessian(fg)
    hs = np.einsum("...ik,...jl,...ij,...kl->...", calc.ginv, calc.ginv, hess, hess)
    tr = np.einsum("...ij,...ij->...", calc.ginv, hess)
    k = _optimal_k(calc, Vg, N)
    defect = gamma2 - k * gam - hs - excess_reciprocal(N, calc.n) * (tr - lf) ** 2
    return ScalarField(mesh, mesh.flat(defect))


def predicted_kprime(k, N: float, Nprime: float, w, grad_w_sq, lap_w) -> ScalarField | np.ndarray:
    """``exp(-2w) [k - c(N, N') |grad w|^2 - Delta w]`` with ``c`` from :func:`coefficient`."""
    c = coefficient(N, Nprime)
    arrs = [np.asarray(getattr(a, "values", a), dtype=float) for a in (k, w, grad_w_sq, lap_w)]
    kv, wv, gv, lv = np.broadcast_arrays(*arrs)
    if np.any(gv < 0):
        raise ValueError("grad_w_sq must be non-negative")
    out = np.exp(-2 * wv) * (kv - c * gv - lv)
    mesh = next((a.mesh for a in (k, w, grad_w_sq, lap_w) if isinstance(a, ScalarField)), None)
    return ScalarField(mesh, out) if mesh is not None else out


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    """Predicted versus oracle curvature bound of a time-changed space."""

    mesh: Mesh
    predicted: np.ndarray
    oracle: np.ndarray
    mask: np.ndarray
    tolerance: float
    N: float
    Nprime: float
    meta: dict = field(default_factory=dict)

    @property
    def defect(self) -> np.ndarray:
        return self.oracle - self.predicted

    @property
    def min_defect(self) -> float:
        return float(self.defect[self.mask].min())

    @property
    def argmin(self) -> int:
        idx = np.flatnonzero(self.mask)
        return int(idx[np.argmin(self.defect[idx])])

    @property
    def passed(self) -> bool:
        return self.min_defect >= -self.tolerance

    def summary(self) -> dict:
        return jsonable({
            "min_defect": self.min_defect,
            "argmin_node": self.argmin,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.passed else "fail",
            "N": self.N,
            "Nprime": self.Nprime,
            "checked_nodes": int(self.mask.sum()),
            **self.meta,
        })

    def write(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        idx = np.flatnonzero(self.mask)
        csv_path = stem.with_suffix(".csv")
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w") as fh:
            fh.write("node,kprime_pred,k_oracle,defect\n")
            for i in idx:
                fh.write(f"{i},{float(self.predicted[i])!r},{float(self.oracle[i])!r},{float(self.defect[i])!r}\n")
        json_path = stem.with_suffix(".json")
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        return csv_path, json_path


def interior_mask(mesh: Mesh, seam_axes=(), radius: int = STENCIL_RADIUS[DEFAULT_ORDER]) -> np.ndarray:
    """Nodes at least ``radius`` cells from the wrap seam of each axis in ``seam_axes``."""
    mask = np.ones(mesh.shape, dtype=bool)
    for axis in seam_axes:
        i = np.arange(mesh.shape[axis])
        ok = (i >= radius) & (i < mesh.shape[axis] - radius)
        sl = [None] * mesh.dimension
        sl[axis] = slice(None)
        mask &= ok[tuple(sl)]
    return mask.ravel()


def verify_theorem_B(metric: MetricField, V0, N: float, w, Nprime: float,
                     mask: np.ndarray | None = None, tolerance: float = 1e-4,
                     order: int = DEFAULT_ORDER) -> CurvatureReport:
    """Compare the predicted bound for the time-changed space with its finite-difference curvature.

    The predicted side uses ``k = optimal_k(g, V0, N)``, ``|grad w|_g^2`` and the
    weighted Laplacian of ``w``; the oracle side is ``optimal_k`` of
    :func:`conformal_data` at ``N'``.
    """
    mesh = metric.mesh
    v0, wg = _grid(mesh, V0), _grid(mesh, w)
    N = _check_bound(mesh, v0, N)
    coefficient(N, Nprime)
    base = Calculus(metric, order)
    k = _optimal_k(base, v0, N)
    pred = predicted_kprime(k, N, Nprime, wg, base.grad_sq(wg), base.laplacian(wg, v0))
    g2, v2 = conformal_data(metric, mesh.flat(v0), mesh.flat(wg))
    oracle = _optimal_k(Calculus(g2, order), mesh.grid(v2.values), Nprime)
    mask = np.ones(mesh.n_nodes, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    return CurvatureReport(mesh, mesh.flat(pred), mesh.flat(oracle), mask, tolerance, N, Nprime,
                           {"stencil_order": order})


def write_tensor_csv(path, field: BakryEmeryTensorField) -> Path:
    return write_field_csv(path, field.mesh, T=field.values)
