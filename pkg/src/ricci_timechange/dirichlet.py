"""Discrete Dirichlet forms on periodic meshes.

A :class:`Generator` is a symmetric edge-conductance graph Laplacian
``L = diag(1/m) A`` where ``A`` is symmetric with zero row sums and
non-negative off-diagonal entries.  These three properties are what make the
carre du champ non-negative and every summation-by-parts identity hold at the
matrix level.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dimension import reciprocal
from .mesh import Mesh, MetricField, ScalarField

EXP_LIMIT = 300.0


class StencilError(ValueError):
    """Raised when a stencil would violate the Markov sign structure."""


@dataclass(frozen=True, eq=False)
class Generator:
    """Sparse generator with its reference measure.

    Attributes
    ----------
    mesh : Mesh
    measure : ndarray
        Node weights ``m_i > 0``.
    stiffness : csr_matrix
        Symmetric ``A`` with zero row sums; ``diag(m) L = A``.
    operator : csr_matrix
        ``L`` itself.
    edges : tuple of ndarray
        ``(i, j, c)`` with ``i < j`` and conductance ``c > 0`` for every edge.
    """

    mesh: Mesh
    measure: np.ndarray
    stiffness: sp.csr_matrix
    operator: sp.csr_matrix
    edges: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def apply(self, f) -> np.ndarray:
        """``Lf`` evaluated edge by edge, so constants map to exact zeros."""
        i, j, c = self.edges
        f = _values(self, f)
        flux = c * (f[j] - f[i])
        n = self.n_nodes
        return (np.bincount(i, weights=flux, minlength=n) - np.bincount(j, weights=flux, minlength=n)) / self.measure

    def integrate(self, f) -> float:
        return float(np.dot(self.measure, _values(self, f)))

    def energy(self, f) -> float:
        """Dirichlet energy ``sum_i m_i Gamma(f)_i``."""
        i, j, c = self.edges
        f = _values(self, f)
        return float(np.sum(c * (f[j] - f[i]) ** 2))


def _values(gen: Generator, f) -> np.ndarray:
    if isinstance(f, ScalarField):
        if f.mesh is not gen.mesh:
            raise ValueError("field lives on a different mesh than the generator")
        return f.values
    f = np.asarray(f, dtype=float)
    if f.shape != (gen.mesh.n_nodes,):
        raise ValueError(f"expected {gen.mesh.n_nodes} node values, got shape {f.shape}")
    return f


def _edge_generator(mesh: Mesh, measure: np.ndarray, ii, jj, cc) -> Generator:
    n = mesh.n_nodes
    # merge duplicate (i, j) pairs and orient i < j
    lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
    key = lo * n + hi
    uniq, inv = np.unique(key, return_inverse=True)
    c = np.bincount(inv, weights=cc)
    i, j = uniq // n, uniq % n
    if np.any(c < 0):
        k = int(np.argmin(c))
        raise StencilError(
            f"negative conductance {c[k]:.3e} on edge ({i[k]}, {j[k]}): "
            "metric too anisotropic for this grid"
        )
    keep = c > 0
    i, j, c = i[keep], j[keep], c[keep]
    w = sp.coo_matrix((np.concatenate([c, c]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                      shape=(n, n)).tocsr()
    deg = np.asarray(w.sum(axis=1)).ravel()
    stiffness = (w - sp.diags(deg)).tocsr()
    operator = (sp.diags(1.0 / measure) @ stiffness).tocsr()
    measure = np.array(measure, dtype=float)
    measure.flags.writeable = False
    return Generator(mesh, measure, stiffness, operator, (i, j, c))


def assemble_generator(mesh: Mesh, metric: MetricField, log_density: ScalarField | None = None) -> Generator:
    """Finite-volume weighted Laplace-Beltrami operator.

    Discretizes ``rho^{-1} div(rho g^{-1} grad f)`` with density
    ``rho = sqrt(det g) exp(-V0)``, i.e. ``Delta_g f - <grad V0, grad f>``
    for the measure ``m = exp(-V0) vol_g``.  Face coefficients are
    arithmetic means of the two endpoint values.  Off-diagonal metric
    components use the sign-adapted diagonal stencil.
    """
    if metric.mesh is not mesh:
        raise ValueError("metric lives on a different mesh")
    v0 = np.zeros(mesh.n_nodes) if log_density is None else log_density.values
    g = metric.values
    rho = np.sqrt(np.linalg.det(g)) * np.exp(-v0)
    a = rho[:, None, None] * np.linalg.inv(g)
    vol = mesh.cell_volume
    h = mesh.spacing
    measure = rho * vol
    nodes = np.arange(mesh.n_nodes)
    ii, jj, cc = [], [], []

    def add(offset, coef):
        nb = mesh.offset_index(offset)
        ii.append(nodes)
        jj.append(nb)
        cc.append(0.5 * (coef + coef[nb]))

    for axis in range(mesh.dimension):
        off = [0] * mesh.dimension
        off[axis] = 1
        add(off, a[:, axis, axis] * vol / h[axis] ** 2)
    if mesh.dimension == 2:
        b = a[:, 0, 1] * vol / (h[0] * h[1])
        bp, bm = np.maximum(b, 0), np.maximum(-b, 0)
        if np.any(b != 0):
            add((1, 1), bp)
            add((1, -1), bm)
            add((1, 0), -np.abs(b))
            add((0, 1), -np.abs(b))
    return _edge_generator(mesh, measure, np.concatenate(ii), np.concatenate(jj), np.concatenate(cc))


def carre_du_champ(gen: Generator, f, g=None) -> ScalarField:
    """``Gamma(f, g) = (L(fg) - f Lg - g Lf) / 2``.

    Evaluated edge by edge as ``(2 m_i)^{-1} sum_j c_ij (f_j - f_i)(g_j - g_i)``,
    which is the same matrix identity expanded; it keeps ``Gamma(f) >= 0`` and
    ``Gamma(const, .) = 0`` free of cancellation error.
    """
    fv = _values(gen, f)
    gv = fv if g is None else _values(gen, g)
    i, j, c = gen.edges
    prod = c * ((fv[j] - fv[i]) * (gv[j] - gv[i]))
    n = gen.n_nodes
    acc = np.bincount(i, weights=prod, minlength=n) + np.bincount(j, weights=prod, minlength=n)
    return ScalarField(gen.mesh, 0.5 * acc / gen.measure)


def _gamma(gen, f, g=None) -> np.ndarray:
    return carre_du_champ(gen, f, g).values


def gamma2_density(gen: Generator, f) -> np.ndarray:
    """Pointwise ``L Gamma(f) / 2 - Gamma(f, Lf)``."""
    fv = _values(gen, f)
    return 0.5 * gen.apply(_gamma(gen, fv)) - _gamma(gen, fv, gen.apply(fv))


def gamma2_form(gen: Generator, f, phi) -> float:
    """``Gamma_2(f; phi) = 1/2 sum m Gamma(f) L phi - sum m Gamma(f, Lf) phi``."""
    fv, pv = _values(gen, f), _values(gen, phi)
    m = gen.measure
    lf = gen.apply(fv)
    return float(0.5 * np.dot(m * _gamma(gen, fv), gen.apply(pv))
                 - np.dot(m * _gamma(gen, fv, lf), pv))


def be_defect(gen: Generator, k, n_bound: float, f, phi) -> float:
    """Left minus right side of the BE(k, N) inequality for one ``(f, phi)``.

    Non-negative (up to round-off) means the inequality holds for this pair.
    """
    pv = _values(gen, phi)
    if np.any(pv < 0):
        raise ValueError(f"test function phi is negative at node {int(np.argmin(pv))}")
    fv = _values(gen, f)
    kv = np.broadcast_to(_values(gen, k) if not np.isscalar(k) else float(k), fv.shape)
    lf = gen.apply(fv)
    rhs = np.dot(gen.measure * (kv * _gamma(gen, fv) + reciprocal(n_bound) * lf**2), pv)
    return gamma2_form(gen, fv, pv) - float(rhs)


def hessian_via_gamma(gen: Generator, f, g, h) -> ScalarField:
    """``H_f(grad g, grad h) = [Gamma(g, Gamma(f,h)) + Gamma(h, Gamma(f,g)) - Gamma(f, Gamma(g,h))] / 2``."""
    fv, gv, hv = _values(gen, f), _values(gen, g), _values(gen, h)
    t1 = _gamma(gen, gv, _gamma(gen, fv, hv))
    t2 = _gamma(gen, hv, _gamma(gen, fv, gv))
    t3 = _gamma(gen, fv, _gamma(gen, gv, hv))
    return ScalarField(gen.mesh, 0.5 * (t1 + t2 - t3))


@dataclass(frozen=True, eq=False)
class TimeChangedPair:
    base: Generator
    weight: ScalarField
    transformed: Generator


def time_change(gen: Generator, w) -> TimeChangedPair:
    """Operator ``exp(-2w) L`` with measure ``exp(2w) m``; the stiffness is unchanged."""
    wv = _values(gen, w)
    if np.max(np.abs(2 * wv)) > EXP_LIMIT:
        raise OverflowError(
            f"|2w| reaches {np.max(np.abs(2 * wv)):.1f}; rescale w (shift by a constant) "
            "to keep exp(+-2w) representable"
        )
    factor = np.exp(-2 * wv)
    measure = np.exp(2 * wv) * gen.measure
    measure.flags.writeable = False
    operator = (sp.diags(factor) @ gen.operator).tocsr()
    transformed = Generator(gen.mesh, measure, gen.stiffness, operator, gen.edges)
    wf = w if isinstance(w, ScalarField) else ScalarField(gen.mesh, wv)
    return TimeChangedPair(gen, wf, transformed)


def sqrt_gamma_energy_check(gen: Generator, K: float, f) -> float:
    """``int (Lf)^2 dm - K E(f) - E(Gamma(f)^{1/2})``.

    The square root is regularized as ``sqrt(Gamma + eps^2) - eps`` with
    ``eps = 1e-8 * max sqrt(Gamma(f))``.
    """
    fv = _values(gen, f)
    gam = _gamma(gen, fv)
    top = float(np.sqrt(gam.max()))
    if top == 0.0:
        return 0.0
    eps = 1e-8 * top
    root = np.sqrt(gam + eps**2) - eps
    lf = gen.apply(fv)
    return float(np.dot(gen.measure, lf**2)) - K * gen.energy(fv) - gen.energy(root)


def generator_checks(gen: Generator) -> dict[str, float]:
    """Relative residuals of the structural invariants (all should be ~1e-16)."""
    scale = abs(gen.stiffness).max()
    a = sp.diags(gen.measure) @ gen.operator
    sym = abs(a - a.T).max() / scale if a.nnz else 0.0
    op_scale = abs(gen.operator).max()
    rows = np.abs(np.asarray(gen.operator.sum(axis=1)).ravel()).max() / op_scale
    off = gen.operator - sp.diags(gen.operator.diagonal())
    min_off = off.min() if off.nnz else 0.0
    return {"weighted_symmetry": float(sym), "row_sum": float(rows), "min_offdiag": float(min_off)}


def export_coo(path: str | Path, matrix: sp.spmatrix) -> Path:
    """Write ``row col value`` lines, one per stored entry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with path.open("w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")
    return path
