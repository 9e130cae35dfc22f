"""Model spaces used throughout the test matrix.

Each model is a periodic chart with a metric, a base potential ``V0``, a
dimension bound ``N`` it satisfies with ``k = optimal_k``, a node mask where
finite differences are trusted, and a first harmonic to build weights from.
Resolution is given as nodes per ``2 pi`` so that ``h = 2 pi / resolution``
on every model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import Mesh, MetricField, ScalarField, build_circle_mesh, build_torus_mesh, flat_metric, sample_metric, sample_scalar
from .smooth_oracle import interior_mask

TWO_PI = 2 * math.pi
SEAM_RADIUS = 8
MODEL_NAMES = ("flat_circle", "flat_torus", "sphere_band", "conformal_torus")
WEIGHT_NAMES = ("zero", "constant", "harmonic")
WEIGHT_CONSTANT = 0.3
WEIGHT_EPSILON = 0.1
CONFORMAL_AMPLITUDE = 0.2


@dataclass(frozen=True, eq=False)
class ModelSpace:
    name: str
    mesh: Mesh
    metric: MetricField
    V0: ScalarField
    N: float
    mask: np.ndarray
    harmonic: Callable[..., np.ndarray]

    def weight(self, kind: str, epsilon: float = WEIGHT_EPSILON, constant: float = WEIGHT_CONSTANT) -> ScalarField:
        if kind == "zero":
            return ScalarField(self.mesh, 0.0)
        if kind == "constant":
            return ScalarField(self.mesh, constant)
        if kind == "harmonic":
            return sample_scalar(self.mesh, lambda *x: epsilon * self.harmonic(*x))
        raise ValueError(f"unknown weight {kind!r}; choose from {WEIGHT_NAMES}")

    def nprime_values(self) -> tuple[float, float, float]:
        return (self.N + 0.5, 2 * self.N, math.inf)


def _check_resolution(resolution: int, multiple: int = 1) -> int:
    resolution = int(resolution)
    if resolution % multiple:
        raise ValueError(f"resolution must be a multiple of {multiple}, got {resolution}")
    return resolution


def flat_circle(resolution: int = 256) -> ModelSpace:
    mesh = build_circle_mesh(_check_resolution(resolution), TWO_PI)
    return ModelSpace("flat_circle", mesh, flat_metric(mesh), ScalarField(mesh, 0.0), 2.0,
                      np.ones(mesh.n_nodes, dtype=bool), np.cos)


def flat_torus(resolution: int = 256) -> ModelSpace:
    n = _check_resolution(resolution)
    mesh = build_torus_mesh(n, n, TWO_PI, TWO_PI)
    return ModelSpace("flat_torus", mesh, flat_metric(mesh), ScalarField(mesh, 0.0), 3.0,
                      np.ones(mesh.n_nodes, dtype=bool), lambda x, y: np.cos(x))


def sphere_band(resolution: int = 256) -> ModelSpace:
    """Unit sphere chart ``diag(1, sin^2 theta)`` on the band ``pi/4 <= theta < 3 pi/4``.

    The chart is not periodic in ``theta``; nodes within :data:`SEAM_RADIUS`
    cells of the artificial wrap are masked out.
    """
    n = _check_resolution(resolution, 4)
    if n // 4 <= 2 * SEAM_RADIUS:
        raise ValueError(f"sphere band needs resolution > {8 * SEAM_RADIUS} to keep unmasked nodes, got {n}")
    mesh = build_torus_mesh(n // 4, n, math.pi / 2, TWO_PI, origin=(math.pi / 4, 0.0))
    metric = sample_metric(mesh, lambda t, p: [[1.0, 0.0], [0.0, np.sin(t) ** 2]])
    return ModelSpace("sphere_band", mesh, metric, ScalarField(mesh, 0.0), 2.0,
                      interior_mask(mesh, seam_axes=(0,), radius=SEAM_RADIUS),
                      lambda t, p: np.cos(t))


def conformal_torus(resolution: int = 256, amplitude: float = CONFORMAL_AMPLITUDE) -> ModelSpace:
    """Flat torus with metric ``exp(2u) delta``, ``u = amplitude cos x cos y``."""
    n = _check_resolution(resolution)
    mesh = build_torus_mesh(n, n, TWO_PI, TWO_PI)
    u = amplitude * np.cos(mesh.axes[0]) * np.cos(mesh.axes[1])
    metric = MetricField(mesh, np.exp(2 * u)[:, None, None] * np.eye(2))
    return ModelSpace("conformal_torus", mesh, metric, ScalarField(mesh, 0.0), 3.0,
                      np.ones(mesh.n_nodes, dtype=bool), lambda x, y: np.cos(x))


_BUILDERS = {
    "flat_circle": flat_circle,
    "flat_torus": flat_torus,
    "sphere_band": sphere_band,
    "conformal_torus": conformal_torus,
}


def model_space(name: str, resolution: int = 256) -> ModelSpace:
    try:
        return _BUILDERS[name](resolution)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}") from None


EXACT_FLOOR = 1e-12


@dataclass(frozen=True)
class RefinementStudy:
    """Curvature-check defects on nested meshes.

    ``cauchy[i]`` is ``max |D_i - D_{i+1}|`` over the coarse masked nodes, a
    discretization-error proxy for level ``i``; ``slopes`` are the log2
    ratios of consecutive Cauchy errors.
    """

    resolutions: tuple[int, ...]
    min_defects: tuple[float, ...]
    cauchy: tuple[float, ...]

    @property
    def slopes(self) -> tuple[float, ...]:
        out = []
        for a, b in zip(self.cauchy, self.cauchy[1:]):
            out.append(math.inf if b <= EXACT_FLOOR else math.log2(a / b))
        return tuple(out)

    @property
    def converging(self) -> bool:
        """True when each error is at round-off level or halves at least per refinement."""
        return all(b <= EXACT_FLOOR or s >= 1.0 for b, s in zip(self.cauchy[1:], self.slopes))


def theorem_b_refinement(name: str, weight: str, nprime_index: int,
                         resolutions=(128, 256, 512), order: int | None = None) -> RefinementStudy:
    """Run :func:`verify_theorem_B` on ``resolutions`` (each double the previous)."""
    from .smooth_oracle import DEFAULT_ORDER, verify_theorem_B

    order = DEFAULT_ORDER if order is None else order
    defects, masks, meshes, mins = [], [], [], []
    for res in resolutions:
        m = model_space(name, res)
        rep = verify_theorem_B(m.metric, m.V0, m.N, m.weight(weight), m.nprime_values()[nprime_index],
                               mask=m.mask, order=order)
        defects.append(m.mesh.grid(rep.defect))
        masks.append(m.mesh.grid(m.mask))
        mins.append(rep.min_defect)
    cauchy = []
    for coarse, fine, cmask in zip(defects, defects[1:], masks):
        sl = tuple(slice(None, None, 2) for _ in range(fine.ndim))
        cauchy.append(float(np.abs(coarse - fine[sl])[cmask].max()))
    return RefinementStudy(tuple(resolutions), tuple(mins), tuple(cauchy))
