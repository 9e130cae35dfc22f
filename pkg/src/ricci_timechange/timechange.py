"""Pointwise algebra behind the time-change transformation of BE(k, N).

Everything here is a closed-form function of a few real numbers or small
matrices, so it can be swept exhaustively.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dimension import check_dimension


def coefficient(N: float, Nprime: float) -> float:
    """``(N-2)(N'-2)/(N'-N)``, with limit ``N-2`` at ``N' = inf``.

    Raises
    ------
    ValueError
        If ``N < 2`` or ``N' <= N``; the transformation needs ``N' in (N, inf]``.
    """
    N = check_dimension(N, "N", minimum=2.0)
    if math.isinf(N):
        raise ValueError("N must be finite")
    Nprime = check_dimension(Nprime, "N'")
    if not Nprime > N:
        raise ValueError(f"N' must lie in (N, inf] = ({N:g}, inf], got {Nprime:g}")
    if math.isinf(Nprime):
        return N - 2.0
    return (N - 2.0) * (Nprime - 2.0) / (Nprime - N)


@dataclass(frozen=True)
class HessianSample:
    """Pointwise first/second order data of ``f`` and ``w`` in an orthonormal frame.

    ``lap_f`` is independent of ``trace(hess_f)``: on weighted spaces they differ.
    """

    hess_f: np.ndarray
    grad_f: np.ndarray
    grad_w: np.ndarray
    lap_f: float

    @property
    def n(self) -> int:
        return len(self.grad_f)


def modified_hessian(hess_f, grad_f, grad_w) -> np.ndarray:
    """``H_ij = (H_f)_ij - w_i f_j - w_j f_i + <f, w> delta_ij`` (batched over leading axes)."""
    hess_f, grad_f, grad_w = map(np.asarray, (hess_f, grad_f, grad_w))
    n = grad_f.shape[-1]
    fw = np.einsum("...i,...i->...", grad_f, grad_w)
    outer = grad_w[..., :, None] * grad_f[..., None, :]
    return hess_f - outer - np.swapaxes(outer, -1, -2) + fw[..., None, None] * np.eye(n)


def matrix_inequality_defect(s: HessianSample | tuple, Nprime: float) -> np.ndarray | float:
    """``|H|^2 + (lap f - tr H)^2/(N'-n) - (lap f)^2/N'``; never negative.

    ``s`` is a :class:`HessianSample` or a tuple of batched arrays
    ``(hess_f[..., n, n], grad_f[..., n], grad_w[..., n], lap_f[...])``.
    """
    if isinstance(s, HessianSample):
        hess_f, grad_f, grad_w, lap_f = s.hess_f, s.grad_f, s.grad_w, s.lap_f
    else:
        hess_f, grad_f, grad_w, lap_f = s
    grad_f = np.asarray(grad_f, dtype=float)
    n = grad_f.shape[-1]
    Nprime = check_dimension(Nprime, "N'")
    if not Nprime > n:
        raise ValueError(f"N' must exceed the dimension n = {n}, got {Nprime:g}")
    h = modified_hessian(hess_f, grad_f, grad_w)
    a1 = np.einsum("...ij,...ij->...", h, h)
    a2 = np.asarray(lap_f, dtype=float) - np.trace(h, axis1=-2, axis2=-1)
    tail = 0.0 if math.isinf(Nprime) else a2**2 / (Nprime - n)
    out = a1 + tail - np.asarray(lap_f, dtype=float) ** 2 / Nprime
    return float(out) if np.ndim(out) == 0 else out


def quartic_form_matrix(N: float, Nprime: float, n: int) -> np.ndarray:
    """Coefficient matrix of the residual quadratic form in ``(lap f - tr H_f, Gamma(f, w))``.

    For ``n = N`` the first variable vanishes identically, so its row and
    column are set to zero.
    """
    N = check_dimension(N, "N")
    Nprime = check_dimension(Nprime, "N'")
    if not (1 <= n <= N < Nprime) or math.isinf(N):
        raise ValueError(f"need 1 <= n <= N < N' with N finite, got n={n}, N={N:g}, N'={Nprime:g}")
    c = _raw_coefficient(N, Nprime)
    if math.isinf(Nprime):
        a11 = 0.0 if N == n else 1.0 / (N - n)
        a12 = 1.0
        a22 = c - (n - 2)
    else:
        a11 = 0.0 if N == n else 1.0 / (N - n) - 1.0 / (Nprime - n)
        a12 = 1.0 - (2 - n) / (Nprime - n)
        a22 = c - (n - 2) - (n - 2) ** 2 / (Nprime - n)
    if N == n:
        a12 = 0.0
    return np.array([[a11, a12], [a12, a22]])


def _raw_coefficient(N: float, Nprime: float) -> float:
    if math.isinf(Nprime):
        return N - 2.0
    return (N - 2.0) * (Nprime - 2.0) / (Nprime - N)


def sample_hessian_batch(rng: np.random.Generator, size: int, n: int):
    """I.i.d. standard normal entries; the Hessian is symmetrized."""
    a = rng.standard_normal((size, n, n))
    hess = (a + np.swapaxes(a, 1, 2)) / 2
    return hess, rng.standard_normal((size, n)), rng.standard_normal((size, n)), rng.standard_normal(size)


def sweep_matrix_inequality(n: int, Nprime: float, samples: int = 100_000, seed: int = 0) -> dict:
    """Minimum of the scaled defect over random samples, plus the arg-min sample."""
    rng = np.random.default_rng([seed, n])
    batch = sample_hessian_batch(rng, samples, n)
    d = matrix_inequality_defect(batch, Nprime)
    h = modified_hessian(*batch[:3])
    scale = 1 + np.einsum("...ij,...ij->...", h, h) + batch[3] ** 2
    rel = d / scale
    k = int(np.argmin(rel))
    return {
        "n": n,
        "Nprime": Nprime,
        "samples": samples,
        "seed": seed,
        "min_scaled_defect": float(rel[k]),
        "argmin": {
            "hess_f": batch[0][k].tolist(),
            "grad_f": batch[1][k].tolist(),
            "grad_w": batch[2][k].tolist(),
            "lap_f": float(batch[3][k]),
        },
    }


def quartic_sweep_grid(n_values=(1, 2), per_n: int = 5000):
    """Deterministic ``(n, N, N')`` grid with ``N in [n, 6]`` and ``N' in (N, inf]``."""
    tuples = []
    for n in n_values:
        n_N = int(round(math.sqrt(per_n)))
        n_gap = per_n // n_N
        Ns = np.linspace(n, 6.0, n_N)
        gaps = np.concatenate([np.geomspace(0.05, 200.0, n_gap - 1), [math.inf]])
        for N in Ns:
            for gap in gaps:
                tuples.append((n, float(N), float(N + gap)))
    return tuples


def sweep_quartic_form(tuples) -> dict:
    worst, arg, zeros = math.inf, None, 0
    for n, N, Np in tuples:
        m = quartic_form_matrix(N, Np, n)
        lam = np.linalg.eigvalsh(m)
        rel = lam[0] / max(1.0, abs(lam[1]))
        if abs(lam[0]) <= 1e-12 * max(1.0, abs(lam[1])):
            zeros += 1
        if rel < worst:
            worst, arg = rel, (n, N, Np)
    return {
        "tuples": len(tuples),
        "min_scaled_eigenvalue": float(worst),
        "argmin": {"n": arg[0], "N": arg[1], "Nprime": arg[2]},
        "singular_count": zeros,
    }


def jsonable(o):
    """Recursively replace numpy scalars and non-finite floats by JSON-safe values."""
    if isinstance(o, dict):
        return {str(k): jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return jsonable(o.tolist())
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def write_sweep_json(path: str | Path, summary: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(summary), indent=2, sort_keys=True))
    return path
