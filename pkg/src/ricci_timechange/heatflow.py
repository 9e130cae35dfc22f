"""Heat semigroups of discrete generators and the time-changed random walk.

``heat_solve`` integrates ``du/dt = L u`` with Crank-Nicolson in the
symmetric form ``(M - dt A/2) u+ = (M + dt A/2) u`` where ``M = diag(m)`` and
``A = M L``; ``1^T A = 0`` makes the mass ``m . u`` invariant in exact
arithmetic.

The random walk runs at base generator ``L/2`` (so that ``P_t f(x) =
E_x f(B_{2t})``) and is time-changed by inverting the clock
``sigma_s = int_0^s exp(2 w(B_r)) dr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dimension import check_dimension
from .dirichlet import Generator, TimeChangedPair, _values, assemble_generator, carre_du_champ, time_change
from .mesh import Mesh, MetricField, ScalarField

EXPM_MAX_NODES = 512
KPRIME_ZERO = 1e-12
MASS_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SemigroupSolve:
    """Solution of the heat equation at the recorded times.

    ``values`` has shape ``(len(times), n_nodes)`` or, for stacked initial
    data, ``(len(times), n_nodes, k)``.
    """

    generator: Generator
    times: np.ndarray
    values: np.ndarray
    scheme: str
    dt: float
    mass_drift: float = 0.0
    max_principle_excess: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"time {t} was not recorded (nearest {self.times[k]})")
        return self.values[k]


def _invariants(gen: Generator, u0: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    m = gen.measure
    mass0 = np.tensordot(m, u0, axes=(0, 0))
    mass = np.tensordot(values, m, axes=(1, 0))
    scale = np.maximum(np.abs(np.tensordot(np.abs(u0).T, m, axes=1)), 1e-300)
    drift = float(np.max(np.abs(mass - mass0) / scale))
    lo, hi = u0.min(axis=0), u0.max(axis=0)
    excess = float(np.max(np.maximum(values - hi, lo - values)))
    return drift, max(excess, 0.0)


def heat_solve(gen: Generator, f0, t_final: float, steps: int, scheme: str = "crank-nicolson",
               record: str = "all", max_principle_tol: float | None = 1e-10) -> SemigroupSolve:
    """Approximate ``exp(t L) f0`` for ``t`` on a uniform grid of ``steps`` steps.

    Parameters
    ----------
    f0 : ScalarField or ndarray
        Shape ``(n_nodes,)``, or ``(n_nodes, k)`` to evolve ``k`` fields together.
    scheme : {"crank-nicolson", "expm"}
        ``"expm"`` evaluates the dense matrix exponential; only for small meshes.
    record : {"all", "final"} or iterable of int
        Which step indices to keep (``0`` is the initial data).
    max_principle_tol : float or None
        Relative excess over ``[min f0, max f0]`` that raises; ``None`` only reports.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not t_final >= 0:
        raise ValueError("t_final must be >= 0")
    u0 = f0.values if isinstance(f0, ScalarField) else np.asarray(f0, dtype=float)
    if u0.shape[0] != gen.n_nodes or u0.ndim > 2:
        raise ValueError(f"initial data must have {gen.n_nodes} rows, got shape {u0.shape}")
    dt = t_final / steps
    times = np.linspace(0.0, t_final, steps + 1)
    if isinstance(record, str):
        if record not in ("all", "final"):
            raise ValueError(f"record must be 'all', 'final' or step indices, got {record!r}")
        keep = set(range(steps + 1)) if record == "all" else {steps}
    else:
        keep = {int(k) for k in record}
        if not keep or min(keep) < 0 or max(keep) > steps:
            raise ValueError(f"recorded steps must lie in [0, {steps}]")
    # evolve the deviation from one node value so constants stay exact
    base = u0[0].copy()
    v = u0 - base
    out = [u0.copy()] if 0 in keep else []
    if dt == 0.0:
        values = np.array([u0.copy()] * len(keep))
        return SemigroupSolve(gen, times[sorted(keep)], values, scheme, dt, 0.0, 0.0)

    if scheme == "crank-nicolson":
        M = sp.diags(gen.measure)
        lhs = (M - 0.5 * dt * gen.stiffness).tocsc()
        rhs = (M + 0.5 * dt * gen.stiffness).tocsr()
        try:
            lu = spla.splu(lhs)
        except RuntimeError as exc:
            raise RuntimeError(f"Crank-Nicolson factorization failed: {exc}") from exc
        for k in range(1, steps + 1):
            v = lu.solve(rhs @ v)
            if k in keep:
                out.append(v + base)
    elif scheme == "expm":
        if gen.n_nodes > EXPM_MAX_NODES:
            raise ValueError(f"expm reference limited to {EXPM_MAX_NODES} nodes, got {gen.n_nodes}")
        step = scipy.linalg.expm(dt * gen.operator.toarray())
        for k in range(1, steps + 1):
            v = step @ v
            if k in keep:
                out.append(v + base)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    times = times[sorted(keep)]
    values = np.array(out)
    if not np.all(np.isfinite(values)):
        raise RuntimeError("heat solve produced non-finite values")
    drift, excess = _invariants(gen, u0, values)
    if drift > MASS_TOL:
        raise RuntimeError(f"mass not conserved: relative drift {drift:.3e}")
    spread = float(np.max(np.ptp(u0, axis=0))) if u0.size else 0.0
    if max_principle_tol is not None and excess > max_principle_tol * max(spread, np.abs(u0).max(), 1e-300):
        raise RuntimeError(
            f"maximum principle violated by {excess:.3e}; use more steps (dt = {dt:.3e})"
        )
    return SemigroupSolve(gen, times, values, scheme, dt, drift, excess)


def gradient_coefficient(Kprime: float, Nprime: float, t: float) -> float:
    """``(1 - exp(-2 K' t)) / (N' K')``, with ``2t/N'`` at ``K' = 0`` and ``0`` at ``N' = inf``."""
    if math.isinf(Nprime):
        return 0.0
    if abs(Kprime) < KPRIME_ZERO:
        return 2.0 * t / Nprime
    return -math.expm1(-2.0 * Kprime * t) / (Nprime * Kprime)


@dataclass(frozen=True, eq=False)
class GradientEstimateReport:
    """``RHS - LHS`` of the gradient estimate at each requested time."""

    times: tuple[float, ...]
    defects: np.ndarray
    Kprime: float
    Nprime: float
    certified: bool | None
    dt: float

    @property
    def min_defects(self) -> tuple[float, ...]:
        return tuple(float(d.min()) for d in self.defects)

    @property
    def argmins(self) -> tuple[int, ...]:
        return tuple(int(np.argmin(d)) for d in self.defects)

    def passed(self, tolerance: float) -> bool:
        return min(self.min_defects) >= -tolerance

    def summary(self) -> dict:
        return {
            "times": list(self.times),
            "min_defects": list(self.min_defects),
            "argmin_nodes": list(self.argmins),
            "Kprime": self.Kprime,
            "Nprime": self.Nprime,
            "certified": self.certified,
            "dt": self.dt,
        }


def gradient_estimate_check(pair: TimeChangedPair | Generator, Kprime: float, Nprime: float, f, t_list,
                            dt: float = 1e-3, certified: bool | None = None) -> GradientEstimateReport:
    """Evaluate ``e^{-2K't} P_t Gamma(f) - Gamma(P_t f) - C(t) (L P_t f)^2`` per node.

    Everything is computed on ``pair.transformed`` (or on a bare generator).
    ``P_t f`` and ``P_t Gamma(f)`` are evolved together with one factorization;
    every ``t`` must be a multiple of ``dt``.  ``certified`` records whether
    the caller checked ``(K', N')`` for this space; ``None`` means unchecked.
    """
    gen = pair.transformed if isinstance(pair, TimeChangedPair) else pair
    Nprime = check_dimension(Nprime, "N'")
    fv = _values(gen, f)
    t_list = tuple(float(t) for t in t_list)
    if any(t < 0 for t in t_list):
        raise ValueError("times must be non-negative")
    marks = [int(round(t / dt)) for t in t_list]
    for t, k in zip(t_list, marks):
        if abs(k * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not a multiple of dt = {dt}")
    gam0 = carre_du_champ(gen, fv).values
    stack = np.stack([fv, gam0], axis=1)
    n_steps = max(marks) if marks else 0
    if n_steps:
        sol = heat_solve(gen, stack, n_steps * dt, n_steps, record=set(marks), max_principle_tol=None)
        snapshots = dict(zip(sorted(set(marks)), sol.values))
    else:
        snapshots = {0: stack}
    defects = []
    for t, k in zip(t_list, marks):
        u, pg = snapshots[k][:, 0], snapshots[k][:, 1]
        lhs = carre_du_champ(gen, u).values + gradient_coefficient(Kprime, Nprime, t) * gen.apply(u) ** 2
        rhs = math.exp(-2.0 * Kprime * t) * pg
        defects.append(rhs - lhs)
    return GradientEstimateReport(t_list, np.array(defects), float(Kprime), Nprime, certified, dt)


# ---------------------------------------------------------------------------
# time-changed random walk


def _walk_kernel(gen: Generator):
    """Lazy jump chain of ``L/2`` with step ``ds = 1 / max(-L_ii)``.

    Every node keeps its position with probability at least 1/2, so the
    chain is aperiodic and its law tracks ``exp(s L/2)`` node by node.

    Returns ``ds`` and padded per-node tables ``cum[i, :]`` (cumulative
    one-step probabilities, padded with values above 1) and ``cols[i, :]``;
    a uniform ``u`` at node ``i`` moves to ``cols[i, #{cum[i] <= u}]``.
    """
    L = gen.operator.tocsr()
    ds = 1.0 / (-L.diagonal()).max()
    P = (sp.identity(gen.n_nodes, format="csr") + 0.5 * ds * L).tocsr()
    P.sort_indices()
    width = int(np.diff(P.indptr).max())
    cum = np.full((P.shape[0], width), 2.0)
    cols = np.repeat(np.arange(P.shape[0])[:, None], width, axis=1)
    for i in range(P.shape[0]):
        lo, hi = P.indptr[i], P.indptr[i + 1]
        probs = np.clip(P.data[lo:hi], 0.0, None)
        c = np.cumsum(probs) / probs.sum()
        cum[i, : hi - lo - 1] = c[:-1]
        cols[i, : hi - lo] = P.indices[lo:hi]
    return ds, cum, cols


def _uniforms(seed: int, step: int, count: int) -> np.ndarray:
    """``count`` uniforms for ``step``; entry ``p`` depends only on ``(seed, step, p)``."""
    bitgen = np.random.Philox(key=np.array([seed, step], dtype=np.uint64))
    return np.random.Generator(bitgen).random(count)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Endpoints ``B'_{t_target}`` of independent time-changed walks."""

    seed: int
    path_ids: np.ndarray
    endpoints: np.ndarray
    base_times: np.ndarray
    t_target: float
    ds: float
    steps_taken: int

    @property
    def n_paths(self) -> int:
        return len(self.path_ids)


def _run(gen, factor, x0, t_target, path_ids, seed, max_steps, keep_history=False):
    ds, cum, cols = _walk_kernel(gen)
    n = len(path_ids)
    pos = np.full(n, x0, dtype=np.int64)
    clock = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    end = np.full(n, x0, dtype=np.int64)
    base_time = np.zeros(n)
    history = [(pos.copy(), clock.copy())] if keep_history else None
    if t_target == 0:
        return ds, end, base_time, 0, history
    need = int(path_ids.max()) + 1
    step = 0
    while not done.all():
        if step >= max_steps:
            left = int((~done).sum())
            raise RuntimeError(
                f"{left} of {n} paths did not reach clock {t_target} within {max_steps} steps "
                f"(ds = {ds:.3e}, base time {max_steps * ds:.3e}); raise max_steps"
            )
        u = _uniforms(seed, step, need)[path_ids]
        nxt = cols[pos, (cum[pos] <= u[:, None]).sum(axis=1)]
        inc = 0.5 * ds * (factor[pos] + factor[nxt])
        new_clock = clock + inc
        hit = (~done) & (new_clock >= t_target)
        frac = (t_target - clock[hit]) / inc[hit]
        end[hit] = pos[hit]
        base_time[hit] = (step + frac) * ds
        done |= hit
        pos, clock = nxt, new_clock
        if keep_history:
            history.append((pos.copy(), clock.copy()))
        step += 1
    return ds, end, base_time, step, history


def simulate_time_changed_bm(mesh: Mesh, metric: MetricField, w, x0: int, t_target: float,
                             n_paths: int, seed: int, log_density: ScalarField | None = None,
                             max_steps: int = 1_000_000) -> PathEnsemble:
    """Sample ``B'_{t_target}`` started at node ``x0``.

    The base walk jumps with the rates of ``L/2`` on steps of length ``ds``;
    the clock ``sigma`` is integrated by the trapezoidal rule and the walk is
    stopped at the first base time where ``sigma`` reaches ``t_target``
    (linear interpolation within the step).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if t_target < 0:
        raise ValueError("t_target must be >= 0")
    gen = assemble_generator(mesh, metric, log_density)
    factor = np.exp(2 * _values(gen, w if not np.isscalar(w) else np.full(mesh.n_nodes, float(w))))
    ids = np.arange(n_paths)
    ds, end, base_time, steps, _ = _run(gen, factor, x0, t_target, ids, seed, max_steps)
    return PathEnsemble(seed, ids, end, base_time, t_target, ds, steps)


def walk_trajectory(mesh: Mesh, metric: MetricField, w, x0: int, t_target: float, seed: int,
                    path_index: int, log_density: ScalarField | None = None,
                    max_steps: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Node sequence and clock values of one path, identical to its run inside an ensemble."""
    gen = assemble_generator(mesh, metric, log_density)
    factor = np.exp(2 * _values(gen, w if not np.isscalar(w) else np.full(mesh.n_nodes, float(w))))
    _, _, _, _, hist = _run(gen, factor, x0, t_target, np.array([path_index]), seed, max_steps,
                            keep_history=True)
    nodes = np.array([h[0][0] for h in hist])
    clocks = np.array([h[1][0] for h in hist])
    return nodes, clocks


@dataclass(frozen=True)
class FeynmanKacResult:
    mc_mean: float
    mc_stderr: float
    pde_value: float
    z_score: float
    n_paths: int
    seed: int
    endpoints: np.ndarray = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.z_score <= 3.0


def feynman_kac_check(mesh: Mesh, metric: MetricField, w, f, x0: int, t: float, n_paths: int,
                      seed: int, log_density: ScalarField | None = None, pde_steps: int = 2000) -> FeynmanKacResult:
    """Compare ``E f(B'_{2t})`` with ``P'_t f(x0)`` from :func:`heat_solve`."""
    base = assemble_generator(mesh, metric, log_density)
    wv = np.full(mesh.n_nodes, float(w)) if np.isscalar(w) else _values(base, w)
    fv = _values(base, f)
    pair = time_change(base, wv)
    pde = float(heat_solve(pair.transformed, fv, t, pde_steps, record="final").final[x0])
    ens = simulate_time_changed_bm(mesh, metric, wv, x0, 2 * t, n_paths, seed, log_density)
    samples = fv[ens.endpoints]
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    if stderr == 0.0:
        z = 0.0 if mean == pde else math.inf
    else:
        z = abs(mean - pde) / stderr
    return FeynmanKacResult(mean, stderr, pde, z, n_paths, seed, ens.endpoints)
