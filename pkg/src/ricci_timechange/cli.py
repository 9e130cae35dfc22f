"""Command-line scenario runner.

Every experiment writes CSV/JSON artifacts into the output directory and
returns a verdict; ``report.json`` is deterministic for a given scenario,
while wall-clock data goes to ``metadata.json``.  Exit codes: 0 pass,
1 verification failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .convexify import (
    ConvexifyParams,
    Cutoff,
    build_weight,
    convexity_certificate,
    disc_mask,
    laplacian_bound_check,
    minkowski_content,
    signed_distance,
)
from .dimension import format_dimension, parse_dimension
from .dirichlet import assemble_generator, be_defect, carre_du_champ, generator_checks, time_change
from .heatflow import feynman_kac_check, gradient_estimate_check
from .mesh import build_torus_mesh, flat_metric, write_field_csv
from .metricgeom import build_path_graph, comparison_bounds_check, duality_sweep, write_path_csv, shortest_path
from .models import MODEL_NAMES, WEIGHT_NAMES, model_space
from .smooth_oracle import Calculus, CurvatureReport, optimal_k, predicted_kprime, verify_theorem_B
from .timechange import jsonable, quartic_sweep_grid, sweep_matrix_inequality, sweep_quartic_form

EXPERIMENTS = ("verify-be", "verify-thmB", "gradient-estimate", "distance", "bm-check", "convexify",
               "sweep-inequalities")
ALIASES = {"sweeps": "sweep-inequalities"}
STOCHASTIC = {"verify-be", "distance", "bm-check", "convexify", "sweep-inequalities"}
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending key."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(parse_dimension(t) for t in text.split(",") if t.strip())


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    return float(text)


# key -> (parser, default); default None means the key is required
SCENARIO_KEYS = {
    "name": (str, None),
    "model": (str, None),
    "resolution": (_int, "256"),
    "weight": (str, None),
    "weight_epsilon": (_float, "0.1"),
    "weight_constant": (_float, "0.3"),
    "n": (parse_dimension, ""),
    "nprime": (_floats, None),
    "kprime": (str, "predicted"),
    "experiments": (str, None),
    "seed": (_int, ""),
    "output": (str, None),
}
EXPERIMENT_KEYS = {
    "verify-be": {"tolerance": (_float, None), "samples": (_int, "8")},
    "verify-thmB": {"tolerance": (_float, None)},
    "gradient-estimate": {"tolerance": (_float, None), "times": (_floats, "0.1, 0.5, 1"), "dt": (_float, "0.001")},
    "distance": {"tolerance": (_float, None), "sources": (_int, "40"), "targets": (_int, "25")},
    "bm-check": {"z_max": (_float, None), "paths": (_int, "100000"), "time": (_float, "0.5"), "x0": (_int, "0")},
    "convexify": {"tolerance": (_float, None), "radius": (_float, "1.0"), "ell_factor": (_float, "1.1"),
                  "r0": (_float, ""), "pairs": (_int, "1000"), "max_pair_distance": (_float, "")},
    "sweep-inequalities": {"tolerance": (_float, None), "samples": (_int, "100000"), "tuples": (_int, "10000")},
}


@dataclass(frozen=True)
class Scenario:
    name: str
    model: str
    resolution: int
    weight: str
    weight_epsilon: float
    weight_constant: float
    N: float | None
    nprime: tuple[float, ...]
    kprime: float | None
    experiments: tuple[str, ...]
    seed: int | None
    output: Path
    settings: dict = field(default_factory=dict)


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    summary: dict
    artifacts: list[str]
    runtime: float = 0.0


def _line_of(text: str, section: str, key: str | None) -> int:
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return no
    return 0


def _parse_section(cp, text, section, schema) -> dict:
    out = {}
    for key in cp[section]:
        if key not in schema:
            raise ConfigError(f"{section}.{key} (line {_line_of(text, section, key)}): unknown key; "
                              f"valid keys are {sorted(schema)}")
    for key, (parse, default) in schema.items():
        raw = cp[section].get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"{section}.{key} (line {_line_of(text, section, None)}): required key missing")
            if default == "":
                out[key] = None
                continue
            raw = default
        try:
            out[key] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key} (line {_line_of(text, section, key)}): {exc}") from None
    return out


def parse_config(path) -> Scenario:
    """Read and validate an INI scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "scenario" not in cp:
        raise ConfigError("[scenario] section missing")
    sc = _parse_section(cp, text, "scenario", SCENARIO_KEYS)
    exps = tuple(ALIASES.get(e.strip(), e.strip()) for e in sc["experiments"].split(",") if e.strip())
    line = _line_of(text, "scenario", "experiments")
    for e in exps:
        if e not in EXPERIMENTS:
            raise ConfigError(f"scenario.experiments (line {line}): unknown experiment {e!r}; "
                              f"valid names are {list(EXPERIMENTS)}")
    sections = {}
    for section in cp.sections():
        canon = ALIASES.get(section, section)
        if section != "scenario" and canon not in exps:
            raise ConfigError(f"[{section}] (line {_line_of(text, section, None)}): section for an "
                              "experiment that is not listed, or unknown section")
        sections[canon] = section
    settings = {}
    for e in exps:
        if e not in sections:
            raise ConfigError(f"[{e}] section missing: it must at least set the pass/fail tolerance")
        settings[e] = _parse_section(cp, text, sections[e], EXPERIMENT_KEYS[e])
    if sc["model"] not in MODEL_NAMES:
        raise ConfigError(f"scenario.model (line {_line_of(text, 'scenario', 'model')}): "
                          f"unknown model {sc['model']!r}; valid names are {list(MODEL_NAMES)}")
    if sc["weight"] not in WEIGHT_NAMES:
        raise ConfigError(f"scenario.weight (line {_line_of(text, 'scenario', 'weight')}): "
                          f"unknown weight {sc['weight']!r}; valid names are {list(WEIGHT_NAMES)}")
    N = sc["n"] if sc["n"] is not None else model_space(sc["model"], 256).N
    for Np in sc["nprime"]:
        if not Np > N:
            raise ConfigError(f"scenario.nprime (line {_line_of(text, 'scenario', 'nprime')}): "
                              f"N' = {format_dimension(Np)} must lie in the open range (N, inf] = "
                              f"({format_dimension(N)}, inf]")
    kp = sc["kprime"].strip().lower()
    if kp == "predicted":
        kprime = None
    else:
        try:
            kprime = float(kp)
        except ValueError:
            raise ConfigError(f"scenario.kprime (line {_line_of(text, 'scenario', 'kprime')}): "
                              "expected 'predicted' or a number") from None
    if STOCHASTIC & set(exps) and sc["seed"] is None:
        raise ConfigError(f"scenario.seed (line {_line_of(text, 'scenario', None)}): required for "
                          f"stochastic experiments {sorted(STOCHASTIC & set(exps))}")
    out = Path(sc["output"])
    if not out.is_absolute():
        out = path.parent / out
    return Scenario(sc["name"], sc["model"], sc["resolution"], sc["weight"], sc["weight_epsilon"],
                    sc["weight_constant"], sc["n"], sc["nprime"], kprime, exps, sc["seed"], out, settings)


# ---------------------------------------------------------------------------
# experiments


def _model(sc: Scenario):
    m = model_space(sc.model, sc.resolution)
    w = m.weight(sc.weight, epsilon=sc.weight_epsilon, constant=sc.weight_constant)
    N = m.N if sc.N is None else sc.N
    return m, w, N


def _write_json(path: Path, data) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")
    return str(path)


def _tag(x: float) -> str:
    return format_dimension(x).replace(".", "p")


def _predicted(m, w, N, Np):
    calc = Calculus(m.metric)
    v0, wg = m.mesh.grid(m.V0.values), m.mesh.grid(w.values)
    k = optimal_k(m.metric, m.V0, N).values
    return predicted_kprime(k, N, Np, w.values, m.mesh.flat(calc.grad_sq(wg)),
                            m.mesh.flat(calc.laplacian(wg, v0)))


def run_verify_thmB(sc: Scenario, out: Path) -> ExperimentResult:
    m, w, N = _model(sc)
    tol = sc.settings["verify-thmB"]["tolerance"]
    rows, arts, ok = [], [], True
    for Np in sc.nprime:
        rep = verify_theorem_B(m.metric, m.V0, N, w, Np, mask=m.mask, tolerance=tol)
        if sc.kprime is not None:
            rep = CurvatureReport(rep.mesh, np.full(m.mesh.n_nodes, sc.kprime), rep.oracle, rep.mask, tol,
                                  N, Np, {"kprime_override": sc.kprime})
        stem = out / f"thmB_N{_tag(N)}_Np{_tag(Np)}"
        arts += [str(p) for p in rep.write(stem)]
        rows.append(rep.summary())
        ok &= rep.passed
    return ExperimentResult("verify-thmB", ok, {"model": sc.model, "weight": sc.weight, "reports": rows}, arts)


def _bump(mesh, mask, center, radius):
    L = np.asarray(mesh.lengths)
    d = mesh.coordinates - mesh.coordinates[center]
    d -= L * np.round(d / L)
    r2 = (d**2).sum(axis=1) / radius**2
    phi = np.where(r2 < 1, (1 - r2) ** 3, 0.0)
    if np.any(phi[~mask] > 0):
        return None
    return phi


def run_verify_be(sc: Scenario, out: Path) -> ExperimentResult:
    m, w, N = _model(sc)
    cfg = sc.settings["verify-be"]
    gen = time_change(assemble_generator(m.mesh, m.metric, m.V0), w).transformed
    rng = np.random.default_rng(sc.seed)
    axes = m.mesh.axes
    rows, ok = [], True
    for Np in sc.nprime:
        k = np.full(m.mesh.n_nodes, sc.kprime) if sc.kprime is not None else _predicted(m, w, N, Np)
        worst = math.inf
        for s in range(cfg["samples"]):
            f = np.zeros(m.mesh.n_nodes)
            for _ in range(4):
                freq = rng.integers(-3, 4, size=len(axes))
                phase = rng.uniform(0, 2 * np.pi)
                f += rng.standard_normal() * np.cos(sum(q * a for q, a in zip(freq, axes)) + phase)
            phi = None
            while phi is None:
                c = int(rng.choice(np.flatnonzero(m.mask)))
                phi = _bump(m.mesh, m.mask, c, 0.5)
            scale = float(np.dot(gen.measure * (carre_du_champ(gen, f).values + gen.apply(f) ** 2), phi))
            if scale == 0:
                continue
            worst = min(worst, be_defect(gen, k, Np, f, phi) / scale)
        rows.append({"Nprime": Np, "min_relative_defect": worst, "samples": cfg["samples"]})
        ok &= worst >= -cfg["tolerance"]
    checks = generator_checks(gen)
    summary = {"model": sc.model, "weight": sc.weight, "seed": sc.seed, "tolerance": cfg["tolerance"],
               "results": rows, "generator_checks": checks}
    return ExperimentResult("verify-be", ok, summary, [_write_json(out / "verify_be.json", summary)])


def run_gradient_estimate(sc: Scenario, out: Path) -> ExperimentResult:
    m, w, N = _model(sc)
    cfg = sc.settings["gradient-estimate"]
    pair = time_change(assemble_generator(m.mesh, m.metric, m.V0), w)
    f = m.harmonic(*m.mesh.axes) + 0.5 * np.sin(2 * m.mesh.axes[0])
    rows, arts, ok = [], [], True
    for Np in sc.nprime:
        if sc.kprime is None:
            Kp = float(_predicted(m, w, N, Np)[m.mask].min())
            certified = True
        else:
            Kp, certified = sc.kprime, None
        rep = gradient_estimate_check(pair, Kp, Np, f, cfg["times"], dt=cfg["dt"], certified=certified)
        defects = {f"defect_t{t:g}": np.where(m.mask, d, np.nan) for t, d in zip(rep.times, rep.defects)}
        arts.append(str(write_field_csv(out / f"gradient_Np{_tag(Np)}.csv", m.mesh, **defects)))
        masked = [float(np.min(d[m.mask])) for d in rep.defects]
        rows.append({**rep.summary(), "min_defects": masked})
        ok &= min(masked) >= -cfg["tolerance"]
    summary = {"model": sc.model, "weight": sc.weight, "tolerance": cfg["tolerance"], "results": rows}
    arts.append(_write_json(out / "gradient_estimate.json", summary))
    return ExperimentResult("gradient-estimate", ok, summary, arts)


def run_distance(sc: Scenario, out: Path) -> ExperimentResult:
    m, w, _ = _model(sc)
    cfg = sc.settings["distance"]
    rng = np.random.default_rng(sc.seed)
    g = build_path_graph(m.mesh, m.metric, w)
    n = m.mesh.n_nodes
    src = rng.choice(n, size=min(cfg["sources"], n), replace=False)
    tgt = rng.choice(n, size=min(cfg["targets"], n), replace=False)
    duality = duality_sweep(g, src, tgt)
    pairs = np.stack(np.meshgrid(src, tgt, indexing="ij"), axis=-1).reshape(-1, 2)
    bounds = comparison_bounds_check(g, w, pairs)
    _, path = shortest_path(g, int(src[0]), int(tgt[0]))
    arts = [str(write_path_csv(out / "distance_path.csv", g, path))]
    ok = (duality["max_relative_gap"] <= cfg["tolerance"] and bounds["min_lower_slack"] >= -cfg["tolerance"]
          and bounds["min_upper_slack"] >= -cfg["tolerance"])
    summary = {"model": sc.model, "weight": sc.weight, "seed": sc.seed, "duality": duality, "bounds": bounds,
               "tolerance": cfg["tolerance"]}
    arts.append(_write_json(out / "distance.json", summary))
    return ExperimentResult("distance", ok, summary, arts)


def run_bm_check(sc: Scenario, out: Path) -> ExperimentResult:
    m, w, _ = _model(sc)
    cfg = sc.settings["bm-check"]
    f = m.harmonic(*m.mesh.axes)
    res = feynman_kac_check(m.mesh, m.metric, w, f, cfg["x0"], cfg["time"], cfg["paths"], sc.seed, m.V0)
    summary = {"model": sc.model, "weight": sc.weight, "seed": sc.seed, "mc_mean": res.mc_mean,
               "mc_stderr": res.mc_stderr, "pde_value": res.pde_value, "z_score": res.z_score,
               "paths": res.n_paths, "z_max": cfg["z_max"]}
    ok = res.z_score <= cfg["z_max"]
    counts = np.bincount(res.endpoints, minlength=m.mesh.n_nodes)
    arts = [str(write_field_csv(out / "bm_endpoints.csv", m.mesh, count=counts, f=f)),
            _write_json(out / "bm_check.json", summary)]
    return ExperimentResult("bm-check", ok, summary, arts)


def run_convexify(sc: Scenario, out: Path) -> ExperimentResult:
    cfg = sc.settings["convexify"]
    n = sc.resolution
    L = 2 * math.pi
    mesh = build_torus_mesh(n, n, L, L)
    R = cfg["radius"]
    mask = disc_mask(mesh, (L / 2, L / 2), R, complement=True)
    V = signed_distance(None, mask, "auto")
    r0 = cfg["r0"] if cfg["r0"] is not None else R / 2
    params = ConvexifyParams(-cfg["ell_factor"] / R, r0, 0.0, 2.0)
    w = build_weight(V, params)
    gen = assemble_generator(mesh, flat_metric(mesh))
    lap = laplacian_bound_check(gen, w, params, mask, V)
    g0 = build_path_graph(mesh)
    D = cfg["max_pair_distance"] if cfg["max_pair_distance"] is not None else 2 * R
    control = convexity_certificate(g0, mask, cfg["pairs"], sc.seed, V, D)
    treated = convexity_certificate(g0.with_weight(w), mask, cfg["pairs"], sc.seed, V, D)
    audit = Cutoff(params.ell_prime, params.r0).audit
    mink = minkowski_content(mask)
    ok = (lap.min_defect >= -cfg["tolerance"] and treated.passed and not control.passed and audit["passed"])
    summary = {
        "laplacian": {"bound": lap.bound, "min_defect": lap.min_defect, "checked_nodes": lap.checked_nodes},
        "control_w0": control.summary(),
        "treated": treated.summary(),
        "cutoff_audit": audit,
        "minkowski": {"eps": mink.eps, "ratios": mink.ratios, "extrapolated": mink.extrapolated,
                      "perimeter": 2 * math.pi * R},
        "params": {"ell_prime": params.ell_prime, "r0": params.r0, "K": params.K, "N": params.N},
        "tolerance": cfg["tolerance"],
    }
    arts = [str(write_field_csv(out / "convexify_fields.csv", mesh, V=V, w=w, laplacian_defect=lap.defect)),
            _write_json(out / "convexify.json", summary)]
    return ExperimentResult("convexify", ok, summary, arts)


def run_sweeps(sc: Scenario, out: Path) -> ExperimentResult:
    cfg = sc.settings["sweep-inequalities"]
    rows = []
    for n in (1, 2, 3, 5):
        for Np in (n + 0.5, n + 2.0, math.inf):
            rows.append(sweep_matrix_inequality(n, Np, cfg["samples"], sc.seed))
    quartic = sweep_quartic_form(quartic_sweep_grid(per_n=cfg["tuples"] // 2))
    worst = min(r["min_scaled_defect"] for r in rows)
    ok = worst >= -cfg["tolerance"] and quartic["min_scaled_eigenvalue"] >= -cfg["tolerance"]
    summary = {"matrix_inequality": rows, "quartic_form": quartic, "tolerance": cfg["tolerance"]}
    return ExperimentResult("sweep-inequalities", ok, summary, [_write_json(out / "sweeps.json", summary)])


RUNNERS = {
    "verify-be": run_verify_be,
    "verify-thmB": run_verify_thmB,
    "gradient-estimate": run_gradient_estimate,
    "distance": run_distance,
    "bm-check": run_bm_check,
    "convexify": run_convexify,
    "sweep-inequalities": run_sweeps,
}


def _run_one(sc: Scenario, name: str) -> ExperimentResult:
    start = time.perf_counter()
    try:
        res = RUNNERS[name](sc, sc.output / name)
    except Exception as exc:
        raise RuntimeError(f"{name}: {exc}") from exc
    res.runtime = time.perf_counter() - start
    return res


def run(sc: Scenario, jobs: int = 1) -> dict:
    """Execute the scenario; returns the report and writes ``report.json`` and ``metadata.json``."""
    sc.output.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    if jobs > 1 and len(sc.experiments) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, [sc] * len(sc.experiments), sc.experiments))
    else:
        results = [_run_one(sc, e) for e in sc.experiments]
    report = {
        "scenario": sc.name,
        "seed": sc.seed,
        "passed": all(r.passed for r in results),
        "experiments": [
            {"name": r.name, "verdict": "pass" if r.passed else "fail", "summary": r.summary,
             "artifacts": [str(Path(a).relative_to(sc.output)) for a in r.artifacts]}
            for r in results
        ],
    }
    _write_json(sc.output / "report.json", report)
    _write_json(sc.output / "metadata.json", {
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "runtimes_s": {r.name: r.runtime for r in results},
    })
    return report


# ---------------------------------------------------------------------------
# argument parsing


def _common(p, tolerance: float | None, tol_name: str = "--tolerance"):
    p.add_argument("--model", choices=MODEL_NAMES, default="flat_circle")
    p.add_argument("--resolution", type=int, default=256, help="nodes per 2 pi")
    p.add_argument("--weight", choices=WEIGHT_NAMES, default="harmonic")
    p.add_argument("--nprime", type=_floats, default=None, help="comma list, e.g. '2.5,4,inf'")
    p.add_argument("--kprime", default="predicted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="ricci_out")
    if tolerance is not None:
        p.add_argument(tol_name, type=float, default=tolerance, dest="tolerance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ricci-timechange", description=__doc__.splitlines()[0])
    ap.add_argument("--jobs", type=int, default=1, help="run independent experiments in parallel")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("verify-be", help="BE(k', N') defect of the time-changed generator")
    _common(p, 1e-3)
    p.add_argument("--samples", type=int, default=8)
    p = sub.add_parser("verify-thmB", help="predicted vs finite-difference curvature bound")
    _common(p, 1e-4)
    p = sub.add_parser("gradient-estimate", help="gradient estimate for the time-changed semigroup")
    _common(p, 5e-4)
    p.add_argument("--times", type=_floats, default=(0.1, 0.5, 1.0))
    p.add_argument("--dt", type=float, default=1e-3)
    p = sub.add_parser("distance", help="primal/dual conformal distance and comparison bounds")
    _common(p, 1e-12)
    p.add_argument("--sources", type=int, default=40)
    p.add_argument("--targets", type=int, default=25)
    p = sub.add_parser("bm-check", help="Feynman-Kac check of the time-changed random walk")
    _common(p, 3.0, "--z-max")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--time", type=float, default=0.5)
    p.add_argument("--x0", type=int, default=0)
    p = sub.add_parser("convexify", help="disc-complement convexification on the flat torus")
    _common(p, 0.0)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--ell-factor", type=float, default=1.1)
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--max-pair-distance", type=float, default=None)
    p = sub.add_parser("sweep-inequalities", help="random and grid sweeps of the pointwise inequalities")
    _common(p, 1e-12)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--tuples", type=int, default=10_000)
    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("config")
    return ap


def _scenario_from_args(args) -> Scenario:
    name = args.command
    m = model_space(args.model, 256)
    nprime = args.nprime if args.nprime is not None else (m.N + 0.5, 2 * m.N, math.inf)
    for Np in nprime:
        if not Np > m.N:
            raise ConfigError(f"--nprime: N' = {format_dimension(Np)} must lie in (N, inf] = "
                              f"({format_dimension(m.N)}, inf]")
    kp = None if args.kprime == "predicted" else float(args.kprime)
    settings = {}
    schema = EXPERIMENT_KEYS[name]
    for key in schema:
        attr = "tolerance" if key == "z_max" else key
        if hasattr(args, attr):
            settings[key] = getattr(args, attr)
        elif schema[key][1] == "":
            settings[key] = None
        else:
            settings[key] = schema[key][0](schema[key][1])
    return Scenario(name, args.model, args.resolution, args.weight, 0.1, 0.3, None, tuple(nprime), kp,
                    (name,), args.seed, Path(args.output), {name: settings})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_PASS
    try:
        sc = parse_config(args.config) if args.command == "run" else _scenario_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run(sc, jobs=args.jobs)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for e in report["experiments"]:
        print(f"{e['name']}: {e['verdict']}")
    print(f"overall: {'pass' if report['passed'] else 'fail'} ({sc.output / 'report.json'})")
    return EXIT_PASS if report["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
