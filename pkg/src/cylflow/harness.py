"""Experiment orchestration behind the command line: single runs, translator
solves, parameter sweeps, refinement studies and hypothesis checks.

Every entry point returns ``(exit_code, summary)`` and writes its files into
one output directory.  Summaries are deterministic for a given config; wall
clock timings go to a separate ``timings.json``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .angles import AngleError, AngleSeries, ConstantAngle, EndpointAngles, contact_angle_field
from .config import SCHEMA_VERSION, ConfigError, ScenarioConfig, initial_data, parse_config, random_smooth
from .diagnostics import (
    Verdict,
    check_conditions,
    classify_trichotomy,
    compute_I,
    energy_dissipation_check,
    expected_verdict,
    tol_c,
)
from .fields import ContactAngleError
from .flow import FlowError, FlowParams, comparison_test, run_flow
from .geometry import GeometryError, build_geometry, write_structured_grid
from .translators import (
    NewtonConvergenceError,
    cap_driving_force,
    cap_profile,
    extract_speed_from_flow,
    grim_reaper_profile,
    grim_reaper_speed,
    solve_translator_newton,
    uniqueness_probe,
    verify_flux_identity,
)

log = logging.getLogger("cylflow")

EXIT_OK, EXIT_SOLVER, EXIT_FALSIFIED, EXIT_CONFIG = 0, 1, 2, 64
CSV_COLUMNS = ("t", "E", "sup_grad", "sup_ut", "c_est", "max_w", "max_phi", "bc_residual")


# ---------------------------------------------------------------- building blocks

@dataclass
class Built:
    cfg: ScenarioConfig
    geom: object
    theta: object
    A: float


def build(cfg: ScenarioConfig, level: int = 0, A: float | None = None, theta_offset: float = 0.0) -> Built:
    """Geometry, angle field and driving force for a config (optionally coarsened or perturbed)."""
    try:
        geom = build_geometry(cfg.domain.to_spec(level))
        spec = _offset(cfg.theta.to_spec(), theta_offset)
        theta = contact_angle_field(geom, spec)
    except (GeometryError, AngleError) as exc:
        raise ConfigError(str(exc)) from exc
    return Built(cfg, geom, theta, cfg.A if A is None else float(A))


def _offset(spec, d):
    if d == 0:
        return spec
    if isinstance(spec, ConstantAngle):
        return ConstantAngle(spec.value + d)
    if isinstance(spec, EndpointAngles):
        return EndpointAngles(spec.left + d, spec.right + d)
    return AngleSeries(spec.mean + d, spec.cos, spec.sin)


@dataclass
class Oracle:
    kind: str
    c: float
    profile: object  # callable(geom) -> grid function anchored at the anchor node


def analytic_oracle(b: Built) -> Oracle | None:
    """Closed-form translator when the scenario has one (flat, grim reaper, cap)."""
    g, th, A = b.geom, b.theta, b.A
    if not th.is_constant:
        return None
    value = float(th.values.flat[0])
    if abs(np.cos(value)) < 1e-15:
        return Oracle("flat", A, lambda geom: np.zeros(geom.shape))
    if g.dim == 1:
        a, bb = g.spec.a, g.spec.b
        if A == 0 and abs(a + bb) < 1e-14:
            c = grim_reaper_speed(value, bb)

            def prof(geom, c=c):
                p = grim_reaper_profile(geom.x, c)
                return p - p[geom.anchor]

            return Oracle("grim-reaper", c, prof)
        return None
    if g.spec.is_circle:
        R = g.spec.rho_cos[0]
        if abs(A - cap_driving_force(value, R)) < 1e-12 * (1 + abs(A)):
            def prof(geom, A=A, R=R):
                p = cap_profile(np.hypot(geom.x, geom.y), A, R)
                return p - p[geom.anchor]

            return Oracle("cap", 0.0, prof)
    return None


def output_dir(cfg: ScenarioConfig, override: str | None = None, suffix: str | None = None) -> Path:
    if override:
        root = Path(override)
    elif cfg.output.directory:
        root = Path(cfg.output.directory)
    else:
        root = Path(os.environ.get("CYLFLOW_OUTPUT_ROOT", "runs")) / cfg.name
    if suffix:
        root = root / suffix
    root.mkdir(parents=True, exist_ok=True)
    return root


def workers_default(n_tasks: int) -> int:
    env = os.environ.get("CYLFLOW_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CYLFLOW_WORKERS must be an integer, got {env!r}")
    return max(1, min(n_tasks, os.cpu_count() or 1))


def write_json_atomic(path: Path, data: dict) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    os.replace(tmp, path)


def _jsonable(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Verdict):
        return o.value
    raise TypeError(f"not serialisable: {type(o)}")


def write_trajectory_csv(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([f"{getattr(r, c):.17g}" for c in CSV_COLUMNS])


def _flow_params(b: Built, horizon: float) -> FlowParams:
    cfg = b.cfg
    s, tol = cfg.scheme, cfg.tolerances
    return FlowParams(
        A=b.A, theta=b.theta, scheme=s.scheme, cfl=s.cfl, dt=s.dt, linear_solver=s.linear_solver,
        linear_tol=s.linear_tol, max_time=horizon, max_steps=s.max_steps, record_every=s.record_every,
        eps_stat=tol.eps_stat, eps_tw=tol.eps_tw, stop_rules=cfg.stop_rules,
    )


def _envelope(cfg: ScenarioConfig, command: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.resolved()}


# ---------------------------------------------------------------- flow

def flow_summary(b: Built, traj, oracle: Oracle | None = None) -> dict:
    """Verdict, speed estimate and the property checks of one trajectory."""
    g, A = b.geom, b.A
    est = extract_speed_from_flow(traj.times, traj.anchor_values,
                                  traj.fields[-2:] if len(traj.fields) >= 2 else None, anchor=g.anchor)
    sup_ut = traj.column("sup_ut")
    cls = classify_trichotomy(est.c_est, float(sup_ut[-1]), traj.I, g, A)
    diss = energy_dissipation_check(traj.records)
    half = traj.times >= 0.5 * traj.times[-1]
    sg = traj.column("sup_grad")
    mphi = traj.column("max_phi")
    out = {
        "stop_reason": traj.stop_reason,
        "t_final": traj.final.t,
        "steps": traj.steps,
        "dt": traj.dt,
        "I": traj.I,
        "c_est": est.c_est,
        "profile_drift": est.profile_drift,
        "classification": cls.as_dict(),
        "compat_residual": traj.compat_residual,
        "checks": {
            "energy_monotone": diss.monotone,
            "energy_worst_increase": diss.worst_increase,
            "ut_max_principle": bool(np.all(sup_ut <= sup_ut[0] * (1 + 1e-6) + 1e-8)),
            "sandwich": all(r.sandwich_ok for r in traj.records),
            "sup_grad_first_half": float(sg[~half].max()) if np.any(~half) else float(sg[0]),
            "sup_grad_second_half": float(sg[half].max()),
            "max_phi_second_half_rise": float(np.max(np.diff(mphi[half]), initial=0.0)),
        },
    }
    if oracle is not None:
        prof = traj.final.u - traj.final.u[g.anchor]
        ref = oracle.profile(g)
        out["oracle"] = {
            "kind": oracle.kind,
            "c": oracle.c,
            "c_error": abs(est.c_est - oracle.c),
            "profile_error": float(np.max(np.abs(prof - ref))),
            "profile_rel_error": _relative(np.max(np.abs(prof - ref)), np.max(np.abs(ref))),
        }
    return out


def _relative(err, size) -> float:
    """``err / size``, or plain ``err`` against an identically zero reference."""
    return float(err / size) if size > 0 else float(err)


def run_flow_scenario(cfg: ScenarioConfig, out: str | None = None) -> tuple[int, dict]:
    if cfg.comparison is not None:
        return run_comparison_suite(cfg, out)
    b = build(cfg)
    d = output_dir(cfg, out)
    u0 = initial_data(cfg, b.geom)
    horizon = cfg.horizon_for(b.geom)
    t0 = time.perf_counter()
    try:
        traj = run_flow(b.geom, u0, _flow_params(b, horizon), keep_fields=True)
    except (FlowError, ContactAngleError) as exc:
        summary = _envelope(cfg, "flow") | {"error": str(exc)}
        write_json_atomic(d / "summary.json", summary)
        return EXIT_SOLVER, summary
    summary = _envelope(cfg, "flow") | flow_summary(b, traj, analytic_oracle(b))
    summary["conditions"] = [r.as_dict() for r in _conditions(b)]
    falsified = summary["classification"]["falsified"]
    summary["acceptance"] = {"falsified": falsified}
    write_trajectory_csv(d / "trajectory.csv", traj.records)
    if cfg.output.snapshots:
        write_structured_grid(d / "final.txt", b.geom, {"u": traj.final.u, "ut": traj.final.ut},
                              header=f"t={traj.final.t:.17g}")
    write_json_atomic(d / "summary.json", summary)
    write_json_atomic(d / "timings.json", {"wall": time.perf_counter() - t0})
    return (EXIT_FALSIFIED if falsified else EXIT_OK), summary


def _conditions(b: Built):
    tol = b.cfg.tolerances
    return check_conditions(b.geom, b.A, b.theta, tol.tau_ii, tol.tau_iii)


def comparison_pairs(b: Built, n: int, max_gap: float, seed: int, amplitude: float = 0.3):
    """``n`` ordered pairs ``u0 <= v0``; every other pair touches at one node."""
    rng = np.random.default_rng(seed)
    for k in range(n):
        u0 = random_smooth(b.geom, rng, amplitude)
        f = random_smooth(b.geom, rng, amplitude)
        gap = 0.0 if k % 2 == 0 else rng.uniform(0, max_gap)
        s = rng.uniform(0.1, 1.0)
        yield u0, u0 + gap + s * (f - f.min())


def run_comparison_suite(cfg: ScenarioConfig, out: str | None = None) -> tuple[int, dict]:
    b = build(cfg)
    d = output_dir(cfg, out)
    horizon = cfg.horizon_for(b.geom)
    params = _flow_params(b, horizon)
    rows = []
    for k, (u0, v0) in enumerate(comparison_pairs(b, cfg.comparison.pairs, cfg.comparison.max_gap, cfg.seed)):
        rep = comparison_test(b.geom, u0, v0, params, horizon)
        rows.append({"pair": k, "passed": rep.passed, "worst_violation": rep.worst_violation,
                     "min_gap": rep.min_gap, "first_violation": rep.first_violation})
    ok = all(r["passed"] for r in rows)
    summary = _envelope(cfg, "flow") | {"comparison": rows, "acceptance": {"ordering_preserved": ok}}
    write_json_atomic(d / "summary.json", summary)
    return (EXIT_OK if ok else EXIT_FALSIFIED), summary


# ---------------------------------------------------------------- translator

def solve_for(b: Built):
    tol = b.cfg.tolerances
    return solve_translator_newton(b.geom, b.A, b.theta, tol=tol.newton_tol, bc_tol=tol.bc_tol,
                                   max_iter=tol.newton_max_iter)


def run_translator_scenario(cfg: ScenarioConfig, out: str | None = None) -> tuple[int, dict]:
    b = build(cfg)
    d = output_dir(cfg, out)
    t0 = time.perf_counter()
    try:
        sol = solve_for(b)
    except NewtonConvergenceError as exc:
        summary = _envelope(cfg, "translator") | {"error": str(exc)}
        if exc.solution is not None:
            summary["solution"] = exc.solution.header()
        write_json_atomic(d / "summary.json", summary)
        return EXIT_SOLVER, summary
    flux = verify_flux_identity(sol, b.geom, b.A, b.theta, cfg.tolerances.flux_K)
    uniq = None
    if cfg.translator.uniqueness_k > 0:
        uniq = uniqueness_probe(b.geom, b.A, b.theta, cfg.translator.uniqueness_k,
                                cfg.translator.uniqueness_amplitude, cfg.seed, reference=sol)
    summary = _envelope(cfg, "translator") | {
        "solution": sol.header(),
        "flux_identity": flux.__dict__,
        "uniqueness": None if uniq is None else uniq.__dict__,
        "speed_class": _speed_class(sol.c, b.A),
        "expected": expected_verdict(sol.I, b.geom, b.A).value,
    }
    oracle = analytic_oracle(b)
    if oracle is not None:
        summary["oracle"] = {"kind": oracle.kind, "c": oracle.c, "c_error": abs(sol.c - oracle.c),
                             "profile_error": float(np.max(np.abs(sol.phi - oracle.profile(b.geom))))}
    write_structured_grid(d / "solution.txt", b.geom, {"phi": sol.phi},
                          header=json.dumps(sol.header(), sort_keys=True))
    write_json_atomic(d / "summary.json", summary)
    write_json_atomic(d / "timings.json", {"wall": time.perf_counter() - t0})
    ok = flux.passed and (uniq is None or uniq.passed)
    return (EXIT_OK if ok else EXIT_FALSIFIED), summary


def _speed_class(c: float, A: float) -> str:
    if abs(c) <= tol_c(A):
        return Verdict.STATIONARY.value
    return (Verdict.UPWARD if c > 0 else Verdict.DOWNWARD).value


# ---------------------------------------------------------------- sweep

def _sweep_task(args):
    cfg_data, parameter, value = args
    cfg = parse_config(cfg_data)
    if parameter == "A":
        b = build(cfg, A=value)
    else:
        b = build(cfg, theta_offset=value)
    u0 = initial_data(cfg, b.geom)
    traj = run_flow(b.geom, u0, _flow_params(b, cfg.horizon_for(b.geom)))
    s = flow_summary(b, traj)
    return {
        "value": value,
        "A": b.A,
        "I": s["I"],
        "verdict": s["classification"]["verdict"],
        "expected": s["classification"]["expected"],
        "c_est": s["c_est"],
        "falsified": s["classification"]["falsified"],
        "stop_reason": s["stop_reason"],
        "sup_grad_max": max(s["checks"]["sup_grad_first_half"], s["checks"]["sup_grad_second_half"]),
    }


_ORDER = {"Downward": 0, "Stationary": 1, "Upward": 2}


def run_sweep(cfg: ScenarioConfig, parameter: str | None = None, values=None, workers: int | None = None,
              out: str | None = None) -> tuple[int, dict]:
    """Flow plus classifier per value; verdicts must follow sign(I) and be monotone in I."""
    if parameter is None or values is None:
        if cfg.sweep is None:
            raise ConfigError("sweep: no parameter/values given and the config has no 'sweep' block")
        parameter = parameter or cfg.sweep.parameter
        values = values if values is not None else cfg.sweep.values
    if parameter not in ("A", "theta-offset"):
        raise ConfigError(f"sweep.parameter: must be 'A' or 'theta-offset', got {parameter!r}")
    d = output_dir(cfg, out)
    tasks = [(cfg.resolved(), parameter, float(v)) for v in values]
    n_workers = workers or workers_default(len(tasks))
    t0 = time.perf_counter()
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            rows = list(ex.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    by_I = sorted(rows, key=lambda r: r["I"])
    monotone = all(_ORDER[a["verdict"]] <= _ORDER[b["verdict"]] for a, b in zip(by_I, by_I[1:]))
    falsified = any(r["falsified"] for r in rows) or not monotone
    with open(d / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "A", "I", "verdict", "expected", "c_est", "stop_reason"])
        for r in rows:
            w.writerow([f"{r['value']:.17g}", f"{r['A']:.17g}", f"{r['I']:.17g}", r["verdict"], r["expected"],
                        f"{r['c_est']:.17g}", r["stop_reason"]])
    summary = _envelope(cfg, "sweep") | {"parameter": parameter, "rows": rows, "monotone": monotone,
                                         "acceptance": {"falsified": falsified}}
    write_json_atomic(d / "summary.json", summary)
    write_json_atomic(d / "timings.json", {"wall": time.perf_counter() - t0, "workers": n_workers})
    return (EXIT_FALSIFIED if falsified else EXIT_OK), summary


# ---------------------------------------------------------------- refine

def observed_order(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def _refine_task(args):
    cfg_data, level = args
    cfg = parse_config(cfg_data)
    b = build(cfg, level=level)
    sol = solve_for(b)
    flux = verify_flux_identity(sol, b.geom, b.A, b.theta, cfg.tolerances.flux_K)
    oracle = analytic_oracle(b)
    row = {"level": level, "h": b.geom.spacing, "c": sol.c, "flux_mismatch": flux.mismatch}
    if oracle is not None:
        row["c_error"] = abs(sol.c - oracle.c)
        row["profile_error"] = float(np.max(np.abs(sol.phi - oracle.profile(b.geom))))
    return row


def run_refine(cfg: ScenarioConfig, levels: int | None = None, workers: int | None = None,
               out: str | None = None) -> tuple[int, dict]:
    """Translator solves at ``2^(L-1) h, ..., 2h, h`` with ``h`` the configured grid.

    Fits observed orders for the speed, the flux mismatch and (with an
    analytic oracle) the profile; an order below ``min_order`` fails.
    """
    levels = levels or (cfg.refine.levels if cfg.refine else 3)
    if levels < 2:
        raise ConfigError("refine.levels: need at least 2 levels")
    d = output_dir(cfg, out)
    tasks = [(cfg.resolved(), k - levels + 1) for k in range(levels)]
    build(cfg, level=1 - levels)  # reject grids that cannot be coarsened before forking
    n_workers = workers or workers_default(len(tasks))
    t0 = time.perf_counter()
    try:
        if n_workers > 1:
            with ProcessPoolExecutor(max_workers=n_workers) as ex:
                rows = list(ex.map(_refine_task, tasks))
        else:
            rows = [_refine_task(t) for t in tasks]
    except NewtonConvergenceError as exc:
        summary = _envelope(cfg, "refine") | {"error": str(exc)}
        write_json_atomic(d / "summary.json", summary)
        return EXIT_SOLVER, summary
    h = [r["h"] for r in rows]
    orders, exact = {}, {}
    for key in ("c_error", "flux_mismatch", "profile_error"):
        if key not in rows[0]:
            continue
        e = np.array([r[key] for r in rows])
        if np.all(e <= 1e-12):
            exact[key] = True
            continue
        exact[key] = False
        orders[key] = observed_order(h, np.maximum(e, 1e-300))
    smooth_oracle = analytic_oracle(build(cfg)) is not None
    low = {k: v for k, v in orders.items() if v < cfg.tolerances.min_order}
    failed = smooth_oracle and bool(low)
    with open(d / "orders.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([f"{r[k]:.17g}" for k in keys])
    summary = _envelope(cfg, "refine") | {"levels": rows, "orders": orders, "exact": exact,
                                          "acceptance": {"order_failure": failed, "low_orders": low}}
    write_json_atomic(d / "summary.json", summary)
    write_json_atomic(d / "timings.json", {"wall": time.perf_counter() - t0, "workers": n_workers})
    return (EXIT_FALSIFIED if failed else EXIT_OK), summary


# ---------------------------------------------------------------- conditions

def run_check_conditions(cfg: ScenarioConfig, out: str | None = None) -> tuple[int, dict]:
    b = build(cfg)
    d = output_dir(cfg, out)
    reports = [r.as_dict() for r in _conditions(b)]
    summary = _envelope(cfg, "check-conditions") | {
        "I": compute_I(b.geom, b.A, b.theta),
        "conditions": reports,
        "any_passed": any(r["passed"] for r in reports),
    }
    write_json_atomic(d / "conditions.json", summary)
    return EXIT_OK, summary
