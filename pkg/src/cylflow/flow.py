"""Time integration of the contact-angle flow and comparison experiments.

Two schemes are available.  ``explicit`` is forward Euler with the ghost
layer closed before every evaluation; long runs go through the compiled
kernel in chunks between records.  ``semi-implicit`` freezes ``a^ij(Du)``,
``v`` and the boundary data at the current state and solves one sparse
linear system per step.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .angles import ContactAngleField
from .diagnostics import DiagnosticsRecord, RecordContext, energy
from .fields import (
    bc_residual,
    differentiate,
    enforce_contact_bc,
    frozen_operator,
    interior_operator,
)
from .geometry import DomainGeometry, quadrature

SCHEMES = ("explicit", "semi-implicit")


class FlowError(RuntimeError):
    """Non-finite update; carries the last finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass
class FlowParams:
    A: float
    theta: ContactAngleField
    scheme: str = "explicit"
    cfl: float = 0.5
    dt: float | None = None
    linear_solver: str = "direct"
    linear_tol: float = 1e-10
    max_time: float = 1.0
    max_steps: int | None = None
    record_every: int = 100
    eps_stat: float = 1e-7
    eps_tw: float = 1e-6
    stop_rules: bool = True
    min_records: int = 5
    compat_tol: float = 0.1
    track_step_energy: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        for name in ("linear_tol", "eps_stat", "eps_tw", "max_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.linear_solver not in ("direct", "bicgstab"):
            raise ValueError("linear_solver must be 'direct' or 'bicgstab'")


@dataclass
class FlowState:
    u: np.ndarray
    t: float = 0.0
    ut: np.ndarray | None = None
    steps: int = 0


@dataclass
class StepReport:
    dt: float
    max_update: float
    bc_residual: float
    wall: float


# ---------------------------------------------------------------- time step size

def stable_dt(geom: DomainGeometry, params: FlowParams) -> float:
    """Forward-Euler bound ``cfl * min 1 / (2 (G_xx/dxi^2 + G_ee/deta^2 + sqrt(G_xx G_ee)/(dxi deta)))``.

    ``G = J^-1 J^-T`` bounds the mapped second-order coefficients because
    ``a^ij <= delta_ij``.  On an interval this is ``cfl h^2 / 2``.
    """
    if geom.dim == 1:
        return params.cfl * geom.h**2 / 2
    m = geom.metric[:, 1:]
    gxx = m[0] ** 2 + m[1] ** 2
    gee = m[2] ** 2 + m[3] ** 2
    rate = 2 * (gxx / geom.dxi**2 + gee / geom.deta**2 + np.sqrt(gxx * gee) / (geom.dxi * geom.deta))
    pw = geom.pole_weights
    pole_rate = float(np.sum(pw[2] + pw[4]))
    return params.cfl / max(float(rate.max()), pole_rate)


def default_dt(geom: DomainGeometry, params: FlowParams) -> float:
    if params.dt is not None:
        return float(params.dt)
    if params.scheme == "explicit":
        return stable_dt(geom, params)
    return params.cfl * geom.normal_spacing


# ---------------------------------------------------------------- single steps

def _explicit_update(geom, u, params, dt):
    ug = enforce_contact_bc(geom, u, params.theta)
    F = interior_operator(geom, ug, params.A)
    return u + dt * F


def _semi_implicit_update(geom, u, params, dt):
    ug = enforce_contact_bc(geom, u, params.theta)
    L, l0 = frozen_operator(geom, ug, params.theta)
    v = geom.unique(differentiate(geom, ug).v)
    M = (sp.identity(geom.n_nodes, format="csr") - dt * L).tocsc()
    rhs = geom.unique(u) + dt * (params.A * v + l0)
    if params.linear_solver == "direct":
        w = spla.spsolve(M, rhs)
    else:
        diag = M.diagonal()
        pre = spla.LinearOperator(M.shape, matvec=lambda x: x / diag)
        w, info = spla.bicgstab(M, rhs, x0=geom.unique(u), rtol=params.linear_tol, atol=0.0, M=pre)
        if info != 0:
            w = spla.spsolve(M, rhs)
    return geom.expand(w)


def step(geom: DomainGeometry, state: FlowState, params: FlowParams,
         dt: float | None = None) -> tuple[FlowState, StepReport]:
    """Advance one step; ``u_t`` is stored as the update quotient ``(u' - u)/dt``."""
    t0 = time.perf_counter()
    dt = default_dt(geom, params) if dt is None else float(dt)
    if params.scheme == "explicit":
        new = _explicit_update(geom, state.u, params, dt)
    else:
        new = _semi_implicit_update(geom, state.u, params, dt)
    if not np.all(np.isfinite(new)):
        raise FlowError(f"non-finite update at t={state.t:.6g} (dt={dt:.3e})", state)
    ut = (new - state.u) / dt
    ug = enforce_contact_bc(geom, new, params.theta)
    res = float(np.max(np.abs(bc_residual(geom, ug, params.theta))))
    report = StepReport(dt, float(np.max(np.abs(new - state.u))), res, time.perf_counter() - t0)
    return FlowState(new, state.t + dt, ut, state.steps + 1), report


def _explicit_chunk(geom, u, params, dt, nsteps):
    """``nsteps`` forward-Euler steps in the kernel; returns the last ``F``."""
    u = np.ascontiguousarray(u, dtype=float).copy()
    ut = np.empty_like(u)
    if geom.dim == 1:
        sl, sr = params.theta.slopes_1d
        kernels.explicit_1d(u, geom.h, float(params.A), sl, sr, dt, int(nsteps), ut)
    else:
        kernels.explicit_2d(u, geom.metric, params.theta.bnd, geom.pole_weights, geom.dxi,
                            geom.deta, float(params.A), dt, int(nsteps), ut)
    return u, ut


# ---------------------------------------------------------------- runs

@dataclass
class Trajectory:
    records: list[DiagnosticsRecord]
    stop_reason: str
    dt: float
    steps: int
    final: FlowState
    I: float
    fields: list = field(default_factory=list)
    ut_fields: list = field(default_factory=list)
    compat_residual: float = 0.0
    wall: float = 0.0
    max_step_increase: float | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def anchor_values(self) -> np.ndarray:
        return np.array([r.u_anchor for r in self.records])

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def compatibility_residual(geom: DomainGeometry, u0: np.ndarray, theta: ContactAngleField) -> float:
    """Contact-condition residual of ``u0`` with quadratically extrapolated ghosts."""
    u0 = np.asarray(u0, dtype=float)
    ug = geom.ghosted(u0)
    if geom.dim == 1:
        ug[0] = 3 * ug[1] - 3 * ug[2] + ug[3]
        ug[-1] = 3 * ug[-2] - 3 * ug[-3] + ug[-4]
    else:
        nr = geom.nr
        ug[nr + 1] = 3 * ug[nr] - 3 * ug[nr - 1] + ug[nr - 2]
    return float(np.max(np.abs(bc_residual(geom, ug, theta))))


def run_flow(geom: DomainGeometry, u0: np.ndarray, params: FlowParams, horizon: float | None = None,
             recorder=None, keep_fields: bool = False) -> Trajectory:
    """Integrate from ``u0`` until a stopping rule fires or the horizon is reached.

    Rules, checked at every record once ``min_records`` exist:
    stationary when ``sup|u_t| < eps_stat (1 + |A|)``; translating when
    ``sup|u_t - mean u_t| < eps_tw (1 + |A|)`` and the mean itself exceeds
    that level.  ``recorder`` (optional) is called with each record.

    With ``track_step_energy`` every step runs in Python and the largest
    relative energy increase ``(E_{k+1} - E_k) / (1 + |E_k|)`` over single
    steps is kept in ``max_step_increase``.
    """
    wall0 = time.perf_counter()
    horizon = params.max_time if horizon is None else float(horizon)
    theta = params.theta
    u = np.array(u0, dtype=float)
    if u.shape != geom.shape:
        raise ValueError(f"initial data shape {u.shape} does not match grid {geom.shape}")
    compat = compatibility_residual(geom, u, theta)
    if compat > params.compat_tol:
        warnings.warn(f"initial data violates the contact condition (residual {compat:.3e}); "
                      "running with the ghost-closed projection", RuntimeWarning, stacklevel=2)
    ctx = RecordContext(geom, params.A, theta)
    dt = default_dt(geom, params)
    scale = 1 + abs(params.A)
    records, fields_, ut_fields = [], [], []
    t, n = 0.0, 0
    stop = "horizon"
    max_steps = params.max_steps if params.max_steps is not None else np.iinfo(np.int64).max
    state = FlowState(u, 0.0)
    track = params.track_step_energy
    worst_inc = -np.inf if track else None
    while True:
        # record the state with its forward update quotient
        state = FlowState(u, t, None, n)
        nxt, rep = step(geom, state, params, dt)
        ug = enforce_contact_bc(geom, u, theta)
        rec = ctx.record(t, u, ug, nxt.ut)
        records.append(rec)
        if keep_fields:
            fields_.append(u.copy())
            ut_fields.append(nxt.ut.copy())
        if recorder is not None:
            recorder(rec)
        if params.stop_rules and len(records) >= params.min_records:
            ut = nxt.ut
            mean = quadrature(geom, ut) / geom.area
            if np.max(np.abs(ut)) < params.eps_stat * scale:
                stop = "stationary"
                break
            if np.max(np.abs(ut - mean)) < params.eps_tw * scale and abs(mean) > params.eps_tw * scale:
                stop = "translator"
                break
        if t >= horizon * (1 - 1e-12):
            break
        if n >= max_steps:
            stop = "max_steps"
            break
        # advance to the next record
        k = int(min(params.record_every, max_steps - n, max(1, np.ceil((horizon - t) / dt - 1e-9))))
        if track:
            e_prev, s = rec.E, nxt
            for j in range(k):
                if j > 0:
                    s, _ = step(geom, s, params, dt)
                e = energy(s.u, params.A, theta, geom)
                worst_inc = max(worst_inc, (e - e_prev) / (1 + abs(e_prev)))
                e_prev = e
            u, t, n = s.u, s.t, n + k
            continue
        u, t, n = nxt.u, nxt.t, n + 1
        if k > 1:
            if params.scheme == "explicit":
                u, _ = _explicit_chunk(geom, u, params, dt, k - 1)
                if not np.all(np.isfinite(u)):
                    raise FlowError(f"non-finite state before t={t + (k - 1) * dt:.6g}", state)
                t += (k - 1) * dt
                n += k - 1
            else:
                s = FlowState(u, t, None, n)
                for _ in range(k - 1):
                    s, _ = step(geom, s, params, dt)
                u, t, n = s.u, s.t, s.steps
    final = FlowState(u, t, nxt.ut, n)
    return Trajectory(records, stop, dt, n, final, ctx.I, fields_, ut_fields, compat,
                      time.perf_counter() - wall0, worst_inc)


# ---------------------------------------------------------------- comparison

@dataclass
class ComparisonReport:
    passed: bool
    worst_violation: float
    first_violation: tuple | None
    min_gap: float
    records: int


def comparison_test(geom: DomainGeometry, u0: np.ndarray, v0: np.ndarray, params: FlowParams,
                    horizon: float, rel_tol: float = 1e-8) -> ComparisonReport:
    """Run both flows with identical steps; check ``u <= v + rel_tol (1 + max|v|)`` at every record."""
    u0, v0 = np.asarray(u0, float), np.asarray(v0, float)
    if np.any(u0 > v0):
        raise ValueError("comparison test needs u0 <= v0 pointwise")
    p = _no_stop(params)
    tu = run_flow(geom, u0, p, horizon, keep_fields=True)
    tv = run_flow(geom, v0, p, horizon, keep_fields=True)
    worst, first, min_gap = -np.inf, None, np.inf
    for ru, a, b in zip(tu.records, tu.fields, tv.fields):
        gap = b - a
        allow = rel_tol * (1 + np.max(np.abs(b)))
        viol = -gap - allow
        worst = max(worst, float(viol.max()))
        min_gap = min(min_gap, float(gap.min()))
        if first is None and viol.max() > 0:
            idx = np.unravel_index(int(np.argmax(viol)), viol.shape)
            first = (ru.t, tuple(int(i) for i in idx))
    return ComparisonReport(first is None, worst, first, min_gap, len(tu.records))


@dataclass
class WeakIncreaseReport:
    passed: bool
    T: float | None
    worst: float
    pairs: int


def weak_increase_check(traj: Trajectory, delta: float = 1.0, tol: float = 1e-6) -> WeakIncreaseReport:
    """Find the first recorded ``T`` with ``min(u(T) - u(0)) >= delta`` and check
    ``u(t + T) >= u(t) + delta - tol`` for every recorded pair."""
    if not traj.fields:
        raise ValueError("weak-increase check needs stored fields (keep_fields=True)")
    base = traj.fields[0]
    kT = next((k for k, f in enumerate(traj.fields) if np.min(f - base) >= delta), None)
    if kT is None:
        return WeakIncreaseReport(False, None, -np.inf, 0)
    T = traj.records[kT].t
    times = traj.times
    worst = np.inf
    pairs = 0
    for k in range(len(traj.fields) - kT):
        if abs(times[k + kT] - times[k] - T) > 0.5 * traj.dt:
            continue
        worst = min(worst, float(np.min(traj.fields[k + kT] - traj.fields[k] - delta)))
        pairs += 1
    return WeakIncreaseReport(pairs > 0 and worst >= -tol, T, worst, pairs)


def _no_stop(params: FlowParams) -> FlowParams:
    from dataclasses import replace

    return replace(params, stop_rules=False)
