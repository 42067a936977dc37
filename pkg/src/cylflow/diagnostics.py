"""Scalar monitors: the criterion I, the energy and its dissipation, the
auxiliary fields of the non-convex gradient estimate, hypothesis checks for
the uniform gradient bound, and the trichotomy classifier."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .angles import ContactAngleField
from .fields import differentiate, enforce_contact_bc
from .geometry import DomainGeometry, boundary_quadrature, quadrature

TAU_II = 0.1
TAU_III = 3.0


class DiagnosticsError(RuntimeError):
    pass


@dataclass
class DiagnosticsRecord:
    t: float
    E: float
    I: float
    sup_grad: float
    sup_ut: float
    max_w: float
    min_w: float
    max_phi: float
    alpha0: float
    c_est: float
    bc_residual: float
    u_anchor: float = 0.0
    dissipation: float = 0.0
    sandwich_ok: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- I and E

def compute_I(geom: DomainGeometry, A: float, theta: ContactAngleField) -> float:
    """``A |Omega| + integral of cos(theta) over the boundary``."""
    return float(A) * quadrature(geom, np.ones(geom.shape)) + boundary_quadrature(geom, theta.cos_boundary)


def energy(u: np.ndarray, A: float, theta: ContactAngleField, geom: DomainGeometry,
           ug: np.ndarray | None = None) -> float:
    """``int (v - A u) - int_{boundary} u cos(theta)``.

    With ``gamma`` the inner normal this sign makes ``dE/dt = -int u_t^2 / v``
    and ``E[u + h] = E[u] - h I``.  ``ug`` may carry an already closed ghost
    layer; otherwise the contact condition is enforced first.
    """
    u = np.asarray(u, dtype=float)
    if ug is None:
        ug = enforce_contact_bc(geom, u, theta)
    return _energy(geom, u, differentiate(geom, ug).v, A, theta)


def _energy(geom, u, v, A, theta) -> float:
    wall = boundary_quadrature(geom, u[geom.boundary_index] * theta.cos_boundary)
    return quadrature(geom, v - A * u) - wall


def dissipation_rate(geom: DomainGeometry, ut: np.ndarray, v: np.ndarray) -> float:
    """``int u_t^2 / v``; the energy decays at this rate."""
    return quadrature(geom, np.asarray(ut) ** 2 / v)


@dataclass
class DissipationReport:
    passed: bool
    monotone: bool
    worst_increase: float
    worst_relative_mismatch: float
    intervals_checked: int
    intervals_skipped: int
    details: list = field(default_factory=list)


def energy_dissipation_check(records, rel_tol: float = 0.05, floor: float = 0.0,
                             step_increase_tol: float = 1e-8) -> DissipationReport:
    """Compare ``dE/dt`` with ``-int u_t^2/v`` between consecutive records.

    ``records`` need ``t``, ``E`` and ``dissipation``.  The right-hand side of
    each interval is the trapezoid average of the recorded rates.  Intervals
    where both sides fall below ``floor`` (the discretisation noise level)
    only take part in the monotonicity test.
    """
    t = np.array([r.t for r in records])
    E = np.array([r.E for r in records])
    D = np.array([r.dissipation for r in records])
    if len(t) < 2:
        raise DiagnosticsError("dissipation check needs at least two records")
    worst_inc, worst_rel = 0.0, 0.0
    monotone = True
    checked = skipped = 0
    details = []
    for k in range(len(t) - 1):
        dt = t[k + 1] - t[k]
        if dt <= 0:
            continue
        inc = E[k + 1] - E[k]
        allowed = step_increase_tol * (1 + abs(E[k]))
        if inc > allowed:
            monotone = False
        worst_inc = max(worst_inc, inc / (1 + abs(E[k])))
        lhs = inc / dt
        rhs = -0.5 * (D[k] + D[k + 1])
        if max(abs(lhs), abs(rhs)) <= floor:
            skipped += 1
            continue
        rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        worst_rel = max(worst_rel, rel)
        checked += 1
        details.append((float(t[k]), float(lhs), float(rhs), float(rel)))
    passed = monotone and worst_rel <= rel_tol
    return DissipationReport(passed, monotone, float(worst_inc), float(worst_rel), checked, skipped, details)


# ---------------------------------------------------------------- w, phi, alpha0

def distance_derivatives(geom: DomainGeometry):
    """``Dd`` clamped to ``|Dd| <= 1`` and the collar sup of ``|D^2 d|``.

    The ghost layer of ``d`` is the odd reflection across the boundary, which
    is exact for a distance function near a smooth boundary.  The Hessian is
    measured in the spectral norm over nodes with ``d <= rho_min / 4``.
    """
    d = np.asarray(geom.distance)
    dg = geom.ghosted(d)
    if geom.dim == 1:
        dg[0], dg[-1] = -dg[2], -dg[-3]
    else:
        dg[-1] = -dg[-3]
    ds = differentiate(geom, dg)
    grad = ds.grad.copy()
    norm = np.linalg.norm(grad, axis=-1)
    big = norm > 1.0
    grad[big] /= norm[big][:, None]
    collar = d <= geom.rho_min / 4 + 1e-12
    if geom.dim == 2:
        collar[0] = False  # the pole carries no collar
    hess = ds.hess[collar]
    d2 = float(np.max(np.abs(np.linalg.eigvalsh(hess)))) if hess.size else 0.0
    return grad, d2


def alpha0(n: int, sin_min: float, theta_c1: float, kappa0: float, d2_collar: float) -> float:
    """``2 (1 + (2n-1) |theta|_C1 / s^3 + kappa0 / s^2 + |D^2 d| / s^2)``, ``s = inf sin(theta)``."""
    s = float(sin_min)
    return 2.0 * (1.0 + (2 * n - 1) * theta_c1 / s**3 + kappa0 / s**2 + d2_collar / s**2)


def alpha0_for(geom: DomainGeometry, theta: ContactAngleField, kappa0: float | None = None,
               d2_collar: float | None = None) -> float:
    if kappa0 is None:
        kappa0 = float(np.max(np.abs(geom.kappa)))
    if d2_collar is None:
        d2_collar = distance_derivatives(geom)[1]
    return alpha0(
        geom.dim, float(np.min(np.sin(theta.values))), theta.norms["theta_c1_boundary"], kappa0, d2_collar
    )


@dataclass
class AuxFields:
    w: np.ndarray
    phi: np.ndarray
    alpha0: float
    v: np.ndarray
    sandwich_ok: bool
    sandwich_margin: float


def aux_quantities(u_or_ug: np.ndarray, geom: DomainGeometry, theta: ContactAngleField,
                   a0: float | None = None, dd=None) -> AuxFields:
    """``w = v + (Du.Dd) cos(theta)``, ``phi = log w + alpha0 d`` and the sandwich test.

    Accepts a grid function (ghosts are then closed here) or an already
    ghosted field.  Raises when ``w <= 0`` anywhere.
    """
    arr = np.asarray(u_or_ug, dtype=float)
    ug = arr if arr.shape == geom.ghost_shape else enforce_contact_bc(geom, arr, theta)
    ds = differentiate(geom, ug)
    grad_d = dd if dd is not None else distance_derivatives(geom)[0]
    w = ds.v + np.einsum("...i,...i->...", ds.grad, grad_d) * np.cos(theta.values)
    if not np.all(w > 0):
        raise DiagnosticsError(f"auxiliary w is not positive (min {w.min():.3e})")
    if a0 is None:
        a0 = alpha0_for(geom, theta)
    phi = np.log(w) + a0 * np.asarray(geom.distance)
    S0 = theta.S0
    tol = 1e-12 * ds.v
    lower = w - (1 - S0) * ds.v
    upper = 2 * ds.v - w
    margin = float(min(lower.min(), upper.min()))
    ok = bool(np.all(lower >= -tol) and np.all(upper >= -tol))
    return AuxFields(w=w, phi=phi, alpha0=float(a0), v=ds.v, sandwich_ok=ok, sandwich_margin=margin)


# ---------------------------------------------------------------- hypotheses

@dataclass
class ConditionReport:
    condition: str
    margin: float
    passed: bool
    inputs: dict

    def as_dict(self) -> dict:
        return asdict(self)


def check_condition_i(geom: DomainGeometry, A: float, theta: ContactAngleField) -> ConditionReport:
    """Curvature dominance: margin ``kappa_min - |A| - max|D theta|``."""
    if geom.dim != 2:
        raise DiagnosticsError("condition (i) is a curvature condition and needs a 2D cross-section")
    kmin = float(np.min(geom.kappa))
    dth = theta.norms["max_dtheta"]
    margin = kmin - abs(A) - dth
    return ConditionReport("i", margin, margin > 0,
                           {"kappa_min": kmin, "abs_A": abs(A), "max_dtheta": dth})


def check_condition_ii(theta: ContactAngleField, tau_ii: float = TAU_II) -> ConditionReport:
    c2 = theta.norms["cos_c2"]
    margin = tau_ii - c2
    return ConditionReport("ii", margin, margin > 0,
                           {"cos_c2": c2, "tau_ii": tau_ii, "convention": theta.norms["convention"]})


def check_condition_iii(A: float, tau_iii: float = TAU_III) -> ConditionReport:
    margin = abs(A) - tau_iii
    return ConditionReport("iii", margin, margin > 0, {"abs_A": abs(A), "tau_iii": tau_iii})


def check_conditions(geom: DomainGeometry, A: float, theta: ContactAngleField,
                     tau_ii: float = TAU_II, tau_iii: float = TAU_III) -> list[ConditionReport]:
    """All three hypotheses; condition (i) is skipped on an interval."""
    out = []
    if geom.dim == 2:
        out.append(check_condition_i(geom, A, theta))
    out.append(check_condition_ii(theta, tau_ii))
    out.append(check_condition_iii(A, tau_iii))
    return out


# ---------------------------------------------------------------- trichotomy

class Verdict(str, Enum):
    UPWARD = "Upward"
    STATIONARY = "Stationary"
    DOWNWARD = "Downward"


def tol_I(geom: DomainGeometry, A: float) -> float:
    return 1e-6 * (abs(A) * geom.area + geom.perimeter)


def tol_c(A: float) -> float:
    return 1e-4 * (1 + abs(A))


@dataclass
class Classification:
    verdict: Verdict
    expected: Verdict
    I: float
    c_est: float
    sup_ut_end: float
    falsified: bool
    note: str = ""

    def as_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        d["expected"] = self.expected.value
        return d


def expected_verdict(I: float, geom: DomainGeometry, A: float) -> Verdict:
    if abs(I) <= tol_I(geom, A):
        return Verdict.STATIONARY
    return Verdict.UPWARD if I > 0 else Verdict.DOWNWARD


def classify_trichotomy(c_est: float, sup_ut_end: float, I: float, geom: DomainGeometry,
                        A: float) -> Classification:
    """Verdict from the flow's speed estimate, cross-checked against sign(I).

    Stationary needs both ``|c_est|`` and the final ``sup|u_t|`` within
    ``tol_c``.  A verdict contradicting the sign of ``I`` is a falsification;
    so is a moving verdict when ``|I| <= tol_I``.
    """
    tc = tol_c(A)
    if abs(c_est) <= tc and sup_ut_end <= tc:
        verdict = Verdict.STATIONARY
    else:
        verdict = Verdict.UPWARD if c_est > 0 else Verdict.DOWNWARD
    expected = expected_verdict(I, geom, A)
    note = ""
    falsified = verdict != expected
    if falsified and expected != Verdict.STATIONARY and verdict == Verdict.STATIONARY:
        # |I| below the speed resolution: the run cannot separate it from zero
        if abs(I) / geom.area < tc:
            falsified = False
            note = "indeterminate: |I|/|Omega| below tol_c"
    return Classification(verdict, expected, float(I), float(c_est), float(sup_ut_end), falsified, note)


# ---------------------------------------------------------------- records

class RecordContext:
    """Per-scenario constants reused by every record: I, alpha0 and Dd."""

    def __init__(self, geom: DomainGeometry, A: float, theta: ContactAngleField):
        self.geom, self.A, self.theta = geom, float(A), theta
        self.I = compute_I(geom, A, theta)
        self.grad_d, self.d2_collar = distance_derivatives(geom)
        self.alpha0 = alpha0_for(geom, theta, d2_collar=self.d2_collar)

    def record(self, t: float, u: np.ndarray, ug: np.ndarray, ut: np.ndarray,
               bc_res: float | None = None) -> DiagnosticsRecord:
        from .fields import bc_residual

        g = self.geom
        ds = differentiate(g, ug)
        E = _energy(g, u, ds.v, self.A, self.theta)
        aux = aux_quantities(ug, g, self.theta, a0=self.alpha0, dd=self.grad_d)
        if bc_res is None:
            bc_res = float(np.max(np.abs(bc_residual(g, ug, self.theta))))
        return DiagnosticsRecord(
            t=float(t),
            E=float(E),
            I=self.I,
            sup_grad=float(np.max(np.linalg.norm(ds.grad, axis=-1))),
            sup_ut=float(np.max(np.abs(ut))),
            max_w=float(aux.w.max()),
            min_w=float(aux.w.min()),
            max_phi=float(aux.phi.max()),
            alpha0=self.alpha0,
            c_est=quadrature(g, ut) / g.area,
            bc_residual=float(bc_res),
            u_anchor=float(u[g.anchor]),
            dissipation=dissipation_rate(g, ut, ds.v),
            sandwich_ok=aux.sandwich_ok,
        )
