"""Translating and stationary profiles: ``u = Phi(x) + c t``.

The profile solves ``c = a^ij(DPhi) D_ij Phi + A v`` with the contact-angle
condition on the boundary and ``Phi(anchor) = 0``.  Stationary solutions are
the ``c = 0`` case and use the same solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .angles import ContactAngleField
from .diagnostics import compute_I, tol_c
from .fields import bc_residual, differentiate, fill_ghosts, interior_operator
from .geometry import DomainGeometry, quadrature


class NewtonConvergenceError(RuntimeError):
    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass
class TranslatorSolution:
    phi: np.ndarray
    c: float
    ghosts: np.ndarray
    interior_residual: float
    bc_residual: float
    iterations: int
    converged: bool
    anchor: tuple
    I: float
    history: list = field(default_factory=list)
    geom: DomainGeometry | None = field(default=None, repr=False)

    @property
    def ghosted(self) -> np.ndarray:
        return self.geom.ghosted(self.phi, self.ghosts)

    def header(self) -> dict:
        return {
            "c": self.c,
            "interior_residual": self.interior_residual,
            "bc_residual": self.bc_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "anchor": list(self.anchor),
            "I": self.I,
        }


# ---------------------------------------------------------------- residual

class _System:
    """Augmented system in ``z = [Phi at distinct nodes, ghosts, c]``."""

    def __init__(self, geom: DomainGeometry, A: float, theta: ContactAngleField, anchor: int):
        self.geom, self.A, self.theta, self.anchor = geom, float(A), theta, anchor
        self.nn, self.ng = geom.n_nodes, geom.n_ghosts
        self.size = self.nn + self.ng + 1

    def split(self, z):
        g = self.geom
        u = g.expand(z[: self.nn])
        return g.ghosted(u, z[self.nn : self.nn + self.ng]), float(z[-1])

    def residual(self, z):
        ug, c = self.split(z)
        F = interior_operator(self.geom, ug, self.A)
        r_pde = c - self.geom.unique(F)
        r_bc = bc_residual(self.geom, ug, self.theta)
        return np.concatenate([r_pde, r_bc, [z[self.anchor]]])

    def pattern(self) -> sp.csr_matrix:
        g = self.geom
        nn, ng = self.nn, self.ng
        rows, cols = [], []

        def add(r, c):
            r, c = np.broadcast_arrays(np.asarray(r), np.asarray(c))
            rows.append(r.ravel())
            cols.append(c.ravel())

        if g.dim == 1:
            n = nn
            i = np.arange(n)
            for d in (-1, 0, 1):
                j = i + d
                j = np.where(j < 0, nn, np.where(j >= n, nn + 1, j))
                add(i, j)
            add(nn, [1, nn])
            add(nn + 1, [n - 2, nn + 1])
        else:
            nr, nt = g.nr, g.ntheta

            def col(ii, jj):
                jj = jj % nt
                return np.where(ii == 0, 0, np.where(ii == nr + 1, nn + jj, 1 + (ii - 1) * nt + jj))

            I = np.repeat(np.arange(1, nr + 1), nt)
            J = np.tile(np.arange(nt), nr)
            row = col(I, J)
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    add(row, col(I + di, J + dj))
            add(0, np.arange(0, nt + 1))
            j = np.arange(nt)
            for cc in (col(np.full(nt, nr), j - 1), col(np.full(nt, nr), j), col(np.full(nt, nr), j + 1),
                       col(np.full(nt, nr - 1), j), nn + j):
                add(nn + j, cc)
        add(np.arange(nn), nn + ng)
        add(nn + ng, self.anchor)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        P = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(self.size, self.size))
        P.data[:] = 1.0
        return P


def greedy_coloring(pattern: sp.csr_matrix) -> np.ndarray:
    """Column colouring such that no two columns of one colour share a row."""
    P = pattern.tocsc()
    Pr = pattern.tocsr()
    n = P.shape[1]
    color = -np.ones(n, dtype=int)
    for j in range(n):
        rows = P.indices[P.indptr[j] : P.indptr[j + 1]]
        used = set()
        for r in rows:
            used.update(color[Pr.indices[Pr.indptr[r] : Pr.indptr[r + 1]]].tolist())
        k = 0
        while k in used:
            k += 1
        color[j] = k
    return color


def fd_jacobian(system: _System, z, r0, pattern, colors) -> sp.csc_matrix:
    """Forward-difference Jacobian with steps ``1e-7 (1 + |z|)``, one residual per colour."""
    P = pattern.tocsc()
    n = z.size
    steps = 1e-7 * (1 + np.abs(z))
    data = np.empty(P.nnz)
    for k in range(colors.max() + 1):
        cols = np.nonzero(colors == k)[0]
        zp = z.copy()
        zp[cols] += steps[cols]
        dr = system.residual(zp) - r0
        for j in cols:
            lo, hi = P.indptr[j], P.indptr[j + 1]
            data[lo:hi] = dr[P.indices[lo:hi]] / steps[j]
    return sp.csc_matrix((data, P.indices.copy(), P.indptr.copy()), shape=(n, n))


def _norms(system: _System, r):
    nn, ng = system.nn, system.ng
    return float(np.max(np.abs(r[:nn]))), float(np.max(np.abs(r[nn : nn + ng])))


def solve_translator_newton(geom: DomainGeometry, A: float, theta: ContactAngleField,
                            init: np.ndarray | None = None, c_init: float | None = None,
                            anchor: tuple | None = None, tol: float | None = None,
                            bc_tol: float = 1e-10, max_iter: int = 50,
                            raise_on_failure: bool = True) -> TranslatorSolution:
    """Damped Newton on the augmented (profile, ghosts, speed) system.

    Starts from ``Phi = 0`` and ``c = I/|Omega|`` unless told otherwise.  The
    Jacobian comes from coloured forward differences on the stencil
    sparsity and is factorised by sparse LU.  The step is halved until the
    residual norm drops.  Interior residuals are accepted at
    ``tol = 1e-9 (1 + |A|)`` or at the rounding floor of the stencil,
    whichever is larger.
    """
    anchor = tuple(anchor) if anchor is not None else geom.anchor
    a_flat = geom.flat_index(*anchor) if geom.dim == 2 else anchor[0]
    system = _System(geom, A, theta, a_flat)
    I = compute_I(geom, A, theta)
    u0 = np.zeros(geom.shape) if init is None else np.array(init, dtype=float)
    u0 = u0 - u0[anchor]
    ug = fill_ghosts(geom, geom.ghosted(u0), theta)
    c0 = I / geom.area if c_init is None else float(c_init)
    z = np.concatenate([geom.unique(u0), geom.ghost_values(ug), [c0]])

    pattern = system.pattern()
    colors = greedy_coloring(pattern)
    tol = 1e-9 * (1 + abs(A)) if tol is None else tol
    inv_h2 = _inverse_h2(geom)

    r = system.residual(z)
    history = []
    it = 0
    converged = False
    while True:
        ri, rb = _norms(system, r)
        scale = float(np.max(np.abs(z[: system.nn]))) + 1.0
        floor = 64 * np.finfo(float).eps * scale * inv_h2
        history.append((it, ri, rb, float(z[-1])))
        if ri <= max(tol, floor) and rb <= max(bc_tol, floor * geom.normal_spacing) and abs(r[-1]) == 0.0:
            converged = True
            break
        if it >= max_iter:
            break
        J = fd_jacobian(system, z, r, pattern, colors)
        try:
            dz = spla.splu(J).solve(-r)
        except RuntimeError:
            break
        nrm = np.linalg.norm(r)
        lam = 1.0
        while True:
            z_try = z + lam * dz
            r_try = system.residual(z_try)
            if np.all(np.isfinite(r_try)) and np.linalg.norm(r_try) < nrm:
                break
            lam *= 0.5
            if lam < 1e-6:
                break
        if lam < 1e-6:
            break
        z, r = z_try, r_try
        # the anchor row is linear; pin it exactly
        z[a_flat] = 0.0
        r = system.residual(z)
        it += 1

    ug, c = system.split(z)
    ri, rb = _norms(system, r)
    sol = TranslatorSolution(
        phi=geom.interior_of(ug).copy(), c=c, ghosts=geom.ghost_values(ug), interior_residual=ri,
        bc_residual=rb, iterations=it, converged=converged, anchor=anchor, I=I, history=history,
        geom=geom,
    )
    if not converged and raise_on_failure:
        raise NewtonConvergenceError(
            f"Newton did not converge after {it} iterations "
            f"(interior residual {ri:.3e}, boundary residual {rb:.3e})", sol)
    return sol


def _inverse_h2(geom: DomainGeometry) -> float:
    """Largest stencil weight, a proxy for how rounding in Phi shows up in F."""
    if geom.dim == 1:
        return 1.0 / geom.h**2
    ring1 = geom.dxi * geom.rho_min * geom.deta
    return 1.0 / ring1**2


# ---------------------------------------------------------------- checks

@dataclass
class FluxReport:
    lhs: float
    rhs: float
    mismatch: float
    relative: float
    bound: float
    passed: bool


def verify_flux_identity(sol: TranslatorSolution, geom: DomainGeometry, A: float,
                         theta: ContactAngleField, K: float = 1.0) -> FluxReport:
    """``c int v^-1`` against ``I``; passes within ``K h^2`` times the problem scale."""
    v = differentiate(geom, geom.ghosted(sol.phi, sol.ghosts)).v
    lhs = sol.c * quadrature(geom, 1.0 / v)
    rhs = compute_I(geom, A, theta)
    mismatch = abs(lhs - rhs)
    scale = abs(A) * geom.area + geom.perimeter + abs(sol.c) * geom.area
    bound = K * geom.spacing**2 * scale
    return FluxReport(lhs, rhs, mismatch, mismatch / max(abs(rhs), scale), bound, mismatch <= bound)


@dataclass
class UniquenessReport:
    passed: bool
    max_dc: float
    max_dphi: float
    speeds: list
    failures: int


def uniqueness_probe(geom: DomainGeometry, A: float, theta: ContactAngleField, k: int = 5,
                     amplitude: float = 1.0, seed: int = 0, reference: TranslatorSolution | None = None,
                     c_tol: float = 1e-8, phi_tol: float = 1e-6, tol: float = 1e-13) -> UniquenessReport:
    """Re-solve from ``k`` random smooth initial guesses and compare after anchoring.

    The re-solves run to ``tol`` (clipped at the rounding floor) so that the
    comparison measures the basin, not the stopping rule.
    """
    rng = np.random.default_rng(seed)
    ref = reference or solve_translator_newton(geom, A, theta)
    speeds, dphi, dc, fails = [], 0.0, 0.0, 0
    L = max(float(np.ptp(geom.x)), float(np.ptp(geom.y)), 1e-12)
    for _ in range(k):
        a = rng.uniform(-amplitude, amplitude, size=3)
        init = a[0] * (geom.x / L) ** 2 + a[1] * (geom.y / L) ** 2 + a[2] * (geom.x * geom.y) / L**2
        try:
            s = solve_translator_newton(geom, A, theta, init=init, tol=tol)
        except NewtonConvergenceError:
            fails += 1
            continue
        speeds.append(s.c)
        dc = max(dc, abs(s.c - ref.c))
        dphi = max(dphi, float(np.max(np.abs(s.phi - ref.phi))))
    ok = fails == 0 and dc <= c_tol and dphi <= phi_tol
    return UniquenessReport(ok, dc, dphi, speeds, fails)


def classify_speed(c: float, A: float) -> str:
    tc = tol_c(A)
    if abs(c) <= tc:
        return "Stationary"
    return "Upward" if c > 0 else "Downward"


# ---------------------------------------------------------------- flow extraction

@dataclass
class SpeedEstimate:
    c_est: float
    profile_drift: float


def extract_speed_from_flow(times, anchor_values, profiles=None, fraction: float = 0.2,
                            min_points: int = 3, anchor: tuple | None = None) -> SpeedEstimate:
    """Least-squares slope of ``u(anchor, t)`` over the trailing part of a run.

    ``profiles`` (optional) are the last two recorded fields; their sup
    distance after subtracting the value at ``anchor`` (default: the first
    node) is the profile drift.
    """
    t = np.asarray(times, dtype=float)
    a = np.asarray(anchor_values, dtype=float)
    if t.size < min_points:
        raise ValueError(f"trajectory too short for a speed estimate ({t.size} records)")
    k = max(min_points, int(np.ceil(fraction * t.size)))
    tt, aa = t[-k:], a[-k:]
    tm = tt.mean()
    c = float(np.sum((tt - tm) * (aa - aa.mean())) / np.sum((tt - tm) ** 2))
    drift = 0.0
    if profiles is not None and len(profiles) >= 2:
        p, q = np.asarray(profiles[-2]), np.asarray(profiles[-1])
        idx = tuple(anchor) if anchor is not None else (0,) * p.ndim
        drift = float(np.max(np.abs((q - q[idx]) - (p - p[idx]))))
    return SpeedEstimate(c, drift)


# ---------------------------------------------------------------- oracles

def grim_reaper_speed(theta: float, half_width: float = 1.0) -> float:
    """Speed on ``[-L, L]`` with equal end angles: ``sin(c L) = cos(theta)``."""
    return float(np.arcsin(np.cos(theta)) / half_width)


def grim_reaper_profile(x, c: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if c == 0:
        return np.zeros_like(x)
    return -np.log(np.cos(c * x)) / c


def cap_profile(r, A: float, R: float = 1.0) -> np.ndarray:
    """Spherical cap over a disk of radius ``R`` with mean curvature ``-A``, zero at the centre."""
    r = np.asarray(r, dtype=float)
    return (2.0 / A) * (np.sqrt(1.0 - (A * r / 2.0) ** 2) - 1.0)


def cap_driving_force(theta: float, R: float = 1.0) -> float:
    """Driving force that makes a constant angle ``theta`` stationary on a disk of radius ``R``."""
    return -2.0 * np.cos(theta) / R


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
