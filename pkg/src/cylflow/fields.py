"""Spatial operators for graphs over the cross-section.

Sign conventions: the upward normal is ``(-Du, 1)/v`` and the mean curvature
is ``H = div(Du/v)``, so the flow reads ``u_t = v (H + A)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .angles import ContactAngleField
from .geometry import DomainGeometry

BC_TOL = 1e-10


class ContactAngleError(RuntimeError):
    """Ghost closure left a boundary residual above tolerance."""

    def __init__(self, message, worst_residual):
        super().__init__(message)
        self.worst_residual = worst_residual


@dataclass
class DifferentialSample:
    grad: np.ndarray  # shape + (n,)
    hess: np.ndarray  # shape + (n, n)
    v: np.ndarray


def coeff_a(p) -> np.ndarray:
    """``delta_ij - p_i p_j / (1 + |p|^2)`` for one vector or a stack of them."""
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    outer = p[..., :, None] * p[..., None, :]
    return np.eye(n) - outer / (1.0 + np.sum(p * p, axis=-1))[..., None, None]


def differentiate(geom: DomainGeometry, ug: np.ndarray) -> DifferentialSample:
    """Second-order central derivatives of a ghosted grid function."""
    ug = np.asarray(ug, dtype=float)
    if geom.dim == 1:
        h = geom.h
        ux = (ug[2:] - ug[:-2]) / (2 * h)
        uxx = (ug[2:] - 2 * ug[1:-1] + ug[:-2]) / h**2
        grad = ux[:, None]
        hess = uxx[:, None, None]
    else:
        ux, uy, uxx, uxy, uyy = kernels.derivatives_2d(
            ug, geom.metric, geom.pole_weights, geom.dxi, geom.deta
        )
        grad = np.stack([ux, uy], axis=-1)
        hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)
    v = np.sqrt(1.0 + np.sum(grad**2, axis=-1))
    return DifferentialSample(grad=grad, hess=hess, v=v)


def bc_residual(geom: DomainGeometry, ug: np.ndarray, theta: ContactAngleField) -> np.ndarray:
    """``Du.gamma + cos(theta) v`` at each boundary node."""
    if geom.dim == 1:
        h = geom.h
        slope = np.array([(ug[2] - ug[0]) / (2 * h), (ug[-1] - ug[-3]) / (2 * h)])
        du_gamma = slope * geom.gamma[:, 0]
        v = np.sqrt(1 + slope**2)
    else:
        nr = geom.nr
        m = geom.metric[:, nr]
        u_xi = (ug[nr + 1] - ug[nr - 1]) / (2 * geom.dxi)
        u_eta = (np.roll(ug[nr], -1) - np.roll(ug[nr], 1)) / (2 * geom.deta)
        ux = m[0] * u_xi + m[2] * u_eta
        uy = m[1] * u_xi + m[3] * u_eta
        du_gamma = ux * geom.gamma[:, 0] + uy * geom.gamma[:, 1]
        v = np.sqrt(1 + ux**2 + uy**2)
    return du_gamma + theta.cos_boundary * v


def fill_ghosts(geom: DomainGeometry, ug: np.ndarray, theta: ContactAngleField) -> np.ndarray:
    """Fill the ghost layer of ``ug`` in place from the angle condition."""
    if geom.dim == 1:
        sl, sr = theta.slopes_1d
        kernels.fill_ghosts_1d(ug, geom.h, sl, sr)
    else:
        kernels.fill_ghosts_2d(ug, geom.metric, theta.bnd, geom.dxi, geom.deta)
    return ug


def enforce_contact_bc(geom: DomainGeometry, u: np.ndarray, theta: ContactAngleField,
                       tol: float = BC_TOL) -> np.ndarray:
    """Return ``u`` with its ghost layer closed by the contact-angle condition.

    On an interval the endpoint slopes are ``-cot(theta_left)`` and
    ``+cot(theta_right)``.  In 2D the ghost value only moves the normal part
    of Du, so each boundary node is a scalar problem whose root
    ``Du.gamma = -cot(theta) sqrt(1 + tau^2)`` (``tau`` the tangential slope)
    is taken directly.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != geom.shape:
        raise ValueError(f"grid function shape {u.shape} does not match grid {geom.shape}")
    ug = geom.ghosted(u)
    fill_ghosts(geom, ug, theta)
    res = bc_residual(geom, ug, theta)
    # rounding floor: the closure divides differences of u by the normal spacing
    floor = 100 * np.finfo(float).eps * (1.0 + np.abs(ug).max()) / geom.normal_spacing
    worst = float(np.max(np.abs(res))) if np.all(np.isfinite(res)) else float("inf")
    if not worst <= tol + floor:
        raise ContactAngleError(
            f"contact-angle closure failed, worst boundary residual {worst:.3e}", worst
        )
    return ug


def interior_operator(geom: DomainGeometry, ug: np.ndarray, A: float) -> np.ndarray:
    """``a^ij(Du) D_ij u + A v`` at every node of a ghost-closed field."""
    ug = np.ascontiguousarray(ug, dtype=float)
    out = np.empty(geom.shape)
    if geom.dim == 1:
        kernels.operator_1d(ug, geom.h, float(A), out)
    else:
        kernels.operator_2d(ug, geom.metric, geom.pole_weights, geom.dxi, geom.deta, float(A), out)
    return out


def flow_operator(geom: DomainGeometry, u: np.ndarray, theta: ContactAngleField, A: float) -> np.ndarray:
    return interior_operator(geom, enforce_contact_bc(geom, u, theta), A)


def mean_curvature(geom: DomainGeometry, ug: np.ndarray, sample: DifferentialSample | None = None) -> np.ndarray:
    ds = sample or differentiate(geom, ug)
    return np.einsum("...ij,...ij->...", coeff_a(ds.grad), ds.hess) / ds.v


def frozen_operator(geom: DomainGeometry, ug: np.ndarray, theta: ContactAngleField):
    """Linearisation with coefficients frozen at ``ug``.

    Returns ``(L, l0)`` such that, for any ``w`` whose ghosts obey the lagged
    condition ``Dw.gamma = -cos(theta) v(ug)``, ``a^ij(Du) D_ij w`` at the
    distinct nodes equals ``L @ geom.unique(w) + l0``.
    """
    ds = differentiate(geom, ug)
    a = coeff_a(ds.grad)
    r = -theta.cos_boundary * ds.v[geom.boundary_index]
    if geom.dim == 1:
        return _frozen_1d(geom, a[:, 0, 0], r)
    return _frozen_2d(geom, a, r)


def _frozen_1d(geom, a11, r):
    n, h = geom.shape[0], geom.h
    c = a11 / h**2
    # extended columns: nodes 0..n-1, ghost_left = n, ghost_right = n + 1
    rows = np.repeat(np.arange(n), 3)
    cols = np.column_stack([np.arange(n) - 1, np.arange(n), np.arange(n) + 1]).ravel()
    cols[0] = n
    cols[-1] = n + 1
    vals = np.column_stack([c, -2 * c, c]).ravel()
    full = sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 2))
    # ghosts: left u_x = r0 (gamma = +1), right -u_x = r1
    E = sp.csr_matrix(([1.0, 1.0], ([0, 1], [1, n - 2])), shape=(2, n))
    e0 = np.array([-2 * h * r[0], -2 * h * r[1]])
    return _eliminate(full, E, e0, n)


def _frozen_2d(geom, a, r):
    nr, nt = geom.nr, geom.ntheta
    dxi, deta = geom.dxi, geom.deta
    m = geom.metric
    nn = geom.n_nodes
    i_idx = np.arange(1, nr + 1)[:, None] * np.ones(nt, dtype=int)
    j_idx = np.ones(nr, dtype=int)[:, None] * np.arange(nt)

    def col(i, j):
        j = j % nt
        return np.where(i == 0, 0, np.where(i == nr + 1, nn + j, 1 + (i - 1) * nt + j))

    grad_xi = np.stack([m[0, 1:], m[1, 1:]], -1)
    grad_eta = np.stack([m[2, 1:], m[3, 1:]], -1)
    aa = a[1:]
    bxx = np.einsum("...i,...ij,...j->...", grad_xi, aa, grad_xi)
    bxe = np.einsum("...i,...ij,...j->...", grad_xi, aa, grad_eta)
    bee = np.einsum("...i,...ij,...j->...", grad_eta, aa, grad_eta)
    cx = 2 * bxe * m[4, 1:] + bee * m[5, 1:]
    cy = 2 * bxe * m[6, 1:] + bee * m[7, 1:]
    b_xi = cx * m[0, 1:] + cy * m[1, 1:]
    b_eta = cx * m[2, 1:] + cy * m[3, 1:]

    stencil = [
        (0, 0, -2 * bxx / dxi**2 - 2 * bee / deta**2),
        (1, 0, bxx / dxi**2 - b_xi / (2 * dxi)),
        (-1, 0, bxx / dxi**2 + b_xi / (2 * dxi)),
        (0, 1, bee / deta**2 - b_eta / (2 * deta)),
        (0, -1, bee / deta**2 + b_eta / (2 * deta)),
        (1, 1, bxe / (2 * dxi * deta)),
        (1, -1, -bxe / (2 * dxi * deta)),
        (-1, 1, -bxe / (2 * dxi * deta)),
        (-1, -1, bxe / (2 * dxi * deta)),
    ]
    row = col(i_idx, j_idx).ravel()
    rows, cols, vals = [], [], []
    for di, dj, w in stencil:
        rows.append(row)
        cols.append(col(i_idx + di, j_idx + dj).ravel())
        vals.append(np.broadcast_to(w, (nr, nt)).ravel())
    # pole row: tr(a H) with H from ring-1 differences
    pw = geom.pole_weights
    a0 = a[0, 0]
    wp = a0[0, 0] * pw[2] + 2 * a0[0, 1] * pw[3] + a0[1, 1] * pw[4]
    rows.append(np.zeros(nt + 1, dtype=int))
    cols.append(np.concatenate(([0], 1 + np.arange(nt))))
    vals.append(np.concatenate(([-wp.sum()], wp)))
    full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nn, nn + nt),
    )
    # ghost_j = w[nr-1, j] + 2 dxi (r_j - (grad eta . gamma) w_eta) / (grad xi . gamma)
    mb = m[:, nr]
    gx, gy = geom.gamma[:, 0], geom.gamma[:, 1]
    al = mb[0] * gx + mb[1] * gy
    be = mb[2] * gx + mb[3] * gy
    j = np.arange(nt)
    k = 2 * dxi * be / al / (2 * deta)
    E = sp.csr_matrix(
        (
            np.concatenate([np.ones(nt), -k, k]),
            (np.tile(j, 3), np.concatenate([col(np.full(nt, nr - 1), j), col(np.full(nt, nr), j + 1), col(np.full(nt, nr), j - 1)])),
        ),
        shape=(nt, nn),
    )
    e0 = 2 * dxi * r / al
    return _eliminate(full, E, e0, nn)


def _eliminate(full, E, e0, nn):
    L = full[:, :nn] + full[:, nn:] @ E
    l0 = full[:, nn:] @ e0
    return L.tocsr(), np.asarray(l0).ravel()
