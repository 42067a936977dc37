"""Numpy implementation of the hot kernels.

This is the fallback when the compiled ``_kernels`` extension is missing and
the reference the compiled version is tested against.  Array layouts are
described in :mod:`cylflow.geometry`; every function mutates its output
arguments in place, mirroring the compiled signatures.
"""

import numpy as np

BACKEND = "python"


# ---------------------------------------------------------------- 1D

def fill_ghosts_1d(ug, h, s_left, s_right):
    ug[0] = ug[2] - 2.0 * h * s_left
    ug[-1] = ug[-3] + 2.0 * h * s_right


def operator_1d(ug, h, A, out):
    ux = (ug[2:] - ug[:-2]) / (2.0 * h)
    uxx = (ug[2:] - 2.0 * ug[1:-1] + ug[:-2]) / (h * h)
    v2 = 1.0 + ux * ux
    out[:] = uxx / v2 + A * np.sqrt(v2)


def explicit_1d(u, h, A, s_left, s_right, dt, nsteps, ut):
    n = u.shape[0]
    ug = np.empty(n + 2)
    f = np.empty(n)
    for _ in range(nsteps):
        ug[1:-1] = u
        fill_ghosts_1d(ug, h, s_left, s_right)
        operator_1d(ug, h, A, f)
        u += dt * f
    ut[:] = f


# ---------------------------------------------------------------- 2D

def fill_ghosts_2d(ug, metric, bnd, dxi, deta):
    """Close the ghost row so that Du.gamma + cos(theta) v = 0 on the boundary.

    ``bnd`` rows: gamma_x, gamma_y, t_x, t_y, cot(theta).  The ghost only
    moves Du along grad(xi), which is normal to the boundary, so the
    tangential slope is fixed and the normal slope has a closed form.
    """
    nr = ug.shape[0] - 2
    ub = ug[nr]
    u_eta = (np.roll(ub, -1) - np.roll(ub, 1)) / (2.0 * deta)
    xx, xy, ex, ey = metric[0, nr], metric[1, nr], metric[2, nr], metric[3, nr]
    px = -xx * ug[nr - 1] / (2.0 * dxi) + ex * u_eta
    py = -xy * ug[nr - 1] / (2.0 * dxi) + ey * u_eta
    qx = xx / (2.0 * dxi)
    qy = xy / (2.0 * dxi)
    gx, gy, tx, ty, cot = bnd
    tau = px * tx + py * ty
    s_star = -cot * np.sqrt(1.0 + tau * tau)
    ug[nr + 1] = (s_star - (px * gx + py * gy)) / (qx * gx + qy * gy)


def derivatives_2d(ug, metric, polew, dxi, deta):
    """Physical (ux, uy, uxx, uxy, uyy) on rows 0..nr of a ghosted field."""
    nr = ug.shape[0] - 2
    c = ug[1 : nr + 1]
    up = ug[2 : nr + 2]
    um = ug[0:nr]
    u_xi = (up - um) / (2.0 * dxi)
    u_eta = (np.roll(c, -1, axis=1) - np.roll(c, 1, axis=1)) / (2.0 * deta)
    u_xixi = (up - 2.0 * c + um) / (dxi * dxi)
    u_etaeta = (np.roll(c, -1, axis=1) - 2.0 * c + np.roll(c, 1, axis=1)) / (deta * deta)
    u_xieta = (
        np.roll(up, -1, axis=1) - np.roll(up, 1, axis=1)
        - np.roll(um, -1, axis=1) + np.roll(um, 1, axis=1)
    ) / (4.0 * dxi * deta)
    m = metric[:, 1:]
    xx, xy, ex, ey = m[0], m[1], m[2], m[3]
    ux = xx * u_xi + ex * u_eta
    uy = xy * u_xi + ey * u_eta
    m00 = u_xixi
    m01 = u_xieta - ux * m[4] - uy * m[6]
    m11 = u_etaeta - ux * m[5] - uy * m[7]
    uxx = xx * xx * m00 + 2.0 * xx * ex * m01 + ex * ex * m11
    uxy = xx * xy * m00 + (xx * ey + xy * ex) * m01 + ex * ey * m11
    uyy = xy * xy * m00 + 2.0 * xy * ey * m01 + ey * ey * m11

    shape = (nr + 1, ug.shape[1])
    out = [np.empty(shape) for _ in range(5)]
    for k, arr in enumerate((ux, uy, uxx, uxy, uyy)):
        out[k][1:] = arr
    diff = ug[1] - ug[0, 0]
    pole = polew @ diff
    for k in range(5):
        out[k][0] = pole[k]
    return out


def operator_2d(ug, metric, polew, dxi, deta, A, out):
    ux, uy, uxx, uxy, uyy = derivatives_2d(ug, metric, polew, dxi, deta)
    v2 = 1.0 + ux * ux + uy * uy
    out[:] = (
        uxx + uyy - (ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy) / v2
        + A * np.sqrt(v2)
    )


def explicit_2d(u, metric, bnd, polew, dxi, deta, A, dt, nsteps, ut):
    nr = u.shape[0] - 1
    ug = np.empty((nr + 2, u.shape[1]))
    f = np.empty_like(u)
    for _ in range(nsteps):
        ug[: nr + 1] = u
        fill_ghosts_2d(ug, metric, bnd, dxi, deta)
        operator_2d(ug, metric, polew, dxi, deta, A, f)
        u += dt * f
        u[0] = u[0, 0]
    ut[:] = f
