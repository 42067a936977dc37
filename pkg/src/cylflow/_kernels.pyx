# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and formulas as ``_kernels_py``."""

from libc.math cimport sqrt
import numpy as np

BACKEND = "compiled"


# ---------------------------------------------------------------- 1D

def fill_ghosts_1d(double[::1] ug, double h, double s_left, double s_right):
    cdef Py_ssize_t m = ug.shape[0]
    ug[0] = ug[2] - 2.0 * h * s_left
    ug[m - 1] = ug[m - 3] + 2.0 * h * s_right


cdef void _op1d(const double[::1] ug, double h, double A, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = out.shape[0]
    cdef double ux, uxx, v2
    for i in range(n):
        ux = (ug[i + 2] - ug[i]) / (2.0 * h)
        uxx = (ug[i + 2] - 2.0 * ug[i + 1] + ug[i]) / (h * h)
        v2 = 1.0 + ux * ux
        out[i] = uxx / v2 + A * sqrt(v2)


def operator_1d(const double[::1] ug, double h, double A, double[::1] out):
    _op1d(ug, h, A, out)


def explicit_1d(double[::1] u, double h, double A, double s_left, double s_right,
                double dt, long nsteps, double[::1] ut):
    cdef Py_ssize_t n = u.shape[0], i
    cdef long k
    cdef double[::1] ug = np.empty(n + 2)
    cdef double[::1] f = np.empty(n)
    with nogil:
        for k in range(nsteps):
            for i in range(n):
                ug[i + 1] = u[i]
            ug[0] = ug[2] - 2.0 * h * s_left
            ug[n + 1] = ug[n - 1] + 2.0 * h * s_right
            _op1d(ug, h, A, f)
            for i in range(n):
                u[i] = u[i] + dt * f[i]
        for i in range(n):
            ut[i] = f[i]


# ---------------------------------------------------------------- 2D

cdef void _ghost2d(double[:, ::1] ug, const double[:, :, ::1] metric, const double[:, ::1] bnd,
                   double dxi, double deta) noexcept nogil:
    cdef Py_ssize_t nr = ug.shape[0] - 2, nt = ug.shape[1], j, jp, jm
    cdef double u_eta, xx, xy, ex, ey, px, py, qx, qy, tau, s_star
    for j in range(nt):
        jp = j + 1 if j + 1 < nt else 0
        jm = j - 1 if j > 0 else nt - 1
        u_eta = (ug[nr, jp] - ug[nr, jm]) / (2.0 * deta)
        xx = metric[0, nr, j]
        xy = metric[1, nr, j]
        ex = metric[2, nr, j]
        ey = metric[3, nr, j]
        px = -xx * ug[nr - 1, j] / (2.0 * dxi) + ex * u_eta
        py = -xy * ug[nr - 1, j] / (2.0 * dxi) + ey * u_eta
        qx = xx / (2.0 * dxi)
        qy = xy / (2.0 * dxi)
        tau = px * bnd[2, j] + py * bnd[3, j]
        s_star = -bnd[4, j] * sqrt(1.0 + tau * tau)
        ug[nr + 1, j] = (s_star - (px * bnd[0, j] + py * bnd[1, j])) / (qx * bnd[0, j] + qy * bnd[1, j])


def fill_ghosts_2d(double[:, ::1] ug, const double[:, :, ::1] metric, const double[:, ::1] bnd,
                   double dxi, double deta):
    _ghost2d(ug, metric, bnd, dxi, deta)


cdef inline double _flux(double ux, double uy, double uxx, double uxy, double uyy,
                         double A) noexcept nogil:
    cdef double v2 = 1.0 + ux * ux + uy * uy
    return (uxx + uyy - (ux * ux * uxx + 2.0 * ux * uy * uxy + uy * uy * uyy) / v2
            + A * sqrt(v2))


cdef void _op2d(const double[:, ::1] ug, const double[:, :, ::1] metric, const double[:, ::1] polew,
                double dxi, double deta, double A, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nr = ug.shape[0] - 2, nt = ug.shape[1], i, j, jp, jm
    cdef double c, up, um, u_xi, u_eta, u_xixi, u_etaeta, u_xieta
    cdef double xx, xy, ex, ey, ux, uy, m00, m01, m11, uxx, uxy, uyy, d, fp
    cdef double gx = 0.0, gy = 0.0, hxx = 0.0, hxy = 0.0, hyy = 0.0
    for i in range(1, nr + 1):
        for j in range(nt):
            jp = j + 1 if j + 1 < nt else 0
            jm = j - 1 if j > 0 else nt - 1
            c = ug[i, j]
            up = ug[i + 1, j]
            um = ug[i - 1, j]
            u_xi = (up - um) / (2.0 * dxi)
            u_eta = (ug[i, jp] - ug[i, jm]) / (2.0 * deta)
            u_xixi = (up - 2.0 * c + um) / (dxi * dxi)
            u_etaeta = (ug[i, jp] - 2.0 * c + ug[i, jm]) / (deta * deta)
            u_xieta = (ug[i + 1, jp] - ug[i + 1, jm] - ug[i - 1, jp] + ug[i - 1, jm]) / (4.0 * dxi * deta)
            xx = metric[0, i, j]
            xy = metric[1, i, j]
            ex = metric[2, i, j]
            ey = metric[3, i, j]
            ux = xx * u_xi + ex * u_eta
            uy = xy * u_xi + ey * u_eta
            m00 = u_xixi
            m01 = u_xieta - ux * metric[4, i, j] - uy * metric[6, i, j]
            m11 = u_etaeta - ux * metric[5, i, j] - uy * metric[7, i, j]
            uxx = xx * xx * m00 + 2.0 * xx * ex * m01 + ex * ex * m11
            uxy = xx * xy * m00 + (xx * ey + xy * ex) * m01 + ex * ey * m11
            uyy = xy * xy * m00 + 2.0 * xy * ey * m01 + ey * ey * m11
            out[i, j] = _flux(ux, uy, uxx, uxy, uyy, A)
    for j in range(nt):
        d = ug[1, j] - ug[0, 0]
        gx += polew[0, j] * d
        gy += polew[1, j] * d
        hxx += polew[2, j] * d
        hxy += polew[3, j] * d
        hyy += polew[4, j] * d
    fp = _flux(gx, gy, hxx, hxy, hyy, A)
    for j in range(nt):
        out[0, j] = fp


def operator_2d(const double[:, ::1] ug, const double[:, :, ::1] metric, const double[:, ::1] polew,
                double dxi, double deta, double A, double[:, ::1] out):
    _op2d(ug, metric, polew, dxi, deta, A, out)


def explicit_2d(double[:, ::1] u, const double[:, :, ::1] metric, const double[:, ::1] bnd,
                const double[:, ::1] polew, double dxi, double deta, double A, double dt,
                long nsteps, double[:, ::1] ut):
    cdef Py_ssize_t nr = u.shape[0] - 1, nt = u.shape[1], i, j
    cdef long k
    cdef double[:, ::1] ug = np.empty((nr + 2, nt))
    cdef double[:, ::1] f = np.empty((nr + 1, nt))
    with nogil:
        for k in range(nsteps):
            for i in range(nr + 1):
                for j in range(nt):
                    ug[i, j] = u[i, j]
            _ghost2d(ug, metric, bnd, dxi, deta)
            _op2d(ug, metric, polew, dxi, deta, A, f)
            for i in range(nr + 1):
                for j in range(nt):
                    u[i, j] = u[i, j] + dt * f[i, j]
        for i in range(nr + 1):
            for j in range(nt):
                ut[i, j] = f[i, j]
