"""Discrete cross-sections: intervals and boundary-fitted star-shaped grids.

A 2D grid is logically rectangular in (xi, eta) with xi in [0, 1] and eta
periodic.  Row ``i`` holds the nodes ``x = xi_i * rho(eta_j) * (cos eta_j,
sin eta_j)``; row 0 collapses onto the pole (the star centre) and stores the
same value in every column.  Row ``nr`` is the boundary ring and one ghost
row beyond it closes the contact-angle condition.

Grid functions are plain numpy arrays of shape ``geom.shape``; the ghosted
layout (one extra node past each boundary point) has shape ``geom.ghost_shape``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

# metric component order, see DomainGeometry.metric
XI_X, XI_Y, ETA_X, ETA_Y, X_XE, X_EE, Y_XE, Y_EE = range(8)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    n: int = 201

    def __post_init__(self):
        if not self.a < self.b:
            raise GeometryError(f"interval needs a < b, got a={self.a}, b={self.b}")
        if self.n < 5 or self.n % 2 == 0:
            raise GeometryError(f"interval node count must be odd and >= 5, got {self.n}")


@dataclass(frozen=True)
class StarShaped:
    """Boundary ``rho(phi) * (cos phi, sin phi)`` with a finite Fourier series.

    ``rho_cos[k]`` multiplies ``cos(k phi)`` (``rho_cos[0]`` is the mean) and
    ``rho_sin[k-1]`` multiplies ``sin(k phi)``.
    """

    rho_cos: tuple[float, ...]
    rho_sin: tuple[float, ...] = ()
    nr: int = 16
    ntheta: int | None = None
    rho_min: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rho_cos", tuple(float(c) for c in self.rho_cos))
        object.__setattr__(self, "rho_sin", tuple(float(c) for c in self.rho_sin))
        if not self.rho_cos:
            raise GeometryError("rho_cos needs at least the mean coefficient")
        if self.ntheta is None:
            object.__setattr__(self, "ntheta", 4 * self.nr)
        if self.nr < 3:
            raise GeometryError(f"nr must be >= 3, got {self.nr}")
        if self.ntheta < 8 or self.ntheta % 2:
            raise GeometryError(f"ntheta must be even and >= 8, got {self.ntheta}")
        phi = np.linspace(0.0, 2 * np.pi, 20000, endpoint=False)
        r = self.rho(phi)
        k = int(np.argmin(r))
        if r[k] <= max(self.rho_min, 0.0):
            raise GeometryError(
                f"boundary is not star-shaped: rho({phi[k]:.6f}) = {r[k]:.6g} "
                f"<= rho_min = {self.rho_min:g}"
            )

    def rho(self, phi, deriv: int = 0):
        """``rho`` or its ``deriv``-th derivative at the angles ``phi``."""
        phi = np.asarray(phi, dtype=float)
        out = np.zeros_like(phi)
        if deriv == 0:
            out += self.rho_cos[0]
        for k, a in enumerate(self.rho_cos[1:], start=1):
            out += a * k**deriv * _trig(k * phi, deriv, "cos")
        for k, b in enumerate(self.rho_sin, start=1):
            out += b * k**deriv * _trig(k * phi, deriv, "sin")
        return out

    @property
    def is_circle(self) -> bool:
        return all(c == 0 for c in self.rho_cos[1:]) and all(c == 0 for c in self.rho_sin)


DomainSpec = Union[Interval, StarShaped]


def _trig(arg, deriv, kind):
    # d^k/dx^k of cos/sin cycles with period 4
    shift = deriv % 4
    if kind == "sin":
        shift = (shift + 3) % 4
    return (np.cos(arg), -np.sin(arg), -np.cos(arg), np.sin(arg))[shift]


def polar_curvature(rho, drho, ddrho):
    """Signed curvature of ``rho(phi)(cos phi, sin phi)``; positive where convex."""
    return (rho**2 + 2 * drho**2 - rho * ddrho) / (rho**2 + drho**2) ** 1.5


@dataclass(frozen=True, eq=False)
class DomainGeometry:
    """Immutable discrete cross-section.

    Attributes common to both dimensions: ``x``, ``y`` node coordinates,
    ``weights`` (area quadrature, same shape as a grid function),
    ``boundary_index`` (tuple of index arrays into a grid function),
    ``gamma`` (unit inner normals), ``tangent``, ``kappa``, ``dsigma``
    (boundary quadrature weights), ``distance`` and ``anchor``.

    2D only: ``metric[k, i, j]`` holds, for rows ``i >= 1``, the inverse
    Jacobian entries (xi_x, xi_y, eta_x, eta_y) and the second derivatives
    of the map (x_{xi eta}, x_{eta eta}, y_{xi eta}, y_{eta eta}); ``x_{xi xi}``
    and ``y_{xi xi}`` vanish.  ``pole_weights`` (5, ntheta) map ring-1
    differences ``u[1, j] - u[0, 0]`` to the pole gradient and Hessian.
    """

    spec: DomainSpec
    dim: int
    shape: tuple[int, ...]
    ghost_shape: tuple[int, ...]
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    boundary_index: tuple
    boundary_param: np.ndarray
    bpos: np.ndarray
    gamma: np.ndarray
    tangent: np.ndarray
    kappa: np.ndarray
    dsigma: np.ndarray
    distance: np.ndarray
    anchor: tuple
    rho_min: float
    h: float = 0.0
    nr: int = 0
    ntheta: int = 0
    dxi: float = 0.0
    deta: float = 0.0
    xi: np.ndarray | None = None
    eta: np.ndarray | None = None
    metric: np.ndarray | None = None
    pole_weights: np.ndarray | None = None

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @property
    def perimeter(self) -> float:
        return float(self.dsigma.sum())

    @property
    def n_nodes(self) -> int:
        """Number of distinct nodes (the pole counts once)."""
        if self.dim == 1:
            return self.shape[0]
        return 1 + self.nr * self.ntheta

    @property
    def n_ghosts(self) -> int:
        return 2 if self.dim == 1 else self.ntheta

    @property
    def anchor_flat(self) -> int:
        return self.flat_index(*self.anchor) if self.dim == 2 else self.anchor[0]

    @property
    def spacing(self) -> float:
        """Largest physical node spacing (the ``h`` in O(h^2) statements)."""
        if self.dim == 1:
            return self.h
        rmax = float(np.max(np.hypot(self.bpos[:, 0], self.bpos[:, 1])))
        return max(self.dxi * rmax, rmax * self.deta)

    @property
    def normal_spacing(self) -> float:
        """Smallest node spacing across the boundary."""
        return self.h if self.dim == 1 else self.dxi * self.rho_min

    def flat_index(self, i: int, j: int) -> int:
        return 0 if i == 0 else 1 + (i - 1) * self.ntheta + j

    def unique(self, u: np.ndarray) -> np.ndarray:
        """Flatten a grid function to its distinct nodes."""
        if self.dim == 1:
            return np.array(u, dtype=float)
        return np.concatenate(([u[0, 0]], u[1:].ravel()))

    def expand(self, z: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`unique`."""
        if self.dim == 1:
            return np.array(z, dtype=float)
        u = np.empty(self.shape)
        u[0] = z[0]
        u[1:] = np.reshape(z[1 : self.n_nodes], (self.nr, self.ntheta))
        return u

    def ghosted(self, u: np.ndarray, ghosts: np.ndarray | None = None) -> np.ndarray:
        ug = np.zeros(self.ghost_shape)
        if self.dim == 1:
            ug[1:-1] = u
            if ghosts is not None:
                ug[0], ug[-1] = ghosts
        else:
            ug[:-1] = u
            if ghosts is not None:
                ug[-1] = ghosts
        return ug

    def ghost_values(self, ug: np.ndarray) -> np.ndarray:
        if self.dim == 1:
            return np.array([ug[0], ug[-1]])
        return ug[-1].copy()

    def interior_of(self, ug: np.ndarray) -> np.ndarray:
        return ug[1:-1] if self.dim == 1 else ug[:-1]

    def nodes(self) -> np.ndarray:
        """(n_nodes, 2) coordinates of distinct nodes."""
        return np.column_stack([self.unique(self.x), self.unique(self.y)])


def _freeze(*arrays):
    for a in arrays:
        if isinstance(a, np.ndarray):
            a.setflags(write=False)


def build_geometry(spec: DomainSpec) -> DomainGeometry:
    if isinstance(spec, Interval):
        return _build_interval(spec)
    if isinstance(spec, StarShaped):
        return _build_star(spec)
    raise GeometryError(f"unknown domain spec {spec!r}")


def _build_interval(spec: Interval) -> DomainGeometry:
    n = spec.n
    x = np.linspace(spec.a, spec.b, n)
    h = (spec.b - spec.a) / (n - 1)
    w = np.full(n, h)
    w[[0, -1]] = h / 2
    d = np.minimum(x - spec.a, spec.b - x)
    d[[0, -1]] = 0.0
    mid = 0.5 * (spec.a + spec.b)
    geom = DomainGeometry(
        spec=spec,
        dim=1,
        shape=(n,),
        ghost_shape=(n + 2,),
        x=x,
        y=np.zeros(n),
        weights=w,
        boundary_index=(np.array([0, n - 1]),),
        boundary_param=np.array([0.0, 1.0]),
        bpos=np.array([[spec.a, 0.0], [spec.b, 0.0]]),
        gamma=np.array([[1.0, 0.0], [-1.0, 0.0]]),
        tangent=np.array([[0.0, 1.0], [0.0, 1.0]]),
        kappa=np.zeros(2),
        dsigma=np.ones(2),
        distance=d,
        anchor=(int(np.argmin(np.abs(x - mid))),),
        rho_min=0.5 * (spec.b - spec.a),
        h=h,
    )
    _freeze(geom.x, geom.y, geom.weights, geom.gamma, geom.kappa, geom.dsigma, geom.distance)
    return geom


def _pole_weights(spec: StarShaped, dxi: float, eta: np.ndarray) -> np.ndarray:
    """Pole gradient/Hessian weights from lines through the pole.

    Each line joins ring-1 node ``j`` and node ``j + ntheta/2``; a
    three-point non-uniform stencil gives first and second directional
    derivatives, and least squares over all lines recovers Du and D^2u.
    """
    m = eta.size
    k = m // 2
    ang = eta[:k]
    hp = dxi * spec.rho(ang)
    hm = dxi * spec.rho(ang + np.pi)
    den = hp * hm * (hp + hm)
    # directional derivative rows in terms of (f_plus - f0, f_minus - f0)
    d1p, d1m = hm**2 / den, -(hp**2) / den
    d2p, d2m = 2 * hm / den, 2 * hp / den
    c, s = np.cos(ang), np.sin(ang)
    g_fit = np.linalg.pinv(np.column_stack([c, s]))  # (2, k)
    h_fit = np.linalg.pinv(np.column_stack([c * c, 2 * c * s, s * s]))  # (3, k)
    w = np.zeros((5, m))
    w[0:2, :k] = g_fit * d1p
    w[0:2, k:] = g_fit * d1m
    w[2:5, :k] = h_fit * d2p
    w[2:5, k:] = h_fit * d2m
    return w


def _build_star(spec: StarShaped) -> DomainGeometry:
    nr, nt = spec.nr, spec.ntheta
    dxi, deta = 1.0 / nr, 2 * np.pi / nt
    xi = np.linspace(0.0, 1.0, nr + 1)
    eta = deta * np.arange(nt)
    r0, r1, r2 = spec.rho(eta), spec.rho(eta, 1), spec.rho(eta, 2)
    c, s = np.cos(eta), np.sin(eta)
    XI = xi[:, None]
    x = XI * (r0 * c)[None, :]
    y = XI * (r0 * s)[None, :]

    # map derivatives on rows 0..nr (plus one ghost row for the metric)
    xig = np.linspace(0.0, 1.0 + dxi, nr + 2)[:, None]
    x_xi = np.broadcast_to(r0 * c, (nr + 2, nt))
    y_xi = np.broadcast_to(r0 * s, (nr + 2, nt))
    x_eta = xig * (r1 * c - r0 * s)
    y_eta = xig * (r1 * s + r0 * c)
    det = xig * r0**2
    metric = np.zeros((8, nr + 2, nt))
    with np.errstate(divide="ignore", invalid="ignore"):
        metric[XI_X] = y_eta / det
        metric[XI_Y] = -x_eta / det
        metric[ETA_X] = -y_xi / det
        metric[ETA_Y] = x_xi / det
    metric[:, 0] = 0.0
    metric[X_XE] = r1 * c - r0 * s
    metric[Y_XE] = r1 * s + r0 * c
    metric[X_EE] = xig * (r2 * c - 2 * r1 * s - r0 * c)
    metric[Y_EE] = xig * (r2 * s + 2 * r1 * c - r0 * s)
    metric = np.ascontiguousarray(metric[:, : nr + 1])

    # trapezoid in xi (Jacobian xi rho^2 vanishes at the pole), periodic in eta
    wxi = np.full(nr + 1, dxi)
    wxi[-1] = dxi / 2
    weights = wxi[:, None] * xi[:, None] * (r0**2)[None, :] * deta

    tx, ty = r1 * c - r0 * s, r1 * s + r0 * c
    speed = np.hypot(tx, ty)
    tangent = np.column_stack([tx, ty]) / speed[:, None]
    gamma = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    kappa = polar_curvature(r0, r1, r2)
    dsigma = speed * deta
    bpos = np.column_stack([r0 * c, r0 * s])

    phi_fine = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    rho_min = float(spec.rho(phi_fine).min())

    dist = _polyline_distance(spec, x, y)
    dist[-1] = 0.0

    area = weights.sum()
    cx, cy = (weights * x).sum() / area, (weights * y).sum() / area
    # anchor at the node nearest the centroid; pole ties win
    dd = np.hypot(x - cx, y - cy)
    i, j = np.unravel_index(int(np.argmin(dd)), dd.shape)
    if i == 0 or dd[i, j] >= np.hypot(cx, cy) - 1e-14:
        i, j = 0, 0

    geom = DomainGeometry(
        spec=spec,
        dim=2,
        shape=(nr + 1, nt),
        ghost_shape=(nr + 2, nt),
        x=x,
        y=y,
        weights=weights,
        boundary_index=(np.full(nt, nr), np.arange(nt)),
        boundary_param=eta.copy(),
        bpos=bpos,
        gamma=gamma,
        tangent=tangent,
        kappa=kappa,
        dsigma=dsigma,
        distance=dist,
        anchor=(int(i), int(j)),
        rho_min=rho_min,
        nr=nr,
        ntheta=nt,
        dxi=dxi,
        deta=deta,
        xi=xi,
        eta=eta,
        metric=metric,
        pole_weights=np.ascontiguousarray(_pole_weights(spec, dxi, eta)),
    )
    _freeze(
        geom.x, geom.y, geom.weights, geom.bpos, geom.gamma, geom.tangent, geom.kappa,
        geom.dsigma, geom.distance, geom.metric, geom.pole_weights, geom.xi, geom.eta,
    )
    return geom


def _polyline_distance(spec: StarShaped, x, y, samples: int | None = None) -> np.ndarray:
    """Exact distance from each node to a fine polyline through the boundary."""
    m = samples or max(4096, 16 * x.shape[1])
    phi = np.linspace(0, 2 * np.pi, m, endpoint=False)
    r = spec.rho(phi)
    p = np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    q = np.roll(p, -1, axis=0)
    seg = q - p
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    pts = np.column_stack([x.ravel(), y.ravel()])
    out = np.empty(len(pts))
    chunk = max(1, 2_000_000 // m)
    for start in range(0, len(pts), chunk):
        pt = pts[start : start + chunk]
        rel = pt[:, None, :] - p[None, :, :]
        t = np.clip(np.einsum("nmk,mk->nm", rel, seg) / seg_len2, 0.0, 1.0)
        diff = rel - t[..., None] * seg[None]
        out[start : start + chunk] = np.sqrt(np.min(np.einsum("nmk,nmk->nm", diff, diff), axis=1))
    return out.reshape(x.shape)


def boundary_curvature(geom: DomainGeometry) -> np.ndarray:
    """Signed boundary curvature from the closed-form polar formula."""
    return np.array(geom.kappa)


def distance_field(geom: DomainGeometry) -> np.ndarray:
    return np.array(geom.distance)


def quadrature(geom: DomainGeometry, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != geom.shape:
        raise GeometryError(f"grid function shape {f.shape} does not match grid {geom.shape}")
    return float(np.sum(geom.weights * f))


def boundary_quadrature(geom: DomainGeometry, g) -> float:
    g = np.asarray(g, dtype=float)
    if g.shape != geom.dsigma.shape:
        raise GeometryError(
            f"boundary values shape {g.shape} does not match boundary {geom.dsigma.shape}"
        )
    return float(np.sum(geom.dsigma * g))


def boundary_values(geom: DomainGeometry, u: np.ndarray) -> np.ndarray:
    return np.asarray(u)[geom.boundary_index]


def write_structured_grid(path, geom: DomainGeometry, columns: dict | None = None, header: str | None = None):
    """Dump one node per line: xi-index, eta-index, x, y, d, boundary flag, gamma, kappa.

    Extra named ``columns`` (grid functions) are appended; the pole is written once.
    """
    columns = columns or {}
    names = ["i", "j", "x", "y", "d", "boundary", "gamma_x", "gamma_y", "kappa", *columns]
    gx = np.zeros(geom.shape)
    gy = np.zeros(geom.shape)
    kap = np.zeros(geom.shape)
    flag = np.zeros(geom.shape, dtype=int)
    gx[geom.boundary_index] = geom.gamma[:, 0]
    gy[geom.boundary_index] = geom.gamma[:, 1]
    kap[geom.boundary_index] = geom.kappa
    flag[geom.boundary_index] = 1
    if geom.dim == 1:
        idx = [(i, 0, (i,)) for i in range(geom.shape[0])]
    else:
        idx = [(0, 0, (0, 0))] + [
            (i, j, (i, j)) for i in range(1, geom.nr + 1) for j in range(geom.ntheta)
        ]
    with open(path, "w") as fh:
        if header is not None:
            fh.write(f"# {header}\n")
        fh.write("# " + " ".join(names) + "\n")
        for i, j, k in idx:
            vals = [geom.x[k], geom.y[k], geom.distance[k], flag[k], gx[k], gy[k], kap[k]]
            vals += [np.asarray(col)[k] for col in columns.values()]
            fh.write(f"{i} {j} " + " ".join(_fmt(v) for v in vals) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"
