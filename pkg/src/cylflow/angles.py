"""Prescribed contact angles and their extension into the cross-section."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from .geometry import DomainGeometry


class AngleError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantAngle:
    value: float


@dataclass(frozen=True)
class EndpointAngles:
    """Interval only: one angle per endpoint, linear in between."""

    left: float
    right: float


@dataclass(frozen=True)
class AngleSeries:
    """Star-shaped domains: ``mean + sum cos[k-1] cos(k phi) + sin[k-1] sin(k phi)``.

    Extended inside as ``mean + sum xi^k (...)`` so the field stays smooth
    through the pole.
    """

    mean: float
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()


AngleSpec = Union[ConstantAngle, EndpointAngles, AngleSeries]


def _series(spec: AngleSeries, xi, phi):
    out = np.full(np.broadcast(xi, phi).shape, float(spec.mean))
    for k, a in enumerate(spec.cos, start=1):
        out = out + a * xi**k * np.cos(k * phi)
    for k, b in enumerate(spec.sin, start=1):
        out = out + b * xi**k * np.sin(k * phi)
    return out


def _check_range(values, what):
    lo, hi = float(np.min(values)), float(np.max(values))
    if not (0.0 < lo and hi < np.pi):
        raise AngleError(
            f"θ must lie strictly inside (0, π); {what} spans [{lo:.6g}, {hi:.6g}]"
        )


@dataclass(frozen=True, eq=False)
class ContactAngleField:
    """Angle values on every node plus the ghost layer.

    ``ghosted`` follows the geometry's ghost layout and lets the field be
    differentiated with the same stencils as the height function.
    """

    geom: DomainGeometry
    spec: AngleSpec
    values: np.ndarray
    ghosted: np.ndarray
    boundary: np.ndarray

    @property
    def cos_boundary(self) -> np.ndarray:
        return np.cos(self.boundary)

    @property
    def cot_boundary(self) -> np.ndarray:
        return 1.0 / np.tan(self.boundary)

    @property
    def S0(self) -> float:
        return float(np.max(np.abs(np.cos(self.values))))

    @property
    def sin_min_boundary(self) -> float:
        return float(np.min(np.sin(self.boundary)))

    @property
    def is_constant(self) -> bool:
        return bool(np.ptp(self.values) == 0.0)

    @cached_property
    def bnd(self) -> np.ndarray:
        """Boundary table for the 2D ghost kernel: gamma, tangent, cot(theta)."""
        g = self.geom
        return np.ascontiguousarray(
            np.vstack([g.gamma[:, 0], g.gamma[:, 1], g.tangent[:, 0], g.tangent[:, 1], self.cot_boundary])
        )

    @property
    def slopes_1d(self) -> tuple[float, float]:
        """Endpoint slopes u_x fixed by the angle condition on an interval."""
        cot = self.cot_boundary
        return -float(cot[0]), float(cot[1])

    @cached_property
    def norms(self) -> dict:
        """Discrete sup-norms used by the hypothesis checkers.

        Conventions: ``theta_c1_boundary = max|theta| + max|D theta|`` over
        boundary nodes (the zeroth-order term is included); ``cos_c2 =
        max|cos| + max|D cos| + max|D^2 cos|`` over all nodes, with the
        Hessian measured in spectral norm.
        """
        from .fields import differentiate

        ds = differentiate(self.geom, self.ghosted)
        grad_theta = np.linalg.norm(ds.grad, axis=-1)
        cg = np.cos(self.ghosted)
        dc = differentiate(self.geom, cg)
        hess_norm = np.max(np.abs(np.linalg.eigvalsh(dc.hess)), axis=-1)
        bidx = self.geom.boundary_index
        return {
            "max_dtheta": float(grad_theta.max()),
            "max_dtheta_boundary": float(grad_theta[bidx].max()),
            "theta_c1_boundary": float(np.abs(self.boundary).max() + grad_theta[bidx].max()),
            "cos_c2": float(
                np.abs(np.cos(self.values)).max()
                + np.linalg.norm(dc.grad, axis=-1).max()
                + hess_norm.max()
            ),
            "convention": "sup over grid nodes; C1 includes sup|theta|; C2 includes sup|cos| and sup|D cos|",
        }


def contact_angle_field(geom: DomainGeometry, spec: AngleSpec) -> ContactAngleField:
    if isinstance(spec, (int, float)):
        spec = ConstantAngle(float(spec))
    if geom.dim == 1:
        if isinstance(spec, ConstantAngle):
            left = right = spec.value
        elif isinstance(spec, EndpointAngles):
            left, right = spec.left, spec.right
        else:
            raise AngleError("an interval takes a constant angle or endpoint angles")
        _check_range([left, right], "the endpoint angles")
        a, b = geom.spec.a, geom.spec.b
        h = geom.h
        xg = np.concatenate(([a - h], geom.x, [b + h]))
        ghosted = left + (right - left) * (xg - a) / (b - a)
        if isinstance(spec, ConstantAngle):
            ghosted = np.full_like(xg, spec.value)
        values = ghosted[1:-1].copy()
        boundary = np.array([left, right], dtype=float)
    else:
        if isinstance(spec, ConstantAngle):
            ghosted = np.full(geom.ghost_shape, float(spec.value))
        elif isinstance(spec, AngleSeries):
            phi_fine = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
            _check_range(_series(spec, 1.0, phi_fine), "the boundary angle")
            xig = np.concatenate((geom.xi, [1.0 + geom.dxi]))[:, None]
            ghosted = _series(spec, xig, geom.eta[None, :])
        else:
            raise AngleError("a star-shaped domain takes a constant angle or an angle series")
        values = ghosted[:-1].copy()
        boundary = values[-1].copy()
    _check_range(values, "the angle field")
    for arr in (values, ghosted, boundary):
        arr.setflags(write=False)
    return ContactAngleField(geom=geom, spec=spec, values=values, ghosted=ghosted, boundary=boundary)
