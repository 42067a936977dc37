"""Numerical laboratory for driven mean curvature flow of graphs in a cylinder
with a prescribed contact angle on the wall."""

from .angles import AngleSeries, ConstantAngle, EndpointAngles, contact_angle_field
from .geometry import Interval, StarShaped, build_geometry
from .kernels import BACKEND

__all__ = [
    "AngleSeries",
    "ConstantAngle",
    "EndpointAngles",
    "Interval",
    "StarShaped",
    "build_geometry",
    "contact_angle_field",
    "BACKEND",
]
__version__ = "0.1.0"
