"""Piecewise-linear finite elements with distance-power weights, for Poisson problems with singular sources."""

__version__ = "0.1.0"

from .fem import FEFunction, PointMass, LineMeasure, DivField, Density, solve, galerkin_project  # noqa: E402,F401
from .mesh import ConvexPolygon, Mesh, unit_square, regular_polygon, structured_square, refine_uniform  # noqa: E402,F401
from .weights import FeatureSet, PowerWeight, ap_range, estimate_ap_constant  # noqa: E402,F401
