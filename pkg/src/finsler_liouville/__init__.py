"""Anisotropic N-Laplacian toolbox.

Gauge geometry (Wulff shapes, polar norms), structured-grid fields,
convex symmetrization, a regularized energy-minimization solver for
-Q_N u = f and -Q_N u = V e^u, closed-form reference solutions, and
blow-up concentration diagnostics, plus a reproducible experiment CLI.
"""

__version__ = "0.1.0"

from .gauges import (
    CustomGauge,
    DiagonalGauge,
    EuclideanGauge,
    FinslerGauge,
    PNormGauge,
    SmoothedPNormGauge,
    check_mvp_condition,
    estimate_d0,
    monotonicity_quotient,
    parse_gauge_spec,
    verify_norm_properties,
)
from .grid import Domain, ScalarField
from .wulff import WulffGeometry
