"""Wulff shapes: volume constants, boundary quadrature, polar volume quadrature.

The Wulff ball of radius r about x0 is W_r(x0) = {x : F0(x - x0) <= r}; its
volume is k r^N where k is the measure of the unit Wulff shape.  Boundaries
are parameterized radially, x = x0 + r * theta / F0(theta), which works for
every star-shaped (here: convex) Wulff set.  Quadratures refine by doubling
the angular resolution until two successive levels agree to tolerance.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma, roots_legendre

from .gauges import DiagonalGauge, EuclideanGauge, FinslerGauge

__all__ = ["WulffGeometry", "QuadratureError", "unit_ball_volume"]

_MAX_ANGULAR_2D = 1 << 16
_MAX_ANGULAR_3D = 1 << 10


class QuadratureError(RuntimeError):
    """Quadrature did not reach tolerance; carries the achieved estimate."""

    def __init__(self, message, achieved, change):
        self.achieved = achieved
        self.change = change
        super().__init__(f"{message}: achieved {achieved!r}, last change {change:.3g}")


def unit_ball_volume(dim):
    """Lebesgue measure of the euclidean unit ball."""
    return math.pi ** (dim / 2.0) / gamma(dim / 2.0 + 1.0)


class WulffGeometry:
    """Wulff-ball data for a gauge: volume constant and surface quadrature."""

    def __init__(self, gauge: FinslerGauge, quadrature_tol=None):
        self.gauge = gauge
        self.dim = gauge.dim
        if quadrature_tol is None:
            quadrature_tol = 1e-8 if self.dim == 2 else 1e-6
        self.quadrature_tol = float(quadrature_tol)
        self.volume_constant = self._compute_volume_constant()

    # -- volume ---------------------------------------------------------------

    def _compute_volume_constant(self):
        if isinstance(self.gauge, EuclideanGauge):
            return unit_ball_volume(self.dim)
        if isinstance(self.gauge, DiagonalGauge):
            # Wulff set is the ellipsoid sum x_i^2 / w_i <= 1
            return unit_ball_volume(self.dim) * float(
                np.prod(np.sqrt(self.gauge.weights)))
        # polar formula: |W_1| = (1/N) * int_{S^{N-1}} F0(theta)^{-N} dsigma
        def radial(dirs):
            return self.gauge.dual_value(dirs) ** (-self.dim)

        return self._angular_integral(radial) / self.dim

    def volume(self, r=1.0):
        return self.volume_constant * float(r) ** self.dim

    # -- boundary parameterization ---------------------------------------------

    def boundary_point(self, dirs, r=1.0, center=None):
        """Map unit directions onto the Wulff sphere of radius r."""
        dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
        pts = r * dirs / self.gauge.dual_value(dirs)[..., None]
        if center is not None:
            pts = pts + np.asarray(center, dtype=float)
        return pts

    def contains(self, points, r=1.0, center=None):
        points = np.asarray(points, dtype=float)
        if center is not None:
            points = points - np.asarray(center, dtype=float)
        return self.gauge.dual_value(points) <= r

    # -- angular quadrature over S^{N-1} ----------------------------------------

    def _angular_nodes(self, level):
        if self.dim == 2:
            n = level
            phi = np.arange(n) * (2 * math.pi / n)
            dirs = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
            wts = np.full(n, 2 * math.pi / n)
            return dirs, wts
        if self.dim == 3:
            nc = level
            c, wc = roots_legendre(nc)
            nphi = 2 * nc
            phi = np.arange(nphi) * (2 * math.pi / nphi)
            s = np.sqrt(1.0 - c ** 2)
            dirs = np.stack([
                np.outer(s, np.cos(phi)),
                np.outer(s, np.sin(phi)),
                np.outer(c, np.ones(nphi)),
            ], axis=-1).reshape(-1, 3)
            wts = np.outer(wc, np.full(nphi, 2 * math.pi / nphi)).ravel()
            return dirs, wts
        raise QuadratureError(
            f"angular quadrature implemented for dimension 2 and 3 only, got {self.dim}",
            None, math.inf)

    def _angular_integral(self, func, tol=None):
        """Integrate func(dirs) over the unit sphere by level doubling."""
        tol = self.quadrature_tol if tol is None else tol
        level = 64 if self.dim == 2 else 12
        max_level = _MAX_ANGULAR_2D if self.dim == 2 else _MAX_ANGULAR_3D
        prev = None
        change = math.inf
        while level <= max_level:
            dirs, wts = self._angular_nodes(level)
            val = float(np.sum(np.asarray(func(dirs)) * wts))
            if prev is not None:
                change = abs(val - prev)
                if change <= tol * max(1.0, abs(val)):
                    return val
            prev = val
            level *= 2
        raise QuadratureError("angular quadrature did not converge", prev, change)

    # -- surface integrals --------------------------------------------------------

    def _surface_element(self, dirs, r):
        """Euclidean surface density of {F0 = r} w.r.t. the angular measure."""
        f0 = self.gauge.dual_value(dirs)
        rho = 1.0 / f0
        grad = self.gauge.dual_grad(dirs)
        # tangential part of grad F0 on the sphere (Euler removes the radial part)
        tang = grad - f0[..., None] * dirs
        rad = r * rho
        slope = r * rho ** 2 * np.linalg.norm(tang, axis=-1)
        return rad ** (self.dim - 2) * np.sqrt(rad ** 2 + slope ** 2)

    def boundary_quadrature(self, g, r=1.0, center=None, tol=None):
        """Integrate g over the Wulff sphere {F0(x - center) = r}.

        g takes an (m, N) array of points and returns m values; the surface
        measure is the euclidean (N-1)-dimensional one.
        """
        if r <= 0:
            raise ValueError("Wulff sphere radius must be positive")

        def integrand(dirs):
            pts = self.boundary_point(dirs, r=r, center=center)
            return np.asarray(g(pts), dtype=float) * self._surface_element(dirs, r)

        return self._angular_integral(integrand, tol=tol)

    def surface_area(self, r=1.0):
        return self.boundary_quadrature(lambda p: np.ones(len(p)), r=r)

    # -- volume integrals over Wulff balls / annuli ---------------------------------

    def ball_quadrature(self, g, r, center=None, r_inner=0.0, tol=None,
                        radial_nodes=48):
        """Integrate g over the Wulff annulus {r_inner <= F0(x-center) <= r}.

        Uses euclidean polar coordinates: per direction, Gauss-Legendre in the
        radius on [r_inner, r] scaled by the direction's Wulff radius; the
        angular level doubles until two levels agree.
        """
        if r <= r_inner:
            raise ValueError("outer radius must exceed inner radius")
        rn, rw = roots_legendre(radial_nodes)
        rn = 0.5 * (rn + 1.0)  # map to [0, 1]
        rw = 0.5 * rw
        ctr = None if center is None else np.asarray(center, dtype=float)

        def shell(dirs):
            rho = 1.0 / self.gauge.dual_value(dirs)
            lo = r_inner * rho
            hi = r * rho
            span = hi - lo
            radii = lo[:, None] + span[:, None] * rn[None, :]
            pts = dirs[:, None, :] * radii[..., None]
            if ctr is not None:
                pts = pts + ctr
            vals = np.asarray(g(pts.reshape(-1, self.dim)), dtype=float)
            vals = vals.reshape(radii.shape)
            return np.sum(vals * radii ** (self.dim - 1) * rw[None, :], axis=1) * span

        return self._angular_integral(shell, tol=tol)
