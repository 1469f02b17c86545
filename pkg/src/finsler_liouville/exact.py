"""Closed-form reference objects for the anisotropic N-Laplacian.

Radial Dirichlet solutions by nested quadrature, the logarithmic fundamental
solution, Green functions on Wulff balls, the entire Liouville bubble family,
and spherical/ball mean-value diagnostics.  Everything here is independent of
the grid solver and serves as its oracle.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .gauges import FinslerGauge, GaugeError
from .wulff import WulffGeometry

__all__ = [
    "RadialSolution",
    "radial_poisson_solution",
    "FundamentalSolution",
    "GreenFunction",
    "green_wulff_ball",
    "Bubble",
    "bubble_family",
    "bubble_constants",
    "mean_value_check",
]


class RadialSolution:
    """Radial profile v(r) with v(R) = 0, v'(0) = 0, from nested quadrature."""

    def __init__(self, r_grid, values, deriv_values):
        self.r_grid = r_grid
        self.values = values
        self.deriv_values = deriv_values
        self.radius = float(r_grid[-1])

    def __call__(self, r):
        return np.interp(np.asarray(r, dtype=float), self.r_grid, self.values)

    def deriv(self, r):
        return np.interp(np.asarray(r, dtype=float), self.r_grid,
                         self.deriv_values)

    def as_field_callable(self, gauge, center=None):
        center = np.zeros(gauge.dim) if center is None else np.asarray(center)

        def fn(points):
            return self(gauge.dual_value(np.asarray(points) - center))

        return fn


def radial_poisson_solution(f_star, R, dim, gauge: FinslerGauge = None,
                            n_grid=8193):
    """Solve the radial reduction of -Q_N v = f* on [0, R] with v(R) = 0.

    The slope satisfies -v'(r) = (int_0^r s^(N-1) f*(s) ds)^(1/(N-1)) / r;
    the profile is its integral from r to R.  The reduction is the same for
    every gauge (the gauge enters only through the radial variable F0), so
    `gauge` is accepted for interface symmetry and dimension checking only.
    """
    if gauge is not None and gauge.dim != dim:
        raise ValueError("gauge dimension disagrees with dim")
    if R <= 0:
        raise ValueError("radius must be positive")
    r = np.linspace(0.0, float(R), int(n_grid))
    f_vals = np.asarray(f_star(r), dtype=float)
    if np.any(~np.isfinite(f_vals)):
        raise ValueError("radial source must be finite on [0, R]")
    moment = cumulative_trapezoid(r ** (dim - 1) * f_vals, r, initial=0.0)
    moment = np.maximum(moment, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(r > 0, moment ** (1.0 / (dim - 1)) / np.where(r > 0, r, 1.0), 0.0)
    tail = cumulative_trapezoid(slope, r, initial=0.0)
    values = tail[-1] - tail
    return RadialSolution(r, values, -slope)


class FundamentalSolution:
    """Logarithmic fundamental solution of the N-anisotropic Laplacian.

    Gamma(x) = -(N k)^(-1/(N-1)) log F0(x); gauge-harmonic away from the
    origin, with unit flux through every Wulff sphere.
    """

    def __init__(self, gauge: FinslerGauge, geometry: WulffGeometry = None):
        self.gauge = gauge
        self.geometry = geometry or WulffGeometry(gauge)
        n, k = gauge.dim, self.geometry.volume_constant
        self.coefficient = (n * k) ** (-1.0 / (n - 1))

    def __call__(self, x, clamp=0.0):
        r = self.gauge.dual_value(np.asarray(x, dtype=float))
        if clamp > 0:
            r = np.maximum(r, clamp)
        if np.any(r <= 0):
            raise GaugeError("fundamental solution has a pole at the origin")
        return -self.coefficient * np.log(r)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        r = self.gauge.dual_value(x)
        if np.any(r <= 0):
            raise GaugeError("fundamental solution has a pole at the origin")
        return -self.coefficient * self.gauge.dual_grad(x) / r[..., None]


class GreenFunction:
    """Green function of the Wulff ball with a prescribed point mass.

    G(x) = (mass/(N k))^(1/(N-1)) * log(R / F0(x - center)); it vanishes on
    {F0 = R} and splits as gamma * Gamma + h with gamma = mass^(1/(N-1)) and
    h constant, so the regular part trivially satisfies F0 |grad h| -> 0.
    """

    def __init__(self, gauge: FinslerGauge, radius, mass=1.0, center=None,
                 geometry: WulffGeometry = None):
        if radius <= 0 or mass <= 0:
            raise ValueError("radius and mass must be positive")
        self.gauge = gauge
        self.geometry = geometry or WulffGeometry(gauge)
        self.radius = float(radius)
        self.mass = float(mass)
        self.center = (np.zeros(gauge.dim) if center is None
                       else np.asarray(center, dtype=float))
        n, k = gauge.dim, self.geometry.volume_constant
        self.coefficient = (self.mass / (n * k)) ** (1.0 / (n - 1))
        self.gamma = self.mass ** (1.0 / (n - 1))
        self.fundamental = FundamentalSolution(gauge, self.geometry)
        self.regular_value = self.coefficient * np.log(self.radius)

    def regular_part(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.full(x.shape[:-1], self.regular_value)

    def __call__(self, x, clamp=0.0):
        x = np.asarray(x, dtype=float)
        r = self.gauge.dual_value(x - self.center)
        if clamp > 0:
            r = np.maximum(r, clamp)
        if np.any(r <= 0):
            raise GaugeError("Green function has a pole at its center")
        return self.coefficient * np.log(self.radius / r)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        rel = x - self.center
        r = self.gauge.dual_value(rel)
        if np.any(r <= 0):
            raise GaugeError("Green function has a pole at its center")
        return -self.coefficient * self.gauge.dual_grad(rel) / r[..., None]

    def weak_mass(self, test, test_grad, tol=None, support_radius=None):
        """Quadrature of int flux(grad G) . grad(test) over the Wulff ball.

        For smooth test functions supported in the ball this recovers
        mass * test(center).  Passing the test's support radius restricts
        the radial rule to where grad(test) lives (exact restriction).
        """
        r = self.radius if support_radius is None \
            else min(self.radius, float(support_radius))

        def integrand(points):
            flux = self.gauge.flux(self.gradient(points))
            return np.sum(flux * np.asarray(test_grad(points)), axis=-1)

        return self.geometry.ball_quadrature(integrand, r,
                                             center=self.center, tol=tol)


def green_wulff_ball(gauge: FinslerGauge, radius, mass=1.0, center=None,
                     geometry: WulffGeometry = None) -> GreenFunction:
    return GreenFunction(gauge, radius, mass=mass, center=center,
                         geometry=geometry)


# -- entire Liouville bubbles ---------------------------------------------------


def bubble_constants():
    """Shape/amplitude constants of the radial entire solutions, by dimension.

    Loaded from the versioned table shipped with the package (regenerated by
    scripts/derive_bubble_constants.py).
    """
    with resources.files("finsler_liouville.data").joinpath(
            "bubble_constants.json").open() as fh:
        table = json.load(fh)
    return {int(e["N"]): e for e in table["entries"]}


class Bubble:
    """Entire radial solution of -Q_N u = V0 e^u with finite exponential mass.

    u(x) = -N log(1 + c (lam F0(x - center))^(N/(N-1))) + N log lam + a(V0),
    with c and a fixed so the radial residual vanishes identically.  The
    exponential mass is lambda-independent.
    """

    def __init__(self, gauge: FinslerGauge, amplitude=1.0, lam=1.0,
                 center=None, geometry: WulffGeometry = None):
        if amplitude <= 0 or lam <= 0:
            raise ValueError("amplitude V0 and scale lambda must be positive")
        self.gauge = gauge
        self.geometry = geometry or WulffGeometry(gauge)
        self.amplitude = float(amplitude)
        self.lam = float(lam)
        self.center = (np.zeros(gauge.dim) if center is None
                       else np.asarray(center, dtype=float))
        n = gauge.dim
        entry = bubble_constants().get(n)
        if entry is None:
            raise ValueError(f"no bubble constants tabulated for dimension {n}")
        self.shape_c = float(entry["c"])
        self.log_amplitude = float(entry["log_amplitude"]) - np.log(self.amplitude)
        self.exponent = n / (n - 1.0)

    # value / gradient ------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n = self.gauge.dim
        r = self.gauge.dual_value(x - self.center)
        t = self.shape_c * (self.lam * r) ** self.exponent
        return -n * np.log1p(t) + n * np.log(self.lam) + self.log_amplitude

    def radial_slope(self, r):
        n, q = self.gauge.dim, self.exponent
        r = np.asarray(r, dtype=float)
        t = self.shape_c * (self.lam * r) ** q
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(r > 0,
                             -n * q * t / np.where(r > 0, r, 1.0) / (1.0 + t),
                             0.0)
        return slope

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        rel = x - self.center
        r = self.gauge.dual_value(rel)
        tiny = r < 1e-300
        safe = np.where(tiny[..., None], 1.0, rel)
        g = self.gauge.dual_grad(safe)
        out = self.radial_slope(r)[..., None] * g
        return np.where(tiny[..., None], 0.0, out)

    # masses ------------------------------------------------------------------

    @property
    def peak_value(self):
        return self.gauge.dim * np.log(self.lam) + self.log_amplitude

    def total_mass(self):
        """int V0 e^u over the whole space; independent of lambda."""
        n, k = self.gauge.dim, self.geometry.volume_constant
        return self.amplitude * k * np.exp(self.log_amplitude)

    def mass_in_ball(self, r):
        """int V0 e^u over the Wulff ball of radius r about the center."""
        t = self.shape_c * (self.lam * np.asarray(r, dtype=float)) ** self.exponent
        n = self.gauge.dim
        return self.total_mass() * (t / (1.0 + t)) ** (n - 1)

    def rescaled(self, delta):
        """Member reached by x -> delta x + center, u -> u + N log delta."""
        return Bubble(self.gauge, amplitude=self.amplitude,
                      lam=self.lam * delta, center=np.zeros(self.gauge.dim),
                      geometry=self.geometry)


def bubble_family(gauge: FinslerGauge, amplitude=1.0, lam=1.0, center=None,
                  geometry: WulffGeometry = None) -> Bubble:
    return Bubble(gauge, amplitude=amplitude, lam=lam, center=center,
                  geometry=geometry)


# -- mean value diagnostics ------------------------------------------------------


def mean_value_check(u, gauge: FinslerGauge, radii, center=None,
                     geometry: WulffGeometry = None, tol=None):
    """Worst deviation of Wulff sphere/ball averages from the center value.

    `u` is a callable on (m, N) points or a ScalarField (its `evaluate` is
    used).  Returns a dict with per-radius averages and the two worst
    absolute deviations.  Meaningful as an identity check only when the
    gauge passes the compatibility condition for its dimension.
    """
    geometry = geometry or WulffGeometry(gauge)
    center = (np.zeros(gauge.dim) if center is None
              else np.asarray(center, dtype=float))
    fn = u.evaluate if hasattr(u, "evaluate") else u
    u0 = float(np.asarray(fn(center[None, :])).ravel()[0])
    area1 = geometry.surface_area(1.0)
    k = geometry.volume_constant
    n = gauge.dim
    rows = []
    for r in radii:
        sphere = geometry.boundary_quadrature(fn, r=r, center=center, tol=tol) \
            / (area1 * r ** (n - 1))
        ball = geometry.ball_quadrature(fn, r, center=center, tol=tol) \
            / (k * r ** n)
        rows.append({"r": float(r), "sphere_average": sphere,
                     "ball_average": ball,
                     "sphere_deviation": abs(sphere - u0),
                     "ball_deviation": abs(ball - u0)})
    return {
        "center_value": u0,
        "rows": rows,
        "worst_sphere_deviation": max(row["sphere_deviation"] for row in rows),
        "worst_ball_deviation": max(row["ball_deviation"] for row in rows),
    }
