"""Finsler gauges: even 1-homogeneous convex norms, their polars, and flux kernels.

A gauge F is an even, positively 1-homogeneous convex function on R^N with
F(xi) > 0 for xi != 0 and Hess(F^2) positive definite away from the origin.
The polar gauge F0(x) = sup{<x, xi> : F(xi) <= 1} is the support function of
the F-unit ball; the sublevel set {F0 <= 1} is the Wulff shape of F.

Built-in families: euclidean, diagonal (weighted-l2), p-norm (1 < p < inf),
a smoothed p-norm that stays inside the C^2 positive-definite class, and a
plug-in wrapper for user-supplied gauges.  All evaluations are vectorized
over a leading batch shape, with the vector axis last.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

__all__ = [
    "FinslerGauge",
    "EuclideanGauge",
    "DiagonalGauge",
    "PNormGauge",
    "SmoothedPNormGauge",
    "CustomGauge",
    "NumericalDualGauge",
    "GaugeError",
    "DualMaximizationError",
    "MonotonicityConstant",
    "MvpConditionReport",
    "monotonicity_quotient",
    "estimate_d0",
    "check_mvp_condition",
    "verify_norm_properties",
    "parse_gauge_spec",
]

_ZERO_TOL = 1e-140


class GaugeError(ValueError):
    """Raised when a gauge is evaluated outside its domain (e.g. grad at 0)."""


class DualMaximizationError(RuntimeError):
    """Support-function maximization failed to converge.

    Carries the best value found and an upper bound on the remaining gap.
    """

    def __init__(self, best_value, gap_bound):
        self.best_value = best_value
        self.gap_bound = gap_bound
        super().__init__(
            f"dual maximization not converged: best={best_value:.12g}, "
            f"gap bound={gap_bound:.3g}"
        )


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise GaugeError(f"expected vectors of length {dim}, got shape {x.shape}")
    return x


def _check_nonzero(x, what):
    norms = np.linalg.norm(x, axis=-1)
    if np.any(norms < _ZERO_TOL):
        raise GaugeError(f"{what} undefined at the origin")


class FinslerGauge:
    """Base class; subclasses provide value/grad/hess and the polar gauge."""

    family = "abstract"

    def __init__(self, dim):
        if dim < 2:
            raise GaugeError("gauge dimension must be >= 2")
        self.dim = int(dim)
        self._a = None
        self._b = None

    # -- core evaluations ---------------------------------------------------

    def value(self, xi):
        raise NotImplementedError

    def grad(self, xi):
        raise NotImplementedError

    def hess(self, xi):
        """Hessian of F (0-homogeneous of degree -1); FD fallback off grad."""
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge Hessian")
        return _fd_jacobian(self.grad, xi, rel=np.linalg.norm(xi, axis=-1))

    def dual_value(self, x):
        x = _as_points(x, self.dim)
        val, _ = _support_maximize(self, x)
        return val

    def dual_grad(self, x):
        # envelope theorem: the support-point argmax on {F = 1} is grad F0(x)
        x = _as_points(x, self.dim)
        _check_nonzero(x, "polar gradient")
        _, arg = _support_maximize(self, x)
        return arg

    def dual(self):
        """Gauge object for the polar F0."""
        return NumericalDualGauge(self)

    # -- equivalence constants a|xi| <= F(xi) <= b|xi| ----------------------

    @property
    def a(self):
        if self._a is None:
            self._a, self._b = self._extremes_on_sphere()
        return self._a

    @property
    def b(self):
        if self._b is None:
            self._a, self._b = self._extremes_on_sphere()
        return self._b

    def _extremes_on_sphere(self, n_samples=4096, seed=1234):
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((n_samples, self.dim))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        dirs = np.concatenate([dirs, np.eye(self.dim), -np.eye(self.dim)])
        vals = self.value(dirs)
        lo_dir = dirs[np.argmin(vals)]
        hi_dir = dirs[np.argmax(vals)]

        def on_sphere(z):
            z = z / np.linalg.norm(z)
            return z

        lo = optimize.minimize(lambda z: self.value(on_sphere(z)), lo_dir,
                               method="Nelder-Mead",
                               options={"xatol": 1e-12, "fatol": 1e-14}).fun
        hi = -optimize.minimize(lambda z: -self.value(on_sphere(z)), hi_dir,
                                method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14}).fun
        return float(lo), float(hi)

    # -- derived kernels ----------------------------------------------------

    def flux(self, xi):
        """F^(N-1)(xi) grad F(xi): the anisotropic N-Laplacian flux."""
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "flux")
        f = self.value(xi)
        return f[..., None] ** (self.dim - 1) * self.grad(xi)

    def flux_parts(self, xi):
        """(F, F*gradF) with the continuous extension (0, 0) at the origin.

        F*gradF = grad(F^2)/2 extends continuously by 0; this is the kernel
        the regularized solver needs, so zero gradients are legal here.
        """
        xi = _as_points(xi, self.dim)
        norms = np.linalg.norm(xi, axis=-1)
        tiny = norms < _ZERO_TOL
        if not np.any(tiny):
            f = self.value(xi)
            return f, f[..., None] * self.grad(xi)
        safe = np.where(tiny[..., None], 1.0, xi)
        f = np.where(tiny, 0.0, self.value(safe))
        fg = f[..., None] * self.grad(safe)
        fg = np.where(tiny[..., None], 0.0, fg)
        return f, fg

    def hess_half_F2(self, xi):
        """Hess(F^2)/2 = gradF gradF^T + F HessF (0-homogeneous, PD off 0)."""
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "Hess(F^2)")
        g = self.grad(xi)
        f = self.value(xi)
        return g[..., :, None] * g[..., None, :] + f[..., None, None] * self.hess(xi)

    def hess_half_F2_safe(self, xi):
        """As hess_half_F2 but zero rows get a fixed-direction surrogate."""
        xi = _as_points(xi, self.dim)
        norms = np.linalg.norm(xi, axis=-1)
        tiny = norms < _ZERO_TOL
        if not np.any(tiny):
            return self.hess_half_F2(xi)
        u0 = np.ones(self.dim) / math.sqrt(self.dim)
        safe = np.where(tiny[..., None], u0, xi)
        return self.hess_half_F2(safe)

    def hess_FN(self, xi):
        """Hessian of F^N; positive definite wherever Hess(F^2) is."""
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "Hess(F^N)")
        n = self.dim
        f = self.value(xi)
        g = self.grad(xi)
        outer = g[..., :, None] * g[..., None, :]
        return (n * (n - 1) * f[..., None, None] ** (n - 2) * outer
                + n * f[..., None, None] ** (n - 1) * self.hess(xi))

    # -- serialization ------------------------------------------------------

    def spec_items(self):
        return {"family": self.family, "dimension": self.dim}

    def to_spec(self):
        """Single-line key=value gauge descriptor."""
        return ";".join(f"{k}={_fmt_spec_value(v)}" for k, v in self.spec_items().items())

    def __repr__(self):
        return f"<{type(self).__name__} {self.to_spec()}>"


def _fmt_spec_value(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return ":".join(repr(float(w)) for w in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fd_jacobian(func, x, rel):
    """Centered finite-difference Jacobian of a vector map, batched."""
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    scale = np.maximum(np.asarray(rel), 1e-8)
    h = 1e-6 * scale[..., None]
    out = np.empty(x.shape + (dim,))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        out[..., :, j] = (func(x + h * e) - func(x - h * e)) / (2.0 * h)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


class EuclideanGauge(FinslerGauge):
    family = "euclidean"

    def __init__(self, dim=2):
        super().__init__(dim)
        self._a = self._b = 1.0

    def value(self, xi):
        return np.linalg.norm(_as_points(xi, self.dim), axis=-1)

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge gradient")
        return xi / np.linalg.norm(xi, axis=-1, keepdims=True)

    def hess(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge Hessian")
        r = np.linalg.norm(xi, axis=-1)
        u = xi / r[..., None]
        eye = np.eye(self.dim)
        return (eye - u[..., :, None] * u[..., None, :]) / r[..., None, None]

    def hess_half_F2(self, xi):
        xi = _as_points(xi, self.dim)
        return np.broadcast_to(np.eye(self.dim), xi.shape + (self.dim,)).copy()

    hess_half_F2_safe = hess_half_F2

    def dual_value(self, x):
        return np.linalg.norm(_as_points(x, self.dim), axis=-1)

    def dual_grad(self, x):
        return self.grad(x)

    def dual(self):
        return self


class DiagonalGauge(FinslerGauge):
    """F(xi) = sqrt(sum w_i xi_i^2) with positive weights; Wulff set an ellipsoid."""

    family = "diagonal"

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0):
            raise GaugeError("diagonal gauge needs a vector of positive weights")
        super().__init__(w.size)
        self.weights = w
        self._a = float(np.sqrt(w.min()))
        self._b = float(np.sqrt(w.max()))

    def value(self, xi):
        xi = _as_points(xi, self.dim)
        return np.sqrt(np.sum(self.weights * xi * xi, axis=-1))

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge gradient")
        return self.weights * xi / self.value(xi)[..., None]

    def hess(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge Hessian")
        f = self.value(xi)
        wxi = self.weights * xi
        return (np.diag(self.weights) / f[..., None, None]
                - wxi[..., :, None] * wxi[..., None, :] / f[..., None, None] ** 3)

    def hess_half_F2(self, xi):
        xi = _as_points(xi, self.dim)
        return np.broadcast_to(np.diag(self.weights), xi.shape + (self.dim,)).copy()

    hess_half_F2_safe = hess_half_F2

    def dual_value(self, x):
        x = _as_points(x, self.dim)
        return np.sqrt(np.sum(x * x / self.weights, axis=-1))

    def dual_grad(self, x):
        x = _as_points(x, self.dim)
        _check_nonzero(x, "polar gradient")
        return (x / self.weights) / self.dual_value(x)[..., None]

    def dual(self):
        return DiagonalGauge(1.0 / self.weights)

    def spec_items(self):
        return {"family": self.family, "dimension": self.dim,
                "weights": self.weights}


class PNormGauge(FinslerGauge):
    """l^p gauge, 1 < p < inf.  Hess(F^2) degenerates on the axes for p != 2;
    use SmoothedPNormGauge where the C^2 positive-definite hypotheses matter."""

    family = "pnorm"

    def __init__(self, p, dim=2):
        if not (1.0 < p < math.inf):
            raise GaugeError("p-norm exponent must lie in (1, inf)")
        super().__init__(dim)
        self.p = float(p)
        off = dim ** (1.0 / p - 0.5)
        self._a, self._b = (min(1.0, off), max(1.0, off))

    def value(self, xi):
        xi = _as_points(xi, self.dim)
        return np.sum(np.abs(xi) ** self.p, axis=-1) ** (1.0 / self.p)

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge gradient")
        f = self.value(xi)
        return (np.sign(xi) * np.abs(xi) ** (self.p - 1)
                / f[..., None] ** (self.p - 1))

    def hess(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge Hessian")
        p = self.p
        f = self.value(xi)
        absxi = np.abs(xi)
        s = np.sign(xi)
        with np.errstate(divide="ignore"):
            diag = absxi ** (p - 2)
        v = s * absxi ** (p - 1)
        eye = np.eye(self.dim)
        return (p - 1) * (
            eye * diag[..., None, :] / f[..., None, None] ** (p - 1)
            - v[..., :, None] * v[..., None, :] / f[..., None, None] ** (2 * p - 1)
        )

    def dual_value(self, x):
        q = self.p / (self.p - 1.0)
        x = _as_points(x, self.dim)
        return np.sum(np.abs(x) ** q, axis=-1) ** (1.0 / q)

    def dual_grad(self, x):
        return self.dual().grad(x)

    def dual(self):
        return PNormGauge(self.p / (self.p - 1.0), self.dim)

    def spec_items(self):
        return {"family": self.family, "dimension": self.dim, "p": self.p}


class SmoothedPNormGauge(FinslerGauge):
    """Homogeneous smoothing of the p-norm inside the C^2 PD class.

    F(xi) = (sum_i (xi_i^2 + s^2 |xi|^2)^(p/2))^(1/p), s > 0.  Each summand is
    a euclidean norm of a linear image of xi, so F is convex, even and
    1-homogeneous, and smooth away from 0; the s^2|xi|^2 term keeps Hess(F^2)
    positive definite.  Recovers the plain p-norm as s -> 0.
    """

    family = "smoothed-pnorm"

    def __init__(self, p, smoothing, dim=2):
        if not (1.0 < p < math.inf):
            raise GaugeError("p-norm exponent must lie in (1, inf)")
        if smoothing <= 0:
            raise GaugeError("smoothing parameter must be positive")
        super().__init__(dim)
        self.p = float(p)
        self.smoothing = float(smoothing)

    def value(self, xi):
        xi = _as_points(xi, self.dim)
        rho2 = np.sum(xi * xi, axis=-1, keepdims=True)
        g = np.sqrt(xi * xi + self.smoothing ** 2 * rho2)
        return np.sum(g ** self.p, axis=-1) ** (1.0 / self.p)

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge gradient")
        p, s2 = self.p, self.smoothing ** 2
        rho2 = np.sum(xi * xi, axis=-1, keepdims=True)
        g2 = xi * xi + s2 * rho2
        gpm2 = g2 ** (p / 2.0 - 1.0)
        f = np.sum(g2 ** (p / 2.0), axis=-1) ** (1.0 / p)
        num = gpm2 * xi + s2 * xi * np.sum(gpm2, axis=-1, keepdims=True)
        return num / f[..., None] ** (p - 1.0)

    def dual(self):
        return NumericalDualGauge(self)

    def spec_items(self):
        return {"family": self.family, "dimension": self.dim,
                "p": self.p, "s": self.smoothing}


class CustomGauge(FinslerGauge):
    """Plug-in wrapper around a user-supplied gauge callable.

    `func` must be vectorized over (..., dim) points; `grad` is optional and
    falls back to centered differences.  The polar is computed numerically.
    """

    family = "custom"

    def __init__(self, func, dim, grad=None, name="custom"):
        super().__init__(dim)
        self._func = func
        self._grad = grad
        self.name = name

    def value(self, xi):
        return np.asarray(self._func(_as_points(xi, self.dim)), dtype=float)

    def grad(self, xi):
        xi = _as_points(xi, self.dim)
        _check_nonzero(xi, "gauge gradient")
        if self._grad is not None:
            return np.asarray(self._grad(xi), dtype=float)
        scale = np.linalg.norm(xi, axis=-1)
        h = 1e-7 * np.maximum(scale, 1e-8)[..., None]
        out = np.empty_like(xi)
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            out[..., j] = (self.value(xi + h * e) - self.value(xi - h * e)) / (2 * h[..., 0])
        return out

    def spec_items(self):
        return {"family": self.family, "dimension": self.dim, "name": self.name}


class NumericalDualGauge(FinslerGauge):
    """Polar of `base`, evaluated by constrained support maximization."""

    family = "numerical-dual"

    def __init__(self, base):
        super().__init__(base.dim)
        self.base = base

    def value(self, x):
        x = _as_points(x, self.dim)
        val, _ = _support_maximize(self.base, x)
        return val

    def grad(self, x):
        x = _as_points(x, self.dim)
        _check_nonzero(x, "polar gradient")
        _, arg = _support_maximize(self.base, x)
        return arg

    def dual_value(self, x):
        # polar of the polar recovers the original gauge
        return self.base.value(x)

    def dual_grad(self, x):
        return self.base.grad(x)

    def dual(self):
        return self.base

    def spec_items(self):
        items = dict(self.base.spec_items())
        items["family"] = f"dual-of-{items['family']}"
        return items


def _support_maximize(gauge, x, restarts=32, tol=1e-10, max_iter=400, seed=7):
    """max <x, xi> over {F(xi) = 1} by projected ascent with restarts.

    Returns (values, argmax points), batched over the leading shape of x.
    Raises DualMaximizationError if the first-order condition fails to reach
    tolerance for some row after all restarts.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    m, dim = pts.shape
    xnorm = np.linalg.norm(pts, axis=-1)
    live = xnorm > _ZERO_TOL
    best_val = np.zeros(m)
    best_arg = np.tile(np.eye(dim)[0], (m, 1))
    resid = np.full(m, np.inf)
    rng = np.random.default_rng(seed)

    starts = [pts.copy()]
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        starts.append(np.tile(e, (m, 1)) * np.sign(pts[:, j:j + 1] + 0.5))
    while len(starts) < restarts:
        starts.append(rng.standard_normal((m, dim)))

    for s0 in starts[:restarts]:
        xi = np.where(np.linalg.norm(s0, axis=-1, keepdims=True) > _ZERO_TOL,
                      s0, np.eye(dim)[0])
        xi = xi / gauge.value(xi)[..., None]
        step = np.full(m, 1.0)
        val = np.sum(pts * xi, axis=-1)
        for _ in range(max_iter):
            n = gauge.grad(xi)
            proj = np.sum(pts * n, axis=-1) / np.sum(n * n, axis=-1)
            d = pts - proj[..., None] * n
            dn = np.linalg.norm(d, axis=-1)
            active = live & (dn > tol * np.maximum(xnorm, 1e-30))
            if not np.any(active):
                break
            # backtracking radial-projection ascent on the active rows
            improved = ~active
            for _bt in range(40):
                trial = xi + (step * active)[..., None] * d
                trial = trial / gauge.value(trial)[..., None]
                tval = np.sum(pts * trial, axis=-1)
                good = active & ~improved & (tval > val)
                xi[good] = trial[good]
                val[good] = tval[good]
                improved |= good
                if np.all(improved):
                    break
                step = np.where(active & ~improved, step * 0.5, step)
            step = np.minimum(step * 2.0, 1.0)
            if not np.any(improved & active):
                break
        # first-order optimality: x = F0(x) gradF(xi*)
        n = gauge.grad(xi)
        r = np.linalg.norm(pts - val[..., None] * n, axis=-1) / np.maximum(xnorm, 1e-30)
        take = live & (val > best_val)
        best_val = np.where(take, val, best_val)
        best_arg = np.where(take[..., None], xi, best_arg)
        resid = np.where(take, r, np.minimum(resid, r))
        if np.all(resid[live] <= 1e3 * tol) and np.all(best_val[live] > 0):
            break

    bad = live & (resid > 1e-6)
    if np.any(bad):
        # polish stubborn rows with a derivative-free search on directions
        for i in np.flatnonzero(bad):
            xi = _nm_support_polish(gauge, pts[i], best_arg[i])
            val = float(np.dot(pts[i], xi))
            if val > best_val[i]:
                best_val[i] = val
                best_arg[i] = xi
            n = gauge.grad(xi)
            resid[i] = np.linalg.norm(pts[i] - val * n) / max(xnorm[i], 1e-30)
        bad = live & (resid > 1e-6)
    if np.any(bad):
        i = int(np.argmax(resid))
        gap = xnorm[i] / gauge.a - best_val[i]
        raise DualMaximizationError(best_val[i], gap)
    if single:
        return float(best_val[0]), best_arg[0]
    return best_val, best_arg


def _nm_support_polish(gauge, x, xi0):
    def neg_support(eta):
        nrm = np.linalg.norm(eta)
        if nrm < _ZERO_TOL:
            return 0.0
        eta = eta / nrm
        return -float(np.dot(x, eta) / gauge.value(eta))

    res = optimize.minimize(neg_support, xi0, method="Nelder-Mead",
                            options={"xatol": 1e-13, "fatol": 1e-15,
                                     "maxiter": 4000})
    xi = res.x / gauge.value(res.x)
    return xi


# -- flux monotonicity constant ---------------------------------------------


@dataclass
class MonotonicityConstant:
    """Estimated infimum of the flux monotonicity quotient d_{X,Y}."""

    d0_estimate: float
    sample_count: int
    argmin_pair: tuple = field(default=None)

    def as_dict(self):
        X, Y = self.argmin_pair
        return {"d0": self.d0_estimate, "samples": self.sample_count,
                "argmin_X": list(map(float, X)), "argmin_Y": list(map(float, Y))}


def monotonicity_quotient(gauge, X, Y):
    """d_{X,Y} = <flux(X) - flux(Y), X - Y> / F(X - Y)^N, batched."""
    X = _as_points(X, gauge.dim)
    Y = _as_points(Y, gauge.dim)
    num = np.sum((gauge.flux(X) - gauge.flux(Y)) * (X - Y), axis=-1)
    den = gauge.value(X - Y) ** gauge.dim
    return num / den


def estimate_d0(gauge, samples=1_000_000, refine_count=100, seed=0,
                batch=1 << 17):
    """Estimate inf d_{X,Y} by scale-reduced random sampling plus local descent.

    Joint rescaling leaves d invariant, so X is drawn on {F = 1} and Y inside
    the unit F-ball; the reported value is an upper bound for the infimum over
    that search class, with the argmin pair kept for audit.
    """
    rng = np.random.default_rng(seed)
    dim = gauge.dim
    keep = max(refine_count, 1)
    top_vals = np.full(keep, np.inf)
    top_X = np.zeros((keep, dim))
    top_Y = np.zeros((keep, dim))
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        done += m
        X = rng.standard_normal((m, dim))
        X /= gauge.value(X)[..., None]
        Z = rng.standard_normal((m, dim))
        Z /= gauge.value(Z)[..., None]
        Y = Z * rng.uniform(0.0, 1.0, m)[:, None] ** (1.0 / dim)
        ok = (np.linalg.norm(Y, axis=-1) > 1e-9) & \
             (np.linalg.norm(X - Y, axis=-1) > 1e-9)
        d = np.where(ok, _quotient_guarded(gauge, X, Y, ok), np.inf)
        vals = np.concatenate([top_vals, d])
        Xs = np.concatenate([top_X, X])
        Ys = np.concatenate([top_Y, Y])
        idx = np.argpartition(vals, keep - 1)[:keep]
        top_vals, top_X, top_Y = vals[idx], Xs[idx], Ys[idx]

    def objective(z):
        X, Y = z[:dim], z[dim:]
        if (np.linalg.norm(X) < 1e-8 or np.linalg.norm(Y) < 1e-8
                or np.linalg.norm(X - Y) < 1e-8):
            return 1e6
        return monotonicity_quotient(gauge, X, Y)

    best = np.min(top_vals)
    best_pair = (top_X[np.argmin(top_vals)], top_Y[np.argmin(top_vals)])
    order = np.argsort(top_vals)[:refine_count]
    for i in order:
        if not np.isfinite(top_vals[i]):
            continue
        res = optimize.minimize(objective, np.concatenate([top_X[i], top_Y[i]]),
                                method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12,
                                         "maxiter": 2000})
        if res.fun < best:
            best = res.fun
            best_pair = (res.x[:dim].copy(), res.x[dim:].copy())
    return MonotonicityConstant(float(best), int(samples), best_pair)


def _quotient_guarded(gauge, X, Y, ok):
    Xs = np.where(ok[:, None], X, np.eye(gauge.dim)[0])
    Ys = np.where(ok[:, None], Y, 2 * np.eye(gauge.dim)[0])
    return monotonicity_quotient(gauge, Xs, Ys)


# -- compatibility condition for the spherical mean-value property ------------


@dataclass
class MvpConditionReport:
    holds: bool
    worst_residual: float
    witness: tuple

    def as_dict(self):
        x, y = self.witness
        return {"holds": self.holds, "worst_residual": self.worst_residual,
                "witness_x": list(map(float, x)), "witness_y": list(map(float, y))}


def check_mvp_condition(gauge, sample_count=200, seed=0, tol=1e-8):
    """Test <gradF(x), gradF0(y)> == <x,y> / (F(x)^(N-1) F0(y)) at random pairs.

    This compatibility identity gates the spherical/ball mean-value property
    of gauge-harmonic functions; it fails for the euclidean gauge in dimension
    N > 2 (both sides differ by the factor |x|^(N-2)).
    """
    rng = np.random.default_rng(seed)
    dim = gauge.dim
    scales = np.array([0.5, 1.0, 2.0, 4.0])
    worst = -1.0
    witness = None
    for _ in range(max(1, sample_count // 8)):
        x = rng.standard_normal((8, dim))
        y = rng.standard_normal((8, dim))
        x *= rng.choice(scales, 8)[:, None] / np.linalg.norm(x, axis=-1, keepdims=True)
        y *= rng.choice(scales, 8)[:, None] / np.linalg.norm(y, axis=-1, keepdims=True)
        lhs = np.sum(gauge.grad(x) * gauge.dual_grad(y), axis=-1)
        rhs = (np.sum(x * y, axis=-1)
               / (gauge.value(x) ** (dim - 1) * gauge.dual_value(y)))
        res = np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))
        i = int(np.argmax(res))
        if res[i] > worst:
            worst = float(res[i])
            witness = (x[i].copy(), y[i].copy())
    return MvpConditionReport(bool(worst <= tol), worst, witness)


# -- structural property audit ------------------------------------------------


def verify_norm_properties(gauge, sample_count=200, seed=0):
    """Audit the structural gauge identities at random samples.

    Returns a list of {property, worst_violation, witness} dicts, one per
    checked identity; a violation of 0 means the property held everywhere.
    """
    rng = np.random.default_rng(seed)
    dim = gauge.dim
    xs = rng.standard_normal((sample_count, dim))
    xs *= np.exp(rng.uniform(-2, 2, sample_count))[:, None]
    ys = rng.standard_normal((sample_count, dim))
    ts = rng.uniform(-3, 3, sample_count)
    ts[np.abs(ts) < 0.1] = 0.5

    f = gauge.value(xs)
    g = gauge.grad(xs)
    report = []

    def add(name, viol, idx):
        report.append({
            "property": name,
            "worst_violation": float(max(0.0, viol[idx])),
            "witness": list(map(float, xs[idx])),
        })

    hom = np.abs(gauge.value(ts[:, None] * xs) - np.abs(ts) * f) / f
    add("homogeneity", hom, int(np.argmax(hom)))

    even = np.abs(gauge.value(-xs) - f) / f
    add("evenness", even, int(np.argmax(even)))

    fy = gauge.value(ys)
    fxy = gauge.value(xs + ys)
    tri = np.maximum(fxy - f - fy, np.abs(f - fy) - fxy) / np.maximum(f + fy, 1e-30)
    add("triangle_inequality", tri, int(np.argmax(tri)))

    gb = np.linalg.norm(g, axis=-1) - gauge.b * (1 + 1e-9)
    add("gradient_bound", gb, int(np.argmax(gb)))

    euler = np.abs(np.sum(xs * g, axis=-1) - f) / f
    d0v = gauge.dual_value(xs)
    dg = gauge.dual_grad(xs)
    euler_dual = np.abs(np.sum(xs * dg, axis=-1) - d0v) / d0v
    euler = np.maximum(euler, euler_dual)
    add("euler_identity", euler, int(np.argmax(euler)))

    pol = np.abs(gauge.value(dg) - 1.0)
    pol_dual = np.abs(gauge.dual_value(g) - 1.0)
    pol = np.maximum(pol, pol_dual)
    add("polarity", pol, int(np.argmax(pol)))

    sign = np.linalg.norm(gauge.grad(ts[:, None] * xs) - np.sign(ts)[:, None] * g,
                          axis=-1)
    add("gradient_sign_rule", sign, int(np.argmax(sign)))

    inv = np.linalg.norm(d0v[:, None] * gauge.grad(dg) - xs, axis=-1) \
        / np.linalg.norm(xs, axis=-1)
    add("polar_inversion", inv, int(np.argmax(inv)))

    norms = np.linalg.norm(xs, axis=-1)
    equiv = np.maximum(gauge.a * norms - f, f - gauge.b * norms) / norms
    add("norm_equivalence", equiv, int(np.argmax(equiv)))

    try:
        eigs = np.linalg.eigvalsh(gauge.hess_half_F2(xs))
        pd = -eigs.min(axis=-1)
        add("hessian_positive_definite", pd, int(np.argmax(pd)))
    except GaugeError:
        pass
    return report


# -- gauge spec parsing --------------------------------------------------------


def parse_gauge_spec(text):
    """Build a gauge from a key=value descriptor.

    Pairs are separated by newlines, ';' or ','; vector values use ':'.
    Keys: family, dimension, weights, p, s.  Examples:
        family=euclidean;dimension=2
        family=diagonal;weights=1:4
        family=pnorm;dimension=2;p=4
        family=smoothed-pnorm;dimension=2;p=4;s=0.1
    """
    items = {}
    for chunk in text.replace("\n", ";").replace(",", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise GaugeError(f"malformed gauge spec item {chunk!r}")
        k, v = chunk.split("=", 1)
        items[k.strip().lower()] = v.strip()
    family = items.get("family", "euclidean").lower()
    dim = int(items.get("dimension", 2))
    if family == "euclidean":
        return EuclideanGauge(dim)
    if family == "diagonal":
        if "weights" not in items:
            raise GaugeError("diagonal gauge spec needs weights=w1:w2:...")
        w = [float(t) for t in items["weights"].split(":")]
        return DiagonalGauge(w)
    if family == "pnorm":
        return PNormGauge(float(items["p"]), dim)
    if family in ("smoothed-pnorm", "smoothed_pnorm"):
        return SmoothedPNormGauge(float(items["p"]), float(items.get("s", 0.1)), dim)
    raise GaugeError(f"unknown gauge family {family!r}")
