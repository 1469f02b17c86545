"""Energy-minimization solver for the anisotropic N-Laplacian.

Discretization: multilinear elements on the active cells with full tensor
2-point Gauss quadrature; the discrete residual is the exact gradient of the
discrete energy

    J(u) = sum_cells sum_q w_q [ (F^2(grad u) + eps^2)^(N/2) - eps^N ] / N
         - sum_nodes w_i f_i u_i,

so energy descent and gradient consistency hold by construction.  Newton
directions come from the positive-definite linearization D = d(flux)/d(xi)
(the integral-mean Hessian structure of the comparison argument, evaluated at
the current iterate); linear solves are matrix-free Jacobi-preconditioned CG,
with an assembled direct solve as a fast path for quadratic gauges in 2-D.
The exponential equation -Q_N u = V e^u is solved by damped Newton under
geometric load continuation toward the minimal branch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .gauges import DiagonalGauge, EuclideanGauge, FinslerGauge
from .grid import Domain, ScalarField

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolverError",
    "LineSearchError",
    "ContinuationError",
    "energy",
    "residual",
    "solve_poisson",
    "harmonic_extension",
    "solve_liouville",
    "as_field",
]


class SolverError(RuntimeError):
    pass


class LineSearchError(SolverError):
    """Line search stalled; a larger regularization eps usually fixes this."""


class ContinuationError(SolverError):
    """Load continuation stopped short of full load (expected near a fold)."""

    def __init__(self, last_load, solution, report):
        self.last_load = last_load
        self.solution = solution
        self.report = report
        super().__init__(
            f"continuation stalled at load fraction {last_load:.6g} "
            "(fold / critical-mass behavior)")


@dataclass
class SolverConfig:
    eps: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 60
    cg_tol: float = 1e-10
    cg_max_iter: int = 20000
    line_search_max: int = 40
    continuation_steps: int = 20
    continuation_start: float = 0.05
    continuation_floor: float = 1e-3
    linear_solver: str = "auto"  # auto | cg | direct
    eps_stages: bool = True      # warm-started eps continuation for degenerate cases
    verbose: bool = False


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residual_norm: float = math.inf
    energy_history: list = field(default_factory=list)
    message: str = ""
    detail: dict = field(default_factory=dict)

    def as_dict(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "residual_norm": self.residual_norm, "message": self.message,
                "energy_history": [float(v) for v in self.energy_history]}


def as_field(domain: Domain, value) -> ScalarField:
    """Coerce a constant, callable, array or field onto the domain's nodes."""
    if isinstance(value, ScalarField):
        if value.domain is not domain and value.domain.node_shape != domain.node_shape:
            raise ValueError("field lives on an incompatible domain")
        return value
    if callable(value):
        return ScalarField.from_callable(domain, value)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return ScalarField.constant(domain, float(arr))
    return ScalarField(domain, arr)


def _is_quadratic(gauge: FinslerGauge):
    return isinstance(gauge, (EuclideanGauge, DiagonalGauge))


class _Kernel:
    """Multilinear element tables and gather/scatter kernels on one domain."""

    def __init__(self, domain: Domain, gauge: FinslerGauge):
        self.domain = domain
        self.gauge = gauge
        dim = domain.dim
        self.dim = dim
        corners = list(itertools.product((0, 1), repeat=dim))
        self.corners = corners
        g = 0.5 / math.sqrt(3.0)
        pts1d = (0.5 - g, 0.5 + g)
        quads = list(itertools.product((0, 1), repeat=dim))
        nq, nc = len(quads), len(corners)
        sval = np.empty((nq, nc))
        sgrad = np.empty((nq, nc, dim))
        for qi, q in enumerate(quads):
            x = [pts1d[a] for a in q]
            for ci, c in enumerate(corners):
                val = 1.0
                for d in range(dim):
                    val *= x[d] if c[d] else 1.0 - x[d]
                sval[qi, ci] = val
                for d in range(dim):
                    dv = 1.0 if c[d] else -1.0
                    for dd in range(dim):
                        if dd != d:
                            dv *= x[dd] if c[dd] else 1.0 - x[dd]
                    sgrad[qi, ci, d] = dv / domain.h
        self.shape_val = sval
        self.shape_grad = sgrad
        self.quad_weight = domain.cell_volume / nq
        self.active = domain.active
        self.active_w = domain.active * self.quad_weight
        self.node_weights = domain.node_weights()
        self.interior_flat = np.flatnonzero(domain.node_interior.ravel())
        self.w_interior = self.node_weights.ravel()[self.interior_flat]

    # gather / scatter ------------------------------------------------------

    def _corner_stack(self, nodes):
        blocks = []
        for c in self.corners:
            sl = tuple(slice(o, o + n) for o, n in zip(c, self.domain.cells))
            blocks.append(nodes[sl])
        return np.stack(blocks, axis=-1)  # (cells..., nc)

    def grad_at_quads(self, nodes):
        stack = self._corner_stack(nodes)
        return np.einsum("...c,qcd->...qd", stack, self.shape_grad)

    def scatter(self, quantity):
        """Adjoint of grad_at_quads with the active quadrature weights folded in."""
        contrib = np.einsum("...qd,qcd->...c", quantity * self.active_w[..., None, None],
                            self.shape_grad)
        out = np.zeros(self.domain.node_shape)
        for ci, c in enumerate(self.corners):
            sl = tuple(slice(o, o + n) for o, n in zip(c, self.domain.cells))
            out[sl] += contrib[..., ci]
        return out

    # constitutive pieces ------------------------------------------------------

    def energy_value(self, nodes, f_nodes, eps):
        g = self.grad_at_quads(nodes)
        f2 = self.gauge.value(g) ** 2
        n = self.dim
        dens = ((f2 + eps * eps) ** (n / 2.0) - eps ** n) / n
        bulk = float(np.sum(dens * self.active_w[..., None]))
        load = float(np.sum(self.node_weights * f_nodes * nodes))
        return bulk - load

    def flux_at_quads(self, grads, eps):
        n = self.dim
        fval, fgrad = self.gauge.flux_parts(grads)
        return ((fval ** 2 + eps * eps) ** ((n - 2) / 2.0))[..., None] * fgrad

    def residual_nodes(self, nodes, f_nodes, eps):
        g = self.grad_at_quads(nodes)
        r = self.scatter(self.flux_at_quads(g, eps))
        return r - self.node_weights * f_nodes

    def hess_tensor(self, nodes, eps):
        """Pointwise flux Jacobian D at every quad point (PD wherever defined)."""
        g = self.grad_at_quads(nodes)
        n = self.dim
        fval, fgrad = self.gauge.flux_parts(g)
        s2 = fval ** 2 + eps * eps
        h2 = self.gauge.hess_half_F2_safe(g)
        D = (s2 ** ((n - 2) / 2.0))[..., None, None] * h2
        if n != 2:
            D = D + (n - 2) * (s2 ** ((n - 4) / 2.0))[..., None, None] \
                * fgrad[..., :, None] * fgrad[..., None, :]
        return D

    def hess_apply(self, D, nodes):
        g = self.grad_at_quads(nodes)
        return self.scatter(np.einsum("...qde,...qe->...qd", D, g))

    def hess_diag(self, D):
        Dw = D * self.active_w[..., None, None, None]
        out = np.zeros(self.domain.node_shape)
        for ci, c in enumerate(self.corners):
            sl = tuple(slice(o, o + n) for o, n in zip(c, self.domain.cells))
            out[sl] += np.einsum("...qde,qd,qe->...", Dw,
                                 self.shape_grad[:, ci, :], self.shape_grad[:, ci, :])
        return out

    # assembled operator for quadratic gauges --------------------------------------

    def _corner_node_ids(self):
        if not hasattr(self, "_corner_ids"):
            nodes_index = np.arange(np.prod(self.domain.node_shape)).reshape(
                self.domain.node_shape)
            ids = []
            for c in self.corners:
                sl = tuple(slice(o, o + nn) for o, nn in zip(c, self.domain.cells))
                ids.append(nodes_index[sl][self.active].ravel())
            self._corner_ids = ids
            self._n_nodes = nodes_index.size
        return self._corner_ids

    def assemble_quadratic(self, eps):
        """Sparse stiffness for quadratic gauges (constant flux Jacobian)."""
        from scipy import sparse
        n = self.dim
        if isinstance(self.gauge, DiagonalGauge):
            W = np.diag(self.gauge.weights)
        else:
            W = np.eye(n)
        element = np.einsum("qad,de,qbe->ab", self.shape_grad, W, self.shape_grad)
        element *= self.quad_weight
        corner_ids = self._corner_node_ids()
        rows, cols, data = [], [], []
        m = corner_ids[0].size
        for ci in range(len(self.corners)):
            for cj in range(len(self.corners)):
                rows.append(corner_ids[ci])
                cols.append(corner_ids[cj])
                data.append(np.full(m, element[ci, cj]))
        A = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self._n_nodes, self._n_nodes)).tocsr()
        return A

    def assemble_from_tensor(self, D):
        """Sparse linearization from the per-(cell, quad) flux Jacobian."""
        from scipy import sparse
        E = np.einsum("qad,...qde,qbe->...ab", self.shape_grad,
                      D * self.active_w[..., None, None, None], self.shape_grad)
        corner_ids = self._corner_node_ids()
        nc = len(self.corners)
        rows, cols, data = [], [], []
        for ci in range(nc):
            for cj in range(nc):
                rows.append(corner_ids[ci])
                cols.append(corner_ids[cj])
                data.append(E[..., ci, cj][self.active].ravel())
        return sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self._n_nodes, self._n_nodes)).tocsr()


def _pcg(apply_op, b, diag, tol, max_iter):
    """Jacobi-preconditioned CG; returns (x, info dict).

    Stops early with 'indefinite' if a non-positive curvature direction shows
    up (possible for the exponential linearization past the fold), returning
    the best iterate so far.
    """
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, {"iterations": 0, "indefinite": False}
    minv = 1.0 / np.maximum(diag, 1e-300)
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    info = {"indefinite": False, "iterations": 0}
    for it in range(max_iter):
        Hp = apply_op(p)
        pHp = float(p @ Hp)
        if pHp <= 0.0 or not np.isfinite(pHp):
            info["indefinite"] = True
            if it == 0:
                x = minv * b  # gradient-like fallback direction
            break
        alpha = rz / pHp
        x += alpha * p
        r -= alpha * Hp
        info["iterations"] = it + 1
        if np.linalg.norm(r) <= tol * bnorm:
            break
        z = minv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, info


class _Problem:
    """Shared Newton machinery over one domain/gauge pair."""

    def __init__(self, domain, gauge, config):
        self.kernel = _Kernel(domain, gauge)
        self.config = config
        self.domain = domain
        self.gauge = gauge
        self._direct = None
        self._interior_matrix = None

    def interior(self, nodes):
        return nodes.ravel()[self.kernel.interior_flat]

    def residual_density(self, r_flat):
        return float(np.max(np.abs(r_flat) / self.kernel.w_interior)) \
            if r_flat.size else 0.0

    def interior_matrix(self, eps):
        if self._interior_matrix is None:
            idx = self.kernel.interior_flat
            A = self.kernel.assemble_quadratic(eps)
            self._interior_matrix = A[idx][:, idx].tocsc()
        return self._interior_matrix

    def direct_factor(self, eps):
        if self._direct is None:
            from scipy.sparse.linalg import factorized
            self._direct = factorized(self.interior_matrix(eps))
        return self._direct

    def use_direct(self):
        cfg = self.config.linear_solver
        return cfg == "direct" or (cfg == "auto" and self.domain.dim == 2)

    def newton_step_dir(self, u, r_flat, eps, extra_diag=None):
        kernel = self.kernel
        idx = kernel.interior_flat
        if self.use_direct():
            from scipy import sparse
            from scipy.sparse.linalg import splu
            if _is_quadratic(self.gauge) and extra_diag is None:
                return -self.direct_factor(eps)(r_flat), {"direct": True}
            if _is_quadratic(self.gauge):
                H = self.interior_matrix(eps) - sparse.diags(extra_diag).tocsc()
            else:
                D = kernel.hess_tensor(u, eps)
                A = kernel.assemble_from_tensor(D)
                H = A[idx][:, idx].tocsc()
                if extra_diag is not None:
                    H = H - sparse.diags(extra_diag).tocsc()
            try:
                return -splu(H).solve(r_flat), {"direct": True}
            except RuntimeError:
                pass  # singular linearization at the fold: matrix-free fallback
        D = kernel.hess_tensor(u, eps)

        def apply_op(v_flat):
            v = np.zeros(self.domain.node_shape).ravel()
            v[idx] = v_flat
            out = kernel.hess_apply(D, v.reshape(self.domain.node_shape)).ravel()[idx]
            if extra_diag is not None:
                out = out - extra_diag * v_flat
            return out

        diag = kernel.hess_diag(D).ravel()[idx]
        if extra_diag is not None:
            diag = np.maximum(diag - extra_diag, 0.1 * diag)
        step, info = _pcg(apply_op, -r_flat, diag, self.config.cg_tol,
                          self.config.cg_max_iter)
        return step, info


def _initial_nodes(domain, g_field):
    nodes = np.zeros(domain.node_shape)
    bmask = domain.node_boundary
    gb = g_field.values[bmask]
    nodes[bmask] = gb
    if gb.size:
        nodes[domain.node_interior] = float(np.mean(gb))
    return nodes


def _eps_schedule(gauge, dim, eps, enabled):
    if not enabled or (_is_quadratic(gauge) and dim == 2):
        return [eps]
    stages = [s for s in (1e-1, 1e-2, 1e-3) if s > 10 * max(eps, 1e-12)]
    return stages + [eps]


def energy(u: ScalarField, f, gauge: FinslerGauge, eps=0.0):
    """Discrete energy J(u) = (1/N) int F_eps^N(grad u) - int f u."""
    kernel = _Kernel(u.domain, gauge)
    f_nodes = as_field(u.domain, f).values
    return kernel.energy_value(u.values, f_nodes, eps)


def residual(u: ScalarField, f, gauge: FinslerGauge, eps=0.0):
    """Residual density -Q_N^h u - f as a field (zero off interior nodes).

    This is the gradient of the discrete energy divided by the lumped node
    measure, so it vanishes at interior nodes exactly when u is a discrete
    solution.
    """
    kernel = _Kernel(u.domain, gauge)
    f_nodes = as_field(u.domain, f).values
    r = kernel.residual_nodes(u.values, f_nodes, eps)
    out = np.zeros_like(r)
    mask = u.domain.node_interior
    out[mask] = r[mask] / kernel.node_weights[mask]
    return ScalarField(u.domain, out)


def solve_poisson(domain: Domain, gauge: FinslerGauge, f, g=0.0,
                  config: SolverConfig = None):
    """Solve -Q_N u = f in Omega, u = g on the discrete boundary.

    Returns (field, report).  With f = 0 this is the gauge-harmonic extension
    of g.  Non-convergence within the iteration budget returns a report with
    converged=False; a stalled line search raises LineSearchError.
    """
    config = config or SolverConfig()
    f_field = as_field(domain, f)
    g_field = as_field(domain, g)
    report = SolveReport()
    if (np.all(f_field.values[domain.node_active] == 0.0)
            and np.all(g_field.values[domain.node_boundary] == 0.0)):
        report.converged = True
        report.residual_norm = 0.0
        report.message = "trivial problem: f = 0 with zero trace"
        return ScalarField(domain, np.zeros(domain.node_shape)), report

    problem = _Problem(domain, gauge, config)
    kernel = problem.kernel
    nodes = _initial_nodes(domain, g_field)
    f_nodes = f_field.values
    scale = max(1.0, float(np.max(np.abs(f_nodes[domain.node_active]))))
    tol_abs = config.tol * scale
    idx = kernel.interior_flat
    total_iters = 0

    for stage, stage_eps in enumerate(_eps_schedule(gauge, domain.dim,
                                                    config.eps,
                                                    config.eps_stages)):
        last = stage_eps == config.eps or stage_eps <= config.eps
        stage_tol = tol_abs if last else max(tol_abs, 1e-3 * scale)
        for _ in range(config.max_iter):
            r_full = kernel.residual_nodes(nodes, f_nodes, stage_eps)
            r_flat = r_full.ravel()[idx]
            res = problem.residual_density(r_flat)
            J = kernel.energy_value(nodes, f_nodes, stage_eps)
            if last:
                report.energy_history.append(J)
                report.residual_norm = res
            if res <= stage_tol:
                break
            total_iters += 1
            step, info = problem.newton_step_dir(nodes, r_flat, stage_eps)
            slope = float(r_flat @ step)
            if slope >= 0:
                step = -r_flat / kernel.w_interior
                slope = float(r_flat @ step)
            t = 1.0
            accepted = False
            for _ls in range(config.line_search_max):
                trial = nodes.copy()
                trial.ravel()[idx] += t * step
                J_t = kernel.energy_value(trial, f_nodes, stage_eps)
                if J_t <= J + 1e-4 * t * slope:
                    nodes = trial
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                raise LineSearchError(
                    "line search stalled; consider a larger regularization eps")
        else:
            if last:
                report.converged = False
                report.iterations = total_iters
                report.message = "Newton iteration budget exhausted"
                report.detail["achieved_residual"] = report.residual_norm
                return ScalarField(domain, nodes), report

    report.converged = report.residual_norm <= tol_abs
    report.iterations = total_iters
    report.message = "converged" if report.converged else "tolerance not met"
    return ScalarField(domain, nodes), report


def harmonic_extension(domain: Domain, gauge: FinslerGauge, g,
                       config: SolverConfig = None):
    """Gauge-harmonic extension: -Q_N v = 0 with v = g on the boundary."""
    return solve_poisson(domain, gauge, 0.0, g, config)


def _exp_clipped(nodes):
    # guards line-search overshoots; the minimal branch itself stays O(1)
    return np.exp(np.minimum(nodes, 80.0))


def solve_liouville(domain: Domain, gauge: FinslerGauge, V, g=0.0,
                    config: SolverConfig = None):
    """Solve -Q_N u = V e^u with Dirichlet data g on the minimal branch.

    Damped Newton under geometric continuation of the load s V, s -> 1.
    Near the fold (critical mass) continuation stalls by design and raises
    ContinuationError carrying the last convergent load fraction.
    """
    config = config or SolverConfig()
    V_field = as_field(domain, V)
    if np.any(V_field.values[domain.node_active] < 0):
        raise ValueError("Liouville coefficient V must be nonnegative")
    g_field = as_field(domain, g)
    if np.all(V_field.values[domain.node_active] == 0.0):
        return solve_poisson(domain, gauge, 0.0, g_field, config)

    problem = _Problem(domain, gauge, config)
    kernel = problem.kernel
    idx = kernel.interior_flat
    w_int = kernel.w_interior
    V_nodes = V_field.values
    report = SolveReport()
    total_iters = 0

    u, _ = solve_poisson(domain, gauge, 0.0, g_field, config)
    nodes = u.values.copy()

    def newton_at_load(nodes, s):
        nonlocal total_iters
        eps = config.eps
        for _ in range(config.max_iter):
            g_quads = kernel.grad_at_quads(nodes)
            r_full = kernel.scatter(kernel.flux_at_quads(g_quads, eps)) \
                - kernel.node_weights * s * V_nodes * _exp_clipped(nodes)
            r_flat = r_full.ravel()[idx]
            res = problem.residual_density(r_flat)
            forcing = s * V_nodes * _exp_clipped(nodes)
            scale = max(1.0, float(np.max(forcing[domain.node_active])))
            report.energy_history.append(0.5 * float(r_flat @ r_flat))
            if res <= config.tol * scale:
                return nodes, True
            total_iters += 1
            extra = (kernel.node_weights * s * V_nodes * _exp_clipped(nodes)).ravel()[idx]
            step, info = problem.newton_step_dir(nodes, r_flat, eps,
                                                 extra_diag=extra)
            merit = float(r_flat @ r_flat)
            t = 1.0
            accepted = False
            for _ls in range(config.line_search_max):
                trial = nodes.copy()
                trial.ravel()[idx] += t * step
                tg = kernel.grad_at_quads(trial)
                tr = kernel.scatter(kernel.flux_at_quads(tg, eps)) \
                    - kernel.node_weights * s * V_nodes * _exp_clipped(trial)
                tr_flat = tr.ravel()[idx]
                if float(tr_flat @ tr_flat) < merit * (1.0 - 1e-4 * t):
                    nodes = trial
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                return nodes, False
        return nodes, False

    targets = list(np.geomspace(config.continuation_start, 1.0,
                                config.continuation_steps))
    s_prev = 0.0
    best_nodes = nodes.copy()
    while s_prev < 1.0:
        s_try = next((t for t in targets if t > s_prev + 1e-15), 1.0)
        trial, ok = newton_at_load(best_nodes.copy(), s_try)
        if ok:
            s_prev = s_try
            best_nodes = trial
            targets = [t for t in targets if t > s_prev + 1e-15]
            continue
        # halve the load increment; give up below the floor
        inc = s_try - s_prev
        if inc <= config.continuation_floor:
            report.converged = False
            report.iterations = total_iters
            report.message = (f"continuation stalled at s={s_prev:.6g} "
                              "(fold) ")
            raise ContinuationError(s_prev, ScalarField(domain, best_nodes),
                                    report)
        targets = sorted(set(targets) | {s_prev + 0.5 * inc})

    g_quads = kernel.grad_at_quads(best_nodes)
    r_full = kernel.scatter(kernel.flux_at_quads(g_quads, config.eps)) \
        - kernel.node_weights * V_nodes * _exp_clipped(best_nodes)
    r_flat = r_full.ravel()[idx]
    report.residual_norm = problem.residual_density(r_flat)
    report.converged = True
    report.iterations = total_iters
    report.message = "converged at full load"
    return ScalarField(domain, best_nodes), report
