import numpy as np
import pytest

from finsler_liouville.exact import bubble_family, radial_poisson_solution
from finsler_liouville.grid import Domain, ScalarField
from finsler_liouville.solver import (ContinuationError, SolverConfig, energy,
                                      harmonic_extension, residual,
                                      solve_liouville, solve_poisson)


def unit_box(res):
    return Domain.box(((0.0, 0.0), (1.0, 1.0)), res)


def test_energy_trivial_and_affine(euclid2):
    dom = unit_box(24)
    zero = ScalarField.zeros(dom)
    assert energy(zero, 0.0, euclid2) == 0.0
    u = ScalarField.from_callable(dom, lambda p: 3.0 * p[:, 0] + 4.0 * p[:, 1])
    # J = F^N(a)/N |Omega| with eps = 0
    assert energy(u, 0.0, euclid2, eps=0.0) == pytest.approx(12.5, rel=1e-12)


def test_residual_zero_for_affine(euclid2, diag14, smooth_p3):
    dom = unit_box(20)
    u = ScalarField.from_callable(dom, lambda p: 1.0 - 2.0 * p[:, 0] + p[:, 1])
    for gauge in (euclid2, diag14, smooth_p3):
        r = residual(u, 0.0, gauge)
        assert np.abs(r.values).max() <= 1e-10


def test_residual_is_energy_gradient(euclid2, smooth_p3, rng):
    dom = unit_box(10)
    w = dom.node_weights()
    f = ScalarField.from_callable(dom, lambda p: np.cos(2 * p[:, 0]) * p[:, 1])
    for gauge in (euclid2, smooth_p3):
        for _ in range(5):
            u = ScalarField(dom, rng.standard_normal(dom.node_shape))
            r = residual(u, f, gauge, eps=1e-3)
            ij = tuple(rng.integers(1, 9, 2))
            h = 1e-6
            up, um = u.values.copy(), u.values.copy()
            up[ij] += h
            um[ij] -= h
            fd = (energy(ScalarField(dom, up), f, gauge, eps=1e-3)
                  - energy(ScalarField(dom, um), f, gauge, eps=1e-3)) / (2 * h)
            assert r.values[ij] * w[ij] == pytest.approx(fd, rel=2e-4, abs=1e-9)


def test_trivial_short_circuit(euclid2):
    dom = unit_box(16)
    u, rep = solve_poisson(dom, euclid2, 0.0, 0.0)
    assert rep.converged and rep.residual_norm == 0.0
    assert np.abs(u.values).max() == 0.0


def test_affine_harmonic_extension(euclid2, smooth_p3):
    dom = unit_box(24)
    aff = lambda p: 0.3 + 1.7 * p[:, 0] - 0.9 * p[:, 1]
    for gauge in (euclid2, smooth_p3):
        u, rep = harmonic_extension(dom, gauge, aff, SolverConfig(tol=1e-10))
        assert rep.converged
        exact = ScalarField.from_callable(dom, aff)
        assert np.abs(u.values - exact.values)[dom.node_active].max() <= 1e-8


def test_poisson_disk_radial_oracle(euclid2):
    errs = {}
    for res in (48, 96):
        dom = Domain.wulff_ball(euclid2, 1.0, res)
        u, rep = solve_poisson(dom, euclid2, 1.0, 0.0)
        assert rep.converged
        pts = dom.node_points()
        exact = (1.0 - np.sum(pts ** 2, axis=-1)) / 4.0
        errs[res] = np.abs(u.values - exact)[dom.node_active].max()
        assert errs[res] <= 0.6 * dom.h
    assert errs[96] <= 0.65 * errs[48]


def test_poisson_wulff_ball_general_gauge(diag14, geom_diag14):
    # closed form: ((N-1)/N) (1/N)^(1/(N-1)) (1 - F0(x)^(N/(N-1)))
    dom = Domain.wulff_ball(diag14, 1.0, 96)
    u, rep = solve_poisson(dom, diag14, 1.0, 0.0)
    assert rep.converged
    pts = dom.node_points().reshape(-1, 2)
    exact = (1.0 - diag14.dual_value(pts) ** 2) / 4.0
    err = np.abs(u.values.reshape(-1) - exact)[dom.node_active.reshape(-1)]
    assert err.max() <= 0.8 * dom.h


def test_exact_radial_residual_refines(euclid2):
    errs = []
    for res in (48, 96):
        dom = Domain.wulff_ball(euclid2, 1.0, res)
        v = radial_poisson_solution(lambda r: np.ones_like(r), 1.0, 2)
        u = ScalarField.from_callable(
            dom, lambda p: v(np.linalg.norm(p, axis=-1)))
        r = residual(u, 1.0, euclid2)
        errs.append(np.abs(r.values[dom.node_interior]).max())
    assert errs[1] <= 0.6 * errs[0]


def test_energy_history_nonincreasing(smooth_p3, rng):
    dom = unit_box(48)
    f = ScalarField(dom, np.abs(rng.standard_normal(dom.node_shape)) + 0.5)
    u, rep = solve_poisson(dom, smooth_p3, f, 0.0)
    assert rep.converged
    hist = np.asarray(rep.energy_history)
    assert np.all(np.diff(hist) <= 1e-10 * np.abs(hist[0]))


def test_3d_poisson_radial_oracle(euclid3):
    dom = Domain.wulff_ball(euclid3, 1.0, 20)
    cfg = SolverConfig(tol=1e-6, eps=1e-6)
    u, rep = solve_poisson(dom, euclid3, 1.0, 0.0, cfg)
    assert rep.converged
    v = radial_poisson_solution(lambda r: np.ones_like(r), 1.0, 3)
    pts = dom.node_points().reshape(-1, 3)
    exact = v(np.linalg.norm(pts, axis=-1)).reshape(dom.node_shape)
    err = np.abs(u.values - exact)[dom.node_active].max()
    assert err <= 0.8 * dom.h


def test_3d_regularization_insensitivity(euclid3):
    # error is dominated by h once eps is small: shrinking eps further
    # cannot make it much worse
    dom = Domain.wulff_ball(euclid3, 1.0, 16)
    v = radial_poisson_solution(lambda r: np.ones_like(r), 1.0, 3)
    pts = dom.node_points().reshape(-1, 3)
    exact = v(np.linalg.norm(pts, axis=-1)).reshape(dom.node_shape)
    errs = []
    for eps in (1e-2, 1e-4, 1e-6):
        u, rep = solve_poisson(dom, euclid3, 1.0, 0.0,
                               SolverConfig(tol=1e-6, eps=eps))
        assert rep.converged
        errs.append(np.abs(u.values - exact)[dom.node_active].max())
    assert errs[2] <= errs[0] + 0.05 * dom.h
    assert abs(errs[2] - errs[1]) <= 0.1 * errs[1] + 1e-12


def test_liouville_zero_coefficient(euclid2):
    dom = unit_box(24)
    u, rep = solve_liouville(dom, euclid2, 0.0, 0.0)
    assert rep.converged
    assert np.abs(u.values).max() == 0.0
    with pytest.raises(ValueError):
        solve_liouville(dom, euclid2, -1.0, 0.0)


def test_liouville_small_load_linearization(euclid2):
    lam = 0.05
    dom = Domain.wulff_ball(euclid2, 1.0, 64)
    u, rep = solve_liouville(dom, euclid2, lam, 0.0)
    assert rep.converged
    pts = dom.node_points()
    lin = lam * (1.0 - np.sum(pts ** 2, axis=-1)) / 4.0
    err = np.abs(u.values - lin)[dom.node_active].max()
    assert err <= 3 * lam ** 2 + 2 * dom.h * lam


def test_liouville_reproduces_bubble(euclid2):
    b = bubble_family(euclid2, amplitude=1.0, lam=0.5)
    dom = Domain.wulff_ball(euclid2, 1.0, 64)
    u, rep = solve_liouville(dom, euclid2, 1.0, lambda p: b(p))
    assert rep.converged
    pts = dom.node_points().reshape(-1, 2)
    exact = b(pts).reshape(dom.node_shape)
    assert np.abs(u.values - exact)[dom.node_active].max() <= 2 * dom.h


def test_liouville_fold_detection(euclid2):
    # constant V = 4 on the unit disk lies past the fold (critical V* = 2)
    dom = Domain.wulff_ball(euclid2, 1.0, 48)
    with pytest.raises(ContinuationError) as err:
        solve_liouville(dom, euclid2, 4.0, 0.0,
                        SolverConfig(continuation_floor=4e-3))
    assert 0.4 <= err.value.last_load <= 0.6
    assert err.value.solution is not None


def test_nonconvergence_reports_not_raises(euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 48)
    u, rep = solve_poisson(dom, euclid2, 1.0, 0.0,
                           SolverConfig(tol=1e-30, max_iter=2,
                                        linear_solver="cg", cg_max_iter=5))
    assert not rep.converged
    assert "budget" in rep.message or "tolerance" in rep.message
