import numpy as np
import pytest

from finsler_liouville.grid import (Domain, ScalarField, anisotropic_perimeter,
                                    anisotropic_tv, discrete_gradient,
                                    distribution_function, integrate,
                                    level_set_perimeter, load_field,
                                    node_to_cell, save_field)


def unit_box(res=64):
    return Domain.box(((0.0, 0.0), (1.0, 1.0)), res)


def test_box_measure_exact():
    dom = Domain.box(((0.0, 0.0), (2.0, 1.0)), (128, 64))
    assert dom.measure == pytest.approx(2.0, rel=1e-12)
    assert dom.h == pytest.approx(1.0 / 64)


def test_wulff_mask_volume_first_order(euclid2):
    for res in (64, 128):
        dom = Domain.wulff_ball(euclid2, 1.0, res)
        assert abs(dom.measure - np.pi) <= 3 * dom.h


def test_node_masks_box():
    dom = unit_box(8)
    assert dom.node_interior.sum() == 7 * 7
    assert dom.node_boundary.sum() == 9 * 9 - 7 * 7
    assert dom.node_weights().sum() == pytest.approx(dom.measure)


def test_gradient_affine_exact():
    dom = unit_box(32)
    u = ScalarField.from_callable(dom, lambda p: 2.0 * p[:, 0] - 0.5 * p[:, 1])
    g = discrete_gradient(u)
    assert np.abs(g - np.array([2.0, -0.5])).max() <= 1e-12
    c = ScalarField.constant(dom, 3.3)
    assert np.abs(discrete_gradient(c)).max() == 0.0


def test_gradient_refinement_first_order():
    errs = []
    for res in (32, 64, 128):
        dom = unit_box(res)
        u = ScalarField.from_callable(dom, lambda p: 0.5 * np.sum(p * p, axis=-1))
        g = discrete_gradient(u)
        exact = dom.cell_centers()
        errs.append(np.abs(g - exact).max())
    assert errs[1] <= 0.6 * errs[0] + 1e-14
    assert errs[2] <= 0.6 * errs[1] + 1e-14


def test_integrate_basics(euclid2):
    dom = unit_box(32)
    assert integrate(ScalarField.constant(dom, 1.0)) == pytest.approx(1.0)
    assert integrate(ScalarField.from_callable(
        dom, lambda p: np.exp(0.0 * p[:, 0]))) == pytest.approx(1.0)
    ball = Domain.wulff_ball(euclid2, 1.0, 128)
    assert integrate(ScalarField.constant(ball, 1.0)) == \
        pytest.approx(np.pi, abs=3 * ball.h)


def test_distribution_function_two_level():
    dom = unit_box(64)
    u = ScalarField.from_callable(
        dom, lambda p: 2.0 * ((p[:, 0] <= 0.5) & (p[:, 1] <= 0.5)))
    prof = distribution_function(u, [0.5, 1.2, 1.9, 2.0, 2.5])
    band = 2 * dom.h  # one smeared cell layer along the interface
    assert abs(prof.measures[0] - 0.25) <= band
    assert abs(prof.measures[1] - 0.25) <= band
    assert prof.measures[3] == 0.0
    assert prof.measures[4] == 0.0
    zero = distribution_function(ScalarField.constant(dom, 0.0), [0.0, 1.0])
    assert np.all(zero.measures == 0.0)


def test_distribution_function_radial_oracle(euclid2):
    # u = 1 - F0 on the unit Wulff ball: mu(t) = k (1-t)^N
    dom = Domain.wulff_ball(euclid2, 1.0, 192)
    u = ScalarField.from_callable(
        dom, lambda p: np.maximum(1.0 - np.linalg.norm(p, axis=-1), 0.0))
    ts = np.array([0.1, 0.3, 0.5, 0.7])
    prof = distribution_function(u, ts)
    oracle = np.pi * (1 - ts) ** 2
    assert np.abs(prof.measures - oracle).max() <= 2 * np.pi * 2 * dom.h


def test_perimeter_unit_square(euclid2):
    dom = Domain.box(((-1.5, -1.5), (1.5, 1.5)), 192)
    cc = dom.cell_centers()
    E = (np.abs(cc[..., 0]) < 0.5) & (np.abs(cc[..., 1]) < 0.5)
    per = anisotropic_perimeter(E, dom, euclid2)
    assert abs(per - 4.0) <= 4 * dom.h


@pytest.mark.parametrize("gauge_name", ["euclid2", "diag14", "pnorm4"])
def test_perimeter_wulff_ball_equality(gauge_name, request):
    gauge = request.getfixturevalue(gauge_name)
    from finsler_liouville.wulff import WulffGeometry
    geom = WulffGeometry(gauge)
    half = 1.4 * gauge.b
    dom = Domain.box(((-half, -half), (half, half)), 224)
    cc = dom.cell_centers().reshape(-1, 2)
    E = (gauge.dual_value(cc) <= 1.0).reshape(dom.cells)
    per = anisotropic_perimeter(E, dom, gauge)
    expected = gauge.dim * geom.volume_constant
    assert per == pytest.approx(expected, rel=3 * dom.h)


def test_tv_radial_cone(euclid2):
    # u = 1 - F0 on the unit ball has F(grad u) = 1, so TV = k
    dom = Domain.wulff_ball(euclid2, 1.0, 192)
    u = ScalarField.from_callable(
        dom, lambda p: np.maximum(1.0 - np.linalg.norm(p, axis=-1), 0.0))
    tv = anisotropic_tv(u, euclid2)
    assert tv == pytest.approx(np.pi, abs=4 * np.pi * dom.h)


def test_level_set_perimeter_smooth(euclid2):
    dom = Domain.box(((-1.5, -1.5), (1.5, 1.5)), 192)
    u = ScalarField.from_callable(
        dom, lambda p: np.maximum(1.0 - np.linalg.norm(p, axis=-1), 0.0))
    per = level_set_perimeter(u, 0.5, euclid2)
    assert per == pytest.approx(np.pi, rel=1e-3)


def test_field_io_roundtrip(tmp_path, euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 24)
    u = ScalarField.from_callable(dom, lambda p: np.sin(p[:, 0]) + p[:, 1])
    for fmt in ("csv", "bin"):
        path = str(tmp_path / f"u.{fmt}")
        save_field(u, path, fmt=fmt, gauge_id=euclid2.to_spec())
        back = load_field(path)
        assert np.allclose(back.values, u.values)
        assert back.domain.node_shape == dom.node_shape
        assert back.domain.measure == pytest.approx(dom.measure)


def test_boundary_trace_consistency():
    dom = unit_box(16)
    u = ScalarField.from_callable(dom, lambda p: p[:, 0])
    trace = u.boundary_trace()
    assert trace.size == dom.node_boundary.sum()
    assert trace.min() == pytest.approx(0.0)
    assert trace.max() == pytest.approx(1.0)


def test_node_to_cell_mean():
    vals = np.array([[0.0, 2.0], [4.0, 6.0]])
    assert node_to_cell(vals)[0, 0] == pytest.approx(3.0)
