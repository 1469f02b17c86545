import numpy as np
import pytest

from finsler_liouville.blowup import (BlowupConfig, BlowupError,
                                      alpha_formula, beta_constant,
                                      classify_trichotomy, detect_blowup_set,
                                      difference_integrability_check,
                                      exp_integrability_check,
                                      extract_blowup_mass,
                                      invert_pohozaev_left, local_mass,
                                      pohozaev_terms, richardson_limit)
from finsler_liouville.exact import bubble_family, green_wulff_ball
from finsler_liouville.grid import Domain, ScalarField
from finsler_liouville.solver import solve_poisson


def test_constants_closed_forms():
    assert beta_constant(2, np.pi) == pytest.approx(4 * np.pi, rel=1e-15)
    assert alpha_formula(2, np.pi) == pytest.approx(8 * np.pi, rel=1e-15)
    assert alpha_formula(2, 2 * np.pi) == pytest.approx(16 * np.pi, rel=1e-15)
    assert alpha_formula(3, 4 * np.pi / 3) == pytest.approx(9.104365070869333,
                                                            rel=1e-12)
    with pytest.raises(ValueError):
        beta_constant(2, -1.0)


def bubble_sequence(gauge, geom, domain, exponents, center=None):
    seq = []
    for e in exponents:
        b = bubble_family(gauge, 1.0, 2.0 ** e, center=center, geometry=geom)
        seq.append((ScalarField.from_callable(domain, b, grad_fn=b.gradient),
                    1.0))
    return seq


def test_exp_integrability_disk(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 96)
    u, rep = solve_poisson(dom, euclid2, 1.0, 0.0)
    beta = beta_constant(2, geom_euclid2.volume_constant)
    chk = exp_integrability_check(u, 1.0, [0.25 * beta, 0.75 * beta], euclid2,
                                  geometry=geom_euclid2)
    assert chk["all_ok"]
    # RHS is monotone decreasing in delta while LHS stays below it
    rows = chk["rows"]
    assert rows[0]["rhs"] > rows[1]["rhs"]
    assert all(r["lhs"] <= r["rhs"] for r in rows)
    with pytest.raises(ValueError):
        exp_integrability_check(u, 1.0, [2 * beta], euclid2,
                                geometry=geom_euclid2)


def test_difference_integrability_near_equal_fields(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 96)
    u, _ = solve_poisson(dom, euclid2, 1e-6, 0.0)
    v = ScalarField.zeros(dom)
    beta = beta_constant(2, geom_euclid2.volume_constant)
    chk = difference_integrability_check(u, v, 1e-6, [0.5 * beta], euclid2,
                                         d0=1.0, geometry=geom_euclid2)
    # u ~ v, so the integral is just |Omega|, far below the bound
    row = chk["rows"][0]
    assert row["lhs"] == pytest.approx(dom.measure, rel=1e-3)
    assert row["lhs"] <= row["rhs"]


def test_local_mass_flat_field(euclid2, geom_euclid2):
    dom = Domain.box(((-1.0, -1.0), (1.0, 1.0)), 128)
    u = ScalarField.zeros(dom)
    r = 0.5
    got = local_mass(u, 1.0, (0.0, 0.0), r, euclid2, geometry=geom_euclid2)
    assert got == pytest.approx(np.pi * r ** 2, abs=4 * dom.h * r)


def test_local_mass_bubble_concentration(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 128)
    masses = []
    for lam in (8.0, 32.0, 128.0):
        b = bubble_family(euclid2, 1.0, lam, geometry=geom_euclid2)
        u = ScalarField.from_callable(dom, b, grad_fn=b.gradient)
        masses.append(local_mass(u, 1.0, (0.0, 0.0), 0.25, euclid2,
                                 geometry=geom_euclid2))
    assert masses[-1] == pytest.approx(8 * np.pi, rel=2e-3)
    assert masses[0] < masses[1] < masses[2]
    # far from the core the mass vanishes as lam grows
    b = bubble_family(euclid2, 1.0, 128.0, geometry=geom_euclid2)
    u = ScalarField.from_callable(dom, b, grad_fn=b.gradient)
    far = local_mass(u, 1.0, (0.6, 0.0), 0.2, euclid2, geometry=geom_euclid2)
    assert far <= 0.01 * 8 * np.pi


def test_detect_single_bubble(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 192)
    seq = bubble_sequence(euclid2, geom_euclid2, dom, [2, 3, 4, 5, 6])
    rep = detect_blowup_set(seq, euclid2, q_conj=1.0, geometry=geom_euclid2)
    assert rep.label == "concentration"
    assert len(rep.points) == 1
    assert np.linalg.norm(rep.points[0]) <= 2 * dom.h
    assert rep.masses[0] == pytest.approx(8 * np.pi, rel=0.02)
    # threshold consistency and mass conservation
    assert rep.gamma == beta_constant(2, geom_euclid2.volume_constant) * rep.d0
    assert sum(rep.masses) <= rep.total_mass + 1e-6


def test_detect_trichotomy_labels(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 96)
    consts = [(ScalarField.constant(dom, -float(n)), 1.0) for n in range(1, 8)]
    assert classify_trichotomy(consts, euclid2, geometry=geom_euclid2) == \
        "uniform-minus-infinity"
    fixed = ScalarField.from_callable(
        dom, lambda p: 1.0 - np.sum(p ** 2, axis=-1))
    assert classify_trichotomy([(fixed, 1.0)] * 4, euclid2,
                               geometry=geom_euclid2) == "bounded"
    with pytest.raises(BlowupError):
        detect_blowup_set([(fixed, 1.0)] * 2, euclid2, geometry=geom_euclid2)


def test_detect_two_bubbles(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 192)
    p1, p2 = np.array([0.45, 0.0]), np.array([-0.45, 0.0])
    seq = []
    for e in (2, 3, 4, 5, 6):
        b1 = bubble_family(euclid2, 1.0, 2.0 ** e, center=p1)
        b2 = bubble_family(euclid2, 1.0, 2.0 ** e, center=p2)
        fn = lambda p, b1=b1, b2=b2: np.logaddexp(b1(p), b2(p))
        seq.append((ScalarField.from_callable(dom, fn), 1.0))
    rep = detect_blowup_set(seq, euclid2, q_conj=1.0,
                            config=BlowupConfig(r0=0.3),
                            geometry=geom_euclid2)
    assert rep.label == "concentration"
    assert len(rep.points) == 2
    for m in rep.masses:
        assert m == pytest.approx(8 * np.pi, rel=0.03)


def test_pohozaev_affine_field(euclid2, geom_euclid2):
    dom = Domain.box(((-1.0, -1.0), (1.0, 1.0)), 64)
    u = ScalarField.from_callable(
        dom, lambda p: 0.5 + 2.0 * p[:, 0] - p[:, 1],
        grad_fn=lambda p: np.tile([2.0, -1.0], (len(p), 1)))
    br = pohozaev_terms(u, None, 0.5, euclid2, geometry=geom_euclid2)
    assert np.isfinite(br.left_flux_term) and np.isfinite(br.left_energy_term)
    assert br.right == 0.0
    assert abs(br.identity_residual) <= 1e-9


def test_pohozaev_identity_on_bubble(euclid2, geom_euclid2):
    b = bubble_family(euclid2, 1.0, 64.0, geometry=geom_euclid2)
    for eps in (0.4, 0.1):
        br = pohozaev_terms(b, 1.0, eps, euclid2, geometry=geom_euclid2)
        # genuine solution: boundary flux terms balance the volume terms
        assert br.identity_residual == pytest.approx(0.0, abs=1e-6 * abs(br.left))
    assert br.left == pytest.approx(-16 * np.pi, rel=0.06)


def test_pohozaev_green_left_side(euclid2, geom_euclid2):
    alpha = 8 * np.pi
    G = green_wulff_ball(euclid2, 1.0, mass=alpha, geometry=geom_euclid2)
    k = geom_euclid2.volume_constant
    closed = -(2 - 1) * k * (alpha / (2 * k)) ** 2
    lefts = []
    for eps in (0.4, 0.2, 0.1):
        br = pohozaev_terms(G, None, eps, euclid2, geometry=geom_euclid2)
        lefts.append(br.left)
        assert br.left == pytest.approx(closed, rel=1e-9)
    limit = richardson_limit([0.4, 0.2, 0.1], lefts)
    assert limit == pytest.approx(closed, rel=1e-9)
    assert invert_pohozaev_left(limit, 2, k) == pytest.approx(alpha, rel=1e-9)


def test_pohozaev_grid_radius_guard(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 32)
    u = ScalarField(dom, np.zeros(dom.node_shape))
    with pytest.raises(BlowupError):
        pohozaev_terms(u, None, 2 * dom.h, euclid2, geometry=geom_euclid2)


def test_richardson_limit_cases():
    assert richardson_limit([0.4, 0.2, 0.1], [-5.0, -5.0, -5.0]) == -5.0
    # classical second-order decay c eps^2
    vals = [-5.0 + 0.16, -5.0 + 0.04, -5.0 + 0.01]
    assert richardson_limit([0.4, 0.2, 0.1], vals) == pytest.approx(-5.0)
    # inverse-square deviation (concentration tails)
    vals = [-5.0 + 1 / 0.16, -5.0 + 1 / 0.04, -5.0 + 1 / 0.01]
    assert richardson_limit([0.4, 0.2, 0.1], vals) == pytest.approx(-5.0)


def test_extract_blowup_mass_single(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 192)
    seq = bubble_sequence(euclid2, geom_euclid2, dom, [2, 3, 4, 5, 6])
    ext = extract_blowup_mass(seq, euclid2, geometry=geom_euclid2)
    assert ext.rel_gap_local <= 0.02
    assert ext.rel_gap_pohozaev <= 0.02
    assert ext.alpha_closed_form == pytest.approx(8 * np.pi)


def test_extract_requires_single_point(euclid2, geom_euclid2):
    dom = Domain.wulff_ball(euclid2, 1.0, 96)
    fixed = ScalarField.from_callable(
        dom, lambda p: 1.0 - np.sum(p ** 2, axis=-1))
    with pytest.raises(BlowupError):
        extract_blowup_mass([(fixed, 1.0)] * 3, euclid2, geometry=geom_euclid2)
