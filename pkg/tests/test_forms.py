import math

import numpy as np
import pytest

from ymstab.forms import (
    DegreeError,
    PFormField,
    add_forms,
    bochner_residual,
    commutation_residual,
    cov_jac,
    curvature,
    curvature_action,
    d_nabla,
    delta_nabla,
    delta_nabla_conformal,
    global_inner,
    hodge_laplacian,
    interior_product,
    pointwise_inner,
    pointwise_norm2,
    polynomial_form,
    rough_laplacian,
    scalar_times_form,
    zero_form,
)
from ymstab.geometry import (
    ScalarField,
    VectorField,
    conformal_sphere,
    flat_chart,
    grad_scalar,
    linear_restriction_jet,
    metric_components,
    metric_diag,
    orthonormal_frame,
    riemann_tensor,
    round_sphere,
    seeded_chart_points,
)
from ymstab.jets import jet_add, jet_const, jet_mul, jet_reciprocal, jet_norm2, jet_scale
from ymstab.liealg import StructureGroup, batch_inner, random_element
from ymstab.potentials import PolynomialPotential, RoundFramePotential, ZeroPotential

S3 = round_sphere(3)
SO3 = StructureGroup("SO", 3)


def phi_linear(w, scale=0.3):
    w = np.asarray(w, dtype=float)

    def jet_fn(pts, order):
        return jet_scale(linear_restriction_jet(np.atleast_2d(pts), w, order), scale)

    return ScalarField(fn=lambda pts: jet_fn(pts, 0).d[0], jet_fn=jet_fn)


def decay_scalar(rate=1.0):
    """exp(-rate |x|^2): kills chart-polynomial growth at the missing chart point."""
    from ymstab.jets import jet_exp

    def jet_fn(pts, order):
        pts = np.atleast_2d(pts)
        return jet_exp(jet_norm2(pts, order), -rate)

    return ScalarField(fn=lambda pts: jet_fn(pts, 0).d[0], jet_fn=jet_fn)


def smooth_polynomial_form(degree, group, geom, seed, rate=1.0):
    return scalar_times_form(decay_scalar(rate), polynomial_form(degree, group, geom, seed))


# ---------------------------------------------------------------------------
# curvature


def test_zero_potential_zero_curvature():
    pot = ZeroPotential(SO3, S3)
    pts = seeded_chart_points(S3, 10, seed=0)
    assert np.max(np.abs(curvature(pot)(pts))) == 0.0


def test_constant_commuting_potential_flat():
    # single algebra direction, constant coefficients, flat chart: dA = 0 and brackets vanish
    spec = flat_chart(3)
    xi = random_element(SO3, 5).entries

    class ConstPot(ZeroPotential):
        def val(self, pts):
            m = pts.shape[0]
            out = np.zeros((m, 3, 3, 3))
            for mu, c in enumerate((0.7, -0.4, 1.1)):
                out[:, mu] = c * xi
            return out

        def jac(self, pts):
            return np.zeros((pts.shape[0], 3, 3, 3, 3))

    pot = ConstPot(SO3, spec)
    pts = seeded_chart_points(spec, 8, seed=1)
    assert np.max(np.abs(curvature(pot)(pts))) < 1e-14


def test_frame_curvature_matches_riemann():
    # coordinate curvature of the frame connection vs g(R_M(d_mu, d_nu) E_b, E_a)
    for n in (3, 5):
        spec = round_sphere(n)
        pot = RoundFramePotential(spec)
        pts = seeded_chart_points(spec, 10, seed=2)
        Rpot = pot.curvature_val(pts)
        RM = riemann_tensor(spec, pts)
        fr = orthonormal_frame(spec, pts)
        g = metric_components(spec, pts)
        oracle = np.einsum("mbr,mlruv,mlk,mak->muvab", fr, RM, g, fr)
        scale = max(np.max(np.abs(oracle)), 1.0)
        assert np.max(np.abs(Rpot - oracle)) < 1e-6 * scale


# ---------------------------------------------------------------------------
# exterior derivative and codifferential


def test_d_squared_is_curvature_bracket():
    pot = PolynomialPotential(S3, SO3, seed=3, degree=2)
    sigma = polynomial_form(0, SO3, S3, seed=4)
    pts = seeded_chart_points(S3, 10, seed=5)
    dd = d_nabla(pot, d_nabla(pot, sigma))(pts)
    Rv = pot.curvature_val(pts)
    sv = sigma(pts)
    expect = Rv @ sv[:, None, None] - sv[:, None, None] @ Rv
    scale = max(np.max(np.abs(expect)), 1.0)
    assert np.max(np.abs(dd - expect)) < 1e-6 * scale


def test_bianchi_identity():
    # d^nabla R = 0 for every connection
    for seed in (6, 7):
        pot = PolynomialPotential(S3, SO3, seed=seed, degree=2)
        pts = seeded_chart_points(S3, 25, seed=8)
        dR = d_nabla(pot, curvature(pot))(pts)
        scale = max(np.max(np.abs(pot.curvature_val(pts))), 1.0)
        assert np.max(np.abs(dR)) < 1e-5 * scale


def test_exterior_derivative_flat_case():
    spec = flat_chart(2)
    group = SO3
    pot = ZeroPotential(group, spec)
    psi = polynomial_form(1, group, spec, seed=9)
    pts = seeded_chart_points(spec, 10, seed=10)
    got = d_nabla(pot, psi)(pts)
    jac = psi.jac(pts)
    expect = jac - jac.swapaxes(1, 2)
    assert np.max(np.abs(got - expect)) < 1e-9


def test_degree_cap():
    pot = ZeroPotential(SO3, S3)
    psi3 = zero_form(3, SO3, S3)
    with pytest.raises(DegreeError):
        d_nabla(pot, psi3)
    with pytest.raises(DegreeError):
        delta_nabla(pot, zero_form(0, SO3, S3))


def test_delta_adjointness_quadrature():
    # (d psi, omega) = (psi, delta omega) for decaying fields on S^2
    spec = round_sphere(2)
    group = StructureGroup("SO", 3)
    pot = PolynomialPotential(spec, group, seed=11, degree=1, scale=0.3)
    psi = smooth_polynomial_form(0, group, spec, seed=12)
    omega = smooth_polynomial_form(1, group, spec, seed=13)
    lhs = global_inner(d_nabla(pot, psi), omega).value
    rhs = global_inner(psi, delta_nabla(pot, omega)).value
    assert abs(lhs - rhs) < 2e-6 * max(abs(lhs), 1.0)


def test_delta_frame_independence():
    pot = PolynomialPotential(S3, SO3, seed=14, degree=2)
    omega = polynomial_form(2, SO3, S3, seed=15)
    pts = seeded_chart_points(S3, 6, seed=16)
    base = delta_nabla(pot, omega)(pts)
    rng = np.random.default_rng(17)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))

    def rotated_frame(p):
        fr = orthonormal_frame(S3, p)
        return np.einsum("ab,mbl->mal", q, fr)

    rotated = delta_nabla(pot, omega, frame_fn=rotated_frame)(pts)
    assert np.max(np.abs(base - rotated)) < 1e-10 * max(np.max(np.abs(base)), 1.0)


def test_delta_conformal_reductions():
    phi0 = ScalarField(fn=lambda pts: np.zeros(len(pts)),
                       jet_fn=lambda pts, order: jet_const(0.0, np.atleast_2d(pts).shape[0], np.atleast_2d(pts).shape[1], order))
    pot = PolynomialPotential(S3, SO3, seed=18, degree=2)
    omega = polynomial_form(2, SO3, S3, seed=19)
    pts = seeded_chart_points(S3, 8, seed=20)
    a = delta_nabla_conformal(pot, omega, phi0)(pts)
    b = delta_nabla(pot, omega)(pts)
    assert np.max(np.abs(a - b)) < 1e-12

    # 2p - n = 0: degree 2 on S^4 drops the interior-product correction
    s4 = round_sphere(4)
    so4 = StructureGroup("SO", 4)
    pot4 = PolynomialPotential(s4, so4, seed=21, degree=2)
    omega4 = polynomial_form(2, so4, s4, seed=22)
    phi = phi_linear(np.array([0.3, -0.2, 0.5, 0.1, 0.4]))
    pts4 = seeded_chart_points(s4, 6, seed=23)
    a4 = delta_nabla_conformal(pot4, omega4, phi)(pts4)
    b4 = delta_nabla(pot4, omega4)(pts4)
    expect = np.exp(-2.0 * phi(pts4))[:, None, None, None] * b4
    assert np.max(np.abs(a4 - expect)) < 1e-10


def test_delta_conformal_two_paths():
    # formula vs direct codifferential in the conformal metric
    n = 5
    w = np.zeros(n + 1)
    w[1] = 1.0
    phi = phi_linear(w, scale=0.3)
    base = round_sphere(n)
    conf = conformal_sphere(n, phi)
    group = StructureGroup("SO", 3)
    pot = PolynomialPotential(base, group, seed=24, degree=2)
    for degree, seed in ((1, 25), (2, 26)):
        psi = polynomial_form(degree, group, base, seed=seed)
        psi_conf = PFormField(degree, group, conf, psi.comp, jac_fn=psi.jac_fn)
        pts = seeded_chart_points(base, 10, seed=27)
        via_formula = delta_nabla_conformal(pot, psi, phi)(pts)
        direct = delta_nabla(pot, psi_conf)(pts)
        scale = max(np.max(np.abs(direct)), 1.0)
        assert np.max(np.abs(via_formula - direct)) < 1e-5 * scale


# ---------------------------------------------------------------------------
# interior product and inner products


def test_interior_product_nilpotent():
    psi = polynomial_form(2, SO3, S3, seed=28)
    X = VectorField(components=lambda pts: np.stack([pts[:, 0], 1.0 + pts[:, 1], pts[:, 2] ** 2], axis=1))
    pts = seeded_chart_points(S3, 8, seed=29)
    out = interior_product(X, interior_product(X, psi))(pts)
    assert np.max(np.abs(out)) < 1e-12


def test_interior_product_component_extraction():
    spec = flat_chart(2)
    group = SO3
    psi = polynomial_form(2, group, spec, seed=30)
    e1 = VectorField(components=lambda pts: np.stack([np.ones(len(pts)), np.zeros(len(pts))], axis=1))
    pts = seeded_chart_points(spec, 5, seed=31)
    got = interior_product(e1, psi)(pts)
    assert np.allclose(got, psi(pts)[:, 0])


def test_interior_gradient_cauchy_schwarz():
    pot = PolynomialPotential(S3, SO3, seed=32, degree=2)
    phi = phi_linear(np.array([0.2, -0.5, 0.3, 0.4]))
    R = curvature(pot)
    grad_field = VectorField(components=lambda pts: grad_scalar(S3, pts, phi))
    contracted = interior_product(grad_field, R)
    pts = seeded_chart_points(S3, 100, seed=33)
    lhs = pointwise_norm2(contracted, pts)
    g = metric_components(S3, pts)
    gphi = grad_scalar(S3, pts, phi)
    gphi2 = np.einsum("mij,mi,mj->m", g, gphi, gphi)
    rhs = 2.0 * gphi2 * pointwise_norm2(R, pts)
    assert np.all(lhs <= rhs + 1e-12)


def test_curvature_norm_constant_on_round_sphere():
    for n in (3, 5):
        spec = round_sphere(n)
        pot = RoundFramePotential(spec)
        R = curvature(pot)
        pts = seeded_chart_points(spec, 20, seed=34)
        vals = pointwise_norm2(R, pts)
        expect = n * (n - 1) / 2.0
        assert np.max(np.abs(vals - expect)) < 1e-6


def test_pointwise_inner_degree2_convention():
    # |psi|^2 = 1/2 sum_{ij} |psi(E_i, E_j)|^2 over the orthonormal frame
    psi = polynomial_form(2, SO3, S3, seed=35)
    pts = seeded_chart_points(S3, 6, seed=36)
    fr = orthonormal_frame(S3, pts)
    vals = psi(pts)
    frame_comp = np.einsum("mia,mjb,mab...->mij...", fr, fr, vals)
    brute = 0.5 * batch_inner(frame_comp, frame_comp).sum(axis=(1, 2))
    assert np.allclose(pointwise_norm2(psi, pts), brute, atol=1e-12)


def test_zero_norm():
    psi = zero_form(2, SO3, S3)
    pts = seeded_chart_points(S3, 4, seed=37)
    assert np.max(np.abs(pointwise_norm2(psi, pts))) == 0.0


# ---------------------------------------------------------------------------
# curvature action


def test_curvature_action_pairing_identity():
    # <r(B), B> = <R, [B ^ B]> pointwise, pure fiber algebra
    pot = PolynomialPotential(S3, SO3, seed=38, degree=2)
    B = polynomial_form(1, SO3, S3, seed=39)
    pts = seeded_chart_points(S3, 50, seed=40)
    lhs = pointwise_inner(curvature_action(pot, B), B, pts)
    w = 1.0 / metric_diag(S3, pts)
    Rv = pot.curvature_val(pts)
    Bv = B(pts)
    comm = Bv[:, :, None] @ Bv[:, None, :] - Bv[:, None, :] @ Bv[:, :, None]
    rhs = np.einsum("mu,mv,muvs->m"[:9] + "->m" if False else "mu,mv->muv", w, w)
    rhs = (np.einsum("mu,mv->muv", w, w) * batch_inner(Rv, comm)).sum(axis=(1, 2))
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(np.max(np.abs(lhs)), 1.0)


def test_curvature_action_abelian_vanishes():
    xi = random_element(SO3, 41).entries

    class AbelianPot(ZeroPotential):
        def val(self, pts):
            m = pts.shape[0]
            out = np.zeros((m, 3, 3, 3))
            for mu in range(3):
                out[:, mu] = (0.3 + 0.2 * mu) * xi
            return out

        def jac(self, pts):
            out = np.zeros((pts.shape[0], 3, 3, 3, 3))
            return out

    pot = AbelianPot(SO3, S3)

    def bcomp(pts):
        m = pts.shape[0]
        out = np.zeros((m, 3, 3, 3))
        for mu in range(3):
            out[:, mu] = pts[:, mu, None, None] * xi
        return out

    B = PFormField(1, SO3, S3, bcomp)
    pts = seeded_chart_points(S3, 8, seed=42)
    assert np.max(np.abs(curvature_action(pot, B)(pts))) < 1e-13


# ---------------------------------------------------------------------------
# Laplacians, Bochner, commutation


def test_hodge_laplacian_of_curvature_vanishes_for_yang_mills():
    # Bianchi plus the Yang-Mills equation kill both terms on the round sphere
    spec = round_sphere(3)
    pot = RoundFramePotential(spec)
    R = curvature(pot)
    pts = seeded_chart_points(spec, 8, seed=43)
    out = hodge_laplacian(pot, R)(pts)
    scale = max(np.max(np.abs(R(pts))), 1.0)
    assert np.max(np.abs(out)) < 1e-4 * scale


def test_laplacians_reduce_to_coordinate_laplacian_in_flat_case():
    spec = flat_chart(2)
    pot = ZeroPotential(SO3, spec)
    psi = polynomial_form(1, SO3, spec, seed=44, poly_degree=3)
    pts = seeded_chart_points(spec, 8, seed=45)
    rough = rough_laplacian(pot, psi)(pts)
    hodge = hodge_laplacian(pot, psi)(pts)

    def coord_lap(q):
        from ymstab.geometry import fd_jacobian

        jac2 = fd_jacobian(lambda z: fd_jacobian(psi.comp, z, h=1e-3), q, h=1e-3)
        return -np.einsum("mdd...->m...", jac2)

    expect = coord_lap(pts)
    scale = max(np.max(np.abs(expect)), 1.0)
    assert np.max(np.abs(rough - expect)) < 1e-4 * scale
    assert np.max(np.abs(hodge - expect)) < 1e-4 * scale


def test_zero_field_laplacians():
    pot = PolynomialPotential(S3, SO3, seed=46, degree=2)
    psi = zero_form(1, SO3, S3)
    pts = seeded_chart_points(S3, 4, seed=47)
    assert np.max(np.abs(rough_laplacian(pot, psi)(pts))) < 1e-12
    assert np.max(np.abs(hodge_laplacian(pot, psi)(pts))) < 1e-12


@pytest.mark.parametrize("degree", [1, 2])
def test_bochner_residual_round_sphere(degree):
    spec = round_sphere(3)
    for pot, seed in ((RoundFramePotential(spec), 48), (PolynomialPotential(spec, SO3, seed=49, degree=2), 50)):
        group = pot.group
        psi = polynomial_form(degree, group, spec, seed=seed)
        pts = seeded_chart_points(spec, 6, seed=51)
        res = bochner_residual(pot, psi, pts)
        scale = max(np.max(np.abs(hodge_laplacian(pot, psi)(pts))), 1.0)
        assert np.max(np.abs(res)) < 2e-4 * scale


def test_bochner_round_curvature_term_degree2():
    # psi o (Ric ^ Id + 2 R_M) = 2(n - 2) psi on the round sphere
    from ymstab.forms import _psi_circ_rm, _ricci_on_slots
    from ymstab.geometry import inverse_metric_diag

    n = 4
    spec = round_sphere(n)
    psi = polynomial_form(2, SO3, spec, seed=52)
    pts = seeded_chart_points(spec, 6, seed=53)
    val = psi(pts)
    RM = riemann_tensor(spec, pts)
    gup = inverse_metric_diag(spec, pts)
    total = _ricci_on_slots(spec, pts, val, 2) + 2.0 * _psi_circ_rm(RM, gup, val)
    expect = 2.0 * (n - 2) * val
    assert np.max(np.abs(total - expect)) < 1e-6 * max(np.max(np.abs(expect)), 1.0)


def test_commutation_residual():
    pot = PolynomialPotential(S3, SO3, seed=54, degree=2)
    psi = polynomial_form(2, SO3, S3, seed=55)
    pts = seeded_chart_points(S3, 6, seed=56)
    rng = np.random.default_rng(57)

    def vf(seed):
        c = rng.uniform(-1, 1, size=(3, 3))
        lin = rng.uniform(-1, 1, size=3)
        return VectorField(components=lambda q: q @ c.T + lin)

    X, Y = vf(1), vf(2)
    res = commutation_residual(pot, psi, X, Y, pts)
    scale = max(np.max(np.abs(psi(pts))), 1.0)
    assert np.max(np.abs(res)) < 1e-4 * scale
    # X = Y: everything cancels
    res_xx = commutation_residual(pot, psi, X, X, pts)
    assert np.max(np.abs(res_xx)) < 1e-6 * scale


def test_commutation_abelian_flat():
    spec = flat_chart(2)
    pot = ZeroPotential(SO3, spec)
    psi = polynomial_form(2, SO3, spec, seed=58)
    X = VectorField(components=lambda q: np.stack([q[:, 1], -q[:, 0]], axis=1))
    Y = VectorField(components=lambda q: np.stack([np.ones(len(q)), q[:, 0]], axis=1))
    pts = seeded_chart_points(spec, 6, seed=59)
    res = commutation_residual(pot, psi, X, Y, pts)
    assert np.max(np.abs(res)) < 1e-6


def test_fd_convergence_order():
    # halving h cuts the Bochner residual at the stencil's order
    spec = round_sphere(3)
    pot = PolynomialPotential(spec, SO3, seed=60, degree=2)
    psi = polynomial_form(1, SO3, spec, seed=61)
    pts = seeded_chart_points(spec, 4, seed=62)
    res = {}
    for h in (2e-2, 1e-2):
        psi_h = psi.with_fd(h, order=2)
        res[h] = np.max(np.abs(bochner_residual(pot, psi_h, pts)))
    order = math.log2(res[2e-2] / res[1e-2])
    assert abs(order - 2.0) < 0.35
