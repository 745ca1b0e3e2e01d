import math

import numpy as np
import pytest

from ymstab.geometry import (
    DomainError,
    ScalarField,
    UnsupportedGeometryError,
    chart_embed,
    christoffel,
    christoffel_fd_oracle,
    christoffel_jac,
    conformal_gradient_field,
    conformal_sphere,
    constant_profile,
    constant_scalar,
    fd_jacobian,
    grad_scalar,
    integrate,
    inverse_metric_diag,
    laplacian_scalar,
    linear_restriction_jet,
    metric_components,
    orthonormal_frame,
    product_conformal_field,
    product_spheres,
    radial_conformal_field,
    ricci_transform,
    riemann,
    riemann_tensor,
    rough_laplacian_vector,
    round_sphere,
    seeded_chart_points,
    sin_profile,
    sphere_volume,
    vector_cov_jac,
    warped_product,
)

S2 = round_sphere(2)
S5 = round_sphere(5)


def phi_field(w, scale=0.3):
    """phi = scale * f_w as a ScalarField with analytic jets."""
    w = np.asarray(w, dtype=float)

    def jet_fn(pts, order):
        from ymstab.jets import jet_scale

        return jet_scale(linear_restriction_jet(np.atleast_2d(pts), w, order), scale)

    return ScalarField(fn=lambda pts: jet_fn(pts, 0).d[0], jet_fn=jet_fn)


# ---------------------------------------------------------------------------
# charts


def test_chart_center_maps_to_pole():
    assert np.allclose(chart_embed(S2, np.array([0.0, 0.0])), [0.0, 0.0, -1.0])


def test_chart_unit_radius_maps_to_equator():
    assert np.allclose(chart_embed(S2, np.array([1.0, 0.0])), [1.0, 0.0, 0.0])


def test_chart_embed_lands_on_unit_sphere():
    pts = seeded_chart_points(S5, 100, seed=0)
    amb = chart_embed(S5, pts)
    assert np.allclose(np.linalg.norm(amb, axis=1), 1.0, atol=1e-14)


def test_chart_domain_error():
    with pytest.raises(DomainError):
        chart_embed(S2, np.array([5.0, 0.0]))


# ---------------------------------------------------------------------------
# metric / christoffel / curvature


def test_round_metric_at_origin():
    g = metric_components(S5, np.zeros(5))
    assert np.allclose(g, 4.0 * np.eye(5))


def test_conformal_metric_with_zero_phi_matches_round():
    spec = conformal_sphere(4, constant_scalar(0.0))
    pts = seeded_chart_points(spec, 10, seed=1)
    assert np.allclose(metric_components(spec, pts), metric_components(round_sphere(4), pts))


def test_warped_metric_structure():
    spec = warped_product((0.0, math.pi), sin_profile(), n=3)
    p = np.array([[1.1, 0.0, 0.0]])
    g = metric_components(spec, p)
    c = 2.0  # fiber chart factor at origin
    expect = np.diag([1.0, (math.sin(1.1) * c) ** 2, (math.sin(1.1) * c) ** 2])
    assert np.allclose(g[0], expect)


@pytest.mark.parametrize(
    "spec",
    [
        S2,
        S5,
        conformal_sphere(4, None),  # placeholder replaced below
    ],
)
def test_christoffel_against_fd_metric_oracle(spec):
    if spec.variant == "conformal":
        spec = conformal_sphere(4, phi_field(np.array([0.2, -0.4, 0.1, 0.3, -0.2])))
    pts = seeded_chart_points(spec, 12, seed=3)
    gam = christoffel(spec, pts)
    oracle = christoffel_fd_oracle(spec, pts)
    scale = max(np.max(np.abs(oracle)), 1.0)
    assert np.max(np.abs(gam - oracle)) < 1e-6 * scale
    # lower-index symmetry is exact
    assert np.array_equal(gam, gam.transpose(0, 1, 3, 2))


def test_christoffel_products_and_warped_against_fd():
    for spec in [product_spheres([2, 3]), warped_product((0.0, math.pi), sin_profile(), n=4)]:
        pts = seeded_chart_points(spec, 10, seed=4)
        gam = christoffel(spec, pts)
        oracle = christoffel_fd_oracle(spec, pts)
        scale = max(np.max(np.abs(oracle)), 1.0)
        assert np.max(np.abs(gam - oracle)) < 1e-6 * scale


def test_christoffel_conformal_constant_phi_equals_round():
    spec = conformal_sphere(3, constant_scalar(0.7))
    pts = seeded_chart_points(spec, 8, seed=5)
    assert np.allclose(christoffel(spec, pts), christoffel(round_sphere(3), pts), atol=1e-12)


def test_conformal_christoffel_rank_one_correction():
    # conformal formula: tilde Gamma - Gamma = dphi (x) Id + Id (x) dphi - g grad(phi)
    phi = phi_field(np.array([0.5, -0.3, 0.2, 0.1]))
    spec = conformal_sphere(3, phi)
    base = round_sphere(3)
    pts = seeded_chart_points(spec, 10, seed=6)
    diff = christoffel(spec, pts) - christoffel(base, pts)
    dphi = phi.grad(pts)
    g = metric_components(base, pts)
    gradphi = grad_scalar(base, pts, phi)
    n = 3
    I = np.eye(n)
    expect = (
        np.einsum("mi,jk->mkij", dphi, I)
        + np.einsum("mj,ik->mkij", dphi, I)
        - np.einsum("mij,mk->mkij", g, gradphi)
    )
    assert np.max(np.abs(diff - expect)) < 1e-6


def test_christoffel_jac_matches_fd():
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    pts = seeded_chart_points(spec, 6, seed=7)
    ana = christoffel_jac(spec, pts)
    fd = fd_jacobian(lambda q: christoffel(spec, q), pts)
    assert np.max(np.abs(ana - fd)) < 1e-6 * max(np.max(np.abs(fd)), 1.0)


def test_warped_christoffel_closed_form():
    # Gamma^r_{ij} = -f f' (g_N)_ij and Gamma^i_{rj} = (f'/f) delta_ij
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    pts = seeded_chart_points(spec, 8, seed=8)
    gam = christoffel(spec, pts)
    r = pts[:, 0]
    f, fp = np.sin(r), np.cos(r)
    gN = metric_components(round_sphere(3), pts[:, 1:])
    assert np.max(np.abs(gam[:, 0, 1:, 1:] + (f * fp)[:, None, None] * gN)) < 1e-10
    for i in range(1, 4):
        for j in range(1, 4):
            expect = (fp / f) if i == j else 0.0
            assert np.max(np.abs(gam[:, i, 0, j] - expect)) < 1e-10


def test_round_riemann_constant_curvature():
    pts = seeded_chart_points(S5, 20, seed=9)
    apply_R = riemann(S5, pts)
    rng = np.random.default_rng(10)
    g = metric_components(S5, pts)
    for _ in range(5):
        X = rng.normal(size=(20, 5))
        Y = rng.normal(size=(20, 5))
        Z = rng.normal(size=(20, 5))
        got = apply_R(X, Y, Z)
        gYZ = np.einsum("mij,mi,mj->m", g, Y, Z)
        gXZ = np.einsum("mij,mi,mj->m", g, X, Z)
        expect = gYZ[:, None] * X - gXZ[:, None] * Y
        scale = max(np.max(np.abs(expect)), 1.0)
        assert np.max(np.abs(got - expect)) < 1e-6 * scale


def test_riemann_antisymmetry_and_bianchi():
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    pts = seeded_chart_points(spec, 10, seed=11)
    R = riemann_tensor(spec, pts)
    assert np.max(np.abs(R + R.transpose(0, 1, 2, 4, 3))) < 1e-5
    bianchi = R + R.transpose(0, 1, 3, 4, 2) + R.transpose(0, 1, 4, 2, 3)
    assert np.max(np.abs(bianchi)) < 1e-5


def test_warped_riemann_closed_forms():
    # R(e_i, V)e_j = delta_ij f^{-1} f'' V and R(e_i, V)T = -f'' e_i for unit fiber e_i, V = f d/dr
    spec = warped_product((0.0, math.pi), sin_profile(), n=5)
    pts = seeded_chart_points(spec, 12, seed=12)
    apply_R = riemann(spec, pts)
    frame = orthonormal_frame(spec, pts)
    r = pts[:, 0]
    f, fpp = np.sin(r), -np.sin(r)
    T = np.zeros_like(pts)
    T[:, 0] = 1.0
    V = f[:, None] * T
    for i in range(1, 5):
        ei = frame[:, i, :]
        for j in range(1, 5):
            ej = frame[:, j, :]
            got = apply_R(ei, V, ej)
            expect = (1.0 if i == j else 0.0) * (fpp / f)[:, None] * V
            assert np.max(np.abs(got - expect)) < 1e-8
        gotT = apply_R(ei, V, T)
        assert np.max(np.abs(gotT + fpp[:, None] * ei)) < 1e-8


def test_ricci_round_and_products():
    pts = seeded_chart_points(S5, 10, seed=13)
    rng = np.random.default_rng(14)
    X = rng.normal(size=(10, 5))
    assert np.max(np.abs(ricci_transform(S5, pts, X) - 4.0 * X)) < 1e-8

    spec = product_spheres([2, 3])
    pts = seeded_chart_points(spec, 10, seed=15)
    Xa = np.zeros((10, 5))
    Xa[:, :2] = rng.normal(size=(10, 2))
    assert np.max(np.abs(ricci_transform(spec, pts, Xa) - 1.0 * Xa)) < 1e-8
    Xb = np.zeros((10, 5))
    Xb[:, 2:] = rng.normal(size=(10, 3))
    assert np.max(np.abs(ricci_transform(spec, pts, Xb) - 2.0 * Xb)) < 1e-8


def test_ricci_frame_independence():
    pts = seeded_chart_points(S2, 6, seed=16)
    rng = np.random.default_rng(17)
    X = rng.normal(size=(6, 2))
    frame = orthonormal_frame(S2, pts)
    theta = 0.83
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    rotated = np.einsum("ab,mbl->mal", rot, frame)
    r1 = ricci_transform(S2, pts, X, frame=frame)
    r2 = ricci_transform(S2, pts, X, frame=rotated)
    assert np.max(np.abs(r1 - r2)) < 1e-10


# ---------------------------------------------------------------------------
# frames


def test_frame_at_origin_is_half_identity():
    fr = orthonormal_frame(S5, np.zeros((1, 5)))
    assert np.allclose(fr[0], 0.5 * np.eye(5))


def test_frame_gram_matrix_and_determinism():
    spec = conformal_sphere(4, phi_field(np.array([0.3, 0.1, -0.2, 0.4, 0.0])))
    pts = seeded_chart_points(spec, 15, seed=18)
    fr = orthonormal_frame(spec, pts)
    g = metric_components(spec, pts)
    gram = np.einsum("mal,mlk,mbk->mab", fr, g, fr)
    assert np.max(np.abs(gram - np.eye(4))) < 1e-12
    assert np.array_equal(fr, orthonormal_frame(spec, pts))


# ---------------------------------------------------------------------------
# scalar calculus


def test_constant_scalar_calculus():
    u = constant_scalar(2.5)
    pts = seeded_chart_points(S5, 8, seed=19)
    assert np.max(np.abs(grad_scalar(S5, pts, u))) == 0.0
    assert np.max(np.abs(laplacian_scalar(S5, pts, u))) < 1e-12


def test_height_function_laplacian_eigenvalue():
    # div grad f_v = -n f_v on the round sphere
    for n in (2, 5):
        spec = round_sphere(n)
        v = np.zeros(n + 1)
        v[0] = 1.0
        fv, _ = conformal_gradient_field(spec, v)
        pts = seeded_chart_points(spec, 12, seed=20 + n)
        lap = laplacian_scalar(spec, pts, fv)
        assert np.max(np.abs(lap + n * fv(pts))) < 1e-7


def test_height_function_gradient_identity():
    # |grad f_v|^2_g + f_v^2 = 1 for unit v
    spec = round_sphere(4)
    rng = np.random.default_rng(22)
    v = rng.normal(size=5)
    v /= np.linalg.norm(v)
    fv, _ = conformal_gradient_field(spec, v)
    pts = seeded_chart_points(spec, 12, seed=23)
    grad = grad_scalar(spec, pts, fv)
    g = metric_components(spec, pts)
    norm2 = np.einsum("mij,mi,mj->m", g, grad, grad)
    assert np.max(np.abs(norm2 + fv(pts) ** 2 - 1.0)) < 1e-8


# ---------------------------------------------------------------------------
# conformal gradient fields (sphere, product, radial)


def test_conformal_field_covariant_identity():
    # D_X V = -f_v X for the round metric, 50 seeded points/directions
    spec = round_sphere(5)
    rng = np.random.default_rng(24)
    v = rng.normal(size=6)
    fv, V = conformal_gradient_field(spec, v)
    pts = seeded_chart_points(spec, 50, seed=25)
    cov = vector_cov_jac(spec, V, pts)  # (m, mu, lam)
    X = rng.normal(size=(50, 5))
    DXV = np.einsum("mal,ma->ml", cov, X)
    resid = DXV + fv(pts)[:, None] * X
    assert np.max(np.abs(resid)) < 1e-6 * max(np.max(np.abs(DXV)), 1.0)


def test_conformal_field_rough_laplacian():
    spec = round_sphere(4)
    v = np.array([0.3, -1.0, 0.5, 0.2, 0.8])
    _, V = conformal_gradient_field(spec, v)
    pts = seeded_chart_points(spec, 20, seed=26)
    lap = rough_laplacian_vector(spec, V, pts)
    resid = lap - V(pts)
    assert np.max(np.abs(resid)) < 1e-5 * max(np.max(np.abs(lap)), 1.0)


def test_conformal_fields_sum_to_zero():
    # sum_k f_{v_k} V_k = 0 over an orthonormal basis of R^{n+1}
    spec = round_sphere(3)
    pts = seeded_chart_points(spec, 15, seed=27)
    acc = np.zeros((15, 3))
    for k in range(4):
        v = np.zeros(4)
        v[k] = 1.0
        fv, V = conformal_gradient_field(spec, v)
        acc += fv(pts)[:, None] * V(pts)
    assert np.max(np.abs(acc)) < 1e-12


def test_product_conformal_field_identities():
    spec = product_spheres([3, 2])
    rng = np.random.default_rng(28)
    v = rng.normal(size=4)
    fv, V = product_conformal_field(spec, 1, v)
    pts = seeded_chart_points(spec, 30, seed=29)
    cov = vector_cov_jac(spec, V, pts)
    # tangent to factor 2 (coordinates 3..4): D_X V^1 = 0
    X2 = np.zeros((30, 5))
    X2[:, 3:] = rng.normal(size=(30, 2))
    assert np.max(np.abs(np.einsum("mal,ma->ml", cov, X2))) < 1e-6
    # tangent to factor 1: D_X V^1 = -f X
    X1 = np.zeros((30, 5))
    X1[:, :3] = rng.normal(size=(30, 3))
    resid = np.einsum("mal,ma->ml", cov, X1) + fv(pts)[:, None] * X1
    assert np.max(np.abs(resid)) < 1e-6
    # D*D V = V
    lap = rough_laplacian_vector(spec, V, pts)
    assert np.max(np.abs(lap - V(pts))) < 1e-5


def test_product_conformal_field_bad_index():
    spec = product_spheres([3, 2])
    with pytest.raises(IndexError):
        product_conformal_field(spec, 3, np.zeros(4))


def test_radial_field_identities():
    spec = warped_product((0.0, math.pi), sin_profile(), n=5)
    V = radial_conformal_field(spec)
    pts = seeded_chart_points(spec, 50, seed=30)
    rng = np.random.default_rng(31)
    cov = vector_cov_jac(spec, V, pts)
    X = rng.normal(size=(50, 5))
    fp = np.cos(pts[:, 0])
    resid = np.einsum("mal,ma->ml", cov, X) - fp[:, None] * X
    assert np.max(np.abs(resid)) < 1e-6
    # |V|_g at r = pi/2 is 1 for f = sin
    p = np.zeros((1, 5))
    p[0, 0] = math.pi / 2
    g = metric_components(spec, p)
    val = V(p)
    assert abs(np.einsum("mij,mi,mj->m", g, val, val)[0] - 1.0) < 1e-12
    # cylinder: f constant, D_X V = 0
    cyl = warped_product((0.0, 4.0), constant_profile(1.0), n=5)
    Vc = radial_conformal_field(cyl)
    ptsc = seeded_chart_points(cyl, 20, seed=32)
    covc = vector_cov_jac(cyl, Vc, ptsc)
    assert np.max(np.abs(covc)) < 1e-10


def test_radial_field_wrong_variant():
    with pytest.raises(UnsupportedGeometryError):
        radial_conformal_field(S5)
    with pytest.raises(UnsupportedGeometryError):
        conformal_gradient_field(product_spheres([2, 2]), np.zeros(5))


# ---------------------------------------------------------------------------
# quadrature


def test_area_of_s2_tensor_rule():
    res = integrate(S2, lambda pts: np.ones(len(pts)))
    assert abs(res.value - 4.0 * math.pi) < 1e-10
    assert res.std_error == 0.0


def test_volume_of_s5_monte_carlo():
    res = integrate(S5, lambda pts: np.ones(len(pts)), nodes=200_000)
    assert abs(res.value - math.pi**3) < max(3.0 * res.std_error, 1e-9)


def test_odd_function_integrates_to_zero():
    rng = np.random.default_rng(33)
    for n in (2, 5):
        spec = round_sphere(n)
        v = rng.normal(size=n + 1)
        fv, _ = conformal_gradient_field(spec, v)
        res = integrate(spec, lambda pts: fv(pts), nodes=200_000)
        tol = 3.0 * res.std_error if res.std_error > 0 else 1e-10
        assert abs(res.value) < tol


def test_tensor_and_mc_rules_agree():
    rng = np.random.default_rng(34)
    for n in (2, 3):
        spec = round_sphere(n)
        for trial in range(5):
            v = rng.normal(size=n + 1)
            fv, _ = conformal_gradient_field(spec, v)

            def integrand(pts, fv=fv):
                return np.exp(fv(pts)) + 0.5 * fv(pts) ** 2

            exact = integrate(spec, integrand)
            mc = _mc_override(spec, integrand, nodes=150_000, seed=100 + trial)
            assert abs(exact.value - mc.value) < 3.0 * mc.std_error


def _mc_override(spec, fn, nodes, seed):
    from ymstab.geometry import _mc_sphere_integral

    return _mc_sphere_integral(spec, fn, nodes, seed, chunk=100_000)


def test_product_volume():
    spec = product_spheres([2, 2])
    res = integrate(spec, lambda pts: np.ones(len(pts)), nodes=100_000)
    expect = (4 * math.pi) ** 2
    assert abs(res.value - expect) < max(3 * res.std_error, 1e-9)


def test_warped_volume_matches_sphere():
    # dr^2 + sin^2 r g_{S^2} over (0, pi) is round S^3
    spec = warped_product((0.0, math.pi), sin_profile(), n=3)
    res = integrate(spec, lambda pts: np.ones(len(pts)))
    assert abs(res.value - sphere_volume(3)) < 1e-8


def test_integrate_rejects_nonfinite():
    with pytest.raises(Exception):
        integrate(S2, lambda pts: np.where(np.abs(pts[:, 0]) < 10.0, np.inf, 1.0))
