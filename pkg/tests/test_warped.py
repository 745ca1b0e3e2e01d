import math

import numpy as np
import pytest

from ymstab.catalog import CatalogEntry, ellipsoid_profile, flat_connection, warped_frame_entry
from ymstab.geometry import (
    ProfileFunction,
    constant_profile,
    linear_profile,
    seeded_chart_points,
    sin_profile,
    warped_product,
)
from ymstab.liealg import StructureGroup
from ymstab.potentials import PolynomialPotential
from ymstab.warped import (
    boundary_error,
    cutoff,
    cutoff_expansion_check,
    decaying_cone_entry,
    profile_condition_check,
    radial_instability_witness,
    radial_variation_identity,
    second_variation_warped,
    sphere_as_warped_report,
)


# ---------------------------------------------------------------------------
# cutoff family


def test_cutoff_plateau_and_support():
    fam = cutoff(8.0)
    assert fam.eta(np.array([math.sqrt(2.0)]))[0] == pytest.approx(1.0)
    assert fam.eta(np.array([3 * 8.0]))[0] == 0.0
    assert fam.eta(np.array([0.05]))[0] == 0.0


def test_cutoff_derivative_bounds_scale():
    consts = []
    for R in (4.0, 16.0, 64.0):
        fam = cutoff(R)
        consts.append((fam.C1, fam.C2))
        hi = np.linspace(R, 2 * R, 2001)
        assert np.max(np.abs(fam.deta(hi))) * R / fam.C1 <= 1.0 + 1e-9
    c1s = [c[0] for c in consts]
    c2s = [c[1] for c in consts]
    assert max(c1s) / min(c1s) < 1.1
    assert max(c2s) / min(c2s) < 1.1


def test_cutoff_derivatives_match_fd():
    fam = cutoff(6.0)
    r = np.linspace(0.2, 11.5, 400)
    h = 1e-5
    fd1 = (fam.eta(r + h) - fam.eta(r - h)) / (2 * h)
    assert np.max(np.abs(fd1 - fam.deta(r))) < 1e-5 * max(np.max(np.abs(fd1)), 1.0)
    fd2 = (fam.deta(r + h) - fam.deta(r - h)) / (2 * h)
    assert np.max(np.abs(fd2 - fam.d2eta(r))) < 1e-4 * max(np.max(np.abs(fd2)), 1.0)


def test_cutoff_requires_plateau():
    with pytest.raises(ValueError):
        cutoff(1.5)


# ---------------------------------------------------------------------------
# radial operator identity


def test_radial_identity_sphere_as_warped():
    spec = warped_product((0.0, math.pi), sin_profile(), n=5)
    entry = warped_frame_entry(spec)
    pts = seeded_chart_points(spec, 30, seed=1)
    lhs, rhs, rel = radial_variation_identity(entry, pts)
    assert rel < 1e-4
    # f''/f = -1: consistent with the round-sphere closed form (4 - n) i_V R
    assert np.max(np.abs(rhs + (5 - 4.0) * _radial_contraction(entry, pts))) < 1e-8


def _radial_contraction(entry, pts):
    from ymstab.fastop import CurvatureContractionB, PotentialContext
    from ymstab.geometry import radial_conformal_field

    V = radial_conformal_field(entry.geometry)
    ctx = PotentialContext(entry.potential, entry.geometry, pts)
    return CurvatureContractionB(V.jet(pts, 2)).val(ctx)


def test_radial_identity_cylinder():
    spec = warped_product((0.0, 4.0), constant_profile(1.0), n=5)
    entry = warped_frame_entry(spec)
    pts = seeded_chart_points(spec, 20, seed=2)
    lhs, rhs, rel = radial_variation_identity(entry, pts)
    assert np.max(np.abs(rhs)) < 1e-12  # f'' = 0
    assert rel < 1e-4


def test_radial_identity_flat_trivial():
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    entry = flat_connection(spec, StructureGroup("SO", 3))
    pts = seeded_chart_points(spec, 10, seed=3)
    lhs, rhs, _ = radial_variation_identity(entry, pts)
    assert np.max(np.abs(lhs)) < 1e-12 and np.max(np.abs(rhs)) < 1e-12


# ---------------------------------------------------------------------------
# banded second variation and the cutoff expansion


def test_second_variation_warped_paths_agree():
    # B must vanish inside the band for the integration by parts to close
    from ymstab.warped import BandBump

    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    entry = warped_frame_entry(spec)
    band = (0.3, math.pi - 0.3)
    bump = BandBump(band[0], band[1], 0.5)

    def factory(pts):
        from ymstab.fastop import CurvatureContractionB, ScaledOneForm
        from ymstab.geometry import radial_conformal_field

        V = radial_conformal_field(spec)
        return ScaledOneForm(CurvatureContractionB(V.jet(pts, 2)), bump.scalar_jets(pts, spec.n))

    res = second_variation_warped(entry, factory, band, r_segments=10, r_per_segment=10)
    tol = max(3.0 * res.mc_std_error, 1e-2 * max(abs(res.value_direct_form), 1e-8))
    assert abs(res.value_operator_form - res.value_direct_form) < tol


def test_second_variation_warped_flat_nonnegative():
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    entry = flat_connection(spec, StructureGroup("SO", 3))
    from ymstab.fastop import FieldOneForm
    from ymstab.forms import polynomial_form, scalar_times_form
    from ymstab.geometry import ScalarField

    from ymstab.warped import BandBump

    band = (0.4, math.pi - 0.4)
    bb = BandBump(band[0], band[1], 0.5)
    # damp in the fiber chart too so the field is smooth on the fiber sphere
    bump = ScalarField(
        fn=lambda pts: bb.eta(pts[:, 0]) * np.exp(-np.einsum("mi,mi->m", pts[:, 1:], pts[:, 1:]))
    )
    B = scalar_times_form(bump, polynomial_form(1, entry.group, spec, seed=4))
    res = second_variation_warped(entry, lambda pts: FieldOneForm(B), band,
                                  r_segments=6, r_per_segment=8)
    assert res.value_direct_form >= 0.0
    tol = max(3.0 * res.mc_std_error, 1e-2 * res.value_direct_form)
    assert abs(res.value_operator_form - res.value_direct_form) < tol


def test_band_outside_interval_rejected():
    from ymstab.warped import SupportError

    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    entry = warped_frame_entry(spec)
    with pytest.raises(SupportError):
        second_variation_warped(entry, lambda pts: None, (2.0, 7.0))


def test_cutoff_expansion_pure_leibniz():
    # arbitrary connection: the three-term expansion is an exact identity
    spec = warped_product((0.05, 20.0), sin_profile(), n=4)
    spec = warped_product((0.05, 12.0), linear_profile(), n=4)
    entry = CatalogEntry("poly-warped", spec,
                         PolynomialPotential(spec, StructureGroup("SO", 3), seed=5, degree=2),
                         frozenset({"random_test"}))
    rng = np.random.default_rng(6)
    pts = np.concatenate([rng.uniform(3.0, 5.5, size=(25, 1)), rng.uniform(-0.5, 0.5, size=(25, 3))], axis=1)
    lhs, rhs, rel = cutoff_expansion_check(entry, R=4.0, pts=pts)
    assert rel < 1e-5


def test_cutoff_expansion_plateau_collapse():
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    entry = warped_frame_entry(spec)
    pts = seeded_chart_points(spec, 10, seed=7)  # interior: eta = 1 there for R = 4
    lhs, rhs, rel = cutoff_expansion_check(entry, R=4.0, pts=pts)
    from ymstab.fastop import CurvatureContractionB, PotentialContext, delta_dB
    from ymstab.geometry import radial_conformal_field

    V = radial_conformal_field(spec)
    ctx = PotentialContext(entry.potential, spec, pts)
    base, _ = delta_dB(ctx, CurvatureContractionB(V.jet(pts, 2)))
    fam_eta = cutoff(4.0).eta(pts[:, 0])
    assert np.allclose(fam_eta, 1.0)
    assert np.max(np.abs(lhs - base)) < 1e-10 * max(np.max(np.abs(base)), 1.0)


# ---------------------------------------------------------------------------
# boundary error decay


def test_boundary_error_decay_slope():
    n, s = 5, 5.0
    entry = decaying_cone_entry(n=n, s=s)
    Rs = np.array([4.0, 16.0, 64.0, 256.0])
    both = np.array([abs(boundary_error(entry, R, fiber_nodes=300)) for R in Rs])
    assert np.all(both[1:] < both[:-1])  # whole error decays monotonically
    outer = np.array([abs(boundary_error(entry, R, fiber_nodes=300, band="outer")) for R in Rs])
    slope = np.polyfit(np.log(Rs), np.log(outer + 1e-300), 1)[0]
    assert slope <= -(2 * s - n) + 0.3


def test_boundary_error_zero_beyond_support():
    # compactly supported curvature: kill the potential outside a band
    n = 5
    spec = warped_product((0.0, 1e4), linear_profile(), n=n)
    group = StructureGroup("SO", 3)
    base = PolynomialPotential(spec, group, seed=8, degree=0, scale=0.4)
    from ymstab.potentials import EnvelopePotential

    env = lambda r: np.exp(-np.clip(r - 3.0, 0.0, None) ** 2)
    denv = lambda r: -2.0 * np.clip(r - 3.0, 0.0, None) * env(r)
    entry = CatalogEntry("compact", spec, EnvelopePotential(base, env, denv), frozenset())
    val = boundary_error(entry, R=2000.0, fiber_nodes=200, band="outer")
    assert val == 0.0


def test_sin_profile_boundary_error_shrinks():
    spec = warped_product((0.0, math.pi), sin_profile(), n=5)
    entry = warped_frame_entry(spec)
    # endpoint analogue: bands collapsing toward r = 0 with the same window shape
    vals = []
    for R in (8.0, 32.0):
        fam = cutoff(R)
        from ymstab.forms import curvature, interior_product, pointwise_norm2
        from ymstab.geometry import radial_conformal_field, _mc_sphere_ambient, _stereo_chart

        V = radial_conformal_field(spec)
        B = interior_product(V, curvature(entry.potential))
        rng = np.random.default_rng(11)
        total = 0.0
        gx, gw = np.polynomial.legendre.leggauss(16)
        a, b = 1.0 / R, 2.0 / R
        rs = 0.5 * (b - a) * gx + 0.5 * (a + b)
        ws = 0.5 * (b - a) * gw
        prof = spec.profile
        for rv, rw in zip(rs, ws):
            fpts = _stereo_chart(_mc_sphere_ambient(4, 200, rng))
            pts = np.concatenate([np.full((200, 1), rv), fpts], axis=1)
            coef = ((5 - 4.0) * fam.eta(pts[:, 0]) ** 2 * prof.d2f(rv) / prof.f(rv)
                    + fam.deta(pts[:, 0]) ** 2)
            total += rw * prof.f(rv) ** 4 * float(np.mean(coef * pointwise_norm2(B, pts)))
        vals.append(abs(total))
    assert vals[1] < vals[0]


# ---------------------------------------------------------------------------
# instability witness and profiles


def test_witness_sphere_as_warped():
    spec = warped_product((0.0, math.pi), sin_profile(), n=5)
    entry = warped_frame_entry(spec)
    out = radial_instability_witness(entry, fiber_nodes=400)
    assert out["hypothesis_met"]
    assert out["value"] < -5.0 * out["sigma"]
    assert out["conclusion"].startswith("radial curvature contraction must vanish")


def test_witness_dimension_four():
    spec = warped_product((0.0, math.pi), sin_profile(), n=4)
    entry = warped_frame_entry(spec)
    out = radial_instability_witness(entry)
    assert not out["hypothesis_met"]
    assert out["conclusion"] == "no conclusion from this criterion"


def test_witness_hypothesis_failure():
    spec = warped_product((0.1, 4.0), linear_profile(), n=5)  # f'' = 0
    pot = PolynomialPotential(spec, StructureGroup("SO", 3), seed=12, degree=1)
    entry = CatalogEntry("cone-poly", spec, pot, frozenset())
    out = radial_instability_witness(entry)
    assert not out["hypothesis_met"]


def test_ellipsoid_witness_hypothesis():
    prof = ellipsoid_profile(2.0)
    spec = warped_product((0.0, prof.length), prof, n=5)
    rs = np.linspace(0.05, prof.length - 0.05, 100)
    assert np.all((5 - 4.0) * prof.d2f(rs) < 0.0)


def test_profile_conditions_sin():
    prof = sin_profile()
    rep = profile_condition_check(prof, (0.0, math.pi))
    assert rep["all_ok"]
    assert rep["sup_f_fpp"] <= 1.0 + 1e-9


def test_profile_conditions_cone():
    rep = profile_condition_check(linear_profile(), (0.0, np.inf))
    assert rep["all_ok"]
    assert rep["sup_f_fpp"] == 0.0
    assert abs(rep["linear_growth_constant"] - 2.0) < 1e-6


def test_profile_conditions_exponential_fails_growth():
    prof = ProfileFunction(f=np.exp, df=np.exp, d2f=np.exp, d3f=np.exp, d4f=np.exp, name="exp")
    rep = profile_condition_check(prof, (0.0, np.inf), tail_to=30.0)
    assert not rep["linear_growth_ok"]
    assert not rep["all_ok"]


def test_profile_conditions_ellipsoid():
    for a in (0.5, 2.0):
        prof = ellipsoid_profile(a)
        rep = profile_condition_check(prof, (0.0, prof.length))
        assert rep["all_ok"], (a, rep)


def test_ellipsoid_profile_reduces_to_sin():
    prof = ellipsoid_profile(1.0)
    rs = np.linspace(0.0, math.pi, 200)
    assert np.max(np.abs(prof.f(rs) - np.sin(rs))) < 1e-8
    assert abs(prof.length - math.pi) < 1e-10
    assert np.all(prof.d2f(np.linspace(0.1, math.pi - 0.1, 50)) < 0.0)


def test_ellipsoid_profile_rejects_bad_ratio():
    with pytest.raises(ValueError):
        ellipsoid_profile(-1.0)


# ---------------------------------------------------------------------------
# sphere-as-warped full stack


def test_sphere_as_warped_full_stack():
    rep = sphere_as_warped_report(n=5)
    assert rep["r2_warped_dev"] < 1e-6
    assert rep["r2_round_dev"] < 1e-6
    assert rep["ym_residual_warped"] < 1e-4
    assert rep["ym_residual_round"] < 1e-4
    assert rep["axial_symmetry_spread"] < 1e-8
    assert rep["second_variation_rel_dev"] < 1e-4
    # the polar second variation is negative: instability witness
    assert rep["second_variation_round"] < 0.0
