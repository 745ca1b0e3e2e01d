"""Second-variation analysis on conformal spheres: the Yang-Mills functional,
its Euler-Lagrange residual, the Jacobi operator with three independent
computation paths, conformal test variations, their closed-form identities,
the summed-variation trace, and the stability criteria reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .catalog import CatalogEntry
from .fastop import (
    CurvatureContractionB,
    FieldOneForm,
    GaugeDirectionB,
    OneFormQueries,
    PotentialContext,
    jacobi_apply,
    variation_integrand_terms,
)
from .forms import (
    PFormField,
    add_forms,
    curvature,
    curvature_action,
    d_nabla,
    delta_nabla,
    delta_nabla_conformal,
    interior_product,
    pointwise_inner,
    pointwise_norm2,
)
from .geometry import (
    GeometrySpec,
    ScalarField,
    VectorField,
    _mc_sphere_ambient,
    _stereo_chart,
    christoffel,
    conformal_basis_vector_jets,
    conformal_gradient_field,
    constant_scalar,
    divergence_vector,
    fd_jacobian,
    grad_scalar,
    inverse_metric_diag,
    laplacian_scalar,
    metric_diag,
    scalar_times_vector_jets,
    seeded_chart_points,
    sphere_volume,
)
from .jets import jet_exp
from .liealg import batch_inner

__all__ = [
    "UnsupportedPreconditionError",
    "VariationConfig",
    "SecondVariationResult",
    "ym_functional",
    "ym_residual",
    "jacobi_operator",
    "second_variation",
    "second_variation_family",
    "conformal_variation",
    "gauge_variation",
    "jacobi_closed_form_residual",
    "leibniz_expansion_residual",
    "second_variation_trace",
    "SyntheticTensorPack",
    "trace_algebra_shadow",
    "divergence_identities",
    "gauge_orthogonality",
    "stability_criterion_report",
]


class UnsupportedPreconditionError(ValueError):
    """An identity was requested outside the regime in which it can be verified.

    The closed-form Jacobi identities assume an exactly Yang-Mills background
    for the given conformal factor; no such background is constructible in
    closed form at nonconstant factor, so those checks admit constants only.
    The proof steps that need no background equation are exposed separately
    and accept arbitrary data.
    """


@dataclass
class VariationConfig:
    lam: float = 0.0
    phi: Optional[ScalarField] = None
    fd_step_t: float = 1e-3
    nodes: int = 1_000_000
    seed: int = 42
    chunk: int = 2500

    def __post_init__(self):
        if self.fd_step_t <= 0:
            raise ValueError("t-step must be positive")


@dataclass
class SecondVariationResult:
    value_operator_form: float
    value_direct_form: float
    value_fd_form: float
    mc_std_error: float

    def values(self):
        return (self.value_operator_form, self.value_direct_form, self.value_fd_form)


# ---------------------------------------------------------------------------
# quadrature driver shared by the conformal and product suites


def _sampler(geom: GeometrySpec):
    if geom.is_sphere:
        vol = sphere_volume(geom.n)

        def draw(count, rng):
            return _stereo_chart(_mc_sphere_ambient(geom.n, count, rng))

        return draw, vol
    if geom.variant == "products":
        vol = 1.0
        for nk in geom.dims:
            vol *= sphere_volume(nk)

        def draw(count, rng):
            cols = [_stereo_chart(_mc_sphere_ambient(nk, count, rng)) for nk in geom.dims]
            return np.concatenate(cols, axis=1)

        return draw, vol
    raise ValueError("quadrature driver covers sphere and product geometries")


def _phi_weight(geom, phi, pts):
    if phi is None:
        return None
    return np.exp((geom.n - 4.0) * phi(pts))


TERM_KEYS = ("op", "dd", "rbb", "r2", "rdb", "dbb", "bb")


def quadrature_terms(entry: CatalogEntry, phi, factories, nodes, seed, chunk):
    """Accumulate the weighted second-variation term integrals for many fields.

    factories: list of callables pts -> OneFormQueries.  Returns per factory a
    dict term -> (integral value, standard error), all estimated on shared
    seeded Monte Carlo nodes with deterministic chunked accumulation.
    """
    geom = entry.geometry
    draw, vol = _sampler(geom)
    rng = np.random.default_rng(seed)
    k = len(factories)
    sums = np.zeros((k, len(TERM_KEYS)))
    sumsq = np.zeros((k, len(TERM_KEYS)))
    count = 0
    while count < nodes:
        take = min(chunk, nodes - count)
        pts = draw(take, rng)
        ctx = PotentialContext(entry.potential, geom, pts, phi=phi)
        weight = _phi_weight(geom, phi, pts)
        for i, factory in enumerate(factories):
            terms = variation_integrand_terms(ctx, factory(pts))
            for j, key in enumerate(TERM_KEYS):
                vals = terms[key] if weight is None else terms[key] * weight
                sums[i, j] += float(np.sum(vals))
                sumsq[i, j] += float(np.sum(vals * vals))
        count += take
    out = []
    for i in range(k):
        rec = {}
        for j, key in enumerate(TERM_KEYS):
            mean = sums[i, j] / count
            var = max(sumsq[i, j] / count - mean * mean, 0.0)
            rec[key] = (vol * mean, vol * math.sqrt(var / count))
        out.append(rec)
    return out


def _result_from_terms(rec, t_step):
    op, s_op = rec["op"]
    dd, s_dd = rec["dd"]
    rbb, s_rbb = rec["rbb"]
    direct = dd + rbb
    s_direct = s_dd + s_rbb

    def ym(t):
        return 0.5 * (rec["r2"][0] + 2.0 * t * rec["rdb"][0] + t * t * (dd + rbb)
                      + 2.0 * t**3 * rec["dbb"][0] + t**4 * rec["bb"][0])

    def second_diff(t):
        return (ym(t) - 2.0 * ym(0.0) + ym(-t)) / (t * t)

    fd = (4.0 * second_diff(t_step / 2.0) - second_diff(t_step)) / 3.0
    return SecondVariationResult(op, direct, fd, max(s_op, s_direct))


# ---------------------------------------------------------------------------
# functional, residual, operator


def _require_sphere(entry):
    if not entry.geometry.is_sphere:
        raise ValueError("this operation runs on sphere variants")


def ym_functional(entry: CatalogEntry, phi: Optional[ScalarField] = None,
                  nodes: int = 1_000_000, seed: int = 42, chunk: int = 50_000):
    """(1/2) integral of exp((n-4) phi) |R|^2 over the round measure."""
    _require_sphere(entry)
    geom = entry.geometry
    R = curvature(entry.potential)

    def fn(pts):
        vals = 0.5 * pointwise_norm2(R, pts)
        w = _phi_weight(geom, phi, pts)
        return vals if w is None else vals * w

    from .geometry import integrate

    return integrate(geom, fn, nodes=nodes, seed=seed, chunk=chunk)


def ym_residual(entry: CatalogEntry, phi: Optional[ScalarField] = None) -> PFormField:
    """delta R - (n - 4) i_{grad phi} R; vanishes iff the connection is
    Yang-Mills for the conformally scaled metric."""
    _require_sphere(entry)
    geom = entry.geometry
    R = curvature(entry.potential)
    base = delta_nabla(entry.potential, R)
    if phi is None:
        return base
    gf = VectorField(components=lambda pts: grad_scalar(geom, pts, phi))
    return add_forms(base, interior_product(gf, R), 1.0, -(geom.n - 4.0))


def jacobi_operator(entry: CatalogEntry, phi: Optional[ScalarField], B: PFormField) -> PFormField:
    """S(B) = delta d B - (n-4) i_{grad phi} d B + r(B) as a field."""
    _require_sphere(entry)

    def comp(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ctx = PotentialContext(entry.potential, entry.geometry, pts, phi=phi)
        return jacobi_apply(ctx, FieldOneForm(B))

    return PFormField(1, entry.group, entry.geometry, comp, fd_step=B.fd_step, fd_order=B.fd_order)


# ---------------------------------------------------------------------------
# test variations


@dataclass
class TestVariation:
    """A variation direction usable both pointwise (field) and at quadrature scale."""

    field: PFormField
    factory: Callable[[np.ndarray], OneFormQueries]
    label: str = ""


def _scaled_vjets(phi, lam, V, pts, order=2):
    vj = V.jet(pts, order)
    if phi is None or lam == 0.0:
        return vj
    ejet = jet_exp(phi.jet(pts, order), lam)
    return scalar_times_vector_jets(ejet, vj, order)


def conformal_variation(entry: CatalogEntry, phi: Optional[ScalarField], lam: float, v: np.ndarray) -> TestVariation:
    """B_v: the curvature contracted with the scaled conformal gradient field."""
    _require_sphere(entry)
    geom = entry.geometry
    fv, V = conformal_gradient_field(geom, np.asarray(v, dtype=float))
    R = curvature(entry.potential)
    base = interior_product(V, R)
    if phi is not None and lam != 0.0:
        scale = ScalarField(fn=lambda pts: np.exp(lam * phi(pts)))
        from .forms import scalar_times_form

        field_form = scalar_times_form(scale, base)
    else:
        field_form = base

    def factory(pts):
        return CurvatureContractionB(_scaled_vjets(phi, lam, V, pts))

    return TestVariation(field_form, factory, label=f"i_V R (v={np.round(v, 3)})")


def basis_variations(entry: CatalogEntry, phi, lam) -> list:
    """All n+1 coordinate-basis variations sharing one jet pass per chunk."""
    _require_sphere(entry)
    geom = entry.geometry
    n = geom.n
    cache = {}

    def factory_for(k):
        def factory(pts):
            key = id(pts)
            hit = cache.get(key)
            if hit is None or hit[0] is not pts:
                vjets = conformal_basis_vector_jets(geom, pts, 2)
                if phi is not None and lam != 0.0:
                    ejet = jet_exp(phi.jet(pts, 2), lam)
                    vjets = [scalar_times_vector_jets(ejet, vj, 2) for vj in vjets]
                cache.clear()
                cache[key] = (pts, vjets)
                hit = cache[key]
            return CurvatureContractionB(hit[1][k])

        return factory

    out = []
    for k in range(n + 1):
        v = np.zeros(n + 1)
        v[k] = 1.0
        tv = conformal_variation(entry, phi, lam, v)
        out.append(TestVariation(tv.field, factory_for(k), label=f"basis v_{k + 1}"))
    return out


def gauge_variation(entry: CatalogEntry, section) -> TestVariation:
    """B = d sigma for a polynomial section: the gauge-orbit null direction."""
    B_field = d_nabla(entry.potential, section.field())

    def factory(pts):
        return GaugeDirectionB(section.jets(pts, 3))

    return TestVariation(B_field, factory, label="gauge direction")


def second_variation(entry: CatalogEntry, phi, B, config: VariationConfig = None) -> SecondVariationResult:
    """Hessian quadratic form via operator, direct, and t-expansion paths.

    B may be a TestVariation, a degree-1 PFormField (FD weighted hessians), or
    a factory of OneFormQueries.
    """
    cfg = config or VariationConfig()
    if isinstance(B, TestVariation):
        factory = B.factory
    elif isinstance(B, PFormField):
        factory = (lambda pts, f=B: FieldOneForm(f))
    else:
        factory = B
    rec = quadrature_terms(entry, phi, [factory], cfg.nodes, cfg.seed, cfg.chunk)[0]
    return _result_from_terms(rec, cfg.fd_step_t)


def second_variation_family(entry: CatalogEntry, phi, variations, config: VariationConfig = None):
    cfg = config or VariationConfig()
    factories = [tv.factory if isinstance(tv, TestVariation) else tv for tv in variations]
    recs = quadrature_terms(entry, phi, factories, cfg.nodes, cfg.seed, cfg.chunk)
    return [_result_from_terms(rec, cfg.fd_step_t) for rec in recs]


# ---------------------------------------------------------------------------
# closed-form identities for the conformal test variations


def _require_constant_phi(phi):
    if phi is None:
        return 0.0
    if getattr(phi, "constant_value", None) is not None:
        return float(phi.constant_value)
    raise UnsupportedPreconditionError(
        "closed-form Jacobi identities need an exactly Yang-Mills background for "
        "the given conformal factor; only constant factors admit one here (see "
        "the module notes on nonconstant factors)"
    )


def jacobi_closed_form_residual(entry: CatalogEntry, phi, lam: float, v: np.ndarray,
                                pts: np.ndarray):
    """S(B_v) minus its closed form; at constant factor the form is (4-n) B_v."""
    if "yang_mills_round" not in entry.tags:
        raise UnsupportedPreconditionError("entry must satisfy the background Yang-Mills equation")
    c = _require_constant_phi(phi)
    geom = entry.geometry
    n = geom.n
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    tv = conformal_variation(entry, phi, lam, v)
    ctx = PotentialContext(entry.potential, geom, pts, phi=phi)
    Bq = tv.factory(pts)
    S = jacobi_apply(ctx, Bq)
    closed = (4.0 - n) * Bq.val(ctx)
    resid = S - closed
    scale = max(float(np.max(np.abs(closed))), 1e-12)
    return resid, float(np.max(np.abs(resid))) / scale


def leibniz_expansion_residual(entry: CatalogEntry, phi: ScalarField, lam: float,
                               v: np.ndarray, pts: np.ndarray):
    """Residual of the product-rule expansion of (4-n) i_{grad phi} d(i_V R).

    A pure differentiation identity: valid for every connection, any factor.
    """
    geom = entry.geometry
    n = geom.n
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    pot = entry.potential
    fv, V = conformal_gradient_field(geom, np.asarray(v, dtype=float))
    R = curvature(pot)
    scale_field = ScalarField(fn=lambda q: np.exp(lam * phi(q)))
    from .forms import scalar_times_form

    B = scalar_times_form(scale_field, interior_product(V, R)) if lam != 0.0 else interior_product(V, R)
    dB = d_nabla(pot, B)
    gphi = grad_scalar(geom, pts, phi)
    lhs = (4.0 - n) * np.einsum("ma,mar...->mr...", gphi, dB(pts))

    # expansion pieces
    ctx = PotentialContext(pot, geom, pts, phi=phi)
    Rv = ctx.R
    vjets = _scaled_vjets(phi, lam, V, pts, order=1)
    Vt = vjets[0]
    cj = _cov_jac_two_form(ctx, Rv)  # (m, mu, a, b, r, r): nabla_mu R_{ab}
    nabla_V_R = np.einsum("ma,mauv...->muv...", Vt, cj)
    efv = np.exp(lam * phi(pts)) * fv(pts)
    gphi2 = np.einsum("mu,mu,mu->m", gphi, gphi, metric_diag(geom, pts))
    RgV = np.einsum("ma,mb,mab...->m...", gphi, Vt, Rv)
    rhs = np.einsum("ma,mar...->mr...", gphi, nabla_V_R)
    rhs = rhs - 2.0 * efv[:, None, None, None] * np.einsum("ma,mar...->mr...", gphi, Rv)
    rhs = rhs + lam * gphi2[:, None, None, None] * np.einsum("ma,mar...->mr...", Vt, Rv)
    dphi = gphi * metric_diag(geom, pts)  # lower-index differential d_rho phi
    rhs = rhs + lam * np.einsum("mr,m...->mr...", dphi, RgV)
    rhs = (4.0 - n) * rhs
    resid = lhs - rhs
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1e-12)
    return resid, float(np.max(np.abs(resid))) / scale


def _cov_jac_two_form(ctx, Wv):
    """Covariant derivative (nabla_mu W)_{ab} of the curvature 2-form, pointwise."""
    from .liealg import batch_bracket

    pot, pts = ctx.pot, ctx.pts
    A, dA, gam = ctx.A, ctx.dA, ctx.gam
    H = pot._hess_full(pts)  # (m, d1, d2, slot, r, r)
    # d_mu R_{ab} = d_mu d_a A_b - d_mu d_b A_a + [d_mu A_a, A_b] + [A_a, d_mu A_b]
    dR = H - H.transpose(0, 1, 3, 2, 4, 5)
    dR = dR + batch_bracket(dA[:, :, :, None], A[:, None, None, :])
    dR = dR + batch_bracket(A[:, None, :, None], dA[:, :, None, :])
    out = dR + batch_bracket(A[:, :, None, None], Wv[:, None])
    out = out - np.einsum("mlua,mlb...->muab...", gam, Wv)
    out = out - np.einsum("mlub,mal...->muab...", gam, Wv)
    return out


def second_variation_trace(entry: CatalogEntry, phi, lam: float,
                           config: VariationConfig = None):
    """Summed second variation over a coordinate basis against its closed form.

    lhs: operator-path values; rhs at constant factor collapses to
    (8 - 2n) exp((n - 4 + 2 lam) c) * integral of |R|^2.
    """
    if "yang_mills_round" not in entry.tags and "yang_mills_dim4" not in entry.tags:
        raise UnsupportedPreconditionError("entry must satisfy the background Yang-Mills equation")
    c = _require_constant_phi(phi)
    cfg = config or VariationConfig()
    geom = entry.geometry
    n = geom.n
    variations = basis_variations(entry, phi, lam)
    results = second_variation_family(entry, phi, variations, cfg)
    lhs = sum(r.value_operator_form for r in results)
    lhs_sigma = math.sqrt(sum(r.mc_std_error**2 for r in results))
    r2 = ym_functional(entry, None, nodes=cfg.nodes, seed=cfg.seed, chunk=max(cfg.chunk, 20_000))
    factor = (8.0 - 2.0 * n) * math.exp((n - 4.0 + 2.0 * lam) * c)
    rhs = factor * 2.0 * r2.value  # ym_functional carries the 1/2
    rhs_sigma = abs(factor) * 2.0 * r2.std_error
    return {
        "lhs": lhs,
        "rhs": rhs,
        "lhs_sigma": lhs_sigma,
        "rhs_sigma": rhs_sigma,
        "per_basis": results,
    }


# ---------------------------------------------------------------------------
# synthetic trace algebra (one abstract point, no manifold)


@dataclass
class SyntheticTensorPack:
    """Seeded fiberwise data at one abstract point of an n-sphere."""

    n: int
    R: np.ndarray        # (n, n, r, r) antisymmetric slots, algebra values
    dR: np.ndarray       # (n, n, n, r, r) with the differential Bianchi symmetry
    grad: np.ndarray     # (n,)
    hess: np.ndarray     # (n, n) symmetric
    phi0: float = 0.0

    @staticmethod
    def seeded(n: int, r: int, seed: int, zero_R: bool = False) -> "SyntheticTensorPack":
        rng = np.random.default_rng(seed)

        def alg(shape):
            m = rng.normal(size=shape + (r, r))
            return m - np.swapaxes(m, -1, -2)

        R = alg((n, n))
        R = R - R.transpose(1, 0, 2, 3)
        dR = alg((n, n, n))
        dR = dR - dR.transpose(0, 2, 1, 3, 4)
        cyc = (dR + dR.transpose(1, 2, 0, 3, 4) + dR.transpose(2, 0, 1, 3, 4)) / 3.0
        dR = dR - cyc
        if zero_R:
            R = 0.0 * R
            dR = 0.0 * dR
        grad = rng.normal(size=n)
        hess = rng.normal(size=(n, n))
        hess = 0.5 * (hess + hess.T)
        return SyntheticTensorPack(n, R, dR, grad, hess, phi0=float(rng.normal() * 0.3))


def trace_algebra_shadow(pack: SyntheticTensorPack, lam: float):
    """Fiberwise trace computations of the summed-variation proof, no manifold.

    lhs assembles the closed-form template term by term with the basis trick
    (v_{n+1} along the point, V_{n+1} = 0); rhs is the pointwise integrand
    before integration by parts.  No background field equation enters.
    """
    n, R, dR = pack.n, np.asarray(pack.R), np.asarray(pack.dR)
    g, H = pack.grad, pack.hess
    lam_e = math.exp(lam * pack.phi0)
    if R.shape[:2] != (n, n):
        raise ValueError("malformed pack: curvature block size mismatch")
    # basis trick: V_k = e_k (k <= n), V_{n+1} = 0; height values (0, ..., 0, 1)
    Vs = [np.eye(n)[k] * lam_e for k in range(n)] + [np.zeros(n)]
    fs = [0.0] * n + [1.0]
    g2 = float(g @ g)
    lap_pos = -float(np.trace(H))  # the proof's positive-Laplacian convention
    c1 = 4.0 - n + lam * lap_pos - (lam * lam + (n - 4.0) * lam) * g2
    c2 = (4.0 - n + 3.0 * lam) * lam_e

    def inner(a, b):
        return 0.5 * float(np.sum(a * b))

    lhs = 0.0
    for V, fval in zip(Vs, fs):
        RV = np.einsum("a,ab...->b...", V, R)          # R(V, e_j)
        RgV = np.einsum("a,b,ab...->...", g, V, R)     # R(grad, V)
        dges = np.einsum("l,lab...->ab...", g, dR)     # nabla_grad R
        dVs = np.einsum("l,lab...->ab...", V, dR)      # nabla_V R
        HV = H @ V
        for j in range(n):
            term = c1 * RV[j] + c2 * fval * np.einsum("a,a...->...", g, R[:, j])
            term = term - lam * lam * g[j] * RgV
            term = term - lam * np.einsum("a,a...->...", V, dges[:, j])
            term = term - lam * np.einsum("a,a...->...", g, dVs[:, j])
            term = term + (n - 4.0) * np.einsum("a,a...->...", HV, R[:, j])
            term = term + lam * np.einsum("a,a...->...", H[j], np.einsum("b,ba...->a...", V, R))
            lhs += inner(term, RV[j])

    R2 = 0.5 * sum(inner(R[i, j], R[i, j]) for i in range(n) for j in range(n))
    igR2 = sum(inner(np.einsum("a,a...->...", g, R[:, j]), np.einsum("a,a...->...", g, R[:, j])) for j in range(n))
    gradR2 = float(sum(g[l] * sum(inner(dR[l, i, j], R[i, j]) for i in range(n) for j in range(n)) for l in range(n)))
    Hterm = float(sum(H[i, k] * inner(R[k, j], R[i, j]) for i in range(n) for j in range(n) for k in range(n)))
    rhs = lam_e**2 * (2.0 * c1 * R2 + lam * lam * igR2 - 1.5 * lam * gradR2 + (n - 4.0 + lam) * Hterm)
    return lhs, rhs


# ---------------------------------------------------------------------------
# integration-by-parts identities (hold for every smooth connection)


def divergence_identities(entry: CatalogEntry, phi: ScalarField, lam: float,
                          nodes: int = 100_000, seed: int = 42, chunk: int = 20_000):
    """Quadrature residuals of the two divergence identities in the trace proof."""
    _require_sphere(entry)
    geom = entry.geometry
    n = geom.n
    s = n - 4.0 + 2.0 * lam
    pot = entry.potential
    R = curvature(pot)

    def omega_vec(pts):
        # metric dual of X -> sum_j <R(grad phi, e_j), R(X, e_j)>
        pts = np.atleast_2d(pts)
        Rv = pot.curvature_val(pts)
        w = inverse_metric_diag(geom, pts)
        gphi = grad_scalar(geom, pts, phi)
        igR = np.einsum("ma,mar...->mr...", gphi, Rv)
        comp = np.einsum("mn,mrn->mr", w, batch_inner(igR[:, None, :], Rv))
        return w * comp

    V = VectorField(components=omega_vec)

    def integrand1(pts):
        div = divergence_vector(geom, V, pts)
        return -np.exp(s * phi(pts)) * div

    def integrand1_rhs(pts):
        pts = np.atleast_2d(pts)
        Rv = pot.curvature_val(pts)
        w = inverse_metric_diag(geom, pts)
        gphi = grad_scalar(geom, pts, phi)
        igR = np.einsum("ma,mar...->mr...", gphi, Rv)
        val = np.einsum("mr,mr->m", w, batch_inner(igR, igR))
        return s * np.exp(s * phi(pts)) * val

    def r2_field(pts):
        return pointwise_norm2(R, np.atleast_2d(pts))

    def integrand2(pts):
        pts = np.atleast_2d(pts)
        gphi = grad_scalar(geom, pts, phi)
        dr2 = fd_jacobian(r2_field, pts, h=1e-3)
        return 0.5 * np.exp(s * phi(pts)) * np.einsum("ma,ma->m", gphi, dr2)

    def integrand2_rhs(pts):
        pts = np.atleast_2d(pts)
        lap_pos = -laplacian_scalar(geom, pts, phi)
        gphi = grad_scalar(geom, pts, phi)
        g2 = np.einsum("ma,ma,ma->m", gphi, gphi, metric_diag(geom, pts))
        return 0.5 * np.exp(s * phi(pts)) * (lap_pos - s * g2) * r2_field(pts)

    from .geometry import integrate

    res = {}
    for name, lhs_fn, rhs_fn in (("divergence", integrand1, integrand1_rhs),
                                 ("gradient", integrand2, integrand2_rhs)):
        lhs = integrate(geom, lhs_fn, nodes=nodes, seed=seed, chunk=chunk)
        rhs = integrate(geom, rhs_fn, nodes=nodes, seed=seed, chunk=chunk)
        sigma = math.hypot(lhs.std_error, rhs.std_error)
        res[name] = {"lhs": lhs.value, "rhs": rhs.value, "sigma": sigma,
                     "residual": lhs.value - rhs.value}
    return res


# ---------------------------------------------------------------------------
# gauge orthogonality


def gauge_orthogonality(entry: CatalogEntry, phi: Optional[ScalarField], lam: float,
                        v: np.ndarray, pts: np.ndarray):
    """Residual of the conformal-codifferential identity for i_V R.

    General form (any connection): delta~(i_V R) + delta~R(V) + (lam + 2)
    R(V, grad~ phi) = 0; for Yang-Mills entries at lam = -2 the contraction
    itself lies in the kernel of the conformal codifferential.
    """
    _require_sphere(entry)
    geom = entry.geometry
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    pot = entry.potential
    phi_eff = phi if phi is not None else constant_scalar(0.0)
    fv, V = conformal_gradient_field(geom, np.asarray(v, dtype=float))
    R = curvature(pot)
    from .forms import scalar_times_form

    scale_field = ScalarField(fn=lambda q: np.exp(lam * phi_eff(q)))
    B = scalar_times_form(scale_field, interior_product(V, R)) if lam != 0.0 else interior_product(V, R)
    lhs = delta_nabla_conformal(pot, B, phi_eff)(pts)
    deltaR = delta_nabla_conformal(pot, R, phi_eff)
    Vt = np.exp(lam * phi_eff(pts))[:, None] * V(pts)
    term2 = np.einsum("ma,ma...->m...", Vt, deltaR(pts))
    gphi_tilde = np.exp(-2.0 * phi_eff(pts))[:, None] * grad_scalar(geom, pts, phi_eff)
    Rv = pot.curvature_val(pts)
    term3 = (lam + 2.0) * np.einsum("ma,mb,mab...->m...", Vt, gphi_tilde, Rv)
    resid = lhs + term2 + term3
    scale = max(float(np.max(np.abs(lhs))), float(np.sqrt(np.max(pointwise_norm2(R, pts)))), 1e-12)
    return resid, float(np.max(np.abs(resid))) / scale, lhs


# ---------------------------------------------------------------------------
# stability criteria report


def stability_criterion_report(phi: ScalarField, n: int, samples: int = 4000, seed: int = 42):
    """Evaluate both nonexistence criteria pointwise under both Laplacian signs.

    The divergence-form Laplacian (negative spectrum) is the library
    convention; the report also shows the opposite convention so either
    reading of the criteria can be checked at a glance.
    """
    from .geometry import round_sphere

    geom = round_sphere(n)
    rng = np.random.default_rng(seed)
    pts = _stereo_chart(_mc_sphere_ambient(n, samples, rng))
    lap = laplacian_scalar(geom, pts, phi)
    gphi = grad_scalar(geom, pts, phi)
    g2 = np.einsum("ma,ma,ma->m", gphi, gphi, metric_diag(geom, pts))
    report = {"n": n, "conventions": {}}
    for label, lap_signed in (("div-grad", lap), ("neg-div-grad", -lap)):
        expr1 = 0.5 * lap_signed - 0.5 * (n - 4.0) * g2 + 2.0
        bracket2 = 0.5 * lap_signed - 0.5 * (n + 4.0) * g2 + 2.0
        expr2 = (n - 4.0) * bracket2
        rec = {
            "weak_expr_min": float(np.min(expr1)),
            "weak_expr_max": float(np.max(expr1)),
            "weak_holds": bool(np.min(expr1) > 0.0),
            "strict_expr_min": float(np.min(expr2)),
            "strict_holds": bool(np.min(expr2) >= 0.0),
        }
        rec["weak_verdict"] = (
            "no nontrivial weakly stable Yang-Mills connection" if rec["weak_holds"] and n >= 5 else "no conclusion"
        )
        rec["strict_verdict"] = (
            "no nontrivial stable Yang-Mills connection" if rec["strict_holds"] else "no conclusion"
        )
        report["conventions"][label] = rec
    return report
