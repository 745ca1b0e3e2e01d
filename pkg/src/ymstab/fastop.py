"""Quadrature-scale evaluation of the second-variation operator path.

The operator form of the Hessian quadratic form needs second covariant
derivatives of the variation B at every quadrature node.  Evaluating nested
finite differences there is hopeless, so this module assembles the integrand
from weighted-jet queries: the potential supplies contracted second and third
derivatives of A, variations supply value/jacobian/weighted-hessian queries,
and everything else is einsum assembly.  The pointwise-FD operator layer in
`forms` provides the independent slow path the tests compare against.
"""

from __future__ import annotations

import numpy as np

from .geometry import (
    GeometrySpec,
    christoffel,
    fd_jacobian,
    grad_scalar,
    inverse_metric_diag,
)
from .liealg import batch_bracket_alg as batch_bracket, batch_inner


def _antiherm(prod):
    back = np.conj(np.swapaxes(prod, -1, -2)) if np.iscomplexobj(prod) else np.swapaxes(prod, -1, -2)
    return prod - back


# Summed brackets of algebra-valued batches.  Because every operand is
# anti-Hermitian, sum_mu Y X = (sum_mu X Y)^H, so each helper needs a single
# contracted product instead of a full bracket array plus a reduction; the
# contraction over (mu, matrix-inner) runs as one batched GEMM.


def _sum_bracket_ff(X, Y):
    """sum_mu [X_mu, Y_{mu rho}] -> (m, rho, r, r)."""
    m, n, r = X.shape[0], X.shape[1], X.shape[-1]
    nr = Y.shape[2]
    Xg = X.transpose(0, 2, 1, 3).reshape(m, r, n * r)
    Yg = Y.transpose(0, 1, 3, 2, 4).reshape(m, n * r, nr * r)
    prod = (Xg @ Yg).reshape(m, r, nr, r).transpose(0, 2, 1, 3)
    return _antiherm(prod)


def _sum_bracket_fr(X, Y):
    """sum_mu [X_{mu rho}, Y_mu] -> (m, rho, r, r)."""
    m, n, nr, r = X.shape[0], X.shape[1], X.shape[2], X.shape[-1]
    Xg = X.transpose(0, 2, 3, 1, 4).reshape(m, nr * r, n * r)
    Yg = Y.reshape(m, n * r, r)
    prod = (Xg @ Yg).reshape(m, nr, r, r)
    return _antiherm(prod)


def _sum_bracket_rf(X, Y):
    """sum_mu [X_{rho mu}, Y_mu] -> (m, rho, r, r)."""
    m, nr, n, r = X.shape[0], X.shape[1], X.shape[2], X.shape[-1]
    Xg = X.transpose(0, 1, 3, 2, 4).reshape(m, nr * r, n * r)
    Yg = Y.reshape(m, n * r, r)
    prod = (Xg @ Yg).reshape(m, nr, r, r)
    return _antiherm(prod)


def _sum_bracket_fr2(X, Y):
    """sum_mu [X_mu, Y_{rho mu}] -> (m, rho, r, r)."""
    m, n, r = X.shape[0], X.shape[1], X.shape[-1]
    nr = Y.shape[1]
    Xg = X.transpose(0, 2, 1, 3).reshape(m, 1, r, n * r)
    Yg = Y.reshape(m, nr, n * r, r)
    prod = (Xg @ Yg).reshape(m, nr, r, r)
    return _antiherm(prod)


def _wscale(w, X):
    return w.reshape(w.shape + (1,) * (X.ndim - 2)) * X

__all__ = [
    "PotentialContext",
    "OneFormQueries",
    "CurvatureContractionB",
    "FieldOneForm",
    "GaugeDirectionB",
    "ScaledOneForm",
    "jacobi_apply",
    "variation_integrand_terms",
]


class PotentialContext:
    """Per-chunk cache of everything the evaluator shares across variations."""

    def __init__(self, pot, geom: GeometrySpec, pts: np.ndarray, phi=None):
        self.pot = pot
        self.geom = geom
        self.pts = pts
        self.n = geom.n
        self.w = inverse_metric_diag(geom, pts)  # (m, n)
        self.gam = christoffel(geom, pts)
        self.A = pot.val(pts)
        self.dA = pot.jac(pts)  # (m, d, slot, r, r)
        R = self.dA - self.dA.swapaxes(1, 2)
        R += batch_bracket(self.A[:, :, None], self.A[:, None, :])
        self.R = R
        self.phi = phi
        if phi is not None:
            self.grad_phi = grad_scalar(geom, pts, phi)  # metric gradient (m, n)
            self.phi_vals = phi(pts)
        else:
            self.grad_phi = None
            self.phi_vals = None
        self._shared = {}

    def shared(self, key, builder):
        if key not in self._shared:
            self._shared[key] = builder()
        return self._shared[key]

    # A-level shared pieces used by several variations
    def HA(self):
        """sum_mu w_mu d_mu d_mu A_sigma, shape (m, sigma, r, r)."""
        def build():
            m, n = self.w.shape
            U = np.zeros((m, n, n))
            U[:, np.arange(n), np.arange(n)] = self.w
            return self.pot.hess_genslot(self.pts, U)

        return self.shared("HA", build)

    def pA(self):
        """sum_mu w_mu d_mu A_mu, shape (m, r, r)."""
        return self.shared("pA", lambda: np.einsum("mu,muu...->m...", self.w, self.dA))

    def hess_xc_A(self):
        """sum_mu w_mu d_mu d_rho A_mu, shape (m, rho, r, r)."""
        return self.shared("hxcA", lambda: self.pot.hess_xc(self.pts, self.w))

    def gam_w(self):
        """w_mu Gamma^lam_{mu rho}, shape (m, lam, mu, rho)."""
        return self.shared("gamw", lambda: np.einsum("mu,mlur->mlur", self.w, self.gam))

    def r2(self):
        """|R|^2 pointwise, shared by every variation on the chunk."""

        def build():
            ww = np.einsum("mu,mv->muv", self.w, self.w)
            return 0.5 * (ww * batch_inner(self.R, self.R)).sum(axis=(1, 2))

        return self.shared("r2", build)

    def S1(self):
        """sum_mu w_mu (nabla-free) d_mu R_{alpha mu}, shape (m, alpha, r, r)."""

        def build():
            t = self.hess_xc_A() - self.HA()
            t = t + _sum_bracket_fr(self.dA, _wscale(self.w, self.A))
            t = t + batch_bracket(self.A, self.pA()[:, None])
            return t

        return self.shared("S1", build)


class OneFormQueries:
    """Variation interface for the operator path: values, jacobian, weighted hessians.

    Values and jacobians are memoized per context; one evaluation feeds the
    operator, direct, and t-expansion paths.
    """

    def _memo(self, ctx) -> dict:
        store = getattr(self, "_memo_store", None)
        if store is None or store[0] is not ctx:
            self._memo_store = (ctx, {})
        return self._memo_store[1]

    def val(self, ctx) -> np.ndarray:  # (m, rho, r, r)
        memo = self._memo(ctx)
        if "val" not in memo:
            memo["val"] = self._val(ctx)
        return memo["val"]

    def jac(self, ctx) -> np.ndarray:  # (m, mu, rho, r, r)
        memo = self._memo(ctx)
        if "jac" not in memo:
            memo["jac"] = self._jac(ctx)
        return memo["jac"]

    def _val(self, ctx) -> np.ndarray:
        raise NotImplementedError

    def _jac(self, ctx) -> np.ndarray:
        raise NotImplementedError

    def hess_cc(self, ctx, w) -> np.ndarray:  # sum_mu w_mu d2_{mu mu} B_rho
        raise NotImplementedError

    def hess_xc(self, ctx, w) -> np.ndarray:  # sum_mu w_mu d2_{mu rho} B_mu
        raise NotImplementedError


def curvature_increment(ctx, B: OneFormQueries) -> np.ndarray:
    """W = dB as a 2-form: antisymmetrized jacobian plus the [A, B] part; memoized."""
    memo = B._memo(ctx)
    if "W" not in memo:
        Bv = B.val(ctx)
        dB = B.jac(ctx)
        W = dB - dB.swapaxes(1, 2)
        KAB = batch_bracket(ctx.A[:, :, None], Bv[:, None, :])
        memo["W"] = W + KAB - KAB.swapaxes(1, 2)
    return memo["W"]


class FieldOneForm(OneFormQueries):
    """Adapter: any degree-1 PFormField through FD weighted hessians (slow path)."""

    def __init__(self, field):
        self.field = field

    def _val(self, ctx):
        return self.field.comp(ctx.pts)

    def _jac(self, ctx):
        return self.field.jac(ctx.pts)

    def _hess_full(self, ctx):
        memo = self._memo(ctx)
        if "hess" not in memo:
            h = self.field.fd_step
            memo["hess"] = fd_jacobian(self.field.jac, ctx.pts, h=h, order=self.field.fd_order)
        return memo["hess"]

    def hess_cc(self, ctx, w):
        if self.field.hess_cc is not None:
            return self.field.hess_cc(ctx.pts, w)
        H = self._hess_full(ctx)
        return np.einsum("mu,muur...->mr...", w, H)

    def hess_xc(self, ctx, w):
        if self.field.hess_xc is not None:
            return self.field.hess_xc(ctx.pts, w)
        H = self._hess_full(ctx)
        return np.einsum("mu,muru...->mr...", w, H)


class CurvatureContractionB(OneFormQueries):
    """B = i_V R for a vector field with analytic jets; hessians come from the
    potential's weighted third-derivative queries with no large intermediates."""

    def __init__(self, vjets):
        # vjets: [V (m,n), dV (m, mu, alpha), d2V (m, mu, nu, alpha)]
        self.V0, self.V1, self.V2 = vjets[0], vjets[1], vjets[2]

    def _val(self, ctx):
        return np.einsum("ma,mar...->mr...", self.V0, ctx.R)

    def _P(self, ctx):
        """P_mu = sum_alpha V^alpha d_mu A_alpha."""
        memo = self._memo(ctx)
        if "P" not in memo:
            memo["P"] = np.einsum("ma,mua...->mu...", self.V0, ctx.dA)
        return memo["P"]

    def _Q(self, ctx):
        memo = self._memo(ctx)
        if "Q" not in memo:
            memo["Q"] = np.einsum("ma,ma...->m...", self.V0, ctx.A)
        return memo["Q"]

    def _jac(self, ctx):
        pot, pts = ctx.pot, ctx.pts
        term = np.einsum("mua,mar...->mur...", self.V1, ctx.R)
        J1 = pot.hess_vec(pts, self.V0) - pot.hess_vecslot(pts, self.V0)
        J1 = J1 + batch_bracket(self._P(ctx)[:, :, None], ctx.A[:, None, :])
        J1 = J1 + batch_bracket(self._Q(ctx)[:, None, None], ctx.dA)
        return term + J1

    def hess_cc(self, ctx, w):
        pot, pts = ctx.pot, ctx.pts
        A, dA = ctx.A, ctx.dA
        V0, V1, V2 = self.V0, self.V1, self.V2
        # T1: hessian of V against R
        Vcc = np.einsum("mu,muua->ma", w, V2)
        out = np.einsum("ma,mar...->mr...", Vcc, ctx.R)
        # T2 = 2 sum w_mu dV^alpha_mu d_mu R_{alpha rho}
        U2 = w[:, :, None] * V1  # (m, mu, alpha)
        t2 = pot.hess_genslot(pts, U2) - pot.hess_gdc(pts, U2.transpose(0, 2, 1))
        P2 = np.einsum("mua,mua...->m...", U2, dA)
        t2 = t2 + batch_bracket(P2[:, None], A)
        C = np.einsum("mua,ma...->mu...", U2, A)
        t2 = t2 + _sum_bracket_ff(C, dA)
        out = out + 2.0 * t2
        # T3 = sum w_mu V^alpha d2_{mu mu} R_{alpha rho}
        t3 = pot.jet3_ccs(pts, w, V0) - pot.jet3_ccd(pts, w, V0)
        HA = ctx.HA()
        HAv = np.einsum("ma,ma...->m...", V0, HA)
        t3 = t3 + batch_bracket(HAv[:, None], A)
        P = self._P(ctx)
        t3 = t3 + 2.0 * _sum_bracket_ff(_wscale(w, P), dA)
        t3 = t3 + batch_bracket(self._Q(ctx)[:, None], HA)
        return out + t3

    def hess_xc(self, ctx, w):
        pot, pts = ctx.pot, ctx.pts
        A, dA, R = ctx.A, ctx.dA, ctx.R
        V0, V1, V2 = self.V0, self.V1, self.V2
        # t1: second V-derivatives against R
        out = np.einsum("mu,mura,mau...->mr...", w, V2, R, optimize=True)
        # t2: dV against the contracted first derivative of R
        out = out + np.einsum("mra,ma...->mr...", V1, self.S1v(ctx))
        # t3: dV against d_rho R
        U2 = w[:, :, None] * V1
        t3 = pot.hess_gdc(pts, U2) - pot.hess_gdc(pts, U2.transpose(0, 2, 1))
        E = np.einsum("mua,mra...->mru...", U2, dA)
        t3 = t3 + _sum_bracket_rf(E, A)
        C = np.einsum("mua,ma...->mu...", U2, A)
        t3 = t3 + _sum_bracket_fr2(C, dA)
        out = out + t3
        # t4: V against mixed second derivatives of R
        t4 = pot.jet3_mixed(pts, w, V0) - pot.jet3_ccd(pts, w, V0)
        VS = pot.hess_vecslot(pts, V0)  # (m, mu, nu, r, r)
        t4 = t4 + _sum_bracket_fr(VS, _wscale(w, A))
        P = self._P(ctx)
        t4 = t4 + batch_bracket(P, ctx.pA()[:, None])
        t4 = t4 + _sum_bracket_fr2(_wscale(w, P), dA)
        t4 = t4 + batch_bracket(self._Q(ctx)[:, None], ctx.hess_xc_A())
        return out + t4

    def S1v(self, ctx):
        return ctx.S1()


class GaugeDirectionB(OneFormQueries):
    """B = d^nabla sigma for a 0-form sigma with analytic jets (gauge null direction)."""

    def __init__(self, sigma_jets):
        # sigma_jets: [s (m,r,r), ds (m,d,r,r), d2s (m,d,d,r,r), d3s (m,d,d,d,r,r)]
        self.s = sigma_jets

    def _val(self, ctx):
        return self.s[1] + batch_bracket(ctx.A, self.s[0][:, None])

    def _jac(self, ctx):
        out = self.s[2] + batch_bracket(ctx.dA, self.s[0][:, None, None])
        out = out + batch_bracket(ctx.A[:, None, :], self.s[1][:, :, None])
        return out

    def hess_cc(self, ctx, w):
        s1, s2, s3 = self.s[1], self.s[2], self.s[3]
        m, n = w.shape
        U = np.zeros((m, n, n))
        U[:, np.arange(n), np.arange(n)] = w
        out = np.einsum("mu,muur...->mr...", w, s3)
        out = out + batch_bracket(ctx.pot.hess_genslot(ctx.pts, U), self.s[0][:, None])
        out = out + 2.0 * _sum_bracket_fr(ctx.dA, _wscale(w, s1))
        out = out + batch_bracket(ctx.A, np.einsum("mu,muu...->m...", w, s2)[:, None])
        return out

    def hess_xc(self, ctx, w):
        s0, s1, s2, s3 = self.s
        out = np.einsum("mu,muru...->mr...", w, s3)
        out = out + batch_bracket(ctx.hess_xc_A(), s0[:, None])
        out = out + _sum_bracket_rf(ctx.dA, _wscale(w, s1))
        out = out + batch_bracket(ctx.pA()[:, None], s1)
        out = out + _sum_bracket_ff(_wscale(w, ctx.A), s2)
        return out


class ScaledOneForm(OneFormQueries):
    """eta(x) * B for a scalar with analytic jets; used by the cutoff construction."""

    def __init__(self, base: OneFormQueries, scalar_jets):
        self.base = base
        self.e = scalar_jets  # [e (m,), de (m,n), d2e (m,n,n)]

    def _val(self, ctx):
        return self.e[0][:, None, None, None] * self.base.val(ctx)

    def _jac(self, ctx):
        out = self.e[0][:, None, None, None, None] * self.base.jac(ctx)
        out = out + np.einsum("mu,mr...->mur...", self.e[1], self.base.val(ctx))
        return out

    def hess_cc(self, ctx, w):
        e0, e1, e2 = self.e
        out = e0[:, None, None, None] * self.base.hess_cc(ctx, w)
        out = out + np.einsum("mu,muu->m", w, e2)[:, None, None, None] * self.base.val(ctx)
        out = out + 2.0 * np.einsum("mu,mu,mur...->mr...", w, e1, self.base.jac(ctx))
        return out

    def hess_xc(self, ctx, w):
        e0, e1, e2 = self.e
        B = self.base.val(ctx)
        dB = self.base.jac(ctx)
        out = e0[:, None, None, None] * self.base.hess_xc(ctx, w)
        out = out + np.einsum("mu,mur,mu...->mr...", w, e2, B)
        out = out + np.einsum("mr,mu,muu...->mr...", e1, w, dB)
        out = out + np.einsum("mu,mu,mru...->mr...", w, e1, dB)
        return out


def delta_dB(ctx, B: OneFormQueries):
    """Codifferential of dB: -sum_mu w_mu (nabla_mu dB)_{mu rho}."""
    w, A, gam = ctx.w, ctx.A, ctx.gam
    Bv = B.val(ctx)
    dB = B.jac(ctx)
    W = curvature_increment(ctx, B)
    # coordinate-derivative part contracted with w
    dWc = B.hess_cc(ctx, w) - B.hess_xc(ctx, w) + _bracket_terms(ctx, Bv, dB)
    # bundle and Christoffel corrections
    out = dWc + _sum_bracket_ff(_wscale(w, A), W)
    c1 = np.einsum("mu,mluu->ml", w, gam)
    out = out - np.einsum("ml,mlr...->mr...", c1, W)
    out = out - np.einsum("mlur,mul...->mr...", ctx.gam_w(), W)
    return -out, W


def _bracket_terms(ctx, Bv, dB):
    """w-contracted coordinate derivative of the [A, B] part of dB."""
    w, A, dA = ctx.w, ctx.A, ctx.dA
    # + [d_mu A_mu, B_rho] + [A_mu, d_mu B_rho] - [d_mu A_rho, B_mu] - [A_rho, d_mu B_mu]
    t = batch_bracket(ctx.pA()[:, None], Bv)
    t = t + _sum_bracket_ff(_wscale(w, A), dB)
    t = t - _sum_bracket_fr(dA, _wscale(w, Bv))
    t = t - batch_bracket(A, np.einsum("mu,muu...->m...", w, dB)[:, None])
    return t


def jacobi_apply(ctx, B: OneFormQueries):
    """S(B) = delta d B - (n - 4) i_{grad phi} dB + r(B), shape (m, rho, r, r)."""
    delta, W = delta_dB(ctx, B)
    n = ctx.n
    out = delta
    if ctx.grad_phi is not None:
        out = out - (n - 4.0) * np.einsum("ma,mar...->mr...", ctx.grad_phi, W)
    Bv = B.val(ctx)
    out = out + _sum_bracket_fr(ctx.R, _wscale(ctx.w, Bv))
    return out


def variation_integrand_terms(ctx, B: OneFormQueries):
    """Pointwise pieces of every second-variation path, one pass per chunk.

    Returns arrays keyed: op = <S(B), B>, dd = |dB|^2, rbb = <R, [B ^ B]>,
    r2 = |R|^2, rdb = <R, dB>, dbb = <dB, bw>, bb = |bw|^2 with
    bw(X,Y) = [B(X), B(Y)] (the exact curvature expansion work terms).
    """
    w = ctx.w
    Bv = B.val(ctx)
    S = jacobi_apply(ctx, B)
    op = np.einsum("mr,mr->mr", w, batch_inner(S, Bv)).sum(axis=1)
    W = curvature_increment(ctx, B)
    ww = np.einsum("mu,mv->muv", w, w)
    dd = 0.5 * (ww * batch_inner(W, W)).sum(axis=(1, 2))
    bw = batch_bracket(Bv[:, :, None], Bv[:, None, :])
    rbb = (ww * batch_inner(ctx.R, bw)).sum(axis=(1, 2))
    r2 = ctx.r2()
    rdb = 0.5 * (ww * batch_inner(ctx.R, W)).sum(axis=(1, 2))
    dbb = 0.5 * (ww * batch_inner(W, bw)).sum(axis=(1, 2))
    bb = 0.5 * (ww * batch_inner(bw, bw)).sum(axis=(1, 2))
    return {"op": op, "dd": dd, "rbb": rbb, "r2": r2, "rdb": rdb, "dbb": dbb, "bb": bb}
