"""Gauge potentials: closed-form frame connections, polynomial potentials, the
one-instanton su(2) potential, and decay-envelope wrappers.

Every potential exposes values, jacobians, and a family of weighted second and
third derivative queries.  The weighted queries are what the quadrature-scale
second-variation path consumes; analytic subclasses implement them from jets
of the metric log factors, and the base class supplies nested-FD fallbacks so
any potential works (slowly) through the same interface.
"""

from __future__ import annotations

import numpy as np

from .geometry import (
    GeometrySpec,
    fd_jacobian,
    log_factor_jets,
    round_sphere,
)
from .jets import jet_add, jet_const, jet_norm2, jet_reciprocal
from .liealg import StructureGroup, algebra_dtype, batch_bracket

__all__ = [
    "GaugePotential",
    "ZeroPotential",
    "RoundFramePotential",
    "ProductFramePotential",
    "GeneralDiagFramePotential",
    "PolynomialPotential",
    "BPSTPotential",
    "EnvelopePotential",
    "frame_potential",
]


class GaugePotential:
    """Connection 1-form A with value/jacobian evaluation and weighted jet queries."""

    def __init__(self, group: StructureGroup, geom: GeometrySpec, fd_step: float = 1e-3, fd_order: int = 4):
        self.group = group
        self.geom = geom
        self.fd_step = fd_step
        self.fd_order = fd_order

    # --- required surface -------------------------------------------------
    def val(self, pts: np.ndarray) -> np.ndarray:  # (m, slot, r, r)
        raise NotImplementedError

    def jac(self, pts: np.ndarray) -> np.ndarray:  # (m, d, slot, r, r)
        return fd_jacobian(self.val, pts, h=self.fd_step, order=self.fd_order)

    def curvature_val(self, pts: np.ndarray) -> np.ndarray:
        """R_{mu nu} = d_mu A_nu - d_nu A_mu + [A_mu, A_nu]."""
        dA = self.jac(pts)
        Av = self.val(pts)
        R = dA - dA.swapaxes(1, 2)
        R += batch_bracket(Av[:, :, None], Av[:, None, :])
        return R

    # --- weighted second-derivative queries --------------------------------
    # naming: cc = both derivatives contracted, xc = cross deriv/slot contraction

    def hess_genslot(self, pts, U):
        """sum_{mu nu} U_{mu nu} d_mu d_nu A_rho -> (m, rho, r, r)."""
        H = self._hess_full(pts)
        return np.einsum("muv,muvr...->mr...", U, H)

    def hess_xc(self, pts, w):
        """sum_mu w_mu d_mu d_rho A_mu -> (m, rho, r, r)."""
        H = self._hess_full(pts)
        return np.einsum("mu,muru...->mr...", w, H)

    def hess_gdc(self, pts, U):
        """sum_{a b} U_{a b} d_rho d_b A_a -> (m, rho, r, r)."""
        H = self._hess_full(pts)
        return np.einsum("mab,mrba...->mr...", U, H)

    def hess_vec(self, pts, u):
        """sum_alpha u_alpha d_mu d_alpha A_rho -> (m, mu, rho, r, r)."""
        H = self._hess_full(pts)
        return np.einsum("ma,muar...->mur...", u, H)

    def hess_vecslot(self, pts, u):
        """sum_alpha u_alpha d_mu d_nu A_alpha -> (m, mu, nu, r, r)."""
        H = self._hess_full(pts)
        return np.einsum("ma,muva...->muv...", u, H)

    # --- weighted third-derivative queries ----------------------------------
    def jet3_ccs(self, pts, w, u):
        """sum w_mu u_alpha d_mu d_mu d_alpha A_rho -> (m, rho slot, r, r)."""
        J = self._jet3_full(pts)
        return np.einsum("mu,ma,muuar...->mr...", w, u, J)

    def jet3_ccd(self, pts, w, u):
        """sum w_mu u_alpha d_mu d_mu d_rho A_alpha -> (m, rho deriv, r, r)."""
        J = self._jet3_full(pts)
        return np.einsum("mu,ma,muura...->mr...", w, u, J)

    def jet3_mixed(self, pts, w, u):
        """sum w_mu u_alpha d_mu d_alpha d_rho A_mu -> (m, rho deriv, r, r)."""
        J = self._jet3_full(pts)
        return np.einsum("mu,ma,muaru...->mr...", w, u, J)

    # --- FD fallbacks -------------------------------------------------------
    def _hess_full(self, pts):
        return fd_jacobian(self.jac, pts, h=self.fd_step, order=self.fd_order)

    def _jet3_full(self, pts):
        return fd_jacobian(self._hess_full, pts, h=self.fd_step, order=self.fd_order)


class ZeroPotential(GaugePotential):
    def val(self, pts):
        m = pts.shape[0]
        n = self.geom.n
        r = self.group.r
        return np.zeros((m, n, r, r), dtype=algebra_dtype(self.group))

    def jac(self, pts):
        m = pts.shape[0]
        n = self.geom.n
        r = self.group.r
        return np.zeros((m, n, n, r, r), dtype=algebra_dtype(self.group))

    def _hess_full(self, pts):
        m, n, r = pts.shape[0], self.geom.n, self.group.r
        return np.zeros((m, n, n, n, r, r), dtype=algebra_dtype(self.group))

    def _jet3_full(self, pts):
        m, n, r = pts.shape[0], self.geom.n, self.group.r
        return np.zeros((m, n, n, n, n, r, r), dtype=algebra_dtype(self.group))


# ---------------------------------------------------------------------------
# frame connections


def _asm_slot(c):
    """X[m, rho, a, b] = delta_{a rho} c_b - delta_{b rho} c_a from c (m, n)."""
    m, n = c.shape
    Y = np.zeros((m, n, n, n))
    ar = np.arange(n)
    Y[:, ar, ar, :] = c[:, None, :]
    return Y - Y.swapaxes(2, 3)


class RoundFramePotential(GaugePotential):
    """Levi-Civita connection of a conformally flat chart in its normalized frame.

    With metric exp(2 l) delta and frame E_a = exp(-l) d_a the connection form
    is A_mu[a,b] = delta_{a mu} d_b l - delta_{b mu} d_a l, so every derivative
    query reduces to jets of the single scalar l.
    """

    def __init__(self, geom: GeometrySpec, fd_step: float = 1e-3, fd_order: int = 4):
        if geom.variant not in ("round", "conformal"):
            raise ValueError("RoundFramePotential needs a (conformal) sphere geometry")
        super().__init__(StructureGroup("SO", geom.n), geom, fd_step, fd_order)
        self._ljet_cache = {}

    def _ljet(self, pts, order):
        # queries hit the same chunk of points many times per evaluation
        key = (id(pts), pts.shape[0])
        hit = self._ljet_cache.get(key)
        if hit is not None and hit[0] is pts and hit[1].order >= order:
            return hit[1]
        jets, _ = log_factor_jets(self.geom, pts, order)
        if len(self._ljet_cache) > 8:
            self._ljet_cache.clear()
        self._ljet_cache[key] = (pts, jets[0])
        return jets[0]

    def val(self, pts):
        p = self._ljet(pts, 1).d[1]
        return _asm_slot(p)

    def jac(self, pts):
        h = self._ljet(pts, 2).d[2]  # (m, d, b)
        m, n = h.shape[0], h.shape[1]
        Y = np.zeros((m, n, n, n, n))
        ar = np.arange(n)
        Y[:, :, ar, ar, :] = h[:, :, None, :]
        return Y - Y.swapaxes(3, 4)

    def hess_genslot(self, pts, U):
        t = self._ljet(pts, 3).d[3]
        return _asm_slot(np.einsum("muv,muvb->mb", U, t))

    def hess_xc(self, pts, w):
        t = self._ljet(pts, 3).d[3]
        term = np.einsum("ma,marb->mrab", w, t)
        return term - term.swapaxes(2, 3)

    def hess_gdc(self, pts, U):
        t = self._ljet(pts, 3).d[3]
        term = np.einsum("mad,mrdb->mrab", U, t)
        return term - term.swapaxes(2, 3)

    def hess_vec(self, pts, u):
        t = self._ljet(pts, 3).d[3]
        c = np.einsum("ma,muab->mub", u, t)  # (m, mu, b)
        m, n = u.shape[0], u.shape[1]
        Y = np.zeros((m, n, n, n, n))
        ar = np.arange(n)
        Y[:, :, ar, ar, :] = c[:, :, None, :]
        return Y - Y.swapaxes(3, 4)

    def hess_vecslot(self, pts, u):
        t = self._ljet(pts, 3).d[3]
        term = np.einsum("ma,muvb->muvab", u, t)
        return term - term.swapaxes(3, 4)

    def jet3_ccs(self, pts, w, u):
        q = self._ljet(pts, 4).d[4]
        return _asm_slot(np.einsum("mu,ma,muuab->mb", w, u, q))

    def jet3_ccd(self, pts, w, u):
        q = self._ljet(pts, 4).d[4]
        s = np.einsum("mu,muurb->mrb", w, q)
        term = np.einsum("ma,mrb->mrab", u, s)
        return term - term.swapaxes(2, 3)

    def jet3_mixed(self, pts, w, u):
        q = self._ljet(pts, 4).d[4]
        d = np.einsum("mc,macrb->marb", u, q)
        term = np.einsum("ma,marb->mrab", w, d)
        return term - term.swapaxes(2, 3)


class GeneralDiagFramePotential(GaugePotential):
    """Frame connection of any diagonal metric diag(exp(2 l_mu)).

    A_mu[a,b] = delta_{mu a} G_{a b} - delta_{mu b} G_{b a} with
    G_{a b} = exp(l_a - l_b) d_b l_a.  Jets of G are materialized to order 3,
    which is fine for the modest dimensions the warped suite uses.
    """

    def __init__(self, geom: GeometrySpec, fd_step: float = 1e-3, fd_order: int = 4):
        super().__init__(StructureGroup("SO", geom.n), geom, fd_step, fd_order)
        self._g_cache = {}

    def _l_full(self, pts, order):
        jets, block_of = log_factor_jets(self.geom, pts, order)
        return [np.stack([j.d[k] for j in jets], axis=1)[:, block_of] for k in range(order + 1)]

    def _g_jets(self, pts, order):
        key = (id(pts), pts.shape[0])
        hit = self._g_cache.get(key)
        if hit is not None and hit[0] is pts and len(hit[1]) > order:
            return hit[1][: order + 1]
        out = self._g_jets_build(pts, order)
        if len(self._g_cache) > 8:
            self._g_cache.clear()
        self._g_cache[key] = (pts, out)
        return out

    def _g_jets_build(self, pts, order):
        L = self._l_full(pts, order + 1)
        m, n = L[0].shape
        D = [L[k][:, :, None] - L[k][:, None, :] for k in range(order + 1)]  # (m,a,b,[d]^k), l_a - l_b
        # rearrange so the (a, b) axes lead: D_k has shape (m, a, [d]^k) broadcast minus
        Dk = []
        for k in range(order + 1):
            a_part = np.expand_dims(L[k], 2)  # (m, a, 1, [d]^k)
            b_part = np.expand_dims(L[k], 1)  # (m, 1, b, [d]^k)
            Dk.append(a_part - b_part)
        E = [None] * (order + 1)
        E[0] = np.exp(Dk[0])
        if order >= 1:
            E[1] = E[0][..., None] * Dk[1]
        if order >= 2:
            E[2] = E[0][..., None, None] * (
                np.einsum("mabd,mabe->mabde", Dk[1], Dk[1]) + Dk[2]
            )
        if order >= 3:
            ddd = np.einsum("mabd,mabe,mabf->mabdef", Dk[1], Dk[1], Dk[1])
            d12 = (
                np.einsum("mabd,mabef->mabdef", Dk[1], Dk[2])
                + np.einsum("mabe,mabdf->mabdef", Dk[1], Dk[2])
                + np.einsum("mabf,mabde->mabdef", Dk[1], Dk[2])
            )
            E[3] = E[0][..., None, None, None] * (ddd + d12 + Dk[3])
        # P_k[m,a,b,[d]^k] = d_b l_a derivatives: from L_{k+1}[m,a,b,d...]
        P = [L[k + 1] for k in range(order + 1)]
        G = [None] * (order + 1)
        G[0] = E[0] * P[0]
        if order >= 1:
            G[1] = E[1] * P[0][..., None] + E[0][..., None] * P[1]
        if order >= 2:
            G[2] = (
                E[2] * P[0][..., None, None]
                + np.einsum("mabd,mabe->mabde", E[1], P[1])
                + np.einsum("mabe,mabd->mabde", E[1], P[1])
                + E[0][..., None, None] * P[2]
            )
        if order >= 3:
            G[3] = (
                E[3] * P[0][..., None, None, None]
                + np.einsum("mabd,mabef->mabdef", E[1], P[2])
                + np.einsum("mabe,mabdf->mabdef", E[1], P[2])
                + np.einsum("mabf,mabde->mabdef", E[1], P[2])
                + np.einsum("mabde,mabf->mabdef", E[2], P[1])
                + np.einsum("mabdf,mabe->mabdef", E[2], P[1])
                + np.einsum("mabef,mabd->mabdef", E[2], P[1])
                + E[0][..., None, None, None] * P[3]
            )
        return G[: order + 1]

    @staticmethod
    def _asm(termG):
        """From T[m, ..., a, b] meaning delta_{mu a}-contracted G build A-like arrays."""
        return termG - np.swapaxes(termG, -2, -1)

    def val(self, pts):
        (G,) = self._g_jets(pts, 0)
        m, n = G.shape[0], G.shape[1]
        Y = np.zeros((m, n, n, n))
        ar = np.arange(n)
        Y[:, ar, ar, :] = G
        return Y - Y.swapaxes(2, 3)

    def jac(self, pts):
        G0, G1 = self._g_jets(pts, 1)
        m, n = G0.shape[0], G0.shape[1]
        Y = np.zeros((m, n, n, n, n))
        ar = np.arange(n)
        Gd = np.moveaxis(G1, 3, 1)  # (m, d, a, b)
        Y[:, :, ar, ar, :] = Gd
        return Y - Y.swapaxes(3, 4)

    def hess_genslot(self, pts, U):
        _, _, G2 = self._g_jets(pts, 2)
        C = np.einsum("muv,mabuv->mab", U, G2)
        m, n = C.shape[0], C.shape[1]
        Y = np.zeros((m, n, n, n))
        ar = np.arange(n)
        Y[:, ar, ar, :] = C
        return Y - Y.swapaxes(2, 3)

    def hess_xc(self, pts, w):
        _, _, G2 = self._g_jets(pts, 2)
        term = np.einsum("ma,mabar->mrab", w, G2)
        return term - term.swapaxes(2, 3)

    def hess_gdc(self, pts, U):
        _, _, G2 = self._g_jets(pts, 2)
        term = np.einsum("mad,mabrd->mrab", U, G2)
        return term - term.swapaxes(2, 3)

    def hess_vec(self, pts, u):
        _, _, G2 = self._g_jets(pts, 2)
        c = np.einsum("mc,mabuc->muab", u, G2)
        m, n = u.shape[0], u.shape[1]
        Y = np.zeros((m, n, n, n, n))
        ar = np.arange(n)
        Y[:, :, ar, ar, :] = c
        return Y - Y.swapaxes(3, 4)

    def hess_vecslot(self, pts, u):
        _, _, G2 = self._g_jets(pts, 2)
        term = np.einsum("ma,mabuv->muvab", u, G2)
        return term - term.swapaxes(3, 4)

    def jet3_ccs(self, pts, w, u):
        G = self._g_jets(pts, 3)
        C = np.einsum("mu,mc,mabuuc->mab", w, u, G[3])
        m, n = C.shape[0], C.shape[1]
        Y = np.zeros((m, n, n, n))
        ar = np.arange(n)
        Y[:, ar, ar, :] = C
        return Y - Y.swapaxes(2, 3)

    def jet3_ccd(self, pts, w, u):
        G = self._g_jets(pts, 3)
        s = np.einsum("mu,mabuur->mabr", w, G[3])
        term = np.einsum("ma,mabr->mrab", u, s)
        return term - term.swapaxes(2, 3)

    def jet3_mixed(self, pts, w, u):
        G = self._g_jets(pts, 3)
        term = np.einsum("ma,mc,mabacr->mrab", w, u, G[3])
        return term - term.swapaxes(2, 3)


class ProductFramePotential(GaugePotential):
    """Block-diagonal frame connection of a product of round spheres."""

    def __init__(self, geom: GeometrySpec, fd_step: float = 1e-3, fd_order: int = 4):
        if geom.variant != "products":
            raise ValueError("ProductFramePotential needs a product geometry")
        super().__init__(StructureGroup("SO", geom.n), geom, fd_step, fd_order)
        self.blocks = [
            (sl, RoundFramePotential(round_sphere(nk, x_max=geom.x_max), fd_step, fd_order))
            for sl, nk in zip(geom.block_slices(), geom.dims)
        ]
        self._sub_cache = {}

    def _sub_pts(self, pts):
        """Stable per-block coordinate arrays so block-level jet caches can hit."""
        key = (id(pts), pts.shape[0])
        hit = self._sub_cache.get(key)
        if hit is not None and hit[0] is pts:
            return hit[1]
        subs = [np.ascontiguousarray(pts[:, sl]) for sl, _ in self.blocks]
        if len(self._sub_cache) > 8:
            self._sub_cache.clear()
        self._sub_cache[key] = (pts, subs)
        return subs

    def _scatter(self, pts, shape_free, block_eval):
        """Assemble a global array from per-block query results."""
        m, n = pts.shape
        out = np.zeros((m,) + shape_free + (n, n))
        subs = self._sub_pts(pts)
        for (sl, pot), sub in zip(self.blocks, subs):
            res = block_eval(sl, pot, sub)
            idx = (slice(None),) + tuple([sl] * len(shape_free)) + (sl, sl)
            out[idx] += res
        return out

    def val(self, pts):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.val(sub))

    def jac(self, pts):
        n = self.geom.n
        return self._scatter(pts, (n, n), lambda sl, pot, sub: pot.jac(sub))

    def hess_genslot(self, pts, U):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.hess_genslot(sub, U[:, sl, sl]))

    def hess_xc(self, pts, w):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.hess_xc(sub, w[:, sl]))

    def hess_gdc(self, pts, U):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.hess_gdc(sub, U[:, sl, sl]))

    def hess_vec(self, pts, u):
        n = self.geom.n
        return self._scatter(pts, (n, n), lambda sl, pot, sub: pot.hess_vec(sub, u[:, sl]))

    def hess_vecslot(self, pts, u):
        n = self.geom.n
        return self._scatter(pts, (n, n), lambda sl, pot, sub: pot.hess_vecslot(sub, u[:, sl]))

    def jet3_ccs(self, pts, w, u):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.jet3_ccs(sub, w[:, sl], u[:, sl]))

    def jet3_ccd(self, pts, w, u):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.jet3_ccd(sub, w[:, sl], u[:, sl]))

    def jet3_mixed(self, pts, w, u):
        n = self.geom.n
        return self._scatter(pts, (n,), lambda sl, pot, sub: pot.jet3_mixed(sub, w[:, sl], u[:, sl]))


def frame_potential(geom: GeometrySpec, fd_step: float = 1e-3, fd_order: int = 4) -> GaugePotential:
    """Levi-Civita frame connection for any supported geometry."""
    if geom.variant in ("round", "conformal"):
        return RoundFramePotential(geom, fd_step, fd_order)
    if geom.variant == "products":
        return ProductFramePotential(geom, fd_step, fd_order)
    return GeneralDiagFramePotential(geom, fd_step, fd_order)


# ---------------------------------------------------------------------------
# polynomial potentials


class PolynomialPotential(GaugePotential):
    """Seeded random polynomial connection; analytic derivatives to all orders."""

    def __init__(self, geom: GeometrySpec, group: StructureGroup, seed: int, degree: int = 2,
                 n_terms: int = 6, scale: float = 0.5, fd_step: float = 1e-3, fd_order: int = 4):
        if degree > 4:
            raise ValueError("polynomial degree capped at 4")
        super().__init__(group, geom, fd_step, fd_order)
        from .forms import algebra_basis

        rng = np.random.default_rng(seed)
        n = geom.n
        basis = algebra_basis(group)
        self.exps = rng.integers(0, degree + 1, size=(n_terms, n))
        self.exps[0] = 0
        coeffs = rng.uniform(-1.0, 1.0, size=(n_terms, n, len(basis))) * scale
        self.cmat = np.tensordot(coeffs, basis, axes=([2], [0]))  # (T, slot, r, r)
        self.degree = degree

    def _dmono(self, pts, shifts):
        """Monomial derivative values for a tuple of derivative directions."""
        e = self.exps.copy().astype(float)
        fac = np.ones(len(e))
        for mu in shifts:
            fac = fac * e[:, mu]
            e[:, mu] = np.maximum(e[:, mu] - 1.0, 0.0)
        vals = np.prod(pts[:, None, :] ** e[None, :, :], axis=2)
        return fac[None, :] * vals  # (m, T)

    def val(self, pts):
        return np.einsum("mt,tu...->mu...", self._dmono(pts, ()), self.cmat)

    def jac(self, pts):
        m, n = pts.shape
        cols = [self._dmono(pts, (d,)) for d in range(n)]
        return np.einsum("dmt,tu...->mdu...", np.stack(cols), self.cmat)

    def _hess_full(self, pts):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, n, n, r, r), dtype=self.cmat.dtype)
        for d1 in range(n):
            for d2 in range(d1, n):
                block = np.einsum("mt,tu...->mu...", self._dmono(pts, (d1, d2)), self.cmat)
                out[:, d1, d2] = block
                if d2 != d1:
                    out[:, d2, d1] = block
        return out

    def _jet3_full(self, pts):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, n, n, n, r, r), dtype=self.cmat.dtype)
        import itertools

        for combo in itertools.combinations_with_replacement(range(n), 3):
            block = np.einsum("mt,tu...->mu...", self._dmono(pts, combo), self.cmat)
            for perm in set(itertools.permutations(combo)):
                out[(slice(None),) + perm] = block
        return out

    # weighted queries contract the exact hess/jet3 assembled above; memory is
    # bounded by evaluating them blockwise in the D-axis when m is large
    def hess_genslot(self, pts, U):
        m, n = pts.shape
        acc = 0.0
        for d1 in range(n):
            for d2 in range(n):
                acc = acc + U[:, d1, d2, None, None, None] * np.einsum(
                    "mt,tu...->mu...", self._dmono(pts, (d1, d2)), self.cmat
                )
        return acc

    def hess_xc(self, pts, w):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, r, r), dtype=self.cmat.dtype)
        for mu in range(n):
            for rho in range(n):
                out[:, rho] += w[:, mu, None, None] * np.einsum(
                    "mt,t...->m...", self._dmono(pts, (mu, rho)), self.cmat[:, mu]
                )
        return out

    def hess_gdc(self, pts, U):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, r, r), dtype=self.cmat.dtype)
        for a in range(n):
            for b in range(n):
                for rho in range(n):
                    out[:, rho] += U[:, a, b, None, None] * np.einsum(
                        "mt,t...->m...", self._dmono(pts, (rho, b)), self.cmat[:, a]
                    )
        return out

    def hess_vec(self, pts, u):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, n, r, r), dtype=self.cmat.dtype)
        for mu in range(n):
            for alpha in range(n):
                out[:, mu] += u[:, alpha, None, None, None] * np.einsum(
                    "mt,tu...->mu...", self._dmono(pts, (mu, alpha)), self.cmat
                )
        return out

    def hess_vecslot(self, pts, u):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, n, r, r), dtype=self.cmat.dtype)
        for mu in range(n):
            for nu in range(mu, n):
                block = np.einsum("mt,ma,ta...->m...", self._dmono(pts, (mu, nu)), u, self.cmat)
                out[:, mu, nu] += block
                if nu != mu:
                    out[:, nu, mu] += block
        return out

    def jet3_ccs(self, pts, w, u):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, r, r), dtype=self.cmat.dtype)
        for mu in range(n):
            for alpha in range(n):
                out += (w[:, mu] * u[:, alpha])[:, None, None, None] * np.einsum(
                    "mt,tu...->mu...", self._dmono(pts, (mu, mu, alpha)), self.cmat
                )
        return out

    def jet3_ccd(self, pts, w, u):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, r, r), dtype=self.cmat.dtype)
        for mu in range(n):
            for alpha in range(n):
                for rho in range(n):
                    out[:, rho] += (w[:, mu] * u[:, alpha])[:, None, None] * np.einsum(
                        "mt,t...->m...", self._dmono(pts, (mu, mu, rho)), self.cmat[:, alpha]
                    )
        return out

    def jet3_mixed(self, pts, w, u):
        m, n = pts.shape
        r = self.group.r
        out = np.zeros((m, n, r, r), dtype=self.cmat.dtype)
        for mu in range(n):
            for alpha in range(n):
                for rho in range(n):
                    out[:, rho] += (w[:, mu] * u[:, alpha])[:, None, None] * np.einsum(
                        "mt,t...->m...", self._dmono(pts, (mu, alpha, rho)), self.cmat[:, mu]
                    )
        return out


# ---------------------------------------------------------------------------
# BPST instanton potential on the 4-sphere chart


_QUAT_UNITS = np.array(
    [
        [[1, 0], [0, 1]],  # 1
        [[1j, 0], [0, -1j]],  # i
        [[0, 1], [-1, 0]],  # j
        [[0, 1j], [1j, 0]],  # k
    ],
    dtype=complex,
)


class BPSTPotential(GaugePotential):
    """Standard one-instanton su(2) potential A = Im(x dxbar) / (1 + |x|^2)."""

    def __init__(self, geom: GeometrySpec, fd_step: float = 1e-3, fd_order: int = 4):
        if geom.n != 4:
            raise ValueError("instanton potential lives on a 4-dimensional chart")
        super().__init__(StructureGroup("SU", 2), geom, fd_step, fd_order)
        # M[mu, nu] = Im(e_nu conj(e_mu)) as su(2) matrices
        M = np.zeros((4, 4, 2, 2), dtype=complex)
        for mu in range(4):
            for nu in range(4):
                prod = _QUAT_UNITS[nu] @ _quat_conj(mu)
                M[mu, nu] = _su2_imag(prod)
        self.M = M

    def _u_jets(self, pts, order):
        m, n = pts.shape
        s = jet_add(jet_norm2(pts, order), jet_const(1.0, m, n, order))
        return jet_reciprocal(s)

    def val(self, pts):
        u = self._u_jets(pts, 0)
        N = np.einsum("unab,mn->muab", self.M, pts)
        return N * u.d[0][:, None, None, None]

    def jac(self, pts):
        u = self._u_jets(pts, 1)
        N = np.einsum("unab,mn->muab", self.M, pts)
        t1 = np.einsum("udab,m->mduab", self.M, u.d[0])
        t2 = np.einsum("muab,md->mduab", N, u.d[1])
        return t1 + t2

    def _hess_full(self, pts):
        u = self._u_jets(pts, 2)
        N = np.einsum("unab,mn->muab", self.M, pts)
        # d_d d_e (N_u u) = M[u,d] du_e + M[u,e] du_d + N_u d2u_{de}
        return (
            np.einsum("udab,me->mdeuab", self.M, u.d[1])
            + np.einsum("ueab,md->mdeuab", self.M, u.d[1])
            + np.einsum("muab,mde->mdeuab", N, u.d[2])
        )

    def _jet3_full(self, pts):
        u = self._u_jets(pts, 3)
        N = np.einsum("unab,mn->muab", self.M, pts)
        # d_d d_e d_f (N_u u) = M[u,d] d2u_{ef} + M[u,e] d2u_{df} + M[u,f] d2u_{de} + N_u d3u
        return (
            _place_M_jet3(self.M, u.d[2], 0)
            + _place_M_jet3(self.M, u.d[2], 1)
            + _place_M_jet3(self.M, u.d[2], 2)
            + np.einsum("muab,mdef->mdefuab", N, u.d[3])
        )


def _place_M_jet3(M, d2u, which):
    if which == 0:
        return np.einsum("udab,mef->mdefuab", M, d2u)
    if which == 1:
        return np.einsum("ueab,mdf->mdefuab", M, d2u)
    return np.einsum("ufab,mde->mdefuab", M, d2u)


def _quat_conj(mu):
    """Matrix of the conjugated quaternion unit: conj(1) = 1, conj(e_i) = -e_i."""
    return _QUAT_UNITS[0] if mu == 0 else -_QUAT_UNITS[mu]


def _su2_imag(q):
    """Traceless anti-Hermitian part of a quaternion matrix (drops the real-unit part)."""
    return q - 0.5 * np.trace(q) * np.eye(2)


# ---------------------------------------------------------------------------
# envelope wrapper


class EnvelopePotential(GaugePotential):
    """Potential multiplied by a smooth radial decay envelope (warped geometries)."""

    def __init__(self, base: GaugePotential, env_fn, denv_fn):
        super().__init__(base.group, base.geom, base.fd_step, base.fd_order)
        self.base = base
        self.env_fn = env_fn
        self.denv_fn = denv_fn

    def val(self, pts):
        e = self.env_fn(pts[:, 0])
        return e[:, None, None, None] * self.base.val(pts)

    def jac(self, pts):
        e = self.env_fn(pts[:, 0])
        de = self.denv_fn(pts[:, 0])
        out = e[:, None, None, None, None] * self.base.jac(pts)
        out[:, 0] += de[:, None, None, None] * self.base.val(pts)
        return out
