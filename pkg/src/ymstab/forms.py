"""Lie-algebra-valued differential forms and their covariant operators.

Components live in chart coordinates: a degree-p field evaluates to arrays of
shape (m, [n]^p, r, r), antisymmetric in the p slot axes.  Derivative-based
operators use analytic jets when a field carries them and nested central
finite differences otherwise, so the same operator code serves exact catalog
connections and arbitrary seeded fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import (
    GeometrySpec,
    ScalarField,
    VectorField,
    christoffel,
    fd_jacobian,
    grad_scalar,
    integrate,
    inverse_metric_diag,
    orthonormal_frame,
    ricci_transform,
    riemann_tensor,
)
from .liealg import StructureGroup, algebra_dtype, batch_bracket, batch_inner

__all__ = [
    "DegreeError",
    "PFormField",
    "zero_form",
    "polynomial_form",
    "cov_jac",
    "d_nabla",
    "delta_nabla",
    "delta_nabla_conformal",
    "interior_product",
    "scalar_times_form",
    "add_forms",
    "pointwise_inner",
    "pointwise_norm2",
    "global_inner",
    "curvature_action",
    "rough_laplacian",
    "hodge_laplacian",
    "bochner_residual",
    "commutation_residual",
]


class DegreeError(ValueError):
    pass


@dataclass
class PFormField:
    """Lie-algebra-valued p-form given by chart-coordinate component functions."""

    degree: int
    group: StructureGroup
    geom: GeometrySpec
    comp: Callable[[np.ndarray], np.ndarray]
    jac_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # optional weighted-hessian callbacks used by the quadrature-scale paths:
    #   hess_cc(pts, w) = sum_mu w_mu d_mu d_mu comp_rho     (degree 1 only)
    #   hess_xc(pts, w) = sum_mu w_mu d_mu d_rho comp_mu
    hess_cc: Optional[Callable] = None
    hess_xc: Optional[Callable] = None
    fd_step: float = 1e-3
    fd_order: int = 4

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.comp(np.atleast_2d(np.asarray(pts, dtype=float)))

    def jac(self, pts: np.ndarray) -> np.ndarray:
        """Coordinate jacobian d_mu comp, derivative axis first."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.jac_fn is not None:
            return self.jac_fn(pts)
        return fd_jacobian(self.comp, pts, h=self.fd_step, order=self.fd_order)

    def without_analytic(self) -> "PFormField":
        """Same components, finite differences only; used by convergence tests."""
        return PFormField(self.degree, self.group, self.geom, self.comp,
                          fd_step=self.fd_step, fd_order=self.fd_order)

    def with_fd(self, h: float, order: int = 4) -> "PFormField":
        return PFormField(self.degree, self.group, self.geom, self.comp, fd_step=h, fd_order=order)


def zero_form(degree: int, group: StructureGroup, geom: GeometrySpec) -> PFormField:
    r = group.r
    dt = algebra_dtype(group)

    def comp(pts):
        m = pts.shape[0]
        return np.zeros((m,) + (geom.n,) * degree + (r, r), dtype=dt)

    def jac_fn(pts):
        m = pts.shape[0]
        return np.zeros((m, geom.n) + (geom.n,) * degree + (r, r), dtype=dt)

    return PFormField(degree, group, geom, comp, jac_fn=jac_fn)


def _so_basis(r: int) -> np.ndarray:
    out = []
    for i in range(r):
        for j in range(i + 1, r):
            m = np.zeros((r, r))
            m[i, j] = 1.0
            m[j, i] = -1.0
            out.append(m)
    return np.array(out)


def _su_basis(r: int) -> np.ndarray:
    out = []
    for i in range(r):
        for j in range(i + 1, r):
            m = np.zeros((r, r), dtype=complex)
            m[i, j] = 1.0
            m[j, i] = -1.0
            out.append(m)
            m = np.zeros((r, r), dtype=complex)
            m[i, j] = 1j
            m[j, i] = 1j
            out.append(m)
    for i in range(r - 1):
        m = np.zeros((r, r), dtype=complex)
        m[i, i] = 1j
        m[i + 1, i + 1] = -1j
        out.append(m)
    return np.array(out)


def algebra_basis(group: StructureGroup) -> np.ndarray:
    return _su_basis(group.r) if group.is_complex else _so_basis(group.r)


class PolynomialSection:
    """Seeded polynomial 0-form with exact derivative arrays to any order."""

    def __init__(self, group: StructureGroup, geom: GeometrySpec, seed: int,
                 poly_degree: int = 2, n_terms: int = 6, scale: float = 1.0):
        rng = np.random.default_rng(seed)
        n = geom.n
        basis = algebra_basis(group)
        self.exps = rng.integers(0, poly_degree + 1, size=(n_terms, n))
        self.exps[0] = 0
        coeffs = rng.uniform(-1.0, 1.0, size=(n_terms, len(basis))) * scale
        self.cmat = np.tensordot(coeffs, basis, axes=([1], [0]))
        self.group = group
        self.geom = geom

    def _dmono(self, pts, shifts):
        e = self.exps.astype(float).copy()
        fac = np.ones(len(e))
        for mu in shifts:
            fac = fac * e[:, mu]
            e[:, mu] = np.maximum(e[:, mu] - 1.0, 0.0)
        return fac[None, :] * np.prod(pts[:, None, :] ** e[None, :, :], axis=2)

    def jets(self, pts, order):
        """[s, ds, d2s, ...] with derivative axes first, exact."""
        import itertools

        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m, n = pts.shape
        r = self.group.r
        out = [np.einsum("mt,t...->m...", self._dmono(pts, ()), self.cmat)]
        for k in range(1, order + 1):
            arr = np.zeros((m,) + (n,) * k + (r, r), dtype=self.cmat.dtype)
            for combo in itertools.combinations_with_replacement(range(n), k):
                block = np.einsum("mt,t...->m...", self._dmono(pts, combo), self.cmat)
                for perm in set(itertools.permutations(combo)):
                    arr[(slice(None),) + perm] = block
            out.append(arr)
        return out

    def field(self) -> PFormField:
        return PFormField(0, self.group, self.geom, lambda pts: self.jets(pts, 0)[0],
                          jac_fn=lambda pts: self.jets(pts, 1)[1])


def polynomial_form(
    degree: int,
    group: StructureGroup,
    geom: GeometrySpec,
    seed: int,
    poly_degree: int = 2,
    n_terms: int = 6,
    scale: float = 1.0,
) -> PFormField:
    """Seeded random polynomial p-form: smooth, analytic jets, generically nonzero."""
    rng = np.random.default_rng(seed)
    n = geom.n
    basis = algebra_basis(group)
    exps = rng.integers(0, poly_degree + 1, size=(n_terms, n))
    exps[0] = 0  # keep a constant term so values at the origin are generic
    nslots = (n,) * degree
    coeffs = rng.uniform(-1.0, 1.0, size=(n_terms,) + nslots + (len(basis),)) * scale
    cmat = np.tensordot(coeffs, basis, axes=([-1], [0]))  # (T, slots..., r, r)
    if degree == 2:
        cmat = cmat - np.swapaxes(cmat, 1, 2)

    def monomials(pts):
        return np.prod(pts[:, None, :] ** exps[None, :, :], axis=2)  # (m, T)

    def comp(pts):
        return np.tensordot(monomials(pts), cmat, axes=([1], [0]))

    def dmono(pts):
        # (m, T, n): derivative of each monomial along each coordinate
        m = pts.shape[0]
        out = np.zeros((m, len(exps), n))
        for mu in range(n):
            e = exps.copy()
            fac = e[:, mu].astype(float)
            e[:, mu] = np.maximum(e[:, mu] - 1, 0)
            vals = np.prod(pts[:, None, :] ** e[None, :, :], axis=2)
            out[:, :, mu] = fac[None, :] * vals
        return out

    def jac_fn(pts):
        return np.einsum("mtu,t...->mu...", dmono(pts), cmat)

    return PFormField(degree, group, geom, comp, jac_fn=jac_fn)


# ---------------------------------------------------------------------------
# covariant calculus


def curvature(A) -> PFormField:
    """Curvature 2-form R = dA + [A, A]-term, evaluated from the potential's jets."""

    def comp(pts):
        return A.curvature_val(np.atleast_2d(np.asarray(pts, dtype=float)))

    return PFormField(2, A.group, A.geom, comp, fd_step=A.fd_step, fd_order=A.fd_order)


def cov_jac(A, psi: PFormField, pts: np.ndarray) -> np.ndarray:
    """Covariant derivative components (nabla_mu psi)_{slots}, derivative axis first.

    Recipe: coordinate derivative + [A_mu, psi] - Christoffel contraction on
    every form slot.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    p = psi.degree
    dpsi = psi.jac(pts)
    Av = A.val(pts)
    val = psi.comp(pts)
    out = dpsi + _bracket_first(Av, val, p)
    gam = christoffel(psi.geom, pts)
    for k in range(p):
        out = out - _gamma_slot(gam, val, k, p)
    return out


def _bracket_first(Av, val, p):
    """[A_mu, psi_{slots}] with a fresh leading mu axis."""
    a = Av.reshape(Av.shape[:2] + (1,) * p + Av.shape[2:])
    b = val[:, None]
    return batch_bracket(a, b)


def _gamma_slot(gam, val, k, p):
    """Gamma^lam_{mu nu_k} psi_{... lam ...} placed on slot k with leading mu axis."""
    # move slot k of val to the end, contract, move back
    moved = np.moveaxis(val, 1 + k, -3)  # (..., lam, r, r)
    out = np.einsum("mlus,m...lab->mu...sab", gam, moved)
    # out axes: (m, mu, other slots..., s, r, r); restore slot order
    return np.moveaxis(out, -3, 2 + k)


def d_nabla(A, psi: PFormField) -> PFormField:
    """Exterior covariant derivative via the alternating sum of covariant derivatives."""
    if psi.degree >= 3:
        raise DegreeError("exterior derivative implemented for degree <= 2")
    p = psi.degree

    def comp(pts):
        cj = cov_jac(A, psi, pts)  # (m, mu, slots..., r, r)
        if p == 0:
            return cj
        out = cj.copy()
        for i in range(1, p + 1):
            # term i inserts the derivative direction at slot i with sign (-1)^i
            out += ((-1.0) ** i) * np.moveaxis(cj, 1, 1 + i)
        return out

    return PFormField(p + 1, psi.group, psi.geom, comp, fd_step=psi.fd_step, fd_order=psi.fd_order)


def delta_nabla(A, psi: PFormField, frame_fn: Optional[Callable] = None) -> PFormField:
    """Codifferential: -sum_i (nabla_{E_i} psi)(E_i, ...) over an orthonormal frame."""
    if psi.degree < 1:
        raise DegreeError("codifferential needs degree >= 1")

    def comp(pts):
        cj = cov_jac(A, psi, pts)  # (m, mu, nu, slots..., r, r)
        if frame_fn is None:
            w = inverse_metric_diag(psi.geom, pts)
            return -np.einsum("ma,maa...->m...", w, cj)
        fr = frame_fn(pts)  # (m, i, mu)
        return -np.einsum("mia,mib,mab...->m...", fr, fr, cj)

    return PFormField(psi.degree - 1, psi.group, psi.geom, comp,
                      fd_step=psi.fd_step, fd_order=psi.fd_order)


def interior_product(X: VectorField, psi: PFormField) -> PFormField:
    if psi.degree < 1:
        raise DegreeError("interior product needs degree >= 1")

    def comp(pts):
        return np.einsum("ma,ma...->m...", X(pts), psi.comp(pts))

    return PFormField(psi.degree - 1, psi.group, psi.geom, comp,
                      fd_step=psi.fd_step, fd_order=psi.fd_order)


def delta_nabla_conformal(A, psi: PFormField, phi: ScalarField) -> PFormField:
    """Codifferential of the metric e^{2 phi} g: e^{-2 phi}(delta psi + (2p - n) i_{grad phi} psi)."""
    p = psi.degree
    if p < 1:
        raise DegreeError("codifferential needs degree >= 1")
    n = psi.geom.n
    base = delta_nabla(A, psi)
    grad_field = VectorField(components=lambda pts: grad_scalar(psi.geom, pts, phi))
    correction = interior_product(grad_field, psi)

    def comp(pts):
        factor = np.exp(-2.0 * phi(pts))
        vals = base.comp(pts) + (2.0 * p - n) * correction.comp(pts)
        return factor.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals

    return PFormField(p - 1, psi.group, psi.geom, comp, fd_step=psi.fd_step, fd_order=psi.fd_order)


def scalar_times_form(u: ScalarField, psi: PFormField) -> PFormField:
    def comp(pts):
        vals = psi.comp(pts)
        return u(pts).reshape((-1,) + (1,) * (vals.ndim - 1)) * vals

    return PFormField(psi.degree, psi.group, psi.geom, comp, fd_step=psi.fd_step, fd_order=psi.fd_order)


def add_forms(a: PFormField, b: PFormField, ca: float = 1.0, cb: float = 1.0) -> PFormField:
    if a.degree != b.degree:
        raise DegreeError("cannot add forms of different degree")
    return PFormField(a.degree, a.group, a.geom,
                      lambda pts: ca * a.comp(pts) + cb * b.comp(pts),
                      fd_step=a.fd_step, fd_order=a.fd_order)


# ---------------------------------------------------------------------------
# inner products


def pointwise_inner(psi: PFormField, omega: PFormField, pts: np.ndarray) -> np.ndarray:
    """(1/p!) full frame contraction; computed with inverse-metric contractions."""
    if psi.degree != omega.degree:
        raise DegreeError("degree mismatch")
    if psi.group != omega.group:
        from .liealg import DimensionError

        raise DimensionError("group mismatch")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a = psi.comp(pts)
    b = omega.comp(pts)
    p = psi.degree
    if p == 0:
        return batch_inner(a, b)
    w = inverse_metric_diag(psi.geom, pts)
    for k in range(p):
        shape = (w.shape[0],) + (1,) * k + (w.shape[1],) + (1,) * (p - 1 - k + 2)
        a = a * w.reshape(shape)
    vals = batch_inner(a, b)
    return vals.sum(axis=tuple(range(1, p + 1))) / math.factorial(p)


def pointwise_norm2(psi: PFormField, pts: np.ndarray) -> np.ndarray:
    return pointwise_inner(psi, psi, pts)


def global_inner(psi: PFormField, omega: PFormField, weight: Optional[ScalarField] = None, **quad_kw):
    """Quadrature of the pointwise inner product over the spec's volume measure."""

    def fn(pts):
        vals = pointwise_inner(psi, omega, pts)
        if weight is not None:
            vals = vals * np.exp(weight(pts))
        return vals

    return integrate(psi.geom, fn, **quad_kw)


# ---------------------------------------------------------------------------
# curvature action and Laplacians


def curvature_action(A, psi: PFormField) -> PFormField:
    """Bracket action of the curvature on degree-1 and degree-2 fields."""
    if psi.degree not in (1, 2):
        raise DegreeError("curvature action defined for degrees 1 and 2")

    def comp(pts):
        Rv = A.curvature_val(pts)  # (m, mu, nu, r, r)
        w = inverse_metric_diag(psi.geom, pts)
        val = psi.comp(pts)
        if psi.degree == 1:
            return _action1(Rv, val, w)
        return _action2(Rv, val, w)

    return PFormField(psi.degree, psi.group, psi.geom, comp, fd_step=psi.fd_step, fd_order=psi.fd_order)


def _action1(Rv, val, w):
    # sum_mu w_mu [R_{mu rho}, psi_mu]
    return np.einsum("mu,murab->murab", w, batch_bracket(Rv, val[:, :, None])).sum(axis=1)


def _action2(Rv, val, w):
    # (r psi)_{rho sig} = sum_mu w_mu ([R_{mu rho}, psi_{mu sig}] - [R_{mu sig}, psi_{mu rho}])
    t = np.einsum("mu,murscd->murscd", w, batch_bracket(Rv[:, :, :, None], val[:, :, None, :]))
    t = t.sum(axis=1)
    return t - np.swapaxes(t, 1, 2)


def rough_laplacian(A, psi: PFormField) -> PFormField:
    """Connection Laplacian nabla* nabla psi via a second covariant derivative."""
    if psi.degree > 2:
        raise DegreeError("rough Laplacian implemented for degree <= 2")
    p = psi.degree

    def comp(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        T_fn = lambda q: cov_jac(A, psi, q)  # tensor with p+1 slots (first = deriv)
        dT = fd_jacobian(T_fn, pts, h=psi.fd_step, order=psi.fd_order)
        T = T_fn(pts)
        Av = A.val(pts)
        gam = christoffel(psi.geom, pts)
        full = dT + _bracket_first(Av, T, p + 1)
        for k in range(p + 1):
            full = full - _gamma_slot(gam, T, k, p + 1)
        w = inverse_metric_diag(psi.geom, pts)
        return -np.einsum("ma,maa...->m...", w, full)

    return PFormField(p, psi.group, psi.geom, comp, fd_step=psi.fd_step, fd_order=psi.fd_order)


def hodge_laplacian(A, psi: PFormField) -> PFormField:
    """d delta + delta d."""
    if psi.degree > 2:
        raise DegreeError("hodge Laplacian implemented for degree <= 2")
    pieces = []
    if psi.degree >= 1:
        pieces.append(d_nabla(A, delta_nabla(A, psi)))
    pieces.append(delta_nabla(A, d_nabla(A, psi)))
    if len(pieces) == 1:
        return pieces[0]
    return add_forms(pieces[0], pieces[1])


# ---------------------------------------------------------------------------
# Bochner-Weitzenboeck and commutation residuals


def _ricci_on_slots(spec, pts, val, p):
    """psi composed with the Ricci transform on each slot (degree 1: psi(Ric X))."""
    R = riemann_tensor(spec, pts)
    gup = inverse_metric_diag(spec, pts)
    ric = np.einsum("mlvav,mv->mla", R, gup)  # Ric^lam_alpha: Ric(X)^lam = ric^lam_a X^a
    out = np.zeros_like(val)
    for k in range(p):
        moved = np.moveaxis(val, 1 + k, -3)
        acted = np.einsum("mla,m...lbc->m...abc", ric, moved)
        out += np.moveaxis(acted, -3, 1 + k)
    return out


def bochner_residual(A, psi: PFormField, pts: np.ndarray) -> np.ndarray:
    """Hodge minus rough Laplacian minus curvature terms; zero by the Weitzenboeck identity.

    Degree 1: Delta psi - (nabla*nabla psi + psi(Ric .) + r(psi)).
    Degree 2: curvature term psi(Ric^Id + 2 R_M) per slot-pair action.
    """
    if psi.degree not in (1, 2):
        raise DegreeError("Bochner residual defined for degrees 1 and 2")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    p = psi.degree
    lhs = hodge_laplacian(A, psi).comp(pts)
    rough = rough_laplacian(A, psi).comp(pts)
    action = curvature_action(A, psi).comp(pts)
    val = psi.comp(pts)
    ric_term = _ricci_on_slots(psi.geom, pts, val, p)
    if p == 1:
        return lhs - rough - ric_term - action
    RM = riemann_tensor(psi.geom, pts)
    gup = inverse_metric_diag(psi.geom, pts)
    rm_term = _psi_circ_rm(RM, gup, val)
    return lhs - rough - ric_term - 2.0 * rm_term - action


def _psi_circ_rm(RM, gup, val):
    """(psi o R_M)_{ab} = 1/2 sum_j psi(e_j, R_M(d_a, d_b) e_j) = 1/2 g^{nu rho} R^lam_{rho a b} psi_{nu lam}."""
    return 0.5 * np.einsum("mr,mlrab,mrlcd->mabcd", gup, RM, val)


def commutation_residual(A, psi: PFormField, X: VectorField, Y: VectorField, pts: np.ndarray) -> np.ndarray:
    """Residual of the second-derivative commutation formula on a degree-2 field."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    spec = psi.geom

    def covX(V, field):
        def comp(q):
            cj = cov_jac(A, field, q)
            return np.einsum("ma,ma...->m...", V(q), cj)

        return PFormField(field.degree, field.group, spec, comp,
                          fd_step=field.fd_step, fd_order=field.fd_order)

    XY_comm = VectorField(components=lambda q: _lie_bracket(X, Y, q))
    first = covX(X, covX(Y, psi)).comp(pts) - covX(Y, covX(X, psi)).comp(pts)
    first -= covX(XY_comm, psi).comp(pts)

    Rv = A.curvature_val(pts)
    Xv, Yv = X(pts), Y(pts)
    RXY = np.einsum("ma,mb,mabcd->mcd", Xv, Yv, Rv)
    val = psi.comp(pts)
    bundle = batch_bracket(RXY[:, None, None], val)

    RM = riemann_tensor(spec, pts)
    RMXY = np.einsum("mlrab,ma,mb->mlr", RM, Xv, Yv)  # R_M(X,Y) d_rho = RMXY[lam, rho] d_lam
    slot1 = np.einsum("mlr,mlscd->mrscd", RMXY, val)
    slot2 = np.einsum("mls,mrlcd->mrscd", RMXY, val)
    return first - bundle + slot1 + slot2


def _lie_bracket(X: VectorField, Y: VectorField, pts) -> np.ndarray:
    jx = X.jet(pts, 1)
    jy = Y.jet(pts, 1)
    return np.einsum("ma,mal->ml", jx[0], jy[1]) - np.einsum("ma,mal->ml", jy[0], jx[1])
