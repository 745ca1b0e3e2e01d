"""Base-manifold layer: charts, diagonal metrics, Christoffel symbols, curvature,
scalar calculus, conformal gradient fields, and quadrature.

Every supported geometry (round sphere, conformal sphere, product of spheres,
warped product over a round fiber) is diagonal in its chart:
g = diag(exp(2 l_1), ..., exp(2 l_n)).  The per-coordinate log factors l_mu and
their derivative jets drive every closed-form formula below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .jets import (
    Jet,
    jet_add,
    jet_const,
    jet_exp,
    jet_from_univariate,
    jet_linear,
    jet_log,
    jet_mul,
    jet_norm2,
    jet_reciprocal,
    jet_scale,
)

__all__ = [
    "GeometryError",
    "DomainError",
    "UnsupportedGeometryError",
    "GeometrySpec",
    "ChartPoint",
    "ScalarField",
    "VectorField",
    "ProfileFunction",
    "round_sphere",
    "conformal_sphere",
    "product_spheres",
    "warped_product",
    "chart_embed",
    "metric_components",
    "metric_diag",
    "inverse_metric_diag",
    "christoffel",
    "christoffel_jac",
    "christoffel_fd_oracle",
    "riemann_tensor",
    "riemann",
    "ricci_transform",
    "orthonormal_frame",
    "grad_scalar",
    "laplacian_scalar",
    "conformal_gradient_field",
    "product_conformal_field",
    "radial_conformal_field",
    "integrate",
    "IntegralResult",
    "sphere_volume",
    "seeded_chart_points",
    "fd_jacobian",
    "sin_profile",
    "constant_profile",
    "linear_profile",
]


class GeometryError(ValueError):
    pass


class DomainError(GeometryError):
    pass


class UnsupportedGeometryError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# finite differences

_FD_STENCILS = {
    2: ([-1.0, 1.0], [-0.5, 0.5]),
    4: ([-2.0, -1.0, 1.0, 2.0], [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0]),
}


def fd_jacobian(fn: Callable, pts: np.ndarray, h: float = 1e-3, order: int = 4) -> np.ndarray:
    """Central-difference coordinate jacobian of fn(pts); result shape (m, n) + value shape."""
    offsets, weights = _FD_STENCILS[order]
    m, n = pts.shape
    cols = []
    for mu in range(n):
        acc = None
        for off, w in zip(offsets, weights):
            shifted = pts.copy()
            shifted[:, mu] += off * h
            val = w * np.asarray(fn(shifted))
            acc = val if acc is None else acc + val
        cols.append(acc / h)
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# scalar / vector fields and profiles


@dataclass
class ScalarField:
    """Chart-coordinate scalar function with optional analytic derivative callbacks."""

    fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jet_fn: Optional[Callable[[np.ndarray, int], Jet]] = None
    constant_value: Optional[float] = None

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(pts), dtype=float)

    def grad(self, pts: np.ndarray, h: float = 1e-3, order: int = 4) -> np.ndarray:
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(pts))
        if self.jet_fn is not None:
            return self.jet_fn(pts, 1).d[1]
        return fd_jacobian(self.fn, pts, h=h, order=order)

    def hess(self, pts: np.ndarray, h: float = 1e-3, order: int = 4) -> np.ndarray:
        if self.hess_fn is not None:
            return np.asarray(self.hess_fn(pts))
        if self.jet_fn is not None:
            return self.jet_fn(pts, 2).d[2]
        return fd_jacobian(lambda q: self.grad(q, h=h, order=order), pts, h=h, order=order)

    def jet(self, pts: np.ndarray, order: int, h: float = 1e-3) -> Jet:
        if self.jet_fn is not None:
            return self.jet_fn(pts, order)
        nested = self.fn
        arrs = [np.asarray(self.fn(pts), dtype=float)]
        for _ in range(order):
            prev = nested
            nested = (lambda q, f=prev: fd_jacobian(f, q, h=h))
            arrs.append(np.asarray(nested(pts)))
        return Jet(arrs, pts.shape[1])


def constant_scalar(c: float) -> ScalarField:
    return ScalarField(
        fn=lambda pts: np.full(np.atleast_2d(pts).shape[0], float(c)),
        jet_fn=lambda pts, order: jet_const(c, np.atleast_2d(pts).shape[0], np.atleast_2d(pts).shape[1], order),
        constant_value=float(c),
    )


@dataclass
class VectorField:
    """Coordinate-basis components of a vector field, with optional analytic jets.

    jet_fn(pts, order) returns a list of arrays [V, dV, d2V, ...] where the
    derivative axes come first and the component axis last.
    """

    components: Callable[[np.ndarray], np.ndarray]
    jet_fn: Optional[Callable[[np.ndarray, int], list]] = None
    support: Optional[tuple] = None  # coordinate slice with nonzero components

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.components(pts))

    def jet(self, pts: np.ndarray, order: int, h: float = 1e-3) -> list:
        if self.jet_fn is not None:
            return self.jet_fn(pts, order)
        arrs = [self(pts)]
        fn = self.components
        nested = fn
        for _ in range(order):
            prev = nested
            nested = (lambda q, f=prev: fd_jacobian(f, q, h=h))
            arrs.append(np.asarray(nested(pts)))
        return arrs


@dataclass
class ProfileFunction:
    """Warping profile f(r) with analytic first and second derivatives."""

    f: Callable
    df: Callable
    d2f: Callable
    d3f: Optional[Callable] = None
    d4f: Optional[Callable] = None
    name: str = "profile"

    def derivs(self, r: np.ndarray, order: int) -> list:
        r = np.asarray(r, dtype=float)
        out = [self.f(r) * np.ones_like(r)]
        if order >= 1:
            out.append(self.df(r) * np.ones_like(r))
        if order >= 2:
            out.append(self.d2f(r) * np.ones_like(r))
        if order >= 3:
            out.append(self._d3(r))
        if order >= 4:
            out.append(self._d4(r))
        return out

    def _d3(self, r):
        if self.d3f is not None:
            return self.d3f(r) * np.ones_like(r)
        return _fd1d(self.d2f, r, 1)

    def _d4(self, r):
        if self.d4f is not None:
            return self.d4f(r) * np.ones_like(r)
        return _fd1d(self.d2f, r, 2)


def _fd1d(fn, r, order, h=1e-4):
    if order == 1:
        return (8 * (fn(r + h) - fn(r - h)) - (fn(r + 2 * h) - fn(r - 2 * h))) / (12 * h)
    return (_fd1d(fn, r + h, order - 1, h) - _fd1d(fn, r - h, order - 1, h)) / (2 * h)


def sin_profile() -> ProfileFunction:
    return ProfileFunction(
        f=np.sin, df=np.cos, d2f=lambda r: -np.sin(r), d3f=lambda r: -np.cos(r),
        d4f=np.sin, name="sin",
    )


def constant_profile(c: float = 1.0) -> ProfileFunction:
    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    return ProfileFunction(
        f=lambda r: np.full_like(np.asarray(r, dtype=float), c),
        df=zero, d2f=zero, d3f=zero, d4f=zero, name=f"const{c}",
    )


def linear_profile() -> ProfileFunction:
    zero = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    one = lambda r: np.ones_like(np.asarray(r, dtype=float))
    return ProfileFunction(f=lambda r: np.asarray(r, dtype=float), df=one, d2f=zero,
                           d3f=zero, d4f=zero, name="linear")


# ---------------------------------------------------------------------------
# geometry specs


@dataclass(frozen=True)
class GeometrySpec:
    """Declarative base manifold + metric; diagonal in its chart coordinates."""

    variant: str  # "round" | "conformal" | "products" | "warped"
    n: int
    phi: Optional[ScalarField] = None
    dims: tuple = ()
    interval: tuple = ()
    profile: Optional[ProfileFunction] = None
    x_max: float = 4.0

    @property
    def is_sphere(self) -> bool:
        return self.variant in ("round", "conformal")

    def block_slices(self):
        """Coordinate index ranges of the factor blocks (products) or (r, fiber) split."""
        if self.variant == "products":
            out, start = [], 0
            for nk in self.dims:
                out.append(slice(start, start + nk))
                start += nk
            return out
        if self.variant == "warped":
            return [slice(0, 1), slice(1, self.n)]
        return [slice(0, self.n)]

    def __str__(self):
        if self.variant == "round":
            return f"S^{self.n}"
        if self.variant == "conformal":
            return f"(S^{self.n}, conformal)"
        if self.variant == "products":
            return " x ".join(f"S^{k}" for k in self.dims)
        return f"I x S^{self.n - 1} (f={self.profile.name})"


def round_sphere(n: int, x_max: float = 4.0) -> GeometrySpec:
    if n < 2:
        raise GeometryError("sphere dimension must be >= 2")
    return GeometrySpec("round", n, x_max=x_max)


def conformal_sphere(n: int, phi: ScalarField, x_max: float = 4.0) -> GeometrySpec:
    if n < 2:
        raise GeometryError("sphere dimension must be >= 2")
    return GeometrySpec("conformal", n, phi=phi, x_max=x_max)


def flat_chart(n: int, x_max: float = 4.0) -> GeometrySpec:
    """Conformal sphere whose factor cancels the round one: metric is exactly delta.

    Degenerate-case fixture: zero curvature, vanishing Christoffel symbols.
    """
    phi = ScalarField(
        fn=lambda pts: -_round_log_factor_jet(np.atleast_2d(pts), 0).d[0],
        jet_fn=lambda pts, order: jet_scale(_round_log_factor_jet(np.atleast_2d(pts), order), -1.0),
    )
    return conformal_sphere(n, phi, x_max=x_max)


def product_spheres(dims: Sequence[int], x_max: float = 4.0) -> GeometrySpec:
    dims = tuple(int(d) for d in dims)
    if any(d < 2 for d in dims):
        raise GeometryError("factor dimensions must be >= 2")
    return GeometrySpec("products", sum(dims), dims=dims, x_max=x_max)


def warped_product(interval, profile: ProfileFunction, n: int, x_max: float = 4.0) -> GeometrySpec:
    r0, r1 = float(interval[0]), float(interval[1])
    if not r0 < r1:
        raise GeometryError("empty interval")
    return GeometrySpec("warped", n, interval=(r0, r1), profile=profile, x_max=x_max)


@dataclass(frozen=True)
class ChartPoint:
    chart_id: str
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))


def validate_points(spec: GeometrySpec, pts: np.ndarray, strict: bool = False):
    """Shape and domain checks.

    The sphere-chart bound |x| <= x_max applies to the chart-point API used by
    pointwise tests (strict=True); quadrature evaluates across the whole chart,
    where only the warped r-interval is a hard constraint.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != spec.n:
        raise DomainError(f"expected {spec.n} coordinates, got {pts.shape[1]}")
    if spec.variant == "warped":
        r0, r1 = spec.interval
        if np.any((pts[:, 0] <= r0) | (pts[:, 0] >= r1)):
            raise DomainError(f"r outside ({r0}, {r1})")
    if strict:
        if spec.is_sphere:
            if np.any(np.linalg.norm(pts, axis=1) > spec.x_max + 1e-12):
                raise DomainError(f"chart point outside |x| <= {spec.x_max}")
        elif spec.variant == "products":
            for sl in spec.block_slices():
                if np.any(np.linalg.norm(pts[:, sl], axis=1) > spec.x_max + 1e-12):
                    raise DomainError(f"factor chart point outside |x| <= {spec.x_max}")
        elif np.any(np.linalg.norm(pts[:, 1:], axis=1) > spec.x_max + 1e-12):
            raise DomainError(f"fiber chart point outside |x| <= {spec.x_max}")
    return pts


# ---------------------------------------------------------------------------
# charts


def _stereo_embed(x: np.ndarray) -> np.ndarray:
    """Inverse stereographic map: chart R^n -> unit S^n in R^{n+1}; 0 -> south pole."""
    s = 1.0 + np.einsum("mi,mi->m", x, x)
    return np.concatenate([2.0 * x / s[:, None], ((s - 2.0) / s)[:, None]], axis=1)


def _stereo_chart(y: np.ndarray) -> np.ndarray:
    """Chart coordinates of ambient unit-sphere points (defined off the north pole)."""
    return y[:, :-1] / (1.0 - y[:, -1])[:, None]


def chart_embed(spec: GeometrySpec, pts) -> np.ndarray:
    """Ambient realization of chart points (unit sphere(s); (r, fiber) for warped)."""
    single = np.ndim(pts) == 1
    pts = validate_points(spec, pts, strict=True)
    if spec.is_sphere:
        out = _stereo_embed(pts)
    elif spec.variant == "products":
        out = np.concatenate([_stereo_embed(pts[:, sl]) for sl in spec.block_slices()], axis=1)
    else:
        out = np.concatenate([pts[:, :1], _stereo_embed(pts[:, 1:])], axis=1)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# log-factor jets: the metric is diag(exp(2 l_mu))


def _embed_block_jet(local: Jet, idx: slice, n: int) -> Jet:
    """Lift a jet in block coordinates to a jet in all n coordinates."""
    m = local.m
    nk = local.n
    arrs = [local.d[0]]
    for k in range(1, local.order + 1):
        full = np.zeros((m,) + (n,) * k)
        full[(slice(None),) + (idx,) * k] = local.d[k]
        arrs.append(full)
    return Jet(arrs, n)


def _round_log_factor_jet(pts: np.ndarray, order: int) -> Jet:
    """Jet of log(2/(1+|x|^2)), the stereographic conformal log factor."""
    m, n = pts.shape
    s = jet_add(jet_norm2(pts, order), jet_const(1.0, m, n, order))
    return jet_add(jet_const(math.log(2.0), m, n, order), jet_log(s), 1.0, -1.0)


def log_factor_jets(spec: GeometrySpec, pts: np.ndarray, order: int):
    """Distinct per-block log-factor jets plus the block index of each coordinate."""
    m, n = pts.shape
    if spec.variant == "round":
        return [_round_log_factor_jet(pts, order)], np.zeros(n, dtype=int)
    if spec.variant == "conformal":
        lj = jet_add(_round_log_factor_jet(pts, order), spec.phi.jet(pts, order))
        return [lj], np.zeros(n, dtype=int)
    if spec.variant == "products":
        jets, block_of = [], np.zeros(n, dtype=int)
        for k, sl in enumerate(spec.block_slices()):
            local = _round_log_factor_jet(pts[:, sl], order)
            jets.append(_embed_block_jet(local, sl, n))
            block_of[sl] = k
        return jets, block_of
    # warped: l_r = 0; l_fiber = log f(r) + log(2/(1+|y|^2))
    prof = spec.profile
    fj = prof.derivs(pts[:, 0], order)
    logf = _log_jet_from_univariate(pts[:, 0], fj, n, order)
    fiber_local = _round_log_factor_jet(pts[:, 1:], order)
    fiber = jet_add(logf, _embed_block_jet(fiber_local, slice(1, n), n))
    zero = jet_const(0.0, m, n, order)
    return [zero, fiber], np.array([0] + [1] * (n - 1))


def _log_jet_from_univariate(r, derivs, n, order):
    """Jet of log f(r) in full coordinates from the 1-d derivatives of f."""
    fjet = jet_from_univariate(r, derivs, axis=0, n=n, order=order)
    return jet_log(fjet)


def metric_diag(spec: GeometrySpec, pts: np.ndarray) -> np.ndarray:
    """Diagonal entries exp(2 l_mu) of the metric, shape (m, n)."""
    jets, block_of = log_factor_jets(spec, pts, 0)
    vals = np.stack([j.d[0] for j in jets], axis=1)  # (m, q)
    return np.exp(2.0 * vals[:, block_of])


def inverse_metric_diag(spec: GeometrySpec, pts: np.ndarray) -> np.ndarray:
    return 1.0 / metric_diag(spec, pts)


def metric_components(spec: GeometrySpec, pts) -> np.ndarray:
    single = np.ndim(pts) == 1
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    validate_points(spec, pts)
    diag = metric_diag(spec, pts)
    m, n = pts.shape
    g = np.zeros((m, n, n))
    g[:, np.arange(n), np.arange(n)] = diag
    return g[0] if single else g


def _assemble_l_jets(spec, pts, order):
    """Full per-coordinate log-factor jet arrays: list over order of (m, n, [n]^k)."""
    jets, block_of = log_factor_jets(spec, pts, order)
    out = []
    for k in range(order + 1):
        stacked = np.stack([j.d[k] for j in jets], axis=1)  # (m, q, [n]^k)
        out.append(stacked[:, block_of])
    return out


def christoffel(spec: GeometrySpec, pts) -> np.ndarray:
    """Levi-Civita Christoffel symbols Gamma^k_{ij}, shape (m, n, n, n), from closed forms."""
    single = np.ndim(pts) == 1
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    validate_points(spec, pts)
    lv, lg = _assemble_l_jets(spec, pts, 1)  # (m,n), (m,n,n) with lg[m,a,i] = d_i l_a
    m, n = pts.shape
    I = np.eye(n)
    # Gamma^k_{ij} = delta_{jk} d_i l_k + delta_{ik} d_j l_k - delta_{ij} e^{2(l_i - l_k)} d_k l_i
    gam = np.einsum("jk,mki->mkij", I, lg) + np.einsum("ik,mkj->mkij", I, lg)
    ratio = np.exp(2.0 * (lv[:, :, None] - lv[:, None, :]))  # (m, i, k)
    gam -= np.einsum("ij,mik,mik->mkij", I, ratio, lg)
    return gam[0] if single else gam


def christoffel_jac(spec: GeometrySpec, pts: np.ndarray) -> np.ndarray:
    """Analytic coordinate derivative d_lam Gamma^k_{ij}, shape (m, lam, k, i, j)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    lv, lg, lh = _assemble_l_jets(spec, pts, 2)  # lh[m,a,i,j] = d_i d_j l_a
    m, n = pts.shape
    I = np.eye(n)
    out = np.einsum("jk,mkil->mlkij", I, lh) + np.einsum("ik,mkjl->mlkij", I, lh)
    ratio = np.exp(2.0 * (lv[:, :, None] - lv[:, None, :]))  # (m, i, k)
    dratio = 2.0 * ratio[:, :, :, None] * (lg[:, :, None, :] - lg[:, None, :, :])  # (m,i,k,lam)
    t = np.einsum("mikl,mik->mikl", dratio, lg) + np.einsum("mik,mikl->mikl", ratio, lh)
    out -= np.einsum("ij,mikl->mlkij", I, t)
    return out


def christoffel_fd_oracle(spec: GeometrySpec, pts: np.ndarray, h: float = 1e-3, order: int = 4) -> np.ndarray:
    """Independent Christoffel path: standard metric formula with FD metric derivatives."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g = metric_components(spec, pts)
    dg = fd_jacobian(lambda q: metric_components(spec, q), pts, h=h, order=order)  # (m, lam, i, j)
    ginv = np.linalg.inv(g)
    # Gamma^k_{ij} = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij); dg axes are (m, deriv, i, j)
    sym = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)
    return 0.5 * np.einsum("mkl,mijl->mkij", ginv, sym)


def riemann_tensor(spec: GeometrySpec, pts: np.ndarray, fd: bool = False, h: float = 1e-3) -> np.ndarray:
    """Curvature tensor R^lam_{rho mu nu} of R(X,Y)Z = X^mu Y^nu Z^rho R^lam_{rho mu nu} d_lam."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    gam = christoffel(spec, pts)
    if fd:
        dgam = fd_jacobian(lambda q: christoffel(spec, q), pts, h=h)
    else:
        dgam = christoffel_jac(spec, pts)
    # R^l_{r m n} = d_m Gam^l_{n r} - d_n Gam^l_{m r} + Gam^l_{m s} Gam^s_{n r} - Gam^l_{n s} Gam^s_{m r}
    term = np.einsum("mlas,msbr->mlrab", gam, gam)
    R = dgam.transpose(0, 2, 4, 1, 3) - dgam.transpose(0, 2, 4, 3, 1)
    R += term - term.transpose(0, 1, 2, 4, 3)
    return R


def riemann(spec: GeometrySpec, pts: np.ndarray, fd: bool = False):
    """Curvature operator at pts: apply(X, Y, Z) -> vector components (m, n)."""
    R = riemann_tensor(spec, pts, fd=fd)

    def apply(X, Y, Z):
        return np.einsum("mlrab,ma,mb,mr->ml", R, X, Y, Z)

    return apply


def ricci_transform(spec: GeometrySpec, pts: np.ndarray, X: np.ndarray, frame: Optional[np.ndarray] = None) -> np.ndarray:
    """Ric(X) = sum_j R(X, e_j) e_j; frame contraction equals the g^{nu rho} trace."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    R = riemann_tensor(spec, pts)
    if frame is None:
        gup = inverse_metric_diag(spec, pts)
        return np.einsum("mlvav,ma,mv->ml", R, X, gup)
    return np.einsum("mlrab,ma,mjb,mjr->ml", R, X, frame, frame)


def _diag_embed(d):
    m, n = d.shape
    out = np.zeros((m, n, n))
    out[:, np.arange(n), np.arange(n)] = d
    return out


def orthonormal_frame(spec: GeometrySpec, pts: np.ndarray) -> np.ndarray:
    """Deterministic Gram-Schmidt frame; frame[m, a, :] are the components of E_a."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    g = metric_components(spec, pts)
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L)


def grad_scalar(spec: GeometrySpec, pts: np.ndarray, u: ScalarField, h: float = 1e-3, order: int = 4) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    du = u.grad(pts, h=h, order=order)
    return inverse_metric_diag(spec, pts) * du


def laplacian_scalar(spec: GeometrySpec, pts: np.ndarray, u: ScalarField, h: float = 1e-3, order: int = 4) -> np.ndarray:
    """Laplace-Beltrami div(grad u) (negative spectrum on spheres)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    du = u.grad(pts, h=h, order=order)
    d2u = u.hess(pts, h=h, order=order)
    gup = inverse_metric_diag(spec, pts)
    gam = christoffel(spec, pts)
    hess_trace = np.einsum("mi,mii->m", gup, d2u)
    gam_trace = np.einsum("mi,mkii,mk->m", gup, gam.transpose(0, 1, 2, 3), du)
    return hess_trace - gam_trace


def vector_cov_jac(spec: GeometrySpec, V: VectorField, pts: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Covariant derivative (D_mu V)^lam = d_mu V^lam + Gamma^lam_{mu nu} V^nu, shape (m, mu, lam)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    jets = V.jet(pts, 1, h=h)
    val, jac = jets[0], jets[1]
    gam = christoffel(spec, pts)
    return jac + np.einsum("mlab,mb->mal", gam, val)


def rough_laplacian_vector(spec: GeometrySpec, V: VectorField, pts: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Connection Laplacian D*D V = -sum_i (D_{e_i} D_{e_i} V - D_{D_{e_i} e_i} V)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    val, jac, hess = V.jet(pts, 2, h=h)  # (m,l), (m,mu,l), (m,mu,nu,l)
    gam = christoffel(spec, pts)
    dgam = christoffel_jac(spec, pts)
    # T[nu, lam] = (D_nu V)^lam; cov2[mu, nu, lam] = (D_mu T)[nu, lam]
    T = jac + np.einsum("mlns,ms->mnl", gam, val)
    dT = hess + np.einsum("mulns,ms->munl", dgam, val) + np.einsum("mlns,mus->munl", gam, jac)
    cov2 = dT + np.einsum("mlus,mns->munl", gam, T) - np.einsum("msun,msl->munl", gam, T)
    gup = inverse_metric_diag(spec, pts)
    return -np.einsum("ma,maal->ml", gup, cov2)


# ---------------------------------------------------------------------------
# conformal gradient fields


def _embed_component_jets(pts: np.ndarray, order: int):
    """Jets of the n+1 ambient components of the stereographic embedding."""
    m, n = pts.shape
    s = jet_add(jet_norm2(pts, order), jet_const(1.0, m, n, order))
    sinv = jet_reciprocal(s)
    comps = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 2.0
        comps.append(jet_mul(jet_linear(pts, e, 0.0, order), sinv))
    # last component: 1 - 2/s
    comps.append(jet_add(jet_const(1.0, m, n, order), jet_scale(sinv, 2.0), 1.0, -1.0))
    return comps


def linear_restriction_jet(pts: np.ndarray, v: np.ndarray, order: int) -> Jet:
    """Jet of x -> v . embed(x) on the sphere chart."""
    comps = _embed_component_jets(pts, order)
    acc = jet_scale(comps[0], float(v[0]))
    for i in range(1, len(v)):
        if v[i] != 0.0:
            acc = jet_add(acc, jet_scale(comps[i], float(v[i])))
    return acc


def conformal_gradient_field(spec: GeometrySpec, v: np.ndarray):
    """Height function f_v = v . x and its round-metric gradient field V."""
    if not spec.is_sphere:
        raise UnsupportedGeometryError("conformal gradient fields live on sphere variants")
    v = np.asarray(v, dtype=float)
    if v.shape != (spec.n + 1,):
        raise GeometryError(f"direction vector must have length {spec.n + 1}")
    n = spec.n
    round_spec = round_sphere(n, x_max=spec.x_max)

    fv = ScalarField(
        fn=lambda pts: linear_restriction_jet(np.atleast_2d(pts), v, 0).d[0],
        jet_fn=lambda pts, order: linear_restriction_jet(np.atleast_2d(pts), v, order),
    )

    def vjet(pts, order):
        pts = np.atleast_2d(pts)
        fj = linear_restriction_jet(pts, v, order + 1)
        lj = _round_log_factor_jet(pts, order)
        w = jet_exp(lj, -2.0)  # e^{-2l}, the round inverse metric factor
        return _scalar_times_gradjet(w, fj, order)

    V = VectorField(components=lambda pts: vjet(pts, 0)[0], jet_fn=vjet)
    return fv, V


def _scalar_times_gradjet(w: Jet, fj: Jet, order: int) -> list:
    """Vector jets of w * grad(f): per-component Leibniz with the component axis last."""
    n = w.n
    out = []
    for k in range(order + 1):
        acc = np.zeros(w.d[k].shape + (n,))
        for ka in range(k + 1):
            kb = k - ka
            # grad component jets: gradjet[kb][..., comp] = fj.d[kb+1][..., comp]
            a = w.d[ka]
            b = fj.d[kb + 1]
            acc += _mixed_sym_outer(a, b, ka, kb)
        out.append(acc)
    return out


def scalar_times_vector_jets(sjet: Jet, vjets: list, order: int) -> list:
    """Jets of (scalar * vector field) via the Leibniz rule; component axis last."""
    out = []
    for k in range(order + 1):
        acc = np.zeros(sjet.d[k].shape + (vjets[0].shape[-1],))
        for ka in range(k + 1):
            acc += _mixed_sym_outer(sjet.d[ka], vjets[k - ka], ka, k - ka)
        out.append(acc)
    return out


def _mixed_sym_outer(a: np.ndarray, b: np.ndarray, ka: int, kb: int) -> np.ndarray:
    """Symmetrized product of scalar-jet a (m,[n]^ka) and vector-jet b (m,[n]^kb,comp)."""
    import itertools

    m = a.shape[0]
    total = ka + kb
    prod = a.reshape(a.shape + (1,) * (kb + 1)) * b.reshape((m,) + (1,) * ka + b.shape[1:])
    if ka == 0 or kb == 0:
        return prod
    out = np.zeros_like(prod)
    for combo in itertools.combinations(range(total), ka):
        rest = [i for i in range(total) if i not in combo]
        perm = (0,) + tuple(1 + i for i in combo) + tuple(1 + i for i in rest) + (total + 1,)
        out += np.transpose(prod, np.argsort(perm))
    return out


def divergence_vector(spec: GeometrySpec, V: VectorField, pts: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """div V = d_mu V^mu + Gamma^mu_{mu nu} V^nu."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    jets = V.jet(pts, 1, h=h)
    gam = christoffel(spec, pts)
    return np.einsum("muu->m", jets[1]) + np.einsum("muun,mn->m", gam, jets[0])


def conformal_basis_vector_jets(spec: GeometrySpec, pts: np.ndarray, order: int) -> list:
    """Vector jets of all n+1 coordinate-basis gradient fields in one shared pass."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    comps = _embed_component_jets(pts, order + 1)
    lj = _round_log_factor_jet(pts, order)
    w = jet_exp(lj, -2.0)
    return [_scalar_times_gradjet(w, c, order) for c in comps]


def product_conformal_field(spec: GeometrySpec, k: int, v: np.ndarray):
    """Factor-k height function and gradient field, zero outside block k."""
    if spec.variant != "products":
        raise UnsupportedGeometryError("factor fields require a product geometry")
    if not 1 <= k <= len(spec.dims):
        raise IndexError(f"factor index {k} out of range 1..{len(spec.dims)}")
    sl = spec.block_slices()[k - 1]
    nk = spec.dims[k - 1]
    v = np.asarray(v, dtype=float)
    if v.shape != (nk + 1,):
        raise GeometryError(f"direction vector must have length {nk + 1}")
    n = spec.n

    def fjet(pts, order):
        pts = np.atleast_2d(pts)
        local = linear_restriction_jet(pts[:, sl], v, order)
        return _embed_block_jet(local, sl, n)

    fv = ScalarField(fn=lambda pts: fjet(pts, 0).d[0], jet_fn=fjet)

    def vjet(pts, order):
        pts = np.atleast_2d(pts)
        m = pts.shape[0]
        fj = linear_restriction_jet(pts[:, sl], v, order + 1)
        lj = _round_log_factor_jet(pts[:, sl], order)
        w = jet_exp(lj, -2.0)
        local = _scalar_times_gradjet(w, fj, order)
        out = []
        for kk in range(order + 1):
            full = np.zeros((m,) + (n,) * kk + (n,))
            full[(slice(None),) + (sl,) * kk + (sl,)] = local[kk]
            out.append(full)
        return out

    V = VectorField(components=lambda pts: vjet(pts, 0)[0], jet_fn=vjet, support=(sl,))
    return fv, V


def radial_conformal_field(spec: GeometrySpec) -> VectorField:
    """V = f(r) d/dr on a warped product."""
    if spec.variant != "warped":
        raise UnsupportedGeometryError("radial field requires a warped geometry")
    prof = spec.profile
    n = spec.n

    def vjet(pts, order):
        pts = np.atleast_2d(pts)
        m = pts.shape[0]
        fd = prof.derivs(pts[:, 0], order)
        fj = jet_from_univariate(pts[:, 0], fd, axis=0, n=n, order=order)
        out = []
        for k in range(order + 1):
            full = np.zeros((m,) + (n,) * k + (n,))
            full[(slice(None),) + (slice(None),) * k + (0,)] = fj.d[k]
            out.append(full)
        return out

    return VectorField(components=lambda pts: vjet(pts, 0)[0], jet_fn=vjet)


# ---------------------------------------------------------------------------
# quadrature


@dataclass
class IntegralResult:
    value: float
    std_error: float
    n_nodes: int
    rule: str

    def __float__(self):
        return self.value


def sphere_volume(n: int) -> float:
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def _gauss_nodes(a: float, b: float, count: int):
    x, w = np.polynomial.legendre.leggauss(count)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _tensor_sphere_nodes(n: int, per_angle: int):
    """Hyperspherical tensor product nodes on S^n (ambient) with surface weights."""
    angles, weights = [], []
    for k in range(n - 1):
        t, w = _gauss_nodes(0.0, math.pi, per_angle)
        angles.append(t)
        weights.append(w)
    t, w = _gauss_nodes(0.0, 2.0 * math.pi, per_angle)
    angles.append(t)
    weights.append(w)
    grids = np.meshgrid(*angles, indexing="ij")
    wgrids = np.meshgrid(*weights, indexing="ij")
    weight = np.ones_like(grids[0])
    for k in range(n - 1):
        weight = weight * np.sin(grids[k]) ** (n - 1 - k)
    for wg in wgrids:
        weight = weight * wg
    # ambient coordinates
    pts = []
    prod_sin = np.ones_like(grids[0])
    for k in range(n):
        pts.append(prod_sin * np.cos(grids[k]))
        prod_sin = prod_sin * np.sin(grids[k])
    pts.append(prod_sin)
    amb = np.stack([p.ravel() for p in pts], axis=1)
    return amb, weight.ravel()


def _mc_sphere_ambient(n: int, count: int, rng) -> np.ndarray:
    g = rng.standard_normal((count, n + 1))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _conformal_weight(spec, pts):
    if spec.variant == "conformal":
        return np.exp(spec.n * spec.phi(pts))
    return 1.0


def integrate(
    spec: GeometrySpec,
    fn: Callable[[np.ndarray], np.ndarray],
    nodes: int = 1_000_000,
    seed: int = 42,
    per_angle: int = 48,
    chunk: int = 100_000,
    r_segments: int = 24,
    r_per_segment: int = 16,
    fiber_nodes: Optional[int] = None,
) -> IntegralResult:
    """Integral of fn over the spec's volume measure.

    Tensor Gauss-Legendre in hyperspherical angles for spheres of dimension
    <= 3; seeded uniform Monte Carlo otherwise.  Warped products combine a
    per-segment Gauss rule in r with a fiber sphere rule.
    """
    if spec.is_sphere:
        if spec.n <= 3:
            amb, w = _tensor_sphere_nodes(spec.n, per_angle)
            pts = _stereo_chart(amb)
            vals = np.asarray(fn(pts)) * _conformal_weight(spec, pts)
            if not np.all(np.isfinite(vals)):
                bad = pts[~np.isfinite(vals)][0]
                raise GeometryError(f"non-finite integrand sample at {bad}")
            return IntegralResult(float(np.sum(vals * w)), 0.0, len(w), "tensor")
        return _mc_sphere_integral(spec, fn, nodes, seed, chunk)
    if spec.variant == "products":
        return _mc_product_integral(spec, fn, nodes, seed, chunk)
    return _warped_integral(spec, fn, r_segments, r_per_segment, per_angle, fiber_nodes, seed, chunk)


def _accumulate_mc(fn_chart, spec, total, seed, chunk, sampler, vol):
    rng = np.random.default_rng(seed)
    acc = 0.0
    acc2 = 0.0
    count = 0
    while count < total:
        take = min(chunk, total - count)
        pts = sampler(take, rng)
        vals = np.asarray(fn_chart(pts)) * _conformal_weight(spec, pts)
        if not np.all(np.isfinite(vals)):
            bad = pts[~np.isfinite(vals)][0]
            raise GeometryError(f"non-finite integrand sample at {bad}")
        acc += float(np.sum(vals))
        acc2 += float(np.sum(vals * vals))
        count += take
    mean = acc / count
    var = max(acc2 / count - mean * mean, 0.0)
    return IntegralResult(vol * mean, vol * math.sqrt(var / count), count, "mc")


def _mc_sphere_integral(spec, fn, nodes, seed, chunk):
    n = spec.n

    def sampler(take, rng):
        return _stereo_chart(_mc_sphere_ambient(n, take, rng))

    return _accumulate_mc(fn, spec, nodes, seed, chunk, sampler, sphere_volume(n))


def _mc_product_integral(spec, fn, nodes, seed, chunk):
    def sampler(take, rng):
        cols = [
            _stereo_chart(_mc_sphere_ambient(nk, take, rng)) for nk in spec.dims
        ]
        return np.concatenate(cols, axis=1)

    vol = 1.0
    for nk in spec.dims:
        vol *= sphere_volume(nk)
    return _accumulate_mc(fn, spec, nodes, seed, chunk, sampler, vol)


def _warped_integral(spec, fn, r_segments, r_per_segment, per_angle, fiber_nodes, seed, chunk):
    r0, r1 = spec.interval
    if not (np.isfinite(r0) and np.isfinite(r1)):
        raise GeometryError("warped integrals need a finite r-band; pass a banded spec")
    nf = spec.n - 1
    prof = spec.profile
    edges = np.linspace(r0, r1, r_segments + 1)
    r_nodes, r_w = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = _gauss_nodes(a, b, r_per_segment)
        r_nodes.append(x)
        r_w.append(w)
    r_nodes = np.concatenate(r_nodes)
    r_w = np.concatenate(r_w)
    fr = prof.f(r_nodes) ** nf

    if nf <= 3:
        amb, w_f = _tensor_sphere_nodes(nf, per_angle)
        fpts = _stereo_chart(amb)
        total = 0.0
        for rv, rw, fv in zip(r_nodes, r_w, fr):
            pts = np.concatenate([np.full((len(fpts), 1), rv), fpts], axis=1)
            vals = np.asarray(fn(pts))
            if not np.all(np.isfinite(vals)):
                raise GeometryError("non-finite integrand sample in warped quadrature")
            total += rw * fv * float(np.sum(vals * w_f))
        return IntegralResult(total, 0.0, len(r_nodes) * len(fpts), "r-gauss x tensor")

    count = fiber_nodes if fiber_nodes is not None else max(2000, 200_000 // len(r_nodes))
    rng = np.random.default_rng(seed)
    total = 0.0
    var_acc = 0.0
    vol_f = sphere_volume(nf)
    for rv, rw, fv in zip(r_nodes, r_w, fr):
        fpts = _stereo_chart(_mc_sphere_ambient(nf, count, rng))
        pts = np.concatenate([np.full((count, 1), rv), fpts], axis=1)
        vals = np.asarray(fn(pts))
        if not np.all(np.isfinite(vals)):
            raise GeometryError("non-finite integrand sample in warped quadrature")
        mean = float(np.mean(vals))
        var = float(np.var(vals)) / count
        total += rw * fv * vol_f * mean
        var_acc += (rw * fv * vol_f) ** 2 * var
    return IntegralResult(total, math.sqrt(var_acc), len(r_nodes) * count, "r-gauss x mc")


# ---------------------------------------------------------------------------
# sampling helpers


def seeded_chart_points(spec: GeometrySpec, count: int, seed: int, radius: float = 1.5) -> np.ndarray:
    """Deterministic well-conditioned chart points for pointwise residual checks."""
    rng = np.random.default_rng(seed)
    if spec.is_sphere:
        return rng.uniform(-radius / math.sqrt(spec.n), radius / math.sqrt(spec.n), size=(count, spec.n))
    if spec.variant == "products":
        cols = [
            rng.uniform(-radius / math.sqrt(nk), radius / math.sqrt(nk), size=(count, nk))
            for nk in spec.dims
        ]
        return np.concatenate(cols, axis=1)
    r0, r1 = spec.interval
    lo, hi = r0 + 0.25 * (r1 - r0), r1 - 0.25 * (r1 - r0)
    r = rng.uniform(lo, hi, size=(count, 1))
    nf = spec.n - 1
    y = rng.uniform(-radius / math.sqrt(nf), radius / math.sqrt(nf), size=(count, nf))
    return np.concatenate([r, y], axis=1)
