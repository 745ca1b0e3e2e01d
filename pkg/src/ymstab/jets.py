"""Batched scalar jets: values plus coordinate derivatives up to order 4.

A jet of order k over m points in n coordinates is a list of arrays
[(m,), (m,n), (m,n,n), ...] holding the function and its partial
derivatives.  Arithmetic (sum, product, chain rule) is exact, so fields
assembled from jets carry analytic derivatives wherever the inputs do.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Jet",
    "jet_const",
    "jet_linear",
    "jet_norm2",
    "jet_add",
    "jet_scale",
    "jet_mul",
    "jet_chain",
    "jet_exp",
    "jet_log",
    "jet_reciprocal",
    "jet_from_univariate",
]


class Jet:
    """Scalar jet: d[k] is the order-k derivative array of shape (m, n, ..., n)."""

    __slots__ = ("d", "n")

    def __init__(self, arrays, n: int):
        self.d = list(arrays)
        self.n = n

    @property
    def order(self) -> int:
        return len(self.d) - 1

    @property
    def m(self) -> int:
        return self.d[0].shape[0]

    def value(self) -> np.ndarray:
        return self.d[0]

    def grad(self) -> np.ndarray:
        return self.d[1]

    def hess(self) -> np.ndarray:
        return self.d[2]


def _zeros(m, n, k):
    return np.zeros((m,) + (n,) * k)

def jet_const(c: float, m: int, n: int, order: int) -> Jet:
    d = [np.full(m, float(c))] + [_zeros(m, n, k) for k in range(1, order + 1)]
    return Jet(d, n)


def jet_linear(pts: np.ndarray, a: np.ndarray, b: float, order: int) -> Jet:
    """Jet of a . x + b."""
    m, n = pts.shape
    d = [pts @ a + b]
    if order >= 1:
        d.append(np.broadcast_to(a, (m, n)).copy())
    for k in range(2, order + 1):
        d.append(_zeros(m, n, k))
    return Jet(d, n)


def jet_norm2(pts: np.ndarray, order: int) -> Jet:
    """Jet of |x|^2."""
    m, n = pts.shape
    d = [np.einsum("mi,mi->m", pts, pts)]
    if order >= 1:
        d.append(2.0 * pts)
    if order >= 2:
        d.append(np.broadcast_to(2.0 * np.eye(n), (m, n, n)).copy())
    for k in range(3, order + 1):
        d.append(_zeros(m, n, k))
    return Jet(d, n)


def jet_add(f: Jet, g: Jet, cf: float = 1.0, cg: float = 1.0) -> Jet:
    order = min(f.order, g.order)
    return Jet([cf * f.d[k] + cg * g.d[k] for k in range(order + 1)], f.n)


def jet_scale(f: Jet, c: float) -> Jet:
    return Jet([c * a for a in f.d], f.n)


def _sym_outer(a: np.ndarray, b: np.ndarray, ka: int, kb: int) -> np.ndarray:
    """a (m,[n]^ka) times b (m,[n]^kb) symmetrized over all distinct index splits."""
    m = a.shape[0]
    total = ka + kb
    prod = a.reshape(a.shape + (1,) * kb) * b.reshape((m,) + (1,) * ka + b.shape[1:])
    if ka == 0 or kb == 0:
        return prod
    # sum over the distinct ways of assigning `total` slots to the a-part
    out = np.zeros_like(prod)
    import itertools

    for combo in itertools.combinations(range(total), ka):
        rest = [i for i in range(total) if i not in combo]
        perm = (0,) + tuple(1 + i for i in combo) + tuple(1 + i for i in rest)
        out += np.transpose(prod, np.argsort(perm))
    return out


def jet_mul(f: Jet, g: Jet) -> Jet:
    """Leibniz product rule up to the common order."""
    order = min(f.order, g.order)
    d = []
    for k in range(order + 1):
        acc = np.zeros((f.m,) + (f.n,) * k)
        for ka in range(k + 1):
            acc += _sym_outer(f.d[ka], g.d[k - ka], ka, k - ka)
        d.append(acc)
    return Jet(d, f.n)


def jet_chain(f: Jet, outer_derivs) -> Jet:
    """Faa di Bruno: jet of phi(f) given phi^{(k)}(f.value()) arrays in outer_derivs[0..order]."""
    order = f.order
    p = outer_derivs
    m, n = f.m, f.n
    d = [p[0]]
    if order >= 1:
        d.append(p[1][:, None] * f.d[1])
    if order >= 2:
        d.append(
            p[2][:, None, None] * np.einsum("mi,mj->mij", f.d[1], f.d[1])
            + p[1][:, None, None] * f.d[2]
        )
    if order >= 3:
        f1, f2, f3 = f.d[1], f.d[2], f.d[3]
        t111 = np.einsum("mi,mj,mk->mijk", f1, f1, f1)
        t21 = _sym_outer(f2, f1, 2, 1)
        d.append(p[3][:, None, None, None] * t111 + p[2][:, None, None, None] * t21 + p[1][:, None, None, None] * f3)
    if order >= 4:
        f1, f2, f3, f4 = f.d[1], f.d[2], f.d[3], f.d[4]
        sl = (slice(None),) + (None,) * 4
        t1111 = np.einsum("mi,mj,mk,ml->mijkl", f1, f1, f1, f1)
        # partitions {2,1,1}: one pair slot from f2, two singles from f1
        t211 = np.zeros((m, n, n, n, n))
        import itertools

        for combo in itertools.combinations(range(4), 2):
            rest = [i for i in range(4) if i not in combo]
            perm = tuple(1 + i for i in combo) + tuple(1 + i for i in rest)
            arr = np.einsum("mab,mc,md->mabcd", f2, f1, f1)
            t211 += np.transpose(arr, np.argsort((0,) + perm))
        t22 = np.zeros((m, n, n, n, n))
        for combo in [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))]:
            arr = np.einsum("mab,mcd->mabcd", f2, f2)
            perm = tuple(1 + i for i in combo[0] + combo[1])
            t22 += np.transpose(arr, np.argsort((0,) + perm))
        t31 = _sym_outer(f3, f1, 3, 1)
        d.append(p[4][sl] * t1111 + p[3][sl] * t211 + p[2][sl] * (t22 + t31) + p[1][sl] * f4)
    return Jet(d, n)


def jet_exp(f: Jet, scale: float = 1.0) -> Jet:
    """Jet of exp(scale * f)."""
    if scale != 1.0:
        f = jet_scale(f, scale)
    e = np.exp(f.d[0])
    return jet_chain(f, [e] * (f.order + 1))


def jet_log(f: Jet) -> Jet:
    v = f.d[0]
    p = [np.log(v)]
    for k in range(1, f.order + 1):
        p.append(((-1.0) ** (k - 1)) * math.factorial(k - 1) / v**k)
    return jet_chain(f, p)


def jet_reciprocal(f: Jet) -> Jet:
    v = f.d[0]
    p = [1.0 / v]
    for k in range(1, f.order + 1):
        p.append(((-1.0) ** k) * math.factorial(k) / v ** (k + 1))
    return jet_chain(f, p)


def jet_from_univariate(r: np.ndarray, derivs, axis: int, n: int, order: int) -> Jet:
    """Jet of a function of a single coordinate; derivs[k] are d^k f / dr^k at r."""
    m = r.shape[0]
    d = [np.asarray(derivs[0], dtype=float) * np.ones(m)]
    for k in range(1, order + 1):
        arr = _zeros(m, n, k)
        arr[(slice(None),) + (axis,) * k] = derivs[k]
        d.append(arr)
    return Jet(d, n)
