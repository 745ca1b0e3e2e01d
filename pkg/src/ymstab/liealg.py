"""Fiber arithmetic for the adjoint bundle: so(r)/su(r) matrices, brackets, inner product."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StructureGroup",
    "LieAlgebraElement",
    "bracket",
    "inner",
    "random_element",
    "algebra_dtype",
    "project_to_algebra",
]


class DimensionError(ValueError):
    """Raised when two fiber values live in different algebras."""


@dataclass(frozen=True)
class StructureGroup:
    """Compact structure group: special orthogonal or special unitary, r x r matrices."""

    kind: str  # "SO" or "SU"
    r: int

    def __post_init__(self):
        if self.kind not in ("SO", "SU"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.r < 2:
            raise ValueError("matrix size must be >= 2")

    @property
    def is_complex(self) -> bool:
        return self.kind == "SU"

    def __str__(self):
        return f"{self.kind.lower()}({self.r})"


def algebra_dtype(group: StructureGroup):
    return np.complex128 if group.is_complex else np.float64


def project_to_algebra(group: StructureGroup, m: np.ndarray) -> np.ndarray:
    """Project an arbitrary matrix (batch) onto the algebra: m - m^H, traceless for su."""
    a = m - np.conj(np.swapaxes(m, -1, -2))
    if group.is_complex:
        r = group.r
        tr = np.trace(a, axis1=-2, axis2=-1)[..., None, None] / r
        a = a - tr * np.eye(r)
    return a


@dataclass(frozen=True)
class LieAlgebraElement:
    """One fiber value of the adjoint bundle; entries anti-symmetric (so) or anti-Hermitian traceless (su)."""

    group: StructureGroup
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=algebra_dtype(self.group))
        if e.shape != (self.group.r, self.group.r):
            raise DimensionError(f"expected {(self.group.r, self.group.r)} matrix, got {e.shape}")
        object.__setattr__(self, "entries", e)
        herm = e + np.conj(e.T)
        if np.max(np.abs(herm)) > 1e-12 * max(1.0, np.max(np.abs(e))):
            raise ValueError("entries do not satisfy the anti-symmetry invariant")
        if self.group.is_complex and abs(np.trace(e)) > 1e-12 * max(1.0, np.max(np.abs(e))):
            raise ValueError("su element must be traceless")

    def __add__(self, other: "LieAlgebraElement") -> "LieAlgebraElement":
        _check_same(self, other)
        return LieAlgebraElement(self.group, self.entries + other.entries)

    def __sub__(self, other: "LieAlgebraElement") -> "LieAlgebraElement":
        _check_same(self, other)
        return LieAlgebraElement(self.group, self.entries - other.entries)

    def __mul__(self, c: float) -> "LieAlgebraElement":
        return LieAlgebraElement(self.group, self.entries * c)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))


def _check_same(a: LieAlgebraElement, b: LieAlgebraElement):
    if a.group != b.group:
        raise DimensionError(f"mismatched algebras {a.group} vs {b.group}")


def bracket(a: LieAlgebraElement, b: LieAlgebraElement) -> LieAlgebraElement:
    """Matrix commutator ab - ba."""
    _check_same(a, b)
    return LieAlgebraElement(a.group, a.entries @ b.entries - b.entries @ a.entries)


def inner(a: LieAlgebraElement, b: LieAlgebraElement) -> float:
    """Ad-invariant inner product (1/2) Re tr(a^H b); positive definite on both algebras."""
    _check_same(a, b)
    return 0.5 * float(np.real(np.trace(np.conj(a.entries.T) @ b.entries)))


def batch_bracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Commutator over the last two axes of broadcast-compatible matrix batches."""
    return a @ b - b @ a


def batch_bracket_alg(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Commutator when both operands are algebra-valued (anti-Hermitian).

    Then b a = (a b)^H, so one matrix product suffices; roughly halves the
    cost of the bracket-heavy quadrature paths.
    """
    m = a @ b
    mh = np.conj(np.swapaxes(m, -1, -2)) if np.iscomplexobj(m) else np.swapaxes(m, -1, -2)
    return m - mh


def batch_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1/2) Re tr(a^H b) over the last two axes."""
    return 0.5 * np.real(np.einsum("...ab,...ab->...", np.conj(a), b))


def random_element(group: StructureGroup, seed: int) -> LieAlgebraElement:
    """Deterministic seeded algebra element, built as m - m^H (traceless-projected for su)."""
    rng = np.random.default_rng(seed)
    m = rng.uniform(-1.0, 1.0, size=(group.r, group.r))
    if group.is_complex:
        m = m + 1j * rng.uniform(-1.0, 1.0, size=(group.r, group.r))
    return LieAlgebraElement(group, project_to_algebra(group, m))
