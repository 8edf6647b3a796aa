"""Dense complex linear algebra shared by the rest of the package.

Operators are plain ``numpy`` complex arrays. Helpers here enforce the
tolerance conventions (hermitization, descending spectra, relative rank
thresholds) so that downstream code does not have to repeat them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_SEED = 0x1DE3C4A7


class EmucapError(Exception):
    """Base class for all package errors."""


class DimensionError(EmucapError, ValueError):
    pass


class NotIdempotentError(EmucapError):
    def __init__(self, residual: float, message: str | None = None):
        self.residual = residual
        super().__init__(message or f"channel is not idempotent (residual {residual:.3e})")


class NumericalError(EmucapError):
    pass


class BudgetError(EmucapError):
    pass


@dataclass(frozen=True)
class ToleranceConfig:
    rank_tol: float = 1e-9
    eq_tol: float = 1e-8
    cluster_tol: float = 1e-6

    def __post_init__(self):
        for name in ("rank_tol", "eq_tol", "cluster_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


DEFAULT_TOL = ToleranceConfig()


@dataclass(frozen=True)
class SupportData:
    projector: np.ndarray
    isometry: np.ndarray
    rank: int
    eigenvalues: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.projector.shape[0]


def as_matrix(x, square: bool = False, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a 2-d complex array and check its shape."""
    a = np.asarray(x, dtype=complex)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={a.ndim}")
    if square and a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got {a.shape}")
    if dim is not None and a.shape != (dim, dim):
        raise DimensionError(f"{name} must be {dim}x{dim}, got {a.shape}")
    return a


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def tensor_product(a, b) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def hermitize(x, tol: ToleranceConfig = DEFAULT_TOL, name: str = "x") -> np.ndarray:
    """Return (x + x*)/2, rejecting inputs whose Hermitian defect exceeds eq_tol."""
    a = as_matrix(x, square=True, name=name)
    defect = np.linalg.norm(a - dagger(a))
    if defect > tol.eq_tol * max(1.0, np.linalg.norm(a)):
        raise NumericalError(f"{name} is not Hermitian (defect {defect:.3e})")
    return (a + dagger(a)) / 2


def eigh_desc(x) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending, stable on ties."""
    w, v = np.linalg.eigh(x)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def support_of(x, tol: ToleranceConfig = DEFAULT_TOL) -> SupportData:
    h = hermitize(x, tol)
    w, v = eigh_desc(h)
    top = w[0] if w.size else 0.0
    if w.size and w[-1] < -tol.eq_tol * max(1.0, abs(top)):
        raise NumericalError(f"operator is not positive semidefinite (min eigenvalue {w[-1]:.3e})")
    keep = w > tol.rank_tol * top if top > 0 else np.zeros_like(w, dtype=bool)
    iso = v[:, keep]
    return SupportData(projector=iso @ dagger(iso), isometry=iso, rank=int(keep.sum()), eigenvalues=w)


def norms(x) -> tuple[float, float, float]:
    """(operator, trace, Frobenius) norms from singular values."""
    s = np.linalg.svd(as_matrix(x), compute_uv=False)
    if s.size == 0:
        return 0.0, 0.0, 0.0
    return float(s[0]), float(s.sum()), float(np.sqrt((s**2).sum()))


def op_norm(x) -> float:
    return float(np.linalg.norm(x, 2)) if np.size(x) else 0.0


def trace_norm(x) -> float:
    return float(np.linalg.svd(x, compute_uv=False).sum())


def partial_trace(x, dims: Sequence[tuple[int, int]], which: int) -> np.ndarray:
    """Trace out tensor factor ``which`` (1 or 2) of each block of a block-diagonal operator.

    ``dims`` lists the (d1, d2) of consecutive diagonal blocks. Entries outside
    the diagonal blocks are ignored. With several blocks the reduced operators
    are returned as a direct sum.
    """
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    a = as_matrix(x, square=True)
    total = sum(d1 * d2 for d1, d2 in dims)
    if a.shape[0] != total:
        acc = 0
        for k, (d1, d2) in enumerate(dims):
            acc += d1 * d2
            if acc > a.shape[0]:
                raise DimensionError(f"block {k} ({d1}x{d2}) exceeds operator dimension {a.shape[0]}")
        raise DimensionError(f"blocks cover {total} dimensions, operator has {a.shape[0]}")
    parts = []
    off = 0
    for d1, d2 in dims:
        blk = a[off:off + d1 * d2, off:off + d1 * d2].reshape(d1, d2, d1, d2)
        parts.append(np.einsum("ijkj->ik", blk) if which == 2 else np.einsum("ijil->jl", blk))
        off += d1 * d2
    return block_diag(parts)


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    m = sum(b.shape[1] for b in blocks)
    out = np.zeros((n, m), dtype=complex)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def is_density(rho, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    try:
        h = hermitize(rho, tol)
    except (NumericalError, DimensionError):
        return False
    w = np.linalg.eigvalsh(h)
    return bool(w.min() >= -tol.eq_tol and abs(w.sum() - 1) <= tol.eq_tol)


def cluster_sorted(values: np.ndarray, gap: float) -> list[np.ndarray]:
    """Split descending-sorted values into runs whose consecutive gaps are <= ``gap``."""
    if values.size == 0:
        return []
    groups = [[0]]
    for i in range(1, values.size):
        if values[i - 1] - values[i] > gap:
            groups.append([])
        groups[-1].append(i)
    return [np.array(g) for g in groups]


def orthonormal_span(vectors: np.ndarray, rank_tol: float) -> np.ndarray:
    """Orthonormal basis (as rows) of the row span of ``vectors`` via SVD."""
    if vectors.shape[0] == 0:
        return vectors
    _, s, vh = np.linalg.svd(vectors, full_matrices=False)
    r = int((s > rank_tol * s[0]).sum()) if s[0] > 0 else 0
    return vh[:r]


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    r = rank or d
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def max_entangled(d: int) -> np.ndarray:
    """Normalized projector onto Σ|ii>/√d in C^d ⊗ C^d."""
    v = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return np.outer(v, v.conj())
