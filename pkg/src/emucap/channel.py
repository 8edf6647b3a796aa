"""Quantum channels stored as Kraus lists.

Choi convention: ``J[(i,k),(j,l)] = <k|Φ(|i><j|)|l>`` with composite index
``i*dim_out + k``. Superoperators act on row-major vectorizations, so
``vec(K x K*) = (K ⊗ conj(K)) vec(x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .operator_core import (
    DEFAULT_SEED,
    DEFAULT_TOL,
    DimensionError,
    ToleranceConfig,
    as_matrix,
    dagger,
    eigh_desc,
    haar_unitary,
    hermitize,
    is_density,
)


@dataclass(frozen=True, eq=False)
class Channel:
    dim_in: int
    dim_out: int
    kraus: tuple

    def __post_init__(self):
        ks = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        if not ks:
            raise ValueError("a channel needs at least one Kraus operator")
        for i, k in enumerate(ks):
            if k.shape != (self.dim_out, self.dim_in):
                raise DimensionError(
                    f"Kraus operator {i} has shape {k.shape}, expected {(self.dim_out, self.dim_in)}")
        object.__setattr__(self, "kraus", ks)

    @classmethod
    def from_kraus(cls, kraus: Sequence) -> "Channel":
        ks = [np.atleast_2d(np.asarray(k, dtype=complex)) for k in kraus]
        return cls(ks[0].shape[1], ks[0].shape[0], tuple(ks))

    @classmethod
    def from_choi(cls, choi, dim_in: int, dim_out: int, tol: ToleranceConfig = DEFAULT_TOL) -> "Channel":
        j = hermitize(as_matrix(choi, dim=dim_in * dim_out, name="choi"), tol, name="choi")
        w, v = eigh_desc(j)
        if w[-1] < -tol.eq_tol * max(1.0, w[0]):
            raise ValueError(f"Choi matrix is not PSD (min eigenvalue {w[-1]:.3e})")
        keep = w > tol.rank_tol * max(w[0], 0.0)
        if not keep.any():
            keep[0] = True
        ks = [np.sqrt(max(lam, 0.0)) * vec.reshape(dim_in, dim_out).T for lam, vec in zip(w[keep], v[:, keep].T)]
        return cls(dim_in, dim_out, tuple(ks))

    @classmethod
    def from_superop(cls, s, dim_in: int, dim_out: int, tol: ToleranceConfig = DEFAULT_TOL) -> "Channel":
        return cls.from_choi(superop_to_choi(s, dim_in, dim_out), dim_in, dim_out, tol)

    @property
    def n_kraus(self) -> int:
        return len(self.kraus)

    @cached_property
    def kraus_array(self) -> np.ndarray:
        return np.stack(self.kraus)

    @cached_property
    def choi(self) -> np.ndarray:
        vecs = self.kraus_array.transpose(0, 2, 1).reshape(self.n_kraus, -1)
        return vecs.T @ vecs.conj()

    @cached_property
    def superop(self) -> np.ndarray:
        k = self.kraus_array
        s = np.tensordot(k, k.conj(), axes=(0, 0))  # (i, j, k, l)
        return s.transpose(0, 2, 1, 3).reshape(self.dim_out**2, self.dim_in**2)

    def __call__(self, x) -> np.ndarray:
        return apply(self, x)

    def adjoint(self, y) -> np.ndarray:
        return adjoint_apply(self, y)

    def compress(self, tol: ToleranceConfig = DEFAULT_TOL) -> "Channel":
        """Minimal Kraus set from the Choi eigendecomposition."""
        return Channel.from_choi(self.choi, self.dim_in, self.dim_out, tol)

    def tp_residual(self) -> float:
        k = self.kraus_array
        return float(np.linalg.norm(np.einsum("aji,ajk->ik", k.conj(), k) - np.eye(self.dim_in)))


def apply(c: Channel, x) -> np.ndarray:
    x = as_matrix(x, dim=c.dim_in, name="input")
    k = c.kraus_array
    return (k @ x @ k.conj().transpose(0, 2, 1)).sum(axis=0)


def adjoint_apply(c: Channel, y) -> np.ndarray:
    y = as_matrix(y, dim=c.dim_out, name="input")
    k = c.kraus_array
    return (k.conj().transpose(0, 2, 1) @ y @ k).sum(axis=0)


def superop_to_choi(s, dim_in: int, dim_out: int) -> np.ndarray:
    s = np.asarray(s).reshape(dim_out, dim_out, dim_in, dim_in)
    return s.transpose(2, 0, 3, 1).reshape(dim_in * dim_out, dim_in * dim_out)


def choi_to_superop(j, dim_in: int, dim_out: int) -> np.ndarray:
    j = np.asarray(j).reshape(dim_in, dim_out, dim_in, dim_out)
    return j.transpose(1, 3, 0, 2).reshape(dim_out**2, dim_in**2)


def choi(c: Channel) -> np.ndarray:
    return c.choi


def compose(c2: Channel, c1: Channel) -> Channel:
    """c2 ∘ c1."""
    if c2.dim_in != c1.dim_out:
        raise DimensionError(f"cannot compose: {c1.dim_out} -> {c2.dim_in}")
    ks = c2.kraus_array[:, None] @ c1.kraus_array[None, :]
    return Channel(c1.dim_in, c2.dim_out, tuple(ks.reshape(-1, c2.dim_out, c1.dim_in)))


def compose_all(*channels: Channel, tol: ToleranceConfig | None = None) -> Channel:
    """Compose right-to-left like function application, compressing as it goes if ``tol`` is given."""
    out = channels[-1]
    for c in reversed(channels[:-1]):
        out = compose(c, out)
        if tol is not None and out.n_kraus > out.dim_in * out.dim_out:
            out = out.compress(tol)
    return out


def tensor(c1: Channel, c2: Channel) -> Channel:
    ks = [np.kron(a, b) for a in c1.kraus for b in c2.kraus]
    return Channel(c1.dim_in * c2.dim_in, c1.dim_out * c2.dim_out, tuple(ks))


def tensor_power(c: Channel, n: int, tol: ToleranceConfig | None = None) -> Channel:
    if n < 1:
        raise ValueError("tensor power needs n >= 1")
    out = c
    for _ in range(n - 1):
        out = tensor(out, c)
        if tol is not None and out.n_kraus > out.dim_in * out.dim_out:
            out = out.compress(tol)
    return out


def choi_distance(c1: Channel, c2: Channel) -> float:
    if (c1.dim_in, c1.dim_out) != (c2.dim_in, c2.dim_out):
        raise DimensionError("channels have different dimensions")
    return float(np.linalg.norm(c1.choi - c2.choi))


def channels_equal(c1: Channel, c2: Channel, tol: ToleranceConfig = DEFAULT_TOL) -> tuple[bool, float]:
    r = choi_distance(c1, c2)
    return r <= tol.eq_tol, r


def idempotence_residual(c: Channel) -> float:
    if c.dim_in != c.dim_out:
        raise DimensionError("idempotence needs dim_in == dim_out")
    s = c.superop
    # Choi reshuffling preserves the Frobenius norm, so compare superoperators
    return float(np.linalg.norm(s @ s - s))


def is_idempotent(c: Channel, tol: ToleranceConfig = DEFAULT_TOL) -> tuple[bool, float]:
    r = idempotence_residual(c)
    return r <= tol.eq_tol, r


def identity(d: int) -> Channel:
    return Channel(d, d, (np.eye(d, dtype=complex),))


def dephasing(d: int) -> Channel:
    ks = []
    for i in range(d):
        k = np.zeros((d, d), dtype=complex)
        k[i, i] = 1
        ks.append(k)
    return Channel(d, d, tuple(ks))


def replacer(d: int, rho) -> Channel:
    """x ↦ tr(x) ρ on L(C^d)."""
    rho = as_matrix(rho, square=True, name="rho")
    if not is_density(rho):
        raise ValueError("replacer state must be a density operator")
    w, v = eigh_desc((rho + dagger(rho)) / 2)
    ks = []
    for lam, vec in zip(w, v.T):
        if lam <= 0:
            continue
        for a in range(d):
            k = np.zeros((rho.shape[0], d), dtype=complex)
            k[:, a] = np.sqrt(lam) * vec
            ks.append(k)
    return Channel(d, rho.shape[0], tuple(ks))


def random_channel(dim_in: int, dim_out: int, n_kraus: int | None = None, seed=None) -> Channel:
    """Gaussian Kraus operators made exactly trace preserving by QR of the stacked block."""
    rng = np.random.default_rng(seed)
    r = n_kraus or max(1, -(-dim_in // dim_out))
    r = max(r, -(-dim_in // dim_out))
    g = rng.standard_normal((r * dim_out, dim_in)) + 1j * rng.standard_normal((r * dim_out, dim_in))
    q, rr = np.linalg.qr(g)
    q = q * (np.diagonal(rr) / np.abs(np.diagonal(rr)))
    return Channel(dim_in, dim_out, tuple(q.reshape(r, dim_out, dim_in)))


def unitary_channel(u) -> Channel:
    u = as_matrix(u, square=True, name="u")
    return Channel(u.shape[0], u.shape[0], (u,))


def isometry_channel(v) -> Channel:
    """x ↦ V x V*."""
    v = as_matrix(v, name="isometry")
    return Channel(v.shape[1], v.shape[0], (v,))


def channel_from_heisenberg(fn: Callable[[np.ndarray], np.ndarray], dim_in: int, dim_out: int,
                            tol: ToleranceConfig = DEFAULT_TOL) -> Channel:
    """Schrödinger channel L(C^dim_in) -> L(C^dim_out) whose adjoint is ``fn``.

    ``fn`` maps L(C^dim_out) to L(C^dim_in) and must be unital CP. Uses
    J[(i,k),(j,l)] = fn(|l><k|)[j, i].
    """
    j = np.zeros((dim_in, dim_out, dim_in, dim_out), dtype=complex)
    for k in range(dim_out):
        for l in range(dim_out):
            unit = np.zeros((dim_out, dim_out), dtype=complex)
            unit[l, k] = 1
            img = np.asarray(fn(unit))
            j[:, k, :, l] = img.T
    return Channel.from_choi(j.reshape(dim_in * dim_out, -1), dim_in, dim_out, tol)


@dataclass(frozen=True, eq=False)
class BlockSpec:
    """Block data (d_k, m_k, ρ_k) of an idempotent channel plus its ambient space."""

    blocks: tuple
    ambient_dim: int | None = None
    embedding_isometry: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        blocks = []
        for i, b in enumerate(self.blocks):
            d, m = int(b[0]), int(b[1])
            rho = np.eye(m, dtype=complex) / m if len(b) < 3 or b[2] is None else as_matrix(b[2], name=f"rho_{i}")
            if d < 1 or m < 1:
                raise ValueError(f"block {i}: dimensions must be positive")
            if rho.shape != (m, m) or not is_density(rho):
                raise ValueError(f"block {i}: rho must be an {m}x{m} density operator")
            blocks.append((d, m, rho))
        if not blocks:
            raise ValueError("BlockSpec needs at least one block")
        object.__setattr__(self, "blocks", tuple(blocks))
        amb = self.core_dim if self.ambient_dim is None else int(self.ambient_dim)
        if amb < self.core_dim:
            raise ValueError(f"ambient_dim {amb} < Σ d_k m_k = {self.core_dim}")
        object.__setattr__(self, "ambient_dim", amb)
        if self.embedding_isometry is not None:
            v = as_matrix(self.embedding_isometry, name="embedding_isometry")
            if v.shape != (amb, self.core_dim):
                raise DimensionError(f"embedding isometry must be {amb}x{self.core_dim}")
            if np.linalg.norm(dagger(v) @ v - np.eye(self.core_dim)) > 1e-8:
                raise ValueError("embedding_isometry is not an isometry")
            object.__setattr__(self, "embedding_isometry", v)

    @property
    def core_dim(self) -> int:
        return sum(d * m for d, m, _ in self.blocks)

    @property
    def shape(self) -> tuple:
        return tuple(sorted((d for d, _, _ in self.blocks), reverse=True))


def _block_core_kraus(spec: BlockSpec) -> list[np.ndarray]:
    """Kraus operators of x ↦ Σ tr_2(P_k x P_k) ⊗ ρ_k on C^{Σ d_k m_k}."""
    n = spec.core_dim
    ks = []
    off = 0
    for d, m, rho in spec.blocks:
        w, v = eigh_desc((rho + dagger(rho)) / 2)
        for lam, phi in zip(w, v.T):
            if lam <= 1e-15:
                continue
            for a in range(m):
                bra = np.zeros((1, m), dtype=complex)
                bra[0, a] = 1
                local = np.kron(np.eye(d), np.sqrt(lam) * phi[:, None] @ bra)
                k = np.zeros((n, n), dtype=complex)
                k[off:off + d * m, off:off + d * m] = local
                ks.append(k)
        off += d * m
    return ks


def make_block_idempotent(spec: BlockSpec, seed=DEFAULT_SEED) -> Channel:
    """Idempotent channel with the given block data.

    When the ambient space is larger than the blocks, the complement outcome of
    the measurement {e, 1-e} is replaced by (1/d_1) 1 ⊗ ρ_1 in the first block.
    """
    n, amb = spec.core_dim, spec.ambient_dim
    v = spec.embedding_isometry
    if v is None:
        v = np.eye(n, dtype=complex) if amb == n else haar_unitary(amb, np.random.default_rng(seed))[:, :n]
    ks = [v @ k @ dagger(v) for k in _block_core_kraus(spec)]
    if amb > n:
        d1, m1, rho1 = spec.blocks[0]
        target = np.zeros((n, n), dtype=complex)
        target[:d1 * m1, :d1 * m1] = np.kron(np.eye(d1) / d1, rho1)
        w, vec = eigh_desc(target)
        comp = np.linalg.svd(np.eye(amb) - v @ dagger(v))[0][:, : amb - n]
        for lam, phi in zip(w, vec.T):
            if lam <= 1e-15:
                continue
            out = v @ (np.sqrt(lam) * phi)
            for c in comp.T:
                ks.append(np.outer(out, c.conj()))
    return Channel(amb, amb, tuple(ks))
