"""Reduction, fixed-point algebra and block decomposition of idempotent channels."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .channel import Channel, compose, idempotence_residual, isometry_channel
from .operator_core import (
    DEFAULT_SEED,
    DEFAULT_TOL,
    NotIdempotentError,
    NumericalError,
    SupportData,
    ToleranceConfig,
    block_diag,
    cluster_sorted,
    dagger,
    eigh_desc,
    orthonormal_span,
    support_of,
)

MAX_CLUSTER_RETRIES = 8
ROUNDING_SLACK = 1e-4


class ShapeVector(tuple):
    """Non-increasing tuple of positive integers."""

    def __new__(cls, entries=()):
        vals = [int(v) for v in entries]
        if not vals:
            raise ValueError("shape vector must be non-empty")
        if any(v < 1 for v in vals):
            raise ValueError(f"shape entries must be >= 1, got {vals}")
        return super().__new__(cls, sorted(vals, reverse=True))

    def tensor(self, other) -> "ShapeVector":
        return ShapeVector(a * b for a in self for b in other)

    def power(self, k: int) -> "ShapeVector":
        out = ShapeVector((1,))
        for _ in range(k):
            out = out.tensor(self)
        return out

    @property
    def all_ones(self) -> bool:
        return all(v == 1 for v in self)

    def __repr__(self):
        return f"ShapeVector({list(self)})"


@dataclass(frozen=True, eq=False)
class ReducedChannel:
    original: Channel
    support: SupportData
    reduced: Channel
    idempotence_residual: float = 0.0

    @property
    def isometry(self) -> np.ndarray:
        return self.support.isometry


@dataclass(frozen=True, eq=False)
class AlgebraBasis:
    ambient_dim: int
    basis: np.ndarray  # (dim, n, n), Hilbert-Schmidt orthonormal
    closure_residual: float = 0.0
    complement: np.ndarray | None = field(default=None, repr=False)  # rows span the orthogonal complement

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def project(self, x: np.ndarray) -> np.ndarray:
        """Orthogonal projection of x onto the span."""
        c = np.einsum("bij,ij->b", self.basis.conj(), x)
        return np.einsum("b,bij->ij", c, self.basis)


@dataclass(frozen=True, eq=False)
class IdempotentDecomposition:
    """Block data of Rg(F̂*) = U (⊕ M_{d_k} ⊗ 1_{m_k}) U*.

    Columns of ``basis_change`` are ordered by block, then by the first factor,
    then by the multiplicity index.
    """

    shape: ShapeVector
    multiplicities: tuple
    block_states: tuple
    basis_change: np.ndarray
    central_projections: tuple = field(repr=False)
    residuals: dict = field(default_factory=dict)

    @cached_property
    def matrix_units(self) -> tuple:
        """Per block, a (d, d, n, n) array with e_uv = U_k (|u><v| ⊗ 1_m) U_k*."""
        out = []
        for s, d, m in self.block_slices():
            cols = self.basis_change[:, s].reshape(-1, d, m)
            out.append(np.einsum("iua,jva->uvij", cols, cols.conj()))
        return tuple(out)

    @property
    def dims(self) -> tuple:
        return tuple(self.shape)

    @property
    def dim(self) -> int:
        return self.basis_change.shape[0]

    @property
    def offsets(self) -> list[int]:
        out, acc = [], 0
        for d, m in zip(self.shape, self.multiplicities):
            out.append(acc)
            acc += d * m
        return out

    def block_slices(self):
        for off, d, m in zip(self.offsets, self.shape, self.multiplicities):
            yield slice(off, off + d * m), d, m

    def to_blocks(self, x: np.ndarray) -> list[np.ndarray]:
        """Diagonal blocks of U* x U, one (d m)x(d m) array per block."""
        y = dagger(self.basis_change) @ x @ self.basis_change
        return [y[s, s] for s, _, _ in self.block_slices()]

    def compress(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-block factor-1 parts tr_2(P_k x P_k)/m_k."""
        return [np.einsum("ijkj->ik", b.reshape(d, m, d, m)) / m
                for b, (_, d, m) in zip(self.to_blocks(x), self.block_slices())]

    def embed(self, parts) -> np.ndarray:
        """U (⊕ a_k ⊗ 1_{m_k}) U*."""
        y = block_diag([np.kron(a, np.eye(m)) for a, m in zip(parts, self.multiplicities)])
        return self.basis_change @ y @ dagger(self.basis_change)

    def conditional_expectation(self, x: np.ndarray) -> np.ndarray:
        return self.embed(self.compress(x))

    def to_report(self) -> dict:
        return {
            "shape": list(self.shape),
            "multiplicities": list(self.multiplicities),
            "dim": self.dim,
            "block_state_spectra": [np.linalg.eigvalsh(r)[::-1].round(12).tolist() for r in self.block_states],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
        }


def reduce(c: Channel, tol: ToleranceConfig = DEFAULT_TOL) -> ReducedChannel:
    res = idempotence_residual(c)
    if res > tol.eq_tol:
        raise NotIdempotentError(res)
    sup = support_of(c(np.eye(c.dim_in)), tol)
    v = sup.isometry
    ks = tuple(dagger(v) @ k @ v for k in c.kraus)
    red = Channel(sup.rank, sup.rank, ks)
    return ReducedChannel(c, sup, red, res)


def fixed_point_algebra(rc: ReducedChannel, tol: ToleranceConfig = DEFAULT_TOL,
                        check: bool = True) -> AlgebraBasis:
    """Orthonormal basis of Rg(F̂*), the column space of its superoperator."""
    n = rc.reduced.dim_in
    s_adj = dagger(rc.reduced.superop)
    u, sv, _ = np.linalg.svd(s_adj)
    r = int((sv > tol.rank_tol * sv[0]).sum())
    basis = u[:, :r].T.reshape(r, n, n)
    comp = u[:, r:].T
    alg = AlgebraBasis(n, basis, 0.0, comp)
    if check:
        res = algebra_closure_residual(alg)
        if res > tol.eq_tol * max(1.0, n):
            raise NumericalError(f"fixed-point algebra fails closure checks (residual {res:.3e})")
        alg = AlgebraBasis(n, basis, res, comp)
    return alg


def algebra_closure_residual(alg: AlgebraBasis) -> float:
    """Worst distance of adjoints, pairwise products and the unit from the span."""
    b = alg.basis
    flat = b.reshape(alg.dim, -1)

    comp = alg.complement

    def off_span(m):
        m = m.reshape(m.shape[0], -1)
        if comp is not None and comp.shape[0] < alg.dim:
            return np.linalg.norm(m @ comp.conj().T, axis=1).max(initial=0.0)
        coeff = m @ flat.conj().T
        return np.linalg.norm(m - coeff @ flat, axis=1).max(initial=0.0)

    worst = off_span(dagger(b))
    unit = np.eye(alg.ambient_dim)[None]
    worst = max(worst, off_span(unit))
    n = alg.ambient_dim
    wide = b.transpose(1, 0, 2).reshape(n, -1)  # [b_0 | b_1 | ...]
    for i in range(alg.dim):
        prods = (b[i] @ wide).reshape(n, alg.dim, n).transpose(1, 0, 2)
        worst = max(worst, off_span(prods))
    return float(worst)


def _commutator_null(alg: AlgebraBasis, others: np.ndarray, tol: ToleranceConfig) -> np.ndarray:
    """Coefficient vectors c with [Σ c_b b_b, x] = 0 for every x in ``others``."""
    b = alg.basis
    # accumulate the R factor of the stacked system chunk by chunk
    r = np.zeros((0, alg.dim), dtype=complex)
    for x in others:
        comm = (b @ x - x @ b).reshape(alg.dim, -1).T
        r = np.linalg.qr(np.vstack([r, comm]), mode="r")
    _, sv, vh = np.linalg.svd(r)
    sv = np.concatenate([sv, np.zeros(alg.dim - sv.size)])
    null = sv <= tol.cluster_tol * max(sv[0], 1.0)
    return vh.conj().T[:, null]


def _center(alg: AlgebraBasis, tol: ToleranceConfig, rng) -> np.ndarray:
    """Basis of the center as (c, n, n).

    Two generic elements generate the algebra, so their joint commutant inside
    the algebra is the center; the result is checked against the full basis and
    the exhaustive system is solved if the check fails.
    """
    b = alg.basis
    gens = np.einsum("gc,cij->gij", rng.standard_normal((2, alg.dim)) + 1j * rng.standard_normal((2, alg.dim)), b)
    z = np.einsum("bc,bij->cij", _commutator_null(alg, gens, tol), b)
    worst = max((np.linalg.norm(zi @ b - b @ zi) for zi in z), default=0.0)
    if worst > tol.eq_tol * max(1.0, alg.ambient_dim):
        z = np.einsum("bc,bij->cij", _commutator_null(alg, b, tol), b)
    return z


def _span_dim(mats: np.ndarray, rank_tol: float) -> int:
    return orthonormal_span(mats.reshape(mats.shape[0], -1), rank_tol).shape[0]


def _random_hermitian(mats: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    coeff = rng.standard_normal(mats.shape[0])
    z = np.einsum("c,cij->ij", coeff, mats)
    h = (z + dagger(z)) / 2
    coeff2 = rng.standard_normal(mats.shape[0])
    z2 = np.einsum("c,cij->ij", coeff2, mats)
    h += (z2 - dagger(z2)) / 2j
    return h


def _spectral_projections(h: np.ndarray, iso: np.ndarray, cluster_tol: float) -> list[np.ndarray]:
    """Cluster the spectrum of h compressed to range(iso); return isometries of the clusters."""
    hh = dagger(iso) @ h @ iso
    w, v = eigh_desc((hh + dagger(hh)) / 2)
    scale = max(abs(w).max(), 1e-300)
    return [iso @ v[:, g] for g in cluster_sorted(w / scale, cluster_tol)]


def _central_projections(alg: AlgebraBasis, tol: ToleranceConfig, rng) -> list[np.ndarray]:
    zc = _center(alg, tol, rng)
    nz = zc.shape[0]
    if nz == 0:
        raise NumericalError("empty center; the algebra is not unital")
    n = alg.ambient_dim
    for _ in range(MAX_CLUSTER_RETRIES):
        h = _random_hermitian(zc, rng)
        isos = _spectral_projections(h, np.eye(n, dtype=complex), tol.cluster_tol)
        if len(isos) != nz:
            continue
        ok = True
        for w in isos:
            p = w @ dagger(w)
            if _span_dim(p[None] @ zc @ p[None], tol.rank_tol) != 1:
                ok = False
                break
        if ok:
            return isos
    raise NumericalError(
        f"could not separate {nz} central projections after {MAX_CLUSTER_RETRIES} draws; "
        "try a looser cluster_tol")


def _round_checked(value: float, what: str) -> int:
    r = int(round(value))
    if abs(value - r) > ROUNDING_SLACK or r < 1:
        raise NumericalError(f"{what} = {value:.6f} is not an integer")
    return r


def _block_units(alg: AlgebraBasis, w: np.ndarray, tol: ToleranceConfig, rng):
    """Matrix units of the corner p A p for p = w w*.

    Returns (d, m, units, frame) where ``frame`` has columns e_{u1} f_μ ordered
    u-major.
    """
    p = w @ dagger(w)
    corner = p[None] @ alg.basis @ p[None]
    cb = orthonormal_span(corner.reshape(alg.dim, -1), tol.rank_tol)
    cb = cb.reshape(-1, alg.ambient_dim, alg.ambient_dim)
    dim_corner = cb.shape[0]
    d = _round_checked(math.sqrt(dim_corner), "sqrt(corner dimension)")
    if d * d != dim_corner:
        raise NumericalError(f"corner dimension {dim_corner} is not a square")
    trace_p = float(np.trace(p).real)
    m = _round_checked(trace_p / d, "tr(p)/d")
    for _ in range(MAX_CLUSTER_RETRIES):
        h = _random_hermitian(cb, rng)
        isos = _spectral_projections(h, w, tol.cluster_tol)
        if len(isos) == d and all(x.shape[1] == m for x in isos):
            break
    else:
        raise NumericalError("could not split a corner into minimal projections; try a looser cluster_tol")
    diag = [x @ dagger(x) for x in isos]
    e11 = diag[0]
    f = isos[0]
    col_units = [e11]
    for u in range(1, d):
        for _ in range(MAX_CLUSTER_RETRIES):
            a = np.einsum("c,cij->ij", rng.standard_normal(cb.shape[0]) + 1j * rng.standard_normal(cb.shape[0]), cb)
            y = diag[u] @ a @ e11
            uu, s, vh = np.linalg.svd(y)
            if s[m - 1] > 1e-6 * max(s[0], 1e-300):
                col_units.append(uu[:, :m] @ vh[:m])
                break
        else:
            raise NumericalError("could not build partial isometries between minimal projections")
    cu = np.stack(col_units)
    units = np.einsum("uij,vkj->uvik", cu, cu.conj())
    frame = np.concatenate([col_units[u] @ f for u in range(d)], axis=1)
    return d, m, units, frame


def matrix_unit_residual(units: np.ndarray, p: np.ndarray) -> float:
    """Worst violation of e_uv e_wz = δ_vw e_uz, e_uv* = e_vu and Σ e_uu = p."""
    d = units.shape[0]
    worst = np.linalg.norm(np.einsum("uuij->ij", units) - p)
    worst = max(worst, np.linalg.norm(dagger(units) - units.transpose(1, 0, 2, 3)))
    for u, v in itertools.product(range(d), repeat=2):
        prod = units[u, v][None, None] @ units
        prod[v] -= units[u]
        worst = max(worst, np.linalg.norm(prod.reshape(d * d, -1), axis=1).max())
    return float(worst)


def decompose(rc: ReducedChannel, alg: AlgebraBasis | None = None, tol: ToleranceConfig = DEFAULT_TOL,
              seed=DEFAULT_SEED) -> IdempotentDecomposition:
    if alg is None:
        alg = fixed_point_algebra(rc, tol)
    rng = np.random.default_rng(seed)
    n = alg.ambient_dim
    isos = _central_projections(alg, tol, rng)
    blocks = [_block_units(alg, w, tol, rng) + (w,) for w in isos]
    blocks.sort(key=lambda b: -b[0])  # stable: ties keep spectral order
    frame = np.concatenate([b[3] for b in blocks], axis=1)
    dims = [b[0] for b in blocks]
    mults = [b[1] for b in blocks]
    if sum(d * m for d, m in zip(dims, mults)) != n:
        raise NumericalError("block dimensions do not account for the support")
    if sum(d * d for d in dims) != alg.dim:
        raise NumericalError("block dimensions do not account for the algebra")

    # ρ_k from F̂ applied to a state in block k
    states = []
    off = 0
    for d, m in zip(dims, mults):
        x = np.zeros((n, n), dtype=complex)
        x[off:off + m, off:off + m] = np.eye(m) / m  # |0><0| ⊗ 1/m in block coordinates
        y = dagger(frame) @ rc.reduced(frame @ x @ dagger(frame)) @ frame
        blk = y[off:off + d * m, off:off + d * m].reshape(d, m, d, m)
        rho = np.einsum("ijil->jl", blk)
        states.append((rho + dagger(rho)) / 2)
        off += d * m

    dec = IdempotentDecomposition(
        shape=ShapeVector(dims),
        multiplicities=tuple(mults),
        block_states=tuple(states),
        basis_change=frame,
        central_projections=tuple(b[4] @ dagger(b[4]) for b in blocks),
    )
    res = {
        "unitary": float(np.linalg.norm(dagger(frame) @ frame - np.eye(n))),
        "matrix_units": max(matrix_unit_residual(b[2], b[4] @ dagger(b[4])) for b in blocks),
        "frame_units": max(float(np.linalg.norm(a - b[2])) for a, b in zip(dec.matrix_units, blocks)),
        "reconstruction": float(np.linalg.norm(rebuild_reduced(dec).choi - rc.reduced.choi)),
        "algebra": float(np.linalg.norm(
            np.stack([dec.conditional_expectation(b) - b for b in alg.basis]).reshape(-1))),
        "algebra_closure": alg.closure_residual,
        "idempotence": rc.idempotence_residual,
    }
    for k, rho in enumerate(states):
        w = np.linalg.eigvalsh(rho)
        res[f"state_{k}"] = float(max(-w.min(), abs(w.sum() - 1)))
    object.__setattr__(dec, "residuals", res)
    return dec


def rebuild_reduced(dec: IdempotentDecomposition) -> Channel:
    """Channel x ↦ U(Σ tr_2(P_k U*xU P_k) ⊗ ρ_k)U* from block data."""
    n = dec.dim
    u = dec.basis_change
    ks = []
    for (s, d, m), rho in zip(dec.block_slices(), dec.block_states):
        w, v = eigh_desc(rho)
        for lam, phi in zip(w, v.T):
            if lam <= 1e-15:
                continue
            for a in range(m):
                local = np.zeros((m, m), dtype=complex)
                local[:, a] = np.sqrt(lam) * phi
                k = np.zeros((n, n), dtype=complex)
                k[s, s] = np.kron(np.eye(d), local)
                ks.append(u @ k @ dagger(u))
    return Channel(n, n, tuple(ks))


@dataclass(frozen=True, eq=False)
class Analysis:
    reduced: ReducedChannel
    algebra: AlgebraBasis
    decomposition: IdempotentDecomposition

    @property
    def shape(self) -> ShapeVector:
        return self.decomposition.shape


def analyze(c: Channel, tol: ToleranceConfig = DEFAULT_TOL, seed=DEFAULT_SEED) -> Analysis:
    rc = reduce(c, tol)
    alg = fixed_point_algebra(rc, tol)
    return Analysis(rc, alg, decompose(rc, alg, tol, seed))


def shape_of(c: Channel, tol: ToleranceConfig = DEFAULT_TOL, seed=DEFAULT_SEED) -> ShapeVector:
    return analyze(c, tol, seed).shape


@dataclass(frozen=True, eq=False)
class ConversionChannels:
    e_hat: Channel  # L(H) -> L(H_0), x ↦ V* F(x) V
    d_hat: Channel  # L(H_0) -> L(H), x ↦ V x V*
    e: Channel      # = d_hat
    d: Channel      # = e_hat


def conversion_channels(rc: ReducedChannel) -> ConversionChannels:
    v = rc.isometry
    e_hat = Channel(rc.original.dim_in, v.shape[1], tuple(dagger(v) @ k for k in rc.original.kraus))
    d_hat = isometry_channel(v)
    return ConversionChannels(e_hat, d_hat, d_hat, e_hat)


def conversion_residuals(rc: ReducedChannel) -> tuple[float, float]:
    """Choi residuals of F = D̂ F̂ Ê and F̂ = D F E."""
    cc = conversion_channels(rc)
    r1 = np.linalg.norm(compose(cc.d_hat, compose(rc.reduced, cc.e_hat)).choi - rc.original.choi)
    r2 = np.linalg.norm(compose(cc.d, compose(rc.original, cc.e)).choi - rc.reduced.choi)
    return float(r1), float(r2)


def tensor_decompositions(a: IdempotentDecomposition, b: IdempotentDecomposition) -> IdempotentDecomposition:
    """Block data of F̂_a ⊗ F̂_b built from the factors' block data."""
    nb = b.dim
    entries = []
    for (sa, da, ma), ra in zip(a.block_slices(), a.block_states):
        for (sb, db, mb), rb in zip(b.block_slices(), b.block_states):
            # column (i, j) of U_a ⊗ U_b sits at index i*nb + j
            cols = []
            for u1 in range(da):
                for u2 in range(db):
                    for mu1 in range(ma):
                        for mu2 in range(mb):
                            i = sa.start + u1 * ma + mu1
                            j = sb.start + u2 * mb + mu2
                            cols.append(i * nb + j)
            entries.append((da * db, ma * mb, np.kron(ra, rb), cols))
    entries.sort(key=lambda e: -e[0])
    ub = np.kron(a.basis_change, b.basis_change)
    u = ub[:, [c for e in entries for c in e[3]]]
    return IdempotentDecomposition(
        shape=ShapeVector(e[0] for e in entries),
        multiplicities=tuple(e[1] for e in entries),
        block_states=tuple(e[2] for e in entries),
        basis_change=u,
        central_projections=tuple(ub[:, e[3]] @ dagger(ub[:, e[3]]) for e in entries),
    )


def tensor_power_decomposition(dec: IdempotentDecomposition, k: int) -> IdempotentDecomposition:
    out = dec
    for _ in range(k - 1):
        out = tensor_decompositions(out, dec)
    return out
