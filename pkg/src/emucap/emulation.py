"""Exact emulation F^⊗k = D ∘ G^⊗n ∘ E from block embeddings.

The encoder and decoder are built in the Heisenberg picture from a subunital
*-homomorphism between fixed-point algebras and its unital lift, then turned
into Kraus channels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import Channel, channel_from_heisenberg, tensor_power
from .operator_core import DEFAULT_SEED, DEFAULT_TOL, BudgetError, DimensionError, ToleranceConfig, dagger
from .structure import (
    IdempotentDecomposition,
    ShapeVector,
    analyze,
    tensor_power_decomposition,
)

DEFAULT_BUDGET = 64


@dataclass(frozen=True, eq=False)
class EmbeddingPlan:
    source_dims: tuple
    target_dims: tuple
    multiplicity: np.ndarray  # rows: target blocks, columns: source blocks

    def __post_init__(self):
        n = np.asarray(self.multiplicity, dtype=int).reshape(len(self.target_dims), len(self.source_dims))
        object.__setattr__(self, "multiplicity", n)
        object.__setattr__(self, "source_dims", tuple(int(d) for d in self.source_dims))
        object.__setattr__(self, "target_dims", tuple(int(d) for d in self.target_dims))

    def violations(self) -> list[str]:
        out = []
        n, d, big_d = self.multiplicity, np.array(self.source_dims), np.array(self.target_dims)
        if (n < 0).any():
            out.append("negative multiplicity")
        for j, used in enumerate(n @ d):
            if used > big_d[j]:
                out.append(f"target block {j} overfull ({used} > {big_d[j]})")
        for i, cover in enumerate(n.sum(axis=0)):
            if cover < 1:
                out.append(f"source block {i} not embedded")
        return out

    @property
    def valid(self) -> bool:
        return not self.violations()

    def to_csv(self) -> str:
        return "\n".join(",".join(str(int(v)) for v in row) for row in self.multiplicity) + "\n"


def embedding_feasible(source_dims, target_dims) -> EmbeddingPlan | None:
    """Backtracking search for a subunital injective multiplicity matrix.

    One copy of each source block suffices, so this is bin packing of the
    source dims into target capacities.
    """
    src = [int(d) for d in source_dims]
    tgt = [int(d) for d in target_dims]
    if not src or min(src) < 1 or (tgt and min(tgt) < 1):
        raise ValueError("dimensions must be positive integers")
    order_src = sorted(range(len(src)), key=lambda i: -src[i])
    order_tgt = sorted(range(len(tgt)), key=lambda j: -tgt[j])
    slack = list(tgt)
    choice = [-1] * len(src)
    suffix = [0] * (len(src) + 1)
    for pos in range(len(src) - 1, -1, -1):
        suffix[pos] = suffix[pos + 1] + src[order_src[pos]]

    def place(pos: int) -> bool:
        if pos == len(src):
            return True
        if sum(slack) < suffix[pos]:
            return False
        i = order_src[pos]
        tried = set()
        for j in order_tgt:
            if slack[j] < src[i] or slack[j] in tried:
                continue
            tried.add(slack[j])
            slack[j] -= src[i]
            choice[i] = j
            if place(pos + 1):
                return True
            slack[j] += src[i]
        return False

    if not place(0):
        return None
    n = np.zeros((len(tgt), len(src)), dtype=int)
    for i, j in enumerate(choice):
        n[j, i] = 1
    return EmbeddingPlan(tuple(src), tuple(tgt), n)


@dataclass(frozen=True, eq=False)
class Embedding:
    """ι: Rg(F̂*) → Rg(Ĝ*) laid out by an EmbeddingPlan."""

    plan: EmbeddingPlan
    source: IdempotentDecomposition
    target: IdempotentDecomposition
    slots: tuple = field(repr=False)  # per target block: list of (source block, offset)

    @property
    def isometries(self) -> list[np.ndarray]:
        """W_j: C^{Σ_i N_ji d_i} → C^{D_j}, filling from coordinate 0."""
        out = []
        for big_d, slots in zip(self.plan.target_dims, self.slots):
            used = sum(self.plan.source_dims[i] for i, _ in slots)
            out.append(np.eye(big_d, used, dtype=complex))
        return out

    def from_parts(self, parts) -> np.ndarray:
        blocks = []
        for big_d, slots in zip(self.plan.target_dims, self.slots):
            x = np.zeros((big_d, big_d), dtype=complex)
            for i, off in slots:
                d = self.plan.source_dims[i]
                x[off:off + d, off:off + d] = parts[i]
            blocks.append(x)
        return self.target.embed(blocks)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.from_parts(self.source.compress(x))

    @property
    def unit_image(self) -> np.ndarray:
        return self.from_parts([np.eye(d) for d in self.plan.source_dims])

    def pull_back(self, y: np.ndarray) -> np.ndarray:
        """ι̂⁻¹ ∘ E_{ι̂(A)} applied to y restricted to supp ι(1)."""
        mults = self.target.multiplicities
        parts = [np.zeros((d, d), dtype=complex) for d in self.plan.source_dims]
        weight = [0] * len(parts)
        for yj, slots, m in zip(self.target.compress(y), self.slots, mults):
            for i, off in slots:
                d = self.plan.source_dims[i]
                parts[i] += m * yj[off:off + d, off:off + d]
                weight[i] += m
        return self.source.embed([p / w for p, w in zip(parts, weight)])


def build_embedding(plan: EmbeddingPlan, target: IdempotentDecomposition,
                    source: IdempotentDecomposition) -> Embedding:
    if not plan.valid:
        raise ValueError("; ".join(plan.violations()))
    if tuple(target.shape) != plan.target_dims or tuple(source.shape) != plan.source_dims:
        raise DimensionError("plan dimensions do not match the decompositions")
    slots = []
    for j in range(len(plan.target_dims)):
        off, row = 0, []
        for i, d in enumerate(plan.source_dims):
            for _ in range(plan.multiplicity[j, i]):
                row.append((i, off))
                off += d
        slots.append(tuple(row))
    return Embedding(plan, source, target, tuple(slots))


def tracial_conditional_expectation(dec: IdempotentDecomposition, ambient_dim: int | None = None
                                    ) -> Callable[[np.ndarray], np.ndarray]:
    """x ↦ Σ_k tr_{k,2}(P_k x P_k) ⊗ 1_{m_k}/m_k."""
    if ambient_dim is not None and ambient_dim != dec.dim:
        raise DimensionError(f"algebra unit has dimension {dec.dim}, ambient is {ambient_dim}")
    return dec.conditional_expectation


def lift_homomorphism(iota: Embedding) -> tuple[Callable, Callable]:
    """Unital CP maps ι̃ and ι̃⁻¹ with ι̃⁻¹ ∘ ι̃ = id on the source algebra."""
    p = iota.unit_image
    if np.linalg.norm(p @ p - p) > 1e-8:
        raise ValueError("ι(1) is not a projector")
    comp = np.eye(p.shape[0]) - p
    dim_a = iota.source.dim

    def lift(x):
        return iota(x) + (np.trace(x) / dim_a) * comp

    return lift, iota.pull_back


@dataclass(frozen=True, eq=False)
class EmulationKit:
    plan: EmbeddingPlan
    iota: Embedding
    encoder: Channel
    decoder: Channel
    residual: float
    k: int = 1
    n: int = 1
    reduced_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "k": self.k, "n": self.n,
            "source_dims": list(self.plan.source_dims),
            "target_dims": list(self.plan.target_dims),
            "multiplicity": self.plan.multiplicity.tolist(),
            "residual": self.residual,
            "reduced_residual": self.reduced_residual,
            "encoder_kraus": self.encoder.n_kraus,
            "decoder_kraus": self.decoder.n_kraus,
        }


def _power_isometry(v: np.ndarray, k: int) -> np.ndarray:
    out = v
    for _ in range(k - 1):
        out = np.kron(out, v)
    return out


def _heisenberg_matrix(fn, dim: int) -> np.ndarray:
    """Matrix of a linear map out of L(C^dim) in the row-major vec basis."""
    cols = []
    unit = np.zeros((dim, dim), dtype=complex)
    for i in range(dim * dim):
        unit.flat[i] = 1
        cols.append(np.asarray(fn(unit)).ravel())
        unit.flat[i] = 0
    return np.stack(cols, axis=1)


def _check_budget(c: Channel, k: int, budget: int, label: str):
    if k < 1:
        raise ValueError(f"{label} blocklength must be >= 1")
    if c.dim_in ** k > budget:
        raise BudgetError(f"{label}: dimension {c.dim_in}^{k} exceeds budget {budget}")


def verify_emulation(F: Channel, G: Channel, k: int, n: int, E: Channel, D: Channel,
                     tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """Choi Frobenius distance between F^⊗k and D ∘ G^⊗n ∘ E."""
    fk = tensor_power(F, k, tol)
    gn = tensor_power(G, n, tol)
    if (E.dim_in, E.dim_out, D.dim_in, D.dim_out) != (fk.dim_in, gn.dim_in, gn.dim_out, fk.dim_out):
        raise DimensionError("encoder/decoder dimensions do not match F^⊗k and G^⊗n")
    s = D.superop @ gn.superop @ E.superop
    return float(np.linalg.norm(s - fk.superop))


def synthesize_emulation(F: Channel, G: Channel, k: int = 1, n: int = 1,
                         tol: ToleranceConfig = DEFAULT_TOL, budget: int = DEFAULT_BUDGET,
                         seed=DEFAULT_SEED) -> EmulationKit | None:
    _check_budget(F, k, budget, "source")
    _check_budget(G, n, budget, "target")
    fa = analyze(F, tol, seed)
    ga = analyze(G, tol, seed)
    src = tensor_power_decomposition(fa.decomposition, k)
    tgt = tensor_power_decomposition(ga.decomposition, n)
    plan = embedding_feasible(src.shape, tgt.shape)
    if plan is None:
        return None
    iota = build_embedding(plan, tgt, src)
    lift, lift_inv = lift_homomorphism(iota)

    f_red = tensor_power(fa.reduced.reduced, k, tol)
    g_red = tensor_power(ga.reduced.reduced, n, tol)
    nf, ng = f_red.dim_in, g_red.dim_in

    def enc_adj(y):
        return lift_inv(y)

    def dec_adj(y):
        return lift(f_red.adjoint(y))

    # F̂*^{⊗k} = E* G*^{⊗n} D* on the reduced spaces, checked on Heisenberg matrices
    m_enc = _heisenberg_matrix(enc_adj, ng)
    m_dec = _heisenberg_matrix(dec_adj, nf)
    reduced_res = float(np.linalg.norm(
        m_enc @ _heisenberg_matrix(g_red.adjoint, ng) @ m_dec - _heisenberg_matrix(f_red.adjoint, nf)))

    # transport across x ↦ V* Φ(x) V and x ↦ V x V*, directly in the Heisenberg picture
    fk = tensor_power(F, k, tol)
    gn = tensor_power(G, n, tol)
    vf = _power_isometry(fa.reduced.isometry, k)
    vg = _power_isometry(ga.reduced.isometry, n)
    encoder = channel_from_heisenberg(
        lambda y: fk.adjoint(vf @ enc_adj(dagger(vg) @ y @ vg) @ dagger(vf)), fk.dim_in, gn.dim_in, tol)
    decoder = channel_from_heisenberg(
        lambda y: gn.adjoint(vg @ dec_adj(dagger(vf) @ y @ vf) @ dagger(vg)), gn.dim_out, fk.dim_out, tol)
    residual = float(np.linalg.norm(decoder.superop @ gn.superop @ encoder.superop - fk.superop))
    return EmulationKit(plan, iota, encoder, decoder, residual, k, n, reduced_res)


def search_blocklength(F: Channel, G: Channel, k: int = 1, n: int = 1, max_m: int = 4,
                       tol: ToleranceConfig = DEFAULT_TOL, budget: int = DEFAULT_BUDGET,
                       seed=DEFAULT_SEED) -> EmulationKit | None:
    """First successful synthesis at (k m, n m) for m = 1..max_m; stops at the budget."""
    for m in range(1, max_m + 1):
        if F.dim_in ** (k * m) > budget or G.dim_in ** (n * m) > budget:
            return None
        kit = synthesize_emulation(F, G, k * m, n * m, tol, budget, seed)
        if kit is not None:
            return kit
    return None


def shapes_feasible(lamF, lamG, k: int, n: int) -> EmbeddingPlan | None:
    """Feasibility at (k, n) from shapes alone."""
    return embedding_feasible(ShapeVector(lamF).power(k), ShapeVector(lamG).power(n))

