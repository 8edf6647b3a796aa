"""Audits of approximate multiplicativity for almost-exact emulations.

Heisenberg-picture maps are handled as :class:`HeisenbergMap`, a Kraus list
acting by x ↦ Σ A* x A. This covers both unital adjoints of channels and the
subunital compressions x ↦ e G*(D*(x)) e.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import Channel, compose, tensor_power
from .operator_core import (
    DEFAULT_SEED,
    DEFAULT_TOL,
    DimensionError,
    NumericalError,
    ToleranceConfig,
    dagger,
    op_norm,
    support_of,
    trace_norm,
)

DEFAULT_DELTA_MAX = 0.05
DELTA_MAX_WARNING = "delta_max is a configuration value; no numeric constant is known for it"


@dataclass(frozen=True, eq=False)
class HeisenbergMap:
    """x ↦ Σ A_i* x A_i from L(C^dim_out) to L(C^dim_in)."""

    ops: np.ndarray  # (r, dim_out, dim_in)

    def __post_init__(self):
        object.__setattr__(self, "ops", np.asarray(self.ops, dtype=complex).reshape(-1, *np.shape(self.ops)[-2:]))

    @classmethod
    def adjoint_of(cls, c: Channel) -> "HeisenbergMap":
        return cls(c.kraus_array)

    @property
    def dim_in(self) -> int:
        return self.ops.shape[2]

    @property
    def dim_out(self) -> int:
        return self.ops.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if x.shape != (self.dim_out, self.dim_out):
            raise DimensionError(f"expected a {self.dim_out}x{self.dim_out} operator, got {x.shape}")
        return (self.ops.conj().transpose(0, 2, 1) @ x @ self.ops).sum(axis=0)

    def unit_image(self) -> np.ndarray:
        return np.einsum("aji,ajl->il", self.ops.conj(), self.ops)

    def unitality_residual(self) -> float:
        return op_norm(self.unit_image() - np.eye(self.dim_in))


def _as_heisenberg(phi) -> HeisenbergMap:
    return phi if isinstance(phi, HeisenbergMap) else HeisenbergMap.adjoint_of(phi)


@dataclass(frozen=True)
class KSDefect:
    right_defect: float
    left_defect: float
    norm_x: float
    min_eigenvalue: float


def ks_defect(phi, x, tol: ToleranceConfig = DEFAULT_TOL, require_unital: bool = True) -> KSDefect:
    """Kadison-Schwarz defects of Φ* at x; ``phi`` is a channel (its adjoint is used) or a HeisenbergMap."""
    h = _as_heisenberg(phi)
    if require_unital and h.unitality_residual() > tol.eq_tol:
        raise ValueError(f"map is not unital (residual {h.unitality_residual():.3e})")
    x = np.asarray(x, dtype=complex)
    xs = dagger(x)
    right = h(xs @ x) - h(xs) @ h(x)
    left = h(x @ xs) - h(x) @ h(xs)
    herm = (right + dagger(right)) / 2
    min_eig = float(min(np.linalg.eigvalsh(herm).min(), np.linalg.eigvalsh((left + dagger(left)) / 2).min()))
    scale = max(1.0, op_norm(x) ** 2)
    if min_eig < -tol.eq_tol * scale:
        raise NumericalError(f"Kadison-Schwarz difference not PSD (min eigenvalue {min_eig:.3e})")
    return KSDefect(op_norm(right), op_norm(left), op_norm(x), min_eig)


def approx_mult_domain_check(phi, x, y, delta: float, tol: ToleranceConfig = DEFAULT_TOL,
                             require_unital: bool = True) -> tuple[bool, float]:
    """Check ‖Φ*(xy) − Φ*(x)Φ*(y)‖ ≤ 2δ‖x‖‖y‖ for x ∈ C_δ^L and y ∈ C_δ^R."""
    h = _as_heisenberg(phi)
    kx = ks_defect(h, x, tol, require_unital)
    ky = ks_defect(h, y, tol, require_unital)
    slack = tol.eq_tol
    if kx.left_defect > delta * kx.norm_x**2 + slack:
        raise ValueError(f"x is not in the left δ-domain (left defect {kx.left_defect:.3e} > δ‖x‖²)")
    if ky.right_defect > delta * ky.norm_x**2 + slack:
        raise ValueError(f"y is not in the right δ-domain (right defect {ky.right_defect:.3e} > δ‖y‖²)")
    x, y = np.asarray(x, dtype=complex), np.asarray(y, dtype=complex)
    observed = op_norm(h(x @ y) - h(x) @ h(y))
    return observed <= 2 * delta * kx.norm_x * ky.norm_x + slack, observed


def measured_delta(phi, x, y) -> float:
    """Smallest δ with x ∈ C_δ^L and y ∈ C_δ^R."""
    h = _as_heisenberg(phi)
    kx = ks_defect(h, x, require_unital=False)
    ky = ks_defect(h, y, require_unital=False)
    dx = kx.left_defect / kx.norm_x**2 if kx.norm_x else 0.0
    dy = ky.right_defect / ky.norm_x**2 if ky.norm_x else 0.0
    return max(dx, dy)


def compressed_decoder_adjoint(G: Channel, E: Channel, D: Channel, tol: ToleranceConfig = DEFAULT_TOL
                               ) -> tuple[HeisenbergMap, np.ndarray, float]:
    """(x ↦ e G*(D*(x)) e, e, λ_min) with e the support projector of G(E(1))."""
    ge1 = G(E(np.eye(E.dim_in)))
    sup = support_of(ge1, tol)
    if sup.rank == 0:
        raise NumericalError("G∘E(1) vanishes")
    lam_min = float(sup.eigenvalues[sup.rank - 1])
    if lam_min < tol.rank_tol:
        raise NumericalError(f"λ_min = {lam_min:.3e} is below rank_tol")
    e = sup.projector
    ops = np.einsum("aij,bjk,kl->abil", D.kraus_array, G.kraus_array, e).reshape(-1, D.dim_out, G.dim_in)
    return HeisenbergMap(ops), e, lam_min


def _range_basis(F: Channel, tol: ToleranceConfig) -> np.ndarray:
    """Orthonormal basis of Rg(F*) from the SVD of its superoperator."""
    s_adj = dagger(F.superop)
    u, sv, _ = np.linalg.svd(s_adj)
    r = int((sv > tol.rank_tol * sv[0]).sum())
    return u[:, :r].T.reshape(r, F.dim_in, F.dim_in)


@dataclass(frozen=True)
class InclusionReport:
    delta_cb: float
    norm_preservation_worst: float
    norm_excess_worst: float
    unitality_residual: float
    multiplicativity_worst: float
    lambda_min: float
    dim_source: int
    theoretical_mult_bound: float
    sample_count: int
    seed: int
    checks: dict = field(default_factory=dict)
    warning: str = DELTA_MAX_WARNING

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "delta_cb", "norm_preservation_worst", "norm_excess_worst", "unitality_residual",
            "multiplicativity_worst", "lambda_min", "dim_source", "theoretical_mult_bound",
            "sample_count", "seed", "warning")}
        out["checks"] = dict(self.checks)
        out["passed"] = self.passed
        return out


def _samples(basis: np.ndarray, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    out = []
    for i in range(count):
        if i % 2 == 0:
            x = basis[(i // 2) % basis.shape[0]]
        else:
            c = rng.standard_normal(basis.shape[0]) + 1j * rng.standard_normal(basis.shape[0])
            x = np.einsum("b,bij->ij", c, basis)
        out.append(x / op_norm(x))
    return out


def delta_inclusion_report(F: Channel, G: Channel, E: Channel, D: Channel, sample_count: int = 100,
                           seed=DEFAULT_SEED, tol: ToleranceConfig = DEFAULT_TOL) -> InclusionReport:
    """Measure how far x ↦ e G*(D*(x)) e is from a unital *-homomorphism on Rg(F*)."""
    if (E.dim_in, E.dim_out, D.dim_in, D.dim_out) != (F.dim_in, G.dim_in, G.dim_out, F.dim_out):
        raise DimensionError("encoder/decoder dimensions do not match F and G")
    emulated = compose(D, compose(G, E))
    delta = trace_norm(F.choi - emulated.choi)
    psi, e, lam_min = compressed_decoder_adjoint(G, E, D, tol)
    d = F.dim_in
    rng = np.random.default_rng(seed)
    xs = _samples(_range_basis(F, tol), sample_count, rng)

    imgs = [psi(x) for x in xs]
    shortfall = max(1.0 - op_norm(px) for px in imgs)
    excess = max(op_norm(px) - 1.0 for px in imgs)
    mult = 0.0
    for i, x in enumerate(xs):
        j = (i + 1) % len(xs)
        mult = max(mult, op_norm(psi(x @ xs[j]) - imgs[i] @ imgs[j]))
    unit = op_norm(psi(np.eye(d)) - e)
    bound = 6 * delta * d / lam_min
    checks = {
        "unitality": unit <= tol.eq_tol,
        "norm_lower": shortfall <= delta + tol.eq_tol,
        "norm_upper": excess <= tol.eq_tol,
        "multiplicativity": mult <= bound + tol.eq_tol,
    }
    return InclusionReport(delta, shortfall, excess, unit, mult, lam_min, d, bound, sample_count,
                           int(seed), checks)


def expansion_check(phi: Channel, x, tol: ToleranceConfig = DEFAULT_TOL) -> tuple[bool, float, float]:
    """(λ_min/d)‖e x e‖ ≤ ‖Φ*(x)‖ for PSD x, with e the support projector of Φ(1).

    Returns (holds, left side, right side).
    """
    x = np.asarray(x, dtype=complex)
    if np.linalg.norm(x - dagger(x)) > tol.eq_tol or np.linalg.eigvalsh((x + dagger(x)) / 2).min() < -tol.eq_tol:
        raise ValueError("expansion_check needs a PSD operator")
    sup = support_of(phi(np.eye(phi.dim_in)), tol)
    lam_min = float(sup.eigenvalues[sup.rank - 1])
    e = sup.projector
    lhs = lam_min / phi.dim_in * op_norm(e @ x @ e)
    rhs = op_norm(phi.adjoint(x))
    return lhs <= rhs + tol.eq_tol, lhs, rhs


def support_compression_residual(phi: Channel, x, tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """‖Φ*(x) − Φ*(e x e)‖ with e the support projector of Φ(1)."""
    e = support_of(phi(np.eye(phi.dim_in)), tol).projector
    x = np.asarray(x, dtype=complex)
    return op_norm(phi.adjoint(x) - phi.adjoint(e @ x @ e))


@dataclass(frozen=True)
class ErrorThreshold:
    delta_max: float
    d: int
    k: int
    n: int
    lambda_min_n: float
    threshold: float
    warning: str = DELTA_MAX_WARNING


def threshold_value(delta_max: float, lambda_min: float, d: int, k: int) -> float:
    return delta_max * lambda_min / (6 * d**k)


def error_threshold(f_dim: int, k: int, n: int, G: Channel, E: Channel,
                    delta_max: float = DEFAULT_DELTA_MAX, tol: ToleranceConfig = DEFAULT_TOL) -> ErrorThreshold:
    """Diamond-distance level below which the one-shot inclusion argument applies."""
    if delta_max <= 0:
        raise ValueError("delta_max must be positive")
    gn = tensor_power(G, n, tol)
    if E.dim_in != f_dim**k or E.dim_out != gn.dim_in:
        raise DimensionError("encoder dimensions do not match F^⊗k and G^⊗n")
    sup = support_of(gn(E(np.eye(E.dim_in))), tol)
    if sup.rank == 0:
        raise NumericalError("G^⊗n∘E(1) vanishes")
    lam = float(sup.eigenvalues[sup.rank - 1])
    if lam < tol.rank_tol:
        raise NumericalError("λ_min vanishes")
    return ErrorThreshold(delta_max, f_dim, k, n, lam, threshold_value(delta_max, lam, f_dim, k))


def multiplicative_domain_diagnostic(F: Channel, G: Channel, E: Channel, D: Channel,
                                     tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """Worst ‖Ψ(b_i b_j) − Ψ(b_i)Ψ(b_j)‖ over basis pairs of Rg(F*), Ψ = e G* D* e."""
    psi, _, _ = compressed_decoder_adjoint(G, E, D, tol)
    basis = _range_basis(F, tol)
    imgs = [psi(b) for b in basis]
    worst = 0.0
    for i, bi in enumerate(basis):
        for j, bj in enumerate(basis):
            worst = max(worst, op_norm(psi(bi @ bj) - imgs[i] @ imgs[j]))
    return worst


def perturb_channel(c: Channel, eta: float, seed=DEFAULT_SEED) -> Channel:
    """Add η-sized Gaussian noise to each Kraus operator and restore trace preservation.

    K_i ↦ (K_i + η N_i) S^{-1/2} with S = Σ (K_i + η N_i)*(K_i + η N_i).
    """
    rng = np.random.default_rng(seed)
    ks = c.kraus_array
    noise = rng.standard_normal(ks.shape) + 1j * rng.standard_normal(ks.shape)
    noise /= np.sqrt(2 * c.dim_in)
    pk = ks + eta * noise
    s = np.einsum("aji,ajl->il", pk.conj(), pk)
    w, v = np.linalg.eigh((s + dagger(s)) / 2)
    s_inv_half = (v / np.sqrt(w)) @ dagger(v)
    return Channel(c.dim_in, c.dim_out, tuple(k @ s_inv_half for k in pk))
