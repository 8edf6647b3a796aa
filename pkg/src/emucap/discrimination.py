"""Discrimination witnesses certifying that D ∘ G^⊗n ∘ E stays far from F^⊗k."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .capacity import INF, converse_error_floor, lp_norm
from .channel import Channel, compose, compose_all, random_channel, tensor_power
from .operator_core import DEFAULT_SEED, DEFAULT_TOL, DimensionError, ToleranceConfig, dagger, eigh_desc
from .structure import IdempotentDecomposition, analyze, tensor_power_decomposition


class InvalidWitnessError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WitnessPair:
    mu: np.ndarray
    sigma: np.ndarray
    aux_dim: int

    def check(self, tol: ToleranceConfig = DEFAULT_TOL):
        for name, x in (("mu", self.mu), ("sigma", self.sigma)):
            if np.linalg.norm(x - dagger(x)) > tol.eq_tol:
                raise InvalidWitnessError(f"{name} is not Hermitian")
        w = np.linalg.eigvalsh(self.mu)
        if w.min() < -tol.eq_tol or w.max() > 1 + tol.eq_tol:
            raise InvalidWitnessError(f"mu is not an effect (spectrum in [{w.min():.3e}, {w.max():.3e}])")
        w = np.linalg.eigvalsh(self.sigma)
        if w.min() < -tol.eq_tol:
            raise InvalidWitnessError(f"sigma is not PSD (min eigenvalue {w.min():.3e})")
        if abs(w.sum() - 1) > tol.eq_tol:
            raise InvalidWitnessError(f"sigma has trace {w.sum():.12g}")
        return self

    def lift(self, v_in: np.ndarray | None = None, v_out: np.ndarray | None = None) -> "WitnessPair":
        """Push σ through v_in ⊗ 1 and μ through v_out ⊗ 1."""
        one = np.eye(self.aux_dim)
        sigma = self.sigma if v_in is None else np.kron(v_in, one) @ self.sigma @ dagger(np.kron(v_in, one))
        mu = self.mu if v_out is None else np.kron(v_out, one) @ self.mu @ dagger(np.kron(v_out, one))
        return WitnessPair(mu, sigma, self.aux_dim)


@dataclass(frozen=True, eq=False)
class PinchingFactorization:
    g1: Channel
    pinch: Channel
    g2: Channel

    def composed(self) -> Channel:
        return compose(self.g2, compose(self.pinch, self.g1))


@dataclass(frozen=True)
class ConverseCertificate:
    gap_p1: float
    gap_pinf: float
    theoretical_floor: float
    value_p1: float
    value_pinf: float
    bound_p1: float
    bound_pinf: float
    k: int = 1
    n: int = 1

    @property
    def certified(self) -> float:
        return max(self.gap_p1, self.gap_pinf)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "n": self.n,
            "gap_p1": self.gap_p1, "gap_pinf": self.gap_pinf, "certified": self.certified,
            "theoretical_floor": self.theoretical_floor,
            "value_p1": self.value_p1, "value_pinf": self.value_pinf,
            "bound_p1": self.bound_p1, "bound_pinf": self.bound_pinf,
        }


def witness_value(phi: Channel, w: WitnessPair, tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """tr(μ (Φ ⊗ Id)(σ))."""
    a = w.aux_dim
    if w.sigma.shape != (phi.dim_in * a,) * 2 or w.mu.shape != (phi.dim_out * a,) * 2:
        raise DimensionError(
            f"witness dims {w.sigma.shape[0]}/{w.mu.shape[0]} do not match channel "
            f"{phi.dim_in}->{phi.dim_out} with aux {a}")
    s = w.sigma.reshape(phi.dim_in, a, phi.dim_in, a)
    k = phi.kraus_array
    out = np.einsum("kip,paqb,kjq->iajb", k, s, k.conj(), optimize=True).reshape(phi.dim_out * a, -1)
    return float(np.real(np.einsum("ij,ji->", w.mu, out)))


def holevo_helstrom_gap(phi1: Channel, phi2: Channel, w: WitnessPair,
                        tol: ToleranceConfig = DEFAULT_TOL) -> float:
    if (phi1.dim_in, phi1.dim_out) != (phi2.dim_in, phi2.dim_out):
        raise DimensionError("channels have different dimensions")
    w.check(tol)
    return witness_value(phi1, w, tol) - witness_value(phi2, w, tol)


def witness_p1(dec: IdempotentDecomposition) -> WitnessPair:
    """Maximally correlated state across all blocks, on H_0 ⊗ H_0."""
    n = dec.dim
    l1 = sum(dec.shape)
    u = dec.basis_change
    sigma = np.zeros((n * n, n * n), dtype=complex)
    mu = np.zeros_like(sigma)
    for s, d, m in dec.block_slices():
        for nu in range(d):
            cols = u[:, s.start + nu * m: s.start + (nu + 1) * m]
            a = cols @ dagger(cols)
            aa = np.kron(a, a)
            mu += aa
            sigma += aa / (m * m)
    return WitnessPair(mu, sigma / l1, n)


def witness_pinf(dec: IdempotentDecomposition) -> WitnessPair:
    """Maximal entanglement on the first factor of the largest block.

    σ lives on H_0 ⊗ C^d and μ on (⊕ C^{d_k}) ⊗ C^d, the output space of
    the partial-trace half of the pinching factorization.
    """
    d, m = dec.shape[0], dec.multiplicities[0]
    h1 = sum(dec.shape)
    u = dec.basis_change
    psi = np.zeros(dec.dim * d, dtype=complex)
    chi = np.zeros(h1 * d, dtype=complex)
    for nu in range(d):
        psi += np.kron(u[:, nu * m], np.eye(d)[nu])
        chi += np.kron(np.eye(h1)[nu], np.eye(d)[nu])
    psi /= np.sqrt(d)
    chi /= np.sqrt(d)
    return WitnessPair(np.outer(chi, chi.conj()), np.outer(psi, psi.conj()), d)


def pinching_factorize(dec: IdempotentDecomposition) -> PinchingFactorization:
    n = dec.dim
    h1 = sum(dec.shape)
    u = dec.basis_change
    g1, pinch, g2 = [], [], []
    off1 = 0
    for (s, d, m), rho in zip(dec.block_slices(), dec.block_states):
        rows = dagger(u)[s, :]
        for mu_ in range(m):
            k = np.zeros((h1, n), dtype=complex)
            k[off1:off1 + d] = np.kron(np.eye(d), np.eye(m)[mu_][None, :]) @ rows
            g1.append(k)
        p = np.zeros((h1, h1), dtype=complex)
        p[off1:off1 + d, off1:off1 + d] = np.eye(d)
        pinch.append(p)
        w, v = eigh_desc((rho + dagger(rho)) / 2)
        for lam, phi in zip(w, v.T):
            if lam <= 1e-15:
                continue
            k = np.zeros((n, h1), dtype=complex)
            k[:, off1:off1 + d] = u[:, s] @ np.kron(np.eye(d), np.sqrt(lam) * phi[:, None])
            g2.append(k)
        off1 += d
    return PinchingFactorization(Channel(n, h1, tuple(g1)), Channel(h1, h1, tuple(pinch)),
                                 Channel(h1, n, tuple(g2)))


def random_coding_pair(dim_source: int, dim_target: int, seed=None, n_kraus: int | None = None
                       ) -> tuple[Channel, Channel]:
    """Seeded random encoder L(C^dim_source) → L(C^dim_target) and decoder back."""
    rng = np.random.default_rng(seed)
    e = random_channel(dim_source, dim_target, n_kraus, rng)
    d = random_channel(dim_target, dim_source, n_kraus, rng)
    return e, d


class CertificateContext:
    """Witnesses and reference channels for one (F, G, k, n), reusable across (E, D)."""

    def __init__(self, F: Channel, G: Channel, k: int = 1, n: int = 1,
                 tol: ToleranceConfig = DEFAULT_TOL, seed=DEFAULT_SEED):
        self.k, self.n, self.tol = k, n, tol
        fa = analyze(F, tol, seed)
        ga = analyze(G, tol, seed)
        dec = tensor_power_decomposition(fa.decomposition, k)
        v = fa.reduced.isometry
        vk = v
        for _ in range(k - 1):
            vk = np.kron(vk, v)
        self.fk = tensor_power(F, k, tol)
        self.gn = tensor_power(G, n, tol)
        self.w1 = witness_p1(dec).lift(vk, vk).check(tol)
        # F₁ on the unreduced space: g1 ∘ (x ↦ V* F^⊗k(x) V), so that F₁ ∘ F^⊗k = F₁
        e_hat = Channel(self.fk.dim_in, vk.shape[1], tuple(dagger(vk) @ kr for kr in self.fk.kraus)).compress(tol)
        self.f1 = compose(pinching_factorize(dec).g1, e_hat)
        self.winf = witness_pinf(dec).lift(vk, None).check(tol)
        self.ref_p1 = witness_value(self.fk, self.w1)
        self.ref_pinf = witness_value(compose(self.f1, self.fk), self.winf)
        self.lam_f = dec.shape
        self.lam_g = ga.shape.power(n)

    def certify(self, E: Channel, D: Channel) -> ConverseCertificate:
        fk, gn = self.fk, self.gn
        if (E.dim_in, E.dim_out, D.dim_in, D.dim_out) != (fk.dim_in, gn.dim_in, gn.dim_out, fk.dim_out):
            raise DimensionError("encoder/decoder dimensions do not match F^⊗k and G^⊗n")
        emulated = compose_all(D, gn, E, tol=self.tol)
        val1 = witness_value(emulated, self.w1)
        valinf = witness_value(compose_all(self.f1, emulated, tol=self.tol), self.winf)
        return ConverseCertificate(
            gap_p1=self.ref_p1 - val1, gap_pinf=self.ref_pinf - valinf,
            theoretical_floor=converse_error_floor(self.lam_f, self.lam_g),
            value_p1=val1, value_pinf=valinf,
            bound_p1=lp_norm(self.lam_g, 1) / lp_norm(self.lam_f, 1),
            bound_pinf=lp_norm(self.lam_g, INF) / lp_norm(self.lam_f, INF),
            k=self.k, n=self.n,
        )


def converse_certificate(F: Channel, G: Channel, E: Channel, D: Channel, k: int = 1, n: int = 1,
                         tol: ToleranceConfig = DEFAULT_TOL, seed=DEFAULT_SEED) -> ConverseCertificate:
    return CertificateContext(F, G, k, n, tol, seed).certify(E, D)


@dataclass(frozen=True)
class SweepRecord:
    seed: int
    gap_p1: float
    gap_pinf: float


@dataclass(frozen=True)
class SweepResult:
    records: list = field(default_factory=list)
    theoretical_floor: float = 0.0

    @property
    def worst_certified(self) -> float:
        return min(max(r.gap_p1, r.gap_pinf) for r in self.records)

    def to_csv(self) -> str:
        lines = ["seed,gap_p1,gap_pinf"]
        lines += [f"{r.seed},{r.gap_p1:.12g},{r.gap_pinf:.12g}" for r in self.records]
        return "\n".join(lines) + "\n"


def certificate_sweep(F: Channel, G: Channel, k: int, n: int, seeds,
                      tol: ToleranceConfig = DEFAULT_TOL) -> SweepResult:
    ctx = CertificateContext(F, G, k, n, tol)
    records = []
    for s in seeds:
        e, d = random_coding_pair(ctx.fk.dim_in, ctx.gn.dim_in, seed=s)
        cert = ctx.certify(e, d)
        records.append(SweepRecord(int(s), cert.gap_p1, cert.gap_pinf))
    return SweepResult(records, converse_error_floor(ctx.lam_f, ctx.lam_g))
