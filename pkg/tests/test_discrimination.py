import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emucap.capacity import converse_error_floor
from emucap.channel import (
    BlockSpec,
    channels_equal,
    compose,
    dephasing,
    identity,
    make_block_idempotent,
    random_channel,
)
from emucap.discrimination import (
    CertificateContext,
    InvalidWitnessError,
    WitnessPair,
    certificate_sweep,
    converse_certificate,
    holevo_helstrom_gap,
    pinching_factorize,
    random_coding_pair,
    witness_p1,
    witness_pinf,
    witness_value,
)
from emucap.emulation import synthesize_emulation
from emucap.operator_core import DimensionError, max_entangled, random_density
from emucap.structure import analyze, rebuild_reduced

FIXTURES = {
    "identity-3": lambda: identity(3),
    "dephasing-3": lambda: dephasing(3),
    "tie-(3,3)": lambda: make_block_idempotent(BlockSpec(((3, 1), (3, 1))), seed=1),
    "(5,3)": lambda: make_block_idempotent(BlockSpec(((5, 1), (3, 1))), seed=2),
    "(2,1) mult": lambda: make_block_idempotent(
        BlockSpec(((2, 2, random_density(2, np.random.default_rng(3))), (1, 3))), seed=3),
    "(2,1) ambient": lambda: make_block_idempotent(BlockSpec(((2, 1), (1, 1)), ambient_dim=5), seed=4),
}


def _value_by_loops(phi, w):
    # (Φ ⊗ Id)(σ) via explicit K ⊗ 1
    one = np.eye(w.aux_dim)
    out = sum(np.kron(k, one) @ w.sigma @ np.kron(k, one).conj().T for k in phi.kraus)
    return float(np.real(np.trace(w.mu @ out)))


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_witnesses_score_one_on_own_channel(name):
    dec = analyze(FIXTURES[name]()).decomposition
    own = rebuild_reduced(dec)
    w1 = witness_p1(dec).check()
    assert witness_value(own, w1) == pytest.approx(1, abs=1e-9)
    fac = pinching_factorize(dec)
    winf = witness_pinf(dec).check()
    assert witness_value(compose(fac.g1, own), winf) == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_lifted_references_are_one(name):
    ctx = CertificateContext(FIXTURES[name](), identity(2))
    assert ctx.ref_p1 == pytest.approx(1, abs=1e-9)
    assert ctx.ref_pinf == pytest.approx(1, abs=1e-9)


def test_witness_value_matches_loop_oracle(rng):
    dec = analyze(FIXTURES["(2,1) mult"]()).decomposition
    for w in (witness_p1(dec), witness_pinf(dec)):
        phi = random_channel(dec.dim, w.mu.shape[0] // w.aux_dim, seed=5)
        assert witness_value(phi, w) == pytest.approx(_value_by_loops(phi, w), abs=1e-12)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_pinching_factorization_rebuilds_channel(name):
    dec = analyze(FIXTURES[name]()).decomposition
    fac = pinching_factorize(dec)
    for c in (fac.g1, fac.pinch, fac.g2):
        assert c.tp_residual() < 1e-9
    assert channels_equal(fac.composed(), rebuild_reduced(dec))[0]


def test_gap_identity_vs_dephasing():
    w = WitnessPair(max_entangled(2), max_entangled(2), 2)
    assert holevo_helstrom_gap(identity(2), dephasing(2), w) == pytest.approx(0.5)
    w = WitnessPair(np.eye(4), max_entangled(2), 2)
    assert holevo_helstrom_gap(identity(2), dephasing(2), w) == pytest.approx(0)


def test_invalid_witnesses_rejected():
    rho = max_entangled(2)
    with pytest.raises(InvalidWitnessError, match="effect"):
        WitnessPair(2 * np.eye(4), rho, 2).check()
    with pytest.raises(InvalidWitnessError, match="trace"):
        WitnessPair(np.eye(4), 2 * rho, 2).check()
    with pytest.raises(InvalidWitnessError, match="Hermitian"):
        WitnessPair(np.triu(np.ones((4, 4))), rho, 2).check()
    with pytest.raises(InvalidWitnessError, match="PSD"):
        WitnessPair(np.eye(4), np.diag([1.5, -0.5, 0, 0]), 2).check()
    with pytest.raises(DimensionError):
        witness_value(identity(3), WitnessPair(np.eye(4), rho, 2))


def test_exact_kits_have_zero_gap():
    g = make_block_idempotent(BlockSpec(((2, 1), (1, 1))))
    kit = synthesize_emulation(identity(2), g)
    cert = converse_certificate(identity(2), g, kit.encoder, kit.decoder)
    assert abs(cert.gap_p1) <= 1e-6 and abs(cert.gap_pinf) <= 1e-6
    kit = synthesize_emulation(dephasing(4), identity(2), 1, 2)
    cert = converse_certificate(dephasing(4), identity(2), kit.encoder, kit.decoder, 1, 2)
    assert abs(cert.gap_p1) <= 1e-6 and abs(cert.gap_pinf) <= 1e-6


def test_sweep_gaps_above_floor():
    res = certificate_sweep(identity(2), dephasing(2), 1, 1, range(20))
    assert res.theoretical_floor == pytest.approx(0.5)
    assert min(r.gap_pinf for r in res.records) >= 0.5 - 1e-6
    res = certificate_sweep(identity(2), dephasing(2), 2, 1, range(10))
    assert res.theoretical_floor == pytest.approx(0.75)
    assert res.worst_certified >= 0.75 - 1e-6
    assert res.to_csv().startswith("seed,gap_p1,gap_pinf\n")


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15)
def test_certified_gap_dominates_floor(seed):
    # holds for any (E, D), not just the sweep seeds
    f = make_block_idempotent(BlockSpec(((2, 1), (1, 1))), seed=6)
    g = dephasing(2)
    e, d = random_coding_pair(3, 2, seed=seed)
    cert = converse_certificate(f, g, e, d)
    assert cert.certified >= cert.theoretical_floor - 1e-6
    assert cert.theoretical_floor == pytest.approx(converse_error_floor((2, 1), (1, 1)))


def test_certificate_checks_dimensions():
    with pytest.raises(DimensionError):
        converse_certificate(identity(2), dephasing(2), identity(3), identity(2))
