import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emucap.capacity import INF, lp_norm
from emucap.channel import BlockSpec, dephasing, identity, make_block_idempotent, random_channel
from emucap.emulation import (
    EmbeddingPlan,
    build_embedding,
    embedding_feasible,
    lift_homomorphism,
    search_blocklength,
    shapes_feasible,
    synthesize_emulation,
    tracial_conditional_expectation,
    verify_emulation,
)
from emucap.operator_core import BudgetError, DimensionError, dagger
from emucap.structure import ShapeVector, analyze
from oracles import feasible_exhaustive

dims = st.lists(st.integers(1, 4), min_size=1, max_size=3)


def _dec(shape, mults=None, ambient=None):
    mults = mults or [1] * len(shape)
    spec = BlockSpec(tuple((d, m) for d, m in zip(shape, mults)), ambient_dim=ambient)
    return analyze(make_block_idempotent(spec, seed=4)).decomposition


def _algebra_element(dec, rng):
    parts = [rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for d in dec.shape]
    return dec.embed(parts)


def test_feasibility_examples():
    plan = embedding_feasible((2,), (2, 1))
    assert plan is not None and plan.multiplicity.tolist() == [[1], [0]]
    assert embedding_feasible((2, 2), (3,)) is None
    assert embedding_feasible((3,), (2, 2)) is None


def _partitions(total, largest=None):
    largest = largest or total
    if total == 0:
        yield ()
        return
    for first in range(min(total, largest), 0, -1):
        for rest in _partitions(total - first, first):
            yield (first,) + rest


def test_feasibility_agrees_with_exhaustive_small():
    count = 0
    for a in range(1, 7):
        for b in range(1, 8 - a):
            for src in _partitions(a):
                for tgt in _partitions(b):
                    plan = embedding_feasible(src, tgt)
                    assert (plan is not None) == feasible_exhaustive(src, tgt), (src, tgt)
                    if plan is not None:
                        assert plan.valid
                    count += 1
    assert count > 100


@given(dims, dims)
def test_feasibility_plan_is_valid_or_none(src, tgt):
    plan = embedding_feasible(src, tgt)
    assert (plan is not None) == feasible_exhaustive(src, tgt)
    if plan is not None:
        assert plan.violations() == []


def test_plan_violations_are_named():
    plan = EmbeddingPlan((2, 1), (2,), [[1, 1]])
    assert any("overfull" in v for v in plan.violations())
    plan = EmbeddingPlan((2, 1), (3,), [[1, 0]])
    assert any("not embedded" in v for v in plan.violations())
    assert EmbeddingPlan((2,), (2, 1), [[1], [0]]).to_csv() == "1\n0\n"


def test_embedding_into_larger_block_is_multiplicative(rng):
    src, tgt = _dec((2,)), _dec((2, 1))
    iota = build_embedding(embedding_feasible((2,), (2, 1)), tgt, src)
    for _ in range(5):
        x, y = _algebra_element(src, rng), _algebra_element(src, rng)
        assert np.allclose(iota(x @ y), iota(x) @ iota(y))
        assert np.allclose(iota(dagger(x)), dagger(iota(x)))


def test_strictly_subunital_embedding():
    src, tgt = _dec((2,)), _dec((3,))
    iota = build_embedding(embedding_feasible((2,), (3,)), tgt, src)
    p = iota.unit_image
    assert np.allclose(p @ p, p)
    assert np.isclose(np.trace(p).real, 2)


def test_identity_plan_is_identity(rng):
    dec = _dec((2, 1))
    iota = build_embedding(embedding_feasible((2, 1), (2, 1)), dec, dec)
    x = _algebra_element(dec, rng)
    assert np.allclose(iota(x), x)


def test_build_embedding_checks_plan():
    with pytest.raises(ValueError):
        build_embedding(EmbeddingPlan((2, 1), (2,), [[1, 1]]), _dec((2,)), _dec((2, 1)))
    with pytest.raises(DimensionError):
        build_embedding(EmbeddingPlan((2,), (3,), [[1]]), _dec((2, 1)), _dec((2,)))


def test_tracial_conditional_expectation_examples(rng):
    x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    full = tracial_conditional_expectation(_dec((4,)))
    assert np.allclose(full(x), x)
    diag = tracial_conditional_expectation(_dec((1, 1)))
    assert np.allclose(diag(x[:2, :2]), np.diag(np.diag(x[:2, :2])))
    dec = _dec((2,), [2])
    ce = tracial_conditional_expectation(dec, 4)
    y = ce(x)
    assert np.allclose(ce(y), y)
    # in the block frame the image is a ⊗ 1_2 / 2-normalized partial trace
    u = dec.basis_change
    blk = (dagger(u) @ x @ u).reshape(2, 2, 2, 2)
    a = np.einsum("ijkj->ik", blk) / 2
    assert np.allclose(dagger(u) @ y @ u, np.kron(a, np.eye(2)))
    with pytest.raises(DimensionError):
        tracial_conditional_expectation(dec, 5)


def test_lift_examples(rng):
    src, tgt = _dec((2,)), _dec((3,))
    lift, lift_inv = lift_homomorphism(build_embedding(embedding_feasible((2,), (3,)), tgt, src))
    assert np.allclose(lift(np.eye(2)), np.eye(3))
    for _ in range(5):
        x = _algebra_element(src, rng)
        assert np.allclose(lift_inv(lift(x)), x, atol=1e-9)
    # unital case: the complement term vanishes
    dec = _dec((2, 1))
    iota = build_embedding(embedding_feasible((2, 1), (2, 1)), dec, dec)
    lift, _ = lift_homomorphism(iota)
    x = rng.standard_normal((3, 3))
    assert np.allclose(lift(x), iota(dec.conditional_expectation(x)))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15)
def test_lift_inverse_on_random_algebras(seed):
    rng = np.random.default_rng(seed)
    src_shape = sorted(rng.integers(1, 3, size=rng.integers(1, 3)).tolist(), reverse=True)
    tgt_shape = sorted((rng.integers(1, 3, size=rng.integers(0, 2)).tolist() + [sum(src_shape)]), reverse=True)
    src, tgt = _dec(src_shape), _dec(tgt_shape)
    plan = embedding_feasible(src.shape, tgt.shape)
    lift, lift_inv = lift_homomorphism(build_embedding(plan, tgt, src))
    x = _algebra_element(src, rng)
    assert np.allclose(lift_inv(lift(x)), x, atol=1e-9)


def test_synthesize_examples():
    g = make_block_idempotent(BlockSpec(((2, 1), (1, 1))))
    kit = synthesize_emulation(identity(2), g)
    assert kit is not None and kit.residual <= 1e-8
    assert kit.encoder.tp_residual() < 1e-8 and kit.decoder.tp_residual() < 1e-8
    assert synthesize_emulation(identity(2), dephasing(2)) is None
    assert synthesize_emulation(dephasing(4), identity(2)) is None
    kit = synthesize_emulation(dephasing(4), identity(2), 1, 2)
    assert kit is not None and kit.residual <= 1e-8
    assert verify_emulation(dephasing(4), identity(2), 1, 2, kit.encoder, kit.decoder) <= 1e-8


def test_synthesize_with_ambient_spaces():
    f = make_block_idempotent(BlockSpec(((2, 1), (1, 2)), ambient_dim=5), seed=8)
    g = make_block_idempotent(BlockSpec(((3, 2), (1, 1)), ambient_dim=8), seed=9)
    kit = synthesize_emulation(f, g)
    assert kit is not None and kit.residual <= 1e-8


def test_verify_emulation_trivial_and_random():
    f = make_block_idempotent(BlockSpec(((2, 1), (1, 1))))
    assert verify_emulation(f, f, 1, 1, identity(3), identity(3)) < 1e-12
    for s in range(5):
        e, d = random_channel(2, 2, seed=s), random_channel(2, 2, seed=100 + s)
        assert verify_emulation(identity(2), dephasing(2), 1, 1, e, d) > 0.1
    with pytest.raises(DimensionError):
        verify_emulation(identity(2), dephasing(2), 1, 1, identity(3), identity(2))


def test_budget_enforced():
    with pytest.raises(BudgetError):
        synthesize_emulation(identity(3), identity(3), 4, 4, budget=64)


def test_search_blocklength_needs_second_copy():
    # (3,3) does not fit into (5,2), but (9,9,9,9) fits into (25,10,10,4)
    f = make_block_idempotent(BlockSpec(((3, 1), (3, 1))))
    g = make_block_idempotent(BlockSpec(((5, 1), (2, 1))))
    assert synthesize_emulation(f, g) is None
    kit = search_blocklength(f, g, 1, 1)
    assert kit is not None and (kit.k, kit.n) == (2, 2)
    assert kit.residual <= 1e-8


def test_search_blocklength_stops_at_budget():
    assert search_blocklength(dephasing(4), identity(2), 1, 1, budget=64) is None
    kit = search_blocklength(dephasing(4), identity(2), 1, 2)
    assert (kit.k, kit.n) == (1, 2)


@given(dims, dims, st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=60)
def test_shape_feasibility_is_sound(lf, lg, k, n):
    if len(lf) ** k > 40 or len(lg) ** n > 40:
        return
    plan = shapes_feasible(lf, lg, k, n)
    if plan is None:
        return
    for p in (1, 2, INF):
        assert lp_norm(ShapeVector(lf), p) ** k <= lp_norm(ShapeVector(lg), p) ** n * (1 + 1e-12)
