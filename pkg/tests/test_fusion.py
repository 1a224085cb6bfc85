"""Fibonacci category tables: frozen values and self-consistency."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvq.fusion import (
    PHI,
    FusionData,
    admissible_ef,
    fibonacci_data,
    fusion_from_json,
    fusion_to_json,
    trivial_data,
    vacuum_s_vector,
    verify_f_unitarity,
    verify_pentagon_coherence,
)

INV_PHI = 0.6180339887498949
INV_SQRT_PHI = 0.7861513777574233


@pytest.fixture(scope="module")
def fib():
    return fibonacci_data()


def test_qdim_is_golden_ratio(fib):
    assert fib.qdim[0] == 1.0
    assert fib.qdim[1] == pytest.approx(1.6180339887498949, abs=1e-14)
    # defining identity, not a truncated literal
    assert abs(fib.qdim[1] ** 2 - fib.qdim[1] - 1.0) < 1e-14


def test_total_dim_sq(fib):
    assert fib.total_dim_sq == pytest.approx(1.0 + PHI**2, abs=1e-14)
    assert fib.total_dim_sq == pytest.approx(3.618033988749895, abs=1e-12)


def test_branching_table(fib):
    allowed = {(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)}
    for a in range(2):
        for b in range(2):
            for c in range(2):
                assert fib.branching[a, b, c] == ((a, b, c) in allowed)
    assert fib.branching.sum() == 5
    assert fib.admissible(1, 1, 0)
    assert not fib.admissible(1, 0, 0)


def test_branching_fully_symmetric(fib):
    t = fib.branching
    assert np.array_equal(t, t.transpose(0, 2, 1))
    assert np.array_equal(t, t.transpose(1, 0, 2))
    assert np.array_equal(t, t.transpose(2, 1, 0))


def test_golden_block_frozen_values(fib):
    assert fib.fsym[1, 1, 1, 1, 0, 0] == pytest.approx(INV_PHI, abs=1e-14)
    assert fib.fsym[1, 1, 1, 1, 0, 1] == pytest.approx(INV_SQRT_PHI, abs=1e-14)
    assert fib.fsym[1, 1, 1, 1, 1, 0] == pytest.approx(INV_SQRT_PHI, abs=1e-14)
    assert fib.fsym[1, 1, 1, 1, 1, 1] == pytest.approx(-INV_PHI, abs=1e-14)


def test_non_golden_admissible_entries_are_one(fib):
    for idx in np.argwhere(fib.fsym != 0.0):
        a, b, c, d, e, f = (int(x) for x in idx)
        if (a, b, c, d) != (1, 1, 1, 1):
            assert fib.fsym[a, b, c, d, e, f] == 1.0


def test_inadmissible_entries_are_zero(fib):
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for d in range(2):
                    for e in range(2):
                        for f in range(2):
                            ok = (
                                fib.branching[a, b, e]
                                and fib.branching[e, c, d]
                                and fib.branching[b, c, f]
                                and fib.branching[a, f, d]
                            )
                            if not ok:
                                assert fib.fsym[a, b, c, d, e, f] == 0.0


def test_f_unitarity_holds(fib):
    assert verify_f_unitarity(fib)


def _with_fsym(data, fsym):
    return FusionData(
        num_labels=data.num_labels,
        qdim=data.qdim,
        branching=data.branching,
        fsym=fsym,
        total_dim_sq=data.total_dim_sq,
    )


def test_f_unitarity_rejects_perturbation(fib):
    fsym = fib.fsym.copy()
    fsym[1, 1, 1, 1, 0, 1] += 0.01
    assert not verify_f_unitarity(_with_fsym(fib, fsym))


def test_f_unitarity_accepts_identity_blocks(fib):
    fsym = np.zeros_like(fib.fsym)
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for d in range(2):
                    es, fs = admissible_ef(fib, a, b, c, d)
                    for e, f in zip(es, fs):
                        fsym[a, b, c, d, e, f] = 1.0
    assert verify_f_unitarity(_with_fsym(fib, fsym))


@settings(max_examples=40, deadline=None)
@given(pick=st.integers(min_value=0, max_value=12), eps=st.sampled_from([0.01, -0.01, 0.05, 0.3]))
def test_any_admissible_perturbation_breaks_unitarity(pick, eps):
    data = fibonacci_data()
    nonzero = np.argwhere(data.fsym != 0.0)
    idx = tuple(int(x) for x in nonzero[pick % len(nonzero)])
    fsym = data.fsym.copy()
    fsym[idx] += eps
    assert not verify_f_unitarity(_with_fsym(data, fsym))


def test_vacuum_s_vector_frozen(fib):
    v = vacuum_s_vector(fib)
    assert v[0] == pytest.approx(0.5257311121191336, abs=1e-12)
    assert v[1] == pytest.approx(0.8506508083520399, abs=1e-12)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)


def test_vacuum_s_vector_trivial_category():
    v = vacuum_s_vector(trivial_data())
    assert v.shape == (1,)
    assert v[0] == pytest.approx(1.0, abs=1e-15)


def test_trivial_category_tables():
    triv = trivial_data()
    assert triv.num_labels == 1
    assert verify_f_unitarity(triv)


def test_json_round_trip(fib):
    text = fusion_to_json(fib)
    back = fusion_from_json(text)
    assert back.num_labels == fib.num_labels
    assert np.array_equal(back.qdim, fib.qdim)
    assert np.array_equal(back.branching, fib.branching)
    assert np.array_equal(back.fsym, fib.fsym)
    assert back.total_dim_sq == fib.total_dim_sq
    # serialization is stable (golden-file requirement)
    assert fusion_to_json(back) == text


def test_json_rejects_shape_mismatch(fib):
    doc = json.loads(fusion_to_json(fib))
    doc["num_labels"] = 3
    with pytest.raises(ValueError):
        fusion_from_json(json.dumps(doc))


def test_pentagon_coherence_holds(fib):
    assert verify_pentagon_coherence(fib)


def test_pentagon_rejects_sign_flip(fib):
    fsym = fib.fsym.copy()
    fsym[1, 1, 1, 1, 1, 1] *= -1.0
    assert not verify_pentagon_coherence(_with_fsym(fib, fsym))


def test_pentagon_sees_past_orthogonality(fib):
    # negating the whole golden block keeps every F-block orthogonal but
    # breaks the five-term identity, so the walk must still reject it
    fsym = fib.fsym.copy()
    fsym[1, 1, 1, 1] = -fsym[1, 1, 1, 1]
    bad = _with_fsym(fib, fsym)
    assert verify_f_unitarity(bad)
    assert not verify_pentagon_coherence(bad)


def test_pentagon_trivial_category():
    assert verify_pentagon_coherence(trivial_data())
