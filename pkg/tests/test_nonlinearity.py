"""Nonlinearity suite: parity contract, frozen entry values, structure checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bss2 import meanfield, nonlinearity
from bss2.nonlinearity import (
    HMatrix,
    OddFunctionPair,
    evaluate,
    make_classical,
    make_score_based,
    odd_pair,
    validate_parities,
)


def test_parity_identities_shipped(classical_H, absvalue_H, gsm):
    for H in (classical_H, absvalue_H, make_score_based(gsm)):
        ok, worst = validate_parities(H, tol=1e-12)
        assert ok, (H.label, worst)


def test_classical_cubic_frozen_values(classical_H):
    assert classical_H.h11(2.0, 5.0) == pytest.approx(3.0)
    assert classical_H.h22(5.0, 2.0) == pytest.approx(3.0)
    # z1 z2 + z1 z2^3 - z1^3 z2 at (1, 2): 2 + 8 - 2
    assert classical_H.h12(1.0, 2.0) == pytest.approx(8.0)
    assert classical_H.h21(1.0, 2.0) == pytest.approx(1.0 * 2.0 + 2.0 * 1.0 - 8.0 * 1.0)


def test_absvalue_frozen_values(absvalue_H):
    assert absvalue_H.h11(-3.0, 1.0) == pytest.approx(2.0)
    assert absvalue_H.h12(-1.0, 2.0) == pytest.approx(-4.0)
    # Oddness in z1 forces h21(-1, 2) = -h21(1, 2) = -2.
    assert absvalue_H.h21(-1.0, 2.0) == pytest.approx(-2.0)
    assert absvalue_H.h22(0.5, -0.25) == pytest.approx(-0.75)


def test_classical_nonlinear_part_antisymmetric(classical_H):
    z = np.linspace(-3, 3, 13)
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    off12 = classical_H.h12(Z1, Z2) - Z1 * Z2
    off21 = classical_H.h21(Z1, Z2) - Z1 * Z2
    assert np.max(np.abs(off12 + off21)) < 1e-12


def test_njit_kernels_match_python(classical_H, absvalue_H):
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 2))
    for H in (classical_H, absvalue_H):
        k11, k12, k21, k22 = H.njit_entries
        for z1, z2 in pts:
            assert k11(z1, z2) == pytest.approx(float(H.h11(z1, z2)), abs=1e-14)
            assert k12(z1, z2) == pytest.approx(float(H.h12(z1, z2)), abs=1e-14)
            assert k21(z1, z2) == pytest.approx(float(H.h21(z1, z2)), abs=1e-14)
            assert k22(z1, z2) == pytest.approx(float(H.h22(z1, z2)), abs=1e-14)


def test_evaluate_shape_and_finiteness(classical_H):
    M = evaluate(classical_H, 0.5, -1.5)
    assert M.shape == (2, 2)
    bad = HMatrix(
        label="bad",
        h11=lambda z1, z2: np.divide(1.0, z1),
        h12=lambda z1, z2: z1 * z2,
        h21=lambda z1, z2: z1 * z2,
        h22=lambda z1, z2: z2,
    )
    with np.errstate(divide="ignore"), pytest.raises(FloatingPointError):
        evaluate(bad, 0.0, 1.0)


def test_validate_parities_flags_violation():
    broken = HMatrix(
        label="broken",
        h11=lambda z1, z2: z1**2 - 1.0,
        h12=lambda z1, z2: z1**2 + z2,  # even in z1: violates oddness
        h21=lambda z1, z2: z1 * z2,
        h22=lambda z1, z2: z2**2 - 1.0,
    )
    ok, worst = validate_parities(broken)
    assert not ok and worst > 1.0


def test_odd_pair_registry():
    assert odd_pair("cubic").check_odd()
    assert odd_pair("identity").check_odd()
    with pytest.raises(ValueError):
        odd_pair("tanh")
    even = OddFunctionPair(g1=lambda z: z**2, g2=lambda z: z**3)
    with pytest.raises(ValueError):
        make_classical(even)


def test_score_based_requires_gradient(polar1):
    from bss2.sources import CapabilityError

    with pytest.raises(CapabilityError):
        make_score_based(polar1)


def test_score_based_offset_equilibrium(gsm, quad_engine):
    # Integration by parts: E[-s_i f_si / f] = 1, so the offset variant has a
    # scale equilibrium at (1, 1).
    H = make_score_based(gsm, diag_offset=True)
    res = meanfield.equilibrium_residuals(H, gsm, 1.0, 1.0, quad_engine)
    assert abs(res[0, 0]) < 1e-6 and abs(res[1, 1]) < 1e-6
    raw = make_score_based(gsm, diag_offset=False)
    res_raw = meanfield.equilibrium_residuals(raw, gsm, 1.0, 1.0, quad_engine)
    assert res_raw[0, 0] == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(
    c1=st.floats(min_value=0.3, max_value=3.0),
    c2=st.floats(min_value=0.3, max_value=3.0),
    signs=st.tuples(st.sampled_from([-1.0, 1.0]), st.sampled_from([-1.0, 1.0])),
)
def test_offdiagonal_expectations_free(c1, c2, signs, classical_H, absvalue_H,
                                       gsm, quad_engine):
    """Anti-diagonal expectations vanish for arbitrary scales on symmetric models."""
    s1v, s2v, w = quad_engine.points(gsm)
    for H in (classical_H, absvalue_H):
        z1, z2 = signs[0] * c1 * s1v, signs[1] * c2 * s2v
        scale = max(float(np.max(np.abs(H.h12(z1, z2)))), 1.0)
        assert abs(float(w @ H.h12(z1, z2))) < 1e-10 * scale
        assert abs(float(w @ H.h21(z1, z2))) < 1e-10 * scale
