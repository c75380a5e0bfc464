"""Concrete chain operators, states, and the exact conservation identities."""

import math

import numpy as np
import pytest
from gmpy2 import mpq
from hypothesis import given, strategies as st

from epchain.chain import (
    DefectSpec, SpinChainParams, build_com_closed, build_current,
    build_h_ahs, build_h_nhs, build_h_xxx, build_mx, build_similarity,
    build_state, continuity_sign, defect_index, polarized_index,
)
from epchain.opalg import Coeff, OperatorExpr, SiteOp, conservation_residual

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID = np.eye(2, dtype=complex)


def embed(gate, site, L):
    out = np.eye(1, dtype=complex)
    for k in range(1, L + 1):
        out = np.kron(out, gate if k == site else ID)
    return out


def dense_h_nhs(L, J, g, delta):
    H = np.zeros((1 << L, 1 << L), dtype=complex)
    for j in range(1, L):
        for s in (SX, SY, SZ):
            H += J * embed(s, j, L) @ embed(s, j + 1, L)
    for j in range(1, L + 1):
        H += g * embed(SX, j, L) + 1j * g * (1 - delta) * embed(SY, j, L)
    return H


def test_params_validation():
    with pytest.raises(ValueError):
        SpinChainParams(L=0)
    with pytest.raises(ValueError):
        SpinChainParams(L=2, J=float("nan"))
    p = SpinChainParams(L=3)
    assert (p.J, p.g, p.delta) == (1.0, 1.0, 0.0)


@given(st.integers(min_value=2, max_value=4),
       st.floats(min_value=-1.5, max_value=1.5, allow_nan=False),
       st.floats(min_value=0.1, max_value=2.0, allow_nan=False))
def test_h_nhs_matches_dense_reference(L, delta, g):
    p = SpinChainParams(L=L, J=1.0, g=g, delta=delta)
    assert np.allclose(build_h_nhs(p).to_dense(),
                       dense_h_nhs(L, 1.0, g, delta), atol=1e-12)


def test_ep_form_is_raising_field():
    # at delta = 0 the field terms combine into 2g sum_j sigma^+_j
    L = 3
    p = SpinChainParams(L=L, g=1.0, delta=0.0)
    expected = build_h_xxx(p)
    for j in range(1, L + 1):
        expected = expected + OperatorExpr.from_site_factors(
            L, {j: SiteOp.Plus})
    assert (build_h_nhs(p) - expected).is_zero()


def test_h_ahs_field_strength():
    p = SpinChainParams(L=2, delta=0.5)
    H = build_h_ahs(p).to_dense()
    field = math.sqrt(0.5 * 1.5)
    ref = (dense_h_nhs(2, 1.0, 0.0, 0.0)
           + field * (embed(SX, 1, 2) + embed(SX, 2, 2)))
    assert np.allclose(H, ref, atol=1e-12)
    with pytest.raises(ValueError):
        build_h_ahs(SpinChainParams(L=2, delta=-0.1))


@pytest.mark.parametrize("delta", [0.1, 0.5, 1.0, 1.5, 1.9])
def test_similarity_transforms_to_hermitian_partner(delta):
    p = SpinChainParams(L=4, delta=delta)
    S = build_similarity(p).to_dense()
    S_inv = build_similarity(p, inverse=True).to_dense()
    assert np.allclose(S @ S_inv, np.eye(16), atol=1e-10)
    lhs = S @ build_h_nhs(p).to_dense() @ S_inv
    assert np.allclose(lhs, build_h_ahs(p).to_dense(), atol=1e-10)


def test_similarity_domain():
    with pytest.raises(ValueError):
        build_similarity(SpinChainParams(L=2, delta=0.0))
    with pytest.raises(ValueError):
        build_similarity(SpinChainParams(L=2, delta=2.0))


def test_mx_density_shape():
    # Pd everywhere except X/2 at the chosen site
    L = 3
    m2 = build_mx(2, L).to_dense()
    Pd = np.diag([0.0, 1.0]).astype(complex)
    ref = np.kron(np.kron(Pd, SX / 2), Pd)
    assert np.allclose(m2, ref, atol=1e-12)
    with pytest.raises(ValueError):
        build_mx(0, L)
    with pytest.raises(ValueError):
        build_mx(4, L)


def test_current_edges_are_zero():
    L = 4
    assert build_current(0, L).is_zero()
    assert build_current(L, L).is_zero()
    assert not build_current(2, L).is_zero()
    with pytest.raises(ValueError):
        build_current(5, L)


def test_continuity_identity_is_exact():
    # s*i*(H^dag m_i - m_i H) + (j_i - j_{i-1}) = 0 termwise at delta = 0
    L = 4
    s = continuity_sign(L)
    assert s == 1
    H = build_h_nhs(SpinChainParams(L=L, delta=0.0))
    for i in range(1, L + 1):
        comm = conservation_residual(H, build_mx(i, L))
        div = build_current(i, L) - build_current(i - 1, L)
        assert (comm.scaled(Coeff(0, s)) + div).is_zero()


@pytest.mark.parametrize("L", [2, 3, 4, 5])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_coms_exactly_conserved_at_ep(L, n):
    H = build_h_nhs(SpinChainParams(L=L, delta=0.0))
    C = build_com_closed(n, L)
    assert conservation_residual(H, C).is_zero()
    assert C.is_hermitian()


def test_coms_not_conserved_off_ep():
    H = build_h_nhs(SpinChainParams(L=3, delta=0.2))
    for n in (1, 2, 3):
        assert not conservation_residual(H, build_com_closed(n, 3)).is_zero()


def test_com_forms():
    L = 3
    # C1 is the projector onto the fully down-polarized state
    C1 = build_com_closed(1, L).to_dense()
    ref = np.zeros((8, 8))
    ref[polarized_index(L), polarized_index(L)] = 1.0
    assert np.allclose(C1, ref, atol=1e-12)
    # C2 (default) averages the densities; density_sum drops the 1/L
    C2 = build_com_closed(2, L)
    total = OperatorExpr.zero(L)
    for i in range(1, L + 1):
        total = total + build_mx(i, L)
    assert (build_com_closed(2, L, density_sum=True) - total).is_zero()
    assert (C2.scaled(L) - total).is_zero()
    with pytest.raises(ValueError):
        build_com_closed(3, 1)
    with pytest.raises(ValueError):
        build_com_closed(4, 3)


def test_basis_indices():
    assert polarized_index(3) == 0b111
    assert defect_index(1, 3) == 0b011
    assert defect_index(3, 3) == 0b110


def test_states():
    v = build_state("uniform", 3)
    assert np.allclose(v, np.full(8, 8 ** -0.5))
    v = build_state("polarized", 3)
    assert v[polarized_index(3)] == 1.0 and np.linalg.norm(v) == 1.0
    v = build_state("defect", 3, defect=DefectSpec(site=2))
    assert abs(v[defect_index(2, 3)]) == pytest.approx(1.0)
    v = build_state("defect", 3, defect=DefectSpec(site=2, theta=np.pi / 4))
    assert np.linalg.norm(v) == pytest.approx(1.0)
    v = build_state("gaussian_defect", 5, center=3, width=1)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert abs(v[polarized_index(5)]) == pytest.approx(2 ** -0.5)
    with pytest.raises(ValueError):
        build_state("defect", 3)
    with pytest.raises(ValueError):
        build_state("gaussian_defect", 3)
    with pytest.raises(ValueError):
        build_state("unknown", 3)


def test_gaussian_defect_c2_value():
    # one-magnon weight is exactly 1/2, so the density-sum expectation is
    # 1/2 plus the cross term with the polarized component
    L = 5
    v = build_state("gaussian_defect", L, center=3, width=1)
    C2 = build_com_closed(2, L, density_sum=True).to_dense()
    val = np.vdot(v, C2 @ v).real
    assert 0 < val < 1
