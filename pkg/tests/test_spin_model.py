"""Hamiltonian, scar tower, and protocol states against brute-force oracles."""

import math

import numpy as np
import pytest

from darkfilter.basis import string_parity_sign
from darkfilter.errors import NumericsError, ValidationError
from darkfilter.spin_model import (
    ChainParams,
    bimagnon_raising,
    build_hamiltonian,
    build_tower,
    protocol_states,
    sga_residual,
    string_operator,
    sz_sector_split,
)

from helpers import dense_hamiltonian, product_state, subset_tower_state


@pytest.mark.parametrize(
    "L,kw",
    [
        (2, {}),
        (3, {"h": 0.7, "D": -0.3}),
        (4, {"J": 1.3, "J2": 0.11, "J3": 0.07}),
        (5, {"J2": 0.02, "J3": 0.1}),
    ],
)
def test_hamiltonian_matches_kron_oracle(L, kw):
    params = ChainParams(L=L, **kw)
    ham = build_hamiltonian(params).dense()
    oracle = dense_hamiltonian(L, params.J, params.h, params.D,
                               params.J2, params.J3)
    assert np.max(np.abs(ham - oracle)) < 1e-12


def test_hamiltonian_is_real_symmetric():
    ham = build_hamiltonian(ChainParams(L=4, J2=0.05, J3=0.1)).dense()
    assert np.max(np.abs(ham - ham.T)) < 1e-14
    assert np.isrealobj(ham) or np.max(np.abs(ham.imag)) < 1e-14


def test_sector_split_reassembles():
    op = build_hamiltonian(ChainParams(L=3, J3=0.1))
    blocks = sz_sector_split(op)
    dense = op.dense()
    total = 0
    for blk in blocks.values():
        idx = blk.basis.states
        assert np.max(np.abs(dense[np.ix_(idx, idx)] - blk.matrix)) < 1e-14
        total += idx.size
    assert total == 27
    # off-block entries vanish: Sz is conserved
    for ma, blk_a in blocks.items():
        for mb, blk_b in blocks.items():
            if ma != mb:
                cross = dense[np.ix_(blk_a.basis.states, blk_b.basis.states)]
                assert np.max(np.abs(cross)) < 1e-14


@pytest.mark.parametrize("L", [2, 3, 4, 5, 6])
def test_tower_matches_subset_enumeration(L):
    tower = build_tower(ChainParams(L=L))
    for n in range(L + 1):
        oracle = subset_tower_state(L, n)
        assert np.max(np.abs(tower.states[n] - oracle)) < 1e-12


def test_tower_orthonormal():
    tower = build_tower(ChainParams(L=6))
    gram = tower.states @ tower.states.T
    assert np.max(np.abs(gram - np.eye(7))) < 1e-12


@pytest.mark.parametrize("kw", [{}, {"J3": 0.1}, {"h": 0.6, "D": -0.2, "J3": 0.25}])
def test_tower_states_are_eigenstates(kw):
    params = ChainParams(L=5, **kw)
    ham = build_hamiltonian(params)
    tower = build_tower(params)
    for n in range(6):
        vec = tower.states[n]
        resid = ham.apply(vec) - params.tower_energy(n) * vec
        assert np.linalg.norm(resid) < 1e-12
    # equal spacing 2h between neighbors
    spacing = np.diff(tower.energies)
    assert np.max(np.abs(spacing - 2.0 * params.h)) < 1e-12


def test_range_two_coupling_breaks_the_tower_interior():
    params = ChainParams(L=5, J2=0.05)
    ham = build_hamiltonian(params)
    tower = build_tower(params)
    # edge states survive, the interior does not
    for n in (0, 5):
        vec = tower.states[n]
        assert np.linalg.norm(ham.apply(vec) - params.tower_energy(n) * vec) < 1e-12
    vec = tower.states[2]
    assert np.linalg.norm(ham.apply(vec) - params.tower_energy(2) * vec) > 1e-3


def test_bimagnon_raising_walks_the_ladder():
    L = 4
    tower = build_tower(ChainParams(L=L))
    qplus = bimagnon_raising(L)
    for n in range(L):
        raised = qplus @ tower.states[n]
        coeff = tower.states[n + 1] @ raised
        assert coeff > 0                      # construction fixes the sign
        assert np.linalg.norm(raised - coeff * tower.states[n + 1]) < 1e-12
    assert np.linalg.norm(qplus @ tower.states[L]) < 1e-12


@pytest.mark.parametrize("L", [4, 5, 6, 7, 8])
def test_sga_residual_with_range_three_coupling(L):
    report = sga_residual(ChainParams(L=L, J3=0.1))
    assert report.max < 1e-10


def test_sga_residual_detects_breaking():
    report = sga_residual(ChainParams(L=4, J2=0.3))
    assert report.max > 1e-3


@pytest.mark.parametrize("theta0", [0.0, 0.37, math.pi / 6])
def test_protocol_states_match_product_oracle(theta0):
    L = 4
    psi_r, psi_0 = protocol_states(ChainParams(L=L), theta0)
    assert np.max(np.abs(psi_0.amplitudes - product_state(L, theta0))) < 1e-12
    assert np.max(np.abs(psi_r.amplitudes - product_state(L, math.pi))) < 1e-12


@pytest.mark.parametrize("L", [3, 4, 5, 6])
def test_protocol_states_tower_decomposition(L):
    """Both product states live entirely on the tower with binomial weights."""
    theta0 = 0.4
    tower = build_tower(ChainParams(L=L))
    psi_r, psi_0 = protocol_states(ChainParams(L=L), theta0)
    c_r = tower.coefficients(psi_r.amplitudes)
    c_0 = tower.coefficients(psi_0.amplitudes)
    n = np.arange(L + 1)
    weights = np.sqrt([math.comb(L, int(m)) / 2.0**L for m in n])
    # closed forms up to one global phase
    law_r = (-1.0) ** n * weights
    law_0 = np.exp(1j * (L - n) * theta0) * weights
    for coeffs, law in ((c_r, law_r), (c_0, law_0)):
        assert abs(np.linalg.norm(coeffs) - 1.0) < 1e-12
        phase = coeffs[0] / law[0]
        assert abs(abs(phase) - 1.0) < 1e-12
        assert np.max(np.abs(coeffs - phase * law)) < 1e-12


@pytest.mark.parametrize("L", [3, 4, 5])
def test_string_operator_reflects_the_tower(L):
    flip = string_operator(L)
    tower = build_tower(ChainParams(L=L))
    sign = string_parity_sign(L)
    for n in range(L + 1):
        image = flip.apply(tower.states[n])
        assert np.max(np.abs(image - sign * tower.states[L - n])) < 1e-12
    # involution and hermiticity
    dense = flip.dense()
    assert np.max(np.abs(dense @ dense - np.eye(3**L))) < 1e-14
    assert np.max(np.abs(dense - dense.T)) < 1e-14


def test_chain_params_validation():
    with pytest.raises(ValidationError):
        ChainParams(L=1)
    with pytest.raises(ValidationError):
        ChainParams(L=4, h=float("nan"))
    with pytest.raises(ValidationError):
        ChainParams(L=2.5)


def test_sector_split_rejects_nonconserving_operator():
    op = string_operator(3)        # flips magnetization M -> -M
    with pytest.raises(NumericsError):
        sz_sector_split(op)
