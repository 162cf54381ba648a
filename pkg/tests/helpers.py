"""Brute-force oracles shared by the test modules.

Everything here is assembled from first principles (explicit Kronecker
products, subset enumeration, dense expm) so the library is never used
to check itself.  Conventions: site j = 1..L is the j-th least
significant base-3 digit, local digit = 1 - m for m in {+1, 0, -1}.
"""

import itertools
import math

import numpy as np
import scipy.linalg as sla

SZ = np.diag([1.0, 0.0, -1.0])
SP = math.sqrt(2.0) * np.diag([1.0, 1.0], k=1)
SM = SP.T
SX = (SP + SM) / 2.0
SY = (SP - SM) / 2.0j
ID3 = np.eye(3)


def kron_site(op, site, L):
    """Embed a local operator at 1-based site, site 1 least significant."""
    out = np.ones((1, 1), dtype=complex)
    for j in range(1, L + 1):
        out = np.kron(op if j == site else ID3, out)
    return out


def dense_hamiltonian(L, J=1.0, h=1.0, D=0.1, J2=0.0, J3=0.0):
    """Open-chain spin-1 XY Hamiltonian from explicit Kronecker products."""
    dim = 3**L
    ham = np.zeros((dim, dim), dtype=complex)
    for dist, coupling in ((1, J), (2, J2), (3, J3)):
        if coupling == 0.0:
            continue
        for j in range(1, L + 1 - dist):
            ham += coupling * (
                kron_site(SX, j, L) @ kron_site(SX, j + dist, L)
                + kron_site(SY, j, L) @ kron_site(SY, j + dist, L)
            )
    for j in range(1, L + 1):
        sz = kron_site(SZ, j, L)
        ham += h * sz + D * sz @ sz
    assert np.max(np.abs(ham.imag)) < 1e-14
    return ham.real


def subset_tower_state(L, n):
    """B_n by explicit subset enumeration.

    Each term raises the sites of an n-subset from m=-1 to m=+1 and picks
    up (-1)^site; everything else stays m=-1 (digit 2).
    """
    vec = np.zeros(3**L)
    base = 3**L - 1                       # all-minus configuration
    for subset in itertools.combinations(range(1, L + 1), n):
        idx = base - sum(2 * 3 ** (j - 1) for j in subset)
        vec[idx] = (-1.0) ** sum(subset)
    return vec / np.linalg.norm(vec)


def product_state(L, theta):
    """Protocol product state with site-staggered phases, by digit lookup."""
    vec = np.empty(3**L, dtype=complex)
    for idx in range(3**L):
        amp = 1.0 + 0.0j
        rest = idx
        for j in range(1, L + 1):
            digit = rest % 3
            rest //= 3
            if digit == 1:
                amp = 0.0
                break
            if digit == 2:
                amp *= np.exp(1j * (np.pi * j + theta))
        vec[idx] = amp
    return vec / 2.0 ** (L / 2.0)


def dense_filtration_matrix(ham, tau, removal):
    """F = (1 - |r><r|) expm(-i H tau) on the same basis as ham."""
    unitary = sla.expm(-1j * tau * np.asarray(ham, dtype=complex))
    proj = np.eye(ham.shape[0]) - np.outer(removal, np.conj(removal))
    return proj @ unitary


def overlap_with_span(vec, columns):
    """Norm of the projection of a unit vector onto span(columns)."""
    q, _ = np.linalg.qr(columns)
    return float(np.linalg.norm(q.conj().T @ vec))
