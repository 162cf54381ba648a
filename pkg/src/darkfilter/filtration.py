"""Filtration protocol: engine construction, iteration, dark subspaces.

One protocol period applies U(tau) = exp(-i H tau) and then removes the
component along a fixed product state |psi_r>, i.e. the filtration
operator F = (1 - |psi_r><psi_r|) U(tau).  F is non-normal and
contractive; its unimodular eigenvectors (dark states) survive forever,
everything else is depleted exponentially.

All engines iterate in the eigenbasis of H, where U is diagonal and one
step costs O(dim).  Three engines exist:

* ``tower``   -- the (L+1)-dimensional bi-magnon ladder, H diagonal by
  construction; valid only for J2 = 0.
* ``full``    -- magnetization-blocked exact diagonalization of the full
  chain; handles SGA-breaking perturbations and modified removal states.
* ``generic`` -- an arbitrary Hermitian matrix (random-matrix demos).

Iteration never renormalizes the internal state; survival probability is
its squared norm, and all reported quantities are normalized on output.
The non-normal eigendecomposition is an analysis tool only, never the
propagation path.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from darkfilter import _kernels
from darkfilter.basis import (
    FULL_SPACE_CAP,
    BasisEncoding,
    magnetization_of,
    string_parity_sign,
)
from darkfilter.errors import NumericsError, ValidationError
from darkfilter.spin_model import (
    ChainParams,
    ManyBodyOperator,
    ScarTower,
    SectorBlock,
    StateVector,
    build_hamiltonian,
    protocol_states,
    sz_sector_split,
)

# Degeneracy clustering tolerance for eigenphases, in radians.  The
# resonant periods are constructed as exact ratios, so true collisions
# sit at rounding error while distinct phases are separated by O(1/L).
PHASE_TOL = 1e-9

# Dense non-normal eigendecomposition guard.
SPECTRUM_CAP = 4000


def resonance_period(ea, eb, k=1):
    """Period tau = 2 pi k / |eb - ea| that makes two eigenphases collide."""
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    if ea == eb:
        raise ValidationError(
            "energies already degenerate: every period is resonant"
        )
    return 2.0 * math.pi * k / abs(eb - ea)


@dataclass
class SectorEig:
    """Eigendecomposition of one diagonal block of H."""

    label: int                  # magnetization M (0 for generic engines)
    indices: np.ndarray         # positions of the block in the input basis
    energies: np.ndarray
    vectors: np.ndarray         # columns are eigenvectors


@dataclass
class FiltrationSetup:
    """Everything needed to iterate the protocol in the H eigenbasis."""

    engine: str                 # "tower" | "full" | "generic"
    tau: float
    basis: BasisEncoding        # basis of run_filtration inputs/outputs
    energies: np.ndarray        # (dim,) engine-space eigenvalues of H
    phases: np.ndarray          # exp(-i E tau)
    removal_eig: np.ndarray     # removal state in the eigenbasis, unit norm
    params: ChainParams | None = None
    theta0: float | None = None
    sector_eigs: list[SectorEig] | None = None
    support: np.ndarray | None = None    # input-basis indices of engine coords
    flip_pos: np.ndarray | None = None   # spin-flip permutation on the support
    string_sign: float | None = None     # tower-basis sign of the string op
    phase_tol: float = PHASE_TOL

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.phases = np.ascontiguousarray(self.phases, dtype=complex)
        self.removal_eig = np.ascontiguousarray(self.removal_eig, dtype=complex)
        if abs(np.linalg.norm(self.removal_eig) - 1.0) > 1e-12:
            raise ValidationError("removal vector must have unit norm")
        if float(np.max(np.abs(np.abs(self.phases) - 1.0))) > 1e-12:
            raise NumericsError("propagator phases are not unimodular")

    @property
    def dimension(self):
        return self.energies.shape[0]

    @property
    def supports_string(self):
        return self.engine == "tower" or self.flip_pos is not None

    def to_eigen(self, state):
        """Input-basis state (StateVector or array) -> eigenbasis coords."""
        vec = state.amplitudes if isinstance(state, StateVector) else state
        vec = np.asarray(vec, dtype=complex)
        if self.engine == "tower":
            if vec.shape != (self.dimension,):
                raise ValidationError("state dimension does not match setup")
            return vec.copy()
        if vec.shape != (self.basis.dimension,):
            raise ValidationError("state dimension does not match setup basis")
        out = np.empty(self.dimension, dtype=complex)
        pos = 0
        for blk in self.sector_eigs:
            d = blk.energies.shape[0]
            out[pos:pos + d] = blk.vectors.conj().T @ vec[blk.indices]
            pos += d
        lost = abs(float(np.vdot(vec, vec).real) - float(np.vdot(out, out).real))
        if lost > 1e-10:
            raise ValidationError(
                f"state carries weight {lost:.3e} outside the engine sectors"
            )
        return out

    def from_eigen(self, coords):
        """Eigenbasis coords -> input-basis amplitude vector."""
        coords = np.asarray(coords, dtype=complex)
        if self.engine == "tower":
            return coords.copy()
        out = np.zeros(self.basis.dimension, dtype=complex)
        pos = 0
        for blk in self.sector_eigs:
            d = blk.energies.shape[0]
            out[blk.indices] = blk.vectors @ coords[pos:pos + d]
            pos += d
        return out

    def string_rows(self, rows):
        """<psi|prod X|psi> for each eigenbasis row of the (m, dim) array.

        Values are for the rows as given (unnormalized); divide by the
        survival weight to report normalized expectations.
        """
        rows = np.atleast_2d(rows)
        if self.engine == "tower":
            return self.string_sign * np.einsum(
                "ij,ij->i", rows[:, ::-1].conj(), rows
            )
        if self.flip_pos is None:
            raise ValidationError("string operator unavailable for this engine")
        comp = np.empty((rows.shape[0], self.support.shape[0]), dtype=complex)
        pos = 0
        for blk in self.sector_eigs:
            d = blk.energies.shape[0]
            comp[:, pos:pos + d] = rows[:, pos:pos + d] @ blk.vectors.T
            pos += d
        return np.einsum("ij,ij->i", comp[:, self.flip_pos].conj(), comp)


def reduced_setup(source, tau, theta0):
    """Tower-reduced engine: H diagonal on the L+1 bi-magnon states.

    Accepts a ScarTower or plain ChainParams (the reduced engine needs
    no full-space vectors, so it scales far beyond the dense cap).  The
    removal and initial states are the exact tower decompositions of the
    protocol product states, with binomial weights sqrt(C(L,n)/2^L).
    Returns (setup, initial state in the tower basis).
    """
    params = source.params if isinstance(source, ScarTower) else source
    if not isinstance(params, ChainParams):
        raise ValidationError("reduced_setup expects a ScarTower or ChainParams")
    if params.J2 != 0.0:
        raise ValidationError("tower engine requires J2 = 0 (tower not exact)")
    L = params.L
    n = np.arange(L + 1)
    energies = (params.D - params.h) * L + 2.0 * params.h * n
    weights = np.sqrt([math.comb(L, int(m)) / 2.0**L for m in n])
    removal = (-1.0) ** n * weights
    initial = np.exp(1j * (L - n) * theta0) * weights
    setup = FiltrationSetup(
        engine="tower",
        tau=tau,
        basis=BasisEncoding.tower(L),
        energies=energies,
        phases=np.exp(-1j * energies * tau),
        removal_eig=removal.astype(complex),
        params=params,
        theta0=theta0,
        string_sign=string_parity_sign(L),
    )
    return setup, StateVector(setup.basis, initial)


def full_setup(params, tau, theta0, removal=None, sectors=None,
               cap=FULL_SPACE_CAP):
    """Sector-blocked full-space engine.

    Diagonalizes H inside each total-Sz sector and concatenates the
    eigenbases of the sectors that can carry weight: the parity sectors
    M = L mod 2 hosting the protocol states, plus any sector touched by
    a custom removal vector (e.g. a noisy removal spreads everywhere).
    Returns (setup, initial product state on the full basis).
    """
    if not isinstance(params, ChainParams):
        raise ValidationError("full_setup expects ChainParams")
    L = params.L
    ham = build_hamiltonian(params, cap)
    psi_r, psi_0 = protocol_states(params, theta0, cap)
    if removal is not None:
        vec = removal.amplitudes if isinstance(removal, StateVector) else removal
        psi_r = StateVector(ham.basis, np.asarray(vec, dtype=complex))
        nrm = psi_r.norm()
        if abs(nrm - 1.0) > 1e-12:
            raise ValidationError("custom removal vector must have unit norm")
    if sectors is None:
        mags = magnetization_of(L)
        wanted = set(M for M in range(-L, L + 1) if (M - L) % 2 == 0)
        occupied = np.abs(psi_r.amplitudes) > 0.0
        wanted.update(int(M) for M in np.unique(mags[occupied]))
        sectors = sorted(wanted)
    blocks = sz_sector_split(ham, sectors=sectors)
    sector_eigs = []
    energies = []
    for M in sorted(blocks):
        blk = blocks.pop(M)        # free each dense block after its eigh
        w, v = sla.eigh(blk.matrix)
        sector_eigs.append(SectorEig(M, blk.basis.states, w, v))
        energies.append(w)
    energies = np.concatenate(energies)
    support = np.concatenate([blk.indices for blk in sector_eigs])
    lookup = np.full(3**L, -1, dtype=np.int64)
    lookup[support] = np.arange(support.shape[0])
    flipped = lookup[(3**L - 1) - support]
    flip_pos = flipped if np.all(flipped >= 0) else None
    removal_eig = _sector_project(sector_eigs, psi_r.amplitudes,
                                  "removal state")
    setup = FiltrationSetup(
        engine="full",
        tau=tau,
        basis=ham.basis,
        energies=energies,
        phases=np.exp(-1j * energies * tau),
        removal_eig=removal_eig,
        params=params,
        theta0=theta0,
        sector_eigs=sector_eigs,
        support=support,
        flip_pos=flip_pos,
    )
    return setup, psi_0


def _sector_project(sector_eigs, vec, what="state"):
    dim = sum(blk.energies.shape[0] for blk in sector_eigs)
    out = np.empty(dim, dtype=complex)
    pos = 0
    for blk in sector_eigs:
        d = blk.energies.shape[0]
        out[pos:pos + d] = blk.vectors.conj().T @ vec[blk.indices]
        pos += d
    lost = abs(float(np.vdot(vec, vec).real) - float(np.vdot(out, out).real))
    if lost > 1e-10:
        raise ValidationError(
            f"{what} carries weight {lost:.3e} outside the engine sectors"
        )
    return out


def generic_setup(matrix, removal, tau=None):
    """Engine for an arbitrary Hermitian matrix on a plain basis.

    With tau omitted, the period is set to 2 pi / (E_max - E_min), which
    makes the spectrum's extremal phases collide and engineers one dark
    state from the top and bottom of the band.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValidationError("matrix must be square")
    if float(np.max(np.abs(matrix - matrix.conj().T))) > 1e-12:
        raise ValidationError("matrix must be Hermitian")
    dim = matrix.shape[0]
    w, v = sla.eigh(matrix)
    if tau is None:
        tau = resonance_period(w[0], w[-1])
    removal = np.asarray(
        removal.amplitudes if isinstance(removal, StateVector) else removal,
        dtype=complex,
    )
    if removal.shape != (dim,):
        raise ValidationError("removal dimension mismatch")
    basis = BasisEncoding.generic(dim)
    blk = SectorEig(0, np.arange(dim), w, v)
    setup = FiltrationSetup(
        engine="generic",
        tau=tau,
        basis=basis,
        energies=w,
        phases=np.exp(-1j * w * tau),
        removal_eig=v.conj().T @ removal,
        sector_eigs=[blk],
        support=np.arange(dim),
    )
    return setup


def propagator(hamiltonian, tau, attach_cap=2000):
    """U(tau) = exp(-i H tau) via Hermitian eigendecomposition.

    Full-basis operators are exponentiated block by block in the
    magnetization sectors; the result carries the block structure and,
    for moderate dimensions, the full eigensystem (used by
    degeneracy_groups).
    """
    if not hamiltonian.hermitian:
        raise ValidationError("propagator requires a Hermitian operator")
    dim = hamiltonian.basis.dimension
    if hamiltonian.basis.kind == "full":
        split = sz_sector_split(hamiltonian)
        order = sorted(split)
        rows, cols, data = [], [], []
        blocks = {}
        values = []
        vec_cols = np.zeros((dim, dim), dtype=complex) if dim <= attach_cap \
            else None
        pos = 0
        for M in order:
            blk = split[M]
            w, v = sla.eigh(blk.matrix)
            u = (v * np.exp(-1j * w * tau)) @ v.conj().T
            err = float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
            if err > 1e-10:
                raise NumericsError(f"propagator block M={M} not unitary ({err:.3e})")
            idx = blk.basis.states
            rows.append(np.repeat(idx, idx.size))
            cols.append(np.tile(idx, idx.size))
            data.append(u.ravel())
            blocks[M] = SectorBlock(blk.basis, u)
            values.append(np.exp(-1j * w * tau))
            if vec_cols is not None:
                vec_cols[np.ix_(idx, pos + np.arange(idx.size))] = v
            pos += idx.size
        mat = sp.csr_array(
            (np.concatenate(data),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(dim, dim),
        )
        out = ManyBodyOperator(hamiltonian.basis, mat, hermitian=False)
        out.blocks = blocks
        out.eigensystem = (np.concatenate(values), vec_cols)
        return out
    dense = hamiltonian.dense()
    w, v = sla.eigh(np.asarray(dense))
    u = (v * np.exp(-1j * w * tau)) @ v.conj().T
    err = float(np.max(np.abs(u.conj().T @ u - np.eye(dim))))
    if err > 1e-10:
        raise NumericsError(f"propagator not unitary ({err:.3e})")
    out = ManyBodyOperator(hamiltonian.basis, sp.csr_array(u), hermitian=False)
    out.eigensystem = (np.exp(-1j * w * tau), v.astype(complex))
    return out


@dataclass
class PhaseGroup:
    """One cluster of coinciding eigenphases of U(tau)."""

    phase: complex               # representative unimodular eigenvalue
    vectors: np.ndarray          # (dim, g) orthonormal eigenvector columns
    members: tuple[int, ...]     # eigenvalue indices in the source ordering

    @property
    def degeneracy(self):
        return len(self.members)

    @property
    def angle(self):
        return float(np.angle(self.phase))


def _cluster_angles(angles, tol):
    """Sort eigenphase angles and cluster gaps below tol, with wrap-around."""
    order = np.argsort(angles, kind="stable")
    sorted_angles = angles[order]
    clusters = [[0]]
    for i in range(1, sorted_angles.size):
        if sorted_angles[i] - sorted_angles[i - 1] < tol:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    if len(clusters) > 1:
        wrap_gap = sorted_angles[0] + 2.0 * math.pi - sorted_angles[-1]
        if wrap_gap < tol:
            clusters[0] = clusters.pop() + clusters[0]
    gaps = []
    for a, b in zip(clusters, clusters[1:]):
        gaps.append(sorted_angles[b[0]] - sorted_angles[a[-1]])
    if len(clusters) > 1:
        gaps.append(sorted_angles[clusters[0][0]] + 2.0 * math.pi
                    - sorted_angles[clusters[-1][-1]])
    if gaps and min(gaps) < 10.0 * tol:
        warnings.warn(
            f"eigenphase clusters separated by only {min(gaps):.2e} rad; "
            "grouping may be ambiguous",
            stacklevel=3,
        )
    return [order[c] for c in clusters]


def degeneracy_groups(source, tol=None):
    """Cluster the eigenphases of U(tau) into degenerate groups.

    Accepts a FiltrationSetup (phases already diagonal in the engine
    frame) or a propagator() result carrying its eigensystem.
    """
    if isinstance(source, FiltrationSetup):
        values = source.phases
        vectors = None
        tol = source.phase_tol if tol is None else tol
    elif isinstance(source, ManyBodyOperator):
        eig = getattr(source, "eigensystem", None)
        if eig is None or eig[1] is None:
            raise ValidationError(
                "operator carries no eigensystem; build it with propagator()"
            )
        values, vectors = eig
        tol = PHASE_TOL if tol is None else tol
    else:
        raise ValidationError("expected a FiltrationSetup or propagator result")
    if float(np.max(np.abs(np.abs(values) - 1.0))) > 1e-8:
        raise ValidationError("eigenvalues are not unimodular: not a unitary")
    angles = np.angle(values)
    groups = []
    for members in _cluster_angles(angles, tol):
        members = tuple(int(m) for m in np.sort(members))
        if vectors is None:
            basis_cols = np.zeros((values.shape[0], len(members)), dtype=complex)
            for col, m in enumerate(members):
                basis_cols[m, col] = 1.0
        else:
            basis_cols = vectors[:, list(members)]
        rep = values[members[0]]
        groups.append(PhaseGroup(complex(rep / abs(rep)), basis_cols, members))
    groups.sort(key=lambda g: g.angle)
    return groups


@dataclass
class DarkSubspace:
    """Orthonormal dark vectors with their unimodular eigenphases."""

    basis: BasisEncoding
    vectors: np.ndarray          # (dim, k) orthonormal columns
    phases: np.ndarray           # (k,) eigenvalues of F on each vector
    members: tuple[tuple[int, ...], ...]   # source group members per vector

    @property
    def count(self):
        return self.vectors.shape[1]

    def overlaps(self, state):
        """<Phi_delta|state> for each dark vector."""
        vec = state.amplitudes if isinstance(state, StateVector) else state
        return self.vectors.conj().T @ np.asarray(vec, dtype=complex)

    def project(self, vec):
        return self.vectors @ self.overlaps(vec)

    def state(self, k):
        return StateVector(self.basis, self.vectors[:, k].copy())


def _canonical_phase(vec):
    """Rotate a vector so its largest-modulus entry is real positive."""
    i = int(np.argmax(np.abs(vec)))
    pivot = vec[i]
    if abs(pivot) == 0.0:
        return vec
    return vec * (abs(pivot) / pivot)


def _determinant_darks(columns, a):
    """Recursive formal-determinant construction of the dark vectors.

    The delta-th dark vector is the formal determinant whose first row
    holds the degenerate kets C_1..C_{delta+1}, the second the removal
    overlaps <psi_r|C_i>, and the remaining rows the overlaps of the
    previously built dark vectors; cofactor expansion along the ket row
    yields a vector automatically orthogonal to psi_r and to all its
    predecessors.
    """
    g = columns.shape[1]
    rows = [np.asarray(a, dtype=complex)]
    darks = []
    for delta in range(1, g):
        size = delta + 1
        numeric = np.array([row[:size] for row in rows])
        coeffs = np.empty(size, dtype=complex)
        for i in range(size):
            minor = np.delete(numeric, i, axis=1)
            coeffs[i] = (-1.0) ** i * np.linalg.det(minor)
        vec = columns[:, :size] @ coeffs
        nrm = np.linalg.norm(vec)
        if nrm < 1e-14:
            raise NumericsError(
                "determinant construction degenerated; removal overlaps "
                "are numerically dependent"
            )
        vec = _canonical_phase(vec / nrm)
        darks.append(vec)
        rows.append(vec.conj() @ columns)
    return np.column_stack(darks) if darks else np.zeros((columns.shape[0], 0),
                                                         dtype=complex)


def dark_states(group, removal, method="determinant", proj_tol=1e-12,
                basis=None):
    """Dark vectors hosted by one degenerate group.

    If the removal state has no component in the group span, every group
    vector is dark; otherwise the group contributes g-1 vectors, built
    either by the recursive determinant ("determinant") or as an
    orthonormal basis of the complement of the projected removal state
    ("complement").  Both span the same subspace.
    """
    vec_r = removal.amplitudes if isinstance(removal, StateVector) else removal
    vec_r = np.asarray(vec_r, dtype=complex)
    columns = group.vectors
    a = vec_r.conj() @ columns
    dim = columns.shape[0]
    if basis is None:
        basis = BasisEncoding.generic(dim)
    if np.linalg.norm(a) < proj_tol:
        vectors = columns.astype(complex)
    elif method == "determinant":
        vectors = _determinant_darks(columns, a)
    elif method == "complement":
        null = sla.null_space(a[None, :])
        vectors = np.column_stack(
            [_canonical_phase(v) for v in (columns @ null).T]
        ) if null.shape[1] else np.zeros((dim, 0), dtype=complex)
    else:
        raise ValidationError(f"unknown dark-state method {method!r}")
    k = vectors.shape[1]
    return DarkSubspace(
        basis=basis,
        vectors=vectors,
        phases=np.full(k, group.phase, dtype=complex),
        members=tuple(group.members for _ in range(k)),
    )


def dark_subspace(setup, method="determinant", tol=None, proj_tol=1e-12):
    """All dark states of a setup, concatenated over degenerate groups.

    Vectors are expressed in the engine eigenbasis (for the tower engine
    that is the tower basis itself).
    """
    groups = degeneracy_groups(setup, tol)
    basis = setup.basis if setup.engine == "tower" \
        else BasisEncoding.generic(setup.dimension)
    parts = [
        dark_states(g, setup.removal_eig, method, proj_tol, basis)
        for g in groups
    ]
    parts = [p for p in parts if p.count]
    if not parts:
        return DarkSubspace(basis, np.zeros((setup.dimension, 0), dtype=complex),
                            np.zeros(0, dtype=complex), ())
    return DarkSubspace(
        basis=basis,
        vectors=np.concatenate([p.vectors for p in parts], axis=1),
        phases=np.concatenate([p.phases for p in parts]),
        members=tuple(m for p in parts for m in p.members),
    )


def dark_projection(setup, vec, tol=None, proj_tol=1e-12):
    """Project engine-frame coordinates onto the dark subspace implicitly.

    Within each degenerate eigenphase group the dark part is the
    complement of the normalized removal component, so the projection
    only needs the group index sets.  Unlike dark_subspace this never
    materializes a dark basis, which keeps the full engine at L = 10
    (dimension ~3e4) inside a few hundred MB.
    """
    tol = setup.phase_tol if tol is None else tol
    vec = np.asarray(vec, dtype=complex)
    if vec.shape != (setup.dimension,):
        raise ValidationError("dark projection expects engine-frame coordinates")
    out = vec.copy()
    angles = np.angle(setup.phases)
    removal = setup.removal_eig
    for members in _cluster_angles(angles, tol):
        a = removal[members]
        na = float(np.linalg.norm(a))
        if na < proj_tol:
            continue                       # zero-overlap group: fully dark
        a = a / na
        out[members] -= a * (a.conj() @ vec[members])
    return out


def long_time_state(dark, state, n):
    """Asymptotic filtered state after n periods, normalized.

    The bright components are gone; what remains is the initial state's
    dark projection with each vector rotated by its eigenphase to the
    n-th power.
    """
    vec = state.amplitudes if isinstance(state, StateVector) else state
    ov = dark.overlaps(vec)
    if dark.count == 0 or float(np.max(np.abs(ov))) < 1e-14:
        raise NumericsError(
            "state has no dark component: filtration depletes everything"
        )
    out = dark.vectors @ (dark.phases**n * ov)
    return StateVector(dark.basis, out / np.linalg.norm(out))


@dataclass
class RotatingTarget:
    """Target state t(n) = sum_j w_j exp(-i n alpha_j) |c_j>, normalized.

    Captures targets that rotate rigidly inside the dark subspace, e.g.
    the breathing cat state whose two components beat at frequency 2h.
    """

    components: list         # StateVectors in the setup input basis
    weights: np.ndarray
    angles: np.ndarray       # per-step phase advance of each component

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=complex)
        self.angles = np.asarray(self.angles, dtype=float)
        if not (len(self.components) == self.weights.size == self.angles.size):
            raise ValidationError("components, weights, angles must align")

    @classmethod
    def static(cls, state):
        return cls([state], np.ones(1), np.zeros(1))

    @classmethod
    def from_dark_subspace(cls, dark, state):
        """The long-time prediction as a rotating target."""
        ov = dark.overlaps(state)
        keep = np.abs(ov) > 1e-14
        if not np.any(keep):
            raise NumericsError("state has no dark component")
        comps = [dark.state(int(k)) for k in np.nonzero(keep)[0]]
        w = ov[keep]
        return cls(comps, w / np.linalg.norm(w), -np.angle(dark.phases[keep]))

    def at(self, n):
        """Explicit normalized target after n periods (for inspection)."""
        acc = sum(
            w * np.exp(-1j * n * al) * np.asarray(
                c.amplitudes if isinstance(c, StateVector) else c
            )
            for w, al, c in zip(self.weights, self.angles, self.components)
        )
        return acc / np.linalg.norm(acc)


@dataclass
class Trajectory:
    """Recorded protocol run: everything is reported normalized.

    survival[n] is the squared norm of the unnormalized F^n psi0 (the
    probability of n consecutive non-detections); q[n] the fidelity to
    the target; string values are sampled every string_every steps.
    """

    steps: np.ndarray
    survival: np.ndarray
    q: np.ndarray | None
    overlaps: np.ndarray | None          # (n+1, k) probe overlaps with F^n psi0
    string_steps: np.ndarray | None
    string: np.ndarray | None
    checkpoints: dict
    depleted: bool
    backend: str
    setup: FiltrationSetup

    def __post_init__(self):
        rise = float(np.max(np.diff(self.survival), initial=-np.inf))
        if rise > 1e-12:
            raise NumericsError(f"survival weight increased by {rise:.3e}")
        if self.q is not None:
            top = float(np.max(self.q, initial=0.0))
            if top > 1.0 + 1e-10 or float(np.min(self.q, initial=0.0)) < -1e-12:
                raise NumericsError(f"fidelity left [0, 1]: max {top}")

    @property
    def final_survival(self):
        return float(self.survival[-1])


def run_filtration(setup, initial, n_steps, target=None, string_every=1,
                   checkpoints=(), chunk_size=None):
    """Iterate the filtration operator and record observables.

    The state is propagated unnormalized in the eigenbasis; survival and
    probe overlaps are recorded at every step (including n=0), string
    expectations at the requested stride.  Iteration stops early if the
    survival weight underflows (depleted flag).
    """
    if not isinstance(n_steps, (int, np.integer)) or n_steps < 0:
        raise ValidationError("n_steps must be a non-negative integer")
    psi = setup.to_eigen(initial)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValidationError("initial state must have unit norm")
    dim = setup.dimension
    rot = None
    if target is not None:
        rot = target if isinstance(target, RotatingTarget) \
            else RotatingTarget.static(target)
        probes = np.array([setup.to_eigen(c) for c in rot.components])
        gram = probes.conj() @ probes.T
    want_string = setup.supports_string and string_every and string_every > 0
    ckpt_wanted = set(int(c) for c in checkpoints)

    total = n_steps + 1
    survival = np.empty(total)
    survival[0] = float(np.vdot(psi, psi).real)
    overlaps = None
    if rot is not None:
        overlaps = np.empty((total, probes.shape[0]), dtype=complex)
        overlaps[0] = probes.conj() @ psi
    s_steps, s_vals = [], []
    if want_string:
        s_steps.append(0)
        s_vals.append(setup.string_rows(psi[None, :])[0] / survival[0])
    ckpts = {}
    if 0 in ckpt_wanted:
        ckpts[0] = StateVector(setup.basis,
                               setup.from_eigen(psi / np.linalg.norm(psi)))

    phases = setup.phases
    removal = setup.removal_eig
    psi = np.ascontiguousarray(psi)
    chunk = chunk_size or min(max(n_steps, 1), max(1, 4_000_000 // max(dim, 1)))
    done = 0
    depleted = False
    while done < n_steps and not depleted:
        m = min(chunk, n_steps - done)
        history = np.empty((m, dim), dtype=complex)
        surv_chunk = np.empty(m)
        taken = _kernels.iterate_chunk(psi, phases, removal, history, surv_chunk)
        if taken < m:
            depleted = True
            history = history[:taken]
            surv_chunk = surv_chunk[:taken]
        lo, hi = done + 1, done + 1 + taken
        survival[lo:hi] = surv_chunk
        if overlaps is not None:
            overlaps[lo:hi] = history @ probes.conj().T
        if want_string:
            local = np.arange(lo, hi)
            sel = np.nonzero(local % string_every == 0)[0]
            if sel.size:
                vals = setup.string_rows(history[sel]) / surv_chunk[sel]
                s_steps.extend(int(s) for s in local[sel])
                s_vals.extend(vals)
        for n in sorted(ckpt_wanted):
            if lo <= n < hi:
                row = history[n - lo]
                ckpts[n] = StateVector(
                    setup.basis, setup.from_eigen(row / np.linalg.norm(row))
                )
        done += taken

    count = done + 1
    steps = np.arange(count)
    survival = survival[:count]
    q = None
    if rot is not None:
        overlaps = overlaps[:count]
        coef = rot.weights[None, :] * np.exp(
            -1j * np.outer(steps, rot.angles)
        )
        numer = np.abs(np.einsum("nj,nj->n", coef.conj(), overlaps)) ** 2
        tnorm = np.einsum("nj,jk,nk->n", coef.conj(), gram, coef).real
        q = numer / (tnorm * survival)
    return Trajectory(
        steps=steps,
        survival=survival,
        q=q,
        overlaps=overlaps,
        string_steps=np.array(s_steps, dtype=np.int64) if want_string else None,
        string=np.array(s_vals, dtype=complex) if want_string else None,
        checkpoints=ckpts,
        depleted=depleted,
        backend=_kernels.BACKEND,
        setup=setup,
    )


@dataclass
class FiltrationTime:
    """Fidelity series with the first threshold crossing."""

    q: np.ndarray
    n_eps: int | None
    reached: bool
    max_q: float


def filtration_time(trajectory, eps):
    """Smallest n with Q_n >= 1 - eps, or the best Q attained."""
    if trajectory.q is None:
        raise ValidationError("trajectory was not recorded against a target")
    if not 0.0 < eps <= 1.0:
        raise ValidationError("eps must lie in (0, 1]")
    hits = np.nonzero(trajectory.q >= 1.0 - eps)[0]
    if hits.size:
        return FiltrationTime(trajectory.q, int(trajectory.steps[hits[0]]),
                              True, float(np.max(trajectory.q)))
    return FiltrationTime(trajectory.q, None, False,
                          float(np.max(trajectory.q, initial=0.0)))


@dataclass
class FiltrationSpectrum:
    """Full non-normal eigensystem of F with dark/bright classification."""

    values: np.ndarray
    right: np.ndarray            # columns, unit 2-norm
    left: np.ndarray             # columns a with a^H F = zeta a^H
    eta: np.ndarray              # <zeta_l|psi0> / <zeta_l|zeta_r>
    kinds: list                  # "dark" | "bright" | "trivial-zero"
    min_condition: float         # smallest left-right alignment |<l|r>|
    degraded: bool
    recon_residual: float

    def select(self, kind):
        idx = [i for i, k in enumerate(self.kinds) if k == kind]
        return np.array(idx, dtype=int)


def spectral_decomposition(setup, initial, dark_tol=1e-8, zero_tol=1e-12,
                           cond_tol=1e-8, check_steps=50):
    """Dense eigendecomposition of F = (1 - |r><r|) U in the eigenframe.

    Returns eigenvalues with left/right vectors and the expansion
    coefficients eta of the initial state, verified by re-summing the
    first check_steps of the trajectory.  Analysis only: propagation
    always goes through run_filtration.
    """
    dim = setup.dimension
    if dim > SPECTRUM_CAP:
        raise ValidationError(
            f"dimension {dim} too large for dense non-normal analysis"
        )
    psi0 = setup.to_eigen(initial)
    r = setup.removal_eig
    fmat = np.diag(setup.phases).astype(complex)
    fmat -= np.outer(r, r.conj() * setup.phases)
    values, vl, vr = sla.eig(fmat, left=True, right=True)
    align = np.abs(np.einsum("ij,ij->j", vl.conj(), vr))
    min_cond = float(np.min(align))
    degraded = min_cond < cond_tol
    denom = np.einsum("ij,ij->j", vl.conj(), vr)
    eta = (vl.conj().T @ psi0) / denom
    kinds = []
    for z in values:
        mod = abs(z)
        if mod > 1.0 - dark_tol:
            kinds.append("dark")
        elif mod < zero_tol:
            kinds.append("trivial-zero")
        else:
            kinds.append("bright")
    resid = 0.0
    if check_steps > 0:
        direct = psi0.copy()
        scaled = vr * eta
        for n in range(1, check_steps + 1):
            direct = setup.phases * direct
            direct -= r * np.vdot(r, direct)
            recon = scaled @ values**n
            resid = max(resid, float(np.linalg.norm(recon - direct)))
        allowance = 1e-6 if not degraded else 1e-6 / max(min_cond, 1e-30)
        if resid > allowance:
            raise NumericsError(
                f"spectral reconstruction residual {resid:.3e} exceeds "
                f"tolerance {allowance:.3e}"
            )
    return FiltrationSpectrum(values, vr, vl, eta, kinds, min_cond,
                              degraded, resid)
