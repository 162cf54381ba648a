"""Bright-eigenvalue secular equation, charge picture, scaling laws.

Because the removal projector is rank one, the non-unimodular spectrum
of F is fixed by very little data: the distinct eigenphase angles
theta_l of U(tau) and the removal weights p_l they carry.  The bright
eigenvalues solve

    sum_l p_l / (exp(-i theta_l) - zeta) = 0,

a degree w-1 polynomial condition for w charged phases.  Read as 2D
electrostatics, charges p_l sit on the unit circle and the bright
eigenvalues are the force-equilibrium points, which places them inside
the convex hull of the charge positions.

The dominant bright modulus sets the filtration time; the closed-form
asymptotics for the protocol's two targets are evaluated here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from darkfilter.errors import NumericsError, ValidationError
from darkfilter.filtration import FiltrationSetup, _cluster_angles

# Weights below this are structural zeros of the removal decomposition:
# the group hosts dark directions only and exerts no force.
ZERO_WEIGHT = 1e-14


@dataclass(frozen=True)
class ChargePicture:
    """Unit-circle charges of the bright secular equation.

    angles holds theta_l = E_l tau mod 2pi per degenerate group (charge
    position exp(-i theta_l)); weights the summed removal overlaps p_l.
    Zero-weight groups are retained for dark accounting but do not count
    toward w.
    """

    angles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        object.__setattr__(self, "weights",
                           np.asarray(self.weights, dtype=float))
        if self.angles.shape != self.weights.shape:
            raise ValidationError("angles and weights must align")
        if float(np.min(self.weights, initial=0.0)) < -1e-12:
            raise NumericsError("negative removal weight")
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > 1e-10:
            raise NumericsError(f"removal weights sum to {total}, not 1")

    @property
    def w(self):
        """Number of charged (weight-carrying) phases."""
        return int(np.count_nonzero(self.weights > ZERO_WEIGHT))

    @property
    def charged(self):
        keep = self.weights > ZERO_WEIGHT
        return self.angles[keep], self.weights[keep]

    def positions(self):
        return np.exp(-1j * self.angles)


def charge_picture(setup, tol=None):
    """Cluster the engine's eigenphases and sum removal weight per group."""
    if not isinstance(setup, FiltrationSetup):
        raise ValidationError("charge_picture expects a FiltrationSetup")
    tol = setup.phase_tol if tol is None else tol
    phase_angles = np.angle(setup.phases)
    weight = np.abs(setup.removal_eig) ** 2
    angles = []
    weights = []
    for members in _cluster_angles(phase_angles, tol):
        rep = phase_angles[members[0]]
        angles.append((-rep) % (2.0 * math.pi))
        weights.append(float(np.sum(weight[members])))
    order = np.argsort(angles, kind="stable")
    return ChargePicture(np.asarray(angles)[order], np.asarray(weights)[order])


def convex_hull_violation(point, vertices, slack=0.0):
    """How far a complex point sits outside the hull of complex vertices.

    Returns 0.0 for containment (within slack).  Vertices on the unit
    circle are hull vertices in angular order, so the polygon test is an
    edge-by-edge cross product; one and two vertices degenerate to a
    point and a segment.
    """
    verts = np.asarray(vertices, dtype=complex)
    if verts.size == 0:
        raise ValidationError("hull needs at least one vertex")
    if verts.size == 1:
        return max(0.0, abs(point - verts[0]) - slack)
    if verts.size == 2:
        a, b = verts
        seg = b - a
        t = np.clip(((point - a) * np.conj(seg)).real / abs(seg) ** 2, 0.0, 1.0)
        return max(0.0, abs(point - (a + t * seg)) - slack)
    order = np.argsort(np.angle(verts))
    verts = verts[order]
    worst = 0.0
    for i in range(verts.size):
        a = verts[i]
        b = verts[(i + 1) % verts.size]
        edge = b - a
        # positive cross product = point on the interior (left) side
        cross = (np.conj(edge) * (point - a)).imag
        worst = max(worst, -(cross / max(abs(edge), 1e-300)) - slack)
    return max(0.0, worst)


@dataclass(frozen=True)
class BrightSpectrum:
    """Bright eigenvalues with their dominant member.

    Roots are sorted by descending modulus, ties by ascending angle in
    [0, 2pi).  provenance records whether they came from the secular
    polynomial or a dense eigendecomposition of F.
    """

    roots: np.ndarray
    dominant: complex | None
    tie: bool
    provenance: str

    @property
    def count(self):
        return self.roots.shape[0]

    @classmethod
    def from_roots(cls, roots, provenance):
        roots = np.asarray(roots, dtype=complex)
        order = np.lexsort((np.angle(roots) % (2.0 * math.pi),
                            -np.abs(roots)))
        roots = roots[order]
        if roots.size == 0:
            return cls(roots, None, False, provenance)
        mods = np.abs(roots)
        near = np.nonzero(mods > mods[0] - 1e-12)[0]
        tied = near.size > 1
        # among near-tied moduli the float sort is provenance-dependent;
        # resolve the dominant member by angle
        top = near[np.argmin(np.angle(roots[near]) % (2.0 * math.pi))]
        return cls(roots, complex(roots[top]), bool(tied), provenance)

    @classmethod
    def from_filtration_spectrum(cls, spectrum):
        """Bright subset of a dense non-normal eigendecomposition."""
        idx = spectrum.select("bright")
        return cls.from_roots(spectrum.values[idx], "dense-F")


def bright_secular_roots(cp, residual_tol=1e-8, hull_slack=1e-10):
    """Solve the secular equation for all bright eigenvalues.

    Clears denominators into the degree w-1 polynomial
    sum_l p_l prod_{m != l} (z_m - zeta) and takes companion-matrix
    roots; each root is then verified against the force-balance residual
    and hull containment.
    """
    angles, weights = cp.charged
    w = angles.size
    if w == 0:
        raise ValidationError("charge picture carries no weight")
    poles = np.exp(-1j * angles)
    if w == 1:
        return BrightSpectrum.from_roots(np.zeros(0, dtype=complex), "secular")
    coeffs = np.zeros(w, dtype=complex)
    for l in range(w):
        others = np.delete(poles, l)
        coeffs = coeffs + weights[l] * np.poly(others)
    roots = np.roots(coeffs)
    for z in roots:
        resid = abs(np.sum(weights / (poles - z)))
        if resid > residual_tol:
            raise NumericsError(
                f"secular root {z} violates force balance (residual {resid:.3e})"
            )
        excess = convex_hull_violation(z, poles, hull_slack)
        if excess > 0.0:
            raise NumericsError(
                f"secular root {z} lies {excess:.3e} outside the charge hull"
            )
    if roots.shape[0] != w - 1:
        raise NumericsError(
            f"expected {w - 1} bright roots, found {roots.shape[0]}"
        )
    return BrightSpectrum.from_roots(roots, "secular")


@dataclass(frozen=True)
class DominantBright:
    zeta: complex
    tie: bool


def dominant_bright(bs):
    """Largest-modulus bright eigenvalue; ties resolved by smallest angle."""
    if bs.count == 0:
        raise ValidationError("empty bright spectrum has no dominant eigenvalue")
    return DominantBright(complex(bs.dominant), bs.tie)


def scaling_predictions(L, theta0, eps, variant):
    """Closed-form filtration-time estimates for the two protocol targets.

    Variants: "tar1-general" for arbitrary angle, "tar1-orthogonal" at
    the special angle where the initial state loses its overlap with the
    odd cat combination, "tar2" for the rotating two-component target.
    Leading-order asymptotics; simulation is the ground truth they are
    compared against.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)")
    if L < 2:
        raise ValidationError("L must be at least 2")
    sign = (-1.0) ** L
    if variant == "tar1-general":
        top = 1.0 + sign * math.cos(L * theta0)
        bottom = 1.0 - sign * math.cos(L * theta0)
        if abs(top) < 1e-9:
            raise ValidationError(
                "orthogonality angle: the general estimate degenerates, "
                "use variant 'tar1-orthogonal'"
            )
        value = 2.0**L / 8.0 * math.log(top / bottom / eps)
    elif variant == "tar1-orthogonal":
        value = 2.0**L / (4.0 * L) * math.log(L / eps)
    elif variant == "tar2":
        denom = 1.0 + sign * math.cos((L - 1) * theta0)
        if abs(denom) < 1e-9:
            raise ValidationError(
                "theta0 sits at a pole of the tar2 estimate (no dark overlap)"
            )
        num = 1.0 + L**2 - 2.0 * sign * L * math.cos((L - 1) * theta0)
        value = 2.0**L / (4.0 * (L + 1.0)) * math.log(
            num / (2.0 * L * denom) / eps
        )
    else:
        raise ValidationError(f"unknown scaling variant {variant!r}")
    return max(0.0, value)
