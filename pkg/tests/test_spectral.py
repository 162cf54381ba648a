"""Charge picture, secular roots, and filtration-time estimates."""

import math

import numpy as np
import pytest

from darkfilter.errors import NumericsError, ValidationError
from darkfilter.filtration import reduced_setup, spectral_decomposition
from darkfilter.spectral import (
    BrightSpectrum,
    ChargePicture,
    bright_secular_roots,
    charge_picture,
    convex_hull_violation,
    dominant_bright,
    scaling_predictions,
)
from darkfilter.spin_model import ChainParams


def test_charge_picture_binomial_weights():
    # h tau = pi/3 folds the L=6 ladder mod 3; weights sum binomials
    setup, _ = reduced_setup(ChainParams(L=6), math.pi / 3.0, 0.0)
    cp = charge_picture(setup)
    assert cp.w == 3
    want = sorted([22.0 / 64.0, 21.0 / 64.0, 21.0 / 64.0])
    assert np.allclose(sorted(cp.weights), want, atol=1e-14)
    assert abs(float(np.sum(cp.weights)) - 1.0) < 1e-14
    # charge positions are the actual eigenphases of U(tau)
    for pos in cp.positions():
        assert np.min(np.abs(setup.phases - pos)) < 1e-12


def test_charge_picture_validates_weights():
    with pytest.raises(NumericsError):
        ChargePicture(np.array([0.0, 1.0]), np.array([0.4, 0.4]))
    with pytest.raises(ValidationError):
        ChargePicture(np.array([0.0, 1.0]), np.array([1.0]))


def test_two_charge_closed_form():
    # for two charges the equilibrium sits at the weighted swap point
    a1, a2, p1 = 0.4, 2.1, 0.3
    cp = ChargePicture(np.array([a1, a2]), np.array([p1, 1.0 - p1]))
    bs = bright_secular_roots(cp)
    assert bs.count == 1
    want = p1 * np.exp(-1j * a2) + (1.0 - p1) * np.exp(-1j * a1)
    assert abs(bs.roots[0] - want) < 1e-12


def test_single_charge_has_no_bright_root():
    cp = ChargePicture(np.array([0.7]), np.array([1.0]))
    bs = bright_secular_roots(cp)
    assert bs.count == 0
    with pytest.raises(ValidationError):
        dominant_bright(bs)


def test_opposite_equal_charges_give_trivial_zero():
    cp = ChargePicture(np.array([0.0, math.pi]), np.array([0.5, 0.5]))
    bs = bright_secular_roots(cp)
    assert bs.count == 1
    assert abs(bs.roots[0]) < 1e-14


@pytest.mark.parametrize("h_tau_q", [3, 4, 6])
def test_secular_roots_match_dense_bright_eigenvalues(h_tau_q):
    setup, psi0 = reduced_setup(ChainParams(L=6), math.pi / h_tau_q, 0.2)
    cp = charge_picture(setup)
    secular = bright_secular_roots(cp)
    assert secular.count == cp.w - 1
    dense = BrightSpectrum.from_filtration_spectrum(
        spectral_decomposition(setup, psi0)
    )
    assert dense.count == secular.count
    # near-tied moduli sort unstably across provenances; match by angle
    a = dense.roots[np.argsort(np.angle(dense.roots))]
    b = secular.roots[np.argsort(np.angle(secular.roots))]
    assert np.max(np.abs(a - b)) < 1e-8


def test_convex_hull_violation_cases():
    square = np.exp(-1j * np.array([0.0, 0.5, 1.0, 1.5]) * math.pi)
    assert convex_hull_violation(0.0 + 0.0j, square) < 1e-12
    assert convex_hull_violation(0.5 + 0.2j, square) < 1e-12
    assert convex_hull_violation(1.2 + 0.0j, square) == pytest.approx(
        0.2 / math.sqrt(2.0)
    )
    # segment and point degeneracies
    pair = np.array([1.0 + 0.0j, -1.0 + 0.0j])
    assert convex_hull_violation(0.3 + 0.0j, pair) < 1e-12
    assert convex_hull_violation(0.3 + 0.4j, pair) == pytest.approx(0.4)
    single = np.array([1.0 + 0.0j])
    assert convex_hull_violation(1.0 + 0.0j, single) < 1e-12
    assert convex_hull_violation(0.0 + 0.0j, single) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        convex_hull_violation(0.0 + 0.0j, np.array([]))


def test_bright_spectrum_ordering_and_tie():
    roots = np.array([0.5 + 0.1j, 0.2 + 0.0j, 0.5 - 0.1j])
    bs = BrightSpectrum.from_roots(roots, "secular")
    assert bs.tie
    # ties resolve to the smallest angle in [0, 2 pi)
    assert bs.dominant == pytest.approx(0.5 + 0.1j)
    assert np.all(np.abs(bs.roots[:2]) >= np.abs(bs.roots[2]))
    picked = dominant_bright(bs)
    assert picked.tie and picked.zeta == bs.dominant


def test_untied_dominant():
    bs = BrightSpectrum.from_roots(np.array([0.3 + 0.0j, -0.6 + 0.0j]), "dense-F")
    assert not bs.tie
    assert bs.dominant == pytest.approx(-0.6 + 0.0j)


def test_scaling_predictions_frozen_values():
    ortho = scaling_predictions(6, 2.0 * math.pi / 6.0, 0.01, "tar1-orthogonal")
    assert ortho == pytest.approx(17.058479080576390, rel=1e-12)
    general = scaling_predictions(8, math.pi / 16.0, 0.01, "tar1-general")
    assert general == pytest.approx(147.365445951618938, rel=1e-12)
    tar2 = scaling_predictions(14, 2.0 * math.pi / 13.0, 0.01, "tar2")
    assert tar2 == pytest.approx(1559.133446192063957, rel=1e-12)


def test_scaling_predictions_guard_rails():
    with pytest.raises(ValidationError):
        scaling_predictions(8, math.pi / 8.0, 0.01, "tar1-general")  # degenerate
    with pytest.raises(ValidationError):
        scaling_predictions(8, math.pi / 7.0, 0.01, "tar2")          # pole
    with pytest.raises(ValidationError):
        scaling_predictions(8, 0.1, 0.0, "tar1-general")
    with pytest.raises(ValidationError):
        scaling_predictions(1, 0.1, 0.01, "tar1-general")
    with pytest.raises(ValidationError):
        scaling_predictions(8, 0.1, 0.01, "tar9")


def test_charge_picture_requires_a_setup():
    with pytest.raises(ValidationError):
        charge_picture(np.eye(3))
