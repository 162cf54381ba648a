"""Preset, reproducible experiment drivers.

Each driver consumes an ExperimentSpec (or a few plain arguments),
runs the protocol, and writes CSV artifacts plus a JSON metadata
sidecar into an output directory.  Re-running with the same spec and
seed reproduces the CSV bodies byte for byte; the sidecar additionally
records wall time, code version, and the RNG family, so only the data
files are expected to compare equal.

Randomness (removal-state noise, the random-matrix benchmark) always
goes through a counter-based Philox generator keyed by an explicit
seed recorded in the metadata.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import string_parity_sign
from .errors import NumericsError, ValidationError
from .filtration import (RotatingTarget, dark_projection, dark_subspace,
                         full_setup, generic_setup, reduced_setup,
                         run_filtration, filtration_time,
                         spectral_decomposition)
from .output import SCHEMAS, emit_csv, ensure_dir, write_metadata
from .spectral import (bright_secular_roots, charge_picture, dominant_bright,
                       scaling_predictions)
from .spin_model import ChainParams, StateVector, build_hamiltonian, build_tower

RNG_FAMILY = "philox"

def tar1_resonance(L):
    # h*tau = pi/L glues the phases of the tower edges B_0, B_L
    return 1, L


def tar2_resonance(L):
    # h*tau = pi/(L-1) glues (B_0, B_{L-1}) and (B_1, B_L) pairwise
    return 1, L - 1


def orthogonality_angle(L):
    """Initial-state angle that cancels the dominant bright overlap.

    Solves (-1)^L cos(L theta0) = -1 with the smallest positive angle.
    """
    return math.pi / L if L % 2 == 0 else 2.0 * math.pi / L


def tar2_optimal_angle(L):
    # (-1)^L cos((L-1) theta0) = +1, smallest positive solution
    return 2.0 * math.pi / (L - 1) if L % 2 == 0 else math.pi / (L - 1)


def parity_angle(L):
    """Angle 2 pi/(L+1) where even and odd chain lengths scale apart."""
    return 2.0 * math.pi / (L + 1)


def general_angle(L):
    # L*theta0 = pi/2 keeps the L-dependence of the target overlap flat
    return math.pi / (2.0 * L)


THETA0_RULES = {
    "orthogonal": orthogonality_angle,
    "tar2-optimal": tar2_optimal_angle,
    "parity": parity_angle,
    "general": general_angle,
}


@dataclass(frozen=True)
class Perturbations:
    """Removal-state noise: psi_r mixed with lam * nu, nu seeded Gaussian."""

    lam: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.lam < 0.0 or not math.isfinite(self.lam):
            raise ValidationError("noise strength lam must be >= 0 and finite")
        if self.lam > 0.0 and self.seed is None:
            raise ValidationError("removal noise requires an explicit seed")


@dataclass(frozen=True)
class GoeBlock:
    """Random-matrix benchmark dimensions; seed fixed for reproducibility."""

    d_goe: int = 64
    seed: int = 23

    def __post_init__(self):
        if self.d_goe < 4:
            raise ValidationError("GOE dimension must be at least 4")


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully pinned description of one run.

    h*tau is kept as the integer pair (p, q) meaning pi*p/q so resonances
    stay exact; tau in seconds follows from the field h.
    """

    name: str
    params: ChainParams
    theta0: float
    h_tau: tuple[int, int]
    n_steps: int
    eps: float = 0.01
    engine: str = "tower"
    target: str | None = None
    perturbations: Perturbations = field(default_factory=Perturbations)
    goe: GoeBlock | None = None

    def __post_init__(self):
        p, q = self.h_tau
        if not (isinstance(p, int) and isinstance(q, int)) or p <= 0 or q <= 0:
            raise ValidationError("h_tau must be a pair of positive integers")
        if not isinstance(self.n_steps, int) or self.n_steps < 0:
            raise ValidationError("n_steps must be a non-negative integer")
        if not 0.0 < self.eps < 1.0:
            raise ValidationError("eps must lie in (0, 1)")
        if self.engine not in ("tower", "full"):
            raise ValidationError(f"unknown engine {self.engine!r}")
        if self.target not in (None, "tar1", "tar2"):
            raise ValidationError(f"unknown target {self.target!r}")
        if self.engine == "tower" and (self.params.J2 != 0.0
                                       or self.perturbations.lam != 0.0):
            raise ValidationError(
                "tower engine requires J2 = 0 and lam = 0; use engine='full'"
            )

    @property
    def h_tau_value(self):
        p, q = self.h_tau
        return math.pi * p / q

    @property
    def tau(self):
        if self.params.h == 0.0:
            raise ValidationError("tau undefined at h = 0")
        return self.h_tau_value / self.params.h


@dataclass(frozen=True)
class RunArtifacts:
    """File paths plus the metadata that went into the sidecar."""

    paths: dict
    metadata: dict


def document_of(spec: ExperimentSpec) -> dict:
    """Plain-JSON echo of a spec; parse_config inverts it."""
    doc = {
        "name": spec.name,
        "L": spec.params.L,
        "J": spec.params.J,
        "h": spec.params.h,
        "D": spec.params.D,
        "J2": spec.params.J2,
        "J3": spec.params.J3,
        "theta0": spec.theta0,
        "h_tau": [spec.h_tau[0], spec.h_tau[1]],
        "n_steps": spec.n_steps,
        "eps": spec.eps,
        "engine": spec.engine,
    }
    if spec.target is not None:
        doc["target"] = spec.target
    if spec.perturbations.lam != 0.0 or spec.perturbations.seed is not None:
        pert = {"lambda": spec.perturbations.lam}
        if spec.perturbations.seed is not None:
            pert["seed"] = spec.perturbations.seed
        doc["perturbations"] = pert
    if spec.goe is not None:
        doc["goe"] = {"D_goe": spec.goe.d_goe, "seed": spec.goe.seed}
    return doc


def _finish(out_dir, name, echo, files, extra, t0):
    from . import __version__
    meta = {
        "experiment": name,
        "spec": echo,
        "code_version": __version__,
        "rng": RNG_FAMILY,
        "wall_time_s": round(time.time() - t0, 3),
    }
    meta.update(extra)
    path = os.path.join(out_dir, "metadata.json")
    write_metadata(path, meta)
    files = dict(files)
    files["metadata"] = path
    return RunArtifacts(paths=files, metadata=meta)


def noise_vector(dim, seed):
    """Unit-norm complex Gaussian vector from a counter-based generator."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def _mixed_removal(params, theta0, pert):
    from .spin_model import protocol_states
    psi_r, _ = protocol_states(params, theta0)
    nu = noise_vector(psi_r.amplitudes.shape[0], pert.seed)
    vec = psi_r.amplitudes + pert.lam * nu
    return StateVector(psi_r.basis, vec / np.linalg.norm(vec))


def build_setup(spec: ExperimentSpec):
    """Engine dispatch: returns (setup, initial state)."""
    if spec.engine == "tower":
        return reduced_setup(spec.params, spec.tau, spec.theta0)
    removal = None
    if spec.perturbations.lam > 0.0:
        removal = _mixed_removal(spec.params, spec.theta0,
                                 spec.perturbations)
    return full_setup(spec.params, spec.tau, spec.theta0, removal=removal)


def _tower_vec(L, entries):
    vec = np.zeros(L + 1, dtype=complex)
    for n, c in entries:
        vec[n] = c
    return vec


def tar1_components(L):
    """GHZ-type dark target: (B_L - (-1)^L B_0) / sqrt(2), tower coords."""
    s = (-1.0) ** L
    return [_tower_vec(L, [(L, 1.0 / math.sqrt(2)), (0, -s / math.sqrt(2))])]


def tar2_components(L):
    """The two edge-pair dark states behind the rotating cat target."""
    s = (-1.0) ** L
    root = math.sqrt(L + 1)
    phi1 = _tower_vec(L, [(0, -s * math.sqrt(L) / root), (L - 1, -1.0 / root)])
    phi2 = _tower_vec(L, [(1, s / root), (L, math.sqrt(L) / root)])
    return [phi1, phi2]


def _embed_components(setup, components):
    """Tower-coordinate targets lifted to the engine's state basis."""
    if setup.engine == "tower":
        return components
    tower = build_tower(ChainParams(L=setup.params.L))
    return [tower.states.T @ np.asarray(c) for c in components]


def make_target(setup, which, theta0=None):
    """Static GHZ target (tar1) or rotating two-component target (tar2)."""
    L = setup.params.L
    theta0 = setup.theta0 if theta0 is None else theta0
    if which == "tar1":
        comps = _embed_components(setup, tar1_components(L))
        return RotatingTarget.static(comps[0])
    if which == "tar2":
        comps = _embed_components(setup, tar2_components(L))
        weights = np.array([np.exp(1j * theta0), -1.0]) / math.sqrt(2)
        angles = np.array([0.0, 2.0 * setup.params.h * setup.tau])
        return RotatingTarget(components=comps, weights=weights, angles=angles)
    raise ValidationError(f"unknown target {which!r}")


def _check_target_reachable(setup, initial, target):
    """Abort early when the initial state cannot reach the target."""
    psi = setup.to_eigen(initial)
    t0 = setup.to_eigen(target.at(0))
    if abs(np.vdot(t0, psi)) > 1e-12:
        return
    listing = "skipped (dimension too large)"
    if setup.dimension <= 4096:
        dark = dark_subspace(setup)
        ov = dark.overlaps(psi)
        listing = ", ".join(
            f"{m}:{abs(o):.3e}" for m, o in zip(dark.members, ov)
        ) or "none"
    raise ValidationError(
        "initial state has zero overlap with the target; "
        f"dark overlaps: {listing}"
    )


def _trajectory_rows(traj):
    smap = {}
    if traj.string_steps is not None:
        smap = {int(n): complex(v)
                for n, v in zip(traj.string_steps, traj.string)}
    rows = []
    for i, n in enumerate(traj.steps):
        s = smap.get(int(n))
        rows.append((
            int(n),
            float(traj.survival[i]),
            float(traj.q[i]) if traj.q is not None else None,
            None if s is None else float(s.real),
            None if s is None else float(s.imag),
        ))
    return rows


def _require_htau(spec, expected, label):
    p, q = spec.h_tau
    g = math.gcd(p, q)
    if (p // g, q // g) != expected:
        raise ValidationError(
            f"{label} requires h*tau = pi*{expected[0]}/{expected[1]}, "
            f"got pi*{p}/{q}"
        )


def run_tar1(spec: ExperimentSpec, out_dir) -> RunArtifacts:
    """GHZ preparation run: trajectory CSV plus the extracted n_eps."""
    t0 = time.time()
    _require_htau(spec, (1, spec.params.L), "tar1")
    ensure_dir(out_dir)
    setup, initial = build_setup(spec)
    target = make_target(setup, "tar1")
    _check_target_reachable(setup, initial, target)
    traj = run_filtration(setup, initial, spec.n_steps, target=target,
                          string_every=1)
    ft = filtration_time(traj, spec.eps)
    path = emit_csv(os.path.join(out_dir, "trajectory.csv"),
                    SCHEMAS["trajectory"], _trajectory_rows(traj))
    extra = {
        "target": "tar1",
        "engine": setup.engine,
        "backend": traj.backend,
        "n_eps": ft.n_eps,
        "reached": ft.reached,
        "q_final": float(traj.q[-1]),
        "max_q": ft.max_q,
    }
    return _finish(out_dir, "run_tar1", document_of(spec),
                   {"trajectory": path}, extra, t0)


def string_law_deviation(traj, theta0, h_tau_value, L, n_min=400):
    """Largest gap between |<prod X>| and |cos(theta0 + 2 n h tau)|.

    Also reports the signed-law deviation including the global parity
    sign (-1)^{L(L+1)/2} (-1)^L of the flip on the tower edges.
    """
    if traj.string is None:
        raise ValidationError("trajectory carries no string expectation")
    steps = traj.string_steps
    sel = steps >= n_min
    if not np.any(sel):
        raise ValidationError(f"no string samples at n >= {n_min}")
    n = steps[sel]
    vals = traj.string[sel]
    law = np.cos(theta0 + 2.0 * n * h_tau_value)
    signed = string_parity_sign(L) * (-1.0) ** L * law
    dev_abs = float(np.max(np.abs(np.abs(vals) - np.abs(law))))
    dev_signed = float(np.max(np.abs(vals - signed)))
    return dev_abs, dev_signed


def run_tar2(spec: ExperimentSpec, out_dir,
             string_check_from=400) -> RunArtifacts:
    """Rotating cat-state run; verifies the string-oscillation law."""
    t0 = time.time()
    L = spec.params.L
    _require_htau(spec, (1, L - 1), "tar2")
    ensure_dir(out_dir)
    setup, initial = build_setup(spec)
    target = make_target(setup, "tar2")
    _check_target_reachable(setup, initial, target)
    traj = run_filtration(setup, initial, spec.n_steps, target=target,
                          string_every=1)
    ft = filtration_time(traj, spec.eps)
    extra = {
        "target": "tar2",
        "engine": setup.engine,
        "backend": traj.backend,
        "n_eps": ft.n_eps,
        "reached": ft.reached,
        "q_final": float(traj.q[-1]),
        "max_q": ft.max_q,
    }
    if spec.n_steps >= string_check_from:
        dev_abs, dev_signed = string_law_deviation(
            traj, spec.theta0, spec.h_tau_value, L, n_min=string_check_from
        )
        extra["string_dev_abs"] = dev_abs
        extra["string_dev_signed"] = dev_signed
        extra["string_check_from"] = string_check_from
    path = emit_csv(os.path.join(out_dir, "trajectory.csv"),
                    SCHEMAS["trajectory"], _trajectory_rows(traj))
    return _finish(out_dir, "run_tar2", document_of(spec),
                   {"trajectory": path}, extra, t0)


def _sweep_case(L, variant, theta0, eps, n_cap):
    """One point of the filtration-time sweep, tower engine."""
    params = ChainParams(L=L)
    if variant == "tar2":
        h_tau = tar2_resonance(L)
        which = "tar2"
    else:
        h_tau = tar1_resonance(L)
        which = "tar1"
    pred = scaling_predictions(L, theta0, eps, variant)
    budget = min(n_cap, int(math.ceil(5.0 * max(pred, 40.0))) + 200)
    spec = ExperimentSpec(name=f"sweep-L{L}", params=params, theta0=theta0,
                          h_tau=h_tau, n_steps=budget, eps=eps)
    setup, initial = build_setup(spec)
    target = make_target(setup, which)
    traj = run_filtration(setup, initial, budget, target=target,
                          string_every=0)
    ft = filtration_time(traj, eps)
    if not ft.reached:
        raise NumericsError(
            f"L={L} {variant}: Q never reached 1-eps within {budget} steps "
            f"(max {ft.max_q:.6f}); prediction {pred:.1f}"
        )
    return ft.n_eps, pred


def sweep_n_epsilon(L_values, theta0_rule, eps, variant,
                    out_dir, n_cap=2_000_000) -> RunArtifacts:
    """Filtration time vs chain length against the closed-form laws.

    theta0_rule is one of 'orthogonal', 'general', 'parity',
    'tar2-optimal'; variant selects the prediction family
    ('tar1-general', 'tar1-orthogonal', 'tar2').
    """
    t0 = time.time()
    if theta0_rule not in THETA0_RULES:
        raise ValidationError(
            f"unknown theta0 rule {theta0_rule!r}; "
            f"choose from {sorted(THETA0_RULES)}"
        )
    L_values = [int(L) for L in L_values]
    if not L_values:
        raise ValidationError("empty L range")
    if any(L < 2 for L in L_values):
        raise ValidationError("chain lengths must be >= 2")
    ensure_dir(out_dir)
    rule = THETA0_RULES[theta0_rule]
    rows = []
    results = []
    for L in L_values:
        theta0 = rule(L)
        n_sim, n_pred = _sweep_case(L, variant, theta0, eps, n_cap)
        rows.append((L, n_sim, n_pred, variant))
        results.append({"L": L, "theta0": theta0,
                        "n_eps_sim": n_sim, "n_eps_theory": n_pred})
    path = emit_csv(os.path.join(out_dir, "scaling.csv"),
                    SCHEMAS["scaling"], rows)
    extra = {
        "variant": variant,
        "theta0_rule": theta0_rule,
        "eps": eps,
        "points": results,
        "slope_log2": fit_slope_log2(rows),
    }
    echo = {"L_values": L_values, "theta0_rule": theta0_rule,
            "eps": eps, "variant": variant}
    return _finish(out_dir, "sweep_n_epsilon", echo,
                   {"scaling": path}, extra, t0)


def fit_slope_log2(rows):
    """Least-squares slope of log2(n_eps) against L."""
    L = np.array([r[0] for r in rows], dtype=float)
    n = np.array([r[1] for r in rows], dtype=float)
    if L.size < 2:
        return None
    return float(np.polyfit(L, np.log2(n), 1)[0])


# the resonance census at L=6 with the dark-state count each angle hosts
TABLE1_CASES = (
    ((1, 6), 1),
    ((1, 5), 2),
    ((1, 4), 3),
    ((1, 3), 4),
    ((2, 5), 2),
    ((1, 2), 5),
)


def group_label(members, index=None, total=1):
    """Bi-magnon composition label, e.g. (0;3;6) or (0;3;6)_1."""
    body = "(" + ";".join(str(m) for m in members) + ")"
    if total > 1 and index is not None:
        body += f"_{index + 1}"
    return body


def table1_scan(out_dir, L=6, theta0=math.pi / 7) -> RunArtifacts:
    """Dark-state census over the resonant angles of the L=6 tower.

    Emits one row per dark vector: the resonance (p, q), the composition
    label, and the long-time coefficient <Phi|psi0> normalized over the
    dark manifold.  A count mismatch is a numerical-invariant failure.
    """
    t0 = time.time()
    ensure_dir(out_dir)
    params = ChainParams(L=L)
    rows = []
    summary = []
    for (p, q), expected in TABLE1_CASES:
        tau = math.pi * p / (q * params.h)
        setup, initial = reduced_setup(params, tau, theta0)
        dark = dark_subspace(setup)
        if dark.count != expected:
            raise NumericsError(
                f"h*tau = pi*{p}/{q}: found {dark.count} dark states, "
                f"expected {expected}"
            )
        ov = dark.overlaps(setup.to_eigen(initial))
        norm = np.linalg.norm(ov)
        coeffs = ov / norm if norm > 0 else ov
        seen = {}
        labels = []
        for k in range(dark.count):
            members = dark.members[k]
            total = sum(1 for m in dark.members if m == members)
            labels.append(group_label(members, seen.get(members, 0), total))
            seen[members] = seen.get(members, 0) + 1
        for k in range(dark.count):
            rows.append((p, q, labels[k],
                         float(coeffs[k].real), float(coeffs[k].imag)))
        summary.append({"p": p, "q": q, "count": dark.count,
                        "labels": labels})
    path = emit_csv(os.path.join(out_dir, "table1.csv"),
                    ("p", "q", "label", "coeff_re", "coeff_im"), rows)
    extra = {"L": L, "theta0": theta0, "cases": summary}
    return _finish(out_dir, "table1_scan", {"L": L, "theta0": theta0},
                   {"table1": path}, extra, t0)


def detect_plateau(q, threshold=1e-5, smooth=5):
    """Longest window where the smoothed |dQ/dn| stays below threshold.

    Q is smoothed with a centered 5-point moving average before
    differencing.  Returns (start, end, height) in step units, or None
    when no window exists; end is exclusive and doubles as the exit time.
    """
    q = np.asarray(q, dtype=float)
    if q.size < smooth + 1:
        return None
    kernel = np.ones(smooth) / smooth
    smoothed = np.convolve(q, kernel, mode="valid")
    flat = np.abs(np.diff(smoothed)) < threshold
    best_len, best_start = 0, -1
    i = 0
    while i < flat.size:
        if flat[i]:
            j = i
            while j < flat.size and flat[j]:
                j += 1
            if j - i > best_len:
                best_len, best_start = j - i, i
            i = j
        else:
            i += 1
    if best_start < 0:
        return None
    # map smoothed-array positions back to the center of the stencil
    start = best_start + smooth // 2
    end = best_start + best_len + smooth // 2
    height = float(np.mean(q[start:end + 1]))
    return start, end, height


def perturbation_study(spec: ExperimentSpec, out_dir,
                       string_every=1) -> RunArtifacts:
    """Metastability under tower-breaking coupling and removal noise.

    Runs both targets with the spec's couplings and noise: tar1 at its
    own resonance and orthogonality angle, tar2 at its resonance and
    optimal angle.  Verifies that the edge tower states stay exact
    eigenstates of the perturbed chain, that the GHZ target stays inside
    the dark manifold, and records the plateau of the unstable target.
    """
    t0 = time.time()
    params = spec.params
    if params.L > 10:
        raise ValidationError("full engine capped at L = 10")
    ensure_dir(out_dir)
    ham = build_hamiltonian(params)
    tower = build_tower(ChainParams(L=params.L))
    edge_residuals = {}
    for n in (0, params.L):
        vec = tower.state(n).amplitudes
        resid = ham.apply(vec) - params.tower_energy(n) * vec
        edge_residuals[f"B{n}"] = float(np.linalg.norm(resid))
    files = {}
    extra = {"edge_residuals": edge_residuals,
             "lam": spec.perturbations.lam,
             "noise_seed": spec.perturbations.seed}
    for which in ("tar1", "tar2"):
        L = params.L
        h_tau = tar1_resonance(L) if which == "tar1" else tar2_resonance(L)
        theta0 = (orthogonality_angle(L) if which == "tar1"
                  else tar2_optimal_angle(L))
        leg = replace(spec, name=f"{spec.name}-{which}", engine="full",
                      target=which, theta0=theta0, h_tau=h_tau)
        setup, initial = build_setup(leg)
        target = make_target(setup, which)
        traj = run_filtration(setup, initial, leg.n_steps, target=target,
                              string_every=string_every)
        path = emit_csv(os.path.join(out_dir, f"trajectory_{which}.csv"),
                        SCHEMAS["trajectory"], _trajectory_rows(traj))
        files[f"trajectory_{which}"] = path
        info = {"q_final": float(traj.q[-1]),
                "max_q": float(np.max(traj.q)),
                "theta0": theta0, "h_tau": list(h_tau)}
        if which == "tar1":
            # the GHZ target must sit inside the perturbed dark manifold
            tvec = setup.to_eigen(target.at(0))
            info["dark_residual"] = float(
                np.linalg.norm(tvec - dark_projection(setup, tvec))
            )
            info["dark_weight"] = float(
                np.linalg.norm(dark_projection(setup, setup.to_eigen(initial)))
                ** 2
            )
        else:
            found = detect_plateau(traj.q)
            if found is not None:
                start, end, height = found
                info["plateau"] = {"start": start, "exit": end,
                                   "height": height}
            else:
                info["plateau"] = None
        extra[which] = info
    return _finish(out_dir, "perturbation_study", document_of(spec),
                   files, extra, t0)


def sample_goe(d_goe, seed):
    """Real symmetric matrix, diagonal variance 2/D, off-diagonal 1/D."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    a = rng.standard_normal((d_goe, d_goe))
    return (a + a.T) / math.sqrt(2.0 * d_goe)


def goe_demo(out_dir, d_goe=64, seed=23, n_steps=None,
             bright_bound=1e-8, conv_tol=1e-6) -> RunArtifacts:
    """Dark-state persistence for a generic dense spectrum.

    Draws one GOE matrix, filters |1> with removal |2>, and checks that
    the survival weight converges to the initial weight on the single
    dark state formed by the two edge eigenlevels (tau glues their
    phases).  The run covers the bound n where the slowest bright mode
    has decayed below bright_bound.
    """
    t0 = time.time()
    block = GoeBlock(d_goe=d_goe, seed=seed)
    ensure_dir(out_dir)
    mat = sample_goe(block.d_goe, block.seed)
    dim = block.d_goe
    removal = np.zeros(dim, dtype=complex)
    removal[1] = 1.0
    initial = np.zeros(dim, dtype=complex)
    initial[0] = 1.0
    setup = generic_setup(mat, removal)          # tau = 2 pi / spectral span
    # dark vector spanned by the two glued edge levels, orthogonal to removal
    r = setup.removal_eig
    phi = np.zeros(dim, dtype=complex)
    phi[-1] = r[0].conj()
    phi[0] = -r[-1].conj()
    phi /= np.linalg.norm(phi)
    psi0 = setup.to_eigen(initial)
    expect = float(np.abs(np.vdot(phi, psi0)) ** 2)
    spec_f = spectral_decomposition(setup, initial)
    bright = spec_f.select("bright")
    zeta_d = float(np.max(np.abs(spec_f.values[bright])))
    n_bound = int(math.ceil(math.log(bright_bound) / (2.0 * math.log(zeta_d))))
    if n_steps is None:
        n_steps = n_bound + 1000
    if n_steps <= n_bound:
        raise ValidationError(
            f"n_steps {n_steps} does not cover the bright-decay bound "
            f"{n_bound}"
        )
    target = RotatingTarget.static(setup.from_eigen(phi))
    traj = run_filtration(setup, initial, n_steps, target=target,
                          string_every=0)
    tail = traj.survival[n_bound:]
    worst = float(np.max(np.abs(tail - expect)))
    if worst >= conv_tol:
        raise NumericsError(
            f"survival misses the dark weight by {worst:.3e} past the "
            f"bright-decay bound {n_bound}"
        )
    rows = [(int(n), float(s), float(q), None, None)
            for n, s, q in zip(traj.steps, traj.survival, traj.q)]
    traj_path = emit_csv(os.path.join(out_dir, "trajectory.csv"),
                         SCHEMAS["trajectory"], rows)
    spec_rows = [(float(z.real), float(z.imag), float(abs(z)), kind)
                 for z, kind in sorted(
                     zip(spec_f.values, spec_f.kinds),
                     key=lambda t: (-abs(t[0]), np.angle(t[0]).round(12)))]
    spec_path = emit_csv(os.path.join(out_dir, "spectrum.csv"),
                         SCHEMAS["spectrum"], spec_rows)
    cp = charge_picture(setup)
    charge_path = emit_csv(os.path.join(out_dir, "charges.csv"),
                           SCHEMAS["charges"],
                           list(zip(cp.angles, cp.weights)))
    off = mat[~np.eye(dim, dtype=bool)]
    extra = {
        "d_goe": block.d_goe,
        "seed": block.seed,
        "tau": setup.tau,
        "expected_survival": expect,
        "zeta_dominant": zeta_d,
        "n_bound": n_bound,
        "worst_tail_error": worst,
        "offdiag_sq_mean": float(np.mean(off ** 2)),
        "offdiag_sq_expected": 1.0 / dim,
    }
    echo = {"goe": {"D_goe": block.d_goe, "seed": block.seed},
            "n_steps": int(n_steps)}
    return _finish(out_dir, "goe_demo", echo,
                   {"trajectory": traj_path, "spectrum": spec_path,
                    "charges": charge_path}, extra, t0)


def zeta_vs_L_scan(out_dir, L_values=tuple(range(4, 17)),
                   h_tau=(1, 4)) -> RunArtifacts:
    """Dominant bright eigenvalue versus chain length at h*tau = pi/4.

    The four tower phase classes n mod 4 persist at every length; the
    scan asserts that the dominant modulus strictly decreases with L and
    that each length yields exactly w - 1 bright roots.
    """
    t0 = time.time()
    L_values = [int(L) for L in L_values]
    if any(L < 4 for L in L_values):
        raise ValidationError("scan needs L >= 4 to populate all 4 classes")
    ensure_dir(out_dir)
    p, q = h_tau
    rows = []
    moduli = []
    files = {}
    for L in L_values:
        params = ChainParams(L=L)
        tau = math.pi * p / (q * params.h)
        setup, _ = reduced_setup(params, tau, 0.0)
        cp = charge_picture(setup)
        if cp.w != 4:
            raise NumericsError(
                f"L={L}: expected 4 charged phase classes, found {cp.w}"
            )
        bs = bright_secular_roots(cp)
        if bs.roots.shape[0] != cp.w - 1:
            raise NumericsError(
                f"L={L}: {bs.roots.shape[0]} roots for w={cp.w}"
            )
        dom = dominant_bright(bs)
        moduli.append(abs(dom.zeta))
        rows.append((L, abs(dom.zeta)))
        spath = emit_csv(
            os.path.join(out_dir, f"spectrum_L{L:02d}.csv"),
            SCHEMAS["spectrum"],
            [(float(z.real), float(z.imag), float(abs(z)), "bright")
             for z in bs.roots],
        )
        files[f"spectrum_L{L:02d}"] = spath
    drops = np.diff(moduli)
    if np.any(drops >= 0.0):
        bad = int(np.argmax(drops >= 0.0))
        raise NumericsError(
            f"dominant modulus fails to decrease between L={L_values[bad]} "
            f"and L={L_values[bad + 1]}"
        )
    path = emit_csv(os.path.join(out_dir, "zeta_scan.csv"),
                    ("L", "zeta_modulus"), rows)
    files["zeta_scan"] = path
    extra = {"h_tau": [p, q], "moduli": dict(zip(map(str, L_values), moduli))}
    return _finish(out_dir, "zeta_vs_L_scan",
                   {"L_values": L_values, "h_tau": [p, q]}, files, extra, t0)
