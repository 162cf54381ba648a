"""Hot loop of the filtration protocol, in two interchangeable backends.

One filtration step in the evolution eigenbasis is

    psi <- u * psi                (diagonal unitary, elementwise)
    psi <- psi - r (r . psi)      (remove the |psi_r> component)

iterated n times without renormalization, so |psi|^2 is the survival
probability.  The kernels fill a chunk of the state history plus the
survival trace and stop early once the norm underflows; all observable
reductions happen outside, identically for both backends.

The numba backend is used when available; set DARKFILTER_DISABLE_NUMBA=1
to force the pure-numpy twin.  Both implementations are importable for
direct comparison.
"""

from __future__ import annotations

import os

import numpy as np

# Survival below this is numerically dead; continuing just underflows.
DEPLETION_FLOOR = 1e-300


def iterate_chunk_numpy(psi, phases, removal, history, survival):
    """Run len(history) filtration steps from psi, recording each state.

    psi is updated in place to the last recorded state.  Returns the
    number of steps actually taken; fewer than requested means the
    survival probability underflowed at the last recorded step.
    """
    steps = history.shape[0]
    for k in range(steps):
        psi *= phases
        psi -= removal * np.vdot(removal, psi)
        history[k] = psi
        s = float(np.real(np.vdot(psi, psi)))
        survival[k] = s
        if s < DEPLETION_FLOOR:
            return k + 1
    return steps


def _iterate_chunk_jit(psi, phases, removal, history, survival):
    steps = history.shape[0]
    dim = psi.shape[0]
    for k in range(steps):
        inner = 0.0 + 0.0j
        for i in range(dim):
            psi[i] = phases[i] * psi[i]
            inner += np.conj(removal[i]) * psi[i]
        s = 0.0
        for i in range(dim):
            psi[i] = psi[i] - removal[i] * inner
            history[k, i] = psi[i]
            s += psi[i].real * psi[i].real + psi[i].imag * psi[i].imag
        survival[k] = s
        if s < DEPLETION_FLOOR:
            return k + 1
    return steps


def _pick_backend():
    if os.environ.get("DARKFILTER_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return iterate_chunk_numpy, "numpy"
    try:
        from numba import njit
    except ImportError:
        return iterate_chunk_numpy, "numpy"
    jitted = njit(cache=True)(_iterate_chunk_jit)
    return jitted, "numba"


iterate_chunk, BACKEND = _pick_backend()
