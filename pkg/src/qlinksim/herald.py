"""Single heralding attempts and the retry loop around them.

One attempt consumes uniforms from the trial's stream in this fixed order::

    x1, x2              excitation of the two data qubits (Bernoulli p_e)
    t1, t2              transduction of each qubit photon (Bernoulli eta)
    n1, n2              noise photons in each transducer (Poisson n_add)
    n1 + n2 draws       thinning of the noise photons (Bernoulli eta each)

All of these are drawn whether or not they end up mattering, so the
stream position after attempt k does not depend on ``p_e``; sweeping
``p_e`` with one seed therefore reuses the same random numbers.

A two-click sequence draws ``x1, x2`` once, then the ``t, n, thinning``
block for round one and again for round two (after the pi pulse).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from . import qstate
from .qstate import DensityMatrix
from .sampling import (
    MAX_POISSON_MEAN,
    TAG_BITS,
    RngStream,
    poisson_at_pre,
    stream_key,
    thin_at,
    uniform_at,
)

NO_CLICK = 0
BELL = 1
GROUND_GROUND = 2
DOUBLE_EXCITED = 3
DEPHASED = 4
N_KINDS = 5


class OutcomeKind(enum.IntEnum):
    NO_CLICK = NO_CLICK
    BELL = BELL
    GROUND_GROUND = GROUND_GROUND
    DOUBLE_EXCITED = DOUBLE_EXCITED
    DEPHASED = DEPHASED

    @property
    def label(self) -> str:
        return self.name.lower()


class HeraldMode(str, enum.Enum):
    ONE_CLICK = "one_click"
    TWO_CLICK = "two_click"


# Psi- heralds are already phase corrected, so Bell maps straight to Psi+.
HERALD_STATES: dict[OutcomeKind, DensityMatrix] = {
    OutcomeKind.BELL: qstate.PSI_PLUS,
    OutcomeKind.GROUND_GROUND: qstate.GG,
    OutcomeKind.DOUBLE_EXCITED: qstate.EE,
    OutcomeKind.DEPHASED: qstate.MIXED,
}

# fidelity of each heralded state to Psi+, indexed by kind code
KIND_FIDELITY = np.array(
    [np.nan] + [qstate.fidelity_to_bell(HERALD_STATES[OutcomeKind(k)]) for k in range(1, N_KINDS)]
)


@dataclass(frozen=True)
class AttemptParams:
    p_e: float
    eta: float
    n_add: float

    def __post_init__(self):
        for name in ("p_e", "eta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.n_add <= MAX_POISSON_MEAN:
            raise ValueError(f"n_add must lie in [0, {MAX_POISSON_MEAN:g}], got {self.n_add}")


@dataclass(frozen=True)
class HeraldOutcome:
    kind: OutcomeKind

    @property
    def state(self) -> DensityMatrix | None:
        return HERALD_STATES.get(self.kind)

    @property
    def clicked(self) -> bool:
        return self.kind != OutcomeKind.NO_CLICK


# --- compiled kernels ------------------------------------------------------


@numba.njit(cache=True)
def _round(key, ctr, a1, a2, eta, n_add, p0):
    """Transduction and noise for one detection window; returns (d, m, ctr)."""
    t1 = uniform_at(key, ctr) < eta
    t2 = uniform_at(key, ctr + 1) < eta
    ctr += 2
    n1, ctr = poisson_at_pre(key, ctr, n_add, p0)
    n2, ctr = poisson_at_pre(key, ctr, n_add, p0)
    m, ctr = thin_at(key, ctr, n1 + n2, eta)
    s = (1 if (a1 and t1) else 0) + (1 if (a2 and t2) else 0)
    return s + m, m, ctr


@numba.njit(cache=True)
def _excitations(key, ctr, p_e, forced):
    x1 = uniform_at(key, ctr) < p_e
    x2 = uniform_at(key, ctr + 1) < p_e
    if forced >= 0:
        x1 = (forced >> 1) & 1 == 1
        x2 = forced & 1 == 1
    return x1, x2, ctr + 2


@numba.njit(cache=True)
def one_click_kernel(key, ctr, p_e, eta, n_add, forced, p0):
    x1, x2, ctr = _excitations(key, ctr, p_e, forced)
    d, m, ctr = _round(key, ctr, x1, x2, eta, n_add, p0)
    if d == 0:
        return NO_CLICK, ctr
    nx = int(x1) + int(x2)
    if nx == 1:
        return (BELL if m == 0 else DEPHASED), ctr
    if nx == 0:
        return GROUND_GROUND, ctr
    return DOUBLE_EXCITED, ctr


@numba.njit(cache=True)
def two_click_kernel(key, ctr, p_e, eta, n_add, forced, p0):
    x1, x2, ctr = _excitations(key, ctr, p_e, forced)
    d1, m1, ctr = _round(key, ctr, x1, x2, eta, n_add, p0)
    # pi pulse on both data qubits
    d2, m2, ctr = _round(key, ctr, not x1, not x2, eta, n_add, p0)
    if d1 == 0 or d2 == 0:
        return NO_CLICK, ctr
    nx = int(x1) + int(x2)
    if nx == 1:
        return (BELL if m1 == 0 and m2 == 0 else DEPHASED), ctr
    if nx == 2:
        return GROUND_GROUND, ctr
    return DOUBLE_EXCITED, ctr


@numba.njit(cache=True)
def herald_kernel(key, ctr, p_e, eta, n_add, two_click, max_attempts):
    """Repeat attempts until a click; returns (kind, attempts_used, ctr).

    A two-click sequence is charged two attempts.
    """
    used = 0
    cost = 2 if two_click else 1
    p0 = math.exp(-n_add)
    while used < max_attempts:
        if two_click:
            kind, ctr = two_click_kernel(key, ctr, p_e, eta, n_add, -1, p0)
        else:
            kind, ctr = one_click_kernel(key, ctr, p_e, eta, n_add, -1, p0)
        used += cost
        if kind != NO_CLICK:
            return kind, used, ctr
    return NO_CLICK, used, ctr


@numba.njit(cache=True)
def batch_herald_kernel(master_seed, start, stop, tag, p_e, eta, n_add, two_click, max_attempts):
    """herald_kernel for trials ``start..stop-1``, each on a fresh stream.

    Stream ids follow :func:`qlinksim.sampling.stream_id`.
    """
    n = stop - start
    kinds = np.empty(n, dtype=np.int64)
    used = np.empty(n, dtype=np.int64)
    for j in range(n):
        sid = (np.uint64(start + j) << np.uint64(TAG_BITS)) | np.uint64(tag)
        key = stream_key(master_seed, sid)
        kinds[j], used[j], _ = herald_kernel(key, 0, p_e, eta, n_add, two_click, max_attempts)
    return kinds, used


# --- Python API ------------------------------------------------------------


def _forced_code(forced) -> int:
    if forced is None:
        return -1
    x1, x2 = (int(bool(v)) for v in forced)
    return (x1 << 1) | x2


def attempt_one_click(params: AttemptParams, rng: RngStream, forced_excitations=None) -> HeraldOutcome:
    """One single-click heralding attempt.

    ``forced_excitations=(x1, x2)`` overrides the sampled excitation bits
    (the uniforms are still consumed), which is handy for tests.
    """
    kind, rng.counter = one_click_kernel(
        np.uint64(rng.key), rng.counter, params.p_e, params.eta, params.n_add,
        _forced_code(forced_excitations), math.exp(-params.n_add),
    )
    return HeraldOutcome(OutcomeKind(kind))


def attempt_two_click(params: AttemptParams, rng: RngStream, forced_excitations=None) -> HeraldOutcome:
    """One Barrett-Kok sequence: two detection rounds separated by a pi pulse."""
    kind, rng.counter = two_click_kernel(
        np.uint64(rng.key), rng.counter, params.p_e, params.eta, params.n_add,
        _forced_code(forced_excitations), math.exp(-params.n_add),
    )
    return HeraldOutcome(OutcomeKind(kind))


def herald_until_success(
    params: AttemptParams,
    mode: HeraldMode | str,
    rng: RngStream,
    max_attempts: int,
) -> tuple[HeraldOutcome, int]:
    mode = HeraldMode(mode)
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    kind, used, rng.counter = herald_kernel(
        np.uint64(rng.key), rng.counter, params.p_e, params.eta, params.n_add,
        mode is HeraldMode.TWO_CLICK, int(max_attempts),
    )
    return HeraldOutcome(OutcomeKind(kind)), int(used)
