"""Noise channels: memory relaxation/dephasing and the depolarized CNOT."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qstate import (
    CNOT,
    I2,
    X,
    Y,
    Z,
    DensityMatrix,
    KrausChannel,
    apply_channel,
    embed_single_qubit_channel,
)

INF = math.inf


@dataclass(frozen=True)
class MemoryParams:
    """Memory-qubit coherence. Times in seconds; ``math.inf`` means no decay.

    ``env_excitation`` is the probability that a relaxation event excites
    rather than de-excites the qubit (0 for a zero-temperature bath).
    """

    t1: float = INF
    t2phi: float = INF
    env_excitation: float = 0.0

    def __post_init__(self):
        if not self.t1 > 0:
            raise ValueError(f"t1 must be positive or inf, got {self.t1}")
        if not self.t2phi > 0:
            raise ValueError(f"t2phi must be positive or inf, got {self.t2phi}")
        if not 0.0 <= self.env_excitation <= 1.0:
            raise ValueError(f"env_excitation must lie in [0, 1], got {self.env_excitation}")

    @property
    def ideal(self) -> bool:
        return math.isinf(self.t1) and math.isinf(self.t2phi)


@dataclass(frozen=True)
class GateNoiseParams:
    """CNOT quality; ``epsilon = 1`` is a perfect gate, depolarizing p = 1 - epsilon."""

    epsilon: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    @property
    def depolarizing_p(self) -> float:
        return 1.0 - self.epsilon


def _decay_fraction(t: float, tau: float) -> float:
    """exp(-t/tau), with tau = inf giving 1."""
    if t < 0:
        raise ValueError(f"elapsed time must be non-negative, got {t}")
    if math.isinf(tau):
        return 1.0
    return math.exp(-t / tau)


@lru_cache(maxsize=4096)
def gad_channel(t1: float, t: float, p_env: float = 0.0) -> KrausChannel:
    """Generalized amplitude damping after waiting ``t`` seconds.

    The decay probability is ``gamma = 1 - exp(-t/t1)``. With weight
    ``1 - p_env`` the qubit relaxes towards ``|g>`` and with weight ``p_env``
    it is driven towards ``|e>``.
    """
    if not 0.0 <= p_env <= 1.0:
        raise ValueError(f"p_env must lie in [0, 1], got {p_env}")
    gamma = 1.0 - _decay_fraction(t, t1)
    keep = math.sqrt(1.0 - gamma)
    jump = math.sqrt(gamma)
    down = math.sqrt(1.0 - p_env)
    up = math.sqrt(p_env)
    ops = (
        down * np.array([[1, 0], [0, keep]]),
        down * np.array([[0, jump], [0, 0]]),
        up * np.array([[keep, 0], [0, 1]]),
        up * np.array([[0, 0], [jump, 0]]),
    )
    return KrausChannel(ops)


@lru_cache(maxsize=4096)
def dephasing_channel(t2phi: float, t: float) -> KrausChannel:
    """Pure dephasing: coherences shrink by ``exp(-t/t2phi)``, populations untouched.

    Written as a phase-damping channel ``diag(1, sqrt(1-g)), diag(0, sqrt(g))``
    with ``g = 1 - exp(-2t/t2phi)``.
    """
    lam = _decay_fraction(t, t2phi)
    ops = (
        np.array([[1, 0], [0, lam]]),
        np.array([[0, 0], [0, math.sqrt(max(0.0, 1.0 - lam * lam))]]),
    )
    return KrausChannel(ops)


@lru_cache(maxsize=256)
def depolarizing_channel(p: float) -> KrausChannel:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    a = math.sqrt(1.0 - p)
    b = math.sqrt(p / 3.0)
    return KrausChannel((a * I2, b * X, b * Y, b * Z))


@lru_cache(maxsize=256)
def _noisy_cnot(eps: float) -> KrausChannel:
    dep = depolarizing_channel(1.0 - eps)
    if eps == 1.0:
        return KrausChannel.from_unitary(CNOT)
    ops = tuple(np.kron(ka, kb) @ CNOT for ka in dep.operators for kb in dep.operators)
    return KrausChannel(ops)


def noisy_cnot(eps: GateNoiseParams | float) -> KrausChannel:
    """Ideal CNOT (control first) followed by independent depolarizing on both qubits."""
    if isinstance(eps, GateNoiseParams):
        eps = eps.epsilon
    return _noisy_cnot(float(GateNoiseParams(float(eps)).epsilon))


@lru_cache(maxsize=4096)
def _memory_channel(mem: MemoryParams, t: float, qubit: int, n_qubits: int) -> KrausChannel:
    single = gad_channel(mem.t1, t, mem.env_excitation).then(dephasing_channel(mem.t2phi, t))
    return embed_single_qubit_channel(single, qubit, n_qubits)


def decay_qubits(rho: DensityMatrix, mem: MemoryParams, t: float, qubits) -> DensityMatrix:
    """Apply relaxation then dephasing for time ``t`` to each listed qubit."""
    if t < 0:
        raise ValueError(f"elapsed time must be non-negative, got {t}")
    if t == 0 or mem.ideal:
        return rho
    for q in qubits:
        rho, _ = apply_channel(rho, _memory_channel(mem, float(t), q, rho.n_qubits))
    return rho


def decay_memory_pair(rho4: DensityMatrix, mem: MemoryParams, t: float) -> DensityMatrix:
    """Decay the two memory qubits (0 and 1) of a four-qubit state."""
    if rho4.n_qubits != 4:
        raise ValueError("decay_memory_pair expects a four-qubit state")
    return decay_qubits(rho4, mem, t, (0, 1))


# --- closed-form single-qubit fidelities --------------------------------------


def gad_fidelity(rho00: float, rho11: float, coherence_sq: float, t1: float, t: float, p_env: float = 0.0) -> float:
    """Fidelity of a stored pure qubit state after amplitude damping.

    ``coherence_sq`` is ``rho01 * rho10 = |rho01|**2``.
    """
    e = _decay_fraction(t, t1)
    p = 1.0 - p_env
    return (
        rho00**2 * (e + p * (1 - e))
        + rho11**2 * (1 - p * (1 - e))
        + coherence_sq * (2 * math.sqrt(e) + 1 - e)
    )


def dephasing_fidelity(rho00: float, rho11: float, t2phi: float, t: float) -> float:
    """Fidelity of a stored pure qubit state after pure dephasing."""
    e = _decay_fraction(t, t2phi)
    return (1 + e) / 2 + (1 - e) / 2 * (rho00 - rho11) ** 2
