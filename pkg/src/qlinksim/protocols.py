"""Protocol state machines and metric estimation.

Four protocols are supported:

``one_click``
    Herald once; any click is accepted and the heralded state's fidelity is
    recorded.
``two_click``
    Barrett-Kok: two detection rounds around a pi pulse.
``epl``
    Extreme-photon-loss 2-to-1 distillation. Pair 1 is parked in memory while
    pair 2 is heralded on the data qubits; bilateral CNOTs (data controls,
    memory targets) and a memory readout of ``11`` decide acceptance.
``chi``
    3-to-1 distillation: two stored pairs are checked against the kept
    third pair with the same bilateral-CNOT parity test.

Each trial draws its heralding randomness from stream
``(master_seed, trial_index, TAG_HERALD)`` and its acceptance coin flips
from ``(master_seed, trial_index, TAG_ACCEPT)``.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import qstate
from .channels import GateNoiseParams, MemoryParams, decay_memory_pair, noisy_cnot
from .herald import (
    HERALD_STATES,
    KIND_FIDELITY,
    N_KINDS,
    AttemptParams,
    HeraldMode,
    OutcomeKind,
    batch_herald_kernel,
    herald_until_success,
)
from .qstate import DensityMatrix, KrausChannel
from .sampling import TAG_ACCEPT, TAG_HERALD, bernoulli, derive_stream

MAX_WAIT_CEILING = 10**6
DEFAULT_TRIAL_BUDGET = 10**6


class Protocol(str, enum.Enum):
    ONE_CLICK = "one_click"
    TWO_CLICK = "two_click"
    EPL = "epl"
    CHI = "chi"


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything needed to run a batch of trials.

    ``max_wait_attempts=None`` selects the default wait cap
    ``10 * ceil(attempt_rate * t1)`` clamped to ``[1, 10**6]``.
    ``max_trial_attempts`` bounds the attempts a single trial may spend
    before it is abandoned.
    """

    protocol: Protocol
    attempt: AttemptParams
    attempt_rate: float = 1e6
    memory: MemoryParams = field(default_factory=MemoryParams)
    gate: GateNoiseParams = field(default_factory=GateNoiseParams)
    max_wait_attempts: int | None = None
    trials: int = 5000
    master_seed: int = 0
    max_trial_attempts: int = DEFAULT_TRIAL_BUDGET

    def __post_init__(self):
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if not self.attempt_rate > 0:
            raise ValueError(f"attempt_rate must be positive, got {self.attempt_rate}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.max_wait_attempts is not None and self.max_wait_attempts < 1:
            raise ValueError("max_wait_attempts must be at least 1")
        if self.max_trial_attempts < 1:
            raise ValueError("max_trial_attempts must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @property
    def wait_cap(self) -> int:
        if self.max_wait_attempts is not None:
            return self.max_wait_attempts
        if math.isinf(self.memory.t1):
            return MAX_WAIT_CEILING
        cap = 10 * math.ceil(self.attempt_rate * self.memory.t1)
        return int(min(max(cap, 1), MAX_WAIT_CEILING))

    def with_attempt(self, **changes) -> "ProtocolConfig":
        return replace(self, attempt=replace(self.attempt, **changes))

    def evolve(self, **changes) -> "ProtocolConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one trial.

    ``outcome_kinds`` lists every herald the trial produced, including a
    ``NO_CLICK`` entry whenever a herald loop ran out of attempts.
    ``wait_time`` is how long the (last) stored pair sat in memory before
    distillation; it is 0 for protocols without memory.
    """

    accepted: bool
    fidelity: float | None
    attempts_consumed: int
    outcome_kinds: tuple[OutcomeKind, ...] = ()
    wait_time: float = 0.0

    def __post_init__(self):
        if self.attempts_consumed < 1:
            raise ValueError("a trial consumes at least one attempt")
        if (self.fidelity is not None) != self.accepted:
            raise ValueError("fidelity must be present exactly when the trial is accepted")


@dataclass(frozen=True)
class ChannelMetrics:
    fidelity_mean: float
    fidelity_sem: float
    ebit_rate: float
    success_fraction: float
    outcome_histogram: dict
    trials: int
    accepted: int
    attempts: int

    @property
    def fidelity_defined(self) -> bool:
        return self.accepted > 0

    @property
    def heralds(self) -> int:
        return sum(v for k, v in self.outcome_histogram.items() if k != OutcomeKind.NO_CLICK.label)


# --- metric estimation ------------------------------------------------------


def metrics_from_arrays(
    accepted: np.ndarray,
    fidelity: np.ndarray,
    attempts: np.ndarray,
    histogram: np.ndarray,
    attempt_rate: float,
) -> ChannelMetrics:
    """Aggregate per-trial arrays. Sums use ``math.fsum`` so that the result
    does not depend on trial order."""
    accepted = np.asarray(accepted, dtype=bool)
    n = accepted.size
    if n == 0:
        raise ValueError("no trial records to aggregate")
    fid = np.asarray(fidelity, dtype=float)[accepted]
    k = int(accepted.sum())
    total_attempts = int(np.sum(attempts, dtype=np.int64))
    if k:
        mean = math.fsum(fid) / k
        sem = math.sqrt(math.fsum((fid - mean) ** 2) / (k - 1) / k) if k > 1 else math.nan
        rate = attempt_rate * k / total_attempts
    else:
        mean = sem = math.nan
        rate = 0.0
    hist = {OutcomeKind(i).label: int(histogram[i]) for i in range(N_KINDS)}
    return ChannelMetrics(mean, sem, rate, k / n, hist, n, k, total_attempts)


def estimate_metrics(records: Sequence[TrialRecord], attempt_rate: float) -> ChannelMetrics:
    if not records:
        raise ValueError("no trial records to aggregate")
    accepted = np.array([r.accepted for r in records])
    fid = np.array([r.fidelity if r.accepted else np.nan for r in records], dtype=float)
    attempts = np.array([r.attempts_consumed for r in records], dtype=np.int64)
    hist = np.zeros(N_KINDS, dtype=np.int64)
    for r in records:
        for kd in r.outcome_kinds:
            hist[int(kd)] += 1
    return metrics_from_arrays(accepted, fid, attempts, hist, attempt_rate)


# --- single-herald protocols ----------------------------------------------------


def _herald_record(cfg: ProtocolConfig, trial_index: int, mode: HeraldMode) -> TrialRecord:
    rng = derive_stream(cfg.master_seed, trial_index, TAG_HERALD)
    outcome, used = herald_until_success(cfg.attempt, mode, rng, cfg.max_trial_attempts)
    fid = float(KIND_FIDELITY[outcome.kind]) if outcome.clicked else None
    return TrialRecord(outcome.clicked, fid, used, (outcome.kind,))


def run_one_click(cfg: ProtocolConfig, trial_index: int) -> TrialRecord:
    return _herald_record(cfg, trial_index, HeraldMode.ONE_CLICK)


def run_two_click(cfg: ProtocolConfig, trial_index: int) -> TrialRecord:
    return _herald_record(cfg, trial_index, HeraldMode.TWO_CLICK)


def _herald_batch(cfg: ProtocolConfig, start: int, stop: int):
    a = cfg.attempt
    kinds, used = batch_herald_kernel(
        np.uint64(cfg.master_seed), start, stop, TAG_HERALD, a.p_e, a.eta, a.n_add,
        cfg.protocol is Protocol.TWO_CLICK, cfg.max_trial_attempts,
    )
    accepted = kinds != OutcomeKind.NO_CLICK
    fid = np.where(accepted, KIND_FIDELITY[kinds], np.nan)
    hist = np.bincount(kinds, minlength=N_KINDS)
    return accepted, fid, used, hist


# --- distillation circuits ------------------------------------------------------

MEMORY_QUBITS = (0, 1)
DATA_QUBITS = (2, 3)


@lru_cache(maxsize=64)
def _bilateral_cnots(eps: float) -> tuple[KrausChannel, KrausChannel]:
    gate = noisy_cnot(eps)
    # data qubit controls, memory qubit is the target, on each side
    return (
        qstate.embed_channel(gate, [DATA_QUBITS[0], MEMORY_QUBITS[0]], 4),
        qstate.embed_channel(gate, [DATA_QUBITS[1], MEMORY_QUBITS[1]], 4),
    )


def parity_check(
    memory_pair: DensityMatrix,
    data_pair: DensityMatrix,
    memory: MemoryParams,
    wait: float,
    gate: GateNoiseParams,
) -> tuple[float, DensityMatrix | None]:
    """One bilateral-CNOT round of the circuit.

    The stored pair decays for ``wait`` seconds, the data pair controls a
    noisy CNOT onto the memory pair on each side, and the memory pair is
    read out. Returns the probability of reading ``11`` and the resulting
    data-pair state (``None`` if that probability is zero).
    """
    rho = qstate.tensor(memory_pair, data_pair)
    rho = decay_memory_pair(rho, memory, wait)
    for ch in _bilateral_cnots(gate.epsilon):
        rho, _ = qstate.apply_channel(rho, ch)
    return qstate.measure_and_project(rho, MEMORY_QUBITS, "11")


@lru_cache(maxsize=1 << 16)
def _epl_round(k_mem: int, k_data: int, wait: float, memory: MemoryParams, gate: GateNoiseParams):
    q, post = parity_check(
        HERALD_STATES[OutcomeKind(k_mem)], HERALD_STATES[OutcomeKind(k_data)], memory, wait, gate
    )
    return q, (qstate.fidelity_to_bell(post) if post is not None else math.nan)


def _apply_local(pair: DensityMatrix, unitaries) -> DensityMatrix:
    if unitaries is None:
        return pair
    ua, ub = unitaries
    return qstate.apply_unitary(pair, np.kron(ua, ub))


def _chi_round(kinds, waits, memory, gate, unitaries=None):
    k1, k2, k3 = (HERALD_STATES[OutcomeKind(k)] for k in kinds)
    k1, k2, k3 = (_apply_local(p, unitaries) for p in (k1, k2, k3))
    q1, data = parity_check(k1, k3, memory, waits[0], gate)
    if data is None:
        return 0.0, math.nan
    q2, data = parity_check(k2, data, memory, waits[1], gate)
    if data is None:
        return 0.0, math.nan
    return q1 * q2, qstate.fidelity_to_bell(data)


_chi_round_cached = lru_cache(maxsize=1 << 16)(_chi_round)


EPL_FILTER = KrausChannel(
    (
        np.kron(np.outer(qstate.KET_GE, qstate.KET_GE), qstate.KET_EG.reshape(1, 4))
        + np.kron(np.outer(qstate.KET_EG, qstate.KET_EG), qstate.KET_GE.reshape(1, 4)),
    ),
    trace_preserving=False,
)


def epl_kraus_map(rho_keep: DensityMatrix, rho_measured: DensityMatrix) -> tuple[float, DensityMatrix | None]:
    """Two-copy parity filter: keep the pairs whose nodes disagree across copies.

    Returns ``(p_succ, rho_out)``; ``rho_out`` is ``None`` when the filter
    annihilates the input.
    """
    if rho_keep.n_qubits != 2 or rho_measured.n_qubits != 2:
        raise ValueError("epl_kraus_map expects two-qubit inputs")
    out, p = qstate.apply_channel(qstate.tensor(rho_keep, rho_measured), EPL_FILTER)
    return p, out


# --- distillation protocols ---------------------------------------------------------


class _Trial:
    """Per-trial bookkeeping shared by the distillation loops."""

    def __init__(self, cfg: ProtocolConfig, trial_index: int):
        self.cfg = cfg
        self.herald_rng = derive_stream(cfg.master_seed, trial_index, TAG_HERALD)
        self.accept_rng = derive_stream(cfg.master_seed, trial_index, TAG_ACCEPT)
        self.used = 0
        self.kinds: list[OutcomeKind] = []

    @property
    def left(self) -> int:
        return self.cfg.max_trial_attempts - self.used

    def herald(self, cap: int) -> tuple[int | None, int]:
        """Herald one pair with at most ``cap`` attempts; kind is None on failure."""
        cap = min(cap, self.left)
        if cap < 1:
            return None, 0
        outcome, a = herald_until_success(self.cfg.attempt, HeraldMode.ONE_CLICK, self.herald_rng, cap)
        self.used += a
        self.kinds.append(outcome.kind)
        return (int(outcome.kind) if outcome.clicked else None), a

    def finish(self, fidelity: float | None = None, wait: float = 0.0) -> TrialRecord:
        return TrialRecord(
            fidelity is not None, fidelity, max(self.used, 1), tuple(self.kinds), wait
        )


def run_epl(cfg: ProtocolConfig, trial_index: int) -> TrialRecord:
    tr = _Trial(cfg, trial_index)
    wait = 0.0
    while tr.left > 0:
        k1, _ = tr.herald(tr.left)
        if k1 is None:
            break
        k2, a2 = tr.herald(cfg.wait_cap)
        if k2 is None:
            continue
        wait = a2 / cfg.attempt_rate
        q, fid = _epl_round(k1, k2, wait, cfg.memory, cfg.gate)
        if bernoulli(tr.accept_rng, min(1.0, q)):
            return tr.finish(fid, wait)
    return tr.finish(None, wait)


def run_chi(cfg: ProtocolConfig, trial_index: int, local_unitaries=None) -> TrialRecord:
    """3-to-1 distillation.

    ``local_unitaries=(U_A, U_B)`` optionally rotates every heralded pair
    before the parity checks; the default is no rotation.
    """
    tr = _Trial(cfg, trial_index)
    wait = 0.0
    while tr.left > 0:
        k1, _ = tr.herald(tr.left)
        if k1 is None:
            break
        k2, a2 = tr.herald(cfg.wait_cap)
        if k2 is None:
            continue
        k3, a3 = tr.herald(cfg.wait_cap)
        if k3 is None:
            continue
        waits = ((a2 + a3) / cfg.attempt_rate, a3 / cfg.attempt_rate)
        wait = waits[0]
        if local_unitaries is None:
            q, fid = _chi_round_cached((k1, k2, k3), waits, cfg.memory, cfg.gate)
        else:
            q, fid = _chi_round((k1, k2, k3), waits, cfg.memory, cfg.gate, local_unitaries)
        if bernoulli(tr.accept_rng, min(1.0, q)):
            return tr.finish(fid, wait)
    return tr.finish(None, wait)


RUNNERS = {
    Protocol.ONE_CLICK: run_one_click,
    Protocol.TWO_CLICK: run_two_click,
    Protocol.EPL: run_epl,
    Protocol.CHI: run_chi,
}


def run_trial(cfg: ProtocolConfig, trial_index: int) -> TrialRecord:
    return RUNNERS[cfg.protocol](cfg, trial_index)


def run_records(cfg: ProtocolConfig, indices: Iterable[int] | None = None) -> list[TrialRecord]:
    indices = range(cfg.trials) if indices is None else indices
    runner = RUNNERS[cfg.protocol]
    return [runner(cfg, i) for i in indices]


def _chunk_arrays(cfg: ProtocolConfig, start: int, stop: int):
    if cfg.protocol in (Protocol.ONE_CLICK, Protocol.TWO_CLICK):
        return _herald_batch(cfg, start, stop)
    recs = run_records(cfg, range(start, stop))
    accepted = np.array([r.accepted for r in recs])
    fid = np.array([r.fidelity if r.accepted else np.nan for r in recs], dtype=float)
    used = np.array([r.attempts_consumed for r in recs], dtype=np.int64)
    hist = np.zeros(N_KINDS, dtype=np.int64)
    for r in recs:
        for kd in r.outcome_kinds:
            hist[int(kd)] += 1
    return accepted, fid, used, hist


def _chunk_task(args):
    cfg, start, stop = args
    return start, _chunk_arrays(cfg, start, stop)


def run_protocol(cfg: ProtocolConfig, threads: int = 1, chunk: int = 2048) -> ChannelMetrics:
    """Run ``cfg.trials`` trials and aggregate them.

    With ``threads > 1`` chunks of trials go to a process pool. Because
    every trial has its own stream, the metrics are identical for any
    number of workers.
    """
    bounds = [(cfg, s, min(s + chunk, cfg.trials)) for s in range(0, cfg.trials, chunk)]
    if threads > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = dict(pool.map(_chunk_task, bounds))
    else:
        parts = dict(map(_chunk_task, bounds))
    ordered = [parts[s] for _, s, _ in bounds]
    accepted = np.concatenate([p[0] for p in ordered])
    fid = np.concatenate([p[1] for p in ordered])
    used = np.concatenate([p[2] for p in ordered])
    hist = np.sum([p[3] for p in ordered], axis=0)
    return metrics_from_arrays(accepted, fid, used, hist, cfg.attempt_rate)
