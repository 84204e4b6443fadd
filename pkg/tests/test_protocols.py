import math

import numpy as np
import pytest

from qlinksim import qstate
from qlinksim.channels import GateNoiseParams, MemoryParams
from qlinksim.herald import AttemptParams, OutcomeKind
from qlinksim.protocols import (
    EPL_FILTER, ChannelMetrics, Protocol, ProtocolConfig, TrialRecord, epl_kraus_map, estimate_metrics,
    parity_check, run_chi, run_epl, run_one_click, run_protocol, run_records, run_two_click,
)
from qlinksim.qstate import DensityMatrix

import oracles
from conftest import random_ket


def cfg(protocol, p_e=0.5, eta=0.1, n_add=0.0, **kw):
    return ProtocolConfig(protocol, AttemptParams(p_e, eta, n_add), **kw)


def _support_state(rng) -> DensityMatrix:
    """Random state on span{|ge>, |eg>}."""
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    m2 = a @ a.conj().T
    m2 /= np.trace(m2).real
    m = np.zeros((4, 4), dtype=complex)
    m[np.ix_([1, 2], [1, 2])] = m2
    return DensityMatrix(m)


# --- configuration and records ----------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        cfg("epl", attempt_rate=0)
    with pytest.raises(ValueError):
        cfg("epl", trials=0)
    with pytest.raises(ValueError):
        cfg("epl", max_wait_attempts=0)
    with pytest.raises(ValueError):
        cfg("bogus")


def test_default_wait_cap():
    assert cfg("epl").wait_cap == 10**6
    assert cfg("epl", attempt_rate=1e5, memory=MemoryParams(t1=300e-6)).wait_cap == 300
    assert cfg("epl", attempt_rate=1e6, memory=MemoryParams(t1=1.0)).wait_cap == 10**6
    assert cfg("epl", attempt_rate=1.0, memory=MemoryParams(t1=1e-9)).wait_cap == 10
    assert cfg("epl", max_wait_attempts=7).wait_cap == 7


def test_trial_record_invariants():
    with pytest.raises(ValueError):
        TrialRecord(True, None, 3)
    with pytest.raises(ValueError):
        TrialRecord(False, 0.5, 3)
    with pytest.raises(ValueError):
        TrialRecord(False, None, 0)


def test_estimate_metrics_examples():
    m = estimate_metrics([TrialRecord(True, 1.0, 1)] * 1000, 1e6)
    assert m.fidelity_mean == 1.0 and m.ebit_rate == 1e6 and m.success_fraction == 1
    m = estimate_metrics([TrialRecord(False, None, 1)] * 1000, 1e6)
    assert m.ebit_rate == 0 and not m.fidelity_defined and math.isnan(m.fidelity_mean)
    m = estimate_metrics([TrialRecord(True, f, 1) for f in (1.0, 0.0, 1.0, 0.0)], 1e6)
    assert m.fidelity_mean == 0.5
    assert m.fidelity_sem == pytest.approx(0.2887, abs=1e-3)
    with pytest.raises(ValueError):
        estimate_metrics([], 1e6)


def test_metrics_order_insensitive():
    rng = np.random.default_rng(3)
    recs = [TrialRecord(True, float(f), int(a)) for f, a in zip(rng.random(500), rng.integers(1, 99, 500))]
    a = estimate_metrics(recs, 1e6)
    b = estimate_metrics(recs[::-1], 1e6)
    assert a == b


# --- heralding protocols ------------------------------------------------------


def test_one_click_ideal_fidelity_two_thirds():
    m = run_protocol(cfg("one_click", eta=1.0, trials=30_000, master_seed=1))
    assert m.fidelity_mean == pytest.approx(2 / 3, abs=3 * m.fidelity_sem)
    assert m.outcome_histogram["ground_ground"] == m.outcome_histogram["dephased"] == 0


@pytest.mark.parametrize("protocol,runner", [("one_click", run_one_click), ("two_click", run_two_click)])
def test_batch_matches_per_trial(protocol, runner):
    c = cfg(protocol, p_e=0.3, eta=0.2, n_add=0.4, trials=300, master_seed=17)
    fast = run_protocol(c)
    slow = estimate_metrics([runner(c, i) for i in range(c.trials)], c.attempt_rate)
    assert fast == slow


def test_one_click_rate_accounting():
    c = cfg("one_click", p_e=0.4, eta=0.3, n_add=0.2, trials=50_000, master_seed=2)
    m = run_protocol(c)
    _, h = oracles.one_click_exact(0.4, 0.3, 0.2)
    # attempts per trial are geometric with mean 1/h
    sem = math.sqrt((1 - h) / h**2 / c.trials) * h**2  # delta method on 1/mean
    assert m.ebit_rate / c.attempt_rate == pytest.approx(h, abs=3 * sem)
    assert m.ebit_rate <= c.attempt_rate


def test_two_click_charges_two_attempts():
    rec = run_two_click(cfg("two_click", eta=1.0, n_add=0.0, master_seed=4), 0)
    assert rec.attempts_consumed % 2 == 0


def test_trial_budget_abort():
    c = cfg("one_click", eta=0.0, max_trial_attempts=50)
    rec = run_one_click(c, 0)
    assert not rec.accepted and rec.attempts_consumed == 50
    for runner in (run_epl, run_chi):
        rec = runner(c.evolve(protocol=runner.__name__[4:]), 0)
        assert not rec.accepted and rec.attempts_consumed == 50
        assert rec.outcome_kinds == (OutcomeKind.NO_CLICK,)


# --- zero-noise purity ----------------------------------------------------------


@pytest.mark.parametrize("protocol", ["two_click", "epl", "chi"])
def test_zero_noise_every_trial_perfect(protocol):
    c = cfg(protocol, p_e=0.35, eta=0.3, n_add=0.0, trials=500, master_seed=5)
    recs = run_records(c)
    assert any(r.accepted for r in recs)
    for r in recs:
        if r.accepted:
            assert r.fidelity == 1.0


def test_epl_ideal_inputs():
    q, post = parity_check(qstate.PSI_PLUS, qstate.PSI_PLUS, MemoryParams(), 0.0, GateNoiseParams())
    assert q == pytest.approx(0.5)
    assert post.allclose(qstate.PSI_PLUS, atol=1e-12)
    recs = run_records(cfg("epl", eta=1.0, trials=2000, master_seed=6))
    assert all(r.fidelity == 1.0 for r in recs if r.accepted)


def test_epl_literal_circuit_accepts_gg_with_ee():
    q, post = parity_check(qstate.GG, qstate.EE, MemoryParams(), 0.0, GateNoiseParams())
    assert q == pytest.approx(1.0) and post.allclose(qstate.EE)


def test_chi_ideal_inputs():
    recs = run_records(cfg("chi", eta=1.0, trials=300, master_seed=7))
    assert all(r.fidelity == 1.0 for r in recs if r.accepted)


# --- Kraus oracle ---------------------------------------------------------------


def test_kraus_map_examples():
    p, out = epl_kraus_map(qstate.PSI_PLUS, qstate.PSI_PLUS)
    assert p == pytest.approx(0.5) and out.allclose(qstate.PSI_PLUS, atol=1e-12)
    p, out = epl_kraus_map(qstate.GG, qstate.MIXED)
    assert p == 0 and out is None
    p, out = epl_kraus_map(qstate.MIXED, qstate.MIXED)
    assert p == pytest.approx(0.5) and out.allclose(qstate.MIXED, atol=1e-12)
    assert EPL_FILTER.dim_in == 16 and EPL_FILTER.dim_out == 4
    with pytest.raises(ValueError):
        epl_kraus_map(qstate.tensor(qstate.GG, qstate.GG), qstate.GG)


def test_circuit_matches_kraus_on_support(rng):
    for _ in range(100):
        keep, meas = _support_state(rng), _support_state(rng)
        q, post = parity_check(meas, keep, MemoryParams(), 0.0, GateNoiseParams())
        p, out = epl_kraus_map(keep, meas)
        assert abs(p - q) < 1e-10
        assert np.max(np.abs(post.data - out.data)) < 1e-10


@pytest.mark.parametrize("phi", [0.1, 1.0, math.pi])
def test_kraus_map_common_phase_invariance(rng, phi):
    u = np.diag([1, 1, np.exp(1j * phi), 1])
    for _ in range(20):
        keep, meas = _support_state(rng), _support_state(rng)
        p0, out0 = epl_kraus_map(keep, meas)
        p1, out1 = epl_kraus_map(qstate.apply_unitary(keep, u), qstate.apply_unitary(meas, u))
        assert abs(p0 - p1) < 1e-12
        assert np.max(np.abs(out0.data - out1.data)) < 1e-12


def test_parity_check_against_independent_circuit(rng):
    kinds = [qstate.PSI_PLUS, qstate.GG, qstate.EE, qstate.MIXED]
    for a in kinds:
        for b in kinds:
            for eps, t in ((1.0, 0.0), (0.9, 2e-4)):
                q, post = parity_check(a, b, MemoryParams(1e-3, 5e-4), t, GateNoiseParams(eps))
                q2, post2 = oracles.parity_check(a.data, b.data, eps, t, 1e-3, 5e-4)
                assert abs(q - q2) < 1e-12
                if post2 is not None:
                    assert np.max(np.abs(post.data - post2)) < 1e-12


# --- distillation statistics ------------------------------------------------------


def test_epl_matches_exact_stationary_value():
    c = cfg("epl", p_e=0.4, eta=0.3, n_add=0.05, trials=4000, master_seed=8)
    m = run_protocol(c)
    f, r = oracles.epl_exact(0.4, 0.3, 0.05)
    assert m.fidelity_mean == pytest.approx(f, abs=3 * m.fidelity_sem)
    assert m.ebit_rate == pytest.approx(r * c.attempt_rate, rel=0.05)


def test_chi_matches_exact_stationary_value():
    c = cfg("chi", p_e=0.4, eta=0.3, n_add=0.05, trials=2000, master_seed=9)
    m = run_protocol(c)
    f, r = oracles.chi_exact(0.4, 0.3, 0.05)
    assert m.fidelity_mean == pytest.approx(f, abs=3 * m.fidelity_sem)
    assert m.ebit_rate == pytest.approx(r * c.attempt_rate, rel=0.08)


def test_memory_decay_lowers_epl_fidelity():
    base = cfg("epl", p_e=0.3, eta=0.1, n_add=0.01, trials=1000, master_seed=10)
    good = run_protocol(base)
    bad = run_protocol(base.evolve(memory=MemoryParams(t1=20e-6, t2phi=20e-6)))
    assert bad.fidelity_mean < good.fidelity_mean


def test_wait_cap_restarts_are_charged():
    c = cfg("epl", p_e=0.5, eta=0.05, n_add=0.0, trials=200, master_seed=11, max_wait_attempts=3)
    for i in range(50):
        r = run_epl(c, i)
        kinds = [k for k in r.outcome_kinds if k != OutcomeKind.NO_CLICK]
        assert r.attempts_consumed >= len(kinds)
        if r.accepted:
            assert r.wait_time <= 3 / c.attempt_rate


def test_chi_local_unitaries_identity_matches_default():
    c = cfg("chi", p_e=0.4, eta=0.3, n_add=0.05, master_seed=12)
    eye = (np.eye(2), np.eye(2))
    for i in range(30):
        assert run_chi(c, i) == run_chi(c, i, local_unitaries=eye)


def test_run_protocol_worker_count_invariant():
    c = cfg("epl", p_e=0.4, eta=0.3, n_add=0.05, trials=600, master_seed=13)
    a = run_protocol(c, threads=1, chunk=100)
    b = run_protocol(c, threads=3, chunk=100)
    assert a == b


def test_per_trial_records_reproducible():
    c = cfg("chi", p_e=0.4, eta=0.3, n_add=0.05, master_seed=14)
    assert run_records(c, [3, 1, 2]) == run_records(c, [3, 1, 2])
    assert run_records(c, [2])[0] == run_records(c, [1, 2])[1]


def test_metrics_type():
    m = run_protocol(cfg("two_click", eta=0.5, trials=100))
    assert isinstance(m, ChannelMetrics) and m.trials == 100 and m.heralds == 100
