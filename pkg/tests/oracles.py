"""Reference values computed without the simulator.

Herald probabilities come from explicit enumeration over excitations and
noise photon numbers (Poisson truncated at cumulative mass 1 - 1e-12).
Distillation circuits are rebuilt here from plain numpy matrices.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

NO_CLICK, BELL, GG, EE, DEPHASED = range(5)


def _poisson_pmf(mean: float, mass: float = 1 - 1e-12):
    if mean == 0:
        return [1.0]
    out, k, p, cdf = [], 0, math.exp(-mean), 0.0
    while cdf < mass:
        out.append(p)
        cdf += p
        k += 1
        p *= mean / k
    return out


@lru_cache(maxsize=None)
def _thinned_noise(eta: float, n_add: float) -> tuple[float, ...]:
    """Distribution of the detected noise count m for two transducers."""
    pmf = _poisson_pmf(n_add)
    out = np.zeros(2 * len(pmf))
    for n1, a in enumerate(pmf):
        for n2, b in enumerate(pmf):
            n = n1 + n2
            for m in range(n + 1):
                out[m] += a * b * math.comb(n, m) * eta**m * (1 - eta) ** (n - m)
    return tuple(out)


def _round_probs(k_excited: int, eta: float, n_add: float):
    """(P(click), P(click with m = 0)) for one detection window."""
    noise = _thinned_noise(eta, n_add)
    p_click = p_clean = 0.0
    for s in range(k_excited + 1):
        ps = math.comb(k_excited, s) * eta**s * (1 - eta) ** (k_excited - s)
        for m, pm in enumerate(noise):
            if s + m >= 1:
                p_click += ps * pm
                if m == 0:
                    p_clean += ps * pm
    return p_click, p_clean


def one_click_probs(p_e: float, eta: float, n_add: float) -> np.ndarray:
    out = np.zeros(5)
    for x1 in (0, 1):
        for x2 in (0, 1):
            px = (p_e if x1 else 1 - p_e) * (p_e if x2 else 1 - p_e)
            click, clean = _round_probs(x1 + x2, eta, n_add)
            nx = x1 + x2
            if nx == 1:
                out[BELL] += px * clean
                out[DEPHASED] += px * (click - clean)
            elif nx == 0:
                out[GG] += px * click
            else:
                out[EE] += px * click
    out[NO_CLICK] = 1 - out[1:].sum()
    return out


def two_click_probs(p_e: float, eta: float, n_add: float) -> np.ndarray:
    out = np.zeros(5)
    for x1 in (0, 1):
        for x2 in (0, 1):
            px = (p_e if x1 else 1 - p_e) * (p_e if x2 else 1 - p_e)
            nx = x1 + x2
            c1, k1 = _round_probs(nx, eta, n_add)
            c2, k2 = _round_probs(2 - nx, eta, n_add)
            if nx == 1:
                out[BELL] += px * k1 * k2
                out[DEPHASED] += px * (c1 * c2 - k1 * k2)
            elif nx == 2:
                out[GG] += px * c1 * c2
            else:
                out[EE] += px * c1 * c2
    out[NO_CLICK] = 1 - out[1:].sum()
    return out


# --- states and circuits ------------------------------------------------------

_g = np.array([1, 0], dtype=complex)
_e = np.array([0, 1], dtype=complex)
_psi = (np.kron(_g, _e) + np.kron(_e, _g)) / math.sqrt(2)
STATES = {
    BELL: np.outer(_psi, _psi.conj()),
    GG: np.diag([1, 0, 0, 0]).astype(complex),
    EE: np.diag([0, 0, 0, 1]).astype(complex),
    DEPHASED: np.diag([0, 0.5, 0.5, 0]).astype(complex),
}
KIND_FIDELITY = {k: float(np.real(_psi.conj() @ s @ _psi)) for k, s in STATES.items()}


def _cnot_4q(control: int, target: int) -> np.ndarray:
    """Permutation matrix of a CNOT on 4 qubits, qubit 0 most significant."""
    u = np.zeros((16, 16))
    for i in range(16):
        bits = [(i >> (3 - q)) & 1 for q in range(4)]
        if bits[control]:
            bits[target] ^= 1
        j = sum(b << (3 - q) for q, b in enumerate(bits))
        u[j, i] = 1
    return u


_PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]


def _depolarize(rho: np.ndarray, qubit: int, p: float) -> np.ndarray:
    if p == 0:
        return rho
    out = np.zeros_like(rho)
    for i, s in enumerate(_PAULI):
        w = 1 - p if i == 0 else p / 3
        ops = [np.eye(2)] * 4
        ops[qubit] = s
        k = ops[0]
        for o in ops[1:]:
            k = np.kron(k, o)
        out += w * k @ rho @ k.conj().T
    return out


def _amp_damp_dephase(rho: np.ndarray, qubit: int, t: float, t1: float, t2phi: float) -> np.ndarray:
    """Zero-temperature relaxation then pure dephasing on one of four qubits."""
    gamma = 0.0 if math.isinf(t1) else 1 - math.exp(-t / t1)
    lam = 1.0 if math.isinf(t2phi) else math.exp(-t / t2phi)
    singles = [
        [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]), np.array([[0, math.sqrt(gamma)], [0, 0]])],
        [np.diag([1, lam]), np.diag([0, math.sqrt(1 - lam * lam)])],
    ]
    for kraus in singles:
        out = np.zeros_like(rho)
        for k1 in kraus:
            ops = [np.eye(2)] * 4
            ops[qubit] = k1
            k = ops[0]
            for o in ops[1:]:
                k = np.kron(k, o)
            out += k @ rho @ k.conj().T
        rho = out
    return rho


def parity_check(rho_mem, rho_data, eps=1.0, t=0.0, t1=math.inf, t2phi=math.inf):
    """Memory pair on qubits (0, 1), data pair on (2, 3); returns (q, data state or None)."""
    rho = np.kron(rho_mem, rho_data)
    for q in (0, 1):
        rho = _amp_damp_dephase(rho, q, t, t1, t2phi)
    for c, tg in ((2, 0), (3, 1)):
        u = _cnot_4q(c, tg)
        rho = u @ rho @ u.T
        rho = _depolarize(_depolarize(rho, c, 1 - eps), tg, 1 - eps)
    # project memory onto |11>
    r = rho.reshape(2, 2, 4, 2, 2, 4)[1, 1, :, 1, 1, :]
    q = float(np.real(np.trace(r)))
    return q, (r / q if q > 1e-14 else None)


def bell_fidelity(rho) -> float:
    return float(np.real(_psi.conj() @ rho @ _psi))


@lru_cache(maxsize=None)
def _epl_table(eps: float):
    tab = {}
    for a, sa in STATES.items():
        for b, sb in STATES.items():
            q, post = parity_check(sa, sb, eps)
            tab[a, b] = (q, bell_fidelity(post) if post is not None else 0.0)
    return tab


def epl_exact(p_e: float, eta: float, n_add: float, eps: float = 1.0):
    """(fidelity, ebit rate per attempt) of EPL with ideal memory."""
    probs = one_click_probs(p_e, eta, n_add)
    h = probs[1:].sum()
    num = den = 0.0
    for (a, b), (q, f) in _epl_table(eps).items():
        w = probs[a] * probs[b] / h**2 * q
        num += w * f
        den += w
    return num / den, den * h / 2


def chi_exact(p_e: float, eta: float, n_add: float):
    probs = one_click_probs(p_e, eta, n_add)
    h = probs[1:].sum()
    num = den = 0.0
    for a, sa in STATES.items():
        for b, sb in STATES.items():
            for c, sc in STATES.items():
                q1, d = parity_check(sa, sc)
                if d is None:
                    continue
                q2, d = parity_check(sb, d)
                if d is None:
                    continue
                w = probs[a] * probs[b] * probs[c] / h**3 * q1 * q2
                num += w * bell_fidelity(d)
                den += w
    return num / den, den * h / 3


def one_click_exact(p_e: float, eta: float, n_add: float):
    """(heralded fidelity, heralds per attempt)."""
    probs = one_click_probs(p_e, eta, n_add)
    h = probs[1:].sum()
    return sum(probs[k] * KIND_FIDELITY[k] for k in STATES) / h, h


def two_click_exact(p_e: float, eta: float, n_add: float):
    probs = two_click_probs(p_e, eta, n_add)
    h = probs[1:].sum()
    return sum(probs[k] * KIND_FIDELITY[k] for k in STATES) / h, h / 2
