"""Small dense density-matrix engine.

Conventions used throughout the package:

* ``|0> = |g>`` and ``|1> = |e>``.
* Qubit 0 is the most significant bit of the matrix index.
* Four-qubit states are ordered (Alice memory, Bob memory, Alice data,
  Bob data).

Everything here is dense ``numpy`` arithmetic; the largest object is a
16 x 16 matrix, so nothing clever is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 4
TOL = 1e-9
ANNIHILATION_WEIGHT = 1e-12


class UnsupportedDimensionError(ValueError):
    """Raised when an operation would produce more than MAX_QUBITS qubits."""


def _n_qubits_of(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Normalized density matrix on 1 to 4 qubits.

    The wrapped array is copied and made read-only, so instances can be
    shared freely.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"density matrix must be square, got {arr.shape}")
        n = _n_qubits_of(arr.shape[0])
        if n > MAX_QUBITS:
            raise UnsupportedDimensionError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit limit")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_qubits(self) -> int:
        return _n_qubits_of(self.data.shape[0])

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def validate(self, tol: float = TOL) -> None:
        """Check Hermiticity, unit trace and positivity; raise ValueError on failure.

        This is deliberately not called on construction: herald states are
        built exactly and channels preserve positivity, so the check is only
        run from tests and debugging sessions.
        """
        m = self.data
        herm = np.max(np.abs(m - m.conj().T))
        if herm > tol:
            raise ValueError(f"not Hermitian (max deviation {herm:.3g})")
        if abs(np.trace(m) - 1) > tol:
            raise ValueError(f"trace is {np.trace(m).real:.12g}, expected 1")
        lo = np.linalg.eigvalsh((m + m.conj().T) / 2).min()
        if lo < -tol:
            raise ValueError(f"not positive semidefinite (min eigenvalue {lo:.3g})")

    def allclose(self, other: "DensityMatrix | np.ndarray", atol: float = 1e-12) -> bool:
        o = other.data if isinstance(other, DensityMatrix) else np.asarray(other)
        return o.shape == self.data.shape and bool(np.allclose(self.data, o, atol=atol, rtol=0))

    @classmethod
    def from_ket(cls, ket: Sequence[complex]) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex).reshape(-1)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 1 << n_qubits
        return cls(np.eye(d) / d)


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """A completely positive map given by Kraus operators.

    Operators may be rectangular (``d_out x d_in``) so that filters which
    discard subsystems, such as a two-copy parity filter, fit the same type.
    ``trace_preserving=False`` marks a post-selection filter whose output
    trace is a success probability.
    """

    operators: tuple
    trace_preserving: bool = True
    _completeness: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.ndim != 2 or k.shape != shape for k in ops):
            raise ValueError("Kraus operators must share one 2-D shape")
        for k in ops:
            k.setflags(write=False)
        total = sum(k.conj().T @ k for k in ops)
        eye = np.eye(shape[1])
        if self.trace_preserving:
            err = np.max(np.abs(total - eye))
            if err > TOL:
                raise ValueError(f"operators are not trace preserving (deviation {err:.3g})")
        else:
            top = np.linalg.eigvalsh((total + total.conj().T) / 2).max()
            if top > 1 + TOL:
                raise ValueError(f"filter is not trace non-increasing (max eigenvalue {top:.6g})")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "_completeness", total)

    @property
    def dim_in(self) -> int:
        return self.operators[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.operators[0].shape[0]

    @classmethod
    def identity(cls, n_qubits: int = 1) -> "KrausChannel":
        return cls((np.eye(1 << n_qubits),))

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "KrausChannel":
        return cls((np.asarray(u, dtype=complex),))

    def then(self, other: "KrausChannel") -> "KrausChannel":
        """Composition: apply ``self`` first, then ``other``."""
        if other.dim_in != self.dim_out:
            raise ValueError("dimension mismatch in channel composition")
        ops = tuple(b @ a for b in other.operators for a in self.operators)
        return KrausChannel(ops, self.trace_preserving and other.trace_preserving)


# --- standard kets, states and gates -------------------------------------

KET_G = np.array([1, 0], dtype=complex)
KET_E = np.array([0, 1], dtype=complex)
KET_GG = np.kron(KET_G, KET_G)
KET_GE = np.kron(KET_G, KET_E)
KET_EG = np.kron(KET_E, KET_G)
KET_EE = np.kron(KET_E, KET_E)
KET_PSI_PLUS = (KET_GE + KET_EG) / np.sqrt(2)
KET_PSI_MINUS = (KET_GE - KET_EG) / np.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
# control is the first (more significant) qubit
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

# written out so that the entries are exactly +-1/2
PSI_PLUS = DensityMatrix(np.array([[0, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 0]]) / 2)
PSI_MINUS = DensityMatrix(np.array([[0, 0, 0, 0], [0, 1, -1, 0], [0, -1, 1, 0], [0, 0, 0, 0]]) / 2)
GG = DensityMatrix.from_ket(KET_GG)
EE = DensityMatrix.from_ket(KET_EE)
GE = DensityMatrix.from_ket(KET_GE)
EG = DensityMatrix.from_ket(KET_EG)
MIXED = DensityMatrix((GE.data + EG.data) / 2)


# --- operations ----------------------------------------------------------


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker product with ``a``'s qubits first."""
    if a.n_qubits + b.n_qubits > MAX_QUBITS:
        raise UnsupportedDimensionError(
            f"{a.n_qubits} + {b.n_qubits} qubits exceeds the {MAX_QUBITS}-qubit limit"
        )
    return DensityMatrix(np.kron(a.data, b.data))


def apply_unitary(rho: DensityMatrix, u: np.ndarray, check: bool = True) -> DensityMatrix:
    u = np.asarray(u, dtype=complex)
    if u.shape != rho.data.shape:
        raise ValueError(f"unitary shape {u.shape} does not match state {rho.data.shape}")
    if check and np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > TOL:
        raise ValueError("matrix is not unitary")
    return DensityMatrix(u @ rho.data @ u.conj().T)


def apply_channel(rho: DensityMatrix, ch: KrausChannel) -> tuple[DensityMatrix | None, float]:
    """Apply ``ch`` and renormalize.

    Returns ``(state, weight)`` where ``weight`` is the trace of the
    unnormalized output. A filter whose weight falls below 1e-12 has
    annihilated the input; the state is then ``None`` and callers treat the
    branch as rejected with certainty.
    """
    if ch.dim_in != rho.dim:
        raise ValueError(f"channel acts on dimension {ch.dim_in}, state has {rho.dim}")
    m = rho.data
    sigma = sum(k @ m @ k.conj().T for k in ch.operators)
    weight = float(np.trace(sigma).real)
    if weight < ANNIHILATION_WEIGHT:
        if ch.trace_preserving:
            raise ValueError("trace-preserving channel produced zero trace")
        return None, max(weight, 0.0)
    return DensityMatrix(sigma / weight), weight


def _reorder(op: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Relabel an n-qubit operator written on qubits ``order`` to natural order."""
    n = len(order)
    inv = list(np.argsort(order))
    t = op.reshape((2,) * (2 * n))
    t = t.transpose(inv + [n + i for i in inv])
    return t.reshape(1 << n, 1 << n)


def embed_operator(op: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Lift a k-qubit operator acting on ``qubits`` to the full n-qubit space."""
    qubits = list(qubits)
    k = _n_qubits_of(np.asarray(op).shape[0])
    if len(qubits) != k:
        raise ValueError(f"operator acts on {k} qubits, got indices {qubits}")
    if len(set(qubits)) != k or any(not 0 <= q < n_qubits for q in qubits):
        raise IndexError(f"qubit indices {qubits} invalid for {n_qubits} qubits")
    if n_qubits > MAX_QUBITS:
        raise UnsupportedDimensionError(f"{n_qubits} qubits exceeds the {MAX_QUBITS}-qubit limit")
    rest = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(np.asarray(op, dtype=complex), np.eye(1 << len(rest)))
    return _reorder(full, qubits + rest)


def embed_channel(ch: KrausChannel, qubits: Sequence[int], n_qubits: int) -> KrausChannel:
    if ch.dim_in != ch.dim_out:
        raise ValueError("only square channels can be embedded")
    ops = tuple(embed_operator(k, qubits, n_qubits) for k in ch.operators)
    return KrausChannel(ops, ch.trace_preserving)


def embed_single_qubit_channel(ch: KrausChannel, qubit_index: int, n_qubits: int) -> KrausChannel:
    if ch.dim_in != 2:
        raise ValueError("expected a single-qubit channel")
    return embed_channel(ch, [qubit_index], n_qubits)


def _parse_outcome(outcome: str | Iterable[int]) -> list[int]:
    bits = [int(c) for c in outcome]
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"outcome must be a bitstring, got {outcome!r}")
    return bits


def measure_and_project(
    rho: DensityMatrix, qubit_indices: Sequence[int], outcome: str | Iterable[int]
) -> tuple[float, DensityMatrix | None]:
    """Computational-basis measurement of some qubits.

    Returns the outcome probability and the normalized state of the
    remaining qubits (``None`` when the probability is zero or when no
    qubits remain).
    """
    idx = list(qubit_indices)
    bits = _parse_outcome(outcome)
    n = rho.n_qubits
    if len(bits) != len(idx):
        raise ValueError("outcome length does not match number of measured qubits")
    if len(set(idx)) != len(idx) or any(not 0 <= q < n for q in idx):
        raise IndexError(f"qubit indices {idx} invalid for {n} qubits")
    t = rho.data.reshape((2,) * (2 * n))
    sl = [slice(None)] * (2 * n)
    for q, b in zip(idx, bits):
        sl[q] = b
        sl[n + q] = b
    rest = n - len(idx)
    block = t[tuple(sl)].reshape(1 << rest, 1 << rest)
    prob = float(np.trace(block).real)
    if prob <= ANNIHILATION_WEIGHT or rest == 0:
        return max(prob, 0.0), None
    return prob, DensityMatrix(block / prob)


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    keep = list(keep)
    n = rho.n_qubits
    drop = [q for q in range(n) if q not in keep]
    order = keep + drop
    t = rho.data.reshape((2,) * (2 * n)).transpose(order + [n + q for q in order])
    dk, dr = 1 << len(keep), 1 << len(drop)
    t = t.reshape(dk, dr, dk, dr)
    return DensityMatrix(np.einsum("ajbj->ab", t))


def fidelity_to_bell(rho: DensityMatrix, psi_minus: bool = False) -> float:
    """Overlap ``<Psi+|rho'|Psi+>``.

    With ``psi_minus=True`` the state is first phase corrected by a Z on
    the first qubit, which maps a Psi- herald onto Psi+.
    """
    if rho.n_qubits != 2:
        raise ValueError("fidelity_to_bell expects a two-qubit state")
    m = rho.data
    sign = -1.0 if psi_minus else 1.0  # Z on the first qubit flips the ge/eg coherence
    # <Psi+|rho|Psi+> written out, which keeps exact inputs exact
    f = 0.5 * float(m[1, 1].real + m[2, 2].real + sign * 2.0 * m[1, 2].real)
    return min(1.0, max(0.0, f))
