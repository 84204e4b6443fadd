"""Counter-based random streams for reproducible Monte Carlo trials.

Every trial owns its own stream, addressed by ``(master_seed, stream_id)``
with ``stream_id = trial_index * 256 + purpose_tag``. The draw at position
``counter`` is a pure function of those three numbers, so results do not
depend on worker count or on the order in which trials are evaluated.

Mixing function (fixed for reproducibility)::

    mix64(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
               z ^= z >> 27; z *= 0x94D049BB133111EB
               z ^= z >> 31
    key      = mix64(mix64(master_seed + G) ^ stream_id)
    word[c]  = mix64(key + (c + 1) * G)          G = 0x9E3779B97F4A7C15
    uniform  = (word >> 11) * 2**-53              in [0, 1)

``word[c]`` is the c-th output of SplitMix64 seeded with ``key``. For a
fixed seed the map ``stream_id -> key`` is a bijection because ``mix64``
is.

Poisson variates use inversion by sequential search (one uniform) when the
mean is below 10 and Hormann's PTRS transformed rejection (two uniforms per
round) otherwise.
"""

from __future__ import annotations

import math

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

TAG_BITS = 8
MAX_POISSON_MEAN = 1e3
_INVERSION_CUTOFF = 10.0

# purpose tags
TAG_HERALD = 1
TAG_ACCEPT = 2
TAG_TEST = 255

_U64 = (1 << 64) - 1


@numba.njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True)
def stream_key(master_seed, stream_id):
    return mix64(mix64(np.uint64(master_seed) + GOLDEN) ^ np.uint64(stream_id))


@numba.njit(cache=True)
def uniform_at(key, counter):
    w = mix64(np.uint64(key) + (np.uint64(counter) + np.uint64(1)) * GOLDEN)
    return float(w >> _S11) * _INV53


@numba.njit(cache=True)
def bernoulli_at(key, ctr, p):
    return uniform_at(key, ctr) < p, ctr + 1


@numba.njit(cache=True)
def _poisson_inversion(key, ctr, mean, p0):
    u = uniform_at(key, ctr)
    ctr += 1
    k = 0
    pk = p0
    cdf = pk
    # cdf can stall just short of 1 in floating point; 200 terms is far in
    # the tail for any mean below 10
    while u >= cdf and k < 200:
        k += 1
        pk *= mean / k
        cdf += pk
    return k, ctr


@numba.njit(cache=True)
def _poisson_ptrs(key, ctr, lam):
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = uniform_at(key, ctr) - 0.5
        v = uniform_at(key, ctr + 1)
        ctr += 2
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k), ctr
        if k < 0 or (us < 0.013 and v > us):
            continue
        lhs = math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
        rhs = -lam + k * loglam - math.lgamma(k + 1.0)
        if lhs <= rhs:
            return int(k), ctr


@numba.njit(cache=True)
def poisson_at_pre(key, ctr, mean, p0):
    """Poisson draw with ``p0 = exp(-mean)`` supplied by the caller."""
    if mean <= 0.0:
        return 0, ctr
    if mean < _INVERSION_CUTOFF:
        return _poisson_inversion(key, ctr, mean, p0)
    return _poisson_ptrs(key, ctr, mean)


@numba.njit(cache=True)
def poisson_at(key, ctr, mean):
    return poisson_at_pre(key, ctr, mean, math.exp(-mean))


@numba.njit(cache=True)
def thin_at(key, ctr, n, p):
    hits = 0
    for _ in range(n):
        if uniform_at(key, ctr) < p:
            hits += 1
        ctr += 1
    return hits, ctr


@numba.njit(cache=True)
def _uniform_block(key, ctr, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform_at(key, ctr + i)
    return out


@numba.njit(cache=True)
def _poisson_block(key, ctr, mean, n):
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i], ctr = poisson_at(key, ctr, mean)
    return out, ctr


def stream_id(trial_index: int, purpose_tag: int) -> int:
    if not 0 <= purpose_tag < (1 << TAG_BITS):
        raise ValueError(f"purpose tag must fit in {TAG_BITS} bits")
    if not 0 <= trial_index < (1 << (64 - TAG_BITS)):
        raise ValueError("trial index out of range")
    return (trial_index << TAG_BITS) | purpose_tag


class RngStream:
    """One deterministic random stream: a key plus a position counter.

    Each draw advances ``counter``; :meth:`copy` forks an independent
    cursor at the same position.
    """

    __slots__ = ("master_seed", "stream_id", "key", "counter")

    def __init__(self, master_seed: int, stream_id: int, counter: int = 0):
        self.master_seed = int(master_seed) & _U64
        self.stream_id = int(stream_id) & _U64
        self.key = int(stream_key(np.uint64(self.master_seed), np.uint64(self.stream_id)))
        self.counter = int(counter)

    def __repr__(self):
        return f"RngStream(seed={self.master_seed}, stream_id={self.stream_id}, counter={self.counter})"

    def copy(self) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, self.counter)

    def uniform(self) -> float:
        u = uniform_at(np.uint64(self.key), self.counter)
        self.counter += 1
        return u

    def uniforms(self, n: int) -> np.ndarray:
        out = _uniform_block(np.uint64(self.key), self.counter, n)
        self.counter += n
        return out


def derive_stream(master_seed: int, trial_index: int, purpose_tag: int) -> RngStream:
    return RngStream(master_seed, stream_id(trial_index, purpose_tag))


def _check_prob(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return p


def bernoulli(stream: RngStream, p: float) -> bool:
    p = _check_prob(p)
    return stream.uniform() < p


def poisson(stream: RngStream, mean: float) -> int:
    mean = float(mean)
    if mean < 0 or not math.isfinite(mean):
        raise ValueError(f"Poisson mean must be finite and non-negative, got {mean}")
    if mean > MAX_POISSON_MEAN:
        raise ValueError(f"Poisson mean {mean} exceeds the supported {MAX_POISSON_MEAN:g}")
    k, stream.counter = poisson_at(np.uint64(stream.key), stream.counter, mean)
    return int(k)


def poisson_many(stream: RngStream, mean: float, n: int) -> np.ndarray:
    """``n`` consecutive Poisson draws; identical to calling :func:`poisson` n times."""
    poisson(stream.copy(), mean)  # argument validation only
    out, stream.counter = _poisson_block(np.uint64(stream.key), stream.counter, float(mean), n)
    return out


def binomial_thin(stream: RngStream, n: int, p: float) -> int:
    """Count successes among ``n`` Bernoulli(p) draws taken in sequence."""
    p = _check_prob(p)
    if n < 0:
        raise ValueError("n must be non-negative")
    hits, stream.counter = thin_at(np.uint64(stream.key), stream.counter, int(n), p)
    return int(hits)
