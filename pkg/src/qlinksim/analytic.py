"""Closed-form heralded states for cross-checking the Monte Carlo engine.

These expressions describe detector-side noise through ``p_d``, the
probability of at least one noise click in a given detector. The Monte
Carlo side is parameterized by ``n_add`` per transducer; the bridge is
:func:`dark_click_prob`.

Matrices use the ordering ``|00>, |01>, |10>, |11>`` with ``|0> = |g>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qstate
from .qstate import DensityMatrix

_PSI_PLUS = qstate.PSI_PLUS.data
_P00 = qstate.GG.data
_P11 = qstate.EE.data
_P01_10 = np.diag([0.0, 1.0, 1.0, 0.0]).astype(complex)


class DegenerateInputError(ValueError):
    """All mixture weights vanish, so no state is heralded."""


@dataclass(frozen=True)
class AnalyticParams:
    p_e: float
    eta: float
    p_d: float

    def __post_init__(self):
        for name in ("p_e", "eta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.p_d < 1.0:
            raise ValueError(f"p_d must lie in [0, 1), got {self.p_d}")

    @classmethod
    def from_noise(cls, p_e: float, eta: float, n_add: float) -> "AnalyticParams":
        return cls(p_e, eta, dark_click_prob(n_add, eta))


def dark_click_prob(n_add: float, eta: float) -> float:
    """Noise-click probability per detector, ``1 - exp(-eta * n_add)``.

    Each transducer sends a Poisson(``n_add``) photon number that is thinned
    with efficiency ``eta``; split over two detectors and summed over two
    transducers, each detector sees mean ``eta * n_add``.
    """
    if n_add < 0:
        raise ValueError(f"n_add must be non-negative, got {n_add}")
    return -math.expm1(-eta * n_add)


def _mix(weights, projectors) -> DensityMatrix:
    total = sum(w * np.trace(p).real for w, p in zip(weights, projectors))
    if not total > 0:
        raise DegenerateInputError("all heralding weights vanish")
    rho = sum(w * p for w, p in zip(weights, projectors)) / total
    return DensityMatrix(rho)


def one_click_weights(params: AnalyticParams) -> tuple[float, float, float, float]:
    """Unnormalized weights of ``|00>``, Psi+, the dephased pair and ``|11>``."""
    pe, eta, pd = params.p_e, params.eta, params.p_d
    w00 = (1 - pe) ** 2 * 2 * pd * (1 - pd)
    wbell = 2 * pe * (1 - pe) * eta * (1 - pd)
    wdeph = pe * (1 - pe) * (1 - eta) * (1 - pd) * 2 * pd
    w11 = pe**2 * ((1 - (1 - eta) ** 2) + (1 - eta) ** 2 * 2 * pd) * (1 - pd)
    return w00, wbell, wdeph, w11


def two_click_weights(params: AnalyticParams) -> tuple[float, float, float, float]:
    pe, eta, pd = params.p_e, params.eta, params.p_d
    w00 = (
        (1 - pe) ** 2 * 2 * pd * (1 - pd)
        * ((1 - (1 - eta) ** 2) * (1 - pd) + (1 - eta) ** 2 * 2 * pd * (1 - pd))
    )
    wbell = 2 * pe * (1 - pe) * eta**2 * (1 - pd) ** 2
    # taken as written: this term carries no excitation-probability prefactor
    wdeph = (eta * (1 - pd) + (1 - eta) * (1 - pd) * 2 * pd) ** 2 - eta**2 * (1 - pd) ** 2
    w11 = pe**2 * ((1 - (1 - eta) ** 2) + (1 - eta) ** 2 * 2 * pd) * (1 - pd) ** 2 * 2 * pd
    return w00, wbell, wdeph, w11


_PROJECTORS = (_P00, _PSI_PLUS, _P01_10, _P11)


def rho_one_click_analytic(params: AnalyticParams) -> DensityMatrix:
    return _mix(one_click_weights(params), _PROJECTORS)


def rho_two_click_analytic(params: AnalyticParams) -> DensityMatrix:
    return _mix(two_click_weights(params), _PROJECTORS)


def fidelity_one_click_analytic(params: AnalyticParams) -> float:
    """Small-``p_e`` approximation of the one-click heralded fidelity to Psi+.

    Valid for ``p_d / eta << p_e << 1``.
    """
    pe, eta, pd = params.p_e, params.eta, params.p_d
    num = 2 * pe * (1 - pe) * eta + pe * (1 - pe) * (1 - eta) * 2 * pd
    den = pe * eta * (1 - 2 * pd) * (2 - pe * eta) + 2 * pd
    if den == 0:
        raise DegenerateInputError("fidelity denominator vanishes")
    return num / den


def fidelity_two_click_analytic(params: AnalyticParams) -> float:
    return qstate.fidelity_to_bell(rho_two_click_analytic(params))
