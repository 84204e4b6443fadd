"""Parameter sweeps, p_e optimization and scenario presets."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .channels import GateNoiseParams, MemoryParams
from .herald import AttemptParams
from .protocols import ChannelMetrics, Protocol, ProtocolConfig, run_protocol
from .sampling import stream_key

# sweepable parameters and where they live in a ProtocolConfig
ATTEMPT_FIELDS = ("p_e", "eta", "n_add")
MEMORY_FIELDS = {"t1": "t1", "t2phi": "t2phi", "env_excitation": "env_excitation"}
PARAMETERS = ATTEMPT_FIELDS + ("attempt_rate", "gate_epsilon", "trials") + tuple(MEMORY_FIELDS)

MIN_GRID = 11


class PePolicy(str, enum.Enum):
    FIXED = "fixed"
    MAX_FIDELITY = "max_fidelity"
    MAX_RATE = "max_rate"


class Objective(str, enum.Enum):
    FIDELITY = "fidelity"
    RATE = "rate"


def with_parameter(cfg: ProtocolConfig, name: str, value) -> ProtocolConfig:
    """Copy of ``cfg`` with one named parameter replaced."""
    if name in ATTEMPT_FIELDS:
        return replace(cfg, attempt=replace(cfg.attempt, **{name: float(value)}))
    if name in MEMORY_FIELDS:
        return replace(cfg, memory=replace(cfg.memory, **{MEMORY_FIELDS[name]: float(value)}))
    if name == "gate_epsilon":
        return replace(cfg, gate=GateNoiseParams(float(value)))
    if name == "attempt_rate":
        return replace(cfg, attempt_rate=float(value))
    if name == "trials":
        return replace(cfg, trials=int(value))
    raise KeyError(f"unknown sweep parameter {name!r}; expected one of {', '.join(PARAMETERS)}")


def point_seed(master_seed: int, point_index: int) -> int:
    """Seed for one sweep point; depends only on the master seed and the index."""
    return int(stream_key(np.uint64(master_seed), np.uint64(point_index)))


@dataclass(frozen=True)
class SweepSpec:
    """A grid of configurations.

    ``axes`` is a sequence of ``(parameter, values)``; points are their
    Cartesian product in row-major order. With ``eta_over_n_add`` set the
    sweep is coupled: only one of ``eta``/``n_add`` may be an axis and the
    other follows from the fixed ratio.
    """

    base: ProtocolConfig
    axes: tuple[tuple[str, tuple[float, ...]], ...]
    protocols: tuple[Protocol, ...] = ()
    eta_over_n_add: float | None = None
    pe_policy: PePolicy = PePolicy.FIXED
    pe_grid: int = MIN_GRID

    def __post_init__(self):
        axes = tuple((str(n), tuple(v)) for n, v in self.axes)
        if not axes:
            raise ValueError("a sweep needs at least one axis")
        names = [n for n, _ in axes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate sweep axis")
        for name, values in axes:
            if not values:
                raise ValueError(f"sweep axis {name!r} is empty")
            for v in values:
                with_parameter(self.base, name, v)  # validates name and range
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "protocols", tuple(Protocol(p) for p in self.protocols) or (self.base.protocol,))
        object.__setattr__(self, "pe_policy", PePolicy(self.pe_policy))
        if self.eta_over_n_add is not None:
            if not self.eta_over_n_add > 0:
                raise ValueError("eta_over_n_add must be positive")
            if ("eta" in names) == ("n_add" in names):
                raise ValueError("a coupled sweep needs exactly one of eta or n_add as an axis")
        if self.pe_policy is not PePolicy.FIXED and "p_e" in names:
            raise ValueError("p_e cannot be swept while it is being optimized")
        if self.pe_grid < MIN_GRID:
            raise ValueError(f"pe_grid must be at least {MIN_GRID}")

    def points(self) -> list[dict]:
        names = [n for n, _ in self.axes]
        out = []
        for combo in itertools.product(*(v for _, v in self.axes)):
            p = dict(zip(names, combo))
            if self.eta_over_n_add is not None:
                if "eta" in p:
                    p["n_add"] = p["eta"] / self.eta_over_n_add
                else:
                    p["eta"] = p["n_add"] * self.eta_over_n_add
            out.append(p)
        return out

    def config_at(self, index: int, point: dict, protocol: Protocol) -> ProtocolConfig:
        cfg = replace(self.base, protocol=protocol, master_seed=point_seed(self.base.master_seed, index))
        for name, value in point.items():
            cfg = with_parameter(cfg, name, value)
        return cfg


@dataclass(frozen=True)
class SweepResult:
    index: int
    point: dict
    protocol: Protocol
    config: ProtocolConfig
    metrics: ChannelMetrics


def _objective_value(m: ChannelMetrics, objective: Objective) -> float:
    if objective is Objective.RATE:
        return m.ebit_rate
    return m.fidelity_mean if m.fidelity_defined else -math.inf


def optimize_pe(
    cfg: ProtocolConfig,
    objective: Objective | str = Objective.FIDELITY,
    grid: int = MIN_GRID,
    threads: int = 1,
) -> tuple[float, ChannelMetrics]:
    """Maximize ``objective`` over ``p_e``.

    A uniform grid of ``grid`` interior points on (0, 1) is evaluated, then
    ``grid`` more points spanning one grid step either side of the best
    value. Every candidate runs with ``cfg.master_seed``, so candidates share
    their random numbers and the result is deterministic.
    """
    objective = Objective(objective)
    if grid < MIN_GRID:
        raise ValueError(f"grid must be at least {MIN_GRID}")
    seen: dict[float, ChannelMetrics] = {}

    def evaluate(values):
        for p in values:
            p = float(p)
            if p not in seen:
                seen[p] = run_protocol(cfg.with_attempt(p_e=p), threads=threads)

    step = 1.0 / (grid + 1)
    evaluate(np.arange(1, grid + 1) * step)
    best = max(seen, key=lambda p: _objective_value(seen[p], objective))
    lo, hi = max(best - step, step * 1e-3), min(best + step, 1.0 - step * 1e-3)
    evaluate(np.linspace(lo, hi, grid))
    # ties go to the smallest p_e so the answer does not depend on dict order
    best = max(sorted(seen), key=lambda p: _objective_value(seen[p], objective))
    return best, seen[best]


def run_sweep(spec: SweepSpec, threads: int = 1, order=None) -> list[SweepResult]:
    """Evaluate every (point, protocol) pair of ``spec``.

    Each point gets a seed derived from its index, so the results do not
    depend on the order in which points are evaluated; ``order`` (a
    permutation of point indices) only changes that order. Results are
    returned sorted by point index.
    """
    points = spec.points()
    order = range(len(points)) if order is None else list(order)
    if sorted(order) != list(range(len(points))):
        raise ValueError("order must be a permutation of the point indices")
    results = []
    for index in order:
        point = points[index]
        for protocol in spec.protocols:
            cfg = spec.config_at(index, point, protocol)
            if spec.pe_policy is PePolicy.FIXED:
                metrics = run_protocol(cfg, threads=threads)
            else:
                obj = Objective.RATE if spec.pe_policy is PePolicy.MAX_RATE else Objective.FIDELITY
                p_e, metrics = optimize_pe(cfg, obj, spec.pe_grid, threads)
                cfg = cfg.with_attempt(p_e=p_e)
            results.append(SweepResult(index, dict(point), protocol, cfg, metrics))
    results.sort(key=lambda r: r.index)
    return results


# --- scenario presets ---------------------------------------------------------


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    eta: float
    n_add: float
    attempt_rate: float
    t1: float = math.inf
    t2phi: float = math.inf
    description: str = ""
    path_efficiency: float = 1.0

    @property
    def end_to_end_eta(self) -> float:
        return self.eta * self.path_efficiency

    def with_path_efficiency(self, factor: float) -> "ScenarioPreset":
        if not 0.0 <= factor <= 1.0:
            raise ValueError(f"path efficiency must lie in [0, 1], got {factor}")
        return replace(self, path_efficiency=factor)

    def config(self, protocol: Protocol | str, p_e: float = 0.5, **overrides) -> ProtocolConfig:
        cfg = ProtocolConfig(
            protocol=Protocol(protocol),
            attempt=AttemptParams(p_e, self.end_to_end_eta, self.n_add),
            attempt_rate=self.attempt_rate,
            memory=MemoryParams(self.t1, self.t2phi),
        )
        return replace(cfg, **overrides)


PRESENT_T1 = 300e-6
PRESENT_RATE = 1e5

# Device rows list transducer efficiency only; scale by ``path_efficiency``
# for fiber coupling, filters and detectors. Continuous-wave devices get the
# present-day 100 kHz attempt rate.
_DEVICES = (
    ("bulk-linbo3", 0.087, 0.16, 500.0, "bulk LiNbO3 electro-optic"),
    ("thin-film-linbo3", 0.009, 0.12, PRESENT_RATE, "thin-film LiNbO3 electro-optic (CW)"),
    ("sin-membrane", 0.47, 3.2, PRESENT_RATE, "SiN membrane optomechanical (CW)"),
    ("si-linbo3-pom-a", 5.2e-5, 6.0, 1e5, "Si/LiNbO3 piezo-optomechanical, 100 kHz"),
    ("si-linbo3-pom-b", 0.05, 5.0, 1.7e5, "Si/LiNbO3 piezo-optomechanical, 170 kHz"),
    ("si-om", 0.0047, 0.58, PRESENT_RATE, "Si optomechanical (CW)"),
)

_PRESETS: dict[str, ScenarioPreset] = {
    p.name: p
    for p in (
        ScenarioPreset("present", 1e-4, 0.5, PRESENT_RATE, PRESENT_T1, description="approximate state of the art"),
        ScenarioPreset("present-no-t1", 1e-4, 0.5, PRESENT_RATE, description="state of the art with ideal memory"),
        ScenarioPreset("s2", 0.1, 0.01, 1e6, 1e-3, description="improvement scenario 2 (memory and rate inferred)"),
        ScenarioPreset("s3", 0.3, 0.001, 1e6, 10e-3, description="improvement scenario 3"),
        *(ScenarioPreset(n, eta, nadd, rate, PRESENT_T1, description=d) for n, eta, nadd, rate, d in _DEVICES),
    )
}


def list_presets() -> list[ScenarioPreset]:
    return list(_PRESETS.values())


def get_preset(name: str) -> ScenarioPreset:
    try:
        return _PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(_PRESETS)}") from None
