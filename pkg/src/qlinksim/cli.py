"""Command-line front end.

Config files are YAML mappings. Recognized keys (units in brackets)::

    protocol           one_click | two_click | epl | chi       (required)
    preset             name from ``qlinksim presets``; fills eta, n_add,
                       attempt_rate_hz, t1_s, t2phi_s
    path_efficiency    multiplier applied to a preset's eta      [1.0]
    eta                end-to-end efficiency, [0, 1]             [0.1]
    n_add              added noise photons per transducer        [0.1]
    p_e                excitation probability, [0, 1]            [0.5]
    attempt_rate_hz    attempt rate [Hz]                         [1e6]
    t1_s, t2phi_s      memory times [s], .inf for none           [.inf]
    env_excitation     excitation weight of the T1 bath          [0.0]
    gate_epsilon       CNOT quality, 1 = perfect                 [1.0]
    max_wait_attempts  storage cap in attempts; null = 10 * T1 in attempts
    max_trial_attempts attempt budget per trial                  [1000000]
    trials             trials per point                          [5000]
    seed               master seed, unsigned 64-bit              [0]
    sweep              optional mapping; turns the file into a sweep:
        axes             mapping parameter -> list of values
        protocols        list of protocols (default: ``protocol``)
        eta_over_n_add   fixed ratio for a coupled eta/n_add walk
        pe_policy        fixed | max_fidelity | max_rate         [fixed]
        pe_grid          p_e grid size when optimizing           [11]
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import __version__
from .channels import GateNoiseParams, MemoryParams
from .herald import AttemptParams
from .protocols import ChannelMetrics, Protocol, ProtocolConfig, run_protocol
from .sweeps import Objective, PePolicy, SweepResult, SweepSpec, get_preset, list_presets, optimize_pe, run_sweep

CSV_COLUMNS = (
    "protocol", "eta", "n_add", "p_e", "attempt_rate_hz", "t1_s", "t2phi_s", "gate_epsilon",
    "trials", "heralds", "accepted", "fidelity_mean", "fidelity_sem", "ebit_rate_hz", "seed",
)

DEFAULTS = {
    "eta": 0.1,
    "n_add": 0.1,
    "p_e": 0.5,
    "attempt_rate_hz": 1e6,
    "t1_s": math.inf,
    "t2phi_s": math.inf,
    "env_excitation": 0.0,
    "gate_epsilon": 1.0,
    "max_wait_attempts": None,
    "max_trial_attempts": 10**6,
    "trials": 5000,
    "seed": 0,
}
TOP_KEYS = set(DEFAULTS) | {"protocol", "preset", "path_efficiency", "sweep"}
SWEEP_KEYS = {"axes", "protocols", "eta_over_n_add", "pe_policy", "pe_grid"}
# config-file names of the sweepable parameters
AXIS_NAMES = {
    "eta": "eta", "n_add": "n_add", "p_e": "p_e", "attempt_rate_hz": "attempt_rate",
    "t1_s": "t1", "t2phi_s": "t2phi", "env_excitation": "env_excitation",
    "gate_epsilon": "gate_epsilon", "trials": "trials",
}
_AXIS_KEYS = {v: k for k, v in AXIS_NAMES.items()}


class ConfigError(ValueError):
    pass


def _check_keys(mapping: dict, allowed: set, where: str):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}; allowed: {', '.join(sorted(allowed))}")


def _float(raw, key):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None


def config_from_mapping(data: dict) -> ProtocolConfig | SweepSpec:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    _check_keys(data, TOP_KEYS, "config")
    if "protocol" not in data:
        raise ConfigError("missing required key 'protocol'")
    values = dict(DEFAULTS)
    if "preset" in data:
        preset = get_preset(str(data["preset"]))
        if "path_efficiency" in data:
            preset = preset.with_path_efficiency(_float(data["path_efficiency"], "path_efficiency"))
        values.update(
            eta=preset.end_to_end_eta, n_add=preset.n_add, attempt_rate_hz=preset.attempt_rate,
            t1_s=preset.t1, t2phi_s=preset.t2phi,
        )
    elif "path_efficiency" in data:
        raise ConfigError("path_efficiency only applies together with a preset")
    values.update({k: v for k, v in data.items() if k in DEFAULTS})
    try:
        protocol = Protocol(data["protocol"])
    except ValueError:
        raise ConfigError(
            f"protocol must be one of {', '.join(p.value for p in Protocol)}, got {data['protocol']!r}"
        ) from None
    try:
        wait = values["max_wait_attempts"]
        cfg = ProtocolConfig(
            protocol=protocol,
            attempt=AttemptParams(
                _float(values["p_e"], "p_e"), _float(values["eta"], "eta"), _float(values["n_add"], "n_add")
            ),
            attempt_rate=_float(values["attempt_rate_hz"], "attempt_rate_hz"),
            memory=MemoryParams(
                _float(values["t1_s"], "t1_s"), _float(values["t2phi_s"], "t2phi_s"),
                _float(values["env_excitation"], "env_excitation"),
            ),
            gate=GateNoiseParams(_float(values["gate_epsilon"], "gate_epsilon")),
            max_wait_attempts=None if wait is None else int(wait),
            trials=int(values["trials"]),
            master_seed=int(values["seed"]),
            max_trial_attempts=int(values["max_trial_attempts"]),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    sweep = data.get("sweep")
    if sweep is None:
        return cfg
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must be a mapping")
    _check_keys(sweep, SWEEP_KEYS, "sweep")
    axes_raw = sweep.get("axes") or {}
    if not isinstance(axes_raw, dict):
        raise ConfigError("sweep.axes must map parameter names to value lists")
    axes = []
    for key, vals in axes_raw.items():
        if key not in AXIS_NAMES:
            raise ConfigError(f"unknown sweep axis {key!r}; allowed: {', '.join(AXIS_NAMES)}")
        if not isinstance(vals, list):
            raise ConfigError(f"sweep axis {key!r} must be a list")
        axes.append((AXIS_NAMES[key], tuple(_float(v, key) for v in vals)))
    try:
        return SweepSpec(
            base=cfg,
            axes=tuple(axes),
            protocols=tuple(sweep.get("protocols") or ()),
            eta_over_n_add=None if sweep.get("eta_over_n_add") is None else _float(sweep["eta_over_n_add"], "eta_over_n_add"),
            pe_policy=sweep.get("pe_policy", PePolicy.FIXED.value),
            pe_grid=int(sweep.get("pe_grid", 11)),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike) -> ProtocolConfig | SweepSpec:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_mapping(data or {})


def config_to_mapping(config: ProtocolConfig | SweepSpec) -> dict:
    if isinstance(config, SweepSpec):
        out = config_to_mapping(config.base)
        sweep = {"axes": {_AXIS_KEYS[n]: list(v) for n, v in config.axes}}
        sweep["protocols"] = [p.value for p in config.protocols]
        if config.eta_over_n_add is not None:
            sweep["eta_over_n_add"] = config.eta_over_n_add
        sweep["pe_policy"] = config.pe_policy.value
        sweep["pe_grid"] = config.pe_grid
        out["sweep"] = sweep
        return out
    return {
        "protocol": config.protocol.value,
        "eta": config.attempt.eta,
        "n_add": config.attempt.n_add,
        "p_e": config.attempt.p_e,
        "attempt_rate_hz": config.attempt_rate,
        "t1_s": config.memory.t1,
        "t2phi_s": config.memory.t2phi,
        "env_excitation": config.memory.env_excitation,
        "gate_epsilon": config.gate.epsilon,
        "max_wait_attempts": config.max_wait_attempts,
        "max_trial_attempts": config.max_trial_attempts,
        "trials": config.trials,
        "seed": config.master_seed,
    }


def emit(config: ProtocolConfig | SweepSpec) -> str:
    """YAML text that :func:`load_config` turns back into ``config``."""
    return yaml.safe_dump(config_to_mapping(config), sort_keys=False)


# --- output ---------------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return repr(x)
    return str(x)


def metrics_row(cfg: ProtocolConfig, m: ChannelMetrics) -> dict:
    return {
        "protocol": cfg.protocol.value,
        "eta": cfg.attempt.eta,
        "n_add": cfg.attempt.n_add,
        "p_e": cfg.attempt.p_e,
        "attempt_rate_hz": cfg.attempt_rate,
        "t1_s": cfg.memory.t1,
        "t2phi_s": cfg.memory.t2phi,
        "gate_epsilon": cfg.gate.epsilon,
        "trials": m.trials,
        "heralds": m.heralds,
        "accepted": m.accepted,
        "fidelity_mean": m.fidelity_mean,
        "fidelity_sem": m.fidelity_sem,
        "ebit_rate_hz": m.ebit_rate,
        "seed": cfg.master_seed,
    }


def render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
        return json.dumps(clean, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_num(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def write_output(text: str, out_path, config, started: str) -> None:
    """Write results and, for file output, a ``<out>.manifest.json`` next to them."""
    if out_path is None:
        sys.stdout.write(text)
        return
    out = Path(out_path)
    out.write_text(text)
    manifest = {
        "tool": "qlinksim",
        "version": __version__,
        "config": config_to_mapping(config),
        "master_seed": (config.base if isinstance(config, SweepSpec) else config).master_seed,
        "started": started,
        "finished": _now(),
        "outputs": {out.name: hashlib.sha256(text.encode()).hexdigest()},
    }
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def cmd_run(config: ProtocolConfig, out_path=None, fmt: str = "csv", threads: int = 1) -> int:
    started = _now()
    m = run_protocol(config, threads=threads)
    write_output(render([metrics_row(config, m)], fmt), out_path, config, started)
    return 0


def cmd_sweep(spec: SweepSpec, out_path=None, fmt: str = "csv", threads: int = 1) -> int:
    started = _now()
    results: list[SweepResult] = run_sweep(spec, threads=threads)
    write_output(render([metrics_row(r.config, r.metrics) for r in results], fmt), out_path, spec, started)
    return 0


def cmd_optimize_pe(config: ProtocolConfig, objective="fidelity", grid: int = 11, out_path=None,
                    fmt: str = "csv", threads: int = 1) -> int:
    started = _now()
    p_e, m = optimize_pe(config, objective, grid, threads)
    best = config.with_attempt(p_e=p_e)
    print(f"p_e_opt={p_e:.6g} fidelity={m.fidelity_mean:.6g} sem={m.fidelity_sem:.3g} "
          f"ebit_rate_hz={m.ebit_rate:.6g}", file=sys.stderr if out_path is None else sys.stdout)
    write_output(render([metrics_row(best, m)], fmt), out_path, best, started)
    return 0


def cmd_presets(stream=None) -> int:
    stream = stream or sys.stdout
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("name", "eta", "n_add", "attempt_rate_hz", "t1_s", "t2phi_s", "description"))
    for p in list_presets():
        w.writerow((p.name, _num(p.eta), _num(p.n_add), _num(p.attempt_rate), _num(p.t1), _num(p.t2phi), p.description))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qlinksim", description="Heralded entanglement and distillation simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--trials", type=int, help="trials per point, overrides the config")

    common(sub.add_parser("run", help="run one configuration"))
    common(sub.add_parser("sweep", help="run a parameter sweep"))
    opt = sub.add_parser("optimize-pe", help="find the best excitation probability")
    common(opt)
    opt.add_argument("--objective", choices=[o.value for o in Objective], default="fidelity")
    opt.add_argument("--grid", type=int, default=11)
    sub.add_parser("presets", help="list scenario presets")
    return ap


def _override(config, seed, trials):
    base = config.base if isinstance(config, SweepSpec) else config
    if seed is not None:
        base = replace(base, master_seed=seed)
    if trials is not None:
        base = replace(base, trials=trials)
    return replace(config, base=base) if isinstance(config, SweepSpec) else base


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            return cmd_presets()
        config = _override(load_config(args.config), args.seed, args.trials)
        if args.command == "sweep":
            if not isinstance(config, SweepSpec):
                raise ConfigError("the sweep command needs a 'sweep' section in the config")
            return cmd_sweep(config, args.out, args.format, args.threads)
        if isinstance(config, SweepSpec):
            raise ConfigError(f"the {args.command} command does not take a 'sweep' section")
        if args.command == "run":
            return cmd_run(config, args.out, args.format, args.threads)
        return cmd_optimize_pe(config, args.objective, args.grid, args.out, args.format, args.threads)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
