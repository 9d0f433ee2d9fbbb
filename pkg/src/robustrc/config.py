"""Experiment files: TOML descriptions of sweeps and sensitivity studies.

Example::

    seed = 2014
    workers = 1
    output_dir = "results"

    [[sweep]]
    name = "scr_narma"
    model = "SCR"
    task = "NARMA10"
    N = 100
    k = 0.02
    sigma = 0.01
    runs = 50

    [[sensitivity]]
    name = "esn_density"
    N = 100
    v = 0.1
    lambda = 0.9
    vary = "l"
    values = [0.1, 0.2, 0.3]
    sigmas = [0.0, 0.01, 0.05, 0.1]

Every key is checked before anything runs; unknown keys are errors.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

from .errors import ContractViolation
from .harness import SweepConfig, default_grid
from .reservoir import NoiseSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


TOP_KEYS = {"seed", "workers", "output_dir", "sweep", "sensitivity"}
SWEEP_KEYS = {
    "name", "model", "task", "N", "l", "v_grid", "r_grid", "lambda_grid", "k", "sigma", "n",
    "runs", "tau_max", "gamma", "narma_mapping", "train_len", "test_len", "washout", "paired",
}
SENSITIVITY_KEYS = {
    "name", "model", "task", "N", "l", "v", "lambda", "k", "n", "sigmas", "vary", "values",
    "runs", "tau_max", "gamma", "narma_mapping", "train_len", "test_len", "washout",
}
OVERRIDABLE = {"runs", "seed", "sigma", "k", "workers", "output_dir"}


@dataclass
class SensitivityConfig:
    name: str
    base: SweepConfig
    sigmas: tuple
    vary: str
    values: tuple


@dataclass
class ExperimentFile:
    seed: int = 0
    workers: int = 1
    output_dir: str = "."
    sweeps: list = field(default_factory=list)
    sensitivities: list = field(default_factory=list)


def _check_keys(table, allowed, where):
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _name(table, where):
    name = table.get("name")
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        raise ConfigError(f"{where}: 'name' must be a non-empty string without path separators")
    return name


def _num(table, key, where, default=None, kind=float):
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}: '{key}' must be a number")
    if kind is int and int(val) != val:
        raise ConfigError(f"{where}: '{key}' must be an integer")
    return kind(val)


def _grid(table, key, where):
    if key not in table:
        return tuple(default_grid())
    val = table[key]
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{where}: '{key}' must be a non-empty list")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in val):
        raise ConfigError(f"{where}: '{key}' must hold numbers")
    return tuple(float(x) for x in val)


def _task(table, where, default):
    task = str(table.get("task", default)).upper()
    if task == "NARMA":
        task = "NARMA10"
    if task not in ("MC", "NARMA10"):
        raise ConfigError(f"{where}: task must be MC or NARMA10")
    return task


def _common(table, where, seed, overrides):
    kw = dict(
        runs=_num(table, "runs", where, 50, int),
        fraction=_num(table, "k", where, 0.0),
        noise_count=_num(table, "n", where, None, int),
        tau_max=_num(table, "tau_max", where, 200, int),
        ridge_gamma=_num(table, "gamma", where, 0.0),
        train_len=_num(table, "train_len", where, 2000, int),
        test_len=_num(table, "test_len", where, 2000, int),
        washout=_num(table, "washout", where, None, int),
        narma_mapping=str(table.get("narma_mapping", "interval")),
        master_seed=seed,
    )
    if overrides.get("runs") is not None:
        kw["runs"] = int(overrides["runs"])
    if overrides.get("k") is not None:
        kw["fraction"] = float(overrides["k"])
    return kw


def _check_noise_count(cfg, where):
    """Reject configurations whose derived perturbation count exceeds nnz."""
    spec = cfg.reservoir_spec(cfg.v_grid[0], cfg.p_grid[0])
    nnz = spec.expected_nnz
    noise = NoiseSpec(cfg.fraction, cfg.sigma, cfg.noise_count)
    try:
        n = noise.perturb_count(nnz if spec.kind == "SCR" else int(round(nnz)))
    except ContractViolation as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return n


def _sweep(table, where, seed, overrides):
    _check_keys(table, SWEEP_KEYS, where)
    name = _name(table, where)
    model = str(table.get("model", "")).upper()
    if model not in ("SCR", "ESN"):
        raise ConfigError(f"{where}: model must be SCR or ESN")
    if model == "SCR" and "lambda_grid" in table:
        raise ConfigError(f"{where}: SCR sweeps take r_grid, not lambda_grid")
    if model == "ESN" and "r_grid" in table:
        raise ConfigError(f"{where}: ESN sweeps take lambda_grid, not r_grid")
    if "N" not in table:
        raise ConfigError(f"{where}: 'N' is required")
    kw = _common(table, where, seed, overrides)
    sigma = _num(table, "sigma", where, 0.0)
    if overrides.get("sigma") is not None:
        sigma = float(overrides["sigma"])
    paired = table.get("paired", True)
    if not isinstance(paired, bool):
        raise ConfigError(f"{where}: 'paired' must be true or false")
    try:
        cfg = SweepConfig(
            model=model,
            task=_task(table, where, "MC"),
            n=_num(table, "N", where, None, int),
            v_grid=_grid(table, "v_grid", where),
            p_grid=_grid(table, "r_grid" if model == "SCR" else "lambda_grid", where),
            l=_num(table, "l", where),
            sigma=sigma,
            paired=paired,
            **kw,
        )
    except (ContractViolation, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    _check_noise_count(cfg, where)
    return name, cfg


def _sensitivity(table, where, seed, overrides):
    _check_keys(table, SENSITIVITY_KEYS, where)
    name = _name(table, where)
    vary = str(table.get("vary", ""))
    vary = {"l": "l", "N": "n", "n": "n"}.get(vary)
    if vary is None:
        raise ConfigError(f"{where}: 'vary' must be 'l' or 'N'")
    values = table.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}: 'values' must be a non-empty list")
    sigmas = _grid(table, "sigmas", where) if "sigmas" in table else None
    if sigmas is None:
        raise ConfigError(f"{where}: 'sigmas' is required")
    if any(s < 0 for s in sigmas):
        raise ConfigError(f"{where}: sigmas must be non-negative")
    model = str(table.get("model", "ESN")).upper()
    if model != "ESN":
        raise ConfigError(f"{where}: sensitivity studies vary ESN density or size; model must be ESN")
    kw = _common(table, where, seed, overrides)
    for key in ("v", "lambda"):
        if key not in table:
            raise ConfigError(f"{where}: '{key}' is required")
    n = _num(table, "N", where, None, int)
    l = _num(table, "l", where)
    if vary == "l":
        if n is None:
            raise ConfigError(f"{where}: 'N' is required when varying l")
        values = tuple(float(x) for x in values)
        l = values[0]
    else:
        if l is None:
            raise ConfigError(f"{where}: 'l' is required when varying N")
        if any(isinstance(x, bool) or int(x) != x for x in values):
            raise ConfigError(f"{where}: sizes must be integers")
        values = tuple(int(x) for x in values)
        n = values[0]
    try:
        base = SweepConfig(
            model="ESN",
            task=_task(table, where, "NARMA10"),
            n=n,
            v_grid=(_num(table, "v", where),),
            p_grid=(_num(table, "lambda", where),),
            l=l,
            **kw,
        )
        for val in values:
            probe = replace(base, l=val) if vary == "l" else replace(base, n=val)
            _check_noise_count(probe, where)
    except (ContractViolation, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return SensitivityConfig(name, base, sigmas, vary, values)


def parse_experiment(data, overrides=None):
    """Validate a decoded TOML document into an :class:`ExperimentFile`."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    bad = set(overrides) - OVERRIDABLE
    if bad:
        raise ConfigError(f"cannot override {', '.join(sorted(bad))}")
    _check_keys(data, TOP_KEYS, "experiment file")
    seed = overrides.get("seed", data.get("seed", 0))
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("'seed' must be an integer in [0, 2^64)")
    workers = overrides.get("workers", data.get("workers", 1))
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("'workers' must be a positive integer")
    output_dir = overrides.get("output_dir", data.get("output_dir", "."))
    if not isinstance(output_dir, str):
        raise ConfigError("'output_dir' must be a string")

    exp = ExperimentFile(seed=seed, workers=workers, output_dir=output_dir)
    for key in ("sweep", "sensitivity"):
        if key in data and (not isinstance(data[key], list)
                            or not all(isinstance(t, dict) for t in data[key])):
            raise ConfigError(f"'{key}' must be an array of tables ([[{key}]])")
    for i, table in enumerate(data.get("sweep", [])):
        exp.sweeps.append(_sweep(table, f"sweep[{i}]", seed, overrides))
    for i, table in enumerate(data.get("sensitivity", [])):
        exp.sensitivities.append(_sensitivity(table, f"sensitivity[{i}]", seed, overrides))
    if not exp.sweeps and not exp.sensitivities:
        raise ConfigError("experiment file declares no sweeps or sensitivity studies")
    names = [n for n, _ in exp.sweeps] + [s.name for s in exp.sensitivities]
    if len(set(names)) != len(names):
        raise ConfigError("sweep and sensitivity names must be unique")
    return exp


def load_experiment(path, overrides=None):
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return parse_experiment(data, overrides)


def resolved(exp):
    """Plain-dict view of the fully resolved experiment, including derived counts."""
    sweeps = []
    for name, cfg in exp.sweeps:
        d = {"name": name, **cfg.to_dict(), "perturb_count": _check_noise_count(cfg, name)}
        sweeps.append(d)
    sens = []
    for s in exp.sensitivities:
        sens.append({"name": s.name, "vary": s.vary, "values": list(s.values),
                     "sigmas": list(s.sigmas), "base": s.base.to_dict()})
    return {"seed": exp.seed, "workers": exp.workers, "output_dir": exp.output_dir,
            "sweep": sweeps, "sensitivity": sens}
