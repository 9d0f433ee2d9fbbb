"""Experiment protocol: seeded trials, paired clean/noisy sweeps, run averaging."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import tasks
from .errors import ContractViolation, NumericalFailure, TrialFailure
from .linalg import ridge_solve
from .reservoir import NoiseSpec, ReservoirSpec, build_reservoir, drive, half

__all__ = [
    "ROLES",
    "derive_seed",
    "TrialConfig",
    "TrialResult",
    "SweepConfig",
    "Surface",
    "SweepResult",
    "SensitivityResult",
    "run_trial",
    "run_sweep",
    "sensitivity_sweep",
    "default_grid",
]

log = logging.getLogger(__name__)

ROLES = ("stream", "reservoir", "noise", "init")
TASKS = ("MC", "NARMA10")
_MASK64 = (1 << 64) - 1


def default_grid():
    return [round(0.1 * i, 10) for i in range(1, 10)]


def derive_seed(master, grid_index, run_index, role):
    """64-bit substream seed from a keyed BLAKE2b hash of all arguments."""
    if role not in ROLES:
        raise ContractViolation(f"unknown seed role {role!r}")
    payload = struct.pack(
        "<QqqB", int(master) & _MASK64, int(grid_index), int(run_index), ROLES.index(role)
    )
    digest = hashlib.blake2b(payload, digest_size=8, person=b"robustrc-seed").digest()
    return int.from_bytes(digest, "little")


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class TrialConfig:
    reservoir: ReservoirSpec
    noise: NoiseSpec = NoiseSpec()
    task: str = "MC"
    train_len: int = 2000
    test_len: int = 2000
    washout: Optional[int] = None
    tau_max: int = tasks.TAU_MAX
    ridge_gamma: float = 0.0
    seed: int = 0
    grid_index: int = 0
    run_index: int = 0
    narma_mapping: str = "interval"
    max_regenerations: int = 20

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractViolation(f"unknown task {self.task!r}")
        if self.train_len < 1 or self.test_len < 1:
            raise ContractViolation("train and test windows need at least one step")
        if self.washout is not None and self.washout < 0:
            raise ContractViolation("washout must be non-negative")
        if self.tau_max < 1:
            raise ContractViolation("tau_max must be at least 1")
        if self.ridge_gamma < 0:
            raise ContractViolation("ridge_gamma must be non-negative")
        if self.narma_mapping not in ("interval", "literal"):
            raise ContractViolation(f"unknown narma_mapping {self.narma_mapping!r}")

    @property
    def washout_steps(self):
        return half(self.reservoir.n) if self.washout is None else int(self.washout)

    def seeds(self):
        return {role: derive_seed(self.seed, self.grid_index, self.run_index, role) for role in ROLES}


@dataclass
class TrialResult:
    metric: tasks.MetricReport
    seeds: dict
    reservoir_hash: str
    nnz: int
    perturb_count: int
    regenerations: int = 0

    @property
    def value(self):
        return self.metric.value


def _task_stream(cfg, stream_seed):
    """Raw input stream plus the network input and targets for the task."""
    length = 2 * (cfg.washout_steps + max(cfg.train_len, cfg.test_len))
    seed = stream_seed
    for attempt in range(cfg.max_regenerations + 1):
        raw = tasks.gen_stream(length, _rng(seed))
        if cfg.task == "MC":
            return raw.values, raw.values, None, attempt
        u = tasks.to_narma_input(raw, cfg.narma_mapping)
        y = tasks.narma10(u)
        if not y.diverged:
            return raw.values, u.values, y.values, attempt
        log.info("NARMA10 diverged at step %d (stream seed %d); regenerating", y.diverged_at, seed)
        seed = derive_seed(stream_seed, attempt + 1, 0, "stream")
    raise TrialFailure("NARMA10 stream kept diverging", seeds=cfg.seeds())


def run_trial(cfg, hook: Optional[Callable[[str, np.ndarray], None]] = None):
    """Build, train and test one reservoir; returns the test-window metric.

    ``hook`` is called with ``("train_end", state)`` and ``("test_start",
    state)`` for instrumentation.
    """
    seeds = cfg.seeds()
    washout = cfg.washout_steps
    try:
        inst = build_reservoir(cfg.reservoir, _rng(seeds["reservoir"]), seed=seeds["reservoir"])
        inst.reset_state(_rng(seeds["init"]))
        raw, inputs, targets, regenerations = _task_stream(cfg, seeds["stream"])
        noise_rng = _rng(seeds["noise"])
        n_perturb = cfg.noise.perturb_count(inst.nnz)

        train_stop = washout + cfg.train_len
        x_train = drive(inst, inputs[:train_stop], washout, cfg.noise, noise_rng)
        if hook is not None:
            hook("train_end", inst.state.copy())
            hook("test_start", inst.state.copy())
        test_stop = train_stop + washout + cfg.test_len
        x_test = drive(inst, inputs[train_stop:test_stop], washout, cfg.noise, noise_rng)

        train_idx = (washout, train_stop)
        test_idx = (train_stop + washout, test_stop)
        if cfg.task == "MC":
            y_train = tasks.delayed_inputs(raw, *train_idx, cfg.tau_max)
            w_out = ridge_solve(x_train, y_train, cfg.ridge_gamma)
            y_test = tasks.delayed_inputs(raw, *test_idx, cfg.tau_max)
            profile = tasks.mc_profile(y_test, x_test @ w_out)
            metric = tasks.MetricReport("MC", tasks.memory_capacity(profile), mc_profile=profile)
        else:
            w_out = ridge_solve(x_train, targets[slice(*train_idx)], cfg.ridge_gamma)
            pred = (x_test @ w_out).ravel()
            metric = tasks.nmse(pred, targets[slice(*test_idx)])
    except (NumericalFailure, ContractViolation) as exc:
        raise TrialFailure(str(exc), seeds=seeds, params=_trial_params(cfg)) from exc
    if not math.isfinite(metric.value):
        raise TrialFailure("non-finite metric", seeds=seeds, params=_trial_params(cfg))
    return TrialResult(metric, seeds, inst.fingerprint(), inst.nnz, n_perturb, regenerations)


def _trial_params(cfg):
    return {"reservoir": cfg.reservoir.to_dict(), "noise": cfg.noise.to_dict(),
            "task": cfg.task, "grid_index": cfg.grid_index, "run_index": cfg.run_index}


@dataclass(frozen=True)
class SweepConfig:
    model: str
    task: str
    n: int
    v_grid: tuple = tuple(default_grid())
    p_grid: tuple = tuple(default_grid())
    runs: int = 50
    master_seed: int = 0
    paired: bool = True
    l: Optional[float] = None
    fraction: float = 0.0
    sigma: float = 0.0
    noise_count: Optional[int] = None
    train_len: int = 2000
    test_len: int = 2000
    washout: Optional[int] = None
    tau_max: int = tasks.TAU_MAX
    ridge_gamma: float = 0.0
    narma_mapping: str = "interval"

    def __post_init__(self):
        object.__setattr__(self, "model", str(self.model).upper())
        object.__setattr__(self, "v_grid", tuple(float(v) for v in self.v_grid))
        object.__setattr__(self, "p_grid", tuple(float(p) for p in self.p_grid))
        if self.model not in ("SCR", "ESN"):
            raise ContractViolation(f"unknown model {self.model!r}")
        if not self.v_grid or not self.p_grid:
            raise ContractViolation("parameter grids must be non-empty")
        if self.runs < 1:
            raise ContractViolation("runs must be at least 1")
        if self.model == "ESN" and self.l is None:
            raise ContractViolation("ESN sweeps need a connection fraction l")
        # surface the range checks now rather than inside a worker
        for v in self.v_grid:
            for p in self.p_grid:
                self.reservoir_spec(v, p)
        self.noise_spec()
        self.trial_config(self.v_grid[0], self.p_grid[0], 0, 0, noisy=False)

    @property
    def p_name(self):
        return "r" if self.model == "SCR" else "lambda"

    @property
    def kind(self):
        return "MC" if self.task == "MC" else "NMSE"

    def reservoir_spec(self, v, p):
        if self.model == "SCR":
            return ReservoirSpec("SCR", self.n, v, r=p)
        return ReservoirSpec("ESN", self.n, v, l=self.l, lam=p)

    def noise_spec(self):
        return NoiseSpec(self.fraction, self.sigma, self.noise_count)

    def trial_config(self, v, p, grid_index, run_index, noisy):
        run = run_index
        if noisy and not self.paired:
            run = run_index + self.runs
        return TrialConfig(
            reservoir=self.reservoir_spec(v, p),
            noise=self.noise_spec() if noisy else NoiseSpec(),
            task=self.task,
            train_len=self.train_len,
            test_len=self.test_len,
            washout=self.washout,
            tau_max=self.tau_max,
            ridge_gamma=self.ridge_gamma,
            seed=self.master_seed,
            grid_index=grid_index,
            run_index=run,
            narma_mapping=self.narma_mapping,
        )

    def to_dict(self):
        d = asdict(self)
        d["v_grid"] = list(self.v_grid)
        d["p_grid"] = list(self.p_grid)
        return d


@dataclass
class Surface:
    """Run-averaged metric over the (v, r) or (v, lambda) grid; rows follow v."""

    v_values: tuple
    p_values: tuple
    p_name: str
    mean: np.ndarray
    std: np.ndarray
    count: np.ndarray
    regenerations: np.ndarray
    clamped: np.ndarray
    metadata: dict = field(default_factory=dict)

    def argmin(self):
        i, j = np.unravel_index(np.argmin(self.mean), self.mean.shape)
        return self.v_values[i], self.p_values[j], float(self.mean[i, j])

    def argmax(self):
        i, j = np.unravel_index(np.argmax(self.mean), self.mean.shape)
        return self.v_values[i], self.p_values[j], float(self.mean[i, j])

    def cell(self, v, p):
        return float(self.mean[self.v_values.index(v), self.p_values.index(p)])


@dataclass
class SweepResult:
    clean: Surface
    noisy: Surface
    gamma: Surface
    records: list


def _execute(trial_cfgs, workers):
    if workers and workers > 1 and len(trial_cfgs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves submission order, so results never depend on scheduling
            return list(pool.map(run_trial, trial_cfgs, chunksize=max(1, len(trial_cfgs) // (8 * workers))))
    return [run_trial(c) for c in trial_cfgs]


def _surface(cfg, values, regen, clamped, meta):
    shape = (len(cfg.v_grid), len(cfg.p_grid))
    return Surface(
        cfg.v_grid, cfg.p_grid, cfg.p_name,
        mean=values.mean(axis=2).reshape(shape),
        std=values.std(axis=2).reshape(shape),
        count=np.full(shape, values.shape[2]),
        regenerations=regen.sum(axis=2).reshape(shape),
        clamped=clamped.sum(axis=2).reshape(shape),
        metadata=meta,
    )


def run_sweep(cfg, workers=1, progress=None):
    """Paired clean/noisy trials over the whole grid; returns three surfaces.

    The result is a pure function of ``cfg``: trials are ordered by
    (cell, run, clean-before-noisy) and reduced in that order.
    """
    cells = [(iv, ip) for iv in range(len(cfg.v_grid)) for ip in range(len(cfg.p_grid))]
    trial_cfgs, flags = [], []
    for iv, ip in cells:
        g = iv * len(cfg.p_grid) + ip
        for run in range(cfg.runs):
            for noisy in (False, True):
                trial_cfgs.append(cfg.trial_config(cfg.v_grid[iv], cfg.p_grid[ip], g, run, noisy))
                flags.append(noisy)
    results = _execute(trial_cfgs, workers)
    if progress is not None:
        progress(len(results))

    shape = (len(cfg.v_grid), len(cfg.p_grid), cfg.runs, 2)
    values = np.array([r.value for r in results]).reshape(shape)
    regen = np.array([r.regenerations for r in results]).reshape(shape)
    clamped = np.array([r.metric.clamped for r in results]).reshape(shape)

    records = []
    for tc, noisy, res in zip(trial_cfgs, flags, results):
        records.append({
            "grid_index": tc.grid_index, "run_index": tc.run_index, "noisy": noisy,
            "v": tc.reservoir.v, cfg.p_name: tc.reservoir.r if cfg.model == "SCR" else tc.reservoir.lam,
            "seeds": res.seeds, "reservoir_hash": res.reservoir_hash,
            "nnz": res.nnz, "perturb_count": res.perturb_count,
            "value": res.value, "clamped": res.metric.clamped,
            "regenerations": res.regenerations,
        })

    meta = {"sweep": cfg.to_dict()}
    clean = _surface(cfg, values[..., 0], regen[..., 0], clamped[..., 0], dict(meta, condition="clean"))
    noisy = _surface(cfg, values[..., 1], regen[..., 1], clamped[..., 1], dict(meta, condition="noisy"))
    ratio = np.vectorize(lambda a, b: tasks.robustness_ratio(a, b, cfg.kind), otypes=[float])(
        noisy.mean, clean.mean
    )
    gamma = Surface(
        cfg.v_grid, cfg.p_grid, cfg.p_name, mean=ratio, std=np.zeros_like(ratio),
        count=clean.count.copy(), regenerations=clean.regenerations + noisy.regenerations,
        clamped=clean.clamped + noisy.clamped, metadata=dict(meta, condition="gamma"),
    )
    return SweepResult(clean, noisy, gamma, records)


@dataclass
class SensitivityResult:
    vary: str
    values: tuple
    sigmas: tuple
    mean: np.ndarray
    std: np.ndarray
    metadata: dict = field(default_factory=dict)


def sensitivity_sweep(base, sigmas, vary, values, workers=1):
    """NMSE against noise strength, one curve per connection fraction or size.

    ``base`` fixes the model, task, (v, lambda) via the first grid entries,
    the noise fraction and run count. The perturbation count is re-derived
    per reservoir so the noisy share of weights is the same on every curve.
    All points on a curve share streams and reservoirs; only sigma changes.
    """
    if vary not in ("l", "n"):
        raise ContractViolation(f"vary must be 'l' or 'n', got {vary!r}")
    sigmas = tuple(float(s) for s in sigmas)
    values = tuple(values)
    if not sigmas or not values:
        raise ContractViolation("sensitivity sweep needs sigmas and values")
    v, p = base.v_grid[0], base.p_grid[0]
    trial_cfgs = []
    for gi, val in enumerate(values):
        cfg = replace(base, l=float(val)) if vary == "l" else replace(base, n=int(val))
        for s in sigmas:
            noisy_cfg = replace(cfg, sigma=s)
            for run in range(base.runs):
                trial_cfgs.append(noisy_cfg.trial_config(v, p, gi, run, noisy=True))
    results = _execute(trial_cfgs, workers)
    vals = np.array([r.value for r in results]).reshape(len(values), len(sigmas), base.runs)
    return SensitivityResult(
        vary, values, sigmas, vals.mean(axis=2), vals.std(axis=2),
        metadata={"base": base.to_dict(), "v": v, base.p_name: p},
    )


def write_records(records, fh):
    """Line-delimited JSON provenance, one trial per line."""
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
