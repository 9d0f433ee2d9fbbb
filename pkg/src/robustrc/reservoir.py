"""Simple cycle and sparse random reservoirs with per-step structural noise."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ContractViolation, DegenerateTopology, NumericalFailure
from .linalg import as_matrix, spectral_radius

__all__ = [
    "ReservoirSpec",
    "ReservoirInstance",
    "NoiseSpec",
    "build_scr",
    "build_esn",
    "build_reservoir",
    "effective_weights",
    "step",
    "drive",
    "half",
]

SCR = "SCR"
ESN = "ESN"
BASE_WEIGHT = 0.47
_MAX_ESN_RETRIES = 100
_MIN_UNSCALED_RADIUS = 1e-12


def half(n):
    """Number of nodes in "half of the reservoir" (rounded up for odd sizes)."""
    return (n + 1) // 2


@dataclass(frozen=True)
class ReservoirSpec:
    kind: str
    n: int
    v: float
    r: Optional[float] = None
    l: Optional[float] = None
    lam: Optional[float] = None
    base_weight: float = BASE_WEIGHT

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in (SCR, ESN):
            raise ContractViolation(f"unknown reservoir kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ContractViolation(f"reservoir size must be an integer >= 2, got {self.n}")
        if not self.v > 0:
            raise ContractViolation(f"input scale v must be positive, got {self.v}")
        if kind == SCR:
            if self.r is None or not 0 < self.r < 1:
                raise ContractViolation(f"SCR weight r must lie in (0, 1), got {self.r}")
        else:
            if self.l is None or not 0 < self.l <= 1:
                raise ContractViolation(f"connection fraction l must lie in (0, 1], got {self.l}")
            if self.lam is None or not 0 < self.lam < 1:
                raise ContractViolation(f"spectral radius target must lie in (0, 1), got {self.lam}")
            if not self.base_weight > 0:
                raise ContractViolation("base_weight must be positive")

    @property
    def expected_nnz(self):
        if self.kind == SCR:
            return self.n
        return self.l * self.n * self.n

    def to_dict(self):
        d = {"kind": self.kind, "n": int(self.n), "v": self.v}
        if self.kind == SCR:
            d["r"] = self.r
        else:
            d.update(l=self.l, lam=self.lam, base_weight=self.base_weight)
        return d


@dataclass(frozen=True)
class NoiseSpec:
    """Structural noise: ``count`` nonzero weights get N(0, sigma^2) kicks per step.

    ``count`` is normally derived from ``fraction`` and the number of nonzero
    weights of the reservoir it is applied to, so the noisy share stays fixed
    across topologies. Passing ``count`` explicitly pins it.
    """

    fraction: float = 0.0
    sigma: float = 0.0
    count: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.fraction <= 1:
            raise ContractViolation(f"noise fraction must lie in [0, 1], got {self.fraction}")
        if not self.sigma >= 0:
            raise ContractViolation(f"noise sigma must be non-negative, got {self.sigma}")
        if self.count is not None and (int(self.count) != self.count or self.count < 0):
            raise ContractViolation(f"perturb count must be a non-negative integer, got {self.count}")

    def perturb_count(self, nnz):
        if self.count is not None:
            n = int(self.count)
        else:
            # round half up; Python's round() would send 0.5 to 0
            n = int(math.floor(self.fraction * nnz + 0.5))
        if n > nnz:
            raise ContractViolation(f"cannot perturb {n} weights of a matrix with {nnz} nonzeros")
        return n

    @property
    def is_noise_free(self):
        return self.count == 0 if self.count is not None else self.fraction == 0

    def to_dict(self):
        return {"fraction": self.fraction, "sigma": self.sigma, "count": self.count}


NOISE_FREE = NoiseSpec()


@dataclass(eq=False)
class ReservoirInstance:
    spec: ReservoirSpec
    w_res: np.ndarray
    w_in: np.ndarray
    input_nodes: np.ndarray
    readout_nodes: np.ndarray
    state: np.ndarray
    seed: Optional[int] = None
    rows: np.ndarray = field(init=False, repr=False)
    indptr: np.ndarray = field(init=False, repr=False)
    cols: np.ndarray = field(init=False, repr=False)
    vals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.w_res = np.ascontiguousarray(self.w_res, dtype=np.float64)
        self.w_in = np.ascontiguousarray(self.w_in, dtype=np.float64)
        self.input_nodes = np.asarray(self.input_nodes, dtype=np.int64)
        self.readout_nodes = np.asarray(self.readout_nodes, dtype=np.int64)
        self.state = np.ascontiguousarray(self.state, dtype=np.float64)
        n = self.spec.n
        if self.w_res.shape != (n, n) or self.w_in.shape != (n,) or self.state.shape != (n,):
            raise ContractViolation("reservoir arrays do not match the declared size")
        # row-major nonzero list; fixed for the lifetime of the instance
        rows, cols = np.nonzero(self.w_res)
        self.rows = rows.astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))]).astype(np.int64)
        self.cols = cols.astype(np.int64)
        self.vals = self.w_res[rows, cols].copy()

    @property
    def n(self):
        return self.spec.n

    @property
    def nnz(self):
        return int(self.vals.shape[0])

    def reset_state(self, rng):
        self.state = rng.uniform(-1.0, 1.0, self.spec.n)

    def copy(self):
        return ReservoirInstance(
            self.spec,
            self.w_res.copy(),
            self.w_in.copy(),
            self.input_nodes.copy(),
            self.readout_nodes.copy(),
            self.state.copy(),
            self.seed,
        )

    def fingerprint(self):
        """Hash of the realized structure (weights, input and readout wiring)."""
        h = hashlib.sha256()
        for arr in (self.w_res, self.w_in, self.input_nodes, self.readout_nodes):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "weights": [[int(i), int(j), float(w)] for i, j, w in zip(self.rows, self.cols, self.vals)],
            "w_in": [float(w) for w in self.w_in],
            "input_nodes": [int(i) for i in self.input_nodes],
            "readout_nodes": [int(i) for i in self.readout_nodes],
            "state": [float(s) for s in self.state],
        }

    @classmethod
    def from_dict(cls, d):
        spec = ReservoirSpec(**d["spec"])
        w = np.zeros((spec.n, spec.n))
        for i, j, val in d["weights"]:
            w[i, j] = val
        return cls(spec, w, np.array(d["w_in"]), np.array(d["input_nodes"]),
                   np.array(d["readout_nodes"]), np.array(d["state"]), d.get("seed"))

    def to_json(self):
        # json emits floats with repr(), which round-trips exactly
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _wire_inputs(n, v, rng):
    m = half(n)
    input_nodes = np.sort(rng.choice(n, size=m, replace=False))
    signs = np.where(rng.random(m) < 0.5, -1.0, 1.0)
    w_in = np.zeros(n)
    w_in[input_nodes] = signs * v
    readout_nodes = np.sort(rng.choice(n, size=m, replace=False))
    state = rng.uniform(-1.0, 1.0, n)
    return w_in, input_nodes, readout_nodes, state


def build_scr(n, r, v, rng, seed=None):
    """Single directed cycle i -> i+1 (mod n), every edge weighted ``r``."""
    spec = ReservoirSpec(SCR, n, v, r=r)
    w = np.zeros((n, n))
    idx = np.arange(n)
    w[(idx + 1) % n, idx] = r
    return ReservoirInstance(spec, w, *_wire_inputs(n, v, rng), seed=seed)


def build_esn(n, l, lam, v, rng, base_weight=BASE_WEIGHT, seed=None):
    """Erdos-Renyi reservoir with +-base_weight entries, rescaled to radius ``lam``.

    Every ordered pair (self-loops included) is connected with probability
    ``l``. Exactly half of the nonzeros are negative; for an odd count the
    leftover sign is a fair coin.
    """
    spec = ReservoirSpec(ESN, n, v, l=l, lam=lam, base_weight=base_weight)
    for _ in range(_MAX_ESN_RETRIES):
        mask = rng.random((n, n)) < l
        nnz = int(mask.sum())
        if nnz == 0:
            continue
        signs = np.ones(nnz)
        n_neg = nnz // 2
        if nnz % 2 and rng.random() < 0.5:
            n_neg += 1
        signs[:n_neg] = -1.0
        rng.shuffle(signs)
        w = np.zeros((n, n))
        w[mask] = signs * base_weight
        rho = spectral_radius(w)
        if rho < _MIN_UNSCALED_RADIUS:
            continue
        w *= lam / rho
        return ReservoirInstance(spec, w, *_wire_inputs(n, v, rng), seed=seed)
    raise DegenerateTopology(
        f"no usable ESN (n={n}, l={l}) after {_MAX_ESN_RETRIES} draws"
    )


def build_reservoir(spec, rng, seed=None):
    if spec.kind == SCR:
        return build_scr(spec.n, spec.r, spec.v, rng, seed=seed)
    return build_esn(spec.n, spec.l, spec.lam, spec.v, rng, base_weight=spec.base_weight, seed=seed)


def _nonzeros(w):
    rows, cols = np.nonzero(w)
    return rows, cols, w[rows, cols]


def effective_weights(base, noise, rng):
    """Copy of ``base`` with fresh Gaussian kicks on a random subset of nonzeros.

    Each call perturbs the original values, so weights wander around their
    base value rather than drifting.
    """
    base = as_matrix(base, "base")
    rows, cols, vals = _nonzeros(base)
    n = noise.perturb_count(vals.shape[0])
    out = base.copy()
    if n == 0:
        return out
    u = rng.random(n)
    deltas = noise.sigma * rng.standard_normal(n)
    pos = np.empty(n, dtype=np.int64)
    _kernels.floyd_positions(vals.shape[0], u, pos)
    out[rows[pos], cols[pos]] = vals[pos] + deltas
    return out


def step(inst, u, noise=NOISE_FREE, rng=None):
    """One update x <- tanh(W_eff x + W_in u); returns the new state."""
    if noise.perturb_count(inst.nnz) and rng is None:
        raise ContractViolation("a noisy step needs a random generator")
    w = effective_weights(inst.w_res, noise, rng) if rng is not None else inst.w_res
    x = np.tanh(w @ inst.state + inst.w_in * float(u))
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("reservoir state became non-finite")
    inst.state = x
    return x


def _noise_draws(steps, n, sigma, rng):
    if n == 0:
        empty = np.empty((steps, 0))
        return empty, empty
    # all position draws first, then all kicks; both backends consume these
    sel_u = rng.random((steps, n))
    deltas = sigma * rng.standard_normal((steps, n))
    return sel_u, deltas


def drive(inst, inputs, washout, noise=NOISE_FREE, rng=None):
    """Run the reservoir through ``inputs`` and collect readout states.

    Returns a ``(len(inputs) - washout) x (m + 1)`` matrix: the readout nodes'
    states after each input past the washout, plus a trailing constant 1.
    The instance keeps its final state, so consecutive drives continue.
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    if inputs.ndim != 1:
        raise ContractViolation("inputs must be one-dimensional")
    washout = int(washout)
    if washout < 0 or inputs.shape[0] <= washout:
        raise ContractViolation(
            f"need more inputs ({inputs.shape[0]}) than washout steps ({washout})"
        )
    n = noise.perturb_count(inst.nnz)
    if n and rng is None:
        raise ContractViolation("a noisy drive needs a random generator")
    sel_u, deltas = _noise_draws(inputs.shape[0], n, noise.sigma, rng)
    m = inst.readout_nodes.shape[0]
    out = np.empty((inputs.shape[0] - washout, m + 1))
    x = inst.state.copy()
    _kernels.drive(inst.rows, inst.indptr, inst.cols, inst.vals, inst.w_res, inst.w_in, x, inputs,
                   washout, inst.readout_nodes, sel_u, deltas, out)
    if not np.all(np.isfinite(x)):
        raise NumericalFailure("reservoir state became non-finite")
    inst.state = x
    return out
