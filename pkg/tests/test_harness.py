import io
import json
from dataclasses import replace

import numpy as np
import pytest

from robustrc import tasks
from robustrc.errors import ContractViolation, TrialFailure
from robustrc.harness import (
    ROLES,
    SweepConfig,
    TrialConfig,
    derive_seed,
    run_sweep,
    run_trial,
    sensitivity_sweep,
    write_records,
)
from robustrc.reservoir import NoiseSpec, ReservoirSpec

SCR = ReservoirSpec("SCR", 30, 0.1, r=0.8)
ESN = ReservoirSpec("ESN", 30, 0.1, l=0.2, lam=0.9)


def small(**kw):
    base = dict(reservoir=SCR, train_len=400, test_len=400, tau_max=40, seed=3)
    base.update(kw)
    return TrialConfig(**base)


def small_sweep(**kw):
    base = dict(model="SCR", task="MC", n=20, v_grid=(0.1, 0.5), p_grid=(0.5, 0.9), runs=2,
                master_seed=11, fraction=0.05, sigma=0.02, train_len=200, test_len=200, tau_max=30)
    base.update(kw)
    return SweepConfig(**base)


class TestSeeds:
    def test_deterministic(self):
        assert derive_seed(2014, 3, 7, "noise") == derive_seed(2014, 3, 7, "noise")

    def test_roles_distinct(self):
        seeds = {derive_seed(1, 2, 3, r) for r in ROLES}
        assert len(seeds) == len(ROLES)

    def test_no_collisions(self):
        seeds = {derive_seed(0, g, r, "stream") for g in range(100) for r in range(100)}
        assert len(seeds) == 10_000

    def test_arguments_not_interchangeable(self):
        assert derive_seed(0, 1, 2, "init") != derive_seed(0, 2, 1, "init")
        assert derive_seed(1, 0, 0, "init") != derive_seed(0, 1, 0, "init")

    def test_range_and_role_check(self):
        assert 0 <= derive_seed(2**64 - 1, -1, -1, "reservoir") < 2**64
        with pytest.raises(ContractViolation):
            derive_seed(0, 0, 0, "other")


class TestTrial:
    def test_deterministic(self):
        a = run_trial(small(noise=NoiseSpec(0.1, 0.02)))
        b = run_trial(small(noise=NoiseSpec(0.1, 0.02)))
        assert a.value == b.value
        assert a.reservoir_hash == b.reservoir_hash
        assert a.metric.mc_profile.tobytes() == b.metric.mc_profile.tobytes()

    def test_zero_sigma_matches_noise_free(self):
        a = run_trial(small(noise=NoiseSpec(0.5, 0.0)))
        b = run_trial(small())
        assert a.value == b.value

    def test_noise_changes_value_not_reservoir(self):
        a = run_trial(small(noise=NoiseSpec(0.1, 0.05)))
        b = run_trial(small())
        assert a.value != b.value
        assert a.reservoir_hash == b.reservoir_hash
        assert a.perturb_count == 3 and b.perturb_count == 0

    def test_state_continuity(self):
        seen = {}
        run_trial(small(), hook=lambda tag, x: seen.setdefault(tag, x))
        assert seen["train_end"].tobytes() == seen["test_start"].tobytes()
        assert np.any(seen["train_end"] != 0)

    def test_mc_profile(self):
        res = run_trial(small())
        prof = res.metric.mc_profile
        assert prof.shape == (40,)
        assert np.all((prof >= 0) & (prof <= 1))
        assert res.value == pytest.approx(prof.sum())
        # short delays are recalled far better than long ones
        assert prof[:3].min() > 0.9 and prof[-5:].max() < 0.2

    def test_mc_bounded_by_readout_size(self):
        # a linear readout over m + 1 features recalls at most m delays
        res = run_trial(small())
        assert 5 < res.value <= 16

    def test_tau_beyond_train_window(self):
        res = run_trial(small(train_len=50, test_len=50, tau_max=120))
        assert np.all(np.isfinite(res.metric.mc_profile))

    def test_narma(self):
        res = run_trial(small(reservoir=ReservoirSpec("SCR", 100, 0.1, r=0.9), task="NARMA10",
                              train_len=1000, test_len=1000))
        assert res.metric.kind == "NMSE"
        assert 0.05 < res.value < 0.6

    def test_esn(self):
        res = run_trial(small(reservoir=ESN, noise=NoiseSpec(0.02, 0.01)))
        assert res.perturb_count == int(np.floor(0.02 * res.nnz + 0.5))
        assert 0 < res.value <= 16

    def test_excess_noise_count(self):
        with pytest.raises(TrialFailure) as info:
            run_trial(small(noise=NoiseSpec(count=31, sigma=0.1)))
        assert "seed" in str(info.value)

    def test_bad_task(self):
        with pytest.raises(ContractViolation):
            small(task="XOR")


class TestSweep:
    def test_single_cell_reduces_to_trials(self):
        cfg = small_sweep(v_grid=(0.1,), p_grid=(0.8,), runs=3)
        res = run_sweep(cfg)
        clean = [run_trial(cfg.trial_config(0.1, 0.8, 0, r, False)).value for r in range(3)]
        noisy = [run_trial(cfg.trial_config(0.1, 0.8, 0, r, True)).value for r in range(3)]
        assert res.clean.mean[0, 0] == np.mean(clean)
        assert res.noisy.mean[0, 0] == np.mean(noisy)
        assert res.gamma.mean[0, 0] == np.mean(noisy) / np.mean(clean)

    def test_shapes_and_orientation(self):
        cfg = small_sweep(v_grid=(0.1, 0.5, 0.9), p_grid=(0.5, 0.9))
        res = run_sweep(cfg)
        assert res.clean.mean.shape == (3, 2)
        assert res.clean.p_name == "r"
        rec = [r for r in res.records if r["v"] == 0.9 and r["r"] == 0.5]
        assert {r["grid_index"] for r in rec} == {4}
        assert len(res.records) == 3 * 2 * cfg.runs * 2

    def test_zero_sigma_bit_identical(self):
        res = run_sweep(small_sweep(sigma=0.0))
        assert res.noisy.mean.tobytes() == res.clean.mean.tobytes()
        assert np.all(res.gamma.mean == 1.0)

    def test_paired_hashes(self):
        res = run_sweep(small_sweep(model="ESN", l=0.3, p_grid=(0.9,)))
        by_key = {}
        for r in res.records:
            by_key.setdefault((r["grid_index"], r["run_index"]), []).append(r)
        for pair in by_key.values():
            assert len(pair) == 2
            assert pair[0]["reservoir_hash"] == pair[1]["reservoir_hash"]
            assert pair[0]["seeds"] == pair[1]["seeds"]

    def test_unpaired_uses_fresh_seeds(self):
        res = run_sweep(small_sweep(paired=False, v_grid=(0.1,), p_grid=(0.9,)))
        clean = {r["seeds"]["stream"] for r in res.records if not r["noisy"]}
        noisy = {r["seeds"]["stream"] for r in res.records if r["noisy"]}
        assert not clean & noisy

    def test_workers_identical(self):
        cfg = small_sweep()
        a = run_sweep(cfg, workers=1)
        b = run_sweep(cfg, workers=2)
        for cond in ("clean", "noisy", "gamma"):
            assert getattr(a, cond).mean.tobytes() == getattr(b, cond).mean.tobytes()

    def test_narma_gamma_orientation(self):
        res = run_sweep(small_sweep(task="NARMA10", n=40, v_grid=(0.1,), p_grid=(0.9,),
                                    train_len=500, test_len=500))
        assert res.gamma.mean[0, 0] == tasks.robustness_ratio(
            res.noisy.mean[0, 0], res.clean.mean[0, 0], "NMSE")
        assert 0 < res.clean.mean[0, 0] < 1

    def test_eager_validation(self):
        with pytest.raises(ContractViolation):
            small_sweep(p_grid=(1.0,))
        with pytest.raises(ContractViolation):
            small_sweep(v_grid=())
        with pytest.raises(ContractViolation):
            small_sweep(model="ESN")

    def test_records_json(self):
        res = run_sweep(small_sweep(v_grid=(0.1,), p_grid=(0.9,), runs=1))
        buf = io.StringIO()
        write_records(res.records, buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[1])["noisy"] is True


class TestSensitivity:
    def test_shape_and_sigma_zero_column(self):
        base = small_sweep(model="ESN", task="NARMA10", n=30, l=0.2, v_grid=(0.1,), p_grid=(0.9,),
                           fraction=0.1, runs=2, train_len=300, test_len=300)
        res = sensitivity_sweep(base, (0.0, 0.05), "l", (0.1, 0.3))
        assert res.mean.shape == (2, 2)
        clean_cfg = replace(base, l=0.1)
        expected = np.mean([run_trial(clean_cfg.trial_config(0.1, 0.9, 0, r, False)).value for r in range(2)])
        assert res.mean[0, 0] == expected

    def test_bad_vary(self):
        with pytest.raises(ContractViolation):
            sensitivity_sweep(small_sweep(), (0.0,), "v", (0.1,))
