import json

import numpy as np
import pytest

import spdectl

SMALL = {
    "problem": {"kind": "reaction-diffusion", "sigma": 0.1, "grid": {"n": 16, "frames": 4, "fine_steps": 24}},
    "surrogate": {"features": {"n": 1, "m": 2, "l": 1}, "conv_width": 4, "conv_layers": 1},
}


def test_config_defaults_and_errors():
    cfg = spdectl.config(SMALL)
    assert cfg["problem"]["grid"]["n"] == 16
    assert cfg["tasks"]["alpha"] == 0.01
    with pytest.raises(spdectl.ConfigError, match="/bogus"):
        spdectl.config({"bogus": 1})


def test_simulate_zero_state_stays_zero():
    u = spdectl.simulate(SMALL, np.zeros(16), np.zeros((3, 16)), seed=4)
    assert u.shape == (4, 16)
    # multiplicative noise cannot move the zero state
    assert np.all(u == 0.0)


def test_generate_is_seeded():
    a = spdectl.generate(SMALL, 3, seed=7)
    b = spdectl.generate(SMALL, 3, seed=7)
    c = spdectl.generate(SMALL, 3, seed=8)
    assert a["states"].shape == (3, 4, 16)
    assert a["forcing"].shape == (3, 3, 16)
    assert np.array_equal(a["states"], b["states"])
    assert a["config_hash"] == b["config_hash"] != c["config_hash"]
    assert not np.array_equal(a["states"], c["states"])


def test_features_start_with_initial_propagation():
    rng = np.random.default_rng(0)
    u0 = rng.standard_normal(16)
    u0[[0, -1]] = 0.0
    names, values = spdectl.features(SMALL, u0, rng.standard_normal((24, 16)), rng.standard_normal((24, 16)))
    assert len(names) == values.shape[0] == len(set(names))
    assert values.shape[1:] == (25, 16)
    # the initial feature at t=0 is u0 itself
    idx = names.index("s")
    assert np.allclose(values[idx, 0], u0)


def test_pipeline_round_trip(tmp_path):
    cfg = dict(SMALL, name="py", data={"train_count": 6, "test_count": 3, "seed": 2},
               training={"epochs": 1, "batch_size": 4},
               policy={"hidden": [8]},
               policy_training={"epochs": 1, "batch_size": 2, "noise_samples": 2},
               tasks={"count": 2, "noise_samples": 2})
    spdectl.run_stage("generate", cfg, tmp_path)
    spdectl.run_stage("train-surrogate", cfg, tmp_path)
    spdectl.run_stage("train-policy", cfg, tmp_path)

    data = spdectl.load_dataset(str(tmp_path / "test.spdd"))
    model = spdectl.Surrogate.load(str(tmp_path / "models" / "py.spdm"))
    pred = model.rollout(data["states"][0, 0], data["forcing"][0], np.zeros((24, 16)))
    assert pred.shape == (4, 16) and np.all(np.isfinite(pred))
    assert set(model.evaluate(str(tmp_path / "test.spdd"))) == {"f_recon", "u0_recon", "u1", "prediction"}

    policy = spdectl.Policy.load(str(tmp_path / "policies" / "py.spdm"))
    u0, target = data["states"][0, 0], data["states"][1, -1]
    run = policy.closed_loop(cfg, u0, target, alpha=0.01, seed=3)
    assert run["states"].shape == (4, 16)
    assert run["e"] == pytest.approx(run["e_track"] + run["e_energy"])
    # replaying the realized actions open loop with the same noise reproduces the run
    replay = spdectl.open_loop(cfg, u0, target, run["forcing"], 0.01, 3)
    assert np.allclose(replay["states"], run["states"])


def test_missing_inputs_raise(tmp_path):
    with pytest.raises(spdectl.RunError):
        spdectl.run_stage("train-surrogate", SMALL, tmp_path)
    with pytest.raises(ValueError, match="unknown stage"):
        spdectl.run_stage("nope", SMALL, tmp_path)
