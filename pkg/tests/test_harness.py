import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import SAMPLE_EFFICIENCY_ROWS, TOP_REWARD_ROWS, ramp_curve, sample_efficiency_pair
from qmlp_rl.envs import make_env
from qmlp_rl.errors import ConfigError
from qmlp_rl.evaluation import EvalRecord, LearningCurve, evaluate
from qmlp_rl.harness import (ACTION_NOISE_LEVELS, CURVES_FILE, OBSERVATION_NOISE_LEVELS, SUMMARY_FILE,
                             ExperimentConfig, config_from_flat, config_to_flat, curve_to_csv, default_flat,
                             dump_config_text, format_pct, format_steps, noise_sweep, parse_config_text,
                             random_policy_baseline, read_curve_csv, run_experiment, sample_efficiency, smooth,
                             top_reward, top_reward_improvement, write_curve_csv)

TINY = dict(env="pendulum", algo="td3", actor="qmlp", n_f=3, n_h=8, critic_hidden=8, steps=300,
            start_steps=100, eval_every=150, eval_episodes=2, batch=16)


class TestSmooth:
    def test_constant(self):
        assert np.array_equal(smooth(np.full(12, 3.5), 8), np.full(12, 3.5))

    def test_identity(self):
        x = np.random.default_rng(0).normal(size=20)
        assert np.array_equal(smooth(x, 1), x)

    def test_arithmetic(self):
        s = smooth(np.arange(1, 11), 8)
        assert s[-1] == 6.5
        assert s[:3].tolist() == [1.0, 1.5, 2.0]

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.lists(st.floats(-1e3, 1e3), min_size=30,
                                                                            max_size=30),
           st.integers(1, 10), st.floats(-3, 3))
    @settings(max_examples=100, deadline=None)
    def test_linear(self, x, y, k, c):
        x = np.array(x)
        y = np.array(y[:len(x)])
        assert np.allclose(smooth(c * x + y, k), c * smooth(x, k) + smooth(y, k), atol=1e-8)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            smooth([1.0], 0)


class TestMetrics:
    @pytest.mark.parametrize("row", TOP_REWARD_ROWS, ids=lambda r: f"{r[0]}-{r[1]}")
    def test_top_reward_rows(self, row):
        _, _, cand, base, pct = row
        got = top_reward_improvement(ramp_curve(cand, 500_000), ramp_curve(base, 700_000))
        assert abs(got - pct) <= 0.01

    @pytest.mark.parametrize("row", SAMPLE_EFFICIENCY_ROWS, ids=lambda r: f"{r[0]}-{r[1]}")
    def test_sample_efficiency_rows(self, row):
        env, algo, n_c, n_b, pct = row
        se = sample_efficiency(*sample_efficiency_pair(env, algo, n_c, n_b))
        assert (se.steps_candidate, se.steps_baseline) == (n_c, n_b)
        assert abs(se.percent - pct) <= 0.01

    def test_top_reward_uses_seed_mean(self):
        curve = LearningCurve([1, 2], [[0.0, 10.0], [4.0, 0.0]], [0, 1])
        assert top_reward(curve) == (1, 5.0) or top_reward(curve) == (2, 5.0)
        assert top_reward(LearningCurve([1, 2], [[0.0, 10.0], [4.0, 2.0]], [0, 1])) == (2, 6.0)

    def test_identical(self):
        c = ramp_curve(100.0, 300_000)
        assert top_reward_improvement(c, c) == 0.0
        assert sample_efficiency(c, c).percent == 0.0

    def test_zero_baseline_undefined(self):
        assert top_reward_improvement(ramp_curve(1.0, 5000), LearningCurve([5000], [[0.0]], [0])) is None

    def test_incomparable(self):
        steps = np.arange(1, 11) * 1000
        spike = np.zeros(10)
        spike[4] = 50.0
        cand = LearningCurve(steps, [np.linspace(0, 100, 10)], [0])
        base = LearningCurve(steps, [spike], [0])
        se = sample_efficiency(cand, base, window=8)
        assert se.percent is None and se.steps_baseline is None and not se.comparable
        assert format_pct(se.percent) == "~0%"

    def test_smoothing_delays_crossing(self):
        steps = np.arange(1, 11) * 1000
        c = LearningCurve(steps, [np.arange(10.0)], [0])
        b = LearningCurve(steps, [np.arange(10.0) * 0.5], [0])
        assert sample_efficiency(c, b, 1).steps_candidate == 6000
        assert sample_efficiency(c, b, 2).steps_candidate == 6000
        assert sample_efficiency(c, b, 4).steps_candidate == 7000

    @pytest.mark.parametrize("n,text", [(575_000, "575k"), (1_000_000, "1M"), (None, "--"), (1234, "1234")])
    def test_format_steps(self, n, text):
        assert format_steps(n) == text


class TestCurveFiles:
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=6, max_size=6),
           st.lists(st.floats(0, 1e6), min_size=6, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, means, stds):
        curve = LearningCurve([10, 20, 30], np.reshape(means, (2, 3)), [3, 7], np.reshape(stds, (2, 3)))
        import tempfile
        import os
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "c.csv")
            write_curve_csv(path, curve)
            assert read_curve_csv(path) == curve
            raw = open(path, "rb").read()
        assert b"\r" not in raw and raw.startswith(b"step,seed,eval_mean,eval_std\n")

    def test_row_order(self):
        text = curve_to_csv(LearningCurve([1, 2], [[0.5, 0.25], [1.0, 2.0]], [0, 1]))
        assert text.splitlines()[1:] == ["1,0,0.5,0.0", "1,1,1.0,0.0", "2,0,0.25,0.0", "2,1,2.0,0.0"]

    def test_steps_increasing(self):
        with pytest.raises(ValueError):
            LearningCurve([2, 1], [[0, 0]], [0])


class TestConfig:
    def test_round_trip(self):
        flat = config_to_flat(config_from_flat(TINY))
        assert config_to_flat(config_from_flat(parse_config_text(dump_config_text(flat)))) == flat

    def test_defaults(self):
        d = default_flat()
        assert d["seeds"] == (0, 1, 2, 3, 4) and d["eval_every"] == 1000 and d["eval_episodes"] == 10
        assert d["smoothing_window"] == 8 and d["buffer_size"] == 100_000

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("learning_rate = 3\n")
        with pytest.raises(ConfigError):
            config_from_flat({"bogus": 1})

    def test_comments_and_dashes(self):
        assert parse_config_text("# c\nn-h = 12  # width\n\n") == {"n_h": "12"}

    def test_seeds(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(seeds=())
        with pytest.raises(ConfigError):
            ExperimentConfig(seeds=(1, 1))

    def test_sac_gets_gaussian_policy(self):
        assert config_from_flat({**TINY, "algo": "sac"}).arch.policy_kind == "gaussian"

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            config_from_flat({"n_h": "wide"})


class ZeroActor:
    def act(self, s):
        return np.zeros(1)


class SwingUp:
    """Energy pumping with a PD catch near the top."""

    def act(self, obs):
        c, s, w = obs
        theta = math.atan2(s, c)
        if c > 0.9:
            return np.clip([-10.0 * theta - 2.0 * w], -2, 2)
        energy = 0.5 * w * w + 15.0 * c
        return np.array([2.0 * np.sign(w) if energy < 15.0 else 0.0])


class TestEvaluate:
    def test_zero_action_negative(self):
        rec = evaluate(ZeroActor(), make_env("pendulum"), 3, seed=0)
        assert np.all(rec.returns < 0)

    def test_single_episode_std(self):
        assert evaluate(ZeroActor(), make_env("pendulum"), 1).std == 0.0

    def test_scripted_controller_beats_zero(self):
        env = make_env("pendulum")
        assert evaluate(SwingUp(), env, 5, seed=1).mean > evaluate(ZeroActor(), env, 5, seed=1).mean + 500

    def test_record_stats(self):
        rec = EvalRecord(3, [1.0, 2.0, 6.0])
        assert rec.mean == 3.0 and rec.std == pytest.approx(np.std([1, 2, 6]))

    def test_random_baseline_deterministic(self):
        a = random_policy_baseline("pendulum", episodes=3)
        b = random_policy_baseline("pendulum", episodes=3)
        assert np.array_equal(a.returns, b.returns)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    summary = run_experiment(config_from_flat({**TINY, "seeds": "0,1"}), out)
    return out, summary


class TestRunExperiment:
    def test_files(self, tiny_run):
        out, summary = tiny_run
        assert {p.name for p in out.iterdir()} >= {"curves.csv", "summary.json", "config.txt", "metadata.json",
                                                   "checkpoints"}
        data = json.loads((out / SUMMARY_FILE).read_text())
        assert data["seeds_completed"] == [0, 1] and data["failures"] == []
        assert data["top_reward"]["value"] == max(summary["curve"].seed_mean())

    def test_rows_per_step(self, tiny_run):
        rows = (tiny_run[0] / CURVES_FILE).read_text().splitlines()[1:]
        assert len(rows) == 2 * 2
        assert [r.split(",")[:2] for r in rows] == [["150", "0"], ["150", "1"], ["300", "0"], ["300", "1"]]

    def test_byte_identical_rerun(self, tiny_run, tmp_path):
        out, _ = tiny_run
        run_experiment(config_from_flat({**TINY, "seeds": "0,1"}), tmp_path, jobs=2)
        for name in ("curves.csv", "summary.json", "config.txt"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_noise_sweep_level_zero(self, tiny_run):
        out, _ = tiny_run
        res = noise_sweep(out, "action", [0.0, 0.1])
        assert res["no_noise"] == res["stored_no_noise"]
        assert res["mean_returns"][0] == res["no_noise"]

    def test_noise_sweep_default_grids(self, tiny_run):
        out, _ = tiny_run
        assert noise_sweep(out, "action")["levels"] == list(ACTION_NOISE_LEVELS) == [0.05, 0.1, 0.15, 0.2, 0.25]
        assert noise_sweep(out, "observation")["levels"] == list(OBSERVATION_NOISE_LEVELS) == \
            [0.01, 0.02, 0.03, 0.04, 0.05]

    def test_missing_checkpoint_names_seed(self, tiny_run, tmp_path):
        out, _ = tiny_run
        for name in ("config.txt", "curves.csv"):
            (tmp_path / name).write_bytes((out / name).read_bytes())
        with pytest.raises(FileNotFoundError, match="seed 0"):
            noise_sweep(tmp_path, "action")

    def test_seed_failure_recorded(self, tmp_path, monkeypatch):
        from qmlp_rl import harness
        from qmlp_rl.errors import NumericFault
        real = harness.train

        def flaky(agent, env, cfg, seed=0, **kw):
            if seed == 1:
                raise NumericFault("non-finite critic loss", 42)
            return real(agent, env, cfg, seed=seed, **kw)

        monkeypatch.setattr(harness, "train", flaky)
        summary = run_experiment(config_from_flat({**TINY, "seeds": "0,1"}), tmp_path)
        assert summary["seeds_completed"] == [0]
        assert summary["failures"] == [{"seed": 1, "error": "non-finite critic loss (step 42)", "step": 42}]
