"""Multi-seed experiments, curve metrics, noise sweeps and result files."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import datetime as _dt
import io
import json
from pathlib import Path
import platform
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .algorithms import TrainConfig, make_agent, train
from .envs import NOISE_MODES, make_env
from .errors import ConfigError, NumericFault
from .evaluation import EvalRecord, LearningCurve, evaluate
from .networks import ArchitectureConfig, load_checkpoint, read_checkpoint

ACTION_NOISE_LEVELS = (0.05, 0.1, 0.15, 0.2, 0.25)
OBSERVATION_NOISE_LEVELS = (0.01, 0.02, 0.03, 0.04, 0.05)
CURVES_FILE = "curves.csv"
SUMMARY_FILE = "summary.json"
CONFIG_FILE = "config.txt"
METADATA_FILE = "metadata.json"


# --- experiment configuration -------------------------------------------------

@dataclass
class ExperimentConfig:
    env: str = "pendulum"
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple = (0, 1, 2, 3, 4)
    smoothing_window: int = 8

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        if self.smoothing_window < 1:
            raise ConfigError("smoothing_window must be >= 1")
        make_env(self.env)
        want = "gaussian" if self.train.algo == "sac" else "deterministic"
        if self.arch.policy_kind != want:
            self.arch = ArchitectureConfig(**{**asdict(self.arch), "policy_kind": want})

    @property
    def eval_every(self):
        return self.train.eval_every

    @property
    def eval_episodes(self):
        return self.train.eval_episodes


def _seeds(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(s) for s in text)
    return tuple(int(s) for s in str(text).replace(" ", "").split(",") if s != "")


def _opt(cast):
    def parse(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none")):
            return None
        return cast(v)
    return parse


# key: (parser, where it lives, attribute, help)
CONFIG_KEYS = {
    "env": (str, "exp", "env", "environment name (pendulum, mountain_car, reacher)"),
    "algo": (str, "train", "algo", "td3 or sac"),
    "actor": (str, "arch", "actor_kind", "actor topology: mlp, qmlp, lmlp, lqmlp"),
    "n_h": (int, "arch", "n_h", "hidden width of the actor trunk"),
    "kappa": (_opt(float), "arch", "kappa", "quadratic feature ratio in (0, 1]"),
    "n_f": (_opt(int), "arch", "n_f", "explicit quadratic feature count (instead of kappa)"),
    "quad_init": (str, "arch", "quad_init", "quadratic projection init: kaiming_uniform, xavier_uniform, zero"),
    "critic_hidden": (int, "arch", "critic_hidden", "critic hidden width"),
    "seeds": (_seeds, "exp", "seeds", "comma-separated seeds"),
    "steps": (int, "train", "total_steps", "environment steps per seed"),
    "start_steps": (int, "train", "start_steps", "initial uniform-random steps"),
    "eval_every": (int, "train", "eval_every", "steps between evaluations"),
    "eval_episodes": (int, "train", "eval_episodes", "episodes per evaluation"),
    "batch": (int, "train", "batch", "minibatch size"),
    "lr": (float, "train", "lr", "Adam learning rate"),
    "gamma": (float, "train", "gamma", "discount factor"),
    "tau": (float, "train", "tau", "target update rate"),
    "policy_delay": (int, "train", "policy_delay", "TD3 actor update delay"),
    "policy_noise": (float, "train", "policy_noise", "TD3 target smoothing noise (x action scale)"),
    "noise_clip": (float, "train", "noise_clip", "TD3 target noise clip (x action scale)"),
    "expl_noise": (float, "train", "exploration_noise", "TD3 exploration noise (x action scale)"),
    "entropy_mode": (str, "train", "entropy_mode", "SAC temperature: auto or fixed"),
    "alpha": (float, "train", "alpha", "SAC initial (auto) or constant (fixed) temperature"),
    "buffer_size": (int, "train", "buffer_size", "replay capacity"),
    "checkpoint_every": (int, "train", "checkpoint_every", "periodic checkpoint interval, 0 = off"),
    "smoothing_window": (int, "exp", "smoothing_window", "trailing window for curve smoothing"),
}


def default_flat() -> dict:
    return config_to_flat(ExperimentConfig())


def config_to_flat(cfg: ExperimentConfig) -> dict:
    out = {}
    for key, (_, where, attr, _) in CONFIG_KEYS.items():
        obj = {"exp": cfg, "arch": cfg.arch, "train": cfg.train}[where]
        out[key] = getattr(obj, attr)
    return out


def config_from_flat(flat: dict) -> ExperimentConfig:
    unknown = set(flat) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {**default_flat(), **flat}
    parts = {"exp": {}, "arch": {}, "train": {}}
    for key, (parse, where, attr, _) in CONFIG_KEYS.items():
        value = merged[key]
        try:
            parts[where][attr] = parse(value) if isinstance(value, str) else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    if parts["arch"]["actor_kind"] in ("mlp", "lmlp"):
        parts["arch"]["kappa"] = parts["arch"]["n_f"] = None
    parts["arch"]["policy_kind"] = "gaussian" if parts["train"]["algo"] == "sac" else "deterministic"
    return ExperimentConfig(arch=ArchitectureConfig(**parts["arch"]), train=TrainConfig(**parts["train"]),
                            **parts["exp"])


def _fmt_value(v):
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config_text(flat: dict) -> str:
    """Flat ``key = value`` text, one key per line, in a fixed order."""
    return "".join(f"{k} = {_fmt_value(flat[k])}\n" for k in CONFIG_KEYS if k in flat)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; keys may use - or _."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config_file(path) -> dict:
    return parse_config_text(Path(path).read_text())


# --- curve metrics ------------------------------------------------------------

def smooth(values, k: int) -> np.ndarray:
    """Trailing moving average over ``k`` points; early points average the available prefix."""
    if k < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    # direct window sums rather than cumsum differences, so k=1 is exact and
    # crossings against a raw maximum are not shifted by cancellation error
    padded = np.concatenate([np.full(min(k, len(x)) - 1, np.nan), x])
    return np.nanmean(np.lib.stride_tricks.sliding_window_view(padded, min(k, len(x))), axis=1)


def _series(curve):
    if isinstance(curve, LearningCurve):
        return curve.eval_steps, curve.seed_mean()
    steps, values = curve
    return np.asarray(steps), np.asarray(values, dtype=np.float64)


def top_reward(curve) -> tuple[int, float]:
    """(step, value) of the maximum of the seed-averaged evaluation series."""
    steps, mean = _series(curve)
    i = int(np.argmax(mean))
    return int(steps[i]), float(mean[i])


def percent_change(candidate: float, baseline: float) -> Optional[float]:
    if baseline == 0:
        return None
    return 100.0 * (candidate - baseline) / baseline


def top_reward_improvement(candidate, baseline) -> Optional[float]:
    """Percent change of the candidate's top seed-mean return over the baseline's.

    Returns ``None`` when the baseline peak is 0. With a negative baseline peak the
    sign flips (an improvement shows as a negative number); see
    :func:`compare_curves`, which flags that case.
    """
    return percent_change(top_reward(candidate)[1], top_reward(baseline)[1])


@dataclass
class SampleEfficiency:
    threshold: float
    steps_candidate: Optional[int]
    steps_baseline: Optional[int]
    percent: Optional[float]

    @property
    def comparable(self) -> bool:
        return self.percent is not None


def first_reach(steps, values, threshold) -> Optional[int]:
    hit = np.nonzero(np.asarray(values) >= threshold)[0]
    return int(steps[hit[0]]) if hit.size else None


def sample_efficiency(candidate, baseline, window: int = 1) -> SampleEfficiency:
    """Steps each method needs to first reach the weaker method's top reward.

    The threshold is the lower of the two raw seed-mean maxima; crossings are
    read off the seed-mean series smoothed with a trailing ``window``. If either
    smoothed series never reaches the threshold the comparison is reported as
    incomparable (``percent is None``).
    """
    sc, mc = _series(candidate)
    sb, mb = _series(baseline)
    threshold = min(float(mc.max()), float(mb.max()))
    nc = first_reach(sc, smooth(mc, window), threshold)
    nb = first_reach(sb, smooth(mb, window), threshold)
    if nc is None or nb is None or nb == 0:
        return SampleEfficiency(threshold, nc, nb, None)
    return SampleEfficiency(threshold, nc, nb, 100.0 * (nb - nc) / nb)


def compare_curves(candidate: LearningCurve, baseline: LearningCurve, window: int = 1) -> dict:
    cs, cv = top_reward(candidate)
    bs, bv = top_reward(baseline)
    se = sample_efficiency(candidate, baseline, window)
    return {
        "top_reward": {"candidate": cv, "candidate_step": cs, "baseline": bv, "baseline_step": bs,
                       "improvement_pct": percent_change(cv, bv), "baseline_nonpositive": bv <= 0},
        "sample_efficiency": {"threshold": se.threshold, "candidate_steps": se.steps_candidate,
                              "baseline_steps": se.steps_baseline, "improvement_pct": se.percent,
                              "comparable": se.comparable, "window": window},
    }


def format_steps(n: Optional[int]) -> str:
    if n is None:
        return "--"
    if n >= 1_000_000 and n % 1_000_000 == 0:
        return f"{n // 1_000_000}M"
    if n % 1000 == 0:
        return f"{n // 1000}k"
    return str(n)


def format_pct(p: Optional[float]) -> str:
    return "~0%" if p is None else f"{p:.2f}%"


def format_report(name: str, report: dict) -> str:
    tr, se = report["top_reward"], report["sample_efficiency"]
    lines = [
        "top reward",
        f"{'environment':<16}{'candidate':>14}{'baseline':>14}{'improvement':>14}",
        f"{name:<16}{tr['candidate']:>14.2f}{tr['baseline']:>14.2f}{format_pct(tr['improvement_pct']):>14}",
        "sample efficiency",
        f"{'environment':<16}{'candidate':>14}{'baseline':>14}{'improvement':>14}",
        f"{name:<16}{format_steps(se['candidate_steps']):>14}{format_steps(se['baseline_steps']):>14}"
        f"{format_pct(se['improvement_pct']):>14}",
    ]
    if tr["baseline_nonpositive"]:
        lines.append("note: baseline top reward <= 0, percent sign is inverted")
    return "\n".join(lines)


# --- curve files --------------------------------------------------------------

def curve_to_csv(curve: LearningCurve) -> str:
    buf = io.StringIO()
    buf.write("step,seed,eval_mean,eval_std\n")
    for j, step in enumerate(curve.eval_steps):
        for i, seed in enumerate(curve.seeds):
            buf.write(f"{int(step)},{seed},{float(curve.per_seed_returns[i, j])!r},"
                      f"{float(curve.per_seed_stds[i, j])!r}\n")
    return buf.getvalue()


def write_curve_csv(path, curve: LearningCurve):
    with open(path, "w", newline="\n") as fh:
        fh.write(curve_to_csv(curve))


def read_curve_csv(path) -> LearningCurve:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].replace(" ", "") != "step,seed,eval_mean,eval_std":
        raise ValueError(f"{path}: unexpected header")
    data = {}
    steps, seeds = [], []
    for row in rows[1:]:
        if not row:
            continue
        s, sd, m, st = row.split(",")
        s, sd = int(s), int(sd)
        if s not in steps:
            steps.append(s)
        if sd not in seeds:
            seeds.append(sd)
        data[s, sd] = (float(m), float(st))
    means = [[data[s, sd][0] for s in steps] for sd in seeds]
    stds = [[data[s, sd][1] for s in steps] for sd in seeds]
    return LearningCurve(steps, means, seeds, stds)


# --- running experiments ------------------------------------------------------

def random_policy_baseline(env_name: str, episodes: int = 100, seed: int = 12345) -> EvalRecord:
    """Returns of a uniform-random policy, one reset seed per episode."""
    env = make_env(env_name)
    rng = np.random.default_rng(seed)
    low, high = np.asarray(env.spec.action_low), np.asarray(env.spec.action_high)
    returns = []
    for i in range(episodes):
        env.reset(seed=seed + i)
        total, done = 0.0, False
        while not done:
            res = env.step(rng.uniform(low, high))
            total += res.reward
            done = res.done or res.truncated
        returns.append(total)
    return EvalRecord(0, returns)


def run_seed(flat: dict, seed: int, out_dir=None, verbose: bool = False):
    """Train one seed; returns ``(seed, curve, error)``."""
    cfg = config_from_flat(flat)
    env = make_env(cfg.env)
    agent = make_agent(cfg.arch, env, cfg.train, seed)
    ckpt_dir = None
    if out_dir is not None:
        ckpt_dir = Path(out_dir) / "checkpoints" / f"seed_{seed}"
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    def progress(rec):
        if verbose:
            print(f"step={rec.step} seed={seed} eval_mean={rec.mean!r}", flush=True)

    try:
        curve = train(agent, env, cfg.train, seed=seed, checkpoint_dir=ckpt_dir, on_eval=progress)
    except NumericFault as exc:
        return seed, None, {"seed": seed, "error": str(exc), "step": exc.step}
    return seed, curve, None


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1, verbose: bool = False) -> dict:
    """Train every seed, then write curves.csv, summary.json, config.txt and metadata.json.

    Output files other than metadata.json depend only on the configuration.
    Returns the summary dict (with the stacked curve under ``"curve"``).
    """
    flat = config_to_flat(config)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    if jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_seed, [flat] * len(config.seeds), config.seeds,
                                    [out_dir] * len(config.seeds), [verbose] * len(config.seeds)))
    else:
        results = [run_seed(flat, s, out_dir, verbose) for s in config.seeds]
    curves = [c for _, c, _ in results if c is not None]
    failures = [e for _, _, e in results if e is not None]
    summary = {"config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in flat.items()},
               "seeds_completed": [s for s, c, _ in results if c is not None],
               "failures": failures, "top_reward": None, "final_smoothed_mean": None,
               "sample_efficiency": None, "noise": {}}
    curve = LearningCurve.stack(curves) if curves else None
    if curve is not None:
        step, value = top_reward(curve)
        summary["top_reward"] = {"step": step, "value": value}
        summary["final_smoothed_mean"] = float(smooth(curve.seed_mean(), config.smoothing_window)[-1])
    if out_dir is not None:
        if curve is not None:
            write_curve_csv(out_dir / CURVES_FILE, curve)
        write_summary(out_dir, summary)
        (out_dir / CONFIG_FILE).write_text(dump_config_text(flat))
        meta = {"started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "kernel_backend": kernels.BACKEND, "python": platform.python_version(),
                "numpy": np.__version__}
        (out_dir / METADATA_FILE).write_text(json.dumps(meta, indent=2) + "\n")
    summary["curve"] = curve
    return summary


def write_summary(out_dir, summary):
    data = {k: v for k, v in summary.items() if k != "curve"}
    Path(out_dir, SUMMARY_FILE).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_run(run_dir):
    """Return ``(flat config, curve, summary)`` for a run directory."""
    run_dir = Path(run_dir)
    for name in (CONFIG_FILE, CURVES_FILE):
        if not (run_dir / name).exists():
            raise FileNotFoundError(f"{run_dir / name} not found")
    flat = parse_config_text((run_dir / CONFIG_FILE).read_text())
    summary = json.loads((run_dir / SUMMARY_FILE).read_text()) if (run_dir / SUMMARY_FILE).exists() else {}
    return flat, read_curve_csv(run_dir / CURVES_FILE), summary


# --- noise robustness ---------------------------------------------------------

def best_checkpoint(run_dir, seed) -> Path:
    path = Path(run_dir) / "checkpoints" / f"seed_{seed}" / "best.ckpt"
    if not path.exists():
        raise FileNotFoundError(f"missing best checkpoint for seed {seed}: {path}")
    return path


def noise_sweep(run_dir, kind: str = "action", levels: Optional[Sequence[float]] = None,
                noise_mode: str = "additive", episodes: Optional[int] = None) -> dict:
    """Evaluate each seed's best checkpoint under increasing noise and average over seeds.

    Returns ``{"kind", "levels", "no_noise", "stored_no_noise", "mean_returns", "per_seed"}``
    where ``mean_returns[i]`` belongs to ``levels[i]``. Evaluation reuses the
    episode seeds of the stored evaluation, so ``no_noise`` reproduces it.
    """
    if kind not in ("action", "observation"):
        raise ValueError(f"kind must be 'action' or 'observation', got {kind!r}")
    if noise_mode not in NOISE_MODES:
        raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
    if levels is None:
        levels = ACTION_NOISE_LEVELS if kind == "action" else OBSERVATION_NOISE_LEVELS
    levels = [float(x) for x in levels]
    flat, curve, _ = load_run(run_dir)
    cfg = config_from_flat(flat)
    env = make_env(cfg.env)
    per_seed, no_noise, stored = {}, [], []
    for seed in curve.seeds:
        header, _ = read_checkpoint(best_checkpoint(run_dir, seed))
        meta = header["meta"]
        actor = load_checkpoint(best_checkpoint(run_dir, seed))[0]["actor"]
        n_ep = episodes or len(meta["returns"])
        base = evaluate(actor, env, n_ep, seed=meta["eval_seed"])
        row = []
        for lv in levels:
            kw = {"action_noise": lv} if kind == "action" else {"obs_noise": lv}
            rec = evaluate(actor, env, n_ep, seed=meta["eval_seed"], noise_mode=noise_mode,
                           noise_seed=meta["eval_seed"] + 7919, **kw)
            row.append(rec.mean)
        per_seed[str(seed)] = {"no_noise": base.mean, "levels": row}
        no_noise.append(base.mean)
        stored.append(meta["eval_mean"])
    return {"kind": kind, "noise_mode": noise_mode, "levels": levels,
            "no_noise": float(np.mean(no_noise)), "stored_no_noise": float(np.mean(stored)),
            "mean_returns": [float(np.mean([per_seed[k]["levels"][i] for k in per_seed]))
                             for i in range(len(levels))],
            "per_seed": per_seed}


def compare_noise(candidate: dict, baseline: dict) -> dict:
    """Percent gain of the candidate over the baseline at no noise and at every level."""
    if candidate["levels"] != baseline["levels"]:
        raise ValueError("noise sweeps use different level grids")
    return {"kind": candidate["kind"], "levels": candidate["levels"],
            "no_noise_gain_pct": percent_change(candidate["no_noise"], baseline["no_noise"]),
            "gain_pct": [percent_change(c, b) for c, b in zip(candidate["mean_returns"], baseline["mean_returns"])],
            "baseline_nonpositive": baseline["no_noise"] <= 0}


def format_noise_table(table: dict) -> str:
    head = f"{'no noise':>10}" + "".join(f"{lv:>10g}" for lv in table["levels"])
    vals = f"{format_pct(table['no_noise_gain_pct']):>10}" + "".join(
        f"{format_pct(g):>10}" for g in table["gain_pct"])
    return f"{table['kind']} noise gain (candidate vs baseline)\n{head}\n{vals}"
