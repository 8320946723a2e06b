"""Frozen reference values and instance generators shared by the unit and acceptance tests.

Table values are copied from the published hyperparameter and result tables;
every derived count below was worked out by hand per layer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from gradcheck import check_blocks, numeric_grad, rel_error
from qmlp_rl.evaluation import LearningCurve
from qmlp_rl.networks import (Actor, ArchitectureConfig, Critic, squashed_gaussian_backward,
                               squashed_gaussian_sample)
from qmlp_rl.nn import DenseLayer, InitializerSpec
from qmlp_rl.quadratic import QuadraticNeuron

# (env, N, A, qmlp n_h, kappa, n_f, qmlp weights, mlp weights) for TD3 actors
WEIGHT_TABLE = [
    ("Ant", 111, 8, 64, 0.1, 62, "26.1k", "96.5k"),
    ("BipedalWalker", 24, 4, 192, 1.0, 300, "58.2k", "73.2k"),
    ("HalfCheetah", 17, 6, 192, 1.0, 153, "47.8k", "71.9k"),
    ("Hopper", 11, 3, 128, 1.0, 66, "20.1k", "69.6k"),
    ("Humanoid", 376, 17, 192, 0.02, 28, "134.2k", "166.7k"),
    ("Walker2d", 17, 6, 64, 1.0, 153, "11.8k", "71.9k"),
]

# exact per-layer counts (trunk + quad head), worked by hand
EXACT_QMLP_TD3 = {"Ant": 26116, "BipedalWalker": 58232, "HalfCheetah": 47796, "Hopper": 20088,
                  "Humanoid": 134270, "Walker2d": 11828}
EXACT_MLP_TD3 = {"Ant": 96520, "BipedalWalker": 73220, "HalfCheetah": 71942, "Hopper": 69635,
                 "Humanoid": 166673, "Walker2d": 71942}

# top average reward rows: (env, algo, qmlp peak, mlp peak, printed improvement)
TOP_REWARD_ROWS = [
    ("Ant", "td3", 3847.40, 3317.29, 15.98), ("Ant", "sac", 4027.65, 3423.88, 17.63),
    ("BipedalWalker", "td3", 314.08, 308.48, 1.82), ("BipedalWalker", "sac", 315.05, 314.46, 0.19),
    ("HalfCheetah", "td3", 10295.54, 9247.73, 11.33), ("HalfCheetah", "sac", 11301.82, 10884.99, 3.83),
    ("Hopper", "td3", 3437.87, 3384.06, 1.59), ("Hopper", "sac", 3525.81, 3470.89, 1.58),
    ("Humanoid", "td3", 5414.98, 5242.58, 3.29), ("Humanoid", "sac", 5494.45, 5508.70, -0.26),
    ("Walker2d", "td3", 4159.95, 3485.84, 19.34), ("Walker2d", "sac", 4651.67, 4995.56, -6.88),
]

# sample-efficiency rows: (env, algo, qmlp steps, mlp steps, printed improvement)
SAMPLE_EFFICIENCY_ROWS = [
    ("Ant", "td3", 575_000, 970_000, 40.72), ("Ant", "sac", 845_000, 990_000, 14.64),
    ("BipedalWalker", "td3", 740_000, 1_000_000, 26.00), ("BipedalWalker", "sac", 895_000, 970_000, 7.73),
    ("HalfCheetah", "td3", 630_000, 995_000, 36.68), ("HalfCheetah", "sac", 815_000, 975_000, 16.41),
    ("Hopper", "td3", 720_000, 990_000, 27.27), ("Hopper", "sac", 515_000, 795_000, 35.22),
    ("Humanoid", "td3", 865_000, 975_000, 11.28), ("Walker2d", "td3", 565_000, 910_000, 37.91),
]

EVAL_STEPS = np.arange(5_000, 1_000_001, 5_000)


def peaks(env, algo):
    for row in TOP_REWARD_ROWS:
        if row[0] == env and row[1] == algo:
            return row[2], row[3]
    raise KeyError((env, algo))


def ramp_curve(peak, reach_step, final=None, steps=EVAL_STEPS, seeds=(0,)):
    """Seed-mean series rising linearly to ``peak`` exactly at ``reach_step``.

    After ``reach_step`` the series rises linearly to ``final`` at the last step
    (stays flat when ``final`` is None), so its maximum is ``max(peak, final)``.
    """
    steps = np.asarray(steps)
    values = np.where(steps < reach_step, peak * steps / reach_step, peak).astype(np.float64)
    i = int(np.searchsorted(steps, reach_step))
    values[i] = peak
    if final is not None and final > peak:
        tail = steps[i:]
        span = max(steps[-1] - reach_step, 1)
        values[i:] = peak + (final - peak) * (tail - reach_step) / span
        values[-1] = final
    rows = np.tile(values, (len(seeds), 1))
    return LearningCurve(steps, rows, list(seeds))


def sample_efficiency_pair(env, algo, n_cand, n_base):
    """Candidate hits the weaker top reward at ``n_cand``, baseline at ``n_base``."""
    p_cand, p_base = peaks(env, algo)
    threshold = min(p_cand, p_base)
    cand = ramp_curve(threshold, n_cand, final=p_cand)
    base = ramp_curve(threshold, n_base, final=p_base)
    return cand, base


# --- gradient-check instances ---------------------------------------------------

ACTOR_KINDS = ("mlp", "qmlp", "lmlp", "lqmlp")
GRADIENT_KINDS = ("dense-relu", "dense-tanh", "dense-identity", "dense-nobias", "quadratic", "critic",
                  *(f"actor-det-{k}" for k in ACTOR_KINDS), *(f"actor-gauss-{k}" for k in ACTOR_KINDS))


@dataclass
class GradCase:
    kind: str
    error: float


def _jitter_biases(blocks, rng):
    # zero biases put dead-relu units exactly on the kink, where central
    # differences see half the slope; random biases keep instances generic
    for p in blocks:
        if p.name.endswith("bias"):
            p.value[...] = rng.normal(0, 0.3, p.shape)


def _dense_case(rng, activation, bias):
    n_in, n_out, b = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 4)
    layer = DenseLayer(n_in, n_out, activation, InitializerSpec("xavier_uniform", int(rng.integers(1 << 31))),
                       bias=bias)
    _jitter_biases(layer.params(), rng)
    x = rng.normal(size=(n_in, b))
    w = rng.normal(size=(n_out, b))
    loss = lambda: float(np.sum(w * layer.forward(x)))
    return loss, lambda: layer.backward(w), layer.params(), (x, lambda: layer.backward(w, accumulate=False))


def _quad_case(rng):
    n, nf, a, b = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 4), rng.integers(1, 4)
    q = QuadraticNeuron(n, nf, a, seed=int(rng.integers(1 << 31)))
    _jitter_biases(q.params(), rng)
    x = rng.normal(size=(n, b))
    w = rng.normal(size=(a, b))
    loss = lambda: float(np.sum(w * q.forward(x)))
    return loss, lambda: q.backward(w), q.params(), (x, lambda: q.backward(w, accumulate=False))


def _critic_case(rng):
    n, a, h, b = rng.integers(1, 7), rng.integers(1, 4), rng.integers(2, 9), rng.integers(1, 4)
    c = Critic(n, a, hidden=h, seed=int(rng.integers(1 << 31)))
    _jitter_biases(c.params(), rng)
    s, act = rng.normal(size=(n, b)), rng.normal(size=(a, b))
    w1, w2 = rng.normal(size=(1, b)), rng.normal(size=(1, b))

    def loss():
        q1, q2 = c.forward(s, act)
        return float(np.sum(w1 * q1) + np.sum(w2 * q2))

    return loss, lambda: c.backward(w1, w2), c.params(), None


def _arch(kind, rng, policy):
    kw = {}
    if kind in ("qmlp", "lqmlp"):
        kw["n_f"] = int(rng.integers(1, 9))
    return ArchitectureConfig(kind, n_h=int(rng.integers(2, 9)), policy_kind=policy, **kw)


def _actor_det_case(rng, kind):
    n, a, b = int(rng.integers(1, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    actor = Actor(_arch(kind, rng, "deterministic"), n, a, action_scale=rng.uniform(0.5, 2.0, a),
                  seed=int(rng.integers(1 << 31)))
    _jitter_biases(actor.params(), rng)
    s = rng.normal(0, 0.5, size=(n, b))
    w = rng.normal(size=(a, b))
    loss = lambda: float(np.sum(w * actor.forward_deterministic(s)))
    return loss, lambda: actor.backward_deterministic(w), actor.params(), None


def _actor_gauss_case(rng, kind):
    n, a, b = int(rng.integers(1, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
    actor = Actor(_arch(kind, rng, "gaussian"), n, a, seed=int(rng.integers(1 << 31)))
    _jitter_biases(actor.params(), rng)
    s = rng.normal(0, 0.5, size=(n, b))
    eps = rng.normal(size=(a, b))
    wa, wl = rng.normal(size=(a, b)), rng.normal(size=(1, b))
    state = {}

    def loss():
        mean, log_std = actor.forward_gaussian(s)
        act, logp, cache = squashed_gaussian_sample(mean, log_std, eps)
        state["cache"] = cache
        return float(np.sum(wa * act) + np.sum(wl * logp))

    def backward():
        gm, gl = squashed_gaussian_backward(state["cache"], wa, wl)
        actor.backward_gaussian(gm, gl)

    return loss, backward, actor.params(), None


def make_case(kind, rng):
    if kind.startswith("dense-"):
        act = kind.split("-")[1]
        return _dense_case(rng, "identity" if act == "nobias" else act, act != "nobias")
    if kind == "quadratic":
        return _quad_case(rng)
    if kind == "critic":
        return _critic_case(rng)
    if kind.startswith("actor-det-"):
        return _actor_det_case(rng, kind.rsplit("-", 1)[1])
    return _actor_gauss_case(rng, kind.rsplit("-", 1)[1])


def gradient_case_error(kind, rng, eps=1e-5):
    """Worst relative error over all parameter blocks (and the input, where exposed)."""
    loss, backward, blocks, input_check = make_case(kind, rng)
    err = check_blocks(loss, backward, blocks, eps)
    if input_check is not None:
        x, input_grad = input_check
        loss()
        analytic = input_grad()
        err = max(err, rel_error(analytic, numeric_grad(loss, x, eps)))
    return err


def gradient_suite(instances=100, seed=0, kinds=GRADIENT_KINDS):
    """Yield a :class:`GradCase` for ``instances`` random draws of every kind."""
    rng = np.random.default_rng(seed)
    for kind in kinds:
        for _ in range(instances):
            yield GradCase(kind, gradient_case_error(kind, rng))


# --- quadratic-target recovery ---------------------------------------------------

def fit_quadratic_target(n, seed, n_f=None):
    """Fit a quadratic neuron to x^T M x + c by L-BFGS on its analytic gradients; returns MSE."""
    rng = np.random.default_rng(seed)
    n_f = n_f or n
    m = rng.normal(size=(n, n))
    c = rng.normal()
    pts = n * (n + 1) // 2 + 1 + 2 * n
    x = rng.normal(size=(n, pts))
    target = np.einsum("ib,ij,jb->b", x, m, x)[None, :] + c
    q = QuadraticNeuron(n, n_f, 1, seed=seed)
    blocks = q.params()
    sizes = [p.size for p in blocks]

    def unpack(theta):
        off = 0
        for p, k in zip(blocks, sizes):
            p.value[...] = theta[off:off + k].reshape(p.shape)
            off += k

    def fun(theta):
        unpack(theta)
        for p in blocks:
            p.zero_grad()
        diff = q.forward(x) - target
        q.backward(2.0 * diff / pts)
        return float(np.mean(diff ** 2)), np.concatenate([p.grad.ravel() for p in blocks])

    theta0 = np.concatenate([p.value.ravel() for p in blocks])
    best = np.inf
    for _ in range(5):
        res = minimize(fun, theta0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 20000, "ftol": 1e-300, "gtol": 1e-14})
        best = min(best, res.fun)
        if best <= 1e-12:
            break
        theta0 = res.x + rng.normal(0, 0.1, size=res.x.shape)
    return best
