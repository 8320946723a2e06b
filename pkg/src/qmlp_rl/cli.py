"""Command-line entry point: ``qmlp-rl {train,eval,noise-sweep,report,params}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric fault.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path
import sys

from .envs import NOISE_MODES, env_spec, make_env
from .errors import ConfigError, NumericFault
from .evaluation import evaluate
from .harness import (ACTION_NOISE_LEVELS, CONFIG_KEYS, OBSERVATION_NOISE_LEVELS, SUMMARY_FILE,
                      compare_curves, compare_noise, config_from_flat, default_flat, format_noise_table,
                      format_report, load_config_file, load_run, noise_sweep, run_experiment)
from .networks import ArchitectureConfig, count_parameters, format_k, load_actor

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _flag(key):
    return "--" + key.replace("_", "-")


def _levels(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmlp-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train one configuration over several seeds",
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    defaults = default_flat()
    for key, (_, _, _, help_text) in CONFIG_KEYS.items():
        default = defaults[key]
        if isinstance(default, tuple):
            default = ",".join(map(str, default))
        train.add_argument(_flag(key), dest=key, default=None, metavar=key.upper(),
                           help=f"{help_text} (default: {default})")
    train.add_argument("--config", help="flat key = value config file; flags override it")
    train.add_argument("--out", help="output directory (default: runs/<env>_<algo>_<actor>)")
    train.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    train.add_argument("--quiet", action="store_true", help="suppress progress lines")

    ev = sub.add_parser("eval", help="evaluate a saved actor checkpoint",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--env", required=True)
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--action-noise", type=float, default=0.0)
    ev.add_argument("--obs-noise", type=float, default=0.0)
    ev.add_argument("--noise-mode", choices=NOISE_MODES, default="additive")

    ns = sub.add_parser("noise-sweep", help="evaluate best checkpoints under action/observation noise",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ns.add_argument("--candidate", required=True, help="run directory (e.g. the Q-MLP run)")
    ns.add_argument("--baseline", help="run directory to compare against (e.g. the MLP run)")
    ns.add_argument("--kind", choices=("action", "observation", "both"), default="both")
    ns.add_argument("--action-levels", type=_levels, default=list(ACTION_NOISE_LEVELS))
    ns.add_argument("--obs-levels", type=_levels, default=list(OBSERVATION_NOISE_LEVELS))
    ns.add_argument("--noise-mode", choices=NOISE_MODES, default="additive")
    ns.add_argument("--episodes", type=int, default=None, help="episodes per level (default: as stored)")
    ns.add_argument("--out", help="write the sweep tables to this JSON file")

    rp = sub.add_parser("report", help="top-reward and sample-efficiency comparison of two runs",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    rp.add_argument("--candidate", required=True)
    rp.add_argument("--baseline", required=True)
    rp.add_argument("--window", type=int, default=1, help="smoothing window for threshold crossings")
    rp.add_argument("--name", default=None, help="row label (default: environment name)")
    rp.add_argument("--out", help="also write the JSON report to this file")

    pa = sub.add_parser("params", help="count actor weights",
                        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    pa.add_argument("--obs-dim", type=int)
    pa.add_argument("--act-dim", type=int)
    pa.add_argument("--env", help="take obs/act dims from a built-in environment")
    pa.add_argument("--actor", choices=("mlp", "qmlp", "lmlp", "lqmlp"), default="mlp")
    pa.add_argument("--n-h", type=int, default=256)
    pa.add_argument("--kappa", type=float)
    pa.add_argument("--n-f", type=int)
    pa.add_argument("--policy", choices=("deterministic", "gaussian"), default="deterministic")
    return parser


def cmd_train(args) -> int:
    flat = {}
    if args.config:
        flat.update(load_config_file(args.config))
    flat.update({k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k) is not None})
    cfg = config_from_flat(flat)
    out = Path(args.out or f"runs/{cfg.env}_{cfg.train.algo}_{cfg.arch.actor_kind}")
    summary = run_experiment(cfg, out, jobs=args.jobs, verbose=not args.quiet)
    for fail in summary["failures"]:
        print(f"seed={fail['seed']} failed: {fail['error']}", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_NUMERIC if summary["failures"] else EXIT_OK


def cmd_eval(args) -> int:
    actor = load_actor(args.checkpoint)
    rec = evaluate(actor, make_env(args.env), args.episodes, seed=args.seed, action_noise=args.action_noise,
                   obs_noise=args.obs_noise, noise_mode=args.noise_mode)
    print(f"eval_mean={rec.mean!r} eval_std={rec.std!r} episodes={args.episodes}")
    return EXIT_OK


def _store_noise(run_dir, key, table):
    path = Path(run_dir) / SUMMARY_FILE
    data = json.loads(path.read_text()) if path.exists() else {}
    data.setdefault("noise", {})[key] = table
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_noise_sweep(args) -> int:
    kinds = ["action", "observation"] if args.kind == "both" else [args.kind]
    result = {}
    for kind in kinds:
        levels = args.action_levels if kind == "action" else args.obs_levels
        cand = noise_sweep(args.candidate, kind, levels, args.noise_mode, args.episodes)
        _store_noise(args.candidate, kind, cand)
        entry = {"candidate": cand}
        print(f"{kind} candidate no_noise={cand['no_noise']!r} "
              + " ".join(f"{lv:g}={v!r}" for lv, v in zip(cand["levels"], cand["mean_returns"])))
        if args.baseline:
            base = noise_sweep(args.baseline, kind, levels, args.noise_mode, args.episodes)
            _store_noise(args.baseline, kind, base)
            print(f"{kind} baseline no_noise={base['no_noise']!r} "
                  + " ".join(f"{lv:g}={v!r}" for lv, v in zip(base["levels"], base["mean_returns"])))
            entry["baseline"] = base
            entry["comparison"] = compare_noise(cand, base)
            print(format_noise_table(entry["comparison"]))
        result[kind] = entry
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    flat_c, curve_c, _ = load_run(args.candidate)
    _, curve_b, _ = load_run(args.baseline)
    report = compare_curves(curve_c, curve_b, args.window)
    report["candidate"], report["baseline"] = str(args.candidate), str(args.baseline)
    print(format_report(args.name or flat_c.get("env", "env"), report))
    print(json.dumps(report, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_params(args) -> int:
    obs_dim, act_dim = args.obs_dim, args.act_dim
    if args.env:
        spec = env_spec(args.env)
        obs_dim, act_dim = obs_dim or spec.obs_dim, act_dim or spec.act_dim
    if not obs_dim or not act_dim or obs_dim < 1 or act_dim < 1:
        raise ConfigError("--obs-dim and --act-dim (or --env) must give positive dimensions")
    kappa, n_f = (args.kappa, args.n_f) if args.actor in ("qmlp", "lqmlp") else (None, None)
    arch = ArchitectureConfig(args.actor, args.n_h, kappa, n_f, policy_kind=args.policy)
    n = count_parameters(arch, obs_dim, act_dim)
    print(f"{n} ({format_k(n)})")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "noise-sweep": cmd_noise_sweep,
            "report": cmd_report, "params": cmd_params}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
