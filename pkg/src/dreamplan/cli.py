"""``dreamplan`` command line: run | sweep | ablate | profile.

Seed precedence: ``--seed`` beats the ``DREAMPLAN_SEED`` environment variable,
which beats the config file's ``seed``.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import __version__, bench
from .config import load
from .errors import ConfigurationError, DreamplanError

DEFAULT_OUT = {"run": "record.jsonl", "sweep": "sweep.csv", "ablate": "ablation.csv", "profile": "profile.json"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dreamplan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"dreamplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [("run", "run one episode and write its record"),
                            ("sweep", "robustness sweep, baseline vs manidreams"),
                            ("ablate", "ablation over m, N or distribution width"),
                            ("profile", "per-step wall-time profile over (N, m)")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides DREAMPLAN_SEED and config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--baseline", action="store_true", help="force N = 1 and no cage")
        p.add_argument("--log-candidates", action="store_true", help="also write per-step candidate batches")
        p.add_argument("--out", default=None, help=f"output path (default {DEFAULT_OUT[name]})")
        if name == "run":
            p.add_argument("--episode", type=int, default=0, help="episode index under the master seed")
        if name == "ablate":
            p.add_argument("--which", choices=sorted(bench.ABLATIONS), default=None,
                           help="parameter to ablate (default: the config's ablation.which, else m)")
    return parser


def resolve_seed(arg: int | None, config_seed: int) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("DREAMPLAN_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"DREAMPLAN_SEED must be an integer, got {env!r}") from None
    return config_seed


def cmd_run(cfg, args) -> int:
    env = bench.run_episode(cfg, args.seed, args.episode, log_candidates=args.log_candidates)
    out = Path(args.out)
    out.write_text(env.record.to_jsonl())
    o = env.outcome()
    summary = out.with_suffix(".summary.csv")
    with open(summary, "w", newline="") as f:
        f.write(f"# dreamplan {__version__}\n# config_hash {cfg.hash()}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["seed", "episode", "success", "steps", "infeasible_steps", "mean_cage_cost"])
        w.writerow([args.seed, args.episode, int(o.success), o.steps, o.infeasible_steps, f"{o.mean_cage_cost:.6f}"])
    if args.log_candidates:
        cand = out.with_suffix(".candidates.jsonl")
        cand.write_text("".join(json.dumps(c, sort_keys=True) + "\n" for c in env.candidate_log))
    print(f"{'success' if o.success else 'failure'} after {o.steps} steps -> {out}")
    return 0


def cmd_sweep(cfg, args) -> int:
    rows = bench.sweep(cfg, master=args.seed, jobs=args.jobs, out=args.out)
    for r in rows:
        print(f"{r['axis']}={r['value']:<6} {r['method']:<10} {r['mean_success']:.3f} +- {r['std_success']:.3f}")
    return 0


def cmd_ablate(cfg, args) -> int:
    spec = bench.AblationSpec.from_config(cfg, args.which)
    for r in bench.ablate(cfg, spec, master=args.seed, jobs=args.jobs, out=args.out):
        print(f"{r['parameter']}={r['value']:<7} {r['success_rate']:.3f}")
    return 0


def cmd_profile(cfg, args) -> int:
    report = bench.profile(cfg, master=args.seed, out=args.out)
    for r in report["rows"]:
        print(f"{r['label']:<12} median {1e3 * r['total']['median_s']:.3f} ms  p95 {1e3 * r['total']['p95_s']:.3f} ms")
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "ablate": cmd_ablate, "profile": cmd_profile}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        args.seed = resolve_seed(args.seed, cfg.seed)
        cfg.seed = args.seed
        if args.baseline:
            cfg = cfg.as_baseline()
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        args.out = args.out or DEFAULT_OUT[args.command]
        return COMMANDS[args.command](cfg, args)
    except OSError as e:
        print(f"dreamplan: error: {e}", file=sys.stderr)
        return 2
    except DreamplanError as e:
        print(f"dreamplan: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
