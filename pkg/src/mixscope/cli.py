"""Command-line entry point: ``mixscope <subcommand> ...``.

Exit status: 0 on success, 1 on validation errors (bad flags, malformed
input), 2 on I/O errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .attack import lsda, write_profile
from .diagnostics import (
    DEFAULT_BUDGET,
    covariance_report,
    input_histogram,
    recipient_spread,
    select_evaluation_users,
    theoretical_input_pmf,
)
from .errors import MixscopeError
from .evaluation import compare_models, run_evaluation
from .generator import generate_messages, load_spec
from .mixer import MixConfig, ObservationWindow, anonymize, read_observation, round_stats, write_observation
from .trace import ground_truth_profiles, read_trace, restrict_to_top_senders, write_trace

SEED_ENV = "MIXSCOPE_SEED"


class UsageError(MixscopeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}") from None
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _add_mix_flags(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--threshold", type=_positive_int, metavar="T", help="threshold mix: flush every T messages")
    g.add_argument("--timed", type=_positive_float, metavar="SECONDS", help="timed mix: flush every SECONDS")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mixscope {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=None, help="cap on worker threads")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a trace CSV and keep the most active senders")
    p.add_argument("trace")
    p.add_argument("--top-k", type=_positive_int, default=None, help="keep only the K busiest senders")
    p.add_argument("--out", help="write the normalized trace here")

    p = sub.add_parser("mix", help="anonymize a trace into U.csv / Y.csv")
    p.add_argument("trace")
    _add_mix_flags(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("attack", help="run LSDA on U.csv / Y.csv")
    p.add_argument("--u", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True, help="estimated profile CSV")

    p = sub.add_parser("diagnose", help="input covariance, histogram and recipient-spread reports")
    p.add_argument("--u", required=True)
    p.add_argument("--y", default=None)
    p.add_argument("--trace", default=None, help="trace CSV, enables recipient spread (needs --rounds)")
    p.add_argument("--rounds", default=None, help="per-event round file written by 'mix'")
    p.add_argument("--pmf", choices=("poisson", "threshold", "none"), default="none")
    p.add_argument("--budget", type=_positive_int, default=DEFAULT_BUDGET)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic population")
    p.add_argument("config", help="population JSON")
    p.add_argument("--rho", type=_positive_int, default=None)
    p.add_argument("--format", choices=("obs", "trace", "both"), default="both")
    p.add_argument("--round-seconds", type=_positive_float, default=None)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evaluate", help="MSE-vs-rounds report with theory overlays")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="population JSON (synthetic run)")
    src.add_argument("--trace", help="trace CSV (real data)")
    p.add_argument("--rho", type=_positive_int, default=None, help="rounds to generate (synthetic)")
    _add_mix_flags(p, required=False)
    p.add_argument("--top-k", type=_positive_int, default=None)
    p.add_argument("--no-dominance", action="store_true", help="keep the gamma terms in the predictions")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None:
            _set_threads(args.threads)
        return _COMMANDS[args.command](args)
    except (MixscopeError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def _set_threads(n: int) -> None:
    from . import _accel

    if _accel.HAVE_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _seed_override(seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return seed
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _mix_config(args) -> MixConfig:
    if args.threshold is not None:
        return MixConfig.threshold(args.threshold)
    return MixConfig.timed(args.timed)


def _write_rounds(obs: ObservationWindow, path) -> None:
    np.savetxt(path, obs.event_round, fmt="%d", newline="\n")


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    trace = read_trace(args.trace)
    info = {"events": len(trace), "senders": trace.n_senders, "receivers": trace.n_receivers}
    if args.top_k is not None:
        trace = restrict_to_top_senders(trace, args.top_k)
        info["after_top_k"] = {"k": args.top_k, "events": len(trace), "senders": trace.n_senders, "receivers": trace.n_receivers}
    if args.out:
        write_trace(trace, args.out)
    _emit(info)
    return 0


def cmd_mix(args) -> int:
    trace = read_trace(args.trace)
    obs = anonymize(trace, _mix_config(args))
    write_observation(obs, args.out)
    _write_rounds(obs, os.path.join(args.out, "rounds.csv"))
    _emit(round_stats(obs))
    return 0


def cmd_attack(args) -> int:
    obs = read_observation(args.u, args.y)
    res = lsda(obs)
    write_profile(res.profile, args.out)
    _emit({"rho": obs.rho, "cond": res.cond if np.isfinite(res.cond) else None, "rank": res.rank, "singular": res.singular})
    return 0


def cmd_diagnose(args) -> int:
    if (args.trace is None) != (args.rounds is None):
        raise UsageError("--trace and --rounds go together")
    if args.y is not None:
        obs = read_observation(args.u, args.y)
    else:
        from .mixer import _read_counts

        U = _read_counts(args.u)
        obs = ObservationWindow(U, U.sum(axis=1, keepdims=True))
    os.makedirs(args.out, exist_ok=True)
    seed = _seed_override(args.seed)
    cov = covariance_report(obs, budget=args.budget, seed=seed)
    hist = input_histogram(obs)
    pmf = None
    if args.pmf == "poisson":
        pmf = theoretical_input_pmf("poisson", rates=np.maximum(obs.U.mean(axis=0), 1e-12))
    elif args.pmf == "threshold":
        sizes = obs.U.sum(axis=1)
        if not np.all(sizes == sizes[0]):
            raise UsageError("--pmf threshold needs rounds of constant size")
        t = int(sizes[0])
        pmf = theoretical_input_pmf("threshold", t=t, q=obs.U.mean(axis=0) / t)
    with open(os.path.join(args.out, "covariance.csv"), "w", encoding="utf-8") as fh:
        fh.write(cov.to_csv())
    with open(os.path.join(args.out, "histogram.csv"), "w", encoding="utf-8") as fh:
        fh.write(hist.to_csv(pmf))
    summary = {"config": {"command": "diagnose", "budget": args.budget, "seed": seed, "pmf": args.pmf}, "covariance": cov.to_dict()}
    if args.trace is not None:
        trace = read_trace(args.trace)
        rounds = np.loadtxt(args.rounds, dtype=np.int64, ndmin=1)
        spread = recipient_spread(trace, rounds)
        with open(os.path.join(args.out, "spread.csv"), "w", encoding="utf-8") as fh:
            fh.write(spread.to_csv())
        summary["recipient_spread"] = {"bins": spread.bins, "samples": spread.samples, "avg_contacts": spread.avg_contacts}
    with open(os.path.join(args.out, "diagnostics.json"), "w", encoding="utf-8") as fh:
        json.dump(_json_safe(summary), fh, indent=2)
        fh.write("\n")
    _emit(_json_safe(summary))
    return 0


def _load_population(path, rho_flag):
    spec = load_spec(path)
    seed = _seed_override(spec.seed)
    if seed != spec.seed:
        spec = spec.with_seed(seed)
    rho = rho_flag if rho_flag is not None else spec.source.get("rho")
    if rho is None:
        raise UsageError("number of rounds missing: pass --rho or set 'rho' in the config")
    return spec, int(rho)


def cmd_synth(args) -> int:
    spec, rho = _load_population(args.config, args.rho)
    msgs = generate_messages(spec, rho)
    os.makedirs(args.out, exist_ok=True)
    write_profile(spec.P, os.path.join(args.out, "profiles.csv"))
    info = {"seed": spec.seed, "rho_requested": rho, "messages": int(len(msgs.rounds))}
    if args.format in ("obs", "both"):
        obs = msgs.observation(spec.n_receivers)
        write_observation(obs, args.out)
        info["observation"] = round_stats(obs)
    if args.format in ("trace", "both"):
        seconds = args.round_seconds or float(spec.source.get("round_seconds", 1.0))
        write_trace(msgs.trace(spec.n_receivers, seconds), os.path.join(args.out, "trace.csv"))
        info["round_seconds"] = seconds
    _emit(info)
    return 0


def cmd_evaluate(args) -> int:
    config = {"command": "evaluate", "dominance": not args.no_dominance}
    if args.config is not None:
        if args.threshold is not None or args.timed is not None or args.top_k is not None:
            raise UsageError("--threshold/--timed/--top-k apply to --trace input only")
        spec, rho = _load_population(args.config, args.rho)
        msgs = generate_messages(spec, rho)
        obs = msgs.observation(spec.n_receivers)
        truth = spec.P
        trace = None
        config.update({"population": spec.source, "seed": spec.seed, "rho": rho})
    else:
        if args.threshold is None and args.timed is None:
            raise UsageError("--trace input needs --threshold or --timed")
        if args.rho is not None:
            raise UsageError("--rho applies to --config input only")
        trace = read_trace(args.trace)
        if args.top_k is not None:
            trace = restrict_to_top_senders(trace, args.top_k)
        mix = _mix_config(args)
        obs = anonymize(trace, mix)
        truth = ground_truth_profiles(trace)
        config.update({"trace": os.path.basename(args.trace), "top_k": args.top_k, "mix": {"kind": mix.kind.value, "t": mix.t, "tau": mix.tau}})
    sel = select_evaluation_users(trace, obs)
    report = run_evaluation(obs, truth, sel.users, dominance=not args.no_dominance, config=config)
    os.makedirs(args.out, exist_ok=True)
    doc = report.to_dict()
    doc["selection_fallback"] = sel.fallback
    doc["verdict"] = compare_models(report)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    last = report.points[-1]
    _emit({"rho_max": report.rho_max, "users": len(report.users), "final_avg_mse": last.avg_mse, "verdict": doc["verdict"]})
    return 0


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


_COMMANDS = {
    "ingest": cmd_ingest,
    "mix": cmd_mix,
    "attack": cmd_attack,
    "diagnose": cmd_diagnose,
    "synth": cmd_synth,
    "evaluate": cmd_evaluate,
}


if __name__ == "__main__":
    sys.exit(main())
