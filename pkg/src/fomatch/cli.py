"""``fomatch`` command-line front end.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 input/output error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import FomError, ParseError
from .instance import load_instance, opt_value, random_instance, serialize_instance
from .ranking import (
    RankingGain, draw_ranks, omega_constant, ranking_constant, ranking_trials, thresholds,
    trial_log_csv, _mean_stderr,
)
from .ranking_hardness import gen_ranking_hard_instance, hard_instance_ratio
from .special import C, SQRT2, eval_f
from .verify import CHECKS, run_checks
from .waterfill import achieved_ratio, certify_duals, linear_gain, run_waterfill
from .wf_hardness import (
    gen_generalized_hard_instance, gen_wf_hard_instance, run_hard_instance, stationary_profile,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
FAMILIES = ("wf-hard", "rank-hard", "wf-hard-general", "random")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# plumbing


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers separated by commas, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _single(vals, flag, default=None):
    if vals is None:
        if default is None:
            raise UsageError(f"{flag} is required")
        return default
    if len(vals) != 1:
        raise UsageError(f"{flag} takes a single value for this command")
    return vals[0]


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FOM_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"FOM_SEED must be an integer, got {env!r}") from None


class _Meta:
    def __init__(self, command: str, seed: int):
        self.command, self.seed = command, seed
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()

    def as_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, "version": __version__,
                "started": self.started.isoformat(timespec="seconds"),
                "elapsed_s": round(time.perf_counter() - self.t0, 3)}

    def comment_lines(self) -> str:
        return "".join(f"# {k}={v}\n" for k, v in self.as_dict().items())


def _emit(args, meta: _Meta, payload, csv_text: str | None = None) -> None:
    """Write a JSON document (payload plus ``meta``) or CSV with ``#`` metadata lines."""
    if args.format == "csv" and csv_text is not None:
        text = meta.comment_lines() + csv_text
    else:
        text = json.dumps({"meta": meta.as_dict(), **payload}, indent=2) + "\n"
    _write(args.out, text)


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _csv(header: list[str], rows) -> str:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(_fmt(r[h]) for h in header))
    return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _instance(args, seed: int, default_family: str | None = None):
    """The instance named by --in, or generated from --family."""
    if args.inp:
        with open(args.inp) as fh:
            return load_instance(fh.read())
    family = args.family or default_family
    if family is None:
        raise UsageError("give --in PATH or --family")
    if family == "wf-hard":
        return gen_wf_hard_instance(_single(args.k, "--k"), _single(args.m, "--m", 1))
    if family == "rank-hard":
        return gen_ranking_hard_instance(_single(args.k, "--k"), _single(args.m, "--m", 1)).instance
    if family == "wf-hard-general":
        return gen_generalized_hard_instance(_single(args.k, "--k"), _single(args.m, "--m"), args.L).instance
    if args.n is None:
        raise UsageError("--family random needs --n")
    return random_instance(args.n, args.p, np.random.default_rng(seed), bipartite=not args.general)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args, meta) -> int:
    inst = _instance(args, meta.seed)
    opt = opt_value(inst)
    _write(args.out, meta.comment_lines() + serialize_instance(inst))
    summary = f"vertices={inst.n} edges={inst.m} opt={opt}\n"
    (sys.stdout if args.out not in (None, "-") else sys.stderr).write(summary)
    return EXIT_OK


def cmd_waterfill(args, meta) -> int:
    inst = _instance(args, meta.seed)
    out = run_waterfill(inst, linear_gain(), keep_log=False)
    cert = certify_duals(out, inst, tol=args.tol or 1e-9)
    opt = opt_value(inst)
    payload = {
        "value": out.value, "opt": float(opt),
        "ratio": achieved_ratio(out, inst, opt) if opt else None,
        "certificate": json.loads(cert.to_json()),
        "x": out.x.tolist(), "p": out.p.tolist(), "alpha": out.alpha.tolist(),
    }
    _emit(args, meta, payload, out.to_csv())
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_stationary(args, meta) -> int:
    rows = []
    for k in args.k or [10, 100, 1000]:
        prof = stationary_profile(k)
        rows.append({"k": k, "ratio_k": prof.ratio_k, "iterations": prof.iterations,
                     "max_row_sum": float(prof.row_sums.max())})
    payload = {"target": 2.0 - SQRT2, "profiles": rows}
    _emit(args, meta, payload, _csv(["k", "ratio_k", "iterations", "max_row_sum"], rows))
    return EXIT_OK


def cmd_ranking(args, meta) -> int:
    inst = _instance(args, meta.seed)
    rows = ranking_trials(inst, args.trials, meta.seed)
    mean, stderr = _mean_stderr([r["ratio"] for r in rows])
    _emit(args, meta, {"mean": mean, "stderr": stderr, "trials": rows}, trial_log_csv(rows))
    return EXIT_OK


def cmd_thresholds(args, meta) -> int:
    inst = _instance(args, meta.seed)
    if args.u is None or args.v is None:
        raise UsageError("thresholds needs --u and --v")
    ranks = draw_ranks(inst.n, np.random.default_rng(meta.seed))
    rep = thresholds(inst, args.u, args.v, ranks, strict=False)
    ok = rep.constancy_pass and rep.above_gamma
    rows = [{"y_u": y, "theta": t} for y, t in rep.theta_samples]
    csv_text = f"# tau={rep.tau!r} gamma={rep.gamma!r} constancy_pass={ok}\n" + _csv(["y_u", "theta"], rows)
    _emit(args, meta, json.loads(rep.to_json()), csv_text)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args, meta) -> int:
    only = [x for part in (args.only or []) for x in part.split(",") if x]
    try:
        results = run_checks(only or None, tol=args.tol, plateau=args.plateau)
    except KeyError as exc:
        raise UsageError(f"{exc.args[0]}; known: {', '.join(CHECKS)}") from None
    passed = all(r.passed for r in results)
    rows = [{"check": r.name, "residual": r.residual, "tolerance": r.tolerance, "pass": r.passed}
            for r in results]
    payload = {"pass": passed, "plateau": args.plateau, "checks": [r.to_dict() for r in results]}
    _emit(args, meta, payload, _csv(["check", "residual", "tolerance", "pass"], rows))
    return EXIT_OK if passed else EXIT_FAIL


def constants() -> dict[str, float]:
    """Every target value, computed from its defining equation."""
    om = omega_constant()
    gain = RankingGain()
    return {
        "wf_ratio": 2.0 - SQRT2,
        "linear_G1": float(linear_gain().G(1.0)),
        "omega": om,
        "ranking_c": ranking_constant(),
        "ranking_breakpoint": gain.breakpoint,
        "ranking_plateau": gain.level,
        "f_half_c": eval_f(C / 2.0),
    }


def cmd_constants(args, meta) -> int:
    vals = constants()
    rows = [{"name": k, "value": v} for k, v in vals.items()]
    _emit(args, meta, {"constants": vals}, _csv(["name", "value"], rows))
    return EXIT_OK


REPORT_HEADER = ["family", "k", "m", "trials", "seed", "ratio", "stderr", "target", "gap"]


def report_rows(families, ks, m, trials, seed) -> list[dict]:
    wf_target, om = 2.0 - SQRT2, omega_constant()
    rows = []
    for fam in families:
        if fam == "wf-hard":
            for k in ks or [10, 50, 200]:
                mm = m or 200
                ratio = run_hard_instance(k, mm).ratio
                rows.append(dict(family=fam, k=k, m=mm, trials=1, seed=seed, ratio=ratio,
                                 stderr=0.0, target=wf_target, gap=ratio - wf_target))
        elif fam == "rank-hard":
            for k in ks or [10, 30, 100]:
                mm = m or 50
                est = hard_instance_ratio(k, mm, trials, seed).bulk
                rows.append(dict(family=fam, k=k, m=mm, trials=trials, seed=seed, ratio=est.mean,
                                 stderr=est.stderr, target=om, gap=est.mean - om))
        elif fam == "stationary":
            for k in ks or [10, 100, 1000]:
                ratio = stationary_profile(k).ratio_k
                rows.append(dict(family=fam, k=k, m=math.inf, trials=1, seed=seed, ratio=ratio,
                                 stderr=0.0, target=wf_target, gap=ratio - wf_target))
        else:
            raise UsageError(f"report does not support family {fam!r}")
    rows.sort(key=lambda r: (r["family"], r["k"], r["m"]))
    return rows


def cmd_report(args, meta) -> int:
    fams = [args.family] if args.family else ["wf-hard", "rank-hard", "stationary"]
    m = _single(args.m, "--m") if args.m else None
    rows = report_rows(fams, args.k, m, args.trials, meta.seed)
    payload = {"rows": [{**r, "m": None if r["m"] == math.inf else r["m"]} for r in rows]}
    _emit(args, meta, payload, _csv(REPORT_HEADER, [{**r, "m": "inf" if r["m"] == math.inf else r["m"]}
                                                   for r in rows]))
    return EXIT_OK


COMMANDS = {
    "gen": (cmd_gen, "generate an instance file"),
    "waterfill": (cmd_waterfill, "run water-filling and certify its duals"),
    "stationary": (cmd_stationary, "stationary level profile of the water-filling hard instance"),
    "ranking": (cmd_ranking, "Monte Carlo trials of Ranking"),
    "thresholds": (cmd_thresholds, "tau, gamma and theta(y_u) for one edge"),
    "verify": (cmd_verify, "run the numerical check suite"),
    "constants": (cmd_constants, "print the target constants"),
    "report": (cmd_report, "convergence tables for the hard families"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=_int_list, help="group size (comma list for report/stationary)")
    common.add_argument("--m", type=_int_list, help="number of groups")
    common.add_argument("--L", type=int, default=10, help="copies in the generalized instance")
    common.add_argument("--n", type=int, help="vertices of a random instance")
    common.add_argument("--p", type=float, default=0.5, help="edge probability of a random instance")
    common.add_argument("--general", action="store_true", help="random instance need not be bipartite")
    common.add_argument("--trials", type=int, default=1000)
    common.add_argument("--seed", type=int, help="random seed (falls back to $FOM_SEED, then 0)")
    common.add_argument("--family", choices=FAMILIES + ("stationary",))
    common.add_argument("--in", dest="inp", metavar="PATH")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--only", action="append", metavar="CHECK")
    common.add_argument("--tol", type=float)
    common.add_argument("--plateau", type=float, help="replace the Ranking gain plateau (fault injection)")
    common.add_argument("--u", type=int)
    common.add_argument("--v", type=int)
    parser = argparse.ArgumentParser(prog="fomatch", description="Fully online matching experiments.")
    parser.add_argument("--version", action="version", version=f"fomatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fn = COMMANDS[args.command][0]
    try:
        if args.family == "stationary" and args.command != "report":
            raise UsageError("--family stationary is only meaningful for report")
        meta = _Meta(args.command, _seed(args))
        return fn(args, meta)
    except UsageError as exc:
        print(f"fomatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ParseError) as exc:
        print(f"fomatch: io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FomError, ValueError) as exc:
        print(f"fomatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
