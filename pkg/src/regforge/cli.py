"""regforge command line.

Exit codes: 0 success, 2 verification failure, 1 usage or input error.
Every subcommand accepts ``--config file.json``; keys are option names
(dashes or underscores), and flags given on the command line win.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path


from . import towerarith as ta
from .afksloop import afks_iterate
from .convexdecomp import (DecompositionError, TrapGenerationError, TrapOverrides, TrapSpec,
                           decompose, generate_trap, verify_trap)
from .hardgraph import (ConstructionParams, build_h, dump_graph, ledger_to_csv, load_graph,
                        sample_unweighted)
from .partitions import (BalancedFamily, BalancedGenerationError, Partition, canonical_partition,
                         generate_balanced, verify_balanced)
from .regcheck import check_ef_regular, check_pair, check_partition
from .witnesslab import peel, witness_sweep

DEFAULT_GRAPH = "graph.json"


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------- parsing

def rational(text):
    """Exact rational from 'p/q', an integer or a decimal string."""
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"cannot parse {text!r} as a rational (use p/q or a decimal)")


def rational_list(text):
    return [rational(t) for t in str(text).split(",") if t.strip()]


def int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def vertex_set(text, Gw=None):
    """'0-3,7' ranges, or 'P<r>:<i>' for class i of the canonical partition P_r."""
    text = str(text).strip()
    if text.startswith("P") and ":" in text:
        r, i = text[1:].split(":", 1)
        return _need_graph(Gw).partition(int(r)).classes[int(i)].tolist()
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "-" in tok:
            a, b = tok.split("-", 1)
            out += range(int(a), int(b) + 1)
        else:
            out.append(int(tok))
    return out


def partition_arg(text, Gw):
    """'P<r>', 'intervals:<k>' or a partition file."""
    text = str(text)
    if text.startswith("P") and text[1:].isdigit():
        return _need_graph(Gw).partition(int(text[1:]))
    if text.startswith("intervals:"):
        return canonical_partition(Gw.n, int(text.split(":", 1)[1]))
    path = Path(text)
    if not path.exists():
        raise UsageError(f"partition {text!r} is neither P<r>, intervals:<k> nor an existing file")
    return Partition.load(path)


def _need_graph(Gw):
    if Gw is None:
        raise UsageError("this argument needs a graph (--graph)")
    return Gw


def _load(path):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"graph file {path!r} not found; run 'regforge construct' first or pass --graph")
    return load_graph(p)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=str)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _threads(args):
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("REGFORGE_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"REGFORGE_THREADS must be an integer, got {env!r}")
    return 1


# ---------------------------------------------------------- commands

def cmd_schedule(args):
    out = {}
    if args.tower is not None:
        out["tower"] = ta.tower(args.tower)
    if args.wowzer is not None:
        try:
            out["wowzer"] = ta.wowzer(args.wowzer)
        except ta.UnrepresentableError as exc:
            out["wowzer"] = f"unrepresentable: {exc}"
    if args.tphi is not None:
        out["t_phi"] = ta.t_phi(args.tphi)
    if args.w1 is not None:
        try:
            s = ta.trap_schedule(args.w1, args.count)
            out["schedule"] = {"levels": list(s.levels), "weights": [str(w) for w in s.weights]}
        except (ta.ScheduleError, ta.UnrepresentableError) as exc:
            out["schedule"] = f"error: {exc}"
    if not out:
        raise UsageError("schedule needs --tower, --wowzer, --tphi or --w1")
    if list(out) == ["tower"] and out["tower"].is_exact:
        print(out["tower"].value)
        return 0
    for k, v in out.items():
        if isinstance(v, ta.TowerNum) and v.is_exact and v.value.bit_length() <= 4096:
            print(f"{k}: {v.value}")
        else:
            print(f"{k}: {v}")
    return 0


def _overrides(path):
    if not path:
        return None
    p = Path(path)
    if not p.exists():
        raise UsageError(f"overrides file {path!r} not found")
    try:
        return TrapOverrides.from_dict(json.loads(p.read_text()))
    except (json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"bad overrides file: {exc}")


def _params(args):
    overrides = _overrides(args.trap_overrides)
    return ConstructionParams(levels=args.levels, base_weight=args.base_weight,
                              trap_levels=tuple(args.traps or ()), seed=args.seed,
                              atom_size=args.atom_size, include_diagonal=not args.no_diagonal,
                              verify_traps=not args.no_verify_traps,
                              require_verified_traps=args.require_verified_traps,
                              trap_overrides=overrides)


def cmd_construct(args):
    if args.levels is None:
        raise UsageError("construct needs --levels")
    H = build_h(_params(args))
    dump_graph(H, args.out)
    if args.ledger:
        Path(args.ledger).write_text(ledger_to_csv(H))
    _emit({"graph": args.out, "atoms": H.atom_count, "atom_size": H.atom_size, "n": H.n,
           "canonical_orders": list(H.orders),
           "traps": [{"level": t.level, "weight": str(t.weight), "verified": t.verified} for t in H.traps]})
    return 0


def cmd_trap_gen(args):
    orders = tuple(args.orders or ())
    try:
        spec = generate_trap(args.m, orders, seed=args.seed, retries=args.retries,
                             overrides=_overrides(args.overrides))
    except TrapGenerationError as exc:
        _emit({"passed": False, "error": str(exc),
               "best": None if exc.best is None else exc.best.to_dict()})
        raise VerificationFailed(str(exc))
    Path(args.out).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    _emit({"passed": True, "out": args.out, "verification": spec.verification.to_dict()})
    return 0


def cmd_trap_verify(args):
    p = Path(args.input)
    if not p.exists():
        raise UsageError(f"trap file {args.input!r} not found")
    spec = TrapSpec.from_dict(json.loads(p.read_text()))
    ver = verify_trap(spec.graph, tuple(args.orders or ()), _overrides(args.overrides),
                      seed=args.seed, trials=args.trials)
    _emit(ver.to_dict())
    if not ver.passed:
        raise VerificationFailed("trap verification failed")
    return 0


def cmd_balanced_gen(args):
    try:
        fam = generate_balanced(args.m, seed=args.seed)
    except BalancedGenerationError as exc:
        raise VerificationFailed(str(exc))
    Path(args.out).write_text(json.dumps(fam.to_dict(), sort_keys=True) + "\n")
    _emit({"m": fam.m, "M": fam.M, "out": args.out, "verified": fam.verified})
    return 0


def cmd_balanced_verify(args):
    p = Path(args.input)
    if not p.exists():
        raise UsageError(f"family file {args.input!r} not found")
    fam = BalancedFamily.from_dict(json.loads(p.read_text()))
    ok, worst = verify_balanced(fam)
    _emit({"balanced": ok, "worst": worst})
    if not ok:
        raise VerificationFailed("family is not balanced")
    return 0


def cmd_decompose(args):
    try:
        dec = decompose(args.x, args.k)
        dec.validate(args.x)
    except DecompositionError as exc:
        raise VerificationFailed(str(exc))
    for a, S in dec.terms:
        print(f"{a} * {list(S)}")
    print("reconstruction: exact")
    return 0


def cmd_check_pair(args):
    Gw = _load(args.graph)
    A, B = vertex_set(args.A, Gw), vertex_set(args.B, Gw)
    v = check_pair(Gw, A, B, args.gamma, mode=args.mode, seed=args.seed)
    _emit(v.to_dict(), args.out)
    return 0


def cmd_check_partition(args):
    Gw = _load(args.graph)
    Z = partition_arg(args.Z, Gw)
    rep = check_partition(Gw, Z, args.gamma, mode=args.mode, threads=_threads(args), seed=args.seed)
    _emit(rep.to_dict(), args.out)
    return 0


def cmd_check_ef(args):
    Gw = _load(args.graph)
    A, B = partition_arg(args.A, Gw), partition_arg(args.B, Gw)
    fv = args.f_value if args.f_value is not None else Fraction(1, A.k)
    rep = check_ef_regular(Gw, A, B, args.eps, fv, mode=args.mode, threads=_threads(args),
                           seed=args.seed, cond1=not args.skip_cond1)
    d = rep.to_dict()
    _emit(d, args.out)
    print(f"cond1={str(rep.cond1).lower()} cond2={str(rep.cond2).lower()}")
    return 0


def cmd_witness_sweep(args):
    Gw = _load(args.graph)
    Z = partition_arg(args.Z if args.Z else f"P{args.level - 1}", Gw)
    reps = witness_sweep(Gw, Z, args.level, args.beta, args.delta, args.gamma, threads=_threads(args))
    found = sum(r.found for r in reps)
    _emit({"certificates": len(reps), "witnesses": found,
           "reports": [r.to_dict() for r in reps]}, args.out)
    return 0


def cmd_peel(args):
    Gw = _load(args.graph)
    A = vertex_set(args.set, Gw)
    parts = [Gw.partition(b) for b in args.levels]
    tr = peel(A, parts, args.delta, args.levels)
    _emit(tr.to_dict(), args.out)
    return 0


def cmd_sample(args):
    Gw = _load(args.graph)
    S = sample_unweighted(Gw, args.n, seed=args.seed)
    Path(args.out).write_text(S.to_csv())
    _emit({"n": S.n, "edges": S.edge_count(), "out": args.out})
    return 0


def cmd_afks_run(args):
    Gw = _load(args.graph)
    scale = args.f_scale

    def f(x):
        return scale / x

    tr = afks_iterate(Gw, args.eps, f, budget=args.budget, mode=args.mode, seed=args.seed,
                      threads=_threads(args))
    if args.csv:
        Path(args.csv).write_text(tr.to_csv())
    if args.json:
        Path(args.json).write_text(tr.to_json() + "\n")
    print(tr.to_csv(), end="")
    print(f"stop: {tr.stop_reason}")
    return 0


# ----------------------------------------------------------- grammar

def _common(p, graph=False):
    p.add_argument("--config", help="JSON file with option values (flags win)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (env REGFORGE_THREADS)")
    if graph:
        p.add_argument("--graph", default=DEFAULT_GRAPH, help=f"graph JSON (default {DEFAULT_GRAPH})")
    return p


def build_parser():
    top = _Parser(prog="regforge", description="hard graphs for strong regularity, checkers and witnesses")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    p = _common(sub.add_parser("schedule", help="tower arithmetic report"))
    p.add_argument("--tower", type=int)
    p.add_argument("--wowzer", type=int)
    p.add_argument("--tphi", type=int)
    p.add_argument("--w1", type=int)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_schedule)

    p = _common(sub.add_parser("construct", help="build G or H and dump it"))
    p.add_argument("--levels", type=int)
    p.add_argument("--base-weight", type=rational, default=Fraction(1, 64))
    p.add_argument("--traps", type=int_list, default=None)
    p.add_argument("--atom-size", type=int, default=1)
    p.add_argument("--no-diagonal", action="store_true")
    p.add_argument("--no-verify-traps", action="store_true")
    p.add_argument("--require-verified-traps", action="store_true")
    p.add_argument("--trap-overrides", help="JSON file of trap condition overrides")
    p.add_argument("--out", default=DEFAULT_GRAPH)
    p.add_argument("--ledger", help="also write the ledger CSV here")
    p.set_defaults(func=cmd_construct)

    trap = sub.add_parser("trap").add_subparsers(dest="action", parser_class=_Parser)
    p = _common(trap.add_parser("gen"))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--orders", type=int_list)
    p.add_argument("--retries", type=int, default=16)
    p.add_argument("--overrides", help="JSON file of trap condition overrides")
    p.add_argument("--out", default="trap.json")
    p.set_defaults(func=cmd_trap_gen)
    p = _common(trap.add_parser("verify"))
    p.add_argument("--in", dest="input", default="trap.json")
    p.add_argument("--orders", type=int_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--overrides", help="JSON file of trap condition overrides")
    p.set_defaults(func=cmd_trap_verify)

    bal = sub.add_parser("balanced").add_subparsers(dest="action", parser_class=_Parser)
    p = _common(bal.add_parser("gen"))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", default="balanced.json")
    p.set_defaults(func=cmd_balanced_gen)
    p = _common(bal.add_parser("verify"))
    p.add_argument("--in", dest="input", default="balanced.json")
    p.set_defaults(func=cmd_balanced_verify)

    p = _common(sub.add_parser("decompose", help="convex decomposition of x into k-subsets"))
    p.add_argument("--x", type=rational_list, required=True)
    p.add_argument("--k", type=int, required=True)
    p.set_defaults(func=cmd_decompose)

    chk = sub.add_parser("check").add_subparsers(dest="action", parser_class=_Parser)
    p = _common(chk.add_parser("pair"), graph=True)
    p.add_argument("--A", required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--gamma", type=rational, required=True)
    p.add_argument("--mode", choices=["exact", "heuristic"], default="heuristic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_pair)
    p = _common(chk.add_parser("partition"), graph=True)
    p.add_argument("--Z", required=True)
    p.add_argument("--gamma", type=rational, required=True)
    p.add_argument("--mode", choices=["exact", "heuristic"], default="heuristic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_partition)
    p = _common(chk.add_parser("ef"), graph=True)
    p.add_argument("--A", required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--eps", type=rational, required=True)
    p.add_argument("--f-value", type=rational, help="f(|A|); default 1/|A|")
    p.add_argument("--mode", choices=["exact", "heuristic"], default="heuristic")
    p.add_argument("--skip-cond1", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check_ef)

    wit = sub.add_parser("witness").add_subparsers(dest="action", parser_class=_Parser)
    p = _common(wit.add_parser("sweep"), graph=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--Z", help="partition (default P<level-1>)")
    p.add_argument("--beta", type=rational, default=Fraction(1, 4))
    p.add_argument("--delta", type=rational)
    p.add_argument("--gamma", type=rational)
    p.add_argument("--out")
    p.set_defaults(func=cmd_witness_sweep)

    p = _common(sub.add_parser("peel"), graph=True)
    p.add_argument("--set", required=True)
    p.add_argument("--levels", type=int_list, required=True)
    p.add_argument("--delta", type=rational, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_peel)

    p = _common(sub.add_parser("sample"), graph=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default="edges.csv")
    p.set_defaults(func=cmd_sample)

    afks = sub.add_parser("afks").add_subparsers(dest="action", parser_class=_Parser)
    p = _common(afks.add_parser("run"), graph=True)
    p.add_argument("--eps", type=rational, required=True)
    p.add_argument("--f-scale", type=rational, default=Fraction(1), help="f(x) = scale / x")
    p.add_argument("--budget", type=int, default=6)
    p.add_argument("--mode", choices=["exact", "heuristic"], default="heuristic")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_afks_run)
    return top


def _config_path(argv):
    for i, a in enumerate(argv):
        if a == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file")
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def _config_args(argv):
    """Extra "--key value" arguments for options in --config that the
    command line does not already set."""
    path = _config_path(argv)
    if path is None:
        return []
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {path!r} not found")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    given = {a.split("=", 1)[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    extra = []
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest in given or dest == "config":
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(val, bool):
            if val:
                extra.append(flag)
        else:
            if isinstance(val, list):
                val = ",".join(str(v) for v in val)
            extra += [flag, str(val)]
    return extra


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv + _config_args(argv))
        if not getattr(args, "func", None):
            parser.print_help()
            raise UsageError("missing subcommand")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        raise
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # output piped into something like head
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = 0
    sys.exit(code)
