"""Command-line driver.

    freimanlab <command> <target> [options]

Every command builds a JSON report with the inputs echoed, the outputs,
the verification verdicts and a separate timing block.  Curve commands
also produce CSV.  stdout receives the report in the chosen --format;
--out DIR additionally writes <command>.json (and <command>.csv).

Exit codes: 0 all verdicts pass, 2 configuration error, 3 budget
exceeded, 4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

from .errors import BudgetExceeded, ConfigError, FreimanError, VerificationFailure
from .grammar import parse_cnp, parse_group, parse_progression, parse_set

SCHEMA = 1


@dataclass
class Result:
    outputs: Dict[str, Any]
    verdicts: Dict[str, bool] = field(default_factory=dict)
    csv: Optional[str] = None


@dataclass
class ExperimentConfig:
    command: str
    target: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    budget_elems: Optional[int] = None
    time_cap: Optional[float] = None
    out: Optional[str] = None
    format: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown config key(s): {', '.join(extra)}")
        for key in ("command", "target"):
            if key not in data:
                raise ConfigError(f"config needs {key!r}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        spec = COMMANDS[self.command].params
        extra = sorted(set(self.params) - set(spec))
        if extra:
            raise ConfigError(f"{self.command} has no parameter(s) {', '.join(extra)}")
        for name, p in spec.items():
            if name not in self.params:
                if p.required:
                    raise ConfigError(f"{self.command} needs --{name.replace('_', '-')}")
                self.params[name] = p.default
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.format not in (None, "json", "csv"):
            raise ConfigError("format must be json or csv")

    @property
    def budget(self) -> Optional[int]:
        return self.budget_elems


@dataclass
class Param:
    kind: str                  # int | str | fraction | flag | list
    default: Any = None
    required: bool = False
    help: str = ""


@dataclass
class Command:
    run: Callable[[ExperimentConfig], Result]
    target: str
    params: Dict[str, Param]
    curve: bool = False
    help: str = ""


def _fraction(x) -> Fraction:
    try:
        return Fraction(str(x))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a rational number: {x!r}") from None


def _ser_set(S) -> List[str]:
    return [S.group.serialize(g) for g in S.sorted()]


# handlers


def _doubling(cfg: ExperimentConfig) -> Result:
    from .setcalc import expansion_constants, product_set
    G = parse_group(cfg.target)
    A = parse_set(G, cfg.params["set"], budget=cfg.budget)
    K2, K3 = expansion_constants(A)
    q = len(product_set(A, A.inverse()))
    return Result({"size": len(A), "doubling": K2, "tripling": K3,
                   "quotient_ratio": Fraction(q, len(A)), "centred": A.is_centred()})


def _approx_cert(cfg: ExperimentConfig) -> Result:
    from .setcalc import approx_certificate, symmetric_hull
    G = parse_group(cfg.target)
    A = parse_set(G, cfg.params["set"], budget=cfg.budget)
    if cfg.params["hull"]:
        A = symmetric_hull(A)
    cert = approx_certificate(A, cfg.params["method"])
    return Result({"size": len(A), "K": cert.K, "X": _ser_set(cert.X)}, dict(cert.checks))


def _nilprog_check(cfg: ExperimentConfig) -> Result:
    from .nilprog import axiom_check
    C = parse_cnp(cfg.target)
    rep = axiom_check(C, budget=cfg.budget or 5_000_000)
    witnesses = {k: (None if w is None else {key: str(v) for key, v in w.as_dict().items()})
                 for k, w in rep.results.items()}
    return Result({"name": C.name, "group": C.group.spec, "ranks": list(C.ranks),
                   "volume": C.volume(), "witnesses": witnesses},
                  {k: w is None for k, w in rep.results.items()})


def _nilprog_growth(cfg: ExperimentConfig) -> Result:
    from .growth import curve_csv
    from .nilprog import growth_curve_cnp
    C = parse_cnp(cfg.target)
    curve = growth_curve_cnp(C, cfg.params["nmax"], budget=cfg.budget or 20_000_000)
    sizes = {n + 1: s for n, s in enumerate(curve.sizes)}
    return Result({"name": C.name, **curve.as_dict()}, {}, curve_csv(sizes))


def _sarkozy(cfg: ExperimentConfig) -> Result:
    from .abelian import (difference_set, enumerate_progression, sarkozy_abelian,
                          sarkozy_coset, sarkozy_progression)
    text = cfg.target.strip()
    p = cfg.params
    if text.startswith(("gap", "coset")):
        C = parse_progression(text)
        G = C.ambient
        A = parse_set(G, p["set"], budget=cfg.budget)
        delta = _fraction(p["delta"]) if p["delta"] else Fraction(len(A), C.formal_size())
        if text.startswith("gap"):
            res = sarkozy_progression(A, C.P, delta, p["m_max"], p["l_max"])
        else:
            res = sarkozy_coset(A, C, delta, p["m_max"], p["l_max"])
        ambient_size = len(enumerate_progression(C))
    else:
        G = parse_group(cfg.target)
        A = parse_set(G, p["set"], budget=cfg.budget)
        if not getattr(G, "finite", False):
            raise ConfigError("sarkozy over a group needs a finite abelian group")
        ambient_size = G.order
        delta = _fraction(p["delta"]) if p["delta"] else Fraction(len(A), ambient_size)
        res = sarkozy_abelian(A, delta, p["m_max"])
    D = difference_set(A, res.m)
    return Result({"size": len(A), "delta": delta, "ambient_size": ambient_size,
                   "m": res.m, "l": res.l, "H": sorted(G.serialize(h) for h in res.H),
                   "eps": res.eps, "witness": res.witness,
                   "certified_size": len(res.certified_set)},
                  {"recertified": res.certified_set <= D, "m_bound": res.m <= p["m_max"],
                   "l_bound": res.l <= p["l_max"]})


def _bsg(cfg: ExperimentConfig) -> Result:
    from .bsg import bsg_refine, bsg_symmetrize
    from .setcalc import product_set
    G = parse_group(cfg.target)
    p = cfg.params
    A = parse_set(G, p["set"], budget=cfg.budget)
    K = _fraction(p["K"]) if p["K"] else Fraction(len(product_set(A, A.inverse())), len(A))
    eps = _fraction(p["eps"])
    if p["mode"] == "refine":
        rep = bsg_refine(A, K, p["k0"], eps, cfg.seed, p["max_blocks"])
    elif p["mode"] == "symmetrize":
        rep = bsg_symmetrize(A, K, p["k0"], eps, cfg.seed, max_blocks=p["max_blocks"])
    else:
        raise ConfigError("mode must be refine or symmetrize")
    out = rep.summary()
    out.update({"K": K, "size_A": len(A), "A_prime": _ser_set(rep.A_prime)})
    return Result(out, {"tuple_property": rep.verified})


def _scenario_params(items: List[str]) -> Dict[str, Any]:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"scenario parameter must be key=value, got {item!r}")
        try:
            vals = [int(v) for v in val.split(",")]
        except ValueError:
            raise ConfigError(f"scenario parameter {key!r} needs integers") from None
        out[key] = vals[0] if len(vals) == 1 else tuple(vals)
    return out


def _keyprop(cfg: ExperimentConfig) -> Result:
    from .action import (SCENARIOS, key_proposition, planted_mismatches, scenario,
                         verify_report)
    if cfg.target not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.target!r}; choose from {', '.join(SCENARIOS)}")
    params = _scenario_params(cfg.params["param"])
    params.setdefault("seed", cfg.seed)
    ctx = scenario(cfg.target, **params)
    rep = key_proposition(ctx, eps=_fraction(cfg.params["eps"]))
    bad = verify_report(ctx, rep, cfg.params["samples"], cfg.seed)
    verdicts = dict(rep.flags)
    verdicts["expansion_matches"] = bad == 0
    out = rep.to_dict()
    out["mismatches"] = bad
    if ctx.planted:
        out["planted_mismatches"] = planted_mismatches(ctx, rep)
        verdicts["planted_recovered"] = out["planted_mismatches"] == 0
    return Result(out, verdicts)


def _lamplighter(cfg: ExperimentConfig) -> Result:
    from .lamplighter import Lamps, classify, converse_doubling
    G = parse_group(cfg.target)
    A = parse_set(G, cfg.params["set"], budget=cfg.budget)
    K = _fraction(cfg.params["K"]) if cfg.params["K"] else None
    cls = classify(A, K, budget=cfg.budget or 200_000)
    k, flagged = converse_doubling(cls)
    out = cls.report(Lamps(G))
    out.update({"converse_doubling": k, "converse_flagged": flagged, "K_approx": cls.K_approx})
    return Result(out, dict(cls.checks))


def _growth(cfg: ExperimentConfig) -> Result:
    from .growth import growth_profile, small_doubling_scale
    G = parse_group(cfg.target)
    S = parse_set(G, cfg.params["gens"])
    kw = {"budget": cfg.budget} if cfg.budget else {}
    curve = growth_profile(S, cfg.params["rmax"], **kw)
    out = curve.as_dict()
    out["generators"] = _ser_set(curve.generators)
    bound = len(curve.generators)
    verdicts = {"ratio_bound": all(r is None or r <= bound for r in curve.ratios)}
    if cfg.params["scale"]:
        sc = small_doubling_scale(S, cfg.params["scale"], **kw)
        out["scale"] = {"R": cfg.params["scale"], "r0": sc.r0, "doubling": sc.doubling,
                        "range": list(sc.radius_range), "ball_R": sc.ball_R,
                        "table": {str(r): v for r, v in sc.table.items()}}
    return Result(out, verdicts, curve.to_csv())


def _covering(cfg: ExperimentConfig) -> Result:
    from .growth import covering_iteration, small_doubling_scale
    G = parse_group(cfg.target)
    p = cfg.params
    S = parse_set(G, p["gens"])
    kw = {"budget": cfg.budget} if cfg.budget else {}
    out: Dict[str, Any] = {}
    r0 = p["r0"]
    if r0 is None:
        if not p["R"]:
            raise ConfigError("covering needs --r0 or --R")
        sc = small_doubling_scale(S, p["R"], **kw)
        r0 = sc.r0
        out["scale"] = {"R": p["R"], "r0": sc.r0, "doubling": sc.doubling}
    A = parse_set(G, p["set"], gens=S, budget=cfg.budget)
    rep = covering_iteration(S, A, r0, p["n_cap"], **kw)
    out.update(rep.to_dict(G))
    out.update({"r0": r0, "size_A": len(A)})
    return Result(out, dict(rep.checks))


COMMANDS: Dict[str, Command] = {
    "doubling": Command(_doubling, "group", {
        "set": Param("str", required=True, help="set expression")},
        help="doubling and tripling constants"),
    "approx-cert": Command(_approx_cert, "group", {
        "set": Param("str", required=True),
        "method": Param("str", "greedy", help="greedy or exhaustive"),
        "hull": Param("flag", False, help="replace A by A u A^-1 u {1}")},
        help="approximate-group certificate"),
    "nilprog-check": Command(_nilprog_check, "cnp", {}, help="axiom check"),
    "nilprog-growth": Command(_nilprog_growth, "cnp", {
        "nmax": Param("int", 8)}, curve=True, help="|A^{±n}| curve"),
    "sarkozy": Command(_sarkozy, "group or progression", {
        "set": Param("str", required=True),
        "delta": Param("str", None, help="density; defaults to the measured one"),
        "m_max": Param("int", 4), "l_max": Param("int", 4)},
        help="subgroup or coset progression inside mA - mA"),
    "bsg": Command(_bsg, "group", {
        "set": Param("str", required=True), "K": Param("str", None),
        "k0": Param("int", 2), "eps": Param("str", "1/10"),
        "mode": Param("str", "refine", help="refine or symmetrize"),
        "max_blocks": Param("int", 8)},
        help="refinement with the tuple property"),
    "keyprop": Command(_keyprop, "scenario", {
        "eps": Param("str", "1/5"), "samples": Param("int", 1000),
        "param": Param("list", None, help="scenario parameter key=value (repeatable)")},
        help="unipotent action report"),
    "lamplighter-classify": Command(_lamplighter, "group", {
        "set": Param("str", required=True), "K": Param("str", None)},
        help="Case 1 / Case 2 classification"),
    "growth": Command(_growth, "group", {
        "gens": Param("str", required=True), "rmax": Param("int", 20),
        "scale": Param("int", None, help="also report the small-doubling radius for this R")},
        curve=True, help="ball growth curve"),
    "covering": Command(_covering, "group", {
        "gens": Param("str", required=True),
        "set": Param("str", required=True, help="candidate A, e.g. ball(2) or cnp(...)"),
        "r0": Param("int", None), "R": Param("int", None), "n_cap": Param("int", 8)},
        help="covering and stabilisation certificates"),
}


# plumbing


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (set, frozenset)):
        return sorted(_jsonable(v) for v in x)
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):                # numpy scalars
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(report: Dict) -> str:
    return json.dumps(report, default=_jsonable, sort_keys=True, indent=2) + "\n"


@contextmanager
def _time_cap(seconds: Optional[float]):
    if not seconds or not hasattr(signal, "SIGALRM"):
        yield
        return

    def fire(signum, frame):
        raise BudgetExceeded(f"time cap of {seconds:g} s exceeded")

    old = signal.signal(signal.SIGALRM, fire)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, old)


def execute(cfg: ExperimentConfig) -> Tuple[int, Dict, Optional[str]]:
    """Run one experiment; returns (exit code, report, csv text)."""
    report: Dict[str, Any] = {"schema": SCHEMA, "inputs": asdict(cfg)}
    t0 = time.perf_counter()
    csv_text = None
    try:
        with _time_cap(cfg.time_cap):
            res = COMMANDS[cfg.command].run(cfg)
        report["outputs"] = res.outputs
        report["verdicts"] = res.verdicts
        csv_text = res.csv
        if all(res.verdicts.values()):
            report["status"] = "ok"
            code = 0
        else:
            report["status"] = "verification_failure"
            report["failure_kind"] = "instance"
            report["failed"] = sorted(k for k, v in res.verdicts.items() if not v)
            code = VerificationFailure.exit_code
    except AssertionError as e:
        # an internal invariant broke: always a bug
        report.update(status="verification_failure", failure_kind="internal", error=str(e))
        code = VerificationFailure.exit_code
    except FreimanError as e:
        status = {2: "config_error", 3: "budget_exceeded", 4: "verification_failure"}
        report.update(status=status.get(e.exit_code, "error"), error=str(e),
                      error_type=type(e).__name__)
        if isinstance(e, VerificationFailure):
            report["failure_kind"] = "instance"
        if getattr(e, "stage", None):
            report["stage"] = e.stage
        code = e.exit_code
    report["timing"] = {"seconds": round(time.perf_counter() - t0, 6)}
    return code, report, csv_text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freimanlab", description="Desk-scale experiments on "
                                 "small doubling in solvable groups.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, cmd in COMMANDS.items():
        sp = sub.add_parser(name, help=cmd.help)
        sp.add_argument("target", nargs="?", help=cmd.target)
        sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--budget-elems", type=int, default=None)
        sp.add_argument("--time-cap", type=float, default=None, help="seconds")
        sp.add_argument("--out", default=None, help="directory for report files")
        sp.add_argument("--format", choices=("json", "csv"), default=None)
        for pname, p in cmd.params.items():
            flag = "--" + pname.replace("_", "-")
            if p.kind == "flag":
                sp.add_argument(flag, dest=pname, action="store_true", default=None)
            elif p.kind == "list":
                sp.add_argument(flag, dest=pname, action="append", default=None, help=p.help)
            else:
                sp.add_argument(flag, dest=pname, type=int if p.kind == "int" else str,
                                default=None, help=p.help)
    return ap


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: Dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if data.get("command", args.command) != args.command:
            raise ConfigError("config command does not match the subcommand")
    data["command"] = args.command
    params = dict(data.get("params") or {})
    for pname in COMMANDS[args.command].params:
        val = getattr(args, pname)
        if val is not None:
            params[pname] = val
    data["params"] = params
    if args.target is not None:
        data["target"] = args.target
    for key in ("seed", "budget_elems", "time_cap", "out", "format"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if "target" not in data:
        raise ConfigError(f"{args.command} needs a target ({COMMANDS[args.command].target})")
    return ExperimentConfig.from_dict(data)


def run(argv: Optional[List[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as e:
        print(f"freimanlab: {e}", file=sys.stderr)
        return e.exit_code
    code, report, csv_text = execute(cfg)
    fmt = cfg.format or ("csv" if COMMANDS[cfg.command].curve else "json")
    if fmt == "csv" and csv_text is None:
        fmt = "json"
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, f"{cfg.command}.json"), "w") as fh:
            fh.write(dumps(report))
        if csv_text is not None:
            with open(os.path.join(cfg.out, f"{cfg.command}.csv"), "w") as fh:
                fh.write(csv_text)
    stdout.write(csv_text if fmt == "csv" and code == 0 else dumps(report))
    if "error" in report:
        print(f"freimanlab: {report['status']}: {report['error']}", file=sys.stderr)
    return code


def main():
    sys.exit(run())
