"""Command-line harness: scenario loading, command dispatch, deterministic
CSV/table emission.

Exit codes: 0 success, 1 usage error, 2 scenario validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .beliefs import FiniteBelief, History, conditional_mode, pushforward_mode
from .core import Agent, ContractViolation, Economy, UtilitySpec, apply_topology
from .dynamics import (
    gradient_ascent,
    rest_point_certificate,
    run_nontatonnement,
)
from .enumeration import enumerate_feasible, pareto_filter
from .money import build_ledger, conservation_audit, local_net_audit, quantity_equation
from .nash import nash_pareto_set, nash_set
from .records_io import (
    format_table,
    write_audit_csv,
    write_records_csv,
    write_trajectory_csv,
)

USAGE_ERROR, VALIDATION_ERROR, NUMERICAL_ERROR = 1, 2, 3


@dataclass
class ScenarioConfig:
    economy: Economy
    raw: dict
    flow_bound: object
    offer_cap: str
    deviation_mode: str
    seed: int
    tol: float
    step_scale: float
    config_hash: str


def _validation_error(msg):
    raise ContractViolation(msg)


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file; defaults are filled and echoed via
    the config hash so runs are reproducible."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}")

    agents = []
    spec_agents = raw.get("agents")
    if not spec_agents:
        _validation_error("scenario must list at least one agent")
    for idx, a in enumerate(spec_agents):
        if "endowment" not in a:
            _validation_error(f"agent {idx}: missing endowment")
        if "ces" in a:
            ces = a["ces"]
            w = ces.get("weights")
            if w is None or abs(sum(w) - 1.0) > 1e-9:
                _validation_error(f"agent {idx}: CES weights must sum to 1")
            util = UtilitySpec.ces(w, ces.get("exponent", 0.5))
        else:
            _validation_error(f"agent {idx}: missing utility (expected 'ces')")
        agents.append(Agent(endowment=a["endowment"], utility=util,
                            lower=a.get("lower"), upper=a.get("upper"),
                            money=float(a.get("money", 0.0))))

    mode = raw.get("mode", "discrete")
    n = len(agents)
    L = agents[0].endowment.shape[0]
    capacities = None
    if raw.get("capacities"):
        capacities = np.full((n, n, L), np.inf)
        for entry in raw["capacities"]:
            i, j = int(entry["from"]), int(entry["to"])
            bound = float(entry["bound"])
            goods = [int(entry["good"])] if "good" in entry else range(L)
            for k in goods:
                capacities[i, j, k] = bound
    economy = Economy(agents=tuple(agents), mode=mode, capacities=capacities)

    defaults = {
        "mode": mode,
        "flow_bound": raw.get("flow_bound"),
        "offer_cap": raw.get("offer_cap", "endowment"),
        "deviation_mode": raw.get("deviation_mode", "full"),
        "seed": int(raw.get("seed", 0)),
        "tol": float(raw.get("tol", 1e-9)),
        "step_scale": float(raw.get("step_scale", 0.1)),
    }
    echoed = dict(raw)
    echoed.update(defaults)
    blob = json.dumps(echoed, sort_keys=True).encode()
    return ScenarioConfig(economy=economy, raw=raw,
                          flow_bound=defaults["flow_bound"],
                          offer_cap=defaults["offer_cap"],
                          deviation_mode=defaults["deviation_mode"],
                          seed=defaults["seed"], tol=defaults["tol"],
                          step_scale=defaults["step_scale"],
                          config_hash=hashlib.sha256(blob).hexdigest())


def _emit(path_or_none, writer, fmt_fallback=print):
    if path_or_none is None:
        buf_cls = __import__("io").StringIO
        buf = buf_cls()
        writer(buf)
        sys.stdout.write(buf.getvalue())
    else:
        tmp = Path(str(path_or_none) + ".tmp")
        try:
            with open(tmp, "w") as fh:
                writer(fh)
            tmp.replace(path_or_none)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise


def _out_path(args, name):
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _convention_line(cfg):
    return (f"# convention: offer_cap={cfg.offer_cap} no_bidirectional=on "
            f"price_rule=min_norm_witness deviation_mode={cfg.deviation_mode}\n")


def cmd_enumerate(cfg, args, select="all"):
    records = enumerate_feasible(cfg.economy, cfg.flow_bound, cfg.offer_cap)
    pareto = pareto_filter(records)
    chosen = records
    if select in ("nash", "nash-pareto"):
        nash = nash_set(cfg.economy, records, cfg.deviation_mode)
        nash_pareto_set(cfg.economy, records, cfg.deviation_mode)
        chosen = nash if select == "nash" else [r for r in nash if r.nash_pareto]
    elif select == "pareto":
        chosen = pareto

    name = {"all": "records", "pareto": "pareto", "nash": "nash",
            "nash-pareto": "nash_pareto"}[select]

    def write(fh):
        fh.write(_convention_line(cfg))
        fh.write(f"# feasible={len(records)} pareto={len(pareto)}\n")
        if args.format == "table":
            fh.write(format_table(chosen, __version__, cfg.config_hash))
        else:
            write_records_csv(chosen, fh, __version__, cfg.config_hash)

    _emit(_out_path(args, f"{name}.{'txt' if args.format == 'table' else 'csv'}"), write)
    return 0


def cmd_converge(cfg, args):
    result = gradient_ascent(cfg.economy, stop_tol=args.tol or 1e-6,
                             schedule=lambda t: cfg.step_scale / math.sqrt(t))

    def write(fh):
        fh.write(_convention_line(cfg))
        fh.write(f"# converged={result.converged} reason={result.reason} "
                 f"welfare={result.terminal.welfare!r}\n")
        write_trajectory_csv(result.trajectory, fh, __version__, cfg.config_hash)

    _emit(_out_path(args, "trajectory.csv"), write)
    return 0


def cmd_nontatonnement(cfg, args):
    steps, path = run_nontatonnement(cfg.economy, nash=args.nash, seed=cfg.seed,
                                     deviation_mode=cfg.deviation_mode)
    ok, _ = rest_point_certificate(cfg.economy, path[-1], seed=cfg.seed)

    def write(fh):
        fh.write(_convention_line(cfg))
        fh.write(f"# steps={len(steps)} rest_point_certified={ok}\n")
        fh.write("step,utilities\n")
        for t, (_, utils) in enumerate(steps, start=1):
            fh.write(f"{t},\"{', '.join(repr(float(u)) for u in utils)}\"\n")

    _emit(_out_path(args, "nontatonnement.csv"), write)
    return 0


def cmd_money_audit(cfg, args):
    eco = cfg.economy
    money = np.array([a.money for a in eco.agents])
    records = enumerate_feasible(eco, cfg.flow_bound, cfg.offer_cap)
    nash = nash_set(eco, records, cfg.deviation_mode)
    worst = 0.0
    rows = []
    for rec in nash:
        ledger = build_ledger(money, rec.price_witness, rec.flows)
        res = local_net_audit(ledger, rec.price_witness, rec.flows)
        cons = conservation_audit(ledger)
        qe = quantity_equation(rec.price_witness, rec.flows, ledger)
        worst = max(worst, float(np.max(np.abs(res))), abs(cons),
                    abs(qe.left - qe.right))
        rows.append((res, qe.velocity))

    def write(fh):
        fh.write(_convention_line(cfg))
        fh.write(f"# nash_records={len(nash)} worst_residual={worst!r}\n")
        for idx, (res, v) in enumerate(rows):
            fh.write(f"# record {idx}\n")
            write_audit_csv(res, v, fh, __version__, cfg.config_hash)

    _emit(_out_path(args, "money_audit.csv"), write)
    return 0


def cmd_mode(args):
    raw = json.loads(Path(args.belief).read_text())
    belief = FiniteBelief(tuple(raw["support"]), tuple(raw["probabilities"]))
    if raw.get("observations"):
        history = History(tuple((o["t"], o) for o in raw["observations"]),
                          window=int(raw.get("window", 1)),
                          now=raw.get("now"))

        def compatible(outcome, obs):
            if "eq" in obs:
                return outcome == obs["eq"]
            if "not" in obs:
                return outcome != obs["not"]
            return True

        modal = conditional_mode(belief, history, compatible)
    else:
        modal = pushforward_mode(belief, lambda v: v)
    sys.stdout.write("modal set: " + ", ".join(str(v) for v in modal) + "\n")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="effective-trade",
        description="Bilateral min-of-offers exchange: equilibria, dynamics, money")
    p.add_argument("command", choices=["enumerate", "pareto", "nash", "nash-pareto",
                                       "converge", "nontatonnement", "money-audit",
                                       "mode"])
    p.add_argument("config", help="scenario JSON (belief JSON for 'mode')")
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--flow-bound", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.add_argument("--nash", action="store_true",
                   help="restrict nontatonnement steps to stage Nash states")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return USAGE_ERROR if e.code not in (0, None) else 0

    if args.command == "mode":
        args.belief = args.config
        try:
            return cmd_mode(args)
        except (ContractViolation, ValueError, KeyError) as e:
            print(f"error: {e}", file=sys.stderr)
            return VALIDATION_ERROR

    try:
        cfg = load_scenario(args.config)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except (ContractViolation, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return VALIDATION_ERROR
    if args.seed is not None:
        cfg.seed = args.seed
    if args.flow_bound is not None:
        cfg.flow_bound = args.flow_bound

    try:
        if args.command in ("enumerate", "pareto", "nash", "nash-pareto"):
            select = {"enumerate": "all"}.get(args.command, args.command)
            return cmd_enumerate(cfg, args, select)
        if args.command == "converge":
            return cmd_converge(cfg, args)
        if args.command == "nontatonnement":
            return cmd_nontatonnement(cfg, args)
        if args.command == "money-audit":
            return cmd_money_audit(cfg, args)
    except ContractViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return VALIDATION_ERROR
    except (ArithmeticError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return NUMERICAL_ERROR
    return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
