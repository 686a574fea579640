"""Command-line front end.

Exit codes: 0 ok, 1 usage error, 2 unreadable or malformed case, 3 the case
is infeasible, unbalanced, disconnected, or an outage islands it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from .dcflow import IslandingError, MissingSusceptanceError, dc_contingency, dc_n_minus_1, overload_report, solve_dc
from .feasibility import feasibility_test, screen_n_minus_1
from .flows import InfeasibleFlowError, RoutingPolicy, build_flow, verify_flow
from .network import BalanceError, BalancePolicy, CaseError, Network, balance, load_case, validate_connectivity

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cutscreen", description="Screen branch outages for saturated cut-sets.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--case", required=True, metavar="PATH", help="case file (.m for MATPOWER, else native TSV)")
    common.add_argument("--format", choices=("matpower", "native"), help="override format detection")
    common.add_argument(
        "--balance",
        default="slack",
        metavar="POLICY",
        help="slack[:<bus>] | scale | strict | economic (default: slack at the largest generator)",
    )
    common.add_argument("--output", choices=("json", "table"), default="table")
    common.add_argument("--seed", type=int, help="shuffle source/sink pairing with this seed")

    def threads(cmd):
        cmd.add_argument("--threads", type=int, default=None, help="worker processes (default: all CPUs)")

    def base(cmd):
        cmd.add_argument(
            "--base", choices=("graph", "dc"), default="graph", help="base flow: graph-built (default) or DC solution"
        )

    sub.add_parser("validate", parents=[common], help="connectivity and balance report")
    sub.add_parser("flow", parents=[common], help="build a valid flow and print it as TSV")
    ft = sub.add_parser("ft", parents=[common], help="feasibility test for one outage")
    ft.add_argument("--outage", required=True, metavar="FROM-TO[:k]")
    base(ft)
    scr = sub.add_parser("screen", parents=[common], help="feasibility test for every branch")
    base(scr)
    threads(scr)
    dc = sub.add_parser("dc", parents=[common], help="DC contingency overloads")
    dc.add_argument("--outage", metavar="FROM-TO[:k]", help="single outage (default: every branch)")
    dc.add_argument("--reference", type=int, help="reference bus (default: the slack bus)")
    threads(dc)
    bench = sub.add_parser("bench", parents=[common], help="time N-1 screening against N-1 DC re-solves")
    threads(bench)
    return p


# --------------------------------------------------------------------------
# helpers


def _load(args) -> Network:
    try:
        policy = BalancePolicy.parse(args.balance)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    net = load_case(args.case, args.format)
    return balance(net, policy)


def _require_connected(net: Network) -> None:
    comps = validate_connectivity(net)
    if len(comps) > 1:
        raise IslandingError(f"network has {len(comps)} islands")


def _routing(args) -> RoutingPolicy:
    return RoutingPolicy() if args.seed is None else RoutingPolicy.random(args.seed)


def _base_flow(net: Network, args):
    if getattr(args, "base", "graph") == "dc":
        fs = solve_dc(net)
        bad = verify_flow(net, fs)
        if bad:
            raise InfeasibleFlowError(f"DC base flow is not a valid flow ({len(bad)} violations, first: {bad[0]})")
        return fs
    _require_connected(net)
    return build_flow(net, _routing(args))


def _outage_id(net: Network, ref: str) -> int:
    try:
        return net.branch(ref).id
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None


def _workers(args) -> int:
    n = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if n < 1:
        raise UsageError("--threads must be at least 1")
    return n


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False)


def _num(x: float) -> str:
    return "inf" if x == float("inf") else f"{x:.3f}"


def _table(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _cut_text(net: Network, cut) -> str:
    return "{" + ", ".join(cut.labels(net)) + "}"


# --------------------------------------------------------------------------
# commands


def cmd_validate(net: Network, args) -> tuple[int, str]:
    comps = validate_connectivity(net)
    report = {
        "case": net.name,
        "buses": len(net.buses),
        "branches": len(net.branches),
        "generators": len(net.generators),
        "balance_policy": str(net.balance_policy),
        "total_injection_mw": round(net.total_injection, 6) + 0.0,
        "components": [sorted(c) for c in comps],
        "connected": len(comps) == 1,
    }
    if args.output == "json":
        text = _dump(report)
    else:
        text = "\n".join(
            [
                f"case        {net.name}",
                f"buses       {len(net.buses)}",
                f"branches    {len(net.branches)}",
                f"balance     {net.balance_policy} (residual {report['total_injection_mw']:.6f} MW)",
                f"components  {len(comps)}" + ("" if len(comps) == 1 else ": " + "; ".join(
                    ",".join(map(str, sorted(c))) for c in comps
                )),
            ]
        )
    return (EXIT_OK if len(comps) == 1 else EXIT_INFEASIBLE), text


def cmd_flow(net: Network, args) -> tuple[int, str]:
    fs = _base_flow(net, args)
    if args.output == "json":
        return EXIT_OK, _dump(
            [{"id": br.id, "from": br.from_bus, "to": br.to_bus, "flow_mw": fs.flows[br.id]} for br in net.branches]
        )
    return EXIT_OK, fs.to_tsv(net).rstrip("\n")


def _report_rows(net: Network, reports):
    for r in reports:
        br = net.branches[r.outaged_branch]
        yield (
            br.id,
            br.label,
            _num(r.flow),
            _num(r.rerouted),
            _num(r.margin),
            _cut_text(net, r.critical_cut) if r.critical_cut else "-",
        )


_FT_HEADERS = ("id", "outage", "flow_mw", "rerouted_mw", "margin_mw", "critical_cut")


def cmd_ft(net: Network, args) -> tuple[int, str]:
    k = _outage_id(net, args.outage)
    fs = _base_flow(net, args)
    rep = feasibility_test(net, fs, k)
    if args.output == "json":
        return EXIT_OK, _dump(rep.to_json(net))
    return EXIT_OK, _table(_FT_HEADERS, _report_rows(net, [rep]))


def cmd_screen(net: Network, args) -> tuple[int, str]:
    fs = _base_flow(net, args)
    reports = screen_n_minus_1(net, fs, workers=_workers(args))
    if args.output == "json":
        return EXIT_OK, _dump([r.to_json(net) for r in reports])
    # margins ascend, so saturated outages already come first
    sat = [r for r in reports if r.saturated]
    body = _table(_FT_HEADERS, _report_rows(net, reports))
    return EXIT_OK, f"{body}\n\n{len(sat)} of {len(reports)} outages saturate a cut-set"


def cmd_dc(net: Network, args) -> tuple[int, str]:
    _require_connected(net)
    if args.outage is not None:
        k = _outage_id(net, args.outage)
        try:
            results = [(k, dc_contingency(net, k, args.reference))]
        except IslandingError:
            results = [(k, None)]
    else:
        results = dc_n_minus_1(net, args.reference, workers=_workers(args))
    if args.output == "json":
        return EXIT_OK, _dump([overload_report(net, k, o) for k, o in results])
    rows = []
    for k, overloads in results:
        label = net.branches[k].label
        if overloads is None:
            rows.append((k, label, "islanding", "-", "-", "-"))
        for o in overloads or ():
            rows.append((k, label, net.branches[o.branch].label, _num(o.flow), _num(o.rating), _num(o.excess)))
    if not rows:
        return EXIT_OK, "no post-contingency overloads"
    return EXIT_OK, _table(("id", "outage", "overloaded", "flow_mw", "rating_mw", "excess_mw"), rows)


def cmd_bench(net: Network, args) -> tuple[int, str]:
    workers = _workers(args)
    _require_connected(net)
    solve_dc(net)  # fail early on missing susceptances

    t0 = time.perf_counter()
    fs = build_flow(net, _routing(args))
    t1 = time.perf_counter()
    reports = screen_n_minus_1(net, fs, workers=workers)
    t2 = time.perf_counter()
    dc = dc_n_minus_1(net, workers=workers)
    t3 = time.perf_counter()

    ft_ms = (t2 - t0) * 1e3
    dc_ms = (t3 - t2) * 1e3
    result = {
        "case": net.name,
        "buses": len(net.buses),
        "branches": len(net.branches),
        "threads": workers,
        "flow_build_ms": round((t1 - t0) * 1e3, 3),
        "ft_screen_ms": round((t2 - t1) * 1e3, 3),
        "ft_total_ms": round(ft_ms, 3),
        "dc_total_ms": round(dc_ms, 3),
        "speedup": round(dc_ms / ft_ms, 2),
        "saturated_outages": sum(r.saturated for r in reports),
        "islanding_outages": sum(o is None for _, o in dc),
    }
    if args.output == "json":
        return EXIT_OK, _dump(result)
    return EXIT_OK, "\n".join(
        [
            f"case {net.name}: {result['buses']} buses, {result['branches']} branches, {workers} thread(s)",
            f"FT  N-1 {ft_ms:12.1f} ms  (flow build {result['flow_build_ms']:.1f} ms + screen {result['ft_screen_ms']:.1f} ms)",
            f"DC  N-1 {dc_ms:12.1f} ms  (full re-solve per outage)",
            f"speedup {dc_ms / ft_ms:.2f}x",
        ]
    )


COMMANDS = {
    "validate": cmd_validate,
    "flow": cmd_flow,
    "ft": cmd_ft,
    "screen": cmd_screen,
    "dc": cmd_dc,
    "bench": cmd_bench,
}


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    prog = "cutscreen"
    try:
        net = _load(args)
        status, text = COMMANDS[args.command](net, args)
    except UsageError as exc:
        print(f"{prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CaseError, OSError) as exc:
        print(f"{prog}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (BalanceError, InfeasibleFlowError, IslandingError, MissingSusceptanceError, ValueError) as exc:
        print(f"{prog}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out.write(text + "\n")
    return status


def main() -> None:
    sys.exit(run())
