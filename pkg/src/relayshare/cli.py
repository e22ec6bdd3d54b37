"""Command-line front end.

Every file written starts with ``#`` comment lines holding the command and
the fully resolved scenario, so a run can be replayed from its output alone.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .imes import run_imes
from .lambertw import BRANCH_POINT, lambert_w
from .mmd_game import (ConvergenceError, bandwidth_equilibrium, best_response_price, nash_prices,
                       supermodularity_check)
from .omd_game import PopulationState, evolve, replicator_field
from .sim import SWEEP_PARAMETERS, delay_sweep, generate_topology

EXIT_OK, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2

#: column patterns for every CSV the tool emits, keyed by schema name
SCHEMAS = {
    "phase_field": [r"pi1_\w+", r"pi1_\w+", r"dpi1_\w+", r"dpi1_\w+"],
    "trajectory": [r"step", r"t", r"pi1_\w+", r"pi1_\w+"],
    "best_response": [r"p_other", r"b1", r"b2"],
    "imes_trace": [r"round", r"mmd_id", r"omega", r"price", r"utility", r"(attached_\w+)+"],
    "delay_sweep": [r"param_value", r"policy", r"seed_count", r"mean_delay", r"std_delay",
                    r"p95_delay", r"infinite_count", r"error"],
    "delay_seeds": [r"param_value", r"policy", r"seed", r"mean_delay", r"infinite_count"],
    "series": [r"x", r"y"],
    "topology": [r"node_id", r"kind", r"x", r"y"],
    "nash": [r"quantity", r"mmd", r"value"],
}
_TEXT_COLUMNS = {"policy", "error", "kind", "quantity", "mmd"}


class UsageError(Exception):
    pass


# ----- helpers -------------------------------------------------------------------

def parse_range(text: str, integer: bool = True) -> list:
    """``start:stop:step`` (inclusive stop), a single value, or a comma list."""
    conv = int if integer else float
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            count = int(math.floor((parts[1] - parts[0]) / parts[2] + 1e-9)) + 1
            vals = [parts[0] + k * parts[2] for k in range(count)]
        else:
            vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected start:stop:step or a comma list") from None
    if not vals:
        raise UsageError("empty sweep range")
    return [conv(round(v, 9)) for v in vals]


def _header(cfg, argv) -> str:
    lines = ["relayshare " + " ".join(argv)] + cfgmod.serialize(cfg).splitlines()
    return "".join(f"# {ln}\n" if ln else "#\n" for ln in lines)


def _write(out: Path, name: str, header: str, rows, columns) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)
    return path


def _num(x) -> str:
    return repr(float(x))


def _two_by_two(cfg):
    if len(cfg.groups) != 2 or len(cfg.mmds) != 2:
        raise UsageError(f"this command needs exactly 2 groups and 2 MMDs "
                         f"(config has {len(cfg.groups)} groups, {len(cfg.mmds)} MMDs)")


# ----- subcommands ---------------------------------------------------------------

def cmd_phase_plane(args, cfg, header) -> int:
    _two_by_two(cfg)
    econ = cfg.economics()
    sizes = cfg.group_sizes
    ga, gb = (g.name for g in cfg.groups)
    xs = (np.arange(args.grid) + 0.5) / args.grid
    rows = []
    for x in xs:
        for y in xs:
            st = PopulationState([[x, 1 - x], [y, 1 - y]], sizes)
            d = replicator_field(st, econ, cfg.evo.delta)
            rows.append([_num(x), _num(y), _num(d[0, 0]), _num(d[1, 0])])
    out = Path(args.out)
    _write(out, "phase_field.csv", header, rows, [f"pi1_{ga}", f"pi1_{gb}", f"dpi1_{ga}", f"dpi1_{gb}"])

    starts = [tuple(cfg.evo.start)] + [tuple(float(v) for v in s.split(",")) for s in args.start]
    status = EXIT_OK
    for k, (a, b) in enumerate(starts):
        st = PopulationState([[a, 1 - a], [b, 1 - b]], sizes)
        res = evolve(st, econ, cfg.evo_params(), tol=args.tol, max_steps=args.max_steps,
                     record_every=args.record_every)
        traj = res.trajectory
        steps = np.arange(traj.shape[0]) * args.record_every
        if steps[-1] != res.steps:
            traj = np.concatenate([traj, res.state.fractions[None]])
            steps = np.append(steps, res.steps)
        rows = [[int(s), _num(s * cfg.evo.dt), _num(f[0, 0]), _num(f[1, 0])] for s, f in zip(steps, traj)]
        _write(out, f"trajectory_{k}.csv", header, rows, ["step", "t", f"pi1_{ga}", f"pi1_{gb}"])
        fin = res.state.fractions[:, 0]
        print(f"start ({a:.4f}, {b:.4f}) -> ({fin[0]:.4f}, {fin[1]:.4f}) after {res.steps} steps"
              + ("" if res.converged else " [not converged]"))
        if not res.converged:
            status = EXIT_NONCONVERGED
    return status


def cmd_best_response(args, cfg, header) -> int:
    _two_by_two(cfg)
    lo, hi, n = args.pmin, args.pmax, args.points
    if not (n >= 2 and hi > lo >= 0):
        raise UsageError("price grid needs points >= 2 and pmax > pmin >= 0")
    (w1, w2), (y1, y2) = cfg.omegas, cfg.mmd_y()
    base = cfg.channel.log_base
    grid = np.linspace(lo, hi, n)
    rows = [[_num(p), _num(best_response_price(p, w1, w2, y1, y2, base).price_star),
             _num(best_response_price(p, w2, w1, y2, y1, base).price_star)] for p in grid]
    ne = nash_prices((w1, w2), (y1, y2), base=base)
    header += f"# intersection p1={ne.prices[0]!r} p2={ne.prices[1]!r}\n"
    _write(Path(args.out), "best_response.csv", header, rows, ["p_other", "b1", "b2"])
    print(f"intersection: p1={ne.prices[0]:.6f} p2={ne.prices[1]:.6f}")
    return EXIT_OK


def cmd_imes(args, cfg, header) -> int:
    trace = run_imes(cfg.imes_config(), cfg.imes_scenario())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "imes_trace.csv", "w", newline="") as fh:
        fh.write(header + f"# status {trace.status}\n")
        trace.write_csv(fh)
    p = ", ".join(f"{v:.6f}" for v in trace.final_prices)
    w = ", ".join(f"{v:.6f}" for v in trace.final_omegas)
    print(f"{trace.status} after {len(trace.rounds)} rounds: prices ({p}) bandwidth ({w}) "
          f"attached {trace.final_attached.tolist()}")
    return EXIT_OK if trace.status == "converged" else EXIT_NONCONVERGED


def cmd_delay(args, cfg, header) -> int:
    chosen = [(p, getattr(args, p)) for p in SWEEP_PARAMETERS if getattr(args, p) is not None]
    if len(chosen) != 1:
        raise UsageError("give exactly one sweep range: --omds, --mmds or --area")
    param, text = chosen[0]
    values = parse_range(text, integer=param != "area")
    seeds = range(cfg.seed, cfg.seed + (args.seeds or cfg.sim.seeds))
    result = delay_sweep(param, values, seeds=seeds, settings=cfg.sweep_settings(), jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "delay_sweep.csv").write_text(header + result.to_csv())
    seed_rows = []
    for c in result.cells:
        for s, m in zip(c.seeds, c.seed_means):
            seed_rows.append([_num(c.param_value), c.policy, s, _num(m), ""])
    _write(out, "delay_seeds.csv", header, seed_rows, SCHEMAS["delay_seeds"])
    for policy in ("imes", "rand"):
        for metric in ("mean_delay", "std_delay", "p95_delay"):
            rows = [[_num(x), _num(y)] for x, y in result.series(policy, metric)]
            _write(out, f"series_{param}_{policy}_{metric}.csv", header, rows, ["x", "y"])
    if args.dump_topology:
        s = cfg.sweep_settings()
        for v in values:
            t = s.with_value(param, v)
            try:
                topo = generate_topology(t.area, t.n_omd, t.n_mmd, t.comm_range, seeds[0])
            except ValueError as exc:
                print(f"topology {param}={v}: {exc}", file=sys.stderr)
                continue
            (out / f"topology_{param}_{v}.csv").write_text(header + topo.to_csv())
    for v in values:
        a, b = result.cell(float(v), "imes"), result.cell(float(v), "rand")
        print(f"{param}={v}: imes {a.mean_delay:.3f} rand {b.mean_delay:.3f} "
              f"ratio {a.mean_delay / b.mean_delay:.3f}" + (f" [{a.error}]" if a.error else ""))
    return EXIT_OK


def cmd_nash(args, cfg, header) -> int:
    _two_by_two(cfg)
    base = cfg.channel.log_base
    ne = nash_prices(cfg.omegas, cfg.mmd_y(), base=base)
    n = int(cfg.group_sizes.sum())
    bw = bandwidth_equilibrium(tuple(cfg.prices), cfg.mmd_y(), n, tuple(cfg.costs), base=base,
                               omega_cap=min(m.omega_cap for m in cfg.mmds))
    rows = []
    for k, m in enumerate(cfg.mmds):
        rows.append(["price", m.name, _num(ne.prices[k])])
        rows.append(["bandwidth", m.name, _num(bw.omegas[k])])
    _write(Path(args.out), "nash.csv", header, rows, ["quantity", "mmd", "value"])
    print(f"nash prices at omega={tuple(cfg.omegas.tolist())}: "
          f"({ne.prices[0]:.6f}, {ne.prices[1]:.6f}) in {ne.iterations} iterations")
    print(f"bandwidth equilibrium at prices={tuple(cfg.prices.tolist())}: "
          f"({bw.omegas[0]:.6f}, {bw.omegas[1]:.6f})")
    return EXIT_OK


def cmd_check(args, cfg, header) -> int:
    _two_by_two(cfg)
    grid = np.linspace(5.0 / args.grid, 5.0, args.grid)
    ok = True
    for form in ("exact", "printed"):
        rep = supermodularity_check(grid, grid, cfg.omegas, cfg.mmd_y(), form=form)
        print(f"best-response slopes ({form}): [{rep.min_slope:.6f}, {rep.max_slope:.6f}] "
              f"max contraction modulus {rep.max_lambda:.6f} -> {'ok' if rep.ok else 'FAILED'}")
        if form == "exact":
            ok &= rep.ok
    z = np.concatenate([np.linspace(BRANCH_POINT + 1e-6, 1.0, 2000), np.logspace(0, 6, 2000)])
    w = lambert_w(z)
    resid = np.abs(w * np.exp(w) - z) / np.maximum(1.0, np.abs(z))
    print(f"Lambert-W round-trip: max scaled residual {resid.max():.3e} over {z.size} points")
    ok &= bool(resid.max() <= 1e-12)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def validate_file(path) -> list[str]:
    """Problems found in one emitted CSV (empty when it matches a schema)."""
    text = Path(path).read_text()
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not body:
        return ["no header row"]
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    head = rows[0]
    schema = None
    for name, pats in SCHEMAS.items():
        if name == "imes_trace":
            ok = len(head) > 5 and all(re.fullmatch(p, h) for p, h in zip(pats[:5], head)) \
                and all(re.fullmatch(r"attached_\w+", h) for h in head[5:])
        else:
            ok = len(head) == len(pats) and all(re.fullmatch(p, h) for p, h in zip(pats, head))
        if ok:
            schema = name
            break
    if schema is None:
        return [f"header {head} matches no known schema"]
    problems = []
    for k, row in enumerate(rows[1:], 2):
        if len(row) != len(head):
            problems.append(f"row {k}: {len(row)} fields, expected {len(head)}")
            continue
        for col, val in zip(head, row):
            if col in _TEXT_COLUMNS:
                continue
            if val == "" and col == "infinite_count":
                continue
            try:
                float(val)
            except ValueError:
                problems.append(f"row {k}: column {col} is not numeric: {val!r}")
    return problems


def cmd_validate(args, cfg, header) -> int:
    bad = 0
    for f in args.files:
        try:
            problems = validate_file(f)
        except OSError as exc:
            problems = [str(exc)]
        print(f"{f}: " + ("ok" if not problems else "; ".join(problems[:5])))
        bad += bool(problems)
    return EXIT_OK if bad == 0 else EXIT_USAGE


# ----- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario file (defaults apply when absent)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory")

    p = argparse.ArgumentParser(prog="relayshare", description="Relay-sharing market experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phase-plane", parents=[common], help="replicator direction field and trajectories")
    s.add_argument("--grid", type=int, default=21, help="grid points per axis")
    s.add_argument("--start", action="append", default=[], metavar="A,B",
                   help="extra trajectory start point (repeatable)")
    s.add_argument("--tol", type=float, default=1e-8,
                   help="stop when the largest share rate falls below this")
    s.add_argument("--max-steps", type=int, default=10**6, help="step budget per trajectory")
    s.add_argument("--record-every", type=int, default=50, help="keep every k-th step")
    s.set_defaults(func=cmd_phase_plane)

    s = sub.add_parser("best-response", parents=[common], help="best-response price curves")
    s.add_argument("--pmin", type=float, default=0.0, help="lowest rival price")
    s.add_argument("--pmax", type=float, default=5.0, help="highest rival price")
    s.add_argument("--points", type=int, default=101, help="rival prices sampled")
    s.set_defaults(func=cmd_best_response)

    s = sub.add_parser("imes", parents=[common], help="run the distributed protocol")
    s.set_defaults(func=cmd_imes)

    s = sub.add_parser("delay", parents=[common], help="service-delay sweep, IMES against Rand")
    s.add_argument("--omds", metavar="RANGE", help="sweep OMD count, e.g. 40:120:20")
    s.add_argument("--mmds", metavar="RANGE", help="sweep MMD count, e.g. 2:12:2")
    s.add_argument("--area", metavar="RANGE", help="sweep area side length, e.g. 100:200:25")
    s.add_argument("--seeds", type=int, help="seeds per cell (default from the scenario)")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--dump-topology", action="store_true",
                   help="write the first seed's topology for every cell")
    s.set_defaults(func=cmd_delay)

    s = sub.add_parser("nash", parents=[common], help="equilibrium prices and bandwidths")
    s.set_defaults(func=cmd_nash)

    s = sub.add_parser("check", parents=[common], help="invariant diagnostics")
    s.add_argument("--grid", type=int, default=50, help="price grid points per axis on (0, 5]")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("validate", help="check emitted CSV files against their schemas")
    s.add_argument("files", nargs="+", help="CSV files written by the other commands")
    s.set_defaults(func=cmd_validate, config=None, seed=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = cfgmod.load_config(args.config) if args.config else cfgmod.ScenarioConfig()
        cfg = cfgmod.with_seed(cfg, args.seed)
        return args.func(args, cfg, _header(cfg, argv))
    except (cfgmod.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
