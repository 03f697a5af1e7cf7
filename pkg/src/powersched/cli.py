"""Command line front end: ``solve``, ``schedule``, ``sweep`` and ``verify``.

Exit status is 0 on success, 1 when ``verify`` finds a violated constraint,
and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys

import numpy as np

from . import scheduler
from .bnb import solve
from .experiment import ConfigError, build_network, geo_mean, load_config, run_sweep, write_sweep_csv
from .feasibility import verify
from .rate_model import UtilityConfig
from .topology import mw_to_dbm

log = logging.getLogger("powersched")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="powersched",
                                 description="Joint power control and time division for dense WLANs.")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "one-shot power control; writes a solution record (JSON)",
        "schedule": "slotted power control with history weights",
        "sweep": "inter-site distance sweep over the configured modes (CSV)",
        "verify": "re-check a saved solution record against the constraints",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--output", default="-", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="override the placement seed")
        p.add_argument("--trace", help="write a trace CSV here")
        p.add_argument("--quiet", action="store_true", help="only report errors")
        if name == "verify":
            p.add_argument("--solution", required=True, help="solution record written by solve")
    return ap


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _cmd_solve(cfg, args) -> int:
    instance = build_network(cfg)
    s = cfg.solver
    config = UtilityConfig.equal(instance.n_pairs, s.alpha, s.rate_floor)
    res = solve(instance, cfg.curve, config, epsilon=s.epsilon, max_iterations=s.max_iterations,
                record_trace=args.trace is not None)
    record = {
        "status": res.status,
        "iterations": res.iterations,
        "utility": res.utility,
        "equivalent_rate_mbps": res.equivalent_rate,
        "bound_equivalent_rate_mbps": res.bound_equivalent_rate,
        "rates_mbps": [float(r) for r in res.rates],
        "powers_mw": [float(x) for x in res.powers],
        "powers_dbm": [float(mw_to_dbm(x)) if x > 0 else None for x in res.powers],
    }
    with _open_out(args.output) as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "live_boxes", "u_best_eqrate", "u_max_eqrate"])
            for row in res.trace:
                w.writerow([row.iteration, row.live_boxes, _fmt(row.u_best_eqrate),
                            _fmt(row.u_max_eqrate)])
    log.info("status=%s equivalent rate %.4g Mbit/s (bound %.4g)", res.status,
             res.equivalent_rate, res.bound_equivalent_rate)
    return EXIT_OK


def _cmd_schedule(cfg, args) -> int:
    instance = build_network(cfg)
    s = cfg.solver
    res = scheduler.run(instance, cfg.curve, s, alpha=s.alpha, slots=cfg.scheduler.slots,
                        weight_floor=cfg.scheduler.weight_floor,
                        on_slot=lambda rec: log.debug("slot %d active %s", rec.slot, rec.active))
    summary = {
        "slots": len(res.slots),
        "statuses": sorted(res.statuses),
        "avg_rates_mbps": [float(r) for r in res.avg_rates],
        "geo_mean_mbps": geo_mean(res.avg_rates, s.rate_floor),
        "arith_mean_mbps": float(np.mean(res.avg_rates)),
    }
    with _open_out(args.output) as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8", newline="") as fh:
            scheduler.write_slot_trace(res.slots, fh)
    return EXIT_OK


def _cmd_sweep(cfg, args) -> int:
    if args.trace:
        raise ConfigError("--trace is not available for sweep")
    rows = run_sweep(cfg)
    with _open_out(args.output) as fh:
        write_sweep_csv(rows, fh, cfg.solver.rate_floor)
    return EXIT_OK


def _load_solution(path, n):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        rates = np.array(data["rates_mbps"], dtype=float)
        powers = np.array(data["powers_mw"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"unreadable solution record: {e}", "solution") from None
    if rates.shape != (n,) or powers.shape != (n,):
        raise ConfigError(f"solution record must hold {n} rates and {n} powers", "solution")
    return rates, powers


def _cmd_verify(cfg, args) -> int:
    instance = build_network(cfg)
    rates, powers = _load_solution(args.solution, instance.n_pairs)
    report = verify(powers, rates, instance, cfg.curve, tol=1e-9)
    with _open_out(args.output) as fh:
        fh.write(str(report) + "\n")
    return EXIT_OK if report.ok else EXIT_VIOLATION


_COMMANDS = {"solve": _cmd_solve, "schedule": _cmd_schedule, "sweep": _cmd_sweep,
             "verify": _cmd_verify}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"{args.config}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
