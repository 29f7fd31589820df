"""Command-line entry point: ``hdnoma {ber,sumrate,converge}``.

Exit codes: 0 success, 2 configuration error, 3 infeasible optimization instance.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import sim
from .optimizer import InfeasibleError
from .scma_core import CodebookError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def _add_common(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", default=None, help="flat key = value file; flags override it")
    p.add_argument("--scheme", dest="schemes", type=sim.parse_schemes, default=S,
                   help="comma list of " + ", ".join(sim.SCHEMES) + " or 'all'")
    p.add_argument("--power-dbm-min", type=float, default=S)
    p.add_argument("--power-dbm-max", type=float, default=S)
    p.add_argument("--power-dbm-step", type=float, default=S)
    p.add_argument("--power-dbm", type=float, nargs="+", default=None,
                   help="explicit evenly spaced power points (dBm)")
    p.add_argument("--trials", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--bw-hz", type=float, default=S)
    p.add_argument("--d-strong-km", type=float, default=S)
    p.add_argument("--d-weak-km", type=float, default=S)
    p.add_argument("--mpa-iters", type=int, default=S)
    p.add_argument("--mpa-variant", choices=("sumprod", "maxlog"), default=S)
    p.add_argument("--codebook", default=S, help="codebook file replacing the embedded default")
    p.add_argument("--penalty", type=float, default=S)
    p.add_argument("--qos-bps-hz", type=float, default=S)
    p.add_argument("--tol", type=float, default=S)
    p.add_argument("--max-iters", type=int, default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdnoma", description="Hybrid-domain NOMA uplink experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    ber = sub.add_parser("ber", help="uncoded BER versus transmit power")
    _add_common(ber)
    ber.add_argument("--genie-sic", action="store_true", default=argparse.SUPPRESS)
    ber.add_argument("--noiseless", action="store_true", default=argparse.SUPPRESS)
    rate = sub.add_parser("sumrate", help="sum rate versus transmit power")
    _add_common(rate)
    rate.add_argument("--oracle", action="store_true", default=argparse.SUPPRESS)
    rate.add_argument("--p-grid", type=int, default=argparse.SUPPRESS)
    rate.add_argument("--absolute", action="store_true", help="report bits/s (times BW/K) instead of bits/s/Hz")
    conv = sub.add_parser("converge", help="AO objective trace per outer iteration")
    _add_common(conv)
    return parser


_LOCAL = {"command", "config", "out", "power_dbm", "absolute"}
# converge defaults to the three power levels and a few draws
_CONVERGE_BASE = sim.SimConfig(power_dbm_min=30.0, power_dbm_max=40.0, power_dbm_step=5.0, trials=3)


def config_from_args(args: argparse.Namespace) -> sim.SimConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _LOCAL}
    base = _CONVERGE_BASE if args.command == "converge" else None
    cfg = sim.load_config(args.config, overrides, base)
    if args.power_dbm:
        cfg = sim.with_powers(cfg, args.power_dbm)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = config_from_args(args)
        if args.command == "ber":
            text = sim.rows_to_csv(sim.run_ber_experiment(cfg))
        elif args.command == "sumrate":
            rows = sim.run_sumrate_sweep(cfg)
            if args.absolute:
                scale = cfg.bw_hz / cfg.K
                rows = [replace(r, value=r.value * scale) for r in rows]
            text = sim.rows_to_csv(rows)
        else:
            text = sim.trace_to_csv(sim.run_convergence_trace(cfg))
        sim.write_text(text, args.out)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (sim.ConfigError, CodebookError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
