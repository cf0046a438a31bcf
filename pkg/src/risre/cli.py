"""Command-line front end.

Subcommands
-----------
solve         one AO run, one summary row
sweep         one AO run per P_max grid point
convergence   per-iteration trace of one AO run
tradeoff      P_max sweeps for several beta/P_tot values (RE mode)
validate-de   DE against Monte-Carlo SE at equal power

Every command writes CSV with the columns in ``COLUMNS``.  ``wall_ms`` is
left empty unless ``--timing`` is given, so identical inputs give
byte-identical files.  Exit codes: 0 success, 2 bad config or flags,
3 solver failure (rows computed so far are still written).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from functools import partial
from importlib import resources
from pathlib import Path

import numpy as np

from .ao import AOError, Mode, SolveReport, solve, sweep
from .channel import generate_channel
from .config import ChannelParams, ConfigError, PhaseConstraint, load_config, parse_config
from .det_equiv import de_fixed_point
from .exceptions import SolverError
from .metrics import PowerAllocation, ergodic_se_mc
from .phase_opt import initial_phase

__all__ = ["main", "run", "COLUMNS", "parse_grid"]

COLUMNS = ("experiment_id", "grid_value", "se_de", "se_mc", "ee", "re", "p_sum_w",
           "outer_iters", "wall_ms", "converged")

DEFAULT_BETAS = (0.01, 0.5, 100.0)
DE_TOLERANCE = 0.05


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.12g}"


class _Writer:
    def __init__(self, timing: bool):
        self.buf = io.StringIO()
        self.w = csv.writer(self.buf, lineterminator="\n")
        self.w.writerow(COLUMNS)
        self.timing = timing

    def row(self, exp_id: str, grid_value, rep: SolveReport | None, *, se_de=None,
            se_mc=None, ee=None, re=None, p_sum=None, iters=None, wall=None, converged=None):
        if rep is not None:
            se_de = rep.se_de if se_de is None else se_de
            se_mc = rep.se_mc if se_mc is None else se_mc
            ee = rep.ee if ee is None else ee
            re = rep.re if re is None else re
            p_sum = rep.p_sum if p_sum is None else p_sum
            iters = rep.iterations if iters is None else iters
            wall = rep.wall_time if wall is None else wall
            converged = rep.converged if converged is None else converged
        nan = float("nan")
        self.w.writerow([exp_id, _fmt(grid_value), _fmt(nan if se_de is None else se_de),
                         _fmt(nan if se_mc is None else se_mc), _fmt(nan if ee is None else ee),
                         _fmt(nan if re is None else re), _fmt(nan if p_sum is None else p_sum),
                         _fmt(iters or 0),
                         _fmt(wall * 1e3) if (self.timing and wall is not None) else "",
                         _fmt(bool(converged))])

    def trace_rows(self, exp_id: str, rep: SolveReport):
        for t, r in enumerate(rep.trace, start=1):
            self.row(exp_id, t, None, se_de=r.se_de, se_mc=r.se_mc, ee=r.ee, re=r.re,
                     p_sum=rep.p_sum, iters=t, converged=(t == len(rep.trace) and rep.converged))

    def save(self, out: str):
        text = self.buf.getvalue()
        if out == "-":
            sys.stdout.write(text)
        else:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text)


def parse_grid(text: str) -> list[float]:
    """``START:STEP:END`` (inclusive) or a single value."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad grid {text!r}; expected START:STEP:END") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3:
        raise ValueError(f"bad grid {text!r}; expected START:STEP:END")
    start, step, end = vals
    if step <= 0 or end < start:
        raise ValueError(f"bad grid {text!r}; need STEP > 0 and END >= START")
    n = int(math.floor((end - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _channel(chan: ChannelParams, cfg, seed):
    return generate_channel(cfg, seed, params=chan)


def _load(args):
    if args.config:
        cfg, chan = load_config(args.config)
    else:
        text = resources.files("risre").joinpath("data/default.yaml").read_text()
        cfg, chan = parse_config(text)
    if args.phase or args.bits is not None:
        mode = args.phase or ("dps" if args.bits else cfg.phase.mode)
        bits = args.bits if args.bits is not None else cfg.phase.bits
        try:
            cfg = cfg.with_phase(PhaseConstraint(mode, bits if mode == "dps" else None))
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], field="--bits") from None
    if args.beta_over_ptot is not None:
        cfg = cfg.with_beta_over_ptot(args.beta_over_ptot)
    return cfg, chan


def _mode(args) -> Mode:
    return {"re": Mode.re(), "ee": Mode.ee(), "se": Mode.se()}[args.mode]


def _solve_kwargs(args) -> dict:
    return {"max_outer": args.max_outer, "inner": args.inner}


def cmd_solve(args, cfg, chan, out: _Writer) -> int:
    grid = parse_grid(args.pmax) if args.pmax else None
    if grid is not None:
        if len(grid) != 1:
            raise ConfigError("solve takes a single P_max value", field="--pmax")
        cfg = cfg.with_pmax_dbm(grid[0])
    model = _channel(chan, cfg, args.seed)
    pmax = float(10.0 * np.log10(cfg.P_max[0] * 1e3))
    try:
        rep = solve(model, cfg, _mode(args), seed=args.seed, mc_draws=args.draws,
                    **_solve_kwargs(args))
    except AOError as exc:
        out.trace_rows("solve-partial", exc.partial)
        _err(f"solver failure: {exc}")
        return 3
    out.row(f"solve-{args.mode}", pmax, rep)
    return 0


def cmd_sweep(args, cfg, chan, out: _Writer) -> int:
    grid = parse_grid(args.pmax or "0:5:40")
    pts = sweep(partial(_channel, chan), cfg, _mode(args), grid, kind="pmax",
                seed=args.seed, mc_draws=args.draws, jobs=args.jobs, **_solve_kwargs(args))
    return _emit_points(f"sweep-{args.mode}", pts, out)


def _emit_points(exp_id, pts, out) -> int:
    status = 0
    for p in pts:
        if p.error is not None:
            _err(f"grid point {p.grid_value:g} failed: {p.error}")
            status = 3
            out.row(exp_id, p.grid_value, p.report, converged=False)
        else:
            out.row(exp_id, p.grid_value, p.report)
    return status


def cmd_convergence(args, cfg, chan, out: _Writer) -> int:
    if args.pmax:
        cfg = cfg.with_pmax_dbm(parse_grid(args.pmax)[0])
    model = _channel(chan, cfg, args.seed)
    try:
        rep = solve(model, cfg, _mode(args), seed=args.seed, mc_draws=args.draws,
                    mc_every_iter=bool(args.draws), **_solve_kwargs(args))
    except AOError as exc:
        out.trace_rows("convergence-partial", exc.partial)
        _err(f"solver failure: {exc}")
        return 3
    out.trace_rows(f"convergence-{args.mode}", rep)
    return 0


def cmd_tradeoff(args, cfg, chan, out: _Writer) -> int:
    betas = [float(b) for b in args.betas.split(",")] if args.betas else list(DEFAULT_BETAS)
    if not betas:
        raise ConfigError("need at least one beta", field="--betas")
    grid = parse_grid(args.pmax or "0:5:40")
    status = 0
    for b in betas:
        pts = sweep(partial(_channel, chan), cfg.with_beta_over_ptot(b), Mode.re(), grid,
                    kind="pmax", seed=args.seed, mc_draws=args.draws, jobs=args.jobs,
                    **_solve_kwargs(args))
        status = max(status, _emit_points(f"tradeoff-beta{b:g}", pts, out))
    return status


def cmd_validate_de(args, cfg, chan, out: _Writer) -> int:
    grid = parse_grid(args.pmax) if args.pmax else [float(10.0 * np.log10(cfg.P_max[0] * 1e3))]
    draws = args.draws or 2000
    worst = 0.0
    for p in grid:
        pcfg = cfg.with_pmax_dbm(p)
        model = _channel(chan, pcfg, args.seed)
        phi = initial_phase(model.N_R, pcfg.phase).phi
        alloc = PowerAllocation.equal(pcfg, model)
        try:
            se_de = de_fixed_point(model, phi, alloc, pcfg.sigma2).se_bits
        except SolverError as exc:
            _err(f"solver failure: {exc}")
            return 3
        se_mc = ergodic_se_mc(model, phi, alloc, pcfg.sigma2, draws, args.seed)
        rel = abs(se_de - se_mc) / se_mc
        worst = max(worst, rel)
        print(f"P_max={p:g} dBm  DE={se_de:.6f}  MC={se_mc:.6f}  rel.err={100 * rel:.3f}%",
              file=sys.stderr)
        out.row("validate-de", p, None, se_de=se_de, se_mc=se_mc, iters=0,
                converged=rel <= DE_TOLERANCE)
    verdict = "within" if worst <= DE_TOLERANCE else "OUTSIDE"
    print(f"max DE-vs-MC relative error {100 * worst:.3f}% ({verdict} {100 * DE_TOLERANCE:g}%)",
          file=sys.stderr)
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
    "tradeoff": cmd_tradeoff,
    "validate-de": cmd_validate_de,
}


def _err(msg: str):
    print(f"risre: {msg}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML system config (default: built-in setup)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mode", choices=("re", "ee", "se"), default="re")
    common.add_argument("--beta-over-ptot", type=float, dest="beta_over_ptot")
    common.add_argument("--phase", choices=("cps", "dps"))
    common.add_argument("--bits", type=int)
    common.add_argument("--pmax", help="P_max in dBm: VALUE or START:STEP:END")
    common.add_argument("--draws", type=int, default=1000, help="MC draws for validation")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", default="-", help="output CSV (default stdout)")
    common.add_argument("--timing", action="store_true", help="fill the wall_ms column")
    common.add_argument("--max-outer", type=int, default=50, dest="max_outer")
    common.add_argument("--inner", choices=("gemm", "mm"), default="gemm")
    common.add_argument("--betas", help="comma-separated beta/P_tot values (tradeoff)")
    p = argparse.ArgumentParser(prog="risre", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1 or args.draws < 0:
        _err("--jobs must be >= 1 and --draws >= 0")
        return 2
    out = _Writer(args.timing)
    try:
        cfg, chan = _load(args)
        status = COMMANDS[args.command](args, cfg, chan, out)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return 2
    except ValueError as exc:
        _err(f"invalid argument: {exc}")
        return 2
    except OSError as exc:
        _err(f"cannot read config: {exc}")
        return 2
    out.save(args.out)
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
