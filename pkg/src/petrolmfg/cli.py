"""Command-line interface: ``petrolmfg <command> [flags]``.

Exit codes: 0 success, 1 validation or convergence failure, 2 I/O failure.
Outputs are computed in full before anything is written, so a failing run
leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import dataio
from .calibration import (
    DEFAULT_BOUNDS,
    MAX_CLUSTERS,
    SIGMA_FALLBACK,
    FitConfig,
    estimate_sigmas,
    fit,
    kmeans,
    station_features,
)
from .dynamics import (
    best_reply,
    closed_form_equilibrium,
    contraction_bound,
    simulate,
    solve_equilibrium,
)
from .errors import PetrolGameError, ValidationError
from .model import ClusterParams

log = logging.getLogger("petrolmfg")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
SWEEP_PARAMS = ("alpha", "beta", "gamma", "delta", "pbar", "pprev")


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation failures (exit 1), not I/O failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _parse_range(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise ValidationError(f"--range must look like LO:HI:STEPS, got {text!r}") from None
    if steps < 1:
        raise ValidationError("--range: STEPS must be >= 1")
    if steps == 1:
        return np.array([lo])
    if not hi > lo:
        raise ValidationError("--range: HI must exceed LO")
    return np.linspace(lo, hi, steps)


def _parse_bounds(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ValidationError(f"--bounds must look like LO:HI, got {text!r}") from None
    return lo, hi


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_simulate(args) -> int:
    pop, settings = dataio.read_config(args.config)
    init = dataio.read_initial_state(args.init)
    days = args.days if args.days is not None else settings.days
    if days is None:
        raise ValidationError("--days not given and config has no 'days'")
    if days < 1:
        raise ValidationError(f"--days must be >= 1, got {days}")
    traj = simulate(pop, init, days, settings.root_tol)
    dataio.write_results(traj, args.out)
    log.info("wrote %d days x %d agents to %s", days, pop.m, args.out)
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    pop, settings = dataio.read_config(args.config)
    init = dataio.read_initial_state(args.init)
    tol = args.tol if args.tol is not None else settings.fixed_point_tol
    result = solve_equilibrium(pop, init, tol=tol, max_iter=args.max_iter, method=args.method)
    dataio.write_results(result, args.out)
    print(f"mean={result.mean:.10g} iterations={result.iterations} "
          f"residual={result.residual:.3g} bound_L={result.bound.bound_L:.6g}")
    return EXIT_OK


def cmd_certify(args) -> int:
    pop, _ = dataio.read_config(args.config)
    report = contraction_bound(pop)
    dataio.write_results(report, args.out)
    print(f"bound_L={report.bound_L:.10g} is_contraction={report.is_contraction}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ValidationError(f"--param must be one of {', '.join(SWEEP_PARAMS)}, got {args.param!r}")
    pop, settings = dataio.read_config(args.config)
    values = _parse_range(args.range)
    agent = pop.agents[0]
    base = pop.clusters[agent.cluster]

    p_bar = p_prev = None
    if args.init is not None:
        init = dataio.read_initial_state(args.init)
        p_bar, p_prev = init.mean, float(init.prices[0])
    if p_bar is None:
        anchor = closed_form_equilibrium(base) if base.delta > 0 else 0.0
        p_bar = p_prev = anchor
    if args.pbar is not None:
        p_bar = args.pbar
    if args.pprev is not None:
        p_prev = args.pprev

    rows = ["value,best_reply"]
    for v in values:
        w = dict(alpha=base.alpha, beta=base.beta, gamma=base.gamma, delta=base.delta)
        pb, pp = p_bar, p_prev
        if args.param == "pbar":
            pb = v
        elif args.param == "pprev":
            pp = v
        else:
            w[args.param] = v
        params = ClusterParams(**w, degenerate=(w["gamma"] == 0 and w["delta"] == 0))
        rows.append(f"{_fmt(v)},{_fmt(best_reply(params, agent.sigma, pb, pp, settings.root_tol))}")
    dataio._atomic_write(args.out, "\n".join(rows) + "\n")
    return EXIT_OK


def cmd_cluster(args) -> int:
    panel = dataio.read_price_panel(args.data)
    feats = station_features(panel)
    assignment = kmeans(feats, args.k, seed=args.seed, max_iter=args.max_iter,
                        station_ids=panel.station_ids)
    dataio.write_results(assignment, args.out)
    print(f"k={assignment.k} sizes={np.bincount(assignment.labels).tolist()} "
          f"inertia={assignment.inertia:.6g}")
    return EXIT_OK


def cmd_sigmas(args) -> int:
    panel = dataio.read_price_panel(args.data)
    sig = estimate_sigmas(panel, fallback=args.fallback)
    doc = {
        "fallback": args.fallback,
        "sigmas": {sid: float(s) for sid, s in zip(panel.station_ids, sig)},
    }
    dataio.write_json(doc, args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    panel = dataio.read_price_panel(args.data)
    assignment = dataio.read_assignment(args.clusters)
    sigmas = None
    if args.sigmas is not None:
        ids, vals = dataio.read_sigmas(args.sigmas)
        if tuple(ids) != panel.station_ids:
            raise ValidationError(f"{args.sigmas}: station ids do not match the panel")
        sigmas = vals
    starts = () if args.start is None else (dataio.read_param_start(args.start),)
    config = FitConfig(
        bounds=_parse_bounds(args.bounds),
        seed=args.seed,
        multistart=args.multistart,
        max_evals=args.max_evals,
        starts=starts,
    )
    result = fit(panel, assignment, config, sigmas=sigmas)
    dataio.write_results(result, args.out)
    print(f"objective={result.objective:.6e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="petrolmfg", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="iterate the daily best-reply map",
                       description="Writes CSV day,mean,p_1,...,p_m (6 decimals), days+1 rows.")
    s.add_argument("--config", required=True, help="model configuration JSON")
    s.add_argument("--init", required=True,
                   help="initial prices: CSV with 'price' column, or a station_id,date,price panel")
    s.add_argument("--days", type=int, help="number of transitions (default: config 'days')")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("equilibrium", help="certified mean-field equilibrium",
                       description="Writes JSON with prices, mean, iterations, residual, "
                                   "error_bound and the contraction bound_L.")
    s.add_argument("--config", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--tol", type=float, help="error tolerance (default: config, else 1e-10)")
    s.add_argument("--max-iter", type=int, default=10_000)
    s.add_argument("--method", choices=("newton", "picard"), default="newton")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_equilibrium)

    s = sub.add_parser("certify", help="uniform contraction bound of the transition map",
                       description="Writes JSON {per_agent_A_max, bound_L, is_contraction}.")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("sweep", help="best reply of the first agent as one input varies",
                       description="Writes CSV value,best_reply. The reference average and "
                                   "previous price come from --pbar/--pprev, else --init "
                                   "(its mean and first price), else the first cluster's "
                                   "closed-form equilibrium.")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, help="|".join(SWEEP_PARAMS))
    s.add_argument("--range", required=True, help="LO:HI:STEPS")
    s.add_argument("--init")
    s.add_argument("--pbar", type=float)
    s.add_argument("--pprev", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("cluster", help="k-means on standardised (mean, std) station features",
                       description="Reads a station_id,date,price panel; writes assignment JSON.")
    s.add_argument("--data", required=True)
    s.add_argument("--k", type=int, default=3, help=f"clusters, 1..{MAX_CLUSTERS} (default 3)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iter", type=int, default=300)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("sigmas", help="per-station noise scales",
                       description="Writes JSON {fallback, sigmas: {station_id: value}}.")
    s.add_argument("--data", required=True)
    s.add_argument("--fallback", type=float, default=SIGMA_FALLBACK)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sigmas)

    s = sub.add_parser("fit", help="multistart box-constrained least-squares calibration",
                       description="Fits one (alpha,beta,gamma,delta) per cluster to the "
                                   "panel's daily average; writes fit JSON and prints the "
                                   "final objective.")
    s.add_argument("--data", required=True)
    s.add_argument("--clusters", required=True, help="assignment JSON from 'cluster'")
    s.add_argument("--bounds", default=f"{DEFAULT_BOUNDS[0]:.2f}:{DEFAULT_BOUNDS[1]:g}")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--multistart", type=int, default=8)
    s.add_argument("--max-evals", type=int, default=2000)
    s.add_argument("--sigmas", help="sigmas JSON from 'sigmas' (default: estimate from data)")
    s.add_argument("--start", help="JSON with 'params' or 'clusters' used as the first start")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PetrolGameError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
