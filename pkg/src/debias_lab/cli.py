"""Command-line front end.

Subcommands:

  scan       run a configured sweep and emit records (csv/json/svg)
  estimate   one seeded estimate against the preset anchor of a kind
  adversary  audit a hard-instance construction (membership, separation,
             invariances, second derivatives vs their closed forms)
  hellinger  exact testing-bound quantities on an enumerated ATE instance
  partition  build a balanced partition and print its JSON audit

Exit codes: 0 success, 2 precondition violations, 3 convergence failures.
DEBIAS_LAB_THREADS caps replication concurrency in `scan`.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import adversary, bounds, estimands as est, estimators as dr, harness
from .errors import NoConvergenceError, PreconditionError
from .grid import sample
from .partition import all_sign_vectors, bump, iterated_partition, partition_json_dumps
from .presets import preset

ESTIMATE_CSV_COLUMNS = ("kind", "n", "seed", "eps_gamma", "eps_alpha",
                        "alignment", "point", "oracle", "abs_error")


def _cmd_scan(args: argparse.Namespace) -> int:
    config = harness.ExperimentConfig.from_json(
        json.loads(Path(args.config).read_text())
    )
    result = harness.run_rate_scan(config)
    path = harness.emit(result, args.format, args.out, stem="scan")
    print(json.dumps({
        "slope": result.slope,
        "slope_stderr": result.slope_stderr,
        "sweep_values": result.sweep_values,
        "medians": result.medians,
        "out": str(path),
    }, indent=2))
    return 0


def _cmd_estimate(args: argparse.Namespace) -> int:
    pre = preset(args.kind, x_cells=args.x_cells, d_cells=args.d_cells)
    config = harness.ExperimentConfig(
        kind=args.kind,
        estimator=args.estimator,
        eps_sweep=((args.eps_gamma, args.eps_alpha),),
        replications=16,
        seed=args.seed,
        alignment=args.alignment,
        population=args.population,
        n_fixed=args.n,
        folds=args.folds,
        x_cells=args.x_cells,
        d_cells=args.d_cells,
    )
    point, oracle = harness.estimate_once(
        config, pre, (args.eps_gamma, args.eps_alpha), args.n, args.seed
    )
    report = dr.EstimateReport(point=point, n=args.n, clip_constant=pre.spec.overlap,
                               folds=args.folds, seed=args.seed)
    print(json.dumps({**report.to_json(), "oracle": oracle,
                      "abs_error": abs(point - oracle)}, indent=2))
    if args.csv:
        path = Path(args.csv)
        new = not path.exists()
        with path.open("a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if new:
                writer.writerow(ESTIMATE_CSV_COLUMNS)
            writer.writerow([args.kind, args.n, args.seed, repr(args.eps_gamma),
                             repr(args.eps_alpha), args.alignment, repr(point),
                             repr(oracle), repr(abs(point - oracle))])
    return 0


def _cmd_adversary(args: argparse.Namespace) -> int:
    pre = preset(args.kind, x_cells=args.x_cells, d_cells=args.d_cells)
    spec, anchor = pre.spec, pre.anchor
    report: dict = {"kind": args.kind}

    if args.kind == est.ATE:
        m_hat, g_hat = pre.extras["m_hat"], pre.extras["g_hat"]
        weights = [np.ones(m_hat.size), 2.0 * m_hat - 1.0]
        part = iterated_partition(weights, args.m_pairs, anchor.space.axes[0])
        family = adversary.AteLocalFamily(anchor.space, m_hat, g_hat,
                                          args.eps_gamma, args.eps_alpha, part)
        seps, marg_dev, member_dists = [], 0.0, []
        mix = adversary.mixture_density(family)
        marg_dev = float(np.max(np.abs(mix.values - anchor.values)))
        for lam in all_sign_vectors(family.m_pairs):
            member = family.member(lam)
            seps.append(est.functional_value(member, spec) - pre.oracle)
            _, dists = adversary.uncertainty_membership(
                member, anchor, spec, np.inf, np.inf)
            member_dists.append(dists)
        report["mixture_max_deviation"] = marg_dev
        report["separation"] = {"min": min(seps), "max": max(seps),
                                "reference": -2 * args.eps_gamma * args.eps_alpha}
        report["membership_distances"] = {
            "gamma_max": max(d for d, _ in member_dists),
            "alpha_max": max(d for _, d in member_dists),
        }

    pairs = {}
    for variant in ("gamma", "alpha"):
        try:
            pair = adversary.direction_pair(spec, anchor, variant)
        except PreconditionError as exc:
            pairs[variant] = {"unavailable": str(exc)}
            continue
        deviation = adversary.verify_invariance(anchor, pair.first, spec, variant)
        fd = adversary.second_derivative_fd(anchor, pair.first, pair.second, spec)
        pairs[variant] = {
            "invariance_deviation": deviation,
            "mixed_fd": fd,
            "mixed_reference": pair.mixed_reference,
        }
        if variant == "alpha":
            pairs[variant]["curvature_fd"] = adversary.second_derivative_fd(
                anchor, pair.first, pair.first, spec)
            pairs[variant]["curvature_closed_form"] = adversary.closed_form_chi2_H0(
                anchor, pair.first, spec)
    report["directions"] = pairs
    print(json.dumps(report, indent=2))
    return 0


def _cmd_hellinger(args: argparse.Namespace) -> int:
    if args.kind != est.ATE:
        raise PreconditionError("the hellinger audit runs on the ATE family")
    pre = preset(args.kind, x_cells=args.x_cells)
    m_hat, g_hat = pre.extras["m_hat"], pre.extras["g_hat"]
    weights = [np.ones(m_hat.size), 2.0 * m_hat - 1.0]
    part = iterated_partition(weights, args.m_pairs, pre.anchor.space.axes[0])
    family = adversary.AteLocalFamily(pre.anchor.space, m_hat, g_hat,
                                      args.eps_gamma, args.eps_alpha, part)
    inst = bounds.TestingInstance(pre.anchor, family, pre.spec, n=args.n)
    h2 = bounds.product_mixture_hellinger(inst)
    b, bound = bounds.theorem21_b(inst, part)
    print(json.dumps({
        "h2": h2,
        "b": b,
        "bound": bound,
        "fano_risk": bounds.fano_risk(min(h2, 2.0 - 1e-15)),
        "optimal_test_error": bounds.optimal_test_error(inst),
    }, indent=2))
    return 0


def _cmd_partition(args: argparse.Namespace) -> int:
    space = est.make_space(est.ATE, x_cells=args.cells)
    axis = space.axes[0]
    x = axis.coords
    named = {
        "uniform": np.ones(args.cells),
        "linear": x,
        "quadratic": x ** 2,
    }
    try:
        weights = [named[name] for name in args.weights]
    except KeyError as exc:
        raise PreconditionError(f"unknown weight name {exc.args[0]!r}; "
                                f"choose from {sorted(named)}") from exc
    part = iterated_partition(weights, args.blocks // 2, axis)
    print(partition_json_dumps(part))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debias-lab")
    sub = parser.add_subparsers(dest="command", required=True)

    scan = sub.add_parser("scan", help="run a configured sweep")
    scan.add_argument("--config", required=True)
    scan.add_argument("--out", default="out")
    scan.add_argument("--format", default="csv", choices=("csv", "json", "svg"))
    scan.set_defaults(func=_cmd_scan)

    estimate = sub.add_parser("estimate", help="one seeded estimate")
    estimate.add_argument("--kind", required=True, choices=est.KINDS)
    estimate.add_argument("--n", type=int, default=10_000)
    estimate.add_argument("--seed", type=int, default=0)
    estimate.add_argument("--eps-gamma", type=float, default=0.0)
    estimate.add_argument("--eps-alpha", type=float, default=0.0)
    estimate.add_argument("--alignment", default="adversarial",
                          choices=("adversarial", "random"))
    estimate.add_argument("--folds", type=int, default=2)
    estimate.add_argument("--population", action="store_true")
    estimate.add_argument("--estimator", default="dml",
                          choices=("plugin", "dr", "dml"))
    estimate.add_argument("--x-cells", type=int, default=256)
    estimate.add_argument("--d-cells", type=int, default=64)
    estimate.add_argument("--csv", default="estimates.csv")
    estimate.set_defaults(func=_cmd_estimate)

    adv = sub.add_parser("adversary", help="audit a hard-instance construction")
    adv.add_argument("--kind", required=True, choices=est.KINDS)
    adv.add_argument("--eps-gamma", type=float, default=0.1)
    adv.add_argument("--eps-alpha", type=float, default=0.1)
    adv.add_argument("--m-pairs", type=int, default=4)
    adv.add_argument("--x-cells", type=int, default=64)
    adv.add_argument("--d-cells", type=int, default=64)
    adv.set_defaults(func=_cmd_adversary)

    hel = sub.add_parser("hellinger", help="exact testing-bound quantities")
    hel.add_argument("--kind", default=est.ATE, choices=est.KINDS)
    hel.add_argument("--n", type=int, default=2)
    hel.add_argument("--m-pairs", "--M", dest="m_pairs", type=int, default=4)
    hel.add_argument("--eps-gamma", type=float, default=0.1)
    hel.add_argument("--eps-alpha", type=float, default=0.1)
    hel.add_argument("--x-cells", type=int, default=12)
    hel.set_defaults(func=_cmd_hellinger)

    part = sub.add_parser("partition", help="build a balanced partition")
    part.add_argument("--cells", type=int, default=256)
    part.add_argument("--blocks", type=int, default=8)
    part.add_argument("--weights", nargs="+", default=["uniform", "linear"])
    part.set_defaults(func=_cmd_partition)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
