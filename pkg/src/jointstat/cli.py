"""Command-line entry point.

Subcommands: eval, limit, mc, indep, covariance, probe.  Exit status is 0 on
success, 1 for validation errors, 2 for I/O errors and 3 when ``mc --assert``
finds more goodness-of-fit failures than its budget allows.
"""

from __future__ import annotations

import argparse
import math
import sys
from importlib import metadata

import numpy as np
import scipy

from .config import config_to_dict, read_config
from .errors import JointStatError, MalformedInput
from .joint import (
    build_layout,
    check_independence,
    compute_G,
    estimate_phi,
    sample_limit,
)
from .model import DEFAULT_CAP, DEFAULT_MC_REPLICATES, ValidatedBattery
from .report import REPORT_FORMATS, emit_report, matrix_block, matrix_csv
from .simulate import (
    Generator,
    convergence_rate,
    divergence_probe,
    gof_marginals,
    run_monte_carlo,
)
from .statistics import eval_battery
from .streams import FORMATS, ingest_stream

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_SUITE = 0, 1, 2, 3


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def provenance(**seeds) -> dict:
    return {"package": _version(), "numpy": np.__version__, "scipy": scipy.__version__, "seeds": seeds}


def parse_generator(text: str, battery: ValidatedBattery) -> Generator:
    """``h0``, ``uniform01``, ``bernoulli:P`` or ``markov:P00,P01,P10,P11``."""
    kind, _, arg = text.partition(":")
    if kind == "h0":
        return Generator.h0(battery.null)
    if kind == "uniform01":
        return Generator.uniform01()
    if kind == "bernoulli":
        return Generator.bernoulli(float(arg))
    if kind == "markov":
        p = [float(v) for v in arg.split(",")]
        if len(p) != 4:
            raise JointStatError("markov generator needs four transition probabilities")
        return Generator.markov_binary(((p[0], p[1]), (p[2], p[3])))
    raise JointStatError(f"unknown generator {text!r}")


def choose_phi_method(battery: ValidatedBattery, cap: int = DEFAULT_CAP) -> str:
    """Exact enumeration when feasible, then the closed form, else Monte Carlo."""
    layout = build_layout(battery)
    lags = min((layout.s - 1) // layout.h, (layout.s_star_lower - 1) // layout.h)
    w = layout.h * lags + layout.s_star_lower
    if battery.null.is_finite and battery.null.space.R**w <= cap:
        return "exact_enumeration"
    if layout.s == layout.h and all(t.sum.m == 1 and t.lb.m == 1 for t in battery.triples):
        return "closed_form"
    return "monte_carlo"


def _g_matrix(battery, args):
    layout = build_layout(battery)
    method = args.phi_method if args.phi_method != "auto" else choose_phi_method(battery, args.cap)
    phi = estimate_phi(layout, battery, method, M=args.phi_M, seed=args.phi_seed, cap=args.cap)
    return layout, phi, compute_G(phi, battery.N, battery.h)


def _phi_meta(phi) -> dict:
    return {"method": phi.method, "samples": phi.samples, **phi.meta}


def _summary(values: np.ndarray, labels) -> dict:
    out = {}
    for i, lab in enumerate(labels):
        x = values[:, i]
        q = np.quantile(x, [0.05, 0.5, 0.95])
        out[lab] = {
            "mean": float(np.mean(x)),
            "var": float(np.var(x, ddof=1)) if x.size > 1 else 0.0,
            "q05": float(q[0]),
            "median": float(q[1]),
            "q95": float(q[2]),
        }
    return out


def cmd_eval(args, battery):
    seq = ingest_stream(args.input, args.format, battery.null.space, args.length)
    battery = battery.with_n(seq.n) if seq.n != battery.n else battery
    stats = eval_battery(battery, seq)
    return {"n": seq.n, "statistics": dict(zip(stats.labels, stats.values))}, provenance()


def cmd_limit(args, battery):
    layout, phi, g = _g_matrix(battery, args)
    draws = sample_limit(g, layout, battery, args.M_lim, args.seed, workers=args.workers)
    result = {
        "M_lim": args.M_lim,
        "summary": _summary(draws.draws, draws.labels),
        "G": matrix_block(g.matrix, N=g.N, h=g.h, method=_phi_meta(phi)),
    }
    return result, provenance(limit=args.seed, phi=args.phi_seed)


def cmd_mc(args, battery):
    gen = parse_generator(args.generator, battery)
    rep = run_monte_carlo(battery, gen, args.M, args.seed, workers=args.workers)
    result = {"M": rep.M, "generator": args.generator, "summary": _summary(rep.values, rep.labels)}
    result["correlation"] = matrix_block(np.nan_to_num(rep.correlations(), nan=0.0), labels=" ".join(rep.labels))
    status = EXIT_OK
    if rep.M >= 100:
        limit = None
        if battery.J:
            layout, phi, g = _g_matrix(battery, args)
            limit = sample_limit(g, layout, battery, args.M_lim, args.limit_seed, workers=args.workers)
        gof = gof_marginals(rep, battery, limit)
        fails = [lab for lab, r in gof.items() if r.p_value <= args.alpha]
        budget = math.ceil(len(gof) / 20)
        result["gof"] = {
            lab: {"reference": r.reference, "ks_distance": r.distance, "p_value": r.p_value} for lab, r in gof.items()
        }
        result["gof_failures"] = fails
        result["gof_budget"] = budget
        result["suite_pass"] = len(fails) <= budget
        if args.assert_ and len(fails) > budget:
            status = EXIT_SUITE
    elif args.assert_:
        raise JointStatError("--assert needs M >= 100")
    return result, provenance(master=args.seed, limit=args.limit_seed, phi=args.phi_seed), status


def cmd_indep(args, battery):
    layout, phi, g = _g_matrix(battery, args)
    groups = [[r for r in grp.split(",") if r.strip()] for grp in args.groups]
    rep = check_independence(g, layout, groups, args.tol, battery)
    result = {
        "verdict": "independent" if rep.independent else "not independent",
        "violations": [{"u": u, "v": v, "value": val} for u, v, val in rep.violations],
        "pairs": [{"groups": [i, j], "independent": ok} for i, j, ok in rep.pairs],
        "groups": groups,
        "note": rep.note,
        "phi": _phi_meta(phi),
    }
    return result, provenance(phi=args.phi_seed)


def cmd_covariance(args, battery):
    layout, phi, g = _g_matrix(battery, args)
    meta = _phi_meta(phi)
    blocks = {
        "phi": matrix_block(phi.matrix, N=battery.N, h=battery.h, method=meta),
        "G": matrix_block(g.matrix, N=g.N, h=g.h, method=meta),
    }
    result = {"coordinates": layout.coordinate_names()}
    if args.which in ("phi", "both"):
        result["phi"] = blocks["phi"]
    if args.which in ("G", "both"):
        result["G"] = blocks["G"]
    return result, provenance(phi=args.phi_seed)


def cmd_probe(args, battery):
    grid = [int(v) for v in args.grid.split(",")]
    if args.kind == "divergence":
        gen = parse_generator(args.generator, battery)
        pr = divergence_probe(battery, gen, grid, args.M, args.seed, workers=args.workers)
        result = {
            "kind": "divergence",
            "n_grid": list(pr.n_grid),
            "medians": {lab: pr.medians[:, i].tolist() for i, lab in enumerate(pr.labels)},
            "abs_sum_medians": pr.abs_sum_medians.T.tolist(),
            "drift": list(pr.drift),
            "increasing": pr.increasing,
            "c_sum": list(pr.c_sum),
            "c_lb": list(pr.c_lb),
            "c_sb": list(pr.c_sb),
        }
        return result, provenance(master=args.seed)
    layout, phi, g = _g_matrix(battery, args)
    limit = sample_limit(g, layout, battery, args.M_lim, args.limit_seed, workers=args.workers)
    cr = convergence_rate(battery, grid, args.M, args.seed, limit=limit, workers=args.workers)
    result = {
        "kind": "convergence",
        "n_grid": list(cr.n_grid),
        "distances": {lab: cr.distances[:, i].tolist() for i, lab in enumerate(cr.labels)},
        "slopes": cr.slopes,
    }
    return result, provenance(master=args.seed, limit=args.limit_seed, phi=args.phi_seed)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jointstat", description="Joint limit laws for batteries of randomness tests.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, phi=True):
        sp.add_argument("--config", required=True, help="battery configuration (JSON)")
        sp.add_argument("--output", default="-", help="report path, '-' for stdout")
        sp.add_argument("--report-format", choices=REPORT_FORMATS, default="json_doc")
        sp.add_argument("--workers", type=int, default=1)
        if phi:
            sp.add_argument("--phi-method", default="auto", choices=("auto", "exact_enumeration", "monte_carlo", "closed_form"))
            sp.add_argument("--phi-M", type=int, default=DEFAULT_MC_REPLICATES)
            sp.add_argument("--phi-seed", type=int, default=0)
            sp.add_argument("--cap", type=int, default=DEFAULT_CAP)

    sp = sub.add_parser("eval", help="evaluate the battery on an input stream")
    common(sp, phi=False)
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", choices=FORMATS, default="bits_packed")
    sp.add_argument("--length", type=int, default=None, help="number of elements to read")

    sp = sub.add_parser("limit", help="sample the joint limit law")
    common(sp)
    sp.add_argument("--M-lim", dest="M_lim", type=int, default=20000)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("mc", help="Monte-Carlo run with marginal goodness of fit")
    common(sp)
    sp.add_argument("--M", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--generator", default="h0")
    sp.add_argument("--alpha", type=float, default=0.001)
    sp.add_argument("--M-lim", dest="M_lim", type=int, default=20000)
    sp.add_argument("--limit-seed", type=int, default=1)
    sp.add_argument("--assert", dest="assert_", action="store_true", help="exit 3 if the GOF budget is exceeded")

    sp = sub.add_parser("indep", help="asymptotic independence of statistic groups")
    common(sp)
    sp.add_argument("--groups", nargs="+", required=True, help="comma-separated refs per group, e.g. sum[0],lb[0] sum[1]")
    sp.add_argument("--tol", type=float, default=None)

    sp = sub.add_parser("covariance", help="export the window covariance (phi) and/or the limit covariance (G)")
    common(sp)
    sp.add_argument("--which", choices=("phi", "G", "both"), default="G")

    sp = sub.add_parser("probe", help="divergence or convergence-rate study")
    common(sp)
    sp.add_argument("--kind", choices=("divergence", "convergence"), default="divergence")
    sp.add_argument("--grid", required=True, help="comma-separated n values")
    sp.add_argument("--M", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--generator", default="h0")
    sp.add_argument("--M-lim", dest="M_lim", type=int, default=20000)
    sp.add_argument("--limit-seed", type=int, default=1)
    return p


COMMANDS = {
    "eval": cmd_eval,
    "limit": cmd_limit,
    "mc": cmd_mc,
    "indep": cmd_indep,
    "covariance": cmd_covariance,
    "probe": cmd_probe,
}


def run_command(argv) -> tuple[int, dict | None]:
    args = build_parser().parse_args(argv)
    try:
        doc, battery = read_config(args.config)
        out = COMMANDS[args.command](args, battery)
        result, prov = out[0], out[1]
        status = out[2] if len(out) > 2 else EXIT_OK
        report = {
            "schema_version": 1,
            "command": args.command,
            "config": config_to_dict(battery, doc.get("method", "auto"), doc.get("moment_options")),
            "provenance": prov,
            "result": result,
        }
        if args.command == "covariance" and args.report_format == "csv_tables" and args.which != "both":
            text = matrix_csv(result[args.which])
            if args.output == "-":
                sys.stdout.write(text)
            else:
                with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
        else:
            emit_report(report, args.output, args.report_format)
        return status, report
    except (OSError, MalformedInput) as exc:
        print(f"jointstat: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO, None
    except JointStatError as exc:
        print(f"jointstat: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION, None


def main(argv=None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)[0]


if __name__ == "__main__":
    sys.exit(main())
