"""Command-line front end: ``arwave <group> <command> [flags]``.

Every command prints one JSON document (or writes it to ``--out``) that
echoes its fully resolved configuration. Domain errors exit with status 1,
usage errors with status 2; both print ``{"error": code, "message": ...}``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

from . import chaos, experiments, limits, nodal
from .errors import ArwaveError
from .lattice import decompose, moments, mu_hat4, search_eta
from .rng import substream
from .wavefield import _ceil_sqrt, evaluate_grid, sample_coefficients


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="64-bit seed of the random streams")
    g.add_argument("--workers", type=int, default=1, help="worker processes (experiments only)")
    g.add_argument("--out", default=None, help="write the JSON result here instead of stdout")
    g.add_argument("--raw", default=None, help="CSV file for per-trial raw values (experiments only)")
    g.add_argument("--config", default=None, help="JSON file of defaults; explicit flags win")
    return p


def _point(text: str):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected x,y")
    return (x, y)


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _common()
    root = _Parser(prog="arwave", description="Arithmetic random waves laboratory.", formatter_class=fmt)
    groups = root.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def leaf(sub, name, help_):
        return sub.add_parser(name, help=help_, parents=[common], formatter_class=fmt)

    # lattice
    lat = groups.add_parser("lattice", help="frequency sets and their moments", formatter_class=fmt)
    lsub = lat.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = leaf(lsub, "decompose", "points of the lattice circle of energy n")
    p.add_argument("n", type=int)
    p = leaf(lsub, "search", "levels whose fourth Fourier coefficient is close to eta")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=0.05)
    p.add_argument("--max", dest="n_max", type=int, default=100_000, help="largest energy n scanned")
    p.add_argument("--min-mult", dest="min_mult", type=int, default=4, help="smallest multiplicity N accepted")

    # field
    fld = groups.add_parser("field", help="random field synthesis", formatter_class=fmt)
    fsub = fld.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = leaf(fsub, "export", "write the sampled field as binary (needs --out)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--grid", type=int, default=None, help="grid size m (default max(256, 8 ceil sqrt n))")
    p.add_argument("--trial", type=int, default=0, help="substream index of the coefficient draw")

    # nodal
    nod = groups.add_parser("nodal", help="nodal length measurements", formatter_class=fmt)
    nsub = nod.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("total", "total nodal length"), ("restricted", "nodal length inside a ball")):
        p = leaf(nsub, name, help_)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--grid", type=int, default=None, help="grid size m (default max(256, 8 ceil sqrt n))")
        p.add_argument("--trial", type=int, default=0, help="substream index of the coefficient draw")
        p.add_argument("--method", choices=nodal.METHODS, default="hermite")
        if name == "restricted":
            p.add_argument("--radius", type=float, default=0.25)
            p.add_argument("--center", type=_point, default=(0.5, 0.5), help="ball center x,y")

    # chaos
    cha = groups.add_parser("chaos", help="fourth-chaos closed forms", formatter_class=fmt)
    csub = cha.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = leaf(csub, "summary", "W, R, L[4] and M for one draw")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trial", type=int, default=0)
    p = leaf(csub, "check-q4", "closed form against grid quadrature")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--grid", type=int, default=None, help="grid size m (default 8 ceil sqrt n)")
    p.add_argument("--trial", type=int, default=0)

    # limits
    lim = groups.add_parser("limits", help="limit law and rate function", formatter_class=fmt)
    msub = lim.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = leaf(msub, "rate", "rate function I_eta(y)")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--oracle", action="store_true", help="also run the brute-force contraction oracle")
    p = leaf(msub, "tail", "P(M_eta <= -t) by quadrature")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p = leaf(msub, "gamma", "covariance matrices and eigenvalues")
    p.add_argument("--eta", type=float, required=True)

    # experiment
    p = groups.add_parser("experiment", help="Monte Carlo experiments", parents=[common], formatter_class=fmt)
    p.add_argument("--kind", choices=experiments.KINDS, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trials", type=int, default=None, help="number of trials (1000 if unset)")
    p.add_argument("--grid", dest="grid_m", type=int, default=None, help="grid size m")
    p.add_argument("--radius", dest="radius_s", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--thresholds", type=_floats, default=None, help="comma-separated thresholds (theta for cgf)")
    return root


def _emit(doc: dict, out):
    text = json.dumps(experiments._finite(doc), sort_keys=True, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _coeffs(args):
    ls = decompose(args.n)
    return ls, sample_coefficients(ls, substream(args.seed, args.trial))


def _grid_size(args, n):
    return args.grid if args.grid is not None else nodal.default_resolution(n)


def _run_lattice(args):
    if args.command == "decompose":
        ls = decompose(args.n)
        mu = mu_hat4(ls)
        return {
            "config": {"n": args.n},
            "n": ls.n,
            "N": ls.cardinality,
            "points": [list(p) for p in ls.points],
            "half_points": [list(p) for p in ls.half_points],
            "mu4": float(mu),
            "mu4_num": mu.numerator,
            "mu4_den": mu.denominator,
            "moment_identities_hold": moments(ls).identities_hold(),
        }
    rows = search_eta(args.eta, args.tol, args.n_max, args.min_mult)
    return {
        "config": {"eta": args.eta, "tol": args.tol, "max": args.n_max, "min_mult": args.min_mult},
        "levels": [{"n": n, "N": N, "mu4": float(mu), "mu4_num": mu.numerator, "mu4_den": mu.denominator} for n, N, mu in rows],
    }


def _run_field(args):
    if not args.out:
        raise UsageError("field export needs --out")
    ls, co = _coeffs(args)
    m = _grid_size(args, args.n)
    grid = evaluate_grid(co, m, "spectral" if m > 2 * _ceil_sqrt(args.n) else "direct", with_hess=False)
    data = grid.to_bytes()
    with open(args.out, "wb") as fh:
        fh.write(data)
    doc = {"config": {"n": args.n, "seed": args.seed, "trial": args.trial, "m": m}, "bytes": len(data), "path": args.out}
    print(json.dumps(doc, sort_keys=True))
    return None


def _run_nodal(args):
    ls, co = _coeffs(args)
    m = _grid_size(args, args.n)
    grid = evaluate_grid(co, m, "spectral" if m > 2 * _ceil_sqrt(args.n) else "direct")
    config = {"n": args.n, "seed": args.seed, "trial": args.trial, "m": m, "method": args.method}
    if args.command == "total":
        meas = nodal.nodal_length(grid, args.method)
    else:
        meas = nodal.nodal_length_restricted(grid, args.center, args.radius, args.method)
        config.update(radius=args.radius, center=list(args.center))
    return {"config": config, "n": args.n, "seed": args.seed, "m": m, "length": meas.length, "segments": meas.segments}


def _run_chaos(args):
    ls, co = _coeffs(args)
    config = {"n": args.n, "seed": args.seed, "trial": args.trial}
    if args.command == "summary":
        return {"config": config, **chaos.summarize(co).as_dict()}
    m = args.grid if args.grid is not None else 8 * _ceil_sqrt(args.n)
    cf = chaos.fourth_chaos_closed_form(co)
    q = chaos.chaos_projection_quadrature(co, 4, m)
    config["m"] = m
    return {"config": config, "closed_form": cf, "quadrature": q, "rel_diff": abs(cf - q) / abs(cf) if cf else math.inf}


def _run_limits(args):
    if args.command == "rate":
        doc = {"config": {"eta": args.eta, "y": args.y, "oracle": args.oracle}, **limits.RateQuery.of(args.y, args.eta).as_dict()}
        doc["rate_f"] = limits.rate_function_f(args.y, args.eta)
        if args.oracle and args.y < 0:
            scaled = args.y * math.sqrt(1.0 + args.eta**2)
            value, x = limits.rate_function_bruteforce_details(scaled, args.eta)
            doc["oracle"] = {"value": value, "minimizer": x.tolist()}
        return doc
    if args.command == "tail":
        logp = limits.log_tail_probability_M_eta(args.eta, args.t)
        return {
            "config": {"eta": args.eta, "t": args.t},
            "probability": math.exp(logp),
            "log_probability": logp,
            "slope": -logp / args.t,
            "asymptotic_slope": limits.rate_function(-1.0, args.eta),
        }
    return {"config": {"eta": args.eta}, **limits.EtaParams.of(args.eta).as_dict()}


EXPERIMENT_FLAGS = ("kind", "n", "trials", "grid_m", "radius_s", "alpha", "thresholds")


def _run_experiment(args, explicit: set):
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
    for key in EXPERIMENT_FLAGS:
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    for key in ("seed", "workers"):
        if key in explicit or key not in base:
            base[key] = getattr(args, key)
    if "kind" not in base or "n" not in base:
        raise UsageError("experiment needs --kind and --n (or a config file providing them)")
    try:
        cfg = experiments.ExperimentConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))
    result = experiments.run(cfg)
    if args.raw:
        result.write_raw(args.raw)
    return result.as_dict()


def _explicit_flags(argv) -> set:
    return {a[2:].split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        argv = ["--help"]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.group == "experiment":
            doc = _run_experiment(args, _explicit_flags(argv))
        else:
            doc = {"lattice": _run_lattice, "field": _run_field, "nodal": _run_nodal, "chaos": _run_chaos, "limits": _run_limits}[
                args.group
            ](args)
        if doc is not None:
            _emit(doc, args.out)
        return 0
    except UsageError as exc:
        print(json.dumps({"error": "usage_error", "message": str(exc)}))
        return 2
    except ArwaveError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}))
        return 1
    except ValueError as exc:
        print(json.dumps({"error": "invalid_value", "message": str(exc)}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
