"""Command-line front end.

Exit codes: 0 success, 1 numeric failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import __version__
from .audit import (AuditConfig, calibrate_boundary, cbar_for_gap, kl_audit, local_alternative,
                    log_threshold_integral, power_sim, sigma_star, smoothed_kl_audit,
                    threshold_constant)
from .bootstrap import MIN_REPLICATES, bootstrap_distribution
from .distributions import (DiscreteAtoms, EmpiricalPairs, GaussianMixture, IsotropicGaussian,
                            PointMass, UniformBox, empirical, read_points)
from .divergence import (chi2_information, estimate_divergence, get_generator,
                         stability_bound)
from .errors import NumericFailure, SmoothDivError, ValidationError
from .integrate import MonteCarlo, TensorGrid, c_ds, q_inverse, set_workers
from .limits import default_grid, null_limit_spectrum, sample_limit
from .smoothing import SmoothedAnalytic, SmoothedEmpirical

SCHEMA = "smoothdiv/1"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# output ----------------------------------------------------------------------

def _fmt(obj) -> str:
    """JSON text with floats at 17 significant digits."""
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise NumericFailure("non-finite value in report")
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _csv(rows) -> str:
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(r[k]).strip('"') for k in header))
    return "\n".join(lines) + "\n"


def _emit(args, report: dict, table=None):
    report = {"schema": SCHEMA, "command": args.command, **report}
    if args.format == "csv":
        text = _csv(table or [{k: v for k, v in report.items() if not isinstance(v, (list, dict))}])
    else:
        text = _fmt(report) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# helpers ---------------------------------------------------------------------

def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _positive(args, *names):
    for n in names:
        v = getattr(args, n, None)
        if v is not None and not v > 0:
            raise UsageError(f"--{n.replace('_', '-')} must be positive")


def _plan(args, *measures):
    if getattr(args, "grid_nodes", None):
        if measures[0].dim > 2:
            raise UsageError("--grid-nodes supports d <= 2")
        return TensorGrid.around(*measures, nodes_per_dim=args.grid_nodes)
    return MonteCarlo(args.n_mc, args.seed, getattr(args, "proposal", None))


def distribution_from_spec(spec) -> object:
    """Build a Distribution from a dict such as {"type": "point_mass", "a": [0]}."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError:
            with open(spec) as fh:
                spec = json.load(fh)
    kind = str(spec.get("type", "")).lower()
    try:
        if kind == "point_mass":
            return PointMass(spec["a"])
        if kind == "gaussian":
            return IsotropicGaussian(spec["mean"], spec["s"])
        if kind == "mixture":
            return GaussianMixture(spec["weights"], spec["means"], spec["s"])
        if kind == "uniform_box":
            return UniformBox(spec["lo"], spec["hi"])
        if kind == "discrete":
            return DiscreteAtoms(spec["atoms"], spec["probs"])
    except KeyError as exc:
        raise UsageError(f"distribution spec lacks field {exc}") from None
    raise UsageError(f"unknown distribution type {kind!r}")


# commands --------------------------------------------------------------------

def cmd_estimate(args):
    _need(args, "x", "y", "sigma")
    _positive(args, "sigma", "n_mc")
    x = read_points(args.x, args.header)
    y = read_points(args.y, args.header, columns=x.shape[1])
    gen = get_generator(args.divergence)
    p, q = SmoothedEmpirical(x, args.sigma), SmoothedEmpirical(y, args.sigma)
    est = estimate_divergence(gen, p, q, _plan(args, p, q))
    _emit(args, {"divergence": gen.name, "sigma": args.sigma, **est.as_dict()})
    return 0


def cmd_null_sim(args):
    _need(args, "x", "sigma")
    _positive(args, "sigma", "count")
    x = read_points(args.x, args.header)
    if x.shape[1] > 2:
        raise UsageError("null-sim supports d <= 2")
    gen = get_generator(args.divergence)
    mu = empirical(x)
    grid = default_grid(mu, args.sigma, args.grid_nodes)
    if args.two_sample:
        if args.pairs:
            pairs = read_points(args.pairs, args.header, columns=2 * x.shape[1])
            mode = EmpiricalPairs(pairs)
        else:
            mode = "two_sample"
    else:
        mode = "one_sample"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        law = null_limit_spectrum(mu, args.sigma, grid, mode, gen)
    ci = chi2_information(mu, args.sigma,
                          TensorGrid.around(SmoothedAnalytic(mu, args.sigma), nodes_per_dim=512 if x.shape[1] == 1 else 96))
    draws = sample_limit(law, args.count, args.seed)
    qs = np.quantile(draws, [0.5, 0.9, 0.95, 0.99])
    report = {"divergence": gen.name, "sigma": args.sigma, "mode": "two_sample" if args.two_sample else "one_sample",
              "lambdas": law.lambdas, "scale": law.scale, "trace": law.trace,
              "chi2_information": ci.value, "status": law.status, "grid_meta": law.grid_meta,
              "draws": {"count": int(draws.size), "mean": float(draws.mean()),
                        "var": float(draws.var()), "q50": qs[0], "q90": qs[1], "q95": qs[2], "q99": qs[3]}}
    table = [{"index": i, "lambda": v} for i, v in enumerate(law.lambdas)]
    _emit(args, report, table)
    return 0


def cmd_bootstrap(args):
    _need(args, "x", "sigma")
    _positive(args, "sigma", "B", "n_mc")
    if (args.y is None) == (args.reference is None):
        raise UsageError("give exactly one of --y or --reference")
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    x = read_points(args.x, args.header)
    if args.y is not None:
        ref = read_points(args.y, args.header, columns=x.shape[1])
        q = SmoothedEmpirical(ref, args.sigma)
    else:
        ref = distribution_from_spec(args.reference)
        q = SmoothedAnalytic(ref, args.sigma)
    plan = _plan(args, SmoothedEmpirical(x, args.sigma), q)
    res = bootstrap_distribution(args.divergence, x, ref, args.sigma, args.B, plan, args.seed)
    lo = hi = None
    if res.B >= MIN_REPLICATES:
        res = res.with_ci(args.level)
        lo, hi = res.ci
    report = {"divergence": get_generator(args.divergence).name, "point": res.point_estimate,
              "lo": lo, "hi": hi, "level": args.level, "B": res.B, "sigma": args.sigma,
              "n": res.n, "replicates": res.replicates}
    _emit(args, report, [{"index": i, "replicate": v} for i, v in enumerate(res.replicates)])
    return 0


def cmd_audit(args):
    _need(args, "pairs", "epsilon", "tau", "b")
    _positive(args, "epsilon", "b", "sigma", "n_mc")
    pairs = read_points(args.pairs, args.header)
    if pairs.shape[1] % 2:
        raise UsageError("audit CSV needs an even number of columns (X block, Y block)")
    cfg = AuditConfig(args.epsilon, args.tau, args.b, args.sigma, args.eps_bar, args.s_lo,
                      args.s_hi, args.m_bar, args.paper_literal)
    d = pairs.shape[1] // 2
    if cfg.kl_mode:
        cfg.check_kl_mode()
        sig = cfg.sigma or 0.9 * sigma_star(cfg.epsilon, cfg.eps_bar, cfg.s_lo, cfg.s_hi, d, cfg.M_bar)
    else:
        _need(args, "sigma")
        sig = cfg.sigma
    plan = _plan(args, SmoothedEmpirical(pairs[:, :d], sig), SmoothedEmpirical(pairs[:, d:], sig))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = kl_audit(pairs, cfg, plan) if cfg.kl_mode else smoothed_kl_audit(pairs, cfg, plan)
    out = rep.as_dict()
    # JSON has no infinity; an unrepresentable constant is reported as null
    for key in ("c_bds", "t_n"):
        if not math.isfinite(out[key]):
            out[key] = None
    out["paper_literal"] = bool(args.paper_literal)
    _emit(args, out)
    return 0


def cmd_power_sim(args):
    _need(args, "epsilon", "tau", "b", "sigma", "n", "trials")
    _positive(args, "epsilon", "b", "sigma", "n", "gap")
    if args.trials < 50:
        raise UsageError("--trials must be at least 50")
    cfg = AuditConfig(args.epsilon, args.tau, args.b, args.sigma, paper_literal=args.paper_literal)
    design = calibrate_boundary(args.epsilon, args.b, args.sigma, args.d, args.p, args.anti)
    cbar = args.cbar if args.cbar is not None else cbar_for_gap(design, args.epsilon, args.n, args.gap)
    a = args.b * math.sqrt(args.d)
    if args.grid_nodes and args.d <= 2:
        plan = TensorGrid(args.grid_nodes, (-a - 12 * args.sigma,) * args.d, (a + 12 * args.sigma,) * args.d)
    else:
        plan = MonteCarlo(args.n_mc, args.seed)
    res = power_sim(design.coupling, lambda n: local_alternative(design.coupling, cbar, n),
                    cfg, args.n, args.trials, plan, args.seed)
    gap = design.kl_at_shift(cbar / math.sqrt(args.n)) - args.epsilon
    _emit(args, {**res, "epsilon": args.epsilon, "tau": args.tau, "sigma": args.sigma, "b": args.b,
                 "d": args.d, "cbar": cbar, "gap": gap, "q": design.q, "p": design.p})
    return 0


def cmd_constants(args):
    _positive(args, "sigma", "d")
    out = {}
    if args.s is not None:
        out["c_ds"] = c_ds(args.d, args.s)
    if args.b is not None and args.sigma is not None:
        log_int = log_threshold_integral(args.b, args.d, args.sigma)
        c = threshold_constant(args.b, args.d, args.sigma)
        lit = threshold_constant(args.b, args.d, args.sigma, paper_literal=True)
        out["c_bds"] = c if math.isfinite(c) else None
        out["c_bds_paper_literal"] = lit if math.isfinite(lit) else None
        out["log_c_bds"] = 0.5 * log_int
    if None not in (args.epsilon, args.eps_bar, args.s_lo, args.s_hi, args.m_bar):
        out["sigma_star"] = sigma_star(args.epsilon, args.eps_bar, args.s_lo, args.s_hi, args.d, args.m_bar)
    if None not in (args.M, args.s, args.sigma):
        out["stability_bound"] = stability_bound(args.M, args.s, args.d, args.sigma)
    if args.tau is not None:
        out["q_inverse"] = float(q_inverse(args.tau))
    if not out:
        raise UsageError("no constant requested; pass e.g. --b and --sigma, or --tau")
    _emit(args, {"d": args.d, **out})
    return 0


# parser ----------------------------------------------------------------------

def _common(sub):
    sub.add_argument("--config", help="JSON file of option defaults (flags win)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--output", help="write the report here instead of stdout")
    sub.add_argument("--format", choices=["json", "csv"], default="json")
    sub.add_argument("--header", action="store_true", help="CSV inputs have a header row")


def _integration(sub):
    sub.add_argument("--n-mc", type=int, default=1 << 16)
    sub.add_argument("--grid-nodes", type=int, help="use a Gauss-Legendre grid (d <= 2) instead of MC")


def build_parser():
    parser = _Parser(prog="smoothdiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"smoothdiv {__version__}")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = subs.add_parser("estimate", help="smoothed divergence between two samples")
    _common(p)
    _integration(p)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--divergence", choices=["kl", "chi2", "h2", "tv"], default="kl")
    p.add_argument("--sigma", type=float)
    p.add_argument("--proposal", choices=["mixture", "q"], default=None)
    p.set_defaults(func=cmd_estimate)

    p = subs.add_parser("null-sim", help="null limit spectrum and draws")
    _common(p)
    p.add_argument("--x")
    p.add_argument("--sigma", type=float)
    p.add_argument("--divergence", choices=["kl", "chi2", "h2"], default="kl")
    p.add_argument("--grid-nodes", type=int)
    p.add_argument("--two-sample", action="store_true")
    p.add_argument("--pairs", help="paired CSV defining the two-sample coupling")
    p.add_argument("--count", type=int, default=10000)
    p.set_defaults(func=cmd_null_sim)

    p = subs.add_parser("bootstrap", help="bootstrap replicates and basic interval")
    _common(p)
    _integration(p)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--reference", help="JSON distribution spec (inline or file)")
    p.add_argument("--divergence", choices=["kl", "chi2", "h2"], default="kl")
    p.add_argument("--sigma", type=float)
    p.add_argument("--B", type=int, default=200)
    p.add_argument("--level", type=float, default=0.9)
    p.set_defaults(func=cmd_bootstrap)

    p = subs.add_parser("audit", help="smoothed-KL or KL differential privacy test")
    _common(p)
    _integration(p)
    p.add_argument("--pairs")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--eps-bar", type=float)
    p.add_argument("--s-lo", type=float)
    p.add_argument("--s-hi", type=float)
    p.add_argument("--m-bar", type=float)
    p.add_argument("--paper-literal", action="store_true",
                   help="use the unrooted threshold integral as c_bds")
    p.set_defaults(func=cmd_audit)

    p = subs.add_parser("power-sim", help="level and power of the smoothed test")
    _common(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--b", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--p", type=float, default=0.6, help="mu0 mass on the +b atom")
    p.add_argument("--anti", type=float, default=0.95)
    p.add_argument("--gap", type=float, default=0.2)
    p.add_argument("--cbar", type=float)
    p.add_argument("--n-mc", type=int, default=1 << 14)
    p.add_argument("--grid-nodes", type=int, default=256)
    p.add_argument("--paper-literal", action="store_true")
    p.set_defaults(func=cmd_power_sim)

    p = subs.add_parser("constants", help="c_ds, c_bds, sigma_star, stability bound, Q^-1")
    _common(p)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--s", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eps-bar", type=float)
    p.add_argument("--s-lo", type=float)
    p.add_argument("--s-hi", type=float)
    p.add_argument("--m-bar", type=float)
    p.set_defaults(func=cmd_constants)
    return parser, subs


def parse(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required")
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        sub = subs.choices[args.command]
        known = {a.dest for a in sub._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError("unknown config keys: " + ", ".join(sorted(unknown)))
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    return args


def main(argv=None) -> int:
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
        set_workers(args.threads)
        with np.errstate(over="ignore", under="ignore"):
            return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (NumericFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"smoothdiv: numeric failure: {exc}", file=sys.stderr)
        return 1
    except (SmoothDivError, ValueError, OSError) as exc:
        print(f"smoothdiv: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
