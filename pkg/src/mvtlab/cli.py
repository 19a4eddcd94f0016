"""Command-line front end.

Exit codes: 0 success, 2 capacity exceeded, 3 bad input or failed
precondition, 4 a bound check returned "violated".

Spec files
----------
Instead of ``--preset`` a moment can be given as a plain text file of
``key = value`` lines (``#`` starts a comment)::

    N = 32
    p = 8
    range = (16, 32]          # optional; default (N/2, N]
    window_constant = 1.0     # optional
    term = 1, 0, false        # power, amplitude exponent, normalized
    term = 2, 0, false
    term = 3/2, 1, true       # N^1 (n/N)^{3/2}: window N^-1 on sums of (n/N)^{3/2}

A term is exact (an integer equation) when its power is an integer, its
amplitude exponent is 0 and it is not normalized. Any other term becomes a
window of width ``window_constant * N^-amplitude_exponent``.

Rational values that start with a minus sign need the ``=`` form on the
command line, e.g. ``--lambda-exp=-7/3``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import re
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .counter import CounterConfig, count
from .errors import CapacityError, PrecisionError, PreconditionError
from .explab import (
    DEFAULT_BAND,
    check_bound,
    interchange_check,
    ladder_csv,
    lower_bound_check,
    run_ladder,
    Template,
)
from .geometry import load_curve_library, nondegeneracy_scan, quadratic_fit_check
from .presets import PRESETS, eval_param_expr, get_preset, power_of
from .sums import SIGMA_PRESETS, Monomial, mc_moment, vdc_check, weyl_bound_rhs, weyl_sum
from .systems import Interval, as_rational, load_spec, spec_to_system

REPORT_VERSION = 1
EXIT_OK, EXIT_CAPACITY, EXIT_PRECONDITION, EXIT_VIOLATED = 0, 2, 3, 4


@dataclass
class RunConfig:
    command: str
    preset: str | None = None
    spec: str | None = None
    overrides: dict = field(default_factory=dict)
    output: str | None = None
    csv: str | None = None
    cache_dir: str | None = None
    workers: int = 1
    budget: int = CounterConfig().memory_budget
    options: dict = field(default_factory=dict)

    def counter_config(self) -> CounterConfig:
        return CounterConfig(workers=self.workers, memory_budget=self.budget, cache_dir=self.cache_dir)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PRECONDITION, f"{self.prog}: error: {message}\n")


_UNITS = {"": 1, "b": 1, "k": 1 << 10, "kib": 1 << 10, "m": 1 << 20, "mib": 1 << 20, "g": 1 << 30, "gib": 1 << 30}


def parse_budget(text: str) -> int:
    m = re.fullmatch(r"\s*([0-9.]+)\s*([a-zA-Z]*)\s*", text)
    if not m or m.group(2).lower() not in _UNITS:
        raise argparse.ArgumentTypeError(f"cannot parse memory budget {text!r}; e.g. 8GiB, 512MiB")
    return int(float(m.group(1)) * _UNITS[m.group(2).lower()])


def parse_ladder(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"ladder must be comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mvtlab", description="Exact counting and exponent checks for exponential-sum moments.")
    p.add_argument("--version", action="version", version=f"mvtlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--output", "-o", help="write the JSON report here (default: stdout)")
        sp.add_argument("--cache-dir", help="record-table cache directory (default: $MVTLAB_CACHE_DIR)")
        sp.add_argument("--workers", type=int, default=1, help="threads for the counting kernels")
        sp.add_argument("--budget", type=parse_budget, default=CounterConfig().memory_budget, help="memory budget, e.g. 8GiB")
        sp.add_argument("-v", "--verbose", action="store_true")

    def system_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--preset", choices=sorted(PRESETS), help="named moment family")
        g.add_argument("--spec", help="spec file (see module docs for the format)")
        sp.add_argument("--delta-exp", help="delta = N^e")
        sp.add_argument("--Delta", dest="Delta", help="Delta as an expression in N and delta, e.g. 'delta*N'")
        sp.add_argument("--Delta-exp", dest="Delta_exp", help="Delta = N^e")
        sp.add_argument("--lambda-exp", help="lambda = N^e")
        sp.add_argument("--window-constant", type=float, help="multiply every window by c")

    sp = sub.add_parser("count", help="exact count of one system")
    common(sp)
    system_args(sp)
    sp.add_argument("--N", type=int, help="required with --preset; a spec file sets its own")

    sp = sub.add_parser("ladder", help="counts over a ladder of N and the fitted exponent")
    common(sp)
    system_args(sp)
    sp.add_argument("--ladder", type=parse_ladder, help="comma-separated N values")
    sp.add_argument("--csv", help="also write (N, count, log2 N, log2 count) as CSV")
    sp.add_argument("--claimed", help="claimed exponent (default: the preset's)")
    sp.add_argument("--band", default=f"{DEFAULT_BAND[0]},{DEFAULT_BAND[1]}", help="below,above widths of the band")

    sp = sub.add_parser("bilinear", help="bilinear n=3 mixed count ladder")
    common(sp)
    sp.add_argument("--ladder", type=parse_ladder, default=[16, 32, 64])
    sp.add_argument("--window-constant", type=float)
    sp.add_argument("--csv")
    sp.add_argument("--band", default=f"{DEFAULT_BAND[0]},{DEFAULT_BAND[1]}", help="below,above widths of the band")

    sp = sub.add_parser("weyl", help="|f_k(a/q; N)| against the Weyl-type bound")
    common(sp)
    sp.add_argument("--a", type=int, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--sigma", default="decoupling", help=f"rational or one of {sorted(SIGMA_PRESETS)}")

    sp = sub.add_parser("vdc", help="partition sum of e(f(n)) over blocks of length D")
    common(sp)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--D", type=int, required=True)
    sp.add_argument("--power", default="3/2", help="f(n) = coefficient * (n/N)^power")
    sp.add_argument("--delta-exp", default="-1", help="coefficient = 1/delta = N^-e")
    sp.add_argument("--coefficient", type=float, help="explicit coefficient (overrides --delta-exp)")
    sp.add_argument("--audit-constant", type=float, default=10.0)

    sp = sub.add_parser("interchange", help="interchange inequality for N_10")
    common(sp)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--delta-exp", required=True)
    sp.add_argument("--Delta", dest="Delta", required=True, help="expression in N and delta")
    sp.add_argument("--T", type=float, default=2.0)
    sp.add_argument("--C", type=float, default=1.0)
    sp.add_argument("--audit-constant", type=float, default=10.0)

    sp = sub.add_parser("lowerbound", help="short-window lower-bound construction for N_10")
    common(sp)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--delta-exp", required=True)
    sp.add_argument("--Delta", dest="Delta", help="expression in N and delta")
    sp.add_argument("--Delta-exp", dest="Delta_exp")
    sp.add_argument("--c", type=float, default=1e-2)
    sp.add_argument("--audit-constant", type=float, default=10.0)

    sp = sub.add_parser("geom", help="non-degeneracy scan of library curves")
    common(sp)
    sp.add_argument("--curve", action="append", help="library curve name (repeatable; default: all)")
    sp.add_argument("--library", help="curve library JSON (default: built-in)")
    sp.add_argument("--grid", type=int, default=8)
    sp.add_argument("--h", type=float, default=1e-4, help="finite-difference step")

    sp = sub.add_parser("mc-check", help="Monte Carlo moment against the exact count")
    common(sp)
    system_args(sp)
    sp.add_argument("--N", type=int)
    sp.add_argument("--samples", type=int, default=200_000)
    sp.add_argument("--seed", type=int, default=0)
    return p


_OVERRIDE_KEYS = ("delta_exp", "Delta", "Delta_exp", "lambda_exp", "window_constant", "ladder", "N", "seed")


def config_from_args(args) -> RunConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if getattr(args, k, None) is not None}
    skip = set(_OVERRIDE_KEYS) | {"command", "preset", "spec", "output", "csv", "cache_dir", "workers", "budget", "verbose"}
    options = {k: v for k, v in vars(args).items() if k not in skip}
    return RunConfig(
        command=args.command,
        preset=getattr(args, "preset", None),
        spec=getattr(args, "spec", None),
        overrides=overrides,
        output=args.output,
        csv=getattr(args, "csv", None),
        cache_dir=args.cache_dir,
        workers=args.workers,
        budget=args.budget,
        options=options,
    )


# --- resolving systems -------------------------------------------------------------


def _preset_overrides(cfg: RunConfig, preset) -> dict:
    o = cfg.overrides
    given = {}
    if "delta_exp" in o:
        given["delta"] = o["delta_exp"]
    if "Delta" in o and "Delta_exp" in o:
        raise PreconditionError("give either --Delta or --Delta-exp, not both")
    if "Delta" in o:
        given["Delta"] = o["Delta"]
    if "Delta_exp" in o:
        given["Delta"] = o["Delta_exp"]
    if "lambda_exp" in o:
        given["lambda"] = o["lambda_exp"]
    return given


def _source(cfg: RunConfig):
    """(name, citation, build(N) -> system, params(N), claimed, spec_for(N) or None)."""
    wc = cfg.overrides.get("window_constant")
    if cfg.preset and cfg.spec:
        raise PreconditionError("give either --preset or --spec, not both")
    if cfg.preset:
        P = get_preset(cfg.preset)
        rules = P.rules(_preset_overrides(cfg, P))
        c = 1.0 if wc is None else wc
        return {
            "name": cfg.preset,
            "citation": P.citation,
            "rules": {k: str(r) for k, r in rules.items()},
            "build": lambda N: P.system(N, rules, c),
            "params": lambda N: P.resolve(N, rules),
            "claimed": P.claimed_exponent(64, rules),
            "spec": lambda N: P.moment_spec(N, rules),
            "ladder": list(P.default_ladder),
        }
    if cfg.spec:
        for k in ("delta_exp", "Delta", "Delta_exp", "lambda_exp"):
            if k in cfg.overrides:
                raise PreconditionError(f"--{k.replace('_', '-')} only applies to presets")
        spec, c_file = load_spec(cfg.spec)
        c = c_file if wc is None else wc

        def spec_at(N):
            if N == spec.N:
                return spec
            if spec.range != Interval.dyadic(spec.N):
                raise PreconditionError("a spec file with an explicit range fixes N")
            return replace(spec, N=N, range=None)

        return {
            "name": Path(cfg.spec).name,
            "citation": "",
            "rules": {},
            "build": lambda N: spec_to_system(spec_at(N), c),
            "params": lambda N: {},
            "claimed": None,
            "spec": spec_at,
            "ladder": [],
            "N": spec.N,
        }
    raise PreconditionError("one of --preset or --spec is required")


def _n(cfg: RunConfig, src) -> int:
    N = cfg.overrides.get("N", src.get("N"))
    if N is None:
        raise PreconditionError("--N is required")
    return int(N)


# --- commands ----------------------------------------------------------------------


def _cmd_count(cfg: RunConfig) -> tuple:
    src = _source(cfg)
    N = _n(cfg, src)
    system = src["build"](N)
    res = count(system, cfg.counter_config())
    report = {
        "preset": src["name"],
        "citation": src["citation"],
        "parameters": src["rules"],
        "N": N,
        "resolved": src["params"](N),
        "system": system.to_dict(),
        "count": res.count,
        "engine": res.engine,
        "enumerated_multisets": res.enumerated_multisets,
        "cache_hit": res.cache_hit,
    }
    return report, EXIT_OK, {"wall_time": res.wall_time}


def _parse_band(text: str) -> tuple:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise PreconditionError(f"--band must be 'below,above', got {text!r}") from None
    return lo, hi


def _ladder_report(cfg, name, citation, rules, build, params, claimed, ladder) -> tuple:
    template = Template(name, build, params, claimed, citation)
    t0 = time.perf_counter()
    fit = run_ladder(template, ladder, cfg.counter_config())
    verdicts = []
    if claimed is not None:
        verdicts.append(check_bound(fit, claimed, _parse_band(cfg.options.get("band") or "1.0,0.35")))
    report = {
        "template": name,
        "citation": citation,
        "parameters": rules,
        "systems": {str(p.N): build(p.N).to_dict() for p in fit.points},
        **fit.to_dict(),
        "verdicts": [v.to_dict() for v in verdicts],
    }
    code = EXIT_VIOLATED if any(v.verdict == "violated" for v in verdicts) else EXIT_OK
    if cfg.csv:
        Path(cfg.csv).write_text(ladder_csv(fit))
    return report, code, {"wall_time": time.perf_counter() - t0}


def _cmd_ladder(cfg: RunConfig) -> tuple:
    src = _source(cfg)
    ladder = cfg.overrides.get("ladder") or src["ladder"]
    if not ladder:
        raise PreconditionError("--ladder is required")
    claimed = src["claimed"]
    if cfg.options.get("claimed") is not None:
        claimed = as_rational(cfg.options["claimed"])
    return _ladder_report(cfg, src["name"], src["citation"], src["rules"], src["build"], src["params"], claimed, ladder)


def _cmd_bilinear(cfg: RunConfig) -> tuple:
    cfg.preset = "bilinear-n3"
    src = _source(cfg)
    ladder = cfg.overrides.get("ladder") or [16, 32, 64]
    return _ladder_report(cfg, src["name"], src["citation"], {}, src["build"], src["params"], src["claimed"], ladder)


def _sigma(text: str) -> Fraction:
    if text in SIGMA_PRESETS:
        return SIGMA_PRESETS[text]
    return as_rational(text)


def _cmd_weyl(cfg: RunConfig) -> tuple:
    o = cfg.options
    N = cfg.overrides["N"]
    sigma = _sigma(o["sigma"])
    f = weyl_sum(o["a"], o["q"], N, o["k"])
    rhs = weyl_bound_rhs(o["a"], o["q"], N, sigma)
    report = {
        "a": o["a"],
        "q": o["q"],
        "N": N,
        "k": o["k"],
        "sigma": str(sigma),
        "value": [f.real, f.imag],
        "abs": abs(f),
        "bound_rhs": rhs,
        "ratio": abs(f) / rhs,
    }
    return report, EXIT_OK, {}


def _cmd_vdc(cfg: RunConfig) -> tuple:
    o = cfg.options
    N = cfg.overrides.get("N")
    if o.get("coefficient") is not None:
        coef = o["coefficient"]
    else:
        coef = power_of(N, -as_rational(cfg.overrides["delta_exp"]))
    phase = [Monomial(coef, as_rational(o["power"]), True)] if coef else []
    rep = vdc_check(phase, o["D"], N, o["audit_constant"])
    report = {"N": N, "D": o["D"], "coefficient": coef, "power": o["power"], **rep.to_dict()}
    return report, EXIT_OK, {}


def _resolve_delta(cfg: RunConfig, N: int) -> tuple:
    o = cfg.overrides
    delta = power_of(N, as_rational(o["delta_exp"]))
    if "Delta" in o and "Delta_exp" in o:
        raise PreconditionError("give either --Delta or --Delta-exp, not both")
    if "Delta_exp" in o:
        Delta = power_of(N, as_rational(o["Delta_exp"]))
    elif "Delta" in o:
        Delta = eval_param_expr(o["Delta"], {"N": N, "delta": delta})
    else:
        raise PreconditionError("--Delta or --Delta-exp is required")
    return delta, Delta


def _cmd_interchange(cfg: RunConfig) -> tuple:
    N = cfg.overrides["N"]
    delta, Delta = _resolve_delta(cfg, N)
    o = cfg.options
    rep = interchange_check(N, delta, Delta, o["T"], o["C"], o["audit_constant"], cfg.counter_config())
    return rep, EXIT_OK, {}


def _cmd_lowerbound(cfg: RunConfig) -> tuple:
    N = cfg.overrides["N"]
    delta, Delta = _resolve_delta(cfg, N)
    o = cfg.options
    rep = lower_bound_check(N, delta, Delta, o["c"], o["audit_constant"], cfg.counter_config())
    return rep, EXIT_OK, {}


def _cmd_geom(cfg: RunConfig) -> tuple:
    o = cfg.options
    lib = load_curve_library(o.get("library"))
    names = o.get("curve") or list(lib)
    out = []
    for name in names:
        if name not in lib:
            raise PreconditionError(f"unknown curve {name!r}; library has {', '.join(lib)}")
        curve, expected = lib[name]
        rep = nondegeneracy_scan(curve, o["grid"]).to_dict()
        rep["expected_degenerate"] = expected
        rep["classified_correctly"] = rep["degenerate"] == expected
        if not rep["degenerate"]:
            t = [(a + b) / 2 for a, b in curve.sub_intervals]
            rep["quadratic_fit"] = quadratic_fit_check(curve, t, o["h"]).to_dict()
        out.append(rep)
    return {"curves": out}, EXIT_OK, {}


def _cmd_mc(cfg: RunConfig) -> tuple:
    src = _source(cfg)
    N = _n(cfg, src)
    spec = src["spec"](N)
    system = src["build"](N)
    res = count(system, cfg.counter_config())
    seed = cfg.overrides.get("seed", 0)
    mc = mc_moment(spec, cfg.options["samples"], seed, workers=cfg.workers)
    exact_phases = all(t.exact for t in spec.terms)
    report = {
        "preset": src["name"],
        "N": N,
        "system": system.to_dict(),
        "count": res.count,
        "mc_mean": mc.mean,
        "mc_stderr": mc.stderr,
        "samples": mc.samples,
        "seed": seed,
        "z": (mc.mean - res.count) / mc.stderr if mc.stderr > 0 else math.inf,
        "ratio": mc.mean / res.count,
        "integer_phases": exact_phases,
    }
    return report, EXIT_OK, {}


_DISPATCH = {
    "count": _cmd_count,
    "ladder": _cmd_ladder,
    "bilinear": _cmd_bilinear,
    "weyl": _cmd_weyl,
    "vdc": _cmd_vdc,
    "interchange": _cmd_interchange,
    "lowerbound": _cmd_lowerbound,
    "geom": _cmd_geom,
    "mc-check": _cmd_mc,
}


def _emit(cfg: RunConfig, body: dict, meta: dict):
    report = {"report_version": REPORT_VERSION, "command": cfg.command, **body}
    report["metadata"] = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "mvtlab_version": __version__,
        **meta,
    }
    text = json.dumps(report, sort_keys=True, indent=2, default=str) + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)


def run(config: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    if config.command not in _DISPATCH:
        print(f"mvtlab: unknown command {config.command!r}", file=sys.stderr)
        return EXIT_PRECONDITION
    try:
        body, code, meta = _DISPATCH[config.command](config)
    except CapacityError as exc:
        print(f"mvtlab: capacity exceeded: {exc}", file=sys.stderr)
        if exc.partial:
            print(f"mvtlab: {len(exc.partial)} ladder point(s) completed before the failure", file=sys.stderr)
        return EXIT_CAPACITY
    except (PreconditionError, PrecisionError) as exc:
        print(f"mvtlab: precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (OSError, ValueError) as exc:
        print(f"mvtlab: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    _emit(config, body, meta)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
