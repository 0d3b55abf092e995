"""Command-line interface: ``concord <command> [options]``.

Commands: agree, fit, test-means, gof, ustat, simulate. Results are
computed in full before anything is written; on failure a JSON error
object is printed and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .coefficients import CoefficientKind
from .estimation import ModelFit, estimate_agreement, fit
from .gof import gof_report
from .inference import bootstrap_se, fit_lin_se, fit_rho_p_se, hotelling_t2, mean_equality_tests, test_means
from .sampling import BivariateSample
from .simulation import CellFailedError, SimScenario, read_config, render_tables, run_scenario
from .ustat import ustat

log = logging.getLogger("concord")

SEED_ENV = "CONCORD_SEED"
COMMANDS = ("agree", "fit", "test-means", "gof", "ustat", "simulate")


class InputError(ValueError):
    pass


@dataclass
class Ingested:
    sample: BivariateSample
    dropped: int


# ---------------------------------------------------------------------------
# input

def _resolve(header: list[str], selector: str) -> int:
    if selector in header:
        return header.index(selector)
    try:
        idx = int(selector)
    except ValueError:
        raise InputError(f"unknown column {selector!r}; header is {header}") from None
    if not 0 <= idx < len(header):
        raise InputError(f"column index {idx} out of range")
    return idx


def ingest_csv(path: str, selectors=(0, 1), min_rows: int = 3, transform: str = "none") -> Ingested:
    """Read two columns of a CSV file with a header row.

    Selectors are column names or 0-based indices. Rows whose selected
    entries are missing or non-numeric are dropped and counted.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    i, j = (_resolve(header, str(s)) for s in selectors)
    x1, x2, dropped = [], [], 0
    for row in rows[1:]:
        if not row:
            continue
        try:
            a, b = float(row[i]), float(row[j])
        except (IndexError, ValueError):
            dropped += 1
            continue
        if not (math.isfinite(a) and math.isfinite(b)):
            dropped += 1
            continue
        x1.append(a)
        x2.append(b)
    if dropped:
        log.warning("dropped %d malformed row(s) from %s", dropped, path)
    if len(x1) < min_rows:
        raise InputError(f"need at least {min_rows} usable rows, found {len(x1)}")
    x1, x2 = np.array(x1), np.array(x2)
    if transform == "log":
        if np.any(x1 <= 0) or np.any(x2 <= 0):
            raise InputError("log transform needs positive values")
        x1, x2 = np.log(x1), np.log(x2)
    elif transform != "none":
        raise InputError(f"unknown transform {transform!r}")
    return Ingested(BivariateSample(x1, x2, (header[i], header[j])), dropped)


# ---------------------------------------------------------------------------
# output

def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def to_json(payload: dict) -> str:
    # json uses repr for floats: shortest string that round-trips exactly
    return json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for v in r])
    return buf.getvalue()


def _text(header, rows) -> str:
    cells = [list(map(str, header))] + [
        ["" if v is None else (f"{v:.4f}" if isinstance(v, (float, np.floating)) else str(v)) for v in r] for r in rows
    ]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells) + "\n"


def _render(fmt: str, payload: dict, header, rows) -> str:
    if fmt == "json":
        return to_json(payload)
    if fmt == "csv":
        return _csv(header, rows)
    return _text(header, rows)


def _meta(args, **extra) -> dict:
    meta = {"version": __version__, "command": args.command, "seed": args.seed}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# commands

def _fit_summary(f: ModelFit) -> dict:
    cov = f.reported_covariance()
    return {
        "family": f.family,
        "constrained": f.constrained,
        "mu1": f.mu[0],
        "mu2": f.mu[1],
        "cov11": cov[0, 0],
        "cov12": cov[0, 1],
        "cov22": cov[1, 1],
        "loglik": f.loglik,
        "lambda": f.lam,
        "iterations": f.iterations,
        "converged": f.converged,
        "weight_rule": f.weight_rule,
        "n": f.n,
    }


def _fit_pair(sample, args):
    return (fit(sample, args.family, False, weights=args.weights),
            fit(sample, args.family, True, weights=args.weights))


def _asymptotic_se(f: ModelFit, kind: CoefficientKind) -> float:
    if kind.tag == "lin" or (kind.tag == "lp" and kind.p == 2):
        return fit_lin_se(f)
    if kind.tag == "l1":
        return fit_rho_p_se(f, 1)
    if kind.tag == "lp":
        return fit_rho_p_se(f, kind.p)
    raise ValueError(f"no asymptotic SE for {kind.name}; use --se-method bootstrap")


def cmd_agree(args, ing: Ingested) -> tuple[dict, list, list]:
    sample = ing.sample
    kinds = [CoefficientKind.parse(c) for c in args.coefficient]
    header = ["coefficient", "constrained", "estimate", "se", "se_method"]
    constraints = (True,) if args.constrained else (False, True)

    if np.array_equal(sample.x1, sample.x2):
        results = [
            {"coefficient": k.name, "constrained": c, "estimate": 1.0, "se": 0.0, "se_method": "degenerate"}
            for k in kinds for c in constraints
        ]
        payload = {"meta": _meta(args, n=sample.n, dropped_rows=ing.dropped, family=args.family,
                                 note="identical columns: perfect agreement"), "results": results}
        return payload, header, [[r[h] for h in header] for r in results]

    fits = dict(zip((False, True), _fit_pair(sample, args)))
    lrt = next(t for t in test_means(sample, (fits[False], fits[True])) if t.name == "lrt")
    rejects = lrt.p_value < 0.05
    warnings = []
    if rejects and True in constraints:
        warnings.append(f"mean equality rejected at 5% (LRT p = {lrt.p_value:.4g}); "
                        "equal-means estimates may be inappropriate")
        log.warning(warnings[-1])

    results = []
    for kind in kinds:
        for c in constraints:
            f = fits[c]
            est = estimate_agreement(f, kind).value
            method = args.se_method
            if method == "auto":
                method = "asymptotic" if (c and kind.tag != "scaled-phi") else "bootstrap"
            extra = {}
            if method == "asymptotic":
                se = _asymptotic_se(f, kind)
            else:
                def estimator(s, kind=kind, c=c):
                    return estimate_agreement(fit(s, args.family, c, weights=args.weights), kind).value

                boot = bootstrap_se(sample, estimator, B=args.B, seed=args.seed)
                se = boot.se
                extra = {"B": args.B, "redraws": boot.redraws}
            results.append({"coefficient": kind.name, "constrained": c, "estimate": est, "se": se,
                            "se_method": method, **extra})
    payload = {
        "meta": _meta(args, n=sample.n, dropped_rows=ing.dropped, family=args.family, weights=args.weights,
                      converged={"unconstrained": fits[False].converged, "constrained": fits[True].converged},
                      lrt_p_value=lrt.p_value, warnings=warnings),
        "results": results,
    }
    return payload, header, [[r[h] for h in header] for r in results]


def cmd_fit(args, ing: Ingested):
    sample = ing.sample
    fits = [fit(sample, args.family, args.constrained, weights=args.weights)]
    summaries = [_fit_summary(f) for f in fits]
    header = list(summaries[0])
    payload = {"meta": _meta(args, n=sample.n, dropped_rows=ing.dropped), "fits": summaries}
    return payload, header, [[s[h] for h in header] for s in summaries]


def cmd_test_means(args, ing: Ingested):
    sample = ing.sample
    converged = None
    if np.array_equal(sample.x1, sample.x2):
        tests = mean_equality_tests(sample, args.family, weights=args.weights)
    else:
        full, restricted = _fit_pair(sample, args)
        tests = test_means(sample, (full, restricted)) + [hotelling_t2(sample)]
        converged = {"unconstrained": full.converged, "constrained": restricted.converged}
    results = [{"test": t.name, "statistic": t.statistic, "df": t.df, "p_value": t.p_value} for t in tests]
    header = ["test", "statistic", "df", "p_value"]
    payload = {
        "meta": _meta(args, n=sample.n, dropped_rows=ing.dropped, family=args.family, weights=args.weights,
                      converged=converged),
        "results": results,
    }
    return payload, header, [[r[h] for h in header] for r in results]


def cmd_gof(args, ing: Ingested):
    sample = ing.sample
    f = fit(sample, args.family, args.constrained, weights=args.weights)
    if not f.converged:
        raise RuntimeError("fit did not converge")
    rep = gof_report(sample, f, envelope_sims=args.envelope_sims, seed=args.seed)
    header = ["index", "sorted_z", "theoretical_quantile", "band_lower", "band_median", "band_upper"]
    rows = [list(r) for r in rep.rows()]
    payload = {
        "meta": _meta(args, n=sample.n, dropped_rows=ing.dropped, family=args.family,
                      envelope_sims=args.envelope_sims, converged=f.converged),
        "jarque_bera": {"statistic": rep.jarque_bera.statistic, "df": rep.jarque_bera.df,
                        "p_value": rep.jarque_bera.p_value},
        "outlier_threshold": rep.threshold,
        "outliers": [int(i) + 1 for i in rep.outliers],
        "envelope": [dict(zip(header, r)) for r in rows],
    }
    return payload, header, rows


def cmd_ustat(args, ing: Ingested):
    sample = ing.sample
    results = []
    for phi in args.phi:
        u = ustat(sample, phi, args.variance)
        results.append({"phi": phi, "estimate": u.rho_hat, "se": u.se, "u1": u.u1, "u2": u.u2,
                        "variance_method": args.variance})
    header = list(results[0])
    payload = {"meta": _meta(args, n=sample.n, dropped_rows=ing.dropped), "results": results}
    return payload, header, [[r[h] for h in header] for r in results]


def _scenarios(args) -> list[SimScenario]:
    if args.config:
        scenarios = read_config(args.config)
        if args.replicates is not None:
            scenarios = [SimScenario(s.family, s.m, s.n, args.replicates, s.seed, s.fits, s.epsilon, s.eta)
                         for s in scenarios]
        return scenarios
    return [
        SimScenario(args.scenario, m, n, args.replicates or 200, args.seed, tuple(args.fits),
                    args.epsilon, args.eta)
        for m in args.m for n in args.n
    ]


def cmd_simulate(args, _ing=None):
    cells = []
    failed = []
    for sc in _scenarios(args):
        try:
            cells.append(run_scenario(sc, workers=args.workers))
        except CellFailedError as exc:
            log.warning("cell %s m=%d n=%d failed: %s", sc.family, sc.m, sc.n, exc)
            failed.append({"family": sc.family, "m": sc.m, "n": sc.n, "reason": str(exc)})
    table = render_tables(cells, args.layout)
    payload = {
        "meta": _meta(args, layout=args.layout, failed_cells=failed,
                      replicate_failures=sum(c.failures for c in cells)),
        "header": list(table.header),
        "rows": [list(r) for r in table.rows],
    }
    if args.format == "text":
        return payload, None, table.text()
    if args.format == "csv":
        return payload, None, table.csv()
    return payload, list(table.header), [list(r) for r in table.rows]


HANDLERS = {
    "agree": cmd_agree,
    "fit": cmd_fit,
    "test-means": cmd_test_means,
    "gof": cmd_gof,
    "ustat": cmd_ustat,
    "simulate": cmd_simulate,
}


# ---------------------------------------------------------------------------
# parser

def _default_seed() -> int:
    value = os.environ.get(SEED_ENV)
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {value!r}")


def _add_common(p: argparse.ArgumentParser, data: bool = True):
    if data:
        p.add_argument("--input", "-i", required=True, help="CSV file with a header row")
        p.add_argument("--columns", default="0,1",
                       help="two column names or 0-based indices, comma separated (default: 0,1)")
        p.add_argument("--transform", choices=("none", "log"), default="none",
                       help="transform applied to both columns after reading")
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")
    p.add_argument("--output", "-o", help="write to this file instead of stdout")


def _add_model(p: argparse.ArgumentParser, constrained_help: str):
    p.add_argument("--family", choices=("gaussian", "laplace"), default="gaussian")
    p.add_argument("--constrained", action="store_true", help=constrained_help)
    p.add_argument("--weights", choices=("exact", "bessel"), default="exact",
                   help="Laplace E-step weight rule (default: exact)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="concord", description="Agreement coefficients for paired measurements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("agree", help="agreement coefficients with standard errors")
    _add_common(p)
    _add_model(p, "report only the equal-means fit")
    p.add_argument("--coefficient", action="append",
                   help="lin, l1, lp:P or scaled-phi:abs|square; repeatable (default: lin and l1)")
    p.add_argument("--se-method", choices=("auto", "asymptotic", "bootstrap"), default="auto",
                   help="auto: asymptotic for equal-means fits, bootstrap otherwise")
    p.add_argument("--B", type=int, default=1000, help="bootstrap resamples")

    p = sub.add_parser("fit", help="ML fit summary")
    _add_common(p)
    _add_model(p, "fit under mu1 = mu2")

    p = sub.add_parser("test-means", help="tests of mu1 = mu2")
    _add_common(p)
    _add_model(p, argparse.SUPPRESS)

    p = sub.add_parser("gof", help="distance diagnostics and QQ envelope")
    _add_common(p)
    _add_model(p, "fit under mu1 = mu2")
    p.add_argument("--envelope-sims", type=int, default=100)

    p = sub.add_parser("ustat", help="U-statistic coefficient")
    _add_common(p)
    p.add_argument("--phi", action="append", choices=("abs", "square"), help="repeatable (default: abs)")
    p.add_argument("--variance", choices=("projection", "jackknife"), default="projection")

    p = sub.add_parser("simulate", help="Monte Carlo tables")
    _add_common(p, data=False)
    p.add_argument("--config", help="INI file with one section per scenario")
    p.add_argument("--scenario", choices=("gaussian", "laplace", "cauchy", "contaminated-normal"),
                   default="gaussian", help="data-generating family")
    p.add_argument("--m", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--n", type=int, nargs="+", default=[25, 100, 400])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--fits", nargs="+", choices=("gaussian", "laplace"), default=["gaussian", "laplace"])
    p.add_argument("--replicates", type=int, help="replicates per cell (default 200)")
    p.add_argument("--layout", choices=("estimates", "standard-errors", "sizes"), default="estimates")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _finish_args(args):
    if args.seed is None:
        args.seed = _default_seed()
    if args.command == "agree":
        args.coefficient = args.coefficient or ["lin", "l1"]
        if args.B < 100:
            raise InputError("--B must be at least 100")
    if args.command == "ustat":
        args.phi = args.phi or ["abs"]
    if args.command == "gof" and args.envelope_sims < 19:
        raise InputError("--envelope-sims must be at least 19")
    return args


def run_command(args) -> tuple[int, str]:
    """Execute a parsed command. Returns ``(exit status, output text)``."""
    try:
        args = _finish_args(args)
        ing = None
        if args.command != "simulate":
            cols = [c.strip() for c in args.columns.split(",")]
            if len(cols) != 2:
                raise InputError("--columns needs exactly two selectors")
            min_rows = 2 if args.command == "agree" else 3
            ing = ingest_csv(args.input, cols, min_rows=min_rows, transform=args.transform)
        payload, header, rows = HANDLERS[args.command](args, ing)
        if header is None:
            text = rows if args.format != "json" else to_json(payload)
        else:
            text = _render(args.format, payload, header, rows)
        return 0, text
    except Exception as exc:  # every module failure becomes a structured error
        log.debug("command failed", exc_info=True)
        err = {"error": {"type": type(exc).__name__, "message": str(exc), "command": args.command}}
        return 1, to_json(err)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="concord: %(levelname)s: %(message)s")
    status, text = run_command(args)
    if status != 0:
        err = json.loads(text)["error"]
        sys.stderr.write(f"concord: error: {err['type']}: {err['message']}\n")
        sys.stdout.write(text)
        return status
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
