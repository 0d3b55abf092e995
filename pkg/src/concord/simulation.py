"""Monte Carlo harness: estimate, standard-error and empirical-size tables.

Each replicate draws its sample from an independent Philox stream keyed by
``(seed, replicate index)``, so results do not depend on scheduling or
worker count. Aggregates use ``math.fsum`` and are order independent.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coefficients import L1, LIN
from .estimation import estimate_agreement, fit
from .inference import fit_lin_se, fit_rho_p_se, hotelling_t2, test_means
from .sampling import FAMILIES, ModelParams, replicate_rng, sample, scenario_sigma
from .ustat import ustat

log = logging.getLogger(__name__)

LEVEL = 0.05
FAILURE_LIMIT = 0.10
FIT_FAMILIES = ("gaussian", "laplace")
TESTS = ("score", "gradient", "wald", "lrt", "hotelling-t2")
PHIS = ("square", "abs")
SCENARIO_LABELS = {"gaussian": "a", "laplace": "b", "cauchy": "c", "contaminated-normal": "d"}
_FAILURES = (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError)


class CellFailedError(RuntimeError):
    """More than the allowed share of replicates failed."""

    def __init__(self, message: str, cell: "SimCell"):
        super().__init__(message)
        self.cell = cell


@dataclass(frozen=True)
class SimScenario:
    family: str
    m: int
    n: int
    replicates: int = 200
    seed: int = 0
    fits: tuple[str, ...] = FIT_FAMILIES
    epsilon: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.m not in (1, 2, 3):
            raise ValueError("m must be 1, 2 or 3")
        if self.n < 4:
            raise ValueError("n must be at least 4")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        fits = tuple(self.fits)
        if not fits or any(f not in FIT_FAMILIES for f in fits):
            raise ValueError(f"fits must be a non-empty subset of {FIT_FAMILIES}")
        object.__setattr__(self, "fits", fits)
        if self.family == "contaminated-normal" and (self.epsilon is None or self.eta is None):
            raise ValueError("contaminated-normal needs epsilon and eta")

    @property
    def label(self) -> str:
        return SCENARIO_LABELS[self.family]

    def params(self) -> ModelParams:
        cont = self.family == "contaminated-normal"
        return ModelParams(np.zeros(2), scenario_sigma(self.m), self.family,
                           self.epsilon if cont else None, self.eta if cont else None)


@dataclass
class SimCell:
    """Aggregated results of one scenario.

    ``estimates`` and ``standard_errors`` are keyed by ``(fit, statistic)``
    for ``statistic in {"rho_c", "rho_1"}`` and by ``("ustat", phi)`` for the
    U-statistics; ``sizes`` is keyed by ``(fit, test)``.
    """

    scenario: SimScenario
    estimates: dict = field(default_factory=dict)
    standard_errors: dict = field(default_factory=dict)
    sizes: dict = field(default_factory=dict)
    successes: int = 0
    failures: int = 0


def replicate(scenario: SimScenario, index: int) -> dict:
    """One replicate: a flat mapping of ``(kind, key, name) -> value``.

    ``kind`` is ``"est"``, ``"se"`` or ``"reject"``.
    """
    data = sample(scenario.params(), scenario.n, replicate_rng(scenario.seed, index))
    out = {}
    for family in scenario.fits:
        full = fit(data, family, False)
        restricted = fit(data, family, True)
        if not (full.converged and restricted.converged):
            raise RuntimeError(f"{family} fit did not converge")
        out["est", family, "rho_c"] = estimate_agreement(full, LIN).value
        out["se", family, "rho_c"] = fit_lin_se(full)
        out["est", family, "rho_1"] = estimate_agreement(full, L1).value
        out["se", family, "rho_1"] = fit_rho_p_se(full, 1)
        for t in test_means(data, (full, restricted)):
            out["reject", family, t.name] = float(t.p_value < LEVEL)
    t2 = hotelling_t2(data)
    for family in scenario.fits:
        out["reject", family, "hotelling-t2"] = float(t2.p_value < LEVEL)
    for phi in PHIS:
        u = ustat(data, phi)
        out["est", "ustat", phi] = u.rho_hat
        out["se", "ustat", phi] = u.se
    return out


def _safe_replicate(args):
    scenario, index = args
    try:
        return index, replicate(scenario, index)
    except _FAILURES as exc:
        return index, f"{type(exc).__name__}: {exc}"


def aggregate(scenario: SimScenario, results) -> SimCell:
    """Average per-replicate records (order independent)."""
    cell = SimCell(scenario)
    good = [r for _, r in sorted(results, key=lambda t: t[0]) if isinstance(r, dict)]
    cell.successes = len(good)
    cell.failures = scenario.replicates - len(good)
    if not good:
        return cell
    target = {"est": cell.estimates, "se": cell.standard_errors, "reject": cell.sizes}
    for key in good[0]:
        kind, a, b = key
        target[kind][a, b] = math.fsum(r[key] for r in good) / len(good)
    return cell


def run_scenario(scenario: SimScenario, workers: int = 1) -> SimCell:
    """Run all replicates of a scenario and aggregate them.

    Replicates raising a numerical error are counted as failures and skipped.
    Raises CellFailedError when more than 10% of replicates fail.
    """
    jobs = [(scenario, i) for i in range(scenario.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_replicate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_safe_replicate(j) for j in jobs]
    for index, r in results:
        if not isinstance(r, dict):
            log.info("replicate %d failed: %s", index, r)
    cell = aggregate(scenario, results)
    if cell.failures > FAILURE_LIMIT * scenario.replicates:
        raise CellFailedError(f"{cell.failures}/{scenario.replicates} replicates failed", cell)
    return cell


# ---------------------------------------------------------------------------
# tables

@dataclass(frozen=True)
class TableDocument:
    header: tuple[str, ...]
    rows: tuple[tuple, ...]

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow(["" if v is None else (f"{v:.6f}" if isinstance(v, float) else v) for v in row])
        return buf.getvalue()

    def text(self) -> str:
        cells = [list(self.header)] + [
            ["" if v is None else (f"{v:.3f}" if isinstance(v, float) else str(v)) for v in row]
            for row in self.rows
        ]
        widths = [max(len(r[j]) for r in cells) for j in range(len(self.header))]
        lines = ["  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in cells]
        lines.insert(1, "  ".join("-" * wd for wd in widths))
        return "\n".join(lines) + "\n"


def _grid(cells):
    by_key = {}
    for c in cells:
        s = c.scenario
        by_key[s.label, s.m, s.n] = c
    blocks = sorted({(s, m) for s, m, _ in by_key})
    ns = sorted({n for _, _, n in by_key})
    fits = [f for f in FIT_FAMILIES if any(f in c.scenario.fits for c in cells)]
    return by_key, blocks, ns, fits


def _lookup(by_key, key, getter):
    cell = by_key.get(key)
    if cell is None:
        return None
    return getter(cell)


def render_tables(cells, layout: str = "estimates") -> TableDocument:
    """Tabulate cells with rows (scenario, m, fitted model) and columns by n.

    ``estimates`` and ``standard-errors`` share one layout (rho_c, rho_1 and
    the U-statistic, with phi alternating between square and abs rows);
    ``sizes`` lists the five tests. Missing cells are left blank.
    """
    if layout not in ("estimates", "standard-errors", "sizes"):
        raise ValueError("layout must be estimates, standard-errors or sizes")
    cells = list(cells)
    by_key, blocks, ns, fits = _grid(cells)
    missing = sum(1 for s, m in blocks for n in ns if (s, m, n) not in by_key)
    if missing:
        log.warning("%d missing cells rendered as blanks", missing)

    def get(d, k):
        v = d.get(k)
        return None if v is None or not math.isfinite(v) else float(v)

    rows = []
    if layout == "sizes":
        header = ("scenario", "m", "fitted") + tuple(f"{t}_{n}" for t in TESTS for n in ns)
        for s, m in blocks:
            for f in fits:
                vals = [_lookup(by_key, (s, m, n), lambda c: get(c.sizes, (f, t))) for t in TESTS for n in ns]
                rows.append((s, m, f, *vals))
        return TableDocument(header, tuple(rows))

    attr = "estimates" if layout == "estimates" else "standard_errors"
    header = (("scenario", "m", "fitted") + tuple(f"rho_c_{n}" for n in ns) + tuple(f"rho_1_{n}" for n in ns)
              + ("phi",) + tuple(f"rho_phi_{n}" for n in ns))
    for s, m in blocks:
        for i, f in enumerate(fits):
            phi = PHIS[i % 2]
            vals = []
            for stat in ("rho_c", "rho_1"):
                vals += [_lookup(by_key, (s, m, n), lambda c: get(getattr(c, attr), (f, stat))) for n in ns]
            vals.append(phi)
            vals += [_lookup(by_key, (s, m, n), lambda c: get(getattr(c, attr), ("ustat", phi))) for n in ns]
            rows.append((s, m, f, *vals))
    return TableDocument(header, tuple(rows))


# ---------------------------------------------------------------------------
# configuration

def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def read_config(path_or_text: str, from_text: bool = False) -> list[SimScenario]:
    """Read scenarios from an INI-style file.

    Each section describes one scenario; ``m`` and ``n`` may be
    comma-separated lists and expand to a grid. Keys: family, m, n,
    epsilon, eta, replicates, seed, fits.
    """
    parser = configparser.ConfigParser()
    if from_text:
        parser.read_string(path_or_text)
    else:
        with open(path_or_text, encoding="utf-8") as fh:
            parser.read_file(fh)
    known = {"family", "m", "n", "epsilon", "eta", "replicates", "seed", "fits"}
    out = []
    for name in parser.sections():
        sec = parser[name]
        unknown = set(sec) - known
        if unknown:
            raise ValueError(f"[{name}] unknown keys: {sorted(unknown)}")
        fits = tuple(f.strip() for f in sec.get("fits", ",".join(FIT_FAMILIES)).split(",") if f.strip())
        eps = sec.getfloat("epsilon") if "epsilon" in sec else None
        eta = sec.getfloat("eta") if "eta" in sec else None
        for m in _ints(sec.get("m", "1,2,3")):
            for n in _ints(sec.get("n", "25,100,400")):
                out.append(SimScenario(
                    family=sec.get("family", "gaussian"),
                    m=m,
                    n=n,
                    replicates=sec.getint("replicates", 200),
                    seed=sec.getint("seed", 0),
                    fits=fits,
                    epsilon=eps,
                    eta=eta,
                ))
    return out
