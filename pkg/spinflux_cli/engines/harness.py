"""
Experiment harness
──────────────────
run_certification   validators, reciprocity / Lax / hyperbolicity residuals and
                    S″ positivity over an admissible grid, folded into one report
run_convergence     KMC replicas against the PDE solution, per lattice size:
                    block-averaged L1 errors and test-function pairings

The monotone-decrease verdict of a convergence study is an engineering proxy:
  l1[k+1] − l1[k] ≤ 1.5 · sqrt(se[k]² + se[k+1]²)   per component.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from spinflux_cli.config import get_settings
from spinflux_cli.engines.builtins import builtin_parameters
from spinflux_cli.engines.flux import certify_grid
from spinflux_cli.engines.fv import ModelFluxEvaluator, Profile, closed_form_evaluator, solve
from spinflux_cli.engines.kmc import block_average, run_replicas
from spinflux_cli.engines.model import (
    SpinModel,
    ValidationReport,
    check_irreducibility,
    validate_conservation,
    validate_rate_cycle,
    validate_reflection,
    validate_stationarity,
)
from spinflux_cli.engines.thermo import admissible_hull
from spinflux_cli.errors import BadBlockSize, PostShockRefusal, SchemaError, SpinfluxError
from spinflux_cli.profiles import parse_profile

logger = logging.getLogger(__name__)

BUILTIN_NAMES = ("leroux", "bricklayer")
MONOTONE_BAND = 1.5
SHOCK_FACTOR = 10.0


# ─── block sizes ────────────────────────────────────────────────────────────

def nearest_divisor(n: int, target: float) -> int:
    divisors = [d for d in range(1, n + 1) if n % d == 0]
    return min(divisors, key=lambda d: (abs(d - target), d))


def block_size(rule: str, n_sites: int) -> int:
    """'sqrt', 'power:<alpha>' or an integer, rounded to the nearest divisor of N."""
    rule = str(rule).strip()
    if rule == "sqrt":
        target = math.sqrt(n_sites)
    elif rule.startswith("power:"):
        try:
            alpha = float(rule.split(":", 1)[1])
        except ValueError:
            raise BadBlockSize(f"Bad block rule '{rule}'") from None
        if not 0.0 <= alpha <= 1.0:
            raise BadBlockSize(f"Block exponent {alpha} must lie in [0, 1]")
        target = n_sites ** alpha
    else:
        try:
            target = int(rule)
        except ValueError:
            raise BadBlockSize(f"Bad block rule '{rule}'") from None
        if target < 1:
            raise BadBlockSize(f"Block size {target} must be positive")
    return nearest_divisor(n_sites, target)


# ─── experiment description ─────────────────────────────────────────────────

@dataclass(frozen=True)
class ExperimentSpec:
    model: SpinModel
    initial: str
    t: float
    sizes: tuple[int, ...]
    model_ref: str = "custom"
    parameters: dict = field(default_factory=dict)
    block: str = "sqrt"
    replicas: int = 8
    seed: int = 0
    pde_cells: int = 1024
    cfl: float = 0.45
    rows_path: Path | None = None
    summary_path: Path | None = None

    def __post_init__(self):
        if not self.t > 0:
            raise SchemaError("t", "macroscopic time must be positive")
        if not self.sizes or any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise SchemaError("sizes", "lattice sizes must be strictly increasing")
        if any(n < 3 for n in self.sizes):
            raise SchemaError("sizes", "lattice sizes must be at least 3")
        if self.replicas < 1:
            raise SchemaError("replicas", "at least one replica is required")
        for n in self.sizes:
            block_size(self.block, n)

    def block_size(self, n_sites: int) -> int:
        return block_size(self.block, n_sites)


@dataclass(frozen=True)
class ConvergenceRow:
    n_sites: int
    block: int
    replicas: int
    l1_error: tuple[float, ...]
    l1_stderr: tuple[float, ...]
    test_function_errors: tuple[tuple[str, int, float], ...]
    mass_conserved: bool = True

    def to_dict(self) -> dict:
        return {
            "N": self.n_sites,
            "l": self.block,
            "replicas": self.replicas,
            "l1_error": list(self.l1_error),
            "l1_stderr": list(self.l1_stderr),
            "test_function_errors": [list(e) for e in self.test_function_errors],
            "mass_conserved": self.mass_conserved,
        }


@dataclass
class ConvergenceResult:
    model: str
    t: float
    rows: list[ConvergenceRow]
    entropy_drop: float
    pde_mass_drift: float

    @property
    def monotone_decrease(self) -> bool:
        return monotone_decrease(self.rows)

    def summary(self) -> dict:
        return {
            "model": self.model,
            "t": self.t,
            "rows": [row.to_dict() for row in self.rows],
            "monotone_decrease": self.monotone_decrease,
            "monotone_rule": f"engineering proxy: l1[k+1] - l1[k] <= {MONOTONE_BAND} * replica noise",
            "entropy_drop": self.entropy_drop,
            "pde_mass_drift": self.pde_mass_drift,
        }


def monotone_decrease(rows: list[ConvergenceRow]) -> bool:
    for prev, nxt in zip(rows, rows[1:]):
        for a, b, sa, sb in zip(prev.l1_error, nxt.l1_error, prev.l1_stderr, nxt.l1_stderr):
            if b - a > MONOTONE_BAND * math.hypot(sa, sb):
                return False
    return True


# ─── comparison helpers ─────────────────────────────────────────────────────

TEST_FUNCTIONS = {
    "1": (lambda x: np.ones_like(x), lambda x: x),
    "sin": (lambda x: np.sin(2 * np.pi * x), lambda x: -np.cos(2 * np.pi * x) / (2 * np.pi)),
    "cos": (lambda x: np.cos(2 * np.pi * x), lambda x: np.sin(2 * np.pi * x) / (2 * np.pi)),
}


def coarse_averages(profile: Profile, n_blocks: int) -> np.ndarray:
    """Averages of a piecewise-constant profile over n_blocks equal blocks."""
    edges = np.arange(profile.n_cells + 1) / profile.n_cells
    primitive = np.vstack([np.zeros(profile.values.shape[1]), np.cumsum(profile.values * profile.dx, axis=0)])
    block_edges = np.arange(n_blocks + 1) / n_blocks
    integral = np.column_stack([np.interp(block_edges, edges, primitive[:, i]) for i in range(primitive.shape[1])])
    return np.diff(integral, axis=0) * n_blocks


def pde_pairing(profile: Profile, name: str) -> np.ndarray:
    """∫ g u dx for a piecewise-constant profile, exact per cell."""
    _, primitive = TEST_FUNCTIONS[name]
    edges = np.arange(profile.n_cells + 1) / profile.n_cells
    weights = np.diff(primitive(edges))
    return weights @ profile.values


def lattice_pairing(xi_values: np.ndarray, name: str) -> np.ndarray:
    """(1/N) Σ_j g(j/N) ξ_j."""
    g, _ = TEST_FUNCTIONS[name]
    N = xi_values.shape[0]
    return g(np.arange(N) / N) @ xi_values / N


def flux_for(spec: ExperimentSpec):
    if spec.model_ref in BUILTIN_NAMES:
        return closed_form_evaluator(spec.model_ref, spec.parameters or builtin_parameters(spec.model_ref))
    return ModelFluxEvaluator(spec.model)


# ─── convergence study ──────────────────────────────────────────────────────

def run_convergence(spec: ExperimentSpec, profile=None,
                    on_row: Callable[[ConvergenceRow], None] | None = None) -> ConvergenceResult:
    """
    `profile` is the parsed initial profile (callable on x with cell_averages),
    parsed from spec.initial when omitted;
    each finished row is handed to on_row before the next size starts.
    """
    model = spec.model
    profile = profile if profile is not None else parse_profile(spec.initial, model.n_cons)
    initial = Profile(profile.cell_averages(spec.pde_cells))
    trajectory = solve(flux_for(spec), initial, spec.t, cfl=spec.cfl)
    final = trajectory.snapshots[-1]

    entropy = np.array([value for _, value in trajectory.entropy_series])
    drop = float(entropy[0] - entropy.min())
    if drop > SHOCK_FACTOR * initial.dx:
        logger.warning("entropy functional dropped by %.3g over [0, %g]; refusing a post-shock comparison",
                       drop, spec.t)
        raise PostShockRefusal(f"PDE entropy dropped by {drop:.3g} > {SHOCK_FACTOR:g}·Δx; t={spec.t} is past the first shock")
    mass_drift = float(np.max(np.abs(final.mean() - initial.mean())))

    rows = []
    for N in spec.sizes:
        l = spec.block_size(N)
        configs = run_replicas(model, profile, N, spec.t, spec.replicas, [spec.seed, N])
        reference = coarse_averages(final, N // l)
        l1 = []
        pairings = {name: [] for name in TEST_FUNCTIONS}
        mass_ok = True
        for config in configs:
            empirical = block_average(config, l)
            l1.append(np.sum(np.abs(empirical.values - reference), axis=0) * (l / N))
            xi_values = model.xi[config.omega].astype(float)
            for name in TEST_FUNCTIONS:
                pairings[name].append(np.abs(lattice_pairing(xi_values, name) - pde_pairing(final, name)))
            mass_ok &= bool(np.array_equal(config.totals, config.recomputed_totals()))
        l1 = np.array(l1)
        stderr = l1.std(axis=0, ddof=1) / math.sqrt(len(l1)) if len(l1) > 1 else np.zeros(l1.shape[1])
        errors = tuple(
            (name, i, float(np.mean(np.array(values)[:, i])))
            for name, values in pairings.items() for i in range(model.n_cons)
        )
        row = ConvergenceRow(N, l, spec.replicas, tuple(l1.mean(axis=0).tolist()), tuple(stderr.tolist()),
                             errors, mass_ok)
        logger.info("N=%d l=%d l1=%s", N, l, np.round(l1.mean(axis=0), 5).tolist())
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return ConvergenceResult(model.name, spec.t, rows, drop, mass_drift)


# ─── certification ──────────────────────────────────────────────────────────

class CertificationAggregator:
    """
    Collects named checks into a single verdict
    ───────────────────────────────────────────
    Each check is (passed, value, threshold, note). A check that raised is
    recorded as failed with the error message; nothing propagates.
    """

    def __init__(self, model: SpinModel):
        self.model = model
        self.checks: list[dict] = []
        self.metrics: dict = {}

    def add(self, name: str, passed: bool, value=None, threshold=None, note: str = "") -> None:
        self.checks.append({"check": name, "passed": bool(passed), "value": value,
                            "threshold": threshold, "note": note})
        if not passed:
            logger.warning("certification check %s failed for %s: %s", name, self.model.name, note or value)

    def run(self, name: str, check: Callable[[], tuple]) -> None:
        try:
            self.add(name, *check())
        except SpinfluxError as exc:
            self.add(name, False, note=str(exc))

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def compute(self) -> dict:
        return {"model": self.model.name, **self.metrics, "checks": self.checks, "passed": self.passed}


def _report_check(report: ValidationReport, note: str = "") -> tuple:
    return report.passed, len(report.witnesses), None, note or report.details.get("note", "")


def run_certification(model: SpinModel, n_sites: int = 4, points_per_axis: int = 20) -> dict:
    settings = get_settings()
    threshold = settings.cert_threshold
    agg = CertificationAggregator(model)

    for name, validator in (("condition A", validate_conservation), ("condition C", validate_stationarity),
                            ("condition D", validate_rate_cycle), ("reflection", validate_reflection)):
        agg.run(name, lambda validator=validator: _report_check(validator(model)))
    agg.run("condition B", lambda: _report_check(check_irreducibility(model, n_sites),
                                                 f"finite certificate at N={n_sites}"))

    grid = admissible_hull(model, settings.grid_epsilon).grid(points_per_axis)
    agg.metrics["grid_size"] = int(len(grid))
    if not len(grid):
        agg.add("grid", False, note="no admissible grid points")
        return agg.compute()

    try:
        cert = certify_grid(model, grid)
    except SpinfluxError as exc:
        agg.add("flux analysis", False, note=str(exc))
        return agg.compute()

    gaps = np.diff(cert["speeds"], axis=1)
    agg.metrics.update({
        "onsager_residual": float(cert["onsager"].max()),
        "sym_residual_max": float(cert["sym"].max()),
        "lax_residual_max": float(cert["lax"].max()),
        "speeds_min_gap": float(gaps.min()) if gaps.size else None,
    })
    for name, key in (("onsager", "onsager"), ("symmetry", "sym"), ("lax entropy", "lax"),
                      ("real speeds", "imag"), ("G'' S'' = I", "inverse")):
        value = float(cert[key].max())
        agg.add(name, value < threshold, value, threshold)
    eigmin = float(cert["eigmin"].min())
    agg.add("S'' positive definite", eigmin > 0.0, eigmin, 0.0)
    return agg.compute()
