"""
Finite-Volume Solver
────────────────────
First-order Rusanov (local Lax–Friedrichs) scheme for ∂_t u + ∂_x Φ(u) = 0 on
the unit torus:

    F_{j+1/2} = ½(Φ(u_j) + Φ(u_{j+1})) − ½ α_{j+1/2} (u_{j+1} − u_j)
    α_{j+1/2} = max(|λ|(u_j), |λ|(u_{j+1})),   Δt = cfl · Δx / max_j α

Fluxes come from an evaluator: exact summation over a model, or the closed
forms of the two built-in families. Every step is checked against the
ε-shrunk admissible hull.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from spinflux_cli.config import get_settings
from spinflux_cli.engines.builtins import bricklayer_model, leroux_model
from spinflux_cli.engines.flux import macro_flux_batch, symmetrised_speeds
from spinflux_cli.engines.model import SpinModel
from spinflux_cli.engines.thermo import AdmissibleHull, admissible_hull, entropy_batch, invert_densities_batch
from spinflux_cli.errors import InadmissibleState, NonFiniteFlux

logger = logging.getLogger(__name__)


# ─── profiles ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Profile:
    """Cell averages on the torus; cell j covers [j/n_cells, (j+1)/n_cells)."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError(f"profile values must be (n_cells, n), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        if self.time < 0:
            raise ValueError("profile time must be non-negative")
        object.__setattr__(self, "values", values)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def centres(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) / self.n_cells

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)


@dataclass
class Trajectory:
    snapshots: list[Profile] = field(default_factory=list)
    entropy_series: list[tuple[float, float]] = field(default_factory=list)
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.snapshots])

    def rows(self):
        """(time, x, u_1..u_n) per cell per snapshot, in output order."""
        for snap in self.snapshots:
            for x, u in zip(snap.centres, snap.values):
                yield (snap.time, float(x), *(float(v) for v in u))


def reflect(profile: Profile, parity: Sequence[int]) -> Profile:
    """x ↦ −x: cell j goes to cell N−1−j and odd components change sign."""
    return Profile(profile.values[::-1] * np.asarray(parity, dtype=float)[None, :], profile.time)


def shift(profile: Profile, k: int) -> Profile:
    return Profile(np.roll(profile.values, k, axis=0), profile.time)


# ─── flux evaluators ────────────────────────────────────────────────────────

class FluxEvaluator(Protocol):
    model: SpinModel
    hull: AdmissibleHull

    def evaluate(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Φ(u) per cell and the largest |characteristic speed| per cell."""
        ...


class ModelFluxEvaluator:
    """Exact-summation fluxes; θ from the previous call warm-starts the inversion."""

    def __init__(self, model: SpinModel, epsilon: float | None = None):
        self.model = model
        self.hull = admissible_hull(model, get_settings().grid_epsilon if epsilon is None else epsilon)
        self._theta: np.ndarray | None = None

    def evaluate(self, values):
        warm = self._theta if self._theta is not None and self._theta.shape == values.shape else None
        thetas = invert_densities_batch(self.model, values, theta0=warm, check_domain=False)
        self._theta = thetas
        batch = macro_flux_batch(self.model, values, thetas)
        speeds, _ = symmetrised_speeds(batch["hessian"], batch["jacobian_u"])
        return batch["phi"], np.max(np.abs(speeds), axis=1)


class LerouxFlux:
    """Φ = c(ρ + u² − 1, ρu); speeds c(3u ± √(u² + 4ρ))/2."""

    def __init__(self, c: float = 1.0):
        self.c = float(c)
        self.model = leroux_model(0.0, 0.0, self.c)
        self.hull = admissible_hull(self.model, get_settings().grid_epsilon)

    def evaluate(self, values):
        u, rho = values[:, 0], values[:, 1]
        flux = np.column_stack([self.c * (rho + u * u - 1.0), self.c * (rho * u)])
        speed = self.c * (3.0 * np.abs(u) + np.sqrt(u * u + 4.0 * rho)) / 2.0
        return flux, speed


class BricklayerFlux:
    """Φ = ((p−q)ρ − (a−b)/2)(1 − u²), Ψ = (p−q)ρ(1−ρ)u; eigenvalues of the analytic D."""

    def __init__(self, **parameters):
        self.model = bricklayer_model(**parameters)
        self.drift = float(parameters.get("p", 0.0) - parameters.get("q", 0.0))
        self.gamma = float(parameters.get("a", 0.0) - parameters.get("b", 0.0)) / 2.0
        self.hull = admissible_hull(self.model, get_settings().grid_epsilon)

    def jacobian(self, values) -> np.ndarray:
        u, rho = values[:, 0], values[:, 1]
        k, g = self.drift, self.gamma
        jac = np.empty((len(values), 2, 2))
        jac[:, 0, 0] = -2.0 * u * (k * rho - g)
        jac[:, 0, 1] = k * (1.0 - u * u)
        jac[:, 1, 0] = k * rho * (1.0 - rho)
        jac[:, 1, 1] = k * (1.0 - 2.0 * rho) * u
        return jac

    def evaluate(self, values):
        u, rho = values[:, 0], values[:, 1]
        k, g = self.drift, self.gamma
        flux = np.column_stack([(k * rho - g) * (1.0 - u * u), k * rho * (1.0 - rho) * u])
        jac = self.jacobian(values)
        half_trace = 0.5 * (jac[:, 0, 0] + jac[:, 1, 1])
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        root = np.sqrt(np.maximum(half_trace ** 2 - det, 0.0))
        return flux, np.abs(half_trace) + root


def closed_form_evaluator(name: str, parameters: dict) -> FluxEvaluator:
    if name == "leroux":
        return LerouxFlux()
    if name == "bricklayer":
        return BricklayerFlux(**parameters)
    raise KeyError(f"No closed-form flux for '{name}'")


# ─── solver ─────────────────────────────────────────────────────────────────

def rusanov_step(values: np.ndarray, flux: np.ndarray, speed: np.ndarray, ratio: float) -> np.ndarray:
    alpha = np.maximum(speed, np.roll(speed, -1))
    interface = 0.5 * (flux + np.roll(flux, -1, axis=0)) - 0.5 * alpha[:, None] * (np.roll(values, -1, axis=0) - values)
    return values - ratio * (interface - np.roll(interface, 1, axis=0))


def _check_admissible(hull: AdmissibleHull, values: np.ndarray, time: float) -> None:
    inside = hull.contains(values)
    if not inside.all():
        raise InadmissibleState(int(np.flatnonzero(~inside)[0]), time)


def snapshot_schedule(t_start: float, t_end: float, n_snapshots: int = 10) -> np.ndarray:
    return np.linspace(t_start, t_end, n_snapshots + 1)[1:]


def solve(flux: FluxEvaluator, initial: Profile, t_end: float, cfl: float = 0.45,
          snapshot_times: Sequence[float] | None = None, n_snapshots: int = 10,
          on_snapshot: Callable[[Profile], None] | None = None) -> Trajectory:
    """Integrate to t_end, landing exactly on each snapshot time."""
    if not 0.0 < cfl < 1.0:
        raise ValueError(f"cfl must lie in (0, 1), got {cfl}")
    if initial.n_cells < 8:
        raise ValueError(f"the solver needs at least 8 cells, got {initial.n_cells}")
    times = snapshot_schedule(initial.time, t_end, n_snapshots) if snapshot_times is None else np.asarray(snapshot_times, dtype=float)
    times = np.unique(times[times > initial.time])

    values = initial.values.copy()
    dx = initial.dx
    t = initial.time
    _check_admissible(flux.hull, values, t)

    trajectory = Trajectory()

    def record(profile: Profile) -> None:
        trajectory.snapshots.append(profile)
        trajectory.entropy_series.append((profile.time, float(dx * entropy_batch(flux.model, profile.values).sum())))
        if on_snapshot is not None:
            on_snapshot(profile)

    record(Profile(values.copy(), t))
    logger.info("solving to t=%g on %d cells (cfl=%g)", t_end, initial.n_cells, cfl)
    for target in times:
        while t < target:
            fluxes, speed = flux.evaluate(values)
            if not (np.all(np.isfinite(fluxes)) and np.all(np.isfinite(speed))):
                raise NonFiniteFlux(f"Non-finite flux or wave speed at t={t:.6g}")
            amax = float(speed.max())
            dt = cfl * dx / amax if amax > 0.0 else target - t
            if t + dt >= target:
                dt, t_next = target - t, float(target)
            else:
                t_next = t + dt
            values = rusanov_step(values, fluxes, speed, dt / dx)
            _check_admissible(flux.hull, values, t_next)
            t = t_next
            trajectory.steps += 1
        record(Profile(values.copy(), t))
    logger.info("solver finished after %d steps", trajectory.steps)
    return trajectory


# ─── diagnostics ────────────────────────────────────────────────────────────

def entropy_functional(model: SpinModel, profile: Profile, reference_u) -> float:
    reference = np.asarray(reference_u, dtype=float).reshape(1, model.n_cons)
    cells = entropy_batch(model, profile.values)
    return float(profile.dx * np.sum(cells - entropy_batch(model, reference)[0]))


def _theta_fields(model: SpinModel, trajectory: Trajectory) -> np.ndarray:
    return np.stack([invert_densities_batch(model, snap.values) for snap in trajectory.snapshots])


def _spatial_gradient(theta: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(theta, -1, axis=0) - np.roll(theta, 1, axis=0)) / (2.0 * dx)


def dual_field_consistency(model: SpinModel, trajectory: Trajectory) -> float:
    """
    Max defect of ∂_t θ + Dᵀ ∂_x θ = 0 over the interior snapshots, with
    central differences in time (across snapshots) and space (across cells).
    """
    if len(trajectory.snapshots) < 3:
        raise ValueError("dual-field consistency needs at least 3 snapshots")
    times = trajectory.times
    thetas = _theta_fields(model, trajectory)
    dx = trajectory.snapshots[0].dx
    worst = 0.0
    for k in range(1, len(times) - 1):
        dt_theta = (thetas[k + 1] - thetas[k - 1]) / (times[k + 1] - times[k - 1])
        dx_theta = _spatial_gradient(thetas[k], dx)
        jac_u = macro_flux_batch(model, trajectory.snapshots[k].values, thetas[k])["jacobian_u"]
        defect = dt_theta + np.einsum("mji,mj->mi", jac_u, dx_theta)
        worst = max(worst, float(np.max(np.abs(defect))))
    return worst


def theta_gradient_max(model: SpinModel, trajectory: Trajectory) -> float:
    """max |∂_x θ| over all snapshots, the natural scale of the dual-field defect."""
    thetas = _theta_fields(model, trajectory)
    dx = trajectory.snapshots[0].dx
    return float(max(np.max(np.abs(_spatial_gradient(theta, dx))) for theta in thetas))
