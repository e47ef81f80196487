"""
Canonical Measures & Thermodynamic Entropy
──────────────────────────────────────────
For chemical potentials θ ∈ R^n the tilted single-site measure is

    π_θ(ω) = π(ω) exp(θ·ξ(ω) − G(θ)),    G(θ) = log Σ_ω π(ω) exp(θ·ξ(ω))

with densities u(θ) = ∇G(θ) and covariance G″(θ). The entropy S is the convex
conjugate of G: S(u) = θ(u)·u − G(θ(u)), S″(u) = G″(θ(u))⁻¹.

Everything is an exact finite sum over S; there is no sampling in this module.
Batched helpers work on (m, n) arrays of points and are what the solver, the
sampler and the certifiers use; the single-point operations wrap them.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial import ConvexHull
from scipy.special import logsumexp

from spinflux_cli.config import get_settings
from spinflux_cli.engines.model import SpinModel
from spinflux_cli.errors import NoConvergence, OutsideDomain

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 40


# ─── admissible domain ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class AdmissibleHull:
    """
    Densities u = Σ_ω λ_ω ξ(ω) with Σλ = 1 and every λ_ω ≥ ε.

    Equivalently u lies in offset + scale · conv{ξ(ω)} with offset = εΣξ(ω)
    and scale = 1 − |S|ε, which is tested against the hull's half-spaces.
    """

    normals: np.ndarray
    bounds: np.ndarray
    offset: np.ndarray
    scale: float
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float

    def slack(self, u) -> np.ndarray:
        """Smallest half-space slack per point (positive inside)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        y = (u - self.offset) / self.scale
        return np.min(self.bounds[None, :] - y @ self.normals.T, axis=1)

    def contains(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.all(np.isfinite(u), axis=1) & (self.slack(u) >= 0.0)

    def grid(self, points_per_axis: int, lower=None, upper=None) -> np.ndarray:
        """Rectangular lattice over the box, keeping only admissible points."""
        lower = self.lower if lower is None else np.asarray(lower, dtype=float)
        upper = self.upper if upper is None else np.asarray(upper, dtype=float)
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(lower, upper)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        return mesh[self.contains(mesh)]


def admissible_hull(model: SpinModel, epsilon: float | None = None) -> AdmissibleHull:
    epsilon = get_settings().hull_epsilon if epsilon is None else float(epsilon)
    scale = 1.0 - model.n_states * epsilon
    if scale <= 0.0:
        raise ValueError(f"epsilon={epsilon} leaves no admissible densities for {model.n_states} states")
    points = np.unique(model.xi.astype(float), axis=0)
    if model.n_cons == 1:
        normals = np.array([[1.0], [-1.0]])
        bounds = np.array([points.max(), -points.min()])
    else:
        hull = ConvexHull(points)
        normals = hull.equations[:, :-1]
        bounds = -hull.equations[:, -1]
    offset = epsilon * model.xi.sum(axis=0).astype(float)
    return AdmissibleHull(
        normals=normals,
        bounds=bounds,
        offset=offset,
        scale=scale,
        lower=offset + scale * points.min(axis=0),
        upper=offset + scale * points.max(axis=0),
        epsilon=epsilon,
    )


# ─── canonical measures ─────────────────────────────────────────────────────

@dataclass(frozen=True)
class CanonicalPoint:
    theta: np.ndarray
    g_value: float
    densities: np.ndarray
    covariance: np.ndarray
    single_site_weights: np.ndarray


@dataclass(frozen=True)
class DensityPoint:
    u: np.ndarray
    theta: np.ndarray
    entropy: float
    hessian: np.ndarray


def log_partition(model: SpinModel, thetas) -> tuple[np.ndarray, np.ndarray]:
    """G(θ) and the tilted weights for an (m, n) batch, shifted log-sum-exp."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    logits = thetas @ model.xi.T + np.log(model.base_measure)[None, :]
    g = logsumexp(logits, axis=1)
    weights = np.exp(logits - g[:, None])
    return g, weights


def moments(model: SpinModel, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Densities and covariance of ξ under each row of weights."""
    xi = model.xi.astype(float)
    densities = weights @ xi
    centred = xi[None, :, :] - densities[:, None, :]
    covariance = np.einsum("ms,msi,msj->mij", weights, centred, centred)
    return densities, 0.5 * (covariance + np.swapaxes(covariance, 1, 2))


def canonical_points(model: SpinModel, thetas) -> dict[str, np.ndarray]:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    g, weights = log_partition(model, thetas)
    densities, covariance = moments(model, weights)
    return {"theta": thetas, "g": g, "weights": weights, "densities": densities, "covariance": covariance}


def canonical_point(model: SpinModel, theta) -> CanonicalPoint:
    theta = np.asarray(theta, dtype=float).reshape(model.n_cons)
    batch = canonical_points(model, theta[None, :])
    return CanonicalPoint(
        theta=theta,
        g_value=float(batch["g"][0]),
        densities=batch["densities"][0],
        covariance=batch["covariance"][0],
        single_site_weights=batch["weights"][0],
    )


# ─── Legendre inversion ─────────────────────────────────────────────────────

def _residual(model: SpinModel, thetas: np.ndarray, targets: np.ndarray):
    _, weights = log_partition(model, thetas)
    densities, covariance = moments(model, weights)
    return densities - targets, covariance


def invert_densities_batch(model: SpinModel, targets, theta0=None, epsilon: float | None = None,
                           check_domain: bool = True) -> np.ndarray:
    """
    θ(u) for an (m, n) batch by damped Newton; the covariance is the exact
    Jacobian. Rows are iterated independently and frozen once converged.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if check_domain:
        inside = admissible_hull(model, epsilon).contains(targets)
        if not inside.all():
            bad = int(np.flatnonzero(~inside)[0])
            raise OutsideDomain(f"Density {targets[bad].tolist()} is outside the admissible domain",
                                point=targets[bad], index=bad)

    thetas = np.zeros_like(targets) if theta0 is None else np.array(theta0, dtype=float).reshape(targets.shape)
    residual, covariance = _residual(model, thetas, targets)
    active = np.max(np.abs(residual), axis=1) >= NEWTON_TOL

    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            return thetas
        idx = np.flatnonzero(active)
        theta_a, resid_a = thetas[idx], residual[idx]
        step = np.linalg.solve(covariance[idx], resid_a[..., None])[..., 0]
        norm_now = np.linalg.norm(resid_a, axis=1)

        t = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        trial = theta_a.copy()
        trial_resid = resid_a.copy()
        trial_cov = covariance[idx].copy()
        for _ in range(MAX_HALVINGS):
            rows = np.flatnonzero(pending)
            candidate = theta_a[rows] - t[rows, None] * step[rows]
            r, c = _residual(model, candidate, targets[idx[rows]])
            better = np.linalg.norm(r, axis=1) < norm_now[rows]
            accept = rows[better]
            trial[accept], trial_resid[accept], trial_cov[accept] = candidate[better], r[better], c[better]
            pending[accept] = False
            if not pending.any():
                break
            t[pending] *= 0.5
        if pending.any():
            # no decrease within rounding; take the last candidate
            rows = np.flatnonzero(pending)
            candidate = theta_a[rows] - t[rows, None] * step[rows]
            r, c = _residual(model, candidate, targets[idx[rows]])
            trial[rows], trial_resid[rows], trial_cov[rows] = candidate, r, c

        thetas[idx], residual[idx], covariance[idx] = trial, trial_resid, trial_cov
        active[idx] = np.max(np.abs(trial_resid), axis=1) >= NEWTON_TOL

    if active.any():
        worst = float(np.max(np.abs(residual[active])))
        raise NoConvergence(f"Newton inversion did not converge for {int(active.sum())} points "
                            f"(max residual {worst:.3g})")
    return thetas


def entropy_batch(model: SpinModel, targets, thetas=None) -> np.ndarray:
    """S(u) = θ·u − G(θ) for a batch, reusing θ when the caller already has it."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if thetas is None:
        thetas = invert_densities_batch(model, targets)
    g, _ = log_partition(model, thetas)
    return np.einsum("mi,mi->m", thetas, targets) - g


def hessian_batch(model: SpinModel, thetas) -> np.ndarray:
    """S″ = G″(θ)⁻¹ for a batch of chemical potentials."""
    _, weights = log_partition(model, thetas)
    _, covariance = moments(model, weights)
    eye = np.broadcast_to(np.eye(model.n_cons), covariance.shape)
    hessian = np.linalg.solve(covariance, eye)
    return 0.5 * (hessian + np.swapaxes(hessian, 1, 2))


def invert_densities(model: SpinModel, u_target, epsilon: float | None = None) -> DensityPoint:
    u = np.asarray(u_target, dtype=float).reshape(model.n_cons)
    theta = invert_densities_batch(model, u[None, :], epsilon=epsilon)[0]
    point = canonical_point(model, theta)
    factor = cho_factor(point.covariance)
    hessian = cho_solve(factor, np.eye(model.n_cons))
    return DensityPoint(
        u=u,
        theta=theta,
        entropy=float(theta @ u - point.g_value),
        hessian=0.5 * (hessian + hessian.T),
    )


def entropy_hessian(model: SpinModel, u) -> np.ndarray:
    return invert_densities(model, u).hessian


def relative_entropy(model: SpinModel, u) -> float:
    """Σ_ω π_u(ω) log(π_u(ω)/π(ω)), computed from the tilted weights directly."""
    point = canonical_point(model, invert_densities(model, u).theta)
    w = point.single_site_weights
    return float(np.sum(w * np.log(w / model.base_measure)))


def thermo_table(model: SpinModel, points_per_axis: int, lower=None, upper=None) -> list[dict]:
    """Rows of (u, θ, S, smallest eigenvalue of S″) over an admissible grid."""
    hull = admissible_hull(model, get_settings().grid_epsilon)
    grid = hull.grid(points_per_axis, lower, upper)
    if not len(grid):
        return []
    thetas = invert_densities_batch(model, grid)
    entropy = entropy_batch(model, grid, thetas)
    eigmin = np.linalg.eigvalsh(hessian_batch(model, thetas))[:, 0]
    rows = []
    for u, theta, s, lam in zip(grid, thetas, entropy, eigmin):
        row = {f"u_{i + 1}": float(v) for i, v in enumerate(u)}
        row.update({f"theta_{i + 1}": float(v) for i, v in enumerate(theta)})
        row["S"] = float(s)
        row["eigmin"] = float(lam)
        rows.append(row)
    logger.info("thermo table for %s: %d admissible points", model.name, len(rows))
    return rows
