"""
Fluxes, Jacobians & Certification
─────────────────────────────────
micro flux   φ(ω1,ω2) = Σ r(ω1,ω2;ω1′,ω2′) (ξ(ω2′) − ξ(ω2))
macro flux   Φ(u)     = E_u[φ] under the product measure π_θ(u) ⊗ π_θ(u)

Derivatives are exact sums as well: ∂Φ_i/∂θ_j weights φ_i by the centred
pair statistic ξ_j(ω1)+ξ_j(ω2)−2u_j, and D = ∂Φ/∂u = (∂Φ/∂θ)·S″.

The certifiers measure how far a model is from the structural identities:
  onsager   ∂Φ/∂θ symmetric
  sym/lax   S″D symmetric (S is a Lax entropy)
  speeds    D diagonalised through (S″)^{-1/2}(S″D)(S″)^{-1/2}, real spectrum
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from spinflux_cli.engines.model import SpinModel
from spinflux_cli.engines.thermo import (
    hessian_batch,
    invert_densities_batch,
    log_partition,
    moments,
)
from spinflux_cli.errors import ConservationBroken, QuadratureFailure

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-10


# ─── microscopic flux ───────────────────────────────────────────────────────

def micro_flux_table(model: SpinModel) -> np.ndarray:
    """|S| × |S| × n table of φ, cross-checked against the left-site form."""
    S, n = model.n_states, model.n_cons
    t = model.transitions
    xi = model.xi.astype(float)
    right = np.zeros((S, S, n))
    left = np.zeros((S, S, n))
    np.add.at(right, (t["src1"], t["src2"]), t["rate"][:, None] * (xi[t["dst2"]] - xi[t["src2"]]))
    np.add.at(left, (t["src1"], t["src2"]), t["rate"][:, None] * (xi[t["src1"]] - xi[t["dst1"]]))
    scale = max(1.0, float(np.max(np.abs(right), initial=0.0)))
    mismatch = np.abs(right - left)
    if np.any(mismatch > 1e-12 * scale):
        a, b, _ = np.unravel_index(int(np.argmax(mismatch)), mismatch.shape)
        raise ConservationBroken(
            f"Flux forms disagree on pair ({model.states[a]}, {model.states[b]}): "
            f"{right[a, b].tolist()} vs {left[a, b].tolist()}")
    return right


def micro_flux(model: SpinModel, w1, w2) -> np.ndarray:
    """φ for one ordered pair; states may be given as labels or indices."""
    a = model.index(w1) if isinstance(w1, str) else int(w1)
    b = model.index(w2) if isinstance(w2, str) else int(w2)
    return micro_flux_table(model)[a, b]


# ─── macroscopic flux ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class FluxReport:
    u: np.ndarray
    phi: np.ndarray
    jacobian_u: np.ndarray
    jacobian_theta: np.ndarray
    onsager_residual: float
    sym_residual: float
    lax_residual: float
    speeds: np.ndarray


@dataclass(frozen=True)
class HyperbolicityReport:
    u: np.ndarray
    speeds: np.ndarray
    sym_residual: float
    imag_residual: float

    @property
    def speed_gap(self) -> float:
        return float(np.min(np.diff(self.speeds))) if len(self.speeds) > 1 else float("inf")


def flux_from_theta(model: SpinModel, thetas, table: np.ndarray | None = None) -> np.ndarray:
    """Φ as a function of chemical potentials, for an (m, n) batch."""
    table = micro_flux_table(model) if table is None else table
    _, weights = log_partition(model, thetas)
    return np.einsum("ma,mb,abi->mi", weights, weights, table, optimize=True)


def macro_flux_batch(model: SpinModel, targets, thetas=None) -> dict[str, np.ndarray]:
    """Φ, ∂Φ/∂θ, S″ and D for an (m, n) batch of admissible densities."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if thetas is None:
        thetas = invert_densities_batch(model, targets)
    table = micro_flux_table(model)
    _, weights = log_partition(model, thetas)
    densities, _ = moments(model, weights)
    centred = model.xi[None, :, :].astype(float) - densities[:, None, :]

    phi = np.einsum("ma,mb,abi->mi", weights, weights, table, optimize=True)
    jac_theta = (np.einsum("ma,mb,abi,maj->mij", weights, weights, table, centred, optimize=True)
                 + np.einsum("ma,mb,abi,mbj->mij", weights, weights, table, centred, optimize=True))
    hessian = hessian_batch(model, thetas)
    return {
        "u": targets,
        "theta": thetas,
        "phi": phi,
        "jacobian_theta": jac_theta,
        "hessian": hessian,
        "jacobian_u": jac_theta @ hessian,
    }


def _pair_defect(matrices: np.ndarray) -> np.ndarray:
    """max_{i<j} |M_ij − M_ji| per matrix; zero when n = 1."""
    if matrices.shape[-1] < 2:
        return np.zeros(matrices.shape[0])
    return np.max(np.abs(matrices - np.swapaxes(matrices, 1, 2)), axis=(1, 2))


def _lax_defect(hessian: np.ndarray, jac_u: np.ndarray) -> np.ndarray:
    n = hessian.shape[-1]
    if n < 2:
        return np.zeros(hessian.shape[0])
    i, j = np.triu_indices(n, k=1)
    # Σ_k S″_ik ∂Φ_k/∂u_j − S″_jk ∂Φ_k/∂u_i
    product = np.einsum("mik,mkj->mij", hessian, jac_u)
    return np.max(np.abs(product[:, i, j] - product[:, j, i]), axis=1)


def symmetrised_speeds(hessian: np.ndarray, jac_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of (S″)^{-1/2}(S″D)(S″)^{-1/2} and the largest imaginary part."""
    evals, evecs = np.linalg.eigh(hessian)
    inv_root = np.einsum("mik,mk,mjk->mij", evecs, 1.0 / np.sqrt(evals), evecs)
    similar = inv_root @ (hessian @ jac_u) @ inv_root
    imag = np.max(np.abs(np.linalg.eigvals(similar).imag), axis=1)
    speeds = np.linalg.eigvalsh(0.5 * (similar + np.swapaxes(similar, 1, 2)))
    return speeds, imag


def certify_grid(model: SpinModel, grid) -> dict[str, np.ndarray]:
    """Every residual of the structural identities at each grid point."""
    batch = macro_flux_batch(model, grid)
    hessian, jac_u = batch["hessian"], batch["jacobian_u"]
    speeds, imag = symmetrised_speeds(hessian, jac_u)
    _, weights = log_partition(model, batch["theta"])
    _, covariance = moments(model, weights)
    eye = np.eye(model.n_cons)
    return {
        **batch,
        "onsager": _pair_defect(batch["jacobian_theta"]),
        "sym": _pair_defect(hessian @ jac_u),
        "lax": _lax_defect(hessian, jac_u),
        "speeds": speeds,
        "imag": imag,
        "inverse": np.max(np.abs(covariance @ hessian - eye), axis=(1, 2)),
        "eigmin": np.linalg.eigvalsh(hessian)[:, 0],
    }


def macro_flux(model: SpinModel, u) -> FluxReport:
    u = np.asarray(u, dtype=float).reshape(model.n_cons)
    cert = certify_grid(model, u[None, :])
    return FluxReport(
        u=u,
        phi=cert["phi"][0],
        jacobian_u=cert["jacobian_u"][0],
        jacobian_theta=cert["jacobian_theta"][0],
        onsager_residual=float(cert["onsager"][0]),
        sym_residual=float(cert["sym"][0]),
        lax_residual=float(cert["lax"][0]),
        speeds=cert["speeds"][0],
    )


def certify_onsager(model: SpinModel, grid) -> float:
    residual = float(np.max(_pair_defect(macro_flux_batch(model, grid)["jacobian_theta"])))
    logger.info("onsager residual for %s over %d points: %.3g", model.name, len(np.atleast_2d(grid)), residual)
    return residual


def hyperbolicity_report(model: SpinModel, u) -> HyperbolicityReport:
    u = np.asarray(u, dtype=float).reshape(model.n_cons)
    cert = certify_grid(model, u[None, :])
    return HyperbolicityReport(
        u=u,
        speeds=cert["speeds"][0],
        sym_residual=float(cert["sym"][0]),
        imag_residual=float(cert["imag"][0]),
    )


def lax_entropy_residual(model: SpinModel, u) -> float:
    u = np.asarray(u, dtype=float).reshape(model.n_cons)
    batch = macro_flux_batch(model, u[None, :])
    return float(_lax_defect(batch["hessian"], batch["jacobian_u"])[0])


# ─── potential & entropy flux ───────────────────────────────────────────────

def line_integral(model: SpinModel, start, end) -> float:
    """∫ Φ·dθ along the straight segment from start to end (adaptive Gauss–Kronrod)."""
    start = np.asarray(start, dtype=float).reshape(model.n_cons)
    end = np.asarray(end, dtype=float).reshape(model.n_cons)
    step = end - start
    if not np.any(step):
        return 0.0
    table = micro_flux_table(model)

    def integrand(t: float) -> float:
        return float(flux_from_theta(model, (start + t * step)[None, :], table)[0] @ step)

    value, error = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    if not np.isfinite(value) or error > QUAD_TOL:
        raise QuadratureFailure(f"Flux potential quadrature error {error:.3g} exceeds {QUAD_TOL:g}")
    return float(value)


def flux_potential(model: SpinModel, theta) -> float:
    """U(θ) with U(0) = 0; its gradient is Φ when the reciprocity relations hold."""
    return line_integral(model, np.zeros(model.n_cons), theta)


def entropy_flux(model: SpinModel, u) -> float:
    """F(u) = θ·Φ − U(θ), the flux paired with the entropy S."""
    u = np.asarray(u, dtype=float).reshape(model.n_cons)
    theta = invert_densities_batch(model, u[None, :])[0]
    phi = flux_from_theta(model, theta[None, :])[0]
    return float(theta @ phi - flux_potential(model, theta))
