"""
Kinetic Monte Carlo on the discrete torus
─────────────────────────────────────────
Direct-method Gillespie over the N nearest-neighbour pairs. Pair j carries
the total rate R(ω_j, ω_{j+1}); a Fenwick tree selects the pair, a cumulative
table selects the target pair state. After a jump only pairs j−1, j, j+1
change, so N ≥ 3 is required.

Eulerian scaling: macroscopic time t is microscopic time N·t.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit

from spinflux_cli.config import get_settings
from spinflux_cli.engines.fenwick import tree_add, tree_build, tree_find, tree_prefix
from spinflux_cli.engines.fv import Profile
from spinflux_cli.engines.model import SpinModel
from spinflux_cli.engines.thermo import admissible_hull, invert_densities_batch, log_partition
from spinflux_cli.errors import BadBlockSize, ConservationBroken, OutsideDomain, StalledDynamics

logger = logging.getLogger(__name__)

DRIFT_TOLERANCE = 1e-9


@dataclass
class LatticeConfig:
    """Single-owner mutable lattice state; totals are kept in integer arithmetic."""

    model: SpinModel
    omega: np.ndarray
    totals: np.ndarray
    micro_time: float = 0.0
    events: int = 0

    @classmethod
    def from_states(cls, model: SpinModel, omega, micro_time: float = 0.0) -> "LatticeConfig":
        omega = np.asarray(omega, dtype=np.int64).copy()
        if omega.ndim != 1 or np.any(omega < 0) or np.any(omega >= model.n_states):
            raise ValueError("omega must be a 1-D array of state indices")
        return cls(model, omega, model.xi[omega].sum(axis=0), micro_time)

    @property
    def n_sites(self) -> int:
        return len(self.omega)

    @property
    def macro_time(self) -> float:
        return self.micro_time / self.n_sites

    def copy(self) -> "LatticeConfig":
        return LatticeConfig(self.model, self.omega.copy(), self.totals.copy(), self.micro_time, self.events)

    def recomputed_totals(self) -> np.ndarray:
        return self.model.xi[self.omega].sum(axis=0)


# ─── initial state ──────────────────────────────────────────────────────────

def site_densities(profile, n_sites: int) -> np.ndarray:
    """u(0, j/N) for each site, from a callable profile or an explicit (N, n) array."""
    if callable(profile):
        return np.atleast_2d(profile(np.arange(n_sites) / n_sites))
    densities = np.atleast_2d(np.asarray(profile, dtype=float))
    if densities.shape[0] == 1:
        densities = np.repeat(densities, n_sites, axis=0)
    if densities.shape[0] != n_sites:
        raise ValueError(f"expected {n_sites} site densities, got {densities.shape[0]}")
    return densities


def sample_local_equilibrium(model: SpinModel, profile: Callable | np.ndarray, n_sites: int,
                             seed: int) -> LatticeConfig:
    """Independent ω_j drawn from the canonical single-site measure at u(0, j/N)."""
    densities = site_densities(profile, n_sites)
    inside = admissible_hull(model).contains(densities)
    if not inside.all():
        j = int(np.flatnonzero(~inside)[0])
        raise OutsideDomain(f"Initial density at site {j} ({densities[j].tolist()}) is not admissible",
                            point=densities[j], index=j)

    distinct, which = np.unique(densities, axis=0, return_inverse=True)
    which = np.asarray(which).reshape(-1)
    _, weights = log_partition(model, invert_densities_batch(model, distinct, check_domain=False))
    cumulative = np.cumsum(weights, axis=1)

    draws = np.random.default_rng(seed).random(n_sites)
    omega = np.sum(cumulative[which] <= draws[:, None], axis=1)
    omega = np.minimum(omega, model.n_states - 1).astype(np.int64)
    return LatticeConfig.from_states(model, omega)


# ─── dynamics ───────────────────────────────────────────────────────────────

def _jump_tables(model: SpinModel):
    """CSR layout of the transitions, grouped by source pair code a·|S| + b."""
    S = model.n_states
    t = model.transitions
    codes = t["src1"] * S + t["src2"]
    order = np.lexsort((t["dst2"], t["dst1"], codes))
    codes = codes[order]
    offsets = np.searchsorted(codes, np.arange(S * S + 1)).astype(np.int64)
    rates = t["rate"][order]
    cumulative = np.empty_like(rates)
    for code in range(S * S):
        lo, hi = offsets[code], offsets[code + 1]
        cumulative[lo:hi] = np.cumsum(rates[lo:hi])
    return offsets, cumulative, t["dst1"][order].copy(), t["dst2"][order].copy()


@njit(nogil=True)
def _gillespie(omega, totals, xi, pair_rate, offsets, cumulative, dst1, dst2,
               horizon, seed, refresh, check_every):
    """
    Returns (events, stalled_remaining, drift_rebuilds, totals_ok). The run
    stops at the first event past the horizon, leaving the pre-event state.
    """
    np.random.seed(seed)
    n = omega.shape[0]
    n_states = pair_rate.shape[0]
    values = np.empty(n)
    for j in range(n):
        values[j] = pair_rate[omega[j], omega[(j + 1) % n]]
    tree = tree_build(values)

    t = 0.0
    events = 0
    since_refresh = 0
    drift_rebuilds = 0
    while True:
        total = tree_prefix(tree, n)
        if total <= 0.0:
            return events, horizon - t, drift_rebuilds, True
        t += np.random.exponential(1.0 / total)
        if t > horizon:
            return events, 0.0, drift_rebuilds, True

        j = tree_find(tree, values, np.random.random() * total)
        jn = (j + 1) % n
        a = omega[j]
        b = omega[jn]
        code = a * n_states + b
        lo = offsets[code]
        hi = offsets[code + 1]
        pick = np.random.random() * cumulative[hi - 1]
        k = lo
        while k < hi - 1 and cumulative[k] <= pick:
            k += 1
        c = dst1[k]
        d = dst2[k]
        omega[j] = c
        omega[jn] = d
        for i in range(totals.shape[0]):
            totals[i] += xi[c, i] + xi[d, i] - xi[a, i] - xi[b, i]

        for p in ((j - 1) % n, j, jn):
            new = pair_rate[omega[p], omega[(p + 1) % n]]
            tree_add(tree, p, new - values[p])
            values[p] = new

        events += 1
        since_refresh += 1
        if since_refresh >= refresh:
            exact = values.sum()
            if abs(tree_prefix(tree, n) - exact) > DRIFT_TOLERANCE * exact:
                drift_rebuilds += 1
            tree = tree_build(values)
            since_refresh = 0
        if check_every > 0 and events % check_every == 0:
            for i in range(totals.shape[0]):
                recount = 0
                for s in range(n):
                    recount += xi[omega[s], i]
                if recount != totals[i]:
                    return events, 0.0, drift_rebuilds, False


def _kernel_seed(seed) -> int:
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def evolve(model: SpinModel, config: LatticeConfig, macro_duration: float, seed: int,
           debug: bool = False) -> LatticeConfig:
    """Run for microscopic time N·macro_duration; the input configuration is not modified."""
    if config.n_sites < 3:
        raise ValueError("the lattice needs at least 3 sites")
    if macro_duration < 0:
        raise ValueError("macro_duration must be non-negative")
    result = config.copy()
    if macro_duration == 0:
        return result

    horizon = config.n_sites * macro_duration
    offsets, cumulative, dst1, dst2 = _jump_tables(model)
    events, remaining, drift_rebuilds, totals_ok = _gillespie(
        result.omega, result.totals, model.xi, np.ascontiguousarray(model.total_rates),
        offsets, cumulative, dst1, dst2,
        float(horizon), _kernel_seed(seed), max(1, get_settings().tree_refresh),
        1_000_000 if debug else 0,
    )
    result.events += int(events)
    if not totals_ok:
        raise ConservationBroken(f"Conserved totals drifted after {events} events")
    if drift_rebuilds:
        logger.warning("event tree rebuilt %d times because of floating-point drift", drift_rebuilds)
    if remaining > 0.0:
        result.micro_time += horizon - remaining
        raise StalledDynamics(remaining)
    result.micro_time += horizon
    return result


# ─── observables ────────────────────────────────────────────────────────────

def block_average(config: LatticeConfig, l: int) -> Profile:
    """Block means of ξ over consecutive runs of l sites."""
    N = config.n_sites
    if l < 1 or l > N or N % l:
        raise BadBlockSize(f"Block size {l} does not divide N={N}")
    xi = config.model.xi[config.omega].astype(float)
    return Profile(xi.reshape(N // l, l, -1).mean(axis=1), config.macro_time)


def expected_event_rate(model: SpinModel, u) -> float:
    """E[R(ω1, ω2)] under the canonical product measure at density u."""
    u = np.asarray(u, dtype=float).reshape(1, model.n_cons)
    _, weights = log_partition(model, invert_densities_batch(model, u))
    w = weights[0]
    return float(w @ model.total_rates @ w)


def run_replicas(model: SpinModel, profile, n_sites: int, macro_duration: float, replicas: int,
                 seed: int | Sequence[int], workers: int | None = None) -> list[LatticeConfig]:
    """Independent replicas; replica k uses child k of the master SeedSequence."""
    children = np.random.SeedSequence(seed).spawn(replicas)
    workers = workers or get_settings().workers

    def one(child: np.random.SeedSequence) -> LatticeConfig:
        sample_seed, evolve_seed = (int(s) for s in child.generate_state(2))
        start = sample_local_equilibrium(model, profile, n_sites, sample_seed)
        return evolve(model, start, macro_duration, evolve_seed)

    with ThreadPoolExecutor(max_workers=max(1, min(workers, replicas))) as pool:
        results = list(pool.map(one, children))
    logger.info("%d replicas at N=%d done (%d events in total)", replicas, n_sites,
                sum(r.events for r in results))
    return results
