"""
Spin Model & Rate-Condition Validators
──────────────────────────────────────
A spin system is a finite local state set S, n conserved single-site
quantities ξ: S → Z^n, a base measure π on S and a nearest-neighbour
jump-rate table r(ω1,ω2;ω1′,ω2′).

Four mechanical checks are offered, each returning a ValidationReport:

  A  conservation      positive-rate jumps conserve ξ(ω1)+ξ(ω2)
  B  irreducibility    every conserved-totals class of a small torus is
                       strongly connected (finite certificate only)
  C  stationarity      π(ω1)π(ω2)r(ω1,ω2;ω1′,ω2′) = π(ω2′)π(ω1′)r(ω2′,ω1′;ω2,ω1)
  D  rate cycle        R(ω1,ω2)+R(ω2,ω3)+R(ω3,ω1) = R(ω1,ω3)+R(ω3,ω2)+R(ω2,ω1)

plus R, the optional left-right reflection symmetry.
"""

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from spinflux_cli.config import get_settings
from spinflux_cli.errors import SchemaError, SizeExceeded

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**7
MAX_WITNESSES = 50

Transition = tuple[tuple[int, int], float]


@dataclass(frozen=True, eq=False)
class SpinModel:
    """Immutable spin system. Rates are stored sparsely, keyed by state indices."""

    states: tuple[str, ...]
    xi: np.ndarray
    base_measure: np.ndarray
    rates: Mapping[tuple[int, int], tuple[Transition, ...]]
    name: str = "custom"
    reflection: tuple[int, ...] | None = None
    parity: tuple[int, ...] | None = None

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        if len(set(states)) != len(states):
            raise SchemaError("states", "state labels must be unique")
        if len(states) < 3:
            raise SchemaError("states", f"need at least 3 states, got {len(states)}")
        object.__setattr__(self, "states", states)

        xi = np.asarray(self.xi)
        if xi.ndim != 2 or xi.shape[0] != len(states) or xi.shape[1] < 1:
            raise SchemaError("xi", f"expected a {len(states)} x n table, got shape {xi.shape}")
        if not np.all(np.equal(np.round(xi), xi)):
            raise SchemaError("xi", "conserved quantities must be integers")
        xi = xi.astype(np.int64)
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

        pi = np.asarray(self.base_measure, dtype=float)
        if pi.shape != (len(states),):
            raise SchemaError("base_measure", f"expected {len(states)} entries, got shape {pi.shape}")
        if not np.all(np.isfinite(pi)) or np.any(pi <= 0.0):
            raise SchemaError("base_measure", "entries must be strictly positive")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise SchemaError("base_measure", f"entries sum to {pi.sum():.15g}, not 1")
        pi.setflags(write=False)
        object.__setattr__(self, "base_measure", pi)

        object.__setattr__(self, "rates", _normalise_rates(self.rates, len(states)))

        augmented = np.column_stack([xi, np.ones(len(states))])
        if np.linalg.matrix_rank(augmented) != xi.shape[1] + 1:
            raise SchemaError("xi", "conserved quantities and the constant are not linearly independent")

        if self.reflection is not None:
            reflection = tuple(int(k) for k in self.reflection)
            if sorted(reflection) != list(range(len(states))):
                raise SchemaError("reflection", "must be a permutation of the states")
            object.__setattr__(self, "reflection", reflection)
            parity = tuple(int(p) for p in (self.parity or (1,) * xi.shape[1]))
            if len(parity) != xi.shape[1] or any(p not in (-1, 1) for p in parity):
                raise SchemaError("parity", "one entry of +1 or -1 per conserved quantity")
            object.__setattr__(self, "parity", parity)

    # ─── derived tables ──────────────────────────────────────────────────────

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_cons(self) -> int:
        return self.xi.shape[1]

    def index(self, label) -> int:
        try:
            return self.states.index(str(label))
        except ValueError:
            raise KeyError(f"Unknown state '{label}'") from None

    @cached_property
    def transitions(self) -> dict[str, np.ndarray]:
        """Flat arrays (src1, src2, dst1, dst2, rate) over all positive-rate jumps."""
        rows = [(a, b, c, d, rate)
                for (a, b), targets in sorted(self.rates.items())
                for (c, d), rate in targets]
        table = np.array(rows, dtype=float).reshape(-1, 5)
        out = {key: table[:, k].astype(np.int64) for k, key in enumerate(("src1", "src2", "dst1", "dst2"))}
        out["rate"] = table[:, 4].copy()
        return out

    @cached_property
    def rate_lookup(self) -> dict[tuple[int, int, int, int], float]:
        return {(a, b, c, d): rate
                for (a, b), targets in self.rates.items()
                for (c, d), rate in targets}

    def rate(self, a: int, b: int, c: int, d: int) -> float:
        return self.rate_lookup.get((a, b, c, d), 0.0)

    @cached_property
    def total_rates(self) -> np.ndarray:
        """R(ω1, ω2): total jump rate of the ordered nearest-neighbour pair."""
        table = np.zeros((self.n_states, self.n_states))
        t = self.transitions
        np.add.at(table, (t["src1"], t["src2"]), t["rate"])
        table.setflags(write=False)
        return table

    def permuted(self, order: Sequence[int]) -> "SpinModel":
        """Same model with states relabelled so that new state k is old state order[k]."""
        order = [int(k) for k in order]
        new_of_old = {old: new for new, old in enumerate(order)}
        rates = {}
        for (a, b), targets in self.rates.items():
            rates[(new_of_old[a], new_of_old[b])] = tuple(
                ((new_of_old[c], new_of_old[d]), rate) for (c, d), rate in targets)
        reflection = None
        if self.reflection is not None:
            reflection = tuple(new_of_old[self.reflection[old]] for old in order)
        return SpinModel(
            states=tuple(self.states[k] for k in order),
            xi=self.xi[order],
            base_measure=self.base_measure[order],
            rates=rates,
            name=self.name,
            reflection=reflection,
            parity=self.parity,
        )

    @classmethod
    def from_labels(cls, states: Sequence[str], xi, base_measure,
                    transitions: Iterable[tuple[Sequence[str], Sequence[str], float]], **kwargs) -> "SpinModel":
        """Build a model from (from-pair, to-pair, rate) triples written with state labels."""
        states = tuple(str(s) for s in states)
        lookup = {label: k for k, label in enumerate(states)}
        rates: dict[tuple[int, int], list[Transition]] = {}
        for k, (src, dst, rate) in enumerate(transitions):
            try:
                key = (lookup[str(src[0])], lookup[str(src[1])])
                target = (lookup[str(dst[0])], lookup[str(dst[1])])
            except KeyError as exc:
                raise SchemaError(f"rates[{k}]", f"unknown state {exc.args[0]!r}") from None
            rates.setdefault(key, []).append((target, float(rate)))
        return cls(states=states, xi=xi, base_measure=base_measure, rates=rates, **kwargs)

    def __eq__(self, other):
        if not isinstance(other, SpinModel):
            return NotImplemented
        return (self.states == other.states
                and np.array_equal(self.xi, other.xi)
                and np.array_equal(self.base_measure, other.base_measure)
                and self.rate_lookup == other.rate_lookup
                and self.reflection == other.reflection
                and self.parity == other.parity)

    __hash__ = None


def _normalise_rates(rates, n_states: int) -> dict[tuple[int, int], tuple[Transition, ...]]:
    """Drop zero entries, reject negative / non-finite / duplicate ones."""
    clean: dict[tuple[int, int], tuple[Transition, ...]] = {}
    for (a, b), targets in rates.items():
        seen = set()
        kept = []
        for (c, d), rate in targets:
            quad = tuple(int(k) for k in (a, b, c, d))
            if any(k < 0 or k >= n_states for k in quad):
                raise SchemaError("rates", f"state index out of range in {quad}")
            rate = float(rate)
            if not np.isfinite(rate) or rate < 0.0:
                raise SchemaError("rates", f"rate {rate} for {quad} is negative or not finite")
            if quad in seen:
                raise SchemaError("rates", f"duplicate transition {quad}")
            seen.add(quad)
            if rate > 0.0:
                kept.append(((quad[2], quad[3]), rate))
        if kept:
            clean[(int(a), int(b))] = tuple(sorted(kept))
    return clean


# ─── reports ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ValidationReport:
    condition: str
    witnesses: tuple = ()
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.witnesses

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "passed": self.passed,
            "witnesses": [list(w) for w in self.witnesses],
            **self.details,
        }


def _close(lhs: float, rhs: float) -> bool:
    settings = get_settings()
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) <= max(settings.identity_atol, settings.identity_rtol * scale)


def _pair(model: SpinModel, a: int, b: int) -> list[str]:
    return [model.states[a], model.states[b]]


# ─── condition A ────────────────────────────────────────────────────────────

def validate_conservation(model: SpinModel) -> ValidationReport:
    witnesses = []
    t = model.transitions
    delta = model.xi[t["dst1"]] + model.xi[t["dst2"]] - model.xi[t["src1"]] - model.xi[t["src2"]]
    for k in np.flatnonzero(np.any(delta != 0, axis=1)):
        witnesses.append((
            _pair(model, t["src1"][k], t["src2"][k]),
            _pair(model, t["dst1"][k], t["dst2"][k]),
            float(t["rate"][k]),
            delta[k].tolist(),
        ))
    return ValidationReport("A", tuple(witnesses), {"transitions": int(len(t["rate"]))})


# ─── condition C ────────────────────────────────────────────────────────────

def validate_stationarity(model: SpinModel) -> ValidationReport:
    pi = model.base_measure
    witnesses = []
    checked = set()
    for (a, b, c, d), rate in sorted(model.rate_lookup.items()):
        partner = (d, c, b, a)
        if partner in checked:
            continue
        checked.add((a, b, c, d))
        lhs = pi[a] * pi[b] * rate
        rhs = pi[d] * pi[c] * model.rate(*partner)
        if not _close(lhs, rhs):
            witnesses.append((_pair(model, a, b), _pair(model, c, d), float(lhs), float(rhs)))
    return ValidationReport("C", tuple(witnesses))


# ─── condition D ────────────────────────────────────────────────────────────

def validate_rate_cycle(model: SpinModel) -> ValidationReport:
    R = model.total_rates
    witnesses = []
    for i, j, k in itertools.combinations(range(model.n_states), 3):
        lhs = R[i, j] + R[j, k] + R[k, i]
        rhs = R[i, k] + R[k, j] + R[j, i]
        if not _close(lhs, rhs):
            witnesses.append(([model.states[i], model.states[j], model.states[k]], float(lhs), float(rhs)))
    return ValidationReport("D", tuple(witnesses))


# ─── condition B ────────────────────────────────────────────────────────────

def check_irreducibility(model: SpinModel, n_sites: int) -> ValidationReport:
    """
    Exhaustive strong-connectivity check on the torus with n_sites sites.
    This is a certificate for that size only, not a statement about all N.
    """
    S = model.n_states
    if n_sites < 3:
        raise SizeExceeded(f"Irreducibility needs at least 3 sites, got {n_sites}")
    if S ** n_sites > ENUMERATION_LIMIT:
        raise SizeExceeded(f"{S}^{n_sites} configurations exceed the enumeration limit of {ENUMERATION_LIMIT}")

    n_configs = S ** n_sites
    codes = np.arange(n_configs, dtype=np.int64)
    powers = S ** np.arange(n_sites, dtype=np.int64)
    digits = np.empty((n_configs, n_sites), dtype=np.int16)
    totals = np.zeros((n_configs, model.n_cons), dtype=np.int64)
    for j in range(n_sites):
        digits[:, j] = (codes // powers[j]) % S
        totals += model.xi[digits[:, j]]
    class_totals, class_of = np.unique(totals, axis=0, return_inverse=True)
    class_of = np.asarray(class_of).reshape(-1)

    sources, targets = [], []
    t = model.transitions
    for j in range(n_sites):
        jn = (j + 1) % n_sites
        for a, b, c, d in zip(t["src1"], t["src2"], t["dst1"], t["dst2"]):
            src = codes[(digits[:, j] == a) & (digits[:, jn] == b)]
            sources.append(src)
            targets.append(src + (c - a) * powers[j] + (d - b) * powers[jn])
    src = np.concatenate(sources) if sources else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(targets) if targets else np.zeros(0, dtype=np.int64)
    graph = csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n_configs, n_configs))
    _, component = connected_components(graph, directed=True, connection="strong")

    pairs = np.unique(np.column_stack([class_of, component]), axis=0)
    components_per_class = np.bincount(pairs[:, 0], minlength=len(class_totals))
    failing = np.flatnonzero(components_per_class > 1)

    witnesses = []
    for cls in failing[:MAX_WITNESSES]:
        members = np.flatnonzero(class_of == cls)
        first = members[0]
        other = members[component[members] != component[first]][0]
        witnesses.append((
            class_totals[cls].tolist(),
            int(len(members)),
            int(components_per_class[cls]),
            [model.states[k] for k in digits[first]],
            [model.states[k] for k in digits[other]],
        ))
    if len(failing):
        logger.info("%s: %d of %d classes not strongly connected at N=%d",
                    model.name, len(failing), len(class_totals), n_sites)
    return ValidationReport("B", tuple(witnesses), {
        "n_sites": n_sites,
        "classes": int(len(class_totals)),
        "failing_classes": int(len(failing)),
    })


# ─── reflection symmetry ────────────────────────────────────────────────────

def validate_reflection(model: SpinModel) -> ValidationReport:
    if model.reflection is None:
        return ValidationReport("R", (), {"note": "no reflection declared"})
    R = model.reflection
    parity = np.array(model.parity)
    witnesses = []
    for w in range(model.n_states):
        if R[R[w]] != w:
            witnesses.append(("not an involution", model.states[w]))
        if not np.array_equal(model.xi[R[w]], parity * model.xi[w]):
            witnesses.append(("parity", model.states[w], model.xi[w].tolist(), model.xi[R[w]].tolist()))
    for (a, b, c, d), rate in sorted(model.rate_lookup.items()):
        mirrored = model.rate(R[b], R[a], R[d], R[c])
        if not _close(rate, mirrored):
            witnesses.append(("rate", _pair(model, a, b), _pair(model, c, d), float(rate), float(mirrored)))
    return ValidationReport("R", tuple(witnesses))


def validate_all(model: SpinModel, n_sites: int = 4) -> list[ValidationReport]:
    return [
        validate_conservation(model),
        check_irreducibility(model, n_sites),
        validate_stationarity(model),
        validate_rate_cycle(model),
        validate_reflection(model),
    ]
