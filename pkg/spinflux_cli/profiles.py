"""
Initial-profile DSL
───────────────────
  const:v1,...,vn                   u(x) ≡ (v1, ..., vn)
  sine:m1,a1,...,mn,an[@phase]      u_i(x) = m_i + a_i sin(2π(x + phase))

Components are in density order (ξ-density first). Cell averages are exact,
taken from the antiderivative of the sine.
"""

import re
from dataclasses import dataclass

import numpy as np

from spinflux_cli.engines.fv import Profile
from spinflux_cli.errors import ParseError

_PATTERN = re.compile(r"^\s*(const|sine)\s*:\s*([^@]*?)\s*(?:@\s*(\S+))?\s*$")


@dataclass(frozen=True)
class MacroProfile:
    text: str
    means: np.ndarray
    amplitudes: np.ndarray
    phase: float = 0.0

    @property
    def n(self) -> int:
        return len(self.means)

    def __call__(self, x) -> np.ndarray:
        """Point values at positions x (any shape), returned as (len(x), n)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        wave = np.sin(2 * np.pi * (x + self.phase))
        return self.means[None, :] + wave[:, None] * self.amplitudes[None, :]

    def cell_averages(self, n_cells: int) -> np.ndarray:
        edges = np.arange(n_cells + 1) / n_cells
        primitive = -np.cos(2 * np.pi * (edges + self.phase)) / (2 * np.pi)
        wave = np.diff(primitive) * n_cells
        return self.means[None, :] + wave[:, None] * self.amplitudes[None, :]

    def to_profile(self, n_cells: int) -> Profile:
        return Profile(values=self.cell_averages(n_cells))


def parse_profile(text: str, n: int) -> MacroProfile:
    match = _PATTERN.match(text)
    if match is None:
        raise ParseError(f"Unrecognised profile '{text}' (expected const:... or sine:...)", line=1, column=1)
    kind, body, phase = match.groups()
    try:
        numbers = [float(tok) for tok in body.split(",")] if body else []
        phase_value = float(phase) if phase is not None else 0.0
    except ValueError as exc:
        raise ParseError(f"Bad number in profile '{text}': {exc}", line=1, column=match.start(2) + 1) from None

    expected = n if kind == "const" else 2 * n
    if len(numbers) != expected:
        raise ParseError(f"'{kind}' profile for n={n} needs {expected} numbers, got {len(numbers)}",
                         line=1, column=match.start(2) + 1)
    if kind == "const":
        if phase is not None:
            raise ParseError("A phase only applies to sine profiles", line=1, column=match.start(3) + 1)
        return MacroProfile(text, np.array(numbers), np.zeros(n))
    pairs = np.array(numbers).reshape(n, 2)
    return MacroProfile(text, pairs[:, 0].copy(), pairs[:, 1].copy(), phase_value)
