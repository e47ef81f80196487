"""
Built-in exchange models
────────────────────────
leroux      S = {-1, 0, 1}, ξ(ω) = ω, η(ω) = 1 - |ω|; nearest-neighbour exchanges.
            Hydrodynamics: ∂t u + ∂x(ρ + u²) = 0, ∂t ρ + ∂x(ρu) = 0.

bricklayer  S = {0,1} × {-1,1}, ω = (n, z), ξ = z, η = n; twenty possible jumps
            with s = r and two rate-cycle identities, a nine-parameter family.
            Hydrodynamics: Φ = ((p-q)ρ - (a-b)/2)(1 - u²), Ψ = (p-q)ρ(1-ρ)u.

Both use the uniform base measure and declare their left-right reflection.
Density vectors are always ordered (ξ-density, η-density) = (u, ρ).
"""

import numpy as np

from spinflux_cli.config import get_settings
from spinflux_cli.engines.model import SpinModel
from spinflux_cli.errors import ConstraintViolated, NegativeRate

BRICKLAYER_PARAMETERS = ("a", "b", "c", "d", "e", "f", "p", "q", "r", "x", "y")

# Flux-oracle set (γ = 1/2). It has frozen configurations, so it fails
# irreducibility on every torus.
BRICKLAYER_CANONICAL = dict(a=1.0, b=0.0, c=0.0, d=1.0, e=0.0, f=0.0, p=1.0, q=0.0, r=0.0, x=0.0, y=0.0)

# Same macroscopic fluxes; every adjacent pair can swap its n's and its z's
# independently, which makes each conserved-totals class connected.
BRICKLAYER_MIXING = dict(BRICKLAYER_CANONICAL, e=1.0, f=1.0, r=1.0, x=1.0, y=1.0)

LEROUX_DEFAULT = dict(a=0.0, b=0.0)


def leroux_model(a: float, b: float, c: float = 1.0) -> SpinModel:
    """Three-state exchange model; c fixes the time scale and is 1 unless stated otherwise."""
    for label, value in (("a", a), ("b", b), ("c", c)):
        if value < 0:
            raise NegativeRate(f"Leroux parameter {label}={value} is negative")

    transitions = [
        (("1", "-1"), ("-1", "1"), a),
        (("-1", "1"), ("1", "-1"), 2 * c + a),
        (("0", "-1"), ("-1", "0"), b),
        (("-1", "0"), ("0", "-1"), c + b),
        (("1", "0"), ("0", "1"), b),
        (("0", "1"), ("1", "0"), c + b),
    ]
    return SpinModel.from_labels(
        states=("-1", "0", "1"),
        xi=[[-1, 0], [0, 1], [1, 0]],
        base_measure=np.full(3, 1.0 / 3.0),
        transitions=transitions,
        name=f"leroux(a={a:g},b={b:g})",
        reflection=(2, 1, 0),
        parity=(-1, 1),
    )


def bricklayer_model(a: float = 0.0, b: float = 0.0, c: float = 0.0, d: float = 0.0,
                     e: float = 0.0, f: float = 0.0, p: float = 0.0, q: float = 0.0,
                     r: float = 0.0, x: float = 0.0, y: float = 0.0) -> SpinModel:
    """Finite bricklayer model; s is tied to r, the two rate-cycle identities are enforced."""
    params = dict(a=a, b=b, c=c, d=d, e=e, f=f, p=p, q=q, r=r, x=x, y=y)
    for label, value in params.items():
        if value < 0:
            raise NegativeRate(f"Bricklayer parameter {label}={value} is negative")

    settings = get_settings()
    for identity, lhs, rhs in (
        ("c+f+p+y = d+e+q+x", c + f + p + y, d + e + q + x),
        ("a+f+q+y = b+e+p+x", a + f + q + y, b + e + p + x),
    ):
        if abs(lhs - rhs) > max(settings.identity_atol, settings.identity_rtol * max(abs(lhs), abs(rhs))):
            raise ConstraintViolated(identity, lhs, rhs)

    s = r
    transitions = [
        (("0-", "0+"), ("0+", "0-"), a),
        (("0+", "0-"), ("0-", "0+"), b),
        (("1-", "1+"), ("1+", "1-"), c),
        (("1+", "1-"), ("1-", "1+"), d),
        (("0-", "1+"), ("0+", "1-"), e),
        (("1-", "0+"), ("1+", "0-"), e),
        (("0+", "1-"), ("0-", "1+"), f),
        (("1+", "0-"), ("1-", "0+"), f),
        (("0-", "1-"), ("1-", "0-"), p),
        (("1+", "0+"), ("0+", "1+"), p),
        (("0+", "1+"), ("1+", "0+"), q),
        (("1-", "0-"), ("0-", "1-"), q),
        (("0+", "1-"), ("1+", "0-"), r),
        (("1+", "0-"), ("0+", "1-"), r),
        (("0-", "1+"), ("1-", "0+"), s),
        (("1-", "0+"), ("0-", "1+"), s),
        (("0-", "1+"), ("1+", "0-"), x),
        (("1-", "0+"), ("0+", "1-"), x),
        (("0+", "1-"), ("1-", "0+"), y),
        (("1+", "0-"), ("0-", "1+"), y),
    ]
    # states ordered (n, z): 0-, 0+, 1-, 1+ ; ξ = z, η = n
    return SpinModel.from_labels(
        states=("0-", "0+", "1-", "1+"),
        xi=[[-1, 0], [1, 0], [-1, 1], [1, 1]],
        base_measure=np.full(4, 0.25),
        transitions=transitions,
        name="bricklayer",
        reflection=(1, 0, 3, 2),
        parity=(-1, 1),
    )


def builtin_model(name: str) -> SpinModel:
    """Model behind ``--builtin``: Leroux with a=b=0, or the mixing bricklayer set."""
    if name == "leroux":
        return leroux_model(**LEROUX_DEFAULT)
    if name == "bricklayer":
        return bricklayer_model(**BRICKLAYER_MIXING)
    raise KeyError(f"Unknown built-in model '{name}' (expected 'leroux' or 'bricklayer')")


def builtin_parameters(name: str) -> dict:
    return dict(LEROUX_DEFAULT) if name == "leroux" else dict(BRICKLAYER_MIXING)
