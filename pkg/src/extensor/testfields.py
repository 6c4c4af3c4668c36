"""Random polynomial fields, connections and derivations for property checks."""

from __future__ import annotations

from typing import Any

import numpy as np

from .bundle import BundleSpec
from .connection import ExtendedConnection
from .derivation import DerivationComponents
from .extfield import ExprField
from .multitensor import Valence, as_valence, multi_indices


def random_polynomial(
    rng: np.random.Generator,
    spec: BundleSpec,
    terms: int = 3,
    x_degree: int = 2,
    fiber_degree: int = 1,
) -> str:
    """Source text of a polynomial with `terms` random monomials.

    Each monomial has at most `x_degree` base factors and `fiber_degree`
    fiber factors; coefficients are rounded to two decimals.
    """
    xs = spec.coordinate_names()
    ts = [name for P in range(spec.Q) for _, name in spec.slot_names(P)]
    parts = []
    for _ in range(terms):
        c = round(float(rng.uniform(-1.0, 1.0)), 2)
        if c == 0.0:
            continue
        factors = [xs[k] for k in rng.integers(0, len(xs), int(rng.integers(0, x_degree + 1)))]
        if ts and fiber_degree:
            factors += [ts[k] for k in rng.integers(0, len(ts), int(rng.integers(0, fiber_degree + 1)))]
        parts.append("*".join([repr(c)] + factors))
    return " + ".join(parts) if parts else "0"


def random_components(rng: np.random.Generator, spec: BundleSpec, valence: Any, **kw) -> np.ndarray:
    v = as_valence(valence)
    comps = np.empty((spec.dim,) * v.rank, dtype=object)
    for idx in multi_indices(spec.dim, v.rank):
        comps[idx] = random_polynomial(rng, spec, **kw)
    return comps


def random_field(rng: np.random.Generator, spec: BundleSpec, valence: Any, name: str = "X", **kw) -> ExprField:
    return ExprField(spec, valence, random_components(rng, spec, valence, **kw), name)


def random_connection(rng: np.random.Generator, spec: BundleSpec, name: str = "Gamma", **kw) -> ExtendedConnection:
    return ExtendedConnection(spec, random_field(rng, spec, Valence(1, 2), name, **kw), name)


def random_derivation(rng: np.random.Generator, spec: BundleSpec, **kw) -> DerivationComponents:
    Z = random_field(rng, spec, Valence(1, 0), "Z", **kw)
    ZP = tuple(random_field(rng, spec, spec.types[P], f"Z{P + 1}", **kw) for P in range(spec.Q))
    G = random_field(rng, spec, Valence(1, 1), "G", **kw)
    return DerivationComponents(spec, Z, ZP, G)
