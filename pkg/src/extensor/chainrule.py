"""Extended fields restricted along sections, and the tensorial chain rule.

Three differentiations appear together here and are kept apart by name:

* ``standard``: the classical covariant derivative of an ordinary field on
  the base, with the connection evaluated along the section;
* ``spatial``: the spatial covariant derivative of the extended field;
* ``vertical``: the derivative of the extended field in a fiber slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from . import jets
from .bundle import Section
from .connection import ExtendedConnection, contract_vertical, spatial_covariant, vertical_differential
from .errors import ShapeMismatch, ValidationError
from .extfield import ExtendedField, constant_field, tensor_residual
from .multitensor import Tensor, Valence, act


@dataclass(frozen=True)
class RestrictedField:
    """An ordinary field on the base: ``p -> source(section.point(p))``."""

    source: ExtendedField
    section: Section

    def __post_init__(self):
        if self.source.spec != self.section.spec:
            raise ShapeMismatch("field and section live on different bundles")

    @property
    def valence(self) -> Valence:
        return self.source.valence

    @property
    def dim(self) -> int:
        return self.source.spec.dim

    def __call__(self, base: Any) -> Tensor:
        return self.source.evaluate(self.section.point(base))


def restrict(f: ExtendedField, sec: Section) -> RestrictedField:
    return RestrictedField(f, sec)


def base_directional(g: RestrictedField, base: Any, y: Any) -> tuple[Tensor, Tensor]:
    """Value and derivative of `g` at `base` along the base vector `y`."""
    tag = jets.new_tag()
    with jets.nested_derivative():
        out = g(jets.perturb(jets.asdata(base), tag, np.asarray(y, dtype=float)))
    n = g.dim
    return Tensor(n, g.valence, jets.value_of(out.data, tag)), Tensor(n, g.valence, jets.tangent_of(out.data, tag))


def _direction_at(direction: Any, sec: Section, base: Any) -> np.ndarray:
    if isinstance(direction, ExtendedField):
        if direction.valence != Valence(1, 0):
            raise ShapeMismatch("direction must be a (1,0) field")
        return np.asarray(jets.primal(direction.evaluate(sec.point(base)).data), dtype=float)
    y = np.asarray(direction, dtype=float)
    if y.shape != (sec.spec.dim,):
        raise ShapeMismatch(f"direction vector must have {sec.spec.dim} entries")
    return y


def standard_covariant(conn: ExtendedConnection, direction: Any, g: RestrictedField, base: Any) -> Tensor:
    """Classical covariant derivative of `g` at `base` with the connection taken along the section."""
    if conn.spec != g.section.spec:
        raise ShapeMismatch("connection and section live on different bundles")
    y = _direction_at(direction, g.section, base)
    value, slope = base_directional(g, base, y)
    gamma = conn.gamma.evaluate(g.section.point(base)).data
    return slope + act(jets.einsum("kji...,j...->ki...", gamma, y), value)


@dataclass(frozen=True)
class ChainRuleTerms:
    """The pieces of the chain rule at one base point, labelled by operator."""

    lhs: Tensor  # standard derivative of the restricted field
    spatial: Tensor  # spatial covariant derivative of the extended field
    section: tuple[Tensor, ...]  # standard derivative of each section field
    vertical: tuple[Tensor, ...]  # vertical term of slot P, contracted with section[P]

    def rhs(self, drop: str | None = None) -> Tensor:
        """Assembled right-hand side; `drop` removes ``spatial`` or ``vertical:P`` (1-based P)."""
        total = Tensor.zeros(self.lhs.dim, self.lhs.valence) if drop == "spatial" else self.spatial
        for P, term in enumerate(self.vertical):
            if drop == f"vertical:{P + 1}":
                continue
            total = total + term
        return total


def chain_rule_terms(conn: ExtendedConnection, f: ExtendedField, sec: Section, direction: Any, base: Any) -> ChainRuleTerms:
    spec = f.spec
    if sec.spec != spec or conn.spec != spec:
        raise ShapeMismatch("field, section and connection must share a bundle")
    q = sec.point(jets.asdata(base))
    y = _direction_at(direction, sec, base)
    ydir = constant_field(spec, Tensor(spec.dim, Valence(1, 0), y), "Y")
    lhs = standard_covariant(conn, y, restrict(f, sec), base)
    spatial = spatial_covariant(conn, ydir, f).evaluate(q)
    sect, vert = [], []
    for P in range(spec.Q):
        dT = standard_covariant(conn, y, restrict(sec.fields[P], sec), base)
        dv = vertical_differential(f, P).evaluate(q)
        sect.append(dT)
        vert.append(contract_vertical(dT, dv, spec.types[P], f.valence))
    return ChainRuleTerms(lhs, spatial, tuple(sect), tuple(vert))


def drop_options(spec) -> list[str]:
    return ["spatial"] + [f"vertical:{P + 1}" for P in range(spec.Q)]


def chain_rule_residual(
    conn: ExtendedConnection,
    f: ExtendedField,
    sec: Section,
    direction: Any,
    probes: Sequence[Any],
    drop: str | None = None,
) -> float:
    """Largest chain-rule mismatch over the base points `probes`."""
    if drop is not None and drop not in drop_options(f.spec):
        raise ValidationError(f"unknown term {drop!r}; choose from {drop_options(f.spec)}")
    worst = 0.0
    for base in probes:
        terms = chain_rule_terms(conn, f, sec, direction, base)
        worst = max(worst, tensor_residual(terms.lhs, terms.rhs(drop)))
    return worst

