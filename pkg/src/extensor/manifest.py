"""Loading and validating JSON manifests.

A manifest describes one composite bundle over an atlas, the connections,
derivations, fields and sections living on it, and the parameters of the
verification suites. All user-facing indices are 1-based. The layout is
documented in the README.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .atlas import Chart, Transition
from .bundle import BundleSpec, Section
from .connection import ExtendedConnection
from .derivation import DerivationComponents
from .errors import ExprSyntaxError, ParseError, ValidationError
from .extfield import ExprField
from .multitensor import Tensor, Valence, as_valence, from_literal, multi_indices, parse_index_key
from .smoothexpr import Num, as_expr, parse

FIXTURE_PACKAGE = "extensor.fixtures"


@dataclass(frozen=True)
class ConnectionEntry:
    name: str
    chart: str
    connection: ExtendedConnection
    alternates: Mapping[str, ExtendedConnection] = field(default_factory=dict)
    flat: bool = False


@dataclass(frozen=True)
class Placed:
    """An object together with the chart its components are written in."""

    name: str
    chart: str
    value: Any


@dataclass(frozen=True)
class ChainRuleJob:
    field: str
    section: str
    connection: str
    direction: Any  # field name or a constant vector
    probes: tuple[tuple[float, ...], ...] = ()


@dataclass(frozen=True)
class Expectation:
    connection: str
    tensor: str  # "R", "torsion" or "Gamma"
    index: str
    point: tuple[float, ...]
    value: float
    tolerance: float
    chart: str | None = None
    args: tuple[Any, ...] = ()


@dataclass(frozen=True)
class SuiteParams:
    seed: int = 0
    probes: int = 20
    fiber_scale: float = 1.0
    tolerances: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Manifest:
    name: str
    digest: str
    spec: BundleSpec
    charts: Mapping[str, Chart]
    transitions: tuple[Transition, ...]
    connections: Mapping[str, ConnectionEntry]
    derivations: Mapping[str, Placed]
    fields: Mapping[str, Placed]
    sections: Mapping[str, Placed]
    chainrule: tuple[ChainRuleJob, ...]
    expectations: tuple[Expectation, ...]
    params: SuiteParams

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def default_chart(self) -> str:
        return next(iter(self.charts))

    def transitions_from(self, chart: str) -> list[Transition]:
        return [t for t in self.transitions if t.source == chart]

    def transition(self, source: str, target: str) -> Transition:
        for t in self.transitions:
            if t.source == source and t.target == target:
                return t
            if t.source == target and t.target == source:
                return t.inverse()
        raise ValidationError(f"no transition between charts {source!r} and {target!r}")


def resolve(path_or_name: str | Path) -> Path:
    """A filesystem path, or the bundled fixture of that name (with or without ``.json``)."""
    p = Path(path_or_name)
    if p.exists():
        return p
    name = p.name if p.suffix == ".json" else f"{p.name}.json"
    candidate = resources.files(FIXTURE_PACKAGE).joinpath(name)
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"no manifest at {path_or_name!s} and no bundled fixture of that name")


def fixture_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(FIXTURE_PACKAGE).iterdir() if p.name.endswith(".json"))


def load(path_or_name: str | Path) -> Manifest:
    path = resolve(path_or_name)
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_document(doc, hashlib.sha256(raw).hexdigest())


def from_document(doc: Mapping[str, Any], digest: str | None = None) -> Manifest:
    if not isinstance(doc, Mapping):
        raise ValidationError("manifest must be a JSON object")
    if digest is None:
        digest = hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()
    n = _int(doc.get("dimension"), "dimension")

    charts: dict[str, Chart] = {}
    for c in _list(doc.get("charts"), "charts", required=True):
        name = _str(c.get("name"), "chart name")
        if name in charts:
            raise ValidationError(f"duplicate chart {name!r}")
        if c.get("dim", n) != n:
            raise ValidationError(f"chart {name}: dim {c.get('dim')} differs from manifest dimension {n}")
        try:
            charts[name] = Chart(name, n, tuple(c.get("sample_points", ())), c.get("box"))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"chart {name}: {exc}") from None

    transitions = []
    for t in _list(doc.get("transitions"), "transitions"):
        src = _str(t.get("from", t.get("source")), "transition 'from'")
        dst = _str(t.get("to", t.get("target")), "transition 'to'")
        where = f"transition {src}->{dst}"
        for c in (src, dst):
            if c not in charts:
                raise ValidationError(f"{where}: unknown chart {c!r}")
        fwd = [_expr(e, f"{where} forward[{k + 1}]") for k, e in enumerate(_list(t.get("forward"), f"{where} forward"))]
        bwd = [_expr(e, f"{where} backward[{k + 1}]") for k, e in enumerate(_list(t.get("backward"), f"{where} backward"))]
        transitions.append(Transition(src, dst, n, tuple(fwd), tuple(bwd)))

    bundle = doc.get("bundle", {}) or {}
    try:
        types = tuple(as_valence(tuple(v)) for v in bundle.get("types", ()))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bundle types: {exc}") from None
    spec = BundleSpec(n, types)

    def chart_of(entry: Mapping[str, Any], where: str) -> str:
        c = entry.get("chart", next(iter(charts)))
        if c not in charts:
            raise ValidationError(f"{where}: unknown chart {c!r}")
        return c

    connections: dict[str, ConnectionEntry] = {}
    for c in _list(doc.get("connections"), "connections"):
        name = _str(c.get("name"), "connection name")
        chart = chart_of(c, f"connection {name}")
        conn = ExtendedConnection(spec, field_components(spec, Valence(1, 2), c.get("components", {}), f"connection {name}"), name)
        alternates = {}
        for other, comps in (c.get("alternates") or {}).items():
            if other not in charts:
                raise ValidationError(f"connection {name}: alternate for unknown chart {other!r}")
            alternates[other] = ExtendedConnection(
                spec, field_components(spec, Valence(1, 2), comps, f"connection {name} in {other}"), f"{name}@{other}"
            )
        connections[name] = _unique(connections, name, ConnectionEntry(name, chart, conn, alternates, bool(c.get("flat", False))))

    fields: dict[str, Placed] = {}
    for f in _list(doc.get("fields"), "fields"):
        name = _str(f.get("name"), "field name")
        valence = _valence(f.get("valence"), f"field {name}")
        comps = f.get("components", f.get("literal"))
        fields[name] = _unique(fields, name, Placed(name, chart_of(f, f"field {name}"), field_components(spec, valence, comps, f"field {name}")))

    derivations: dict[str, Placed] = {}
    for d in _list(doc.get("derivations"), "derivations"):
        name = _str(d.get("name"), "derivation name")
        where = f"derivation {name}"
        slots = _list(d.get("Z_slots"), f"{where} Z_slots")
        if len(slots) != spec.Q:
            raise ValidationError(f"{where}: expected {spec.Q} entries in Z_slots, got {len(slots)}")
        comp = DerivationComponents(
            spec,
            field_components(spec, Valence(1, 0), d.get("Z", {}), f"{where} Z"),
            tuple(field_components(spec, spec.types[P], z, f"{where} Z_slots[{P + 1}]") for P, z in enumerate(slots)),
            field_components(spec, Valence(1, 1), d.get("G", {}), f"{where} G"),
        )
        derivations[name] = _unique(derivations, name, Placed(name, chart_of(d, where), comp))

    sections: dict[str, Placed] = {}
    for s in _list(doc.get("sections"), "sections"):
        name = _str(s.get("name"), "section name")
        where = f"section {name}"
        parts = _list(s.get("fields"), f"{where} fields")
        if len(parts) != spec.Q:
            raise ValidationError(f"{where}: expected {spec.Q} fields, got {len(parts)}")
        sec = Section(spec, tuple(field_components(spec, spec.types[P], p, f"{where} field {P + 1}") for P, p in enumerate(parts)))
        sections[name] = _unique(sections, name, Placed(name, chart_of(s, where), sec))

    jobs = []
    for j in _list(doc.get("chainrule"), "chainrule"):
        job = ChainRuleJob(
            _str(j.get("field"), "chainrule field"),
            _str(j.get("section"), "chainrule section"),
            _str(j.get("connection"), "chainrule connection"),
            j.get("direction"),
            tuple(tuple(float(x) for x in p) for p in j.get("probes", ())),
        )
        _require(job.field, fields, "chainrule job field")
        _require(job.section, sections, "chainrule job section")
        _require(job.connection, connections, "chainrule job connection")
        if isinstance(job.direction, str):
            _require(job.direction, fields, "chainrule job direction")
            if fields[job.direction].value.valence != Valence(1, 0):
                raise ValidationError(f"chainrule direction {job.direction!r} must be a (1,0) field")
        elif job.direction is None or len(job.direction) != n:
            raise ValidationError(f"chainrule direction must be a field name or a {n}-vector")
        placed = {fields[job.field].chart, sections[job.section].chart, connections[job.connection].chart}
        if len(placed) != 1:
            raise ValidationError("chainrule job mixes charts")
        for p in job.probes:
            if len(p) != n:
                raise ValidationError(f"chainrule probe {p} is not {n}-dimensional")
        jobs.append(job)

    expectations = []
    for e in _list(doc.get("expectations"), "expectations"):
        ex = Expectation(
            _str(e.get("connection"), "expectation connection"),
            _str(e.get("tensor", "R"), "expectation tensor"),
            _str(e.get("index"), "expectation index"),
            tuple(float(x) for x in e.get("point", ())),
            float(e.get("value")),
            float(e.get("tolerance", 1e-8)),
            e.get("chart"),
            tuple(e.get("args", ())),
        )
        _require(ex.connection, connections, "expectation connection")
        if ex.tensor not in ("R", "torsion", "Gamma"):
            raise ValidationError(f"expectation tensor must be R, torsion or Gamma, not {ex.tensor!r}")
        if len(ex.point) != n:
            raise ValidationError(f"expectation point {ex.point} is not {n}-dimensional")
        if len(ex.args) != spec.Q:
            raise ValidationError(f"expectation needs {spec.Q} fiber arguments")
        expectations.append(ex)

    p = doc.get("suites", {}) or {}
    params = SuiteParams(
        int(p.get("seed", 0)),
        int(p.get("probes", 20)),
        float(p.get("fiber_scale", 1.0)),
        {str(k): float(v) for k, v in (p.get("tolerances") or {}).items()},
    )
    return Manifest(
        str(doc.get("name", "manifest")),
        digest,
        spec,
        charts,
        tuple(transitions),
        connections,
        derivations,
        fields,
        sections,
        tuple(jobs),
        tuple(expectations),
        params,
    )


def field_components(spec: BundleSpec, valence: Any, comps: Any, where: str) -> ExprField:
    """An expression field from a sparse key map, nested lists, a flat list or a scalar."""
    v = as_valence(valence)
    shape = (spec.dim,) * v.rank
    if comps is None:
        raise ValidationError(f"{where}: missing components")
    arr = np.empty(shape, dtype=object)
    arr.fill(Num(0.0))
    if isinstance(comps, Mapping):
        for key, e in comps.items():
            try:
                idx = parse_index_key(str(key), v, spec.dim)
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
            arr[idx] = _expr(e, f"{where}[{key}]")
    elif isinstance(comps, (list, tuple)):
        data = np.array(comps, dtype=object)
        if data.shape != shape:
            flat = np.array(comps, dtype=object).reshape(-1) if data.ndim == 1 else None
            if flat is None or flat.size != int(np.prod(shape, dtype=int)) or v.rank == 1:
                raise ValidationError(
                    f"{where}: valence {tuple(v)} in dimension {spec.dim} needs {int(np.prod(shape, dtype=int))} "
                    f"components of shape {shape}, got shape {data.shape}"
                )
            data = flat.reshape(shape)
        for idx in multi_indices(spec.dim, v.rank):
            arr[idx] = _expr(data[idx], f"{where}[{','.join(str(i + 1) for i in idx)}]")
    elif v.rank == 0:
        arr[()] = _expr(comps, where)
    else:
        raise ValidationError(f"{where}: components must be a map or a list")
    try:
        return ExprField(spec, v, arr, where)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def fiber_args(spec: BundleSpec, args: Any, where: str) -> list[Tensor]:
    out = []
    for P, a in enumerate(args):
        try:
            out.append(from_literal(spec.dim, spec.types[P], a))
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"{where}: fiber argument {P + 1}: {exc}") from None
    return out


def _expr(value: Any, where: str):
    if isinstance(value, str):
        try:
            return parse(value)
        except ExprSyntaxError as exc:
            raise ParseError(f"{where}: {exc}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: expected an expression string or a number, got {value!r}")
    return as_expr(float(value))


def _list(value: Any, where: str, required: bool = False) -> list:
    if value is None:
        if required:
            raise ValidationError(f"manifest needs {where}")
        return []
    if not isinstance(value, list):
        raise ValidationError(f"{where} must be a list")
    return value


def _str(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise ValidationError(f"{where} must be a non-empty string")
    return value


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValidationError(f"{where} must be a positive integer")
    return value


def _valence(value: Any, where: str) -> Valence:
    try:
        return as_valence(tuple(value))
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: valence must be a pair [r, s]") from None


def _unique(table: Mapping[str, Any], name: str, value: Any) -> Any:
    if name in table:
        raise ValidationError(f"duplicate name {name!r}")
    return value


def _require(name: str, table: Mapping[str, Any], where: str) -> None:
    if name not in table:
        raise ValidationError(f"{where}: unknown name {name!r}")
