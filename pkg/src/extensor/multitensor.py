"""Component tensors of valence (r, s) over an n-dimensional space.

Components are stored as an array of shape ``(n,) * (r + s)``, upper slots
first, optionally followed by trailing batch axes. The array may be wrapped in
`jets.Dual` perturbations; every operation here is multilinear and goes
through `jets.einsum`, so perturbations pass straight through.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from . import jets
from .errors import IndexOutOfRange, ShapeMismatch, SlotOutOfRange, ValidationError

_LETTERS = string.ascii_lowercase + string.ascii_uppercase


class Valence(NamedTuple):
    r: int
    s: int

    @property
    def rank(self) -> int:
        return self.r + self.s

    def __str__(self) -> str:
        return f"({self.r},{self.s})"


def as_valence(v: Any) -> Valence:
    if isinstance(v, Valence):
        return v
    try:
        r, s = (int(x) for x in v)
    except (TypeError, ValueError):
        raise ValidationError(f"valence must be a pair of integers, got {v!r}") from None
    if r < 0 or s < 0:
        raise ValidationError(f"valence entries must be non-negative, got {v!r}")
    return Valence(r, s)


def multi_indices(n: int, rank: int) -> Iterator[tuple[int, ...]]:
    """All 0-based multi-indices in row-major order."""
    return itertools.product(range(n), repeat=rank)


@dataclass(frozen=True)
class Tensor:
    dim: int
    valence: Valence
    data: Any

    def __post_init__(self):
        object.__setattr__(self, "valence", as_valence(self.valence))
        data = jets.asdata(self.data)
        object.__setattr__(self, "data", data)
        shape = np.shape(jets.primal(data))
        rank = self.valence.rank
        if tuple(shape[:rank]) != (self.dim,) * rank:
            raise ShapeMismatch(
                f"components of shape {shape} do not fit valence {self.valence} in dimension {self.dim}"
            )

    # construction -------------------------------------------------------

    @classmethod
    def from_flat(cls, dim: int, valence: Any, components: Sequence[float]) -> Tensor:
        valence = as_valence(valence)
        arr = np.asarray(components, dtype=float)
        if arr.size != dim**valence.rank:
            raise ShapeMismatch(f"expected {dim ** valence.rank} components, got {arr.size}")
        return cls(dim, valence, arr.reshape((dim,) * valence.rank))

    @classmethod
    def zeros(cls, dim: int, valence: Any) -> Tensor:
        valence = as_valence(valence)
        return cls(dim, valence, np.zeros((dim,) * valence.rank))

    @classmethod
    def identity(cls, dim: int) -> Tensor:
        return cls(dim, Valence(1, 1), np.eye(dim))

    # access -------------------------------------------------------------

    @property
    def rank(self) -> int:
        return self.valence.rank

    @property
    def components(self) -> np.ndarray:
        """Flat row-major component values with perturbations stripped."""
        arr = np.asarray(jets.primal(self.data), dtype=float)
        if arr.ndim > self.rank:
            raise ShapeMismatch("batched tensor has no flat component list")
        return arr.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(jets.primal(self.data), dtype=float)

    def __getitem__(self, idx):
        return self.data[idx]

    def same_kind(self, other: Tensor) -> bool:
        return self.dim == other.dim and self.valence == other.valence

    # arithmetic ---------------------------------------------------------

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return add(self, scale(-1.0, other))

    def __neg__(self) -> Tensor:
        return scale(-1.0, self)

    def __mul__(self, c: Any) -> Tensor:
        return scale(c, self)

    __rmul__ = __mul__


def _require_same(a: Tensor, b: Tensor) -> None:
    if a.dim != b.dim or a.valence != b.valence:
        raise ShapeMismatch(f"cannot combine valence {a.valence} in dim {a.dim} with {b.valence} in dim {b.dim}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same(a, b)
    return Tensor(a.dim, a.valence, a.data + b.data)


def scale(c: Any, a: Tensor) -> Tensor:
    """Multiply by a scalar; `c` may itself carry batch axes or perturbations."""
    return Tensor(a.dim, a.valence, a.data * c)


def linear_combination(coefficients: Sequence[Any], tensors: Sequence[Tensor]) -> Tensor:
    if len(coefficients) != len(tensors) or not tensors:
        raise ShapeMismatch("coefficient and tensor counts differ")
    out = scale(coefficients[0], tensors[0])
    for c, t in zip(coefficients[1:], tensors[1:]):
        out = add(out, scale(c, t))
    return out


def tensor_product(a: Tensor, b: Tensor) -> Tensor:
    """Slots ordered as: uppers of a, uppers of b, lowers of a, lowers of b."""
    if a.dim != b.dim:
        raise ShapeMismatch(f"dimensions {a.dim} and {b.dim} differ")
    ra, sa = a.valence
    rb, sb = b.valence
    la = _LETTERS[: ra + sa]
    lb = _LETTERS[ra + sa : ra + sa + rb + sb]
    out = la[:ra] + lb[:rb] + la[ra:] + lb[rb:]
    data = jets.einsum(f"{la}...,{lb}...->{out}...", a.data, b.data)
    return Tensor(a.dim, Valence(ra + rb, sa + sb), data)


def contract(a: Tensor, upper: int, lower: int) -> Tensor:
    """Trace an upper slot against a lower slot (0-based slot numbers)."""
    r, s = a.valence
    if not 0 <= upper < r:
        raise SlotOutOfRange(f"upper slot {upper} out of range for valence {a.valence}")
    if not 0 <= lower < s:
        raise SlotOutOfRange(f"lower slot {lower} out of range for valence {a.valence}")
    letters = list(_LETTERS[: r + s])
    letters[r + lower] = letters[upper]
    out = [c for k, c in enumerate(letters) if k not in (upper, r + lower)]
    data = jets.einsum(f"{''.join(letters)}...->{''.join(out)}...", a.data)
    return Tensor(a.dim, Valence(r - 1, s - 1), data)


def contract_all(a: Tensor, b: Tensor) -> Tensor:
    """Full contraction of `a` (valence (r, s)) with `b` (valence (s, r)).

    Upper slot k of `a` pairs with lower slot k of `b` and lower slot k of `a`
    with upper slot k of `b`; the result is a scalar.
    """
    r, s = a.valence
    if b.valence != Valence(s, r) or a.dim != b.dim:
        raise ShapeMismatch(f"cannot fully contract {a.valence} with {b.valence}")
    la = _LETTERS[: r + s]
    lb = la[r:] + la[:r]
    return Tensor(a.dim, Valence(0, 0), jets.einsum(f"{la}...,{lb}...->...", a.data, b.data))


def act(g: Any, x: Tensor) -> Tensor:
    """Algebraic action of an endomorphism ``g`` (a (1,1) array) on ``x``.

    Adds ``g`` applied to each upper slot and subtracts its transpose applied
    to each lower slot; scalars are annihilated.
    """
    if isinstance(g, Tensor):
        g = g.data
    r, s = x.valence
    rank = r + s
    if rank == 0:
        return Tensor(x.dim, x.valence, x.data * 0.0)
    letters = _LETTERS[:rank]
    fresh = _LETTERS[rank]
    total = None
    for m in range(rank):
        out = letters[:m] + fresh + letters[m + 1 :]
        if m < r:
            term = jets.einsum(f"{fresh}{letters[m]}...,{letters}...->{out}...", g, x.data)
        else:
            term = -jets.einsum(f"{letters[m]}{fresh}...,{letters}...->{out}...", g, x.data)
        total = term if total is None else total + term
    return Tensor(x.dim, x.valence, total)


def change_basis(x: Tensor, upper: Any, lower: Any) -> Tensor:
    """Apply ``upper[i, h]`` to every upper slot and ``lower[k, j]`` to every lower slot.

    Upper slots become ``sum_h upper[i, h] X[h]``, lower slots become
    ``sum_k X[k] lower[k, j]``.
    """
    r, s = x.valence
    rank = r + s
    if rank == 0:
        return x
    old = _LETTERS[:rank]
    new = _LETTERS[rank : 2 * rank]
    subs = [f"{old}..."]
    ops = [x.data]
    for m in range(r):
        subs.append(f"{new[m]}{old[m]}...")
        ops.append(upper)
    for m in range(r, rank):
        subs.append(f"{old[m]}{new[m]}...")
        ops.append(lower)
    data = jets.einsum(",".join(subs) + f"->{new}...", *ops)
    return Tensor(x.dim, x.valence, data)


def permute_lower(x: Tensor, order: Sequence[int]) -> Tensor:
    """Reorder lower slots: new lower slot k is old lower slot ``order[k]``."""
    r, s = x.valence
    if sorted(order) != list(range(s)):
        raise SlotOutOfRange(f"{order!r} is not a permutation of {s} lower slots")
    letters = _LETTERS[: r + s]
    out = letters[:r] + "".join(letters[r + k] for k in order)
    return Tensor(x.dim, x.valence, jets.einsum(f"{letters}...->{out}...", x.data))


def component(x: Tensor, upper: Sequence[int], lower: Sequence[int]) -> Any:
    """Single component by 0-based indices."""
    r, s = x.valence
    if len(upper) != r or len(lower) != s:
        raise ShapeMismatch(f"valence {x.valence} needs {r} upper and {s} lower indices")
    for i in (*upper, *lower):
        if not 0 <= i < x.dim:
            raise IndexOutOfRange(f"index {i} out of range for dimension {x.dim}")
    return x.data[tuple(upper) + tuple(lower)]


def max_abs(x: Any) -> float:
    arr = np.asarray(jets.primal(x.data if isinstance(x, Tensor) else x), dtype=float)
    return float(np.max(np.abs(arr))) if arr.size else 0.0


# ---------------------------------------------------------------- literals


def parse_index_key(key: str, valence: Valence, dim: int) -> tuple[int, ...]:
    """Parse ``"i1,...,ir;j1,...,js"`` (1-based) into 0-based indices.

    Without a ``;`` the indices are read in slot order, uppers first.
    Single-digit indices may be written without commas.
    """
    r, s = valence
    text = key.replace(" ", "")
    if ";" in text:
        up_text, low_text = text.split(";", 1)
        parts = [_indices(up_text, key), _indices(low_text, key)]
        if len(parts[0]) != r or len(parts[1]) != s:
            raise ValidationError(f"index key {key!r} does not match valence {valence}")
        idx = parts[0] + parts[1]
    else:
        idx = _indices(text, key)
        if len(idx) != r + s:
            raise ValidationError(f"index key {key!r} does not match valence {valence}")
    for i in idx:
        if not 1 <= i <= dim:
            raise ValidationError(f"index {i} in key {key!r} outside 1..{dim}")
    return tuple(i - 1 for i in idx)


def _indices(text: str, key: str) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        if "," in text:
            return tuple(int(p) for p in text.split(","))
        return tuple(int(c) for c in text)
    except ValueError:
        raise ValidationError(f"malformed index key {key!r}") from None


def index_key(idx: Sequence[int], valence: Valence) -> str:
    """Inverse of `parse_index_key` for 0-based indices."""
    r = valence.r
    up = ",".join(str(i + 1) for i in idx[:r])
    low = ",".join(str(i + 1) for i in idx[r:])
    return f"{up};{low}"


def from_literal(dim: int, valence: Any, literal: Any) -> Tensor:
    """Numeric tensor from nested lists, a flat list, or a sparse key map."""
    valence = as_valence(valence)
    if isinstance(literal, Mapping):
        arr = np.zeros((dim,) * valence.rank)
        for key, value in literal.items():
            arr[parse_index_key(key, valence, dim)] = float(value)
        return Tensor(dim, valence, arr)
    arr = np.asarray(literal, dtype=float)
    if arr.ndim == 1 and valence.rank != 1:
        return Tensor.from_flat(dim, valence, arr)
    return Tensor(dim, valence, arr)


def entries(x: Tensor) -> Iterable[tuple[tuple[int, ...], float]]:
    arr = x.array
    for idx in multi_indices(x.dim, x.rank):
        yield idx, float(arr[idx])
