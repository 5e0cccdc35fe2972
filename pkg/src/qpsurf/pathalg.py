"""Truncated noncommutative power series over the path algebra of a quiver.

Paths are tuples of arrow ids read left to right: ``(a, b)`` is defined when
``head(a) == tail(b)``.  Every series here lives in the arrow ideal, so the
empty path never carries a coefficient.  Coefficients are exact
:class:`fractions.Fraction` values.

The central objects are:

* :class:`Quiver` -- vertex and arrow incidence.
* :class:`Series` -- a finite map from paths to scalars, truncated at a degree.
* :class:`Potential` -- a series of cycles stored by canonical rotation.
* :class:`Morphism` -- a vertex-fixing substitution rule for arrows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence, Union

Scalar = Fraction
PathKey = tuple[str, ...]
Degree = Union[int, None]  # None means "no truncation"
INFINITY = math.inf


class PathAlgebraError(ValueError):
    """Raised on malformed paths, unknown arrows or endpoint violations."""


def as_scalar(value: Union[int, str, Fraction]) -> Fraction:
    """Coerce ``value`` to an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise PathAlgebraError("floating point coefficients are not exact")
    return Fraction(value)


def _min_degree(a: Degree, b: Degree) -> Degree:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


# ---------------------------------------------------------------------------
# Quivers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Arrow:
    name: str
    tail: str
    head: str


class Quiver:
    """A finite quiver with named vertices and named arrows."""

    __slots__ = ("vertices", "arrows", "_by_name", "_hash")

    def __init__(self, vertices: Iterable[str], arrows: Iterable[Arrow | tuple[str, str, str]]):
        verts = tuple(sorted(set(vertices)))
        arrs: list[Arrow] = []
        by_name: dict[str, Arrow] = {}
        vset = set(verts)
        for raw in arrows:
            arrow = raw if isinstance(raw, Arrow) else Arrow(*raw)
            if arrow.name in by_name:
                raise PathAlgebraError(f"duplicate arrow id {arrow.name!r}")
            if arrow.tail not in vset or arrow.head not in vset:
                raise PathAlgebraError(f"arrow {arrow.name!r} has an undeclared endpoint")
            by_name[arrow.name] = arrow
            arrs.append(arrow)
        self.vertices = verts
        self.arrows = tuple(sorted(arrs))
        self._by_name = by_name
        self._hash = hash((self.vertices, self.arrows))

    # -- lookup ------------------------------------------------------------
    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def arrow(self, name: str) -> Arrow:
        try:
            return self._by_name[name]
        except KeyError:
            raise PathAlgebraError(f"unknown arrow {name!r}") from None

    def tail(self, name: str) -> str:
        return self.arrow(name).tail

    def head(self, name: str) -> str:
        return self.arrow(name).head

    @property
    def arrow_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.arrows)

    def arrows_between(self, tail: str, head: str) -> tuple[str, ...]:
        return tuple(a.name for a in self.arrows if a.tail == tail and a.head == head)

    def arrows_at(self, vertex: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """Return ``(incoming, outgoing)`` arrow ids at ``vertex``."""
        incoming = tuple(a.name for a in self.arrows if a.head == vertex)
        outgoing = tuple(a.name for a in self.arrows if a.tail == vertex)
        return incoming, outgoing

    # -- paths ---------------------------------------------------------------
    def check_path(self, path: Sequence[str]) -> PathKey:
        if not path:
            raise PathAlgebraError("empty path")
        key = tuple(path)
        for a, b in zip(key, key[1:]):
            if self.head(a) != self.tail(b):
                raise PathAlgebraError(f"arrows {a!r} and {b!r} are not composable")
        self.arrow(key[-1])
        return key

    def path_tail(self, path: PathKey) -> str:
        return self.tail(path[0])

    def path_head(self, path: PathKey) -> str:
        return self.head(path[-1])

    def is_cycle(self, path: PathKey) -> bool:
        return self.head(path[-1]) == self.tail(path[0])

    # -- structure -----------------------------------------------------------
    def two_cycles(self) -> list[tuple[str, str]]:
        """All pairs ``(a, b)`` of arrows forming an oriented 2-cycle, ``a < b``."""
        found = []
        for a in self.arrows:
            for b in self.arrows:
                if a.name < b.name and a.tail == b.head and a.head == b.tail and a.tail != a.head:
                    found.append((a.name, b.name))
        return found

    def has_loops(self) -> bool:
        return any(a.tail == a.head for a in self.arrows)

    def without_arrows(self, names: Iterable[str]) -> "Quiver":
        drop = set(names)
        return Quiver(self.vertices, [a for a in self.arrows if a.name not in drop])

    def restricted_to(self, names: Iterable[str]) -> "Quiver":
        keep = set(names)
        return Quiver(self.vertices, [a for a in self.arrows if a.name in keep])

    def union(self, other: "Quiver") -> "Quiver":
        if set(self.vertices) != set(other.vertices):
            raise PathAlgebraError("vertex sets differ")
        merged = {a.name: a for a in self.arrows}
        for a in other.arrows:
            if a.name in merged and merged[a.name] != a:
                raise PathAlgebraError(f"arrow {a.name!r} has conflicting endpoints")
            merged[a.name] = a
        return Quiver(self.vertices, merged.values())

    def renamed(self, arrow_map: Mapping[str, str] | None = None,
                vertex_map: Mapping[str, str] | None = None) -> "Quiver":
        am = arrow_map or {}
        vm = vertex_map or {}
        return Quiver(
            [vm.get(v, v) for v in self.vertices],
            [Arrow(am.get(a.name, a.name), vm.get(a.tail, a.tail), vm.get(a.head, a.head))
             for a in self.arrows],
        )

    def exchange_matrix(self) -> dict[tuple[str, str], int]:
        """Signed arrow counts ``b[u, v] = #(u -> v) - #(v -> u)`` (nonzero entries only)."""
        b: dict[tuple[str, str], int] = {}
        for a in self.arrows:
            if a.tail == a.head:
                continue
            b[(a.tail, a.head)] = b.get((a.tail, a.head), 0) + 1
            b[(a.head, a.tail)] = b.get((a.head, a.tail), 0) - 1
        return {k: v for k, v in b.items() if v}

    def incidence(self) -> dict[tuple[str, str], int]:
        """Arrow counts per ordered vertex pair."""
        counts: dict[tuple[str, str], int] = {}
        for a in self.arrows:
            counts[(a.tail, a.head)] = counts.get((a.tail, a.head), 0) + 1
        return counts

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Quiver):
            return NotImplemented
        return self.vertices == other.vertices and self.arrows == other.arrows

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Quiver({len(self.vertices)} vertices, {len(self.arrows)} arrows)"


# ---------------------------------------------------------------------------
# Series
# ---------------------------------------------------------------------------


def _truncate(terms: Mapping[PathKey, Fraction], trunc: Degree) -> dict[PathKey, Fraction]:
    if trunc is None:
        return {k: v for k, v in terms.items() if v}
    return {k: v for k, v in terms.items() if v and len(k) <= trunc}


class Series:
    """An element of the arrow ideal, stored as ``{path: coefficient}``.

    The truncation degree ``trunc`` is the largest path length kept; ``None``
    means the series is an exact finite sum.
    """

    __slots__ = ("quiver", "terms", "trunc")

    def __init__(self, quiver: Quiver, terms: Mapping[PathKey, Fraction] | None = None,
                 trunc: Degree = None, *, check: bool = True):
        self.quiver = quiver
        self.trunc = trunc
        raw = dict(terms or {})
        if check:
            for path in raw:
                quiver.check_path(path)
            raw = {k: as_scalar(v) for k, v in raw.items()}
        self.terms = _truncate(raw, trunc)

    # -- construction helpers ------------------------------------------------
    @classmethod
    def zero(cls, quiver: Quiver, trunc: Degree = None) -> "Series":
        return cls(quiver, {}, trunc, check=False)

    @classmethod
    def arrow(cls, quiver: Quiver, name: str, coeff: Fraction | int = 1, trunc: Degree = None) -> "Series":
        quiver.arrow(name)
        return cls(quiver, {(name,): as_scalar(coeff)}, trunc, check=False)

    @classmethod
    def from_terms(cls, quiver: Quiver, items: Iterable[tuple[Fraction | int | str, Sequence[str]]],
                   trunc: Degree = None) -> "Series":
        acc: dict[PathKey, Fraction] = {}
        for coeff, path in items:
            key = quiver.check_path(path)
            acc[key] = acc.get(key, Fraction(0)) + as_scalar(coeff)
        return cls(quiver, acc, trunc, check=False)

    # -- inspection ----------------------------------------------------------
    def __bool__(self) -> bool:
        return bool(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[PathKey, Fraction]]:
        return iter(sorted(self.terms.items(), key=lambda kv: (len(kv[0]), kv[0])))

    def coefficient(self, path: Sequence[str]) -> Fraction:
        return self.terms.get(tuple(path), Fraction(0))

    def short(self) -> float:
        """Minimal term length; infinity for the zero series."""
        return min((len(k) for k in self.terms), default=INFINITY)

    def max_length(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def degree_part(self, low: int, high: int | None = None) -> "Series":
        hi = low if high is None else high
        return Series(self.quiver, {k: v for k, v in self.terms.items() if low <= len(k) <= hi},
                      self.trunc, check=False)

    def with_trunc(self, trunc: Degree) -> "Series":
        return Series(self.quiver, self.terms, _min_degree(self.trunc, trunc), check=False)

    # -- arithmetic ----------------------------------------------------------
    def _combine(self, other: "Series", sign: int) -> "Series":
        if other.quiver is not self.quiver and other.quiver != self.quiver:
            raise PathAlgebraError("series live on different quivers")
        trunc = _min_degree(self.trunc, other.trunc)
        acc = dict(self.terms)
        for k, v in other.terms.items():
            nv = acc.get(k, 0) + sign * v
            if nv:
                acc[k] = nv
            else:
                acc.pop(k, None)
        return Series(self.quiver, acc, trunc, check=False)

    def __add__(self, other: "Series") -> "Series":
        return self._combine(other, 1)

    def __sub__(self, other: "Series") -> "Series":
        return self._combine(other, -1)

    def __neg__(self) -> "Series":
        return self.scale(-1)

    def scale(self, c: Fraction | int) -> "Series":
        c = as_scalar(c)
        if not c:
            return Series.zero(self.quiver, self.trunc)
        return Series(self.quiver, {k: c * v for k, v in self.terms.items()}, self.trunc, check=False)

    def __mul__(self, other: "Series") -> "Series":
        trunc = _min_degree(self.trunc, other.trunc)
        q = self.quiver
        by_tail: dict[str, list[tuple[PathKey, Fraction]]] = {}
        for k, v in other.terms.items():
            by_tail.setdefault(q.tail(k[0]), []).append((k, v))
        acc: dict[PathKey, Fraction] = {}
        for k1, v1 in self.terms.items():
            h = q.head(k1[-1])
            for k2, v2 in by_tail.get(h, ()):
                if trunc is not None and len(k1) + len(k2) > trunc:
                    continue
                key = k1 + k2
                acc[key] = acc.get(key, 0) + v1 * v2
        return Series(q, acc, trunc, check=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        return self.quiver == other.quiver and self.terms == other.terms

    def __repr__(self) -> str:
        return f"Series({format_terms(self.terms)}; N={self.trunc})"


def format_terms(terms: Mapping[PathKey, Fraction]) -> str:
    items = sorted(terms.items(), key=lambda kv: (len(kv[0]), kv[0]))
    if not items:
        return "0"
    return " + ".join(f"{v}*{'.'.join(k)}" for k, v in items)


# ---------------------------------------------------------------------------
# Cycles and potentials
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1 << 18)
def _least_rotation(cycle: PathKey) -> PathKey:
    n = len(cycle)
    best = cycle
    for i in range(1, n):
        rot = cycle[i:] + cycle[:i]
        if rot < best:
            best = rot
    return best


def canonicalize_cycle(quiver: Quiver, cycle: Sequence[str]) -> PathKey:
    """Least rotation of ``cycle`` (string order on arrow ids)."""
    key = quiver.check_path(cycle)
    if not quiver.is_cycle(key):
        raise PathAlgebraError(f"path {'.'.join(key)} is not a cycle")
    return _least_rotation(key)


def rotations(cycle: PathKey) -> Iterator[PathKey]:
    for i in range(len(cycle)):
        yield cycle[i:] + cycle[:i]


class Potential:
    """A linear combination of cycles up to rotation, keyed by least rotation."""

    __slots__ = ("quiver", "terms", "trunc")

    def __init__(self, quiver: Quiver, terms: Mapping[PathKey, Fraction] | None = None,
                 trunc: Degree = None, *, canonical: bool = False):
        self.quiver = quiver
        self.trunc = trunc
        acc: dict[PathKey, Fraction] = {}
        for k, v in (terms or {}).items():
            if not v or (trunc is not None and len(k) > trunc):
                continue
            key = k if canonical else canonicalize_cycle(quiver, k)
            nv = acc.get(key, Fraction(0)) + (v if canonical else as_scalar(v))
            if nv:
                acc[key] = nv
            else:
                acc.pop(key, None)
        self.terms = acc

    @classmethod
    def zero(cls, quiver: Quiver, trunc: Degree = None) -> "Potential":
        return cls(quiver, {}, trunc, canonical=True)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[tuple[PathKey, Fraction]]:
        return iter(sorted(self.terms.items(), key=lambda kv: (len(kv[0]), kv[0])))

    def coefficient(self, cycle: Sequence[str]) -> Fraction:
        return self.terms.get(canonicalize_cycle(self.quiver, cycle), Fraction(0))

    def short(self) -> float:
        return min((len(k) for k in self.terms), default=INFINITY)

    def max_length(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    def term_list(self) -> list[tuple[Fraction, PathKey]]:
        return [(v, k) for k, v in self]

    def as_series(self) -> Series:
        return Series(self.quiver, self.terms, self.trunc, check=False)

    def degree_part(self, low: int, high: int | None = None) -> "Potential":
        hi = low if high is None else high
        return Potential(self.quiver, {k: v for k, v in self.terms.items() if low <= len(k) <= hi},
                         self.trunc, canonical=True)

    def with_trunc(self, trunc: Degree) -> "Potential":
        return Potential(self.quiver, self.terms, _min_degree(self.trunc, trunc), canonical=True)

    def on_quiver(self, quiver: Quiver) -> "Potential":
        """The same terms viewed on a quiver containing all of their arrows."""
        return Potential(quiver, self.terms, self.trunc)

    def arrows_used(self) -> set[str]:
        return {a for k in self.terms for a in k}

    def _combine(self, other: "Potential", sign: int) -> "Potential":
        trunc = _min_degree(self.trunc, other.trunc)
        acc = dict(self.terms)
        for k, v in other.terms.items():
            nv = acc.get(k, 0) + sign * v
            if nv:
                acc[k] = nv
            else:
                acc.pop(k, None)
        return Potential(self.quiver, acc, trunc, canonical=True)

    def __add__(self, other: "Potential") -> "Potential":
        return self._combine(other, 1)

    def __sub__(self, other: "Potential") -> "Potential":
        return self._combine(other, -1)

    def scale(self, c: Fraction | int) -> "Potential":
        c = as_scalar(c)
        return Potential(self.quiver, {k: c * v for k, v in self.terms.items()}, self.trunc,
                         canonical=True)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Potential):
            return NotImplemented
        return set(self.quiver.vertices) == set(other.quiver.vertices) and self.terms == other.terms

    def __repr__(self) -> str:
        return f"Potential({format_terms(self.terms)}; N={self.trunc})"


def cyclic_normal_form(quiver: Quiver, terms: Iterable[tuple[Fraction | int | str, Sequence[str]]],
                       trunc: Degree = None) -> Potential:
    """Sum ``(coefficient, cycle)`` pairs over rotation classes."""
    acc: dict[PathKey, Fraction] = {}
    for coeff, cycle in terms:
        key = canonicalize_cycle(quiver, cycle)
        acc[key] = acc.get(key, Fraction(0)) + as_scalar(coeff)
    return Potential(quiver, acc, trunc, canonical=True)


def series_to_potential(series: Series) -> Potential:
    """Read a series of cycles as a potential (rotation classes merged)."""
    acc: dict[PathKey, Fraction] = {}
    q = series.quiver
    for k, v in series.terms.items():
        if q.head(k[-1]) != q.tail(k[0]):
            raise PathAlgebraError(f"term {'.'.join(k)} is not a cycle")
        key = _least_rotation(k)
        acc[key] = acc.get(key, 0) + v
    return Potential(q, acc, series.trunc, canonical=True)


def cyclic_derivative(potential: Potential, arrow: str) -> Series:
    """The cyclic derivative of ``potential`` with respect to ``arrow``.

    A term ``c * a_1 ... a_d`` contributes ``c * a_{i+1} ... a_d a_1 ... a_{i-1}``
    for every position ``i`` with ``a_i == arrow``.  A cycle of length one has
    the idempotent as derivative, which is outside the arrow ideal, so such
    terms are rejected.
    """
    q = potential.quiver
    q.arrow(arrow)
    acc: dict[PathKey, Fraction] = {}
    for k, v in potential.terms.items():
        for i, a in enumerate(k):
            if a != arrow:
                continue
            rest = k[i + 1:] + k[:i]
            if not rest:
                raise PathAlgebraError(f"cycle {arrow!r} of length one has an idempotent derivative")
            acc[rest] = acc.get(rest, 0) + v
    trunc = None if potential.trunc is None else potential.trunc - 1
    return Series(q, acc, trunc, check=False)


# ---------------------------------------------------------------------------
# Morphisms
# ---------------------------------------------------------------------------


class Morphism:
    """A continuous, vertex-fixing algebra map given on arrows.

    ``images[a]`` is the full image of arrow ``a`` (linear plus higher part) as
    a term dictionary on the target quiver.  Source arrows missing from
    ``images`` are sent to the arrow of the same name in the target.
    """

    __slots__ = ("source", "target", "images", "trunc", "_min_len")

    def __init__(self, source: Quiver, target: Quiver,
                 images: Mapping[str, Series | Mapping[PathKey, Fraction]] | None = None,
                 trunc: Degree = None):
        if set(source.vertices) != set(target.vertices):
            raise PathAlgebraError("morphisms must fix the vertex set")
        self.source = source
        self.target = target
        self.trunc = trunc
        full: dict[str, dict[PathKey, Fraction]] = {}
        given = dict(images or {})
        for name in given:
            source.arrow(name)
        for arr in source.arrows:
            img = given.get(arr.name)
            if img is None:
                if arr.name not in target or target.arrow(arr.name).tail != arr.tail \
                        or target.arrow(arr.name).head != arr.head:
                    raise PathAlgebraError(f"no image given for arrow {arr.name!r}")
                terms = {(arr.name,): Fraction(1)}
            else:
                terms = dict(img.terms if isinstance(img, Series) else img)
                terms = _truncate({tuple(k): as_scalar(v) for k, v in terms.items()}, trunc)
                for path in terms:
                    target.check_path(path)
                    if target.tail(path[0]) != arr.tail or target.head(path[-1]) != arr.head:
                        raise PathAlgebraError(
                            f"image term {'.'.join(path)} of {arr.name!r} has the wrong endpoints")
            full[arr.name] = terms
        self.images = full
        self._min_len = {a: min((len(k) for k in t), default=INFINITY) for a, t in full.items()}

    # -- constructors ----------------------------------------------------------
    @classmethod
    def identity(cls, quiver: Quiver, trunc: Degree = None) -> "Morphism":
        return cls(quiver, quiver, {}, trunc)

    @classmethod
    def from_rules(cls, source: Quiver, rules: Mapping[str, Iterable[tuple[Fraction | int | str, Sequence[str]]]],
                   target: Quiver | None = None, trunc: Degree = None) -> "Morphism":
        """Build from ``{arrow: [(coeff, path), ...]}``; unlisted arrows are fixed."""
        tgt = target or source
        images: dict[str, dict[PathKey, Fraction]] = {}
        for name, items in rules.items():
            acc: dict[PathKey, Fraction] = {}
            for coeff, path in items:
                key = tuple(path)
                acc[key] = acc.get(key, Fraction(0)) + as_scalar(coeff)
            images[name] = {k: v for k, v in acc.items() if v}
        return cls(source, tgt, images, trunc)

    # -- parts -----------------------------------------------------------------
    def image(self, arrow: str) -> Series:
        return Series(self.target, self.images[arrow], self.trunc, check=False)

    def linear_part(self, arrow: str) -> dict[str, Fraction]:
        return {k[0]: v for k, v in self.images[arrow].items() if len(k) == 1}

    def higher_part(self, arrow: str) -> Series:
        return Series(self.target, {k: v for k, v in self.images[arrow].items() if len(k) >= 2},
                      self.trunc, check=False)

    def is_unitriangular(self) -> bool:
        return self.source == self.target and all(
            self.linear_part(a) == {a: 1} for a in self.source.arrow_names)

    def nontrivial_arrows(self) -> list[str]:
        return [a for a, t in self.images.items() if t != {(a,): 1}]

    def with_trunc(self, trunc: Degree) -> "Morphism":
        return Morphism(self.source, self.target, self.images, _min_degree(self.trunc, trunc))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Morphism):
            return NotImplemented
        return self.source == other.source and self.target == other.target and self.images == other.images

    def __repr__(self) -> str:
        rules = ", ".join(f"{a} -> {format_terms(self.images[a])}" for a in self.nontrivial_arrows())
        return f"Morphism({rules or 'identity'}; N={self.trunc})"


def _apply_terms(phi: Morphism, terms: Mapping[PathKey, Fraction], trunc: Degree,
                 dropped: list[bool] | None = None) -> dict[PathKey, Fraction]:
    images = phi.images
    min_len = phi._min_len
    out: dict[PathKey, Fraction] = {}
    for path, coeff in terms.items():
        suffix_min = [0] * (len(path) + 1)
        for i in range(len(path) - 1, -1, -1):
            suffix_min[i] = suffix_min[i + 1] + min_len[path[i]]
        if suffix_min[0] == INFINITY or (trunc is not None and suffix_min[0] > trunc):
            if dropped is not None and suffix_min[0] != INFINITY:
                dropped.append(True)
            continue
        partial: dict[PathKey, Fraction] = {(): coeff}
        for i, a in enumerate(path):
            img = images[a]
            budget = None if trunc is None else trunc - suffix_min[i + 1]
            nxt: dict[PathKey, Fraction] = {}
            for pk, pv in partial.items():
                lp = len(pk)
                for ik, iv in img.items():
                    if budget is not None and lp + len(ik) > budget:
                        if dropped is not None:
                            dropped.append(True)
                        continue
                    key = pk + ik
                    nxt[key] = nxt.get(key, 0) + pv * iv
            partial = nxt
            if not partial:
                break
        for k, v in partial.items():
            nv = out.get(k, 0) + v
            if nv:
                out[k] = nv
            else:
                out.pop(k, None)
    return out


def apply_morphism(phi: Morphism, u: Series | Potential, trunc: Degree = None,
                   dropped: list[bool] | None = None) -> Series | Potential:
    """Substitute arrow images into ``u``; potentials are renormalized.

    If ``dropped`` is given, ``True`` is appended to it whenever truncation
    discarded a contribution, so callers can tell exact results apart.
    """
    if u.quiver != phi.source:
        raise PathAlgebraError("argument does not live on the morphism's source quiver")
    n = _min_degree(_min_degree(phi.trunc, u.trunc), trunc)
    raw = _apply_terms(phi, u.terms, n, dropped)
    if isinstance(u, Potential):
        acc: dict[PathKey, Fraction] = {}
        for k, v in raw.items():
            key = _least_rotation(k)
            acc[key] = acc.get(key, 0) + v
        return Potential(phi.target, acc, n, canonical=True)
    return Series(phi.target, raw, n, check=False)


def morphism_depth(phi: Morphism) -> float:
    """Largest ``l`` with every higher part in the ``(l+1)``-st power of the arrow ideal."""
    if not phi.is_unitriangular():
        raise PathAlgebraError("depth is only defined for unitriangular morphisms")
    shortest = INFINITY
    for a, terms in phi.images.items():
        for k in terms:
            if len(k) >= 2 and len(k) < shortest:
                shortest = len(k)
    return shortest - 1


def compose_morphisms(phi2: Morphism, phi1: Morphism, trunc: Degree = None) -> Morphism:
    """The composite ``phi2 o phi1`` (apply ``phi1`` first)."""
    if phi1.target != phi2.source:
        raise PathAlgebraError("morphisms are not composable")
    n = _min_degree(_min_degree(phi1.trunc, phi2.trunc), trunc)
    images = {a: _apply_terms(phi2, t, n) for a, t in phi1.images.items()}
    return Morphism(phi1.source, phi2.target, images, n)


def _linear_blocks(phi: Morphism) -> dict[tuple[str, str], tuple[list[str], list[str], list[list[Fraction]]]]:
    blocks: dict[tuple[str, str], tuple[list[str], list[str], list[list[Fraction]]]] = {}
    pairs = {(a.tail, a.head) for a in phi.source.arrows} | {(a.tail, a.head) for a in phi.target.arrows}
    for t, h in sorted(pairs):
        src = list(phi.source.arrows_between(t, h))
        tgt = list(phi.target.arrows_between(t, h))
        mat = [[phi.linear_part(a).get(b, Fraction(0)) for a in src] for b in tgt]
        blocks[(t, h)] = (src, tgt, mat)
    return blocks


def _invert_matrix(mat: list[list[Fraction]]) -> list[list[Fraction]] | None:
    n = len(mat)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(mat)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col]), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


def is_automorphism(phi: Morphism) -> bool:
    """Invertibility of the linear part, block by block over ordered vertex pairs."""
    for src, tgt, mat in _linear_blocks(phi).values():
        if len(src) != len(tgt):
            return False
        if src and _invert_matrix(mat) is None:
            return False
    return True


def invert_linear(phi: Morphism) -> Morphism:
    """The morphism ``target -> source`` given by the inverse of the linear part."""
    images: dict[str, dict[PathKey, Fraction]] = {}
    for (t, h), (src, tgt, mat) in _linear_blocks(phi).items():
        if len(src) != len(tgt):
            raise PathAlgebraError(f"linear part is not square between {t} and {h}")
        if not src:
            continue
        inv = _invert_matrix(mat)
        if inv is None:
            raise PathAlgebraError(f"linear part is singular between {t} and {h}")
        # mat maps source coordinates to target coordinates; inv maps back.
        for i, b in enumerate(tgt):
            images[b] = {(a,): inv[j][i] for j, a in enumerate(src) if inv[j][i]}
    return Morphism(phi.target, phi.source, images, phi.trunc)


def invert_morphism(phi: Morphism, trunc: int) -> Morphism:
    """Two-sided inverse of an automorphism modulo paths longer than ``trunc``.

    Starts from the linear inverse and repeatedly corrects by the unitriangular
    error ``phi o psi``; each pass at least doubles the depth of that error.
    """
    psi = invert_linear(phi).with_trunc(trunc)
    for _ in range(2 * trunc + 2):
        err = compose_morphisms(phi, psi, trunc)  # target -> target, unitriangular
        if err.is_unitriangular() and morphism_depth(err) >= trunc:
            return psi
        # (id + h)^{-1} ~ id - h at first order; iterate
        correction = {a: {k: -v for k, v in err.images[a].items() if len(k) >= 2}
                      for a in err.source.arrow_names}
        for a in correction:
            correction[a][(a,)] = Fraction(1)
        fix = Morphism(err.source, err.source, correction, trunc)
        psi = compose_morphisms(psi, fix, trunc)
    raise PathAlgebraError("inverse did not converge")


@dataclass
class LimitResult:
    morphism: Morphism
    steps: int
    depths: list[float] = field(default_factory=list)


def limit_compose(steps: Iterable[Morphism], trunc: int, start: Morphism | None = None,
                  max_steps: int = 10_000) -> LimitResult:
    """Compose ``... psi_2 psi_1`` until a factor of depth ``>= trunc`` appears.

    Such a factor (and every later one, by the caller's contract) acts as the
    identity modulo paths longer than ``trunc`` on anything in the arrow ideal,
    so the truncated composite is final.  ``start`` is applied first.
    """
    composed = start
    depths: list[float] = []
    count = 0
    for psi in steps:
        if count >= max_steps:
            raise PathAlgebraError(f"limit composition did not stabilise within {max_steps} steps")
        d = morphism_depth(psi)
        depths.append(d)
        count += 1
        if d >= trunc:
            break
        composed = psi.with_trunc(trunc) if composed is None else compose_morphisms(psi, composed, trunc)
    else:
        if count >= max_steps:
            raise PathAlgebraError(f"limit composition did not stabilise within {max_steps} steps")
    if composed is None:
        raise PathAlgebraError("no factors were composed and no start morphism was given")
    return LimitResult(composed, count, depths)


def unitriangular(quiver: Quiver, rules: Mapping[str, Iterable[tuple[Fraction | int, Sequence[str]]]],
                  trunc: Degree = None) -> Morphism:
    """``a -> a + sum(c * p)`` for each listed arrow ``a``."""
    full: dict[str, list[tuple[Fraction | int, Sequence[str]]]] = {}
    for a, items in rules.items():
        full[a] = [(1, (a,))] + list(items)
    return Morphism.from_rules(quiver, full, trunc=trunc)


def scaling(quiver: Quiver, factors: Mapping[str, Fraction | int], target: Quiver | None = None,
            trunc: Degree = None) -> Morphism:
    """``a -> c_a * a`` for each listed arrow."""
    return Morphism.from_rules(quiver, {a: [(c, (a,))] for a, c in factors.items()}, target, trunc)


def relabel_morphism(source: Quiver, target: Quiver, arrow_map: Mapping[str, str],
                     trunc: Degree = None) -> Morphism:
    """A morphism that renames arrows (endpoints must agree)."""
    return Morphism(source, target, {a: {(b,): Fraction(1)} for a, b in arrow_map.items()}, trunc)


def map_potential_arrows(potential: Potential, quiver: Quiver, arrow_map: Mapping[str, str]) -> Potential:
    """Rename arrows inside a potential (used for label-changing quiver isomorphisms)."""
    acc: dict[PathKey, Fraction] = {}
    for k, v in potential.terms.items():
        nk = tuple(arrow_map.get(a, a) for a in k)
        acc[nk] = acc.get(nk, 0) + v
    return Potential(quiver, acc, potential.trunc)


def count_paths(quiver: Quiver, length: int) -> int:
    counts = {v: 1 for v in quiver.vertices}
    for _ in range(length):
        nxt = {v: 0 for v in quiver.vertices}
        for a in quiver.arrows:
            nxt[a.head] += counts[a.tail]
        counts = nxt
    return sum(counts.values())


def enumerate_paths(quiver: Quiver, length: int) -> list[PathKey]:
    """All paths of exactly ``length`` arrows (``length >= 1``), sorted."""
    out: dict[str, list[str]] = {}
    for a in quiver.arrows:
        out.setdefault(a.tail, []).append(a.name)
    layer: list[PathKey] = [(a.name,) for a in quiver.arrows]
    for _ in range(length - 1):
        layer = [p + (b,) for p in layer for b in out.get(quiver.head(p[-1]), ())]
    return sorted(layer)

