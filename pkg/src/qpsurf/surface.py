"""Marked surfaces, ideal and tagged triangulations, and their QPs.

Encoding
--------
A triangle is a cyclically ordered triple of side slots ``(s1, s2, s3)``
together with the marked points at its corners ``(c1, c2, c3)``, where ``c_t``
sits between ``s_t`` and ``s_{t+1}``.  The quiver gets an arrow ``s_t -> s_{t+1}``
at corner ``c_t`` whenever both sides are arcs.  Walking around a marked point
means: from corner ``(T, t)`` cross side ``s_{t+1}`` into its other slot
``(T', u)`` and continue with corner ``(T', u)``.  Punctures are exactly the
marked points whose corners close up into a cycle.

A triangle with a repeated side is self-folded: the repeated side is the
folded side ``i``, the third side is the enclosing loop ``j``, and the corner
between the two copies of ``i`` is the enclosed puncture ``q``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .pathalg import (Arrow, Morphism, PathKey, Potential, Quiver, _least_rotation, as_scalar,
                      compose_morphisms)
from .qpcalc import QP, Certificate, check_right_equivalence, split_reduce


class SurfaceError(ValueError):
    """Raised when a triangulation or surface violates its invariants."""


# ---------------------------------------------------------------------------
# Surfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Surface:
    genus: int
    boundary: tuple[int, ...]  # marked points on each boundary component
    punctures: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.genus < 0:
            raise SurfaceError("negative genus")
        if any(c < 1 for c in self.boundary):
            raise SurfaceError("every boundary component needs a marked point")
        p, b, c = len(self.punctures), len(self.boundary), sum(self.boundary)
        if p + c == 0:
            raise SurfaceError("no marked points")
        if self.genus == 0 and b == 0 and p < 4:
            raise SurfaceError("sphere with fewer than four punctures is excluded")
        if self.genus == 0 and b == 1 and p == 0 and c <= 3:
            raise SurfaceError("unpunctured monogon, digon or triangle is excluded")
        if self.genus == 0 and b == 1 and p == 1 and c <= 2:
            raise SurfaceError("once-punctured monogon or digon is excluded")

    @property
    def arc_count(self) -> int:
        b, p, c = len(self.boundary), len(self.punctures), sum(self.boundary)
        return 6 * self.genus + 3 * b + 3 * p + c - 6

    @property
    def is_closed(self) -> bool:
        return not self.boundary

    def require_popping_admissible(self) -> None:
        if self.genus == 0 and not self.boundary and len(self.punctures) < 6:
            raise SurfaceError("sphere with fewer than six punctures")


# ---------------------------------------------------------------------------
# Ideal triangulations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Triangle:
    sides: tuple[str, str, str]
    corners: tuple[str, str, str]

    def rotated(self, start: int) -> "Triangle":
        s, c = self.sides, self.corners
        return Triangle(tuple(s[(start + t) % 3] for t in range(3)),  # type: ignore[arg-type]
                        tuple(c[(start + t) % 3] for t in range(3)))  # type: ignore[arg-type]

    def canonical(self) -> "Triangle":
        return min((self.rotated(t) for t in range(3)), key=lambda tr: (tr.sides, tr.corners))

    @property
    def is_self_folded(self) -> bool:
        return len(set(self.sides)) < 3


@dataclass(frozen=True)
class SelfFolded:
    folded: str   # i
    loop: str     # j
    puncture: str  # q
    triangle: int


Corner = tuple[int, int]  # (triangle index, corner index)


class IdealTriangulation:
    """Triangle-list encoding of an ideal triangulation.

    ``arrow_names`` optionally renames the default arrow ids
    (``"tail>head"``, with ``#n`` suffixes for parallel arrows).
    """

    def __init__(self, arcs: Iterable[str], boundary_segments: Iterable[str],
                 triangles: Iterable[Triangle], arrow_names: Mapping[str, str] | None = None):
        self.arcs = tuple(arcs)
        self.boundary_segments = tuple(boundary_segments)
        self.triangles = tuple(triangles)
        self.arrow_names = dict(arrow_names or {})
        if len(set(self.arcs)) != len(self.arcs):
            raise SurfaceError("arc labels must be unique")
        if set(self.arcs) & set(self.boundary_segments):
            raise SurfaceError("arc and boundary labels overlap")
        self._slots: dict[str, list[tuple[int, int]]] = {}
        for ti, tri in enumerate(self.triangles):
            for t, s in enumerate(tri.sides):
                self._slots.setdefault(s, []).append((ti, t))
        self.self_folded = tuple(self._find_self_folded())

    # -- basic structure -----------------------------------------------------
    def _find_self_folded(self) -> list[SelfFolded]:
        out = []
        for ti, tri in enumerate(self.triangles):
            s = tri.sides
            if len(set(s)) == 3:
                continue
            if len(set(s)) == 1:
                raise SurfaceError(f"triangle {ti} has a single repeated side")
            rep = next(x for x in s if s.count(x) == 2)
            other = next(x for x in s if x != rep)
            # the corner between the two copies of the folded side
            t = next(t for t in range(3) if s[t] == rep and s[(t + 1) % 3] == rep)
            out.append(SelfFolded(rep, other, tri.corners[t], ti))
        return out

    def slots(self, side: str) -> list[tuple[int, int]]:
        return list(self._slots.get(side, []))

    def other_slot(self, ti: int, t: int) -> tuple[int, int] | None:
        side = self.triangles[ti].sides[t]
        if side in self.boundary_segments:
            return None
        slots = self._slots[side]
        if len(slots) != 2:
            raise SurfaceError(f"arc {side!r} does not fill exactly two slots")
        return slots[1] if slots[0] == (ti, t) else slots[0]

    def next_corner(self, corner: Corner) -> Corner | None:
        ti, t = corner
        return self.other_slot(ti, (t + 1) % 3)

    def prev_corner(self, corner: Corner) -> Corner | None:
        ti, t = corner
        other = self.other_slot(ti, t)
        if other is None:
            return None
        tj, u = other
        return (tj, (u - 1) % 3)

    def corner_label(self, corner: Corner) -> str:
        return self.triangles[corner[0]].corners[corner[1]]

    def marked_point_orbits(self) -> list[tuple[list[Corner], bool]]:
        """Corner sequences around each marked point, and whether they close up."""
        seen: set[Corner] = set()
        orbits: list[tuple[list[Corner], bool]] = []
        all_corners = [(ti, t) for ti in range(len(self.triangles)) for t in range(3)]
        for start in all_corners:
            if start in seen:
                continue
            # rewind to the beginning of an open chain
            cur = start
            closed = False
            while True:
                prev = self.prev_corner(cur)
                if prev is None:
                    break
                if prev == start:
                    closed = True
                    break
                cur = prev
            first = start if closed else cur
            seq = [first]
            seen.add(first)
            cur = first
            while True:
                nxt = self.next_corner(cur)
                if nxt is None or nxt == first:
                    break
                seq.append(nxt)
                seen.add(nxt)
                cur = nxt
            orbits.append((seq, closed))
        return orbits

    def marked_points(self) -> dict[str, bool]:
        """Marked point label -> is_puncture."""
        out: dict[str, bool] = {}
        for seq, closed in self.marked_point_orbits():
            label = self.corner_label(seq[0])
            out[label] = closed
        return out

    @property
    def punctures(self) -> tuple[str, ...]:
        return tuple(sorted(p for p, closed in self.marked_points().items() if closed))

    def corners_at(self, point: str) -> list[Corner]:
        for seq, closed in self.marked_point_orbits():
            if self.corner_label(seq[0]) == point:
                return seq
        raise SurfaceError(f"unknown marked point {point!r}")

    def endpoints(self, arc: str) -> tuple[str, str]:
        ti, t = self._slots[arc][0]
        tri = self.triangles[ti]
        return tri.corners[(t - 1) % 3], tri.corners[t]

    def incident_arcs(self, point: str) -> list[str]:
        """Arcs having an end at ``point``, with multiplicity of ends."""
        return [a for a in self.arcs for e in self.endpoints(a) if e == point]

    def self_folded_at(self, puncture: str) -> SelfFolded | None:
        return next((sf for sf in self.self_folded if sf.puncture == puncture), None)

    def loop_map(self) -> dict[str, str]:
        """Enclosing loop -> folded side."""
        return {sf.loop: sf.folded for sf in self.self_folded}

    def is_folded_side(self, arc: str) -> bool:
        return any(sf.folded == arc for sf in self.self_folded)

    def boundary_components(self) -> list[list[str]]:
        """Boundary marked points grouped into components."""
        ends: dict[str, tuple[str, str]] = {}
        for seg in self.boundary_segments:
            slots = self._slots.get(seg, [])
            if len(slots) != 1:
                raise SurfaceError(f"boundary segment {seg!r} must fill one slot")
            ti, t = slots[0]
            tri = self.triangles[ti]
            ends[seg] = (tri.corners[(t - 1) % 3], tri.corners[t])
        adj: dict[str, list[str]] = {}
        for a, b in ends.values():
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        comps = []
        seen: set[str] = set()
        for v in sorted(adj):
            if v in seen:
                continue
            comp = []
            stack = [v]
            while stack:
                w = stack.pop()
                if w in seen:
                    continue
                seen.add(w)
                comp.append(w)
                stack.extend(adj[w])
            comps.append(sorted(comp))
        return comps

    def boundary_cycle(self, component_point: str) -> list[tuple[str, str, str]]:
        """Boundary segments of one component as ``(segment, start, end)`` in order."""
        segs = {}
        for seg in self.boundary_segments:
            ti, t = self._slots[seg][0]
            tri = self.triangles[ti]
            segs[seg] = (tri.corners[(t - 1) % 3], tri.corners[t])
        start_seg = next(s for s, (a, b) in sorted(segs.items()) if a == component_point)
        out = []
        cur = start_seg
        while True:
            a, b = segs[cur]
            out.append((cur, a, b))
            nxt = next((s for s, (x, _y) in sorted(segs.items()) if x == b and s not in {o[0] for o in out}), None)
            if nxt is None:
                break
            cur = nxt
        return out

    # -- comparison ---------------------------------------------------------
    def canonical_key(self) -> tuple:
        return (tuple(sorted(self.arcs)), tuple(sorted(self.boundary_segments)),
                tuple(sorted((t.canonical().sides, t.canonical().corners) for t in self.triangles)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IdealTriangulation):
            return NotImplemented
        return self.canonical_key() == other.canonical_key()

    def __hash__(self) -> int:
        return hash(self.canonical_key())

    def relabeled(self, arc_map: Mapping[str, str]) -> "IdealTriangulation":
        tris = [Triangle(tuple(arc_map.get(s, s) for s in t.sides), t.corners)  # type: ignore[arg-type]
                for t in self.triangles]
        return IdealTriangulation([arc_map.get(a, a) for a in self.arcs], self.boundary_segments, tris)

    def with_arrow_names(self, names: Mapping[str, str]) -> "IdealTriangulation":
        return IdealTriangulation(self.arcs, self.boundary_segments, self.triangles, names)

    def __repr__(self) -> str:
        return f"IdealTriangulation({len(self.arcs)} arcs, {len(self.triangles)} triangles)"


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def validate(T: IdealTriangulation, S: Surface | None = None) -> ValidationReport:
    """Check slot counts, corner consistency, self-folded shape and the arc count."""
    rep = ValidationReport()
    for a in T.arcs:
        n = len(T._slots.get(a, []))
        if n != 2:
            rep.problems.append(f"arc {a} fills {n} slots (expected 2)")
    for b in T.boundary_segments:
        n = len(T._slots.get(b, []))
        if n != 1:
            rep.problems.append(f"boundary segment {b} fills {n} slots (expected 1)")
    known = set(T.arcs) | set(T.boundary_segments)
    for ti, tri in enumerate(T.triangles):
        for s in tri.sides:
            if s not in known:
                rep.problems.append(f"triangle {ti} uses undeclared side {s}")
        if tri.is_self_folded and any(s in T.boundary_segments for s in tri.sides):
            rep.problems.append(f"self-folded triangle {ti} touches the boundary")
    if rep.problems:
        return rep
    try:
        orbits = T.marked_point_orbits()
    except SurfaceError as exc:
        rep.problems.append(str(exc))
        return rep
    labels_seen: dict[str, int] = {}
    for seq, closed in orbits:
        labels = {T.corner_label(c) for c in seq}
        if len(labels) != 1:
            rep.problems.append(f"corners around one marked point carry labels {sorted(labels)}")
        for lab in labels:
            labels_seen[lab] = labels_seen.get(lab, 0) + 1
    for lab, count in labels_seen.items():
        if count > 1:
            rep.problems.append(f"marked point label {lab} is used by {count} distinct points")
    for sf in T.self_folded:
        tri = T.triangles[sf.triangle]
        if tri.sides.count(sf.folded) != 2 or sf.loop in T.boundary_segments:
            rep.problems.append(f"malformed self-folded triangle {sf.triangle}")
        if len(T.corners_at(sf.puncture)) != 1:
            rep.problems.append(f"enclosed puncture {sf.puncture} sees more than one corner")
    if S is not None:
        if len(T.arcs) != S.arc_count:
            rep.problems.append(f"arc count {len(T.arcs)} differs from the required {S.arc_count}")
        pts = T.marked_points()
        punct = sorted(p for p, c in pts.items() if c)
        if punct != sorted(S.punctures):
            rep.problems.append(f"punctures {punct} differ from the surface's {sorted(S.punctures)}")
        comps = T.boundary_components() if T.boundary_segments else []
        if sorted(len(c) for c in comps) != sorted(S.boundary):
            rep.problems.append("boundary components do not match the surface")
        v = len(pts)
        e = len(T.arcs) + len(T.boundary_segments)
        f = len(T.triangles)
        chi = 2 - 2 * S.genus - len(S.boundary)
        if v - e + f != chi:
            rep.problems.append(f"Euler characteristic {v - e + f} differs from {chi}")
    return rep


def flip_ideal(T: IdealTriangulation, k: str, new_label: str | None = None) -> IdealTriangulation:
    """Replace arc ``k`` by the other diagonal of its quadrilateral."""
    if k not in T.arcs:
        raise SurfaceError(f"unknown arc {k!r}")
    if T.is_folded_side(k):
        raise SurfaceError(f"arc {k!r} is a folded side and cannot be flipped")
    (t1, p1), (t2, p2) = T.slots(k)
    if t1 == t2:
        raise SurfaceError(f"arc {k!r} has both slots in one triangle")
    d1 = T.triangles[t1].rotated(p1)  # (k, a, b)
    d2 = T.triangles[t2].rotated(p2)  # (k, c, d)
    _, a, b = d1.sides
    ka, ab, bk = d1.corners  # corners (k,a), (a,b), (b,k)
    _, c, d = d2.sides
    kc, cd, dk = d2.corners
    nk = new_label or k
    n1 = Triangle((nk, b, c), (ab, bk, cd))
    n2 = Triangle((nk, d, a), (cd, dk, ab))
    tris = [tri for idx, tri in enumerate(T.triangles) if idx not in (t1, t2)] + [n1, n2]
    arcs = [nk if x == k else x for x in T.arcs]
    return IdealTriangulation(arcs, T.boundary_segments, tris)


# ---------------------------------------------------------------------------
# Tagged triangulations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaggedArc:
    label: str
    underlying: str
    ends: tuple[tuple[str, str], ...]  # (marked point, "plain"|"notched"), sorted


class TaggedTriangulation:
    """A tagged triangulation stored as its ideal counterpart plus a signature.

    The weak signature is +1 at every puncture enclosed by a self-folded
    triangle of the ideal counterpart (such punctures have signature 0).
    """

    def __init__(self, circ: IdealTriangulation, weak: Mapping[str, int] | None = None):
        self.circ = circ
        punct = circ.punctures
        eps = {p: 1 for p in punct}
        for p, v in (weak or {}).items():
            if p not in eps:
                raise SurfaceError(f"{p!r} is not a puncture")
            if v not in (1, -1):
                raise SurfaceError("weak signature values must be +1 or -1")
            eps[p] = v
        for sf in circ.self_folded:
            if eps[sf.puncture] != 1:
                raise SurfaceError(f"enclosed puncture {sf.puncture} must have weak signature +1")
        self.weak = eps

    @property
    def signature(self) -> dict[str, int]:
        enclosed = {sf.puncture for sf in self.circ.self_folded}
        return {p: (0 if p in enclosed else v) for p, v in self.weak.items()}

    def zero_pairs(self) -> dict[str, tuple[str, str]]:
        """Puncture with signature 0 -> (arc plain there, arc notched there)."""
        return {sf.puncture: (sf.folded, sf.loop) for sf in self.circ.self_folded}

    def tagged_arcs(self) -> dict[str, TaggedArc]:
        loops = {sf.loop: sf for sf in self.circ.self_folded}
        out = {}
        for a in self.circ.arcs:
            if a in loops:
                sf = loops[a]
                base = next(e for e in self.circ.endpoints(sf.folded) if e != sf.puncture)
                ends = {sf.puncture: "notched",
                        base: "notched" if self.weak.get(base, 1) == -1 else "plain"}
                out[a] = TaggedArc(a, sf.folded, tuple(sorted(ends.items())))
            else:
                ends = tuple(sorted(
                    (e, "notched" if self.weak.get(e, 1) == -1 else "plain")
                    for e in self.circ.endpoints(a)))
                out[a] = TaggedArc(a, a, ends)
        return out

    def tagged_set(self) -> frozenset:
        """Label-free description: underlying arc *content* and tags."""
        return frozenset((t.label, t.ends) for t in self.tagged_arcs().values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TaggedTriangulation):
            return NotImplemented
        return self.circ == other.circ and self.weak == other.weak

    def __hash__(self) -> int:
        return hash((self.circ, tuple(sorted(self.weak.items()))))

    def __repr__(self) -> str:
        return f"TaggedTriangulation({self.circ!r}, weak={self.weak})"


def signatures(tau: TaggedTriangulation) -> tuple[dict[str, int], dict[str, int]]:
    return tau.signature, dict(tau.weak)


def swap_labels(T: IdealTriangulation, x: str, y: str) -> IdealTriangulation:
    return T.relabeled({x: y, y: x})


def tag(T: IdealTriangulation, eps: Mapping[str, int] | None = None) -> TaggedTriangulation:
    """Represent the ideal triangulation ``T`` by tagged arcs with sign function ``eps``.

    At an enclosed puncture ``q`` with ``eps(q) = -1`` the folded side becomes
    notched at ``q`` and the loop becomes the plain arc, so the ideal
    counterpart of the result has the labels of ``i`` and ``j`` exchanged.
    """
    full = {p: 1 for p in T.punctures}
    full.update(eps or {})
    circ = T
    for sf in T.self_folded:
        if full[sf.puncture] == -1:
            circ = swap_labels(circ, sf.folded, sf.loop)
            full[sf.puncture] = 1
    return TaggedTriangulation(circ, full)


def circ(tau: TaggedTriangulation) -> IdealTriangulation:
    return tau.circ


def tag_and_circ(direction: str, obj, eps: Mapping[str, int] | None = None):
    """``direction="tag"``: ideal -> tagged via ``eps``; ``"circ"``: tagged -> ideal."""
    if direction == "tag":
        return tag(obj, eps)
    if direction == "circ":
        return circ(obj)
    raise SurfaceError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class TaggedFlip:
    sigma: TaggedTriangulation
    relabel: dict[str, str]
    changed_puncture: str | None


def flip_tagged(tau: TaggedTriangulation, i: str, new_label: str | None = None) -> TaggedFlip:
    """Flip the tagged arc ``i``; the new arc takes ``new_label`` (default: ``i``)."""
    T = tau.circ
    if i not in T.arcs:
        raise SurfaceError(f"unknown arc {i!r}")
    nl = new_label or i
    sf = next((s for s in T.self_folded if s.folded == i), None)
    if sf is None:
        flipped = flip_ideal(T, i, nl)
        sigma = tag(flipped, tau.weak)
    else:
        # i is plain at q and its partner j is notched there: view tau as the
        # tagging of the label-swapped triangulation with sign -1 at q, in which
        # i is the loop and can be flipped.
        swapped = swap_labels(T, sf.folded, sf.loop)
        eps = dict(tau.weak)
        eps[sf.puncture] = -1
        flipped = flip_ideal(swapped, i, nl)
        sigma = tag(flipped, eps)
    relabel = {a: a for a in T.arcs}
    relabel[i] = nl
    changed = next((p for p in tau.weak if tau.weak[p] != sigma.weak.get(p)), None)
    return TaggedFlip(sigma, relabel, changed)


# ---------------------------------------------------------------------------
# Quivers with potentials of triangulations
# ---------------------------------------------------------------------------

ScalarChoice = Mapping[str, Fraction]


def check_scalars(T: IdealTriangulation, x: Mapping[str, object]) -> dict[str, Fraction]:
    out = {}
    for p in T.punctures:
        if p not in x:
            raise SurfaceError(f"no scalar for puncture {p!r}")
        v = as_scalar(x[p])  # type: ignore[arg-type]
        if v == 0:
            raise SurfaceError(f"scalar for puncture {p!r} is zero")
        out[p] = v
    return out


ArrowKey = tuple[int, int, bool, bool]  # (triangle, corner, tail via folded side, head via folded side)


@dataclass(frozen=True)
class TriangulationQuiver:
    quiver: Quiver
    key_to_name: dict[ArrowKey, str]
    name_to_key: dict[str, ArrowKey]


def unreduced_quiver(T: IdealTriangulation) -> TriangulationQuiver:
    """Arrows at every corner between two arcs, copied onto folded sides."""
    loops = T.loop_map()
    arcs = set(T.arcs)
    raw: list[tuple[ArrowKey, str, str]] = []
    for ti, tri in enumerate(T.triangles):
        if tri.is_self_folded:
            continue
        for t in range(3):
            s, s2 = tri.sides[t], tri.sides[(t + 1) % 3]
            if s not in arcs or s2 not in arcs:
                continue
            for via_tail in ([False, True] if s in loops else [False]):
                for via_head in ([False, True] if s2 in loops else [False]):
                    tail = loops[s] if via_tail else s
                    head = loops[s2] if via_head else s2
                    raw.append(((ti, t, via_tail, via_head), tail, head))
    raw.sort(key=lambda r: (r[1], r[2], T.triangles[r[0][0]].canonical().sides, r[0]))
    counts: dict[tuple[str, str], int] = {}
    key_to_name: dict[ArrowKey, str] = {}
    arrows = []
    for key, tail, head in raw:
        n = counts.get((tail, head), 0) + 1
        counts[(tail, head)] = n
        default = f"{tail}>{head}" + (f"#{n}" if n > 1 else "")
        name = T.arrow_names.get(default, default)
        key_to_name[key] = name
        arrows.append(Arrow(name, tail, head))
    q = Quiver(T.arcs, arrows)
    return TriangulationQuiver(q, key_to_name, {v: k for k, v in key_to_name.items()})


def _corner_arrow(tq: TriangulationQuiver, ti: int, t: int, via_tail: bool, via_head: bool) -> str:
    return tq.key_to_name[(ti, t, via_tail, via_head)]


def _unreduced_terms(T: IdealTriangulation, tq: TriangulationQuiver, x: Mapping[str, Fraction],
                     eps: Mapping[str, int]) -> dict[PathKey, Fraction]:
    loops = T.loop_map()
    loop_puncture = {sf.loop: sf.puncture for sf in T.self_folded}
    arcs = set(T.arcs)
    terms: dict[PathKey, Fraction] = {}

    def add(path: Sequence[str], c: Fraction) -> None:
        key = _least_rotation(tuple(path))
        terms[key] = terms.get(key, 0) + c

    for ti, tri in enumerate(T.triangles):
        if tri.is_self_folded or not all(s in arcs for s in tri.sides):
            continue
        add([_corner_arrow(tq, ti, t, False, False) for t in range(3)], Fraction(1))
        enclosing = [t for t in range(3) if tri.sides[t] in loops]
        if len(enclosing) == 3:
            raise SurfaceError("triangle bounded by three self-folded loops is not supported")
        if len(enclosing) == 2:
            flags = [tri.sides[t] in loops for t in range(3)]
            path = [_corner_arrow(tq, ti, t, flags[t], flags[(t + 1) % 3]) for t in range(3)]
            p, r = (loop_puncture[tri.sides[t]] for t in enclosing)
            add(path, 1 / (x[p] * x[r]))
    for p in T.punctures:
        sf = T.self_folded_at(p)
        if sf is not None:
            (ti, t), = [s for s in T.slots(sf.loop) if s[0] != sf.triangle]
            tri = T.triangles[ti]
            if not all(s in arcs for s in tri.sides):
                continue
            flags = [tri.sides[u] == sf.loop for u in range(3)]
            path = [_corner_arrow(tq, ti, u, flags[u], flags[(u + 1) % 3]) for u in range(3)]
            add(path, eps[p] * (-1 / x[p]))
            continue
        path = []
        for (ti, t) in T.corners_at(p):
            tri = T.triangles[ti]
            if tri.is_self_folded:
                continue
            s, s2 = tri.sides[t], tri.sides[(t + 1) % 3]
            path.append(_corner_arrow(tq, ti, t, s in loops, s2 in loops))
        add(path, eps[p] * x[p])
    return {k: v for k, v in terms.items() if v}


def build_unreduced_qp(tau: TaggedTriangulation | IdealTriangulation, x: Mapping[str, object],
                       trunc: int | None = None) -> QP:
    """The unreduced signed-adjacency quiver and its potential."""
    if isinstance(tau, IdealTriangulation):
        tau = tag(tau)
    T = tau.circ
    xs = check_scalars(T, x)
    tq = unreduced_quiver(T)
    terms = _unreduced_terms(T, tq, xs, tau.weak)
    pot = Potential(tq.quiver, terms, None, canonical=True)
    return QP.build(tq.quiver, pot, trunc)


def build_qp(tau: TaggedTriangulation | IdealTriangulation, x: Mapping[str, object],
             trunc: int | None = None) -> QP:
    """Reduced part of the unreduced QP."""
    return split_reduce(build_unreduced_qp(tau, x, trunc)).reduced


def popped_scalars(x: Mapping[str, Fraction], q: str) -> dict[str, Fraction]:
    y = {p: as_scalar(v) for p, v in x.items()}
    y[q] = -y[q]
    return y


def pop_arrow_map(T: IdealTriangulation, i: str, j: str) -> dict[str, str]:
    """Arrow permutation induced by exchanging the folded side ``i`` and its loop ``j``."""
    tq = unreduced_quiver(T)
    mapping = {}
    for key, name in tq.key_to_name.items():
        ti, t, vt, vh = key
        tri = T.triangles[ti]
        s, s2 = tri.sides[t], tri.sides[(t + 1) % 3]
        nvt = (not vt) if s == j else vt
        nvh = (not vh) if s2 == j else vh
        mapping[name] = tq.key_to_name[(ti, t, nvt, nvh)]
    return mapping


def popped_potential(T: IdealTriangulation, x: Mapping[str, object], i: str, j: str,
                     trunc: int | None = None) -> QP:
    """``pi_{i,j}`` applied to the potential built with ``x`` negated at the enclosed puncture."""
    sf = next((s for s in T.self_folded if s.folded == i and s.loop == j), None)
    if sf is None:
        raise SurfaceError(f"({i}, {j}) is not a self-folded pair")
    xs = check_scalars(T, x)
    S = build_qp(T, popped_scalars(xs, sf.puncture), trunc)
    amap = pop_arrow_map(T, i, j)
    # The reduced quiver keeps the arrow names of the unreduced one.
    acc: dict[PathKey, Fraction] = {}
    for k, v in S.potential.terms.items():
        nk = _least_rotation(tuple(amap.get(a, a) for a in k))
        acc[nk] = acc.get(nk, 0) + v
    q = S.quiver
    permuted = Quiver(q.vertices, [Arrow(amap.get(a.name, a.name),
                                         {i: j, j: i}.get(a.tail, a.tail),
                                         {i: j, j: i}.get(a.head, a.head)) for a in q.arrows])
    if permuted != q:
        raise SurfaceError("the exchange of i and j is not a quiver automorphism here")
    return QP(q, Potential(q, acc, S.potential.trunc, canonical=True), S.trunc)


# ---------------------------------------------------------------------------
# Gluing punctured polygons onto boundary components
# ---------------------------------------------------------------------------


def punctured_polygon(m: int, prefix: str, punctures: int = 5) -> tuple[IdealTriangulation, list[str]]:
    """A triangulated ``m``-gon with ``punctures`` interior punctures.

    Boundary marked points are ``{prefix}B0..``; boundary segment ``t`` runs
    from point ``t`` to point ``t+1`` (counter-clockwise).  The first puncture
    is joined to every boundary point; every further puncture sits inside the
    previous fan triangle next to segment 0, fanned out by three arcs.
    """
    if m < 1 or punctures < 1:
        raise SurfaceError("need at least one boundary point and one puncture")
    B = [f"{prefix}B{t}" for t in range(m)]
    segs = [f"{prefix}s{t}" for t in range(m)]
    p0 = f"{prefix}p0"
    spokes = [f"{prefix}r{t}" for t in range(m)]
    arcs = list(spokes)
    tris: list[Triangle] = []
    # fan triangle t: spoke t (p0..B_t), segment t (B_t..B_{t+1}), spoke t+1 (B_{t+1}..p0)
    # sides listed so that corners are (spoke_t, seg_t)=B_t, (seg_t, spoke_{t+1})=B_{t+1}, (spoke_{t+1}, spoke_t)=p0
    if m == 1:
        raise SurfaceError("monogon gluing is not supported")
    fan = [[spokes[t], segs[t], spokes[(t + 1) % m]] for t in range(m)]
    fan_corners = [[B[t], B[(t + 1) % m], p0] for t in range(m)]
    # insert extra punctures into fan triangle 0 by repeated subdivision
    tri_sides = fan[0]
    tri_corners = fan_corners[0]
    rest = [Triangle(tuple(fan[t]), tuple(fan_corners[t])) for t in range(1, m)]  # type: ignore[arg-type]
    current = Triangle(tuple(tri_sides), tuple(tri_corners))  # type: ignore[arg-type]
    for n in range(1, punctures):
        p = f"{prefix}p{n}"
        s1, s2, s3 = current.sides
        c1, c2, c3 = current.corners
        # new arcs from p to each corner
        e1, e2, e3 = (f"{prefix}u{n}_{t}" for t in range(3))
        arcs.extend([e1, e2, e3])
        # corner c1 between s1 and s2, etc.  The new point sees the three
        # corners; triangle around side s2 (c1..c2): (e1, s2, e2)
        rest.append(Triangle((e3, s1, e1), (c3, c1, p)))
        rest.append(Triangle((e1, s2, e2), (c1, c2, p)))
        current = Triangle((e2, s3, e3), (c2, c3, p))
    rest.append(current)
    T = IdealTriangulation(arcs, segs, rest)
    return T, B


def glue_boundary_polygon(T: IdealTriangulation, component_point: str, polygon: IdealTriangulation,
                          polygon_points: Sequence[str]) -> IdealTriangulation:
    """Glue ``polygon`` along the boundary component containing ``component_point``.

    Boundary segments become arcs (keeping the surface's segment labels); the
    polygon's boundary points are identified with the component's points in
    the opposite orientation.
    """
    cycle = T.boundary_cycle(component_point)
    m = len(cycle)
    if m != len(polygon.boundary_segments) or m != len(polygon_points):
        raise SurfaceError(f"polygon has {len(polygon.boundary_segments)} sides, component has {m}")
    # segment t of the surface runs pts[t] -> pts[t+1]; the polygon's segment
    # must run the other way: polygon point (m - t) % m <-> surface point t
    surf_pts = [c[1] for c in cycle]
    point_map = {polygon_points[(m - t) % m]: surf_pts[t] for t in range(m)}
    poly_seg_ends = {}
    for seg in polygon.boundary_segments:
        ti, t = polygon.slots(seg)[0]
        tri = polygon.triangles[ti]
        poly_seg_ends[seg] = (point_map[tri.corners[(t - 1) % 3]], point_map[tri.corners[t]])
    seg_map = {}
    for seg, a, b in cycle:
        match = next(s for s, (x, y) in poly_seg_ends.items() if x == b and y == a)
        seg_map[match] = seg
    new_tris = list(T.triangles)
    for tri in polygon.triangles:
        new_tris.append(Triangle(tuple(seg_map.get(s, s) for s in tri.sides),  # type: ignore[arg-type]
                                 tuple(point_map.get(c, c) for c in tri.corners)))  # type: ignore[arg-type]
    glued_segs = {s for s, _a, _b in cycle}
    arcs = list(T.arcs) + [s for s, _a, _b in cycle] + list(polygon.arcs)
    bsegs = [s for s in T.boundary_segments if s not in glued_segs]
    return IdealTriangulation(arcs, bsegs, new_tris, T.arrow_names)


def close_surface(T: IdealTriangulation, punctures: int = 5, prefix: str = "g") -> IdealTriangulation:
    """Glue a ``punctures``-punctured polygon onto every boundary component of ``T``.

    The result has empty boundary and contains every arc of ``T``; polygon
    labels are prefixed ``{prefix}{n}_`` for the ``n``-th component glued.
    """
    n = 0
    while T.boundary_segments:
        point = T.boundary_components()[0][0]
        polygon, points = punctured_polygon(len(T.boundary_cycle(point)), f"{prefix}{n}_", punctures)
        T = glue_boundary_polygon(T, point, polygon, points)
        n += 1
    return T


# ---------------------------------------------------------------------------
# Dimer walks and scalar rescaling
# ---------------------------------------------------------------------------


def dimer_graph(T: IdealTriangulation) -> dict[str, set[str]]:
    """Bipartite adjacency: marked points versus triangles (``"T<n>"``) they are corners of."""
    graph: dict[str, set[str]] = {}
    for ti, tri in enumerate(T.triangles):
        node = f"T{ti}"
        graph.setdefault(node, set())
        for c in tri.corners:
            graph.setdefault(c, set()).add(node)
            graph[node].add(c)
    return graph


def find_dimer_walk(T: IdealTriangulation, puncture: str) -> list[str]:
    """Shortest walk from ``puncture`` to a boundary marked point in the dimer graph.

    Alternates marked points and triangles; every interior marked point on the
    walk except the last is a puncture, and consecutive marked points are
    distinct.
    """
    pts = T.marked_points()
    graph = dimer_graph(T)
    start = puncture
    prev: dict[str, str | None] = {start: None}
    queue = deque([start])
    goal = None
    while queue:
        node = queue.popleft()
        if node in pts and not pts[node] and node != start:
            goal = node
            break
        for nxt in sorted(graph[node]):
            if nxt in prev:
                continue
            prev[nxt] = node
            queue.append(nxt)
    if goal is None:
        raise SurfaceError(f"no dimer walk from {puncture} to the boundary")
    walk = [goal]
    while prev[walk[-1]] is not None:
        walk.append(prev[walk[-1]])  # type: ignore[arg-type]
    return walk[::-1]


def dimer_rescaling(T: IdealTriangulation, puncture: str, factor: Fraction,
                    tq: TriangulationQuiver | None = None) -> tuple[Morphism, list[str]]:
    """Diagonal rescaling multiplying the cycle around ``puncture`` by ``factor``.

    For every triangle on the walk, the corner arrow at the marked point
    before it is scaled by ``factor`` and the corner arrow at the marked point
    after it by ``1/factor``.  Triangle cycles and the cycles of intermediate
    punctures are unchanged; only the starting puncture's cycle is rescaled.
    """
    if T.self_folded:
        raise SurfaceError("dimer rescaling needs a triangulation without self-folded triangles")
    tq = tq or unreduced_quiver(T)
    walk = find_dimer_walk(T, puncture)
    f = as_scalar(factor)
    factors: dict[str, Fraction] = {}
    for s in range(1, len(walk), 2):
        ti = int(walk[s][1:])
        tri = T.triangles[ti]
        for point, scale in ((walk[s - 1], f), (walk[s + 1], 1 / f)):
            t = tri.corners.index(point)
            name = tq.key_to_name.get((ti, t, False, False))
            if name is not None:
                factors[name] = factors.get(name, Fraction(1)) * scale
    phi = Morphism.from_rules(tq.quiver, {a: [(c, (a,))] for a, c in factors.items() if c != 1})
    return phi, walk


def dimer_rescale_equivalence(T: IdealTriangulation, x: Mapping[str, object], y: Mapping[str, object]) -> Certificate:
    """Certificate ``(Q, S(T, y)) -> (Q, S(T, x))`` composed from dimer rescalings.

    ``x`` and ``y`` may differ at any set of punctures; one rescaling is
    composed per differing puncture.
    """
    if not T.boundary_segments:
        raise SurfaceError("dimer rescaling needs non-empty boundary")
    xs = check_scalars(T, x)
    ys = check_scalars(T, y)
    A = build_unreduced_qp(T, ys)
    B = build_unreduced_qp(T, xs)
    tq = unreduced_quiver(T)
    phi = Morphism.identity(tq.quiver)
    for p in T.punctures:
        if xs[p] == ys[p]:
            continue
        step, _walk = dimer_rescaling(T, p, xs[p] / ys[p], tq)
        phi = compose_morphisms(step, phi)
    return check_right_equivalence(phi, A, B)
