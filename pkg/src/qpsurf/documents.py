"""Plain-text documents for quivers, potentials, morphisms, scalars and triangulations.

A document is a sequence of sections.  Each section starts with a header
``[kind name]`` (optionally followed by ``key=value`` attributes) and holds
one item per line; lines starting with ``#`` are comments.

Coefficients are monomials in the puncture scalars, such as ``3/2``,
``-x[p2]^-1`` or ``x[p1]^2*x[p2]``.  A term is ``coefficient * a.b.c`` (the
first `` * `` separates the coefficient from the path).  Within a quiver
section, ``idempotents:`` names symbols that stand for trivial paths and are
dropped wherever they occur in a path, and ``define: NAME = a.b.c`` introduces
a symbol that expands to a fixed path.

Example::

    [quiver Q]
    vertices: k l j
    arrow alpha: l -> k

    [potential S quiver=Q]
    1 * alpha.beta.gamma
    - x[p2]^-1 * alpha.delta.eps

    [morphism phi source=Q target=Q]
    nu -> 1 * nu + x[p1]*x[p2] * a2.a3

    [scalars x]
    p1 = 2

    [surface hexagon]
    genus: 0
    boundary: 6
    punctures: p1 p2 p3

    [triangulation tau]
    arcs: i j k l
    boundary: s1 s2
    triangle: l k j | p1 p3 p3
    names: l>k=alpha k>j=beta
    weak: p2=-1
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .pathalg import Arrow, Morphism, PathKey, Potential, Quiver, as_scalar


class DocumentError(ValueError):
    """A parse or semantic error, located by line and column when possible."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

_FACTOR = re.compile(r"x\[(?P<label>[^\]\s]+)\](?:\^(?P<exp>-?\d+))?|(?P<num>\d+(?:/\d+)?)")


@dataclass(frozen=True)
class Monomial:
    """``const * prod x[label]^exp``."""

    const: Fraction
    powers: tuple[tuple[str, int], ...] = ()

    @classmethod
    def parse(cls, text: str) -> "Monomial":
        s = text.strip()
        sign = 1
        while s[:1] in "+-":
            if s[0] == "-":
                sign = -sign
            s = s[1:].strip()
        if not s:
            raise ValueError("empty coefficient")
        const = Fraction(sign)
        powers: dict[str, int] = {}
        for part in s.split("*"):
            m = _FACTOR.fullmatch(part.strip())
            if not m:
                raise ValueError(f"bad coefficient factor {part!r}")
            if m.group("num"):
                const *= Fraction(m.group("num"))
            else:
                lab = m.group("label")
                powers[lab] = powers.get(lab, 0) + int(m.group("exp") or 1)
        return cls(const, tuple(sorted((k, v) for k, v in powers.items() if v)))

    def evaluate(self, x: Mapping[str, Fraction] | None) -> Fraction:
        val = self.const
        for lab, e in self.powers:
            if x is None or lab not in x:
                raise DocumentError(f"no scalar supplied for {lab!r}")
            v = as_scalar(x[lab])  # type: ignore[arg-type]
            if v == 0:
                raise DocumentError(f"scalar {lab!r} is zero")
            val *= v ** e
        return val

    def __str__(self) -> str:
        parts = []
        if self.const != 1 or not self.powers:
            parts.append(str(abs(self.const)))
        for lab, e in self.powers:
            parts.append(f"x[{lab}]" + (f"^{e}" if e != 1 else ""))
        body = "*".join(parts)
        return ("-" if self.const < 0 else "") + body

    @property
    def is_constant(self) -> bool:
        return not self.powers


@dataclass(frozen=True)
class TermTemplate:
    coeff: Monomial
    path: PathKey

    def __str__(self) -> str:
        return f"{self.coeff} * {'.'.join(self.path)}"


def _parse_term(text: str) -> TermTemplate:
    if " * " not in text:
        raise ValueError(f"term {text!r} lacks the ' * ' separator")
    c, p = text.split(" * ", 1)
    path = tuple(x for x in p.strip().split(".") if x)
    if not path:
        raise ValueError("empty path")
    return TermTemplate(Monomial.parse(c), path)


def _split_signed(text: str) -> list[str]:
    """Split ``t1 + t2 - t3`` into signed term strings."""
    pieces = re.split(r"\s([+-])\s", " " + text.strip() + " ")
    out = []
    head = pieces[0].strip()
    if head:
        out.append(head)
    for i in range(1, len(pieces), 2):
        sign, body = pieces[i], pieces[i + 1].strip()
        out.append(("-" if sign == "-" else "") + body)
    return out


def _format_signed(terms: Sequence[TermTemplate]) -> str:
    out = []
    for n, t in enumerate(terms):
        s = str(t)
        if n == 0:
            out.append(s)
        elif s.startswith("-"):
            out.append("- " + s[1:])
        else:
            out.append("+ " + s)
    return " ".join(out)


# ---------------------------------------------------------------------------
# Section payloads
# ---------------------------------------------------------------------------


@dataclass
class QuiverDoc:
    vertices: list[str]
    arrows: list[Arrow]
    idempotents: list[str] = field(default_factory=list)
    defines: dict[str, list[str]] = field(default_factory=dict)

    def build(self) -> Quiver:
        return Quiver(self.vertices, self.arrows)

    def expand(self, word: Sequence[str], depth: int = 0) -> PathKey:
        """Replace defined symbols by their words and drop idempotent symbols."""
        if depth > 32:
            raise DocumentError("path definitions are cyclic")
        out: list[str] = []
        for sym in word:
            if sym in self.defines:
                out.extend(self.expand(self.defines[sym], depth + 1))
            elif sym not in self.idempotents:
                out.append(sym)
        return tuple(out)


@dataclass
class PotentialDoc:
    quiver: str
    terms: list[TermTemplate]
    trunc: int | None = None


@dataclass
class MorphismDoc:
    source: str
    target: str
    rules: dict[str, list[TermTemplate]]
    trunc: int | None = None


@dataclass
class ScalarsDoc:
    values: dict[str, Fraction]


@dataclass
class SurfaceDoc:
    genus: int
    boundary: list[int]
    punctures: list[str]


@dataclass
class TriangulationDoc:
    arcs: list[str]
    boundary: list[str]
    triangles: list[tuple[tuple[str, str, str], tuple[str, str, str]]]
    names: dict[str, str] = field(default_factory=dict)
    weak: dict[str, int] = field(default_factory=dict)


@dataclass
class Section:
    kind: str
    name: str
    attrs: dict[str, str]
    payload: object
    line: int = 0


KINDS = ("quiver", "potential", "morphism", "scalars", "surface", "triangulation", "text")


@dataclass
class Document:
    sections: list[Section] = field(default_factory=list)

    # -- access ---------------------------------------------------------------
    def find(self, kind: str, name: str | None = None) -> Section:
        hits = [s for s in self.sections if s.kind == kind and (name is None or s.name == name)]
        if not hits:
            raise DocumentError(f"no {kind} section" + (f" named {name!r}" if name else ""))
        return hits[0]

    def names(self, kind: str) -> list[str]:
        return [s.name for s in self.sections if s.kind == kind]

    def add(self, kind: str, name: str, payload: object, **attrs: str) -> None:
        self.sections.append(Section(kind, name, dict(attrs), payload))

    def quiver(self, name: str | None = None) -> Quiver:
        return self.find("quiver", name).payload.build()  # type: ignore[union-attr]

    def _quiver_doc(self, qname: str) -> QuiverDoc:
        return self.find("quiver", qname).payload  # type: ignore[return-value]

    def potential(self, name: str | None = None, x: Mapping[str, Fraction] | None = None) -> Potential:
        sec = self.find("potential", name)
        doc: PotentialDoc = sec.payload  # type: ignore[assignment]
        q = self.quiver(doc.quiver)
        qdoc = self._quiver_doc(doc.quiver)
        acc: dict[PathKey, Fraction] = {}
        for t in doc.terms:
            path = qdoc.expand(t.path)
            try:
                q.check_path(path)
                if not q.is_cycle(path):
                    raise ValueError("not a cycle")
            except Exception as exc:  # noqa: BLE001 - report with the section line
                raise DocumentError(f"potential {sec.name}: term {t}: {exc}", sec.line) from None
            acc[path] = acc.get(path, 0) + t.coeff.evaluate(x)
        return Potential(q, acc, doc.trunc)

    def morphism(self, name: str | None = None, x: Mapping[str, Fraction] | None = None) -> Morphism:
        sec = self.find("morphism", name)
        doc: MorphismDoc = sec.payload  # type: ignore[assignment]
        src, tgt = self.quiver(doc.source), self.quiver(doc.target)
        qdoc = self._quiver_doc(doc.target)
        rules = {}
        for a, terms in doc.rules.items():
            acc: dict[PathKey, Fraction] = {}
            for t in terms:
                path = qdoc.expand(t.path)
                acc[path] = acc.get(path, 0) + t.coeff.evaluate(x)
            rules[a] = {k: v for k, v in acc.items() if v}
        try:
            return Morphism(src, tgt, rules, doc.trunc)
        except Exception as exc:  # noqa: BLE001
            raise DocumentError(f"morphism {sec.name}: {exc}", sec.line) from None

    def morphism_rules(self, name: str, x: Mapping[str, Fraction] | None = None) -> dict[str, list[tuple[Fraction, PathKey]]]:
        doc: MorphismDoc = self.find("morphism", name).payload  # type: ignore[assignment]
        qdoc = self._quiver_doc(doc.target)
        return {a: [(t.coeff.evaluate(x), qdoc.expand(t.path)) for t in ts]
                for a, ts in doc.rules.items()}

    def path(self, quiver: str, word: str) -> PathKey:
        """A dotted word on ``quiver`` with definitions expanded and idempotents dropped."""
        return self._quiver_doc(quiver).expand([a for a in word.split(".") if a])

    def scalars(self, name: str | None = None) -> dict[str, Fraction]:
        return dict(self.find("scalars", name).payload.values)  # type: ignore[union-attr]

    def surface(self, name: str | None = None):
        from .surface import Surface
        d: SurfaceDoc = self.find("surface", name).payload  # type: ignore[assignment]
        return Surface(d.genus, tuple(d.boundary), tuple(d.punctures))

    def triangulation(self, name: str | None = None):
        from .surface import IdealTriangulation, Triangle
        d: TriangulationDoc = self.find("triangulation", name).payload  # type: ignore[assignment]
        return IdealTriangulation(d.arcs, d.boundary, [Triangle(s, c) for s, c in d.triangles], d.names)

    def tagged(self, name: str | None = None):
        from .surface import TaggedTriangulation
        d: TriangulationDoc = self.find("triangulation", name).payload  # type: ignore[assignment]
        return TaggedTriangulation(self.triangulation(name), d.weak)

    # -- text -------------------------------------------------------------------
    def __str__(self) -> str:
        return print_document(self)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_HEADER = re.compile(r"\[(?P<kind>quiver|potential|morphism|scalars|surface|triangulation|text)(?:\s+(?P<name>[^\s\]=]+))?(?P<attrs>(?:\s+[\w-]+=[^\s\]]+)*)\s*\]")


def parse_document(text: str) -> Document:
    doc = Document()
    current: tuple[str, str, dict[str, str], int] | None = None
    body: list[tuple[int, str]] = []

    def flush() -> None:
        if current is None:
            return
        kind, name, attrs, line = current
        try:
            payload = _parse_payload(kind, attrs, body)
        except DocumentError:
            raise
        except (ValueError, KeyError) as exc:
            raise DocumentError(f"in [{kind} {name}]: {exc}", line) from None
        doc.sections.append(Section(kind, name, attrs, payload, line))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = "" if raw.lstrip().startswith("#") else raw.rstrip()
        if current is not None and current[0] == "text" and not _HEADER.fullmatch(line.strip()):
            body.append((lineno, raw.rstrip()))
            continue
        if not line.strip():
            continue
        m = _HEADER.fullmatch(line.strip()) if line.startswith("[") else None
        if m is None and line.startswith("[") and (current is None or "->" not in line):
            raise DocumentError("malformed section header", lineno, 1)
        if m is not None:
            flush()
            kind = m.group("kind")
            if kind not in KINDS:
                raise DocumentError(f"unknown section kind {kind!r}", lineno, 2)
            attrs = dict(a.split("=", 1) for a in m.group("attrs").split())
            current = (kind, m.group("name") or "", attrs, lineno)
            body = []
            continue
        if current is None:
            raise DocumentError("content before the first section header", lineno, 1)
        body.append((lineno, line))
    flush()
    return doc


def _fail(lineno: int, text: str, marker: str, message: str) -> DocumentError:
    col = text.find(marker) + 1 if marker and marker in text else 1
    return DocumentError(message, lineno, col)


def _parse_arrow(lineno: int, line: str) -> Arrow:
    m = re.fullmatch(r"\s*arrow\s+(\S+)\s*:\s*(\S+)\s*->\s*(\S+)\s*", line)
    if not m:
        raise _fail(lineno, line, "", "expected 'arrow NAME: TAIL -> HEAD'")
    return Arrow(m.group(1), m.group(2), m.group(3))


def _parse_payload(kind: str, attrs: dict[str, str], body: list[tuple[int, str]]) -> object:
    if kind == "text":
        return "\n".join(line for _, line in body).strip("\n")
    if kind == "quiver":
        vertices: list[str] = []
        arrows: list[Arrow] = []
        idem: list[str] = []
        defines: dict[str, list[str]] = {}
        for lineno, line in body:
            s = line.strip()
            if s.startswith("define:"):
                name, eq, word = s[len("define:"):].partition("=")
                if not eq or not name.strip() or not word.strip():
                    raise _fail(lineno, line, "define", "expected 'define: NAME = a.b.c'")
                defines[name.strip()] = [a for a in word.strip().split(".") if a]
            elif s.startswith("vertices:"):
                vertices.extend(s[len("vertices:"):].split())
            elif s.startswith("idempotents:"):
                idem.extend(s[len("idempotents:"):].split())
            elif s.startswith("arrow "):
                arrows.append(_parse_arrow(lineno, s))
            else:
                raise _fail(lineno, line, s[:1], "expected 'vertices:', 'idempotents:', 'define:' or 'arrow'")
        return QuiverDoc(vertices, arrows, idem, defines)
    if kind == "potential":
        if "quiver" not in attrs:
            raise DocumentError("potential sections need quiver=NAME")
        terms = []
        for lineno, line in body:
            try:
                for piece in _split_signed(line):
                    terms.append(_parse_term(piece))
            except ValueError as exc:
                raise _fail(lineno, line, "*", str(exc)) from None
        trunc = int(attrs["trunc"]) if "trunc" in attrs else None
        return PotentialDoc(attrs["quiver"], terms, trunc)
    if kind == "morphism":
        if "source" not in attrs or "target" not in attrs:
            raise DocumentError("morphism sections need source=NAME and target=NAME")
        rules: dict[str, list[TermTemplate]] = {}
        for lineno, line in body:
            if "->" not in line:
                raise _fail(lineno, line, "", "expected 'ARROW -> terms'")
            lhs, rhs = line.split("->", 1)
            try:
                rules[lhs.strip()] = [_parse_term(p) for p in _split_signed(rhs)]
            except ValueError as exc:
                raise _fail(lineno, line, "->", str(exc)) from None
        trunc = int(attrs["trunc"]) if "trunc" in attrs else None
        return MorphismDoc(attrs["source"], attrs["target"], rules, trunc)
    if kind == "scalars":
        values = {}
        for lineno, line in body:
            if "=" not in line:
                raise _fail(lineno, line, "", "expected 'LABEL = VALUE'")
            k, v = line.split("=", 1)
            try:
                values[k.strip()] = Fraction(v.strip())
            except ValueError:
                raise _fail(lineno, line, "=", f"bad rational {v.strip()!r}") from None
        return ScalarsDoc(values)
    if kind == "surface":
        genus, boundary, punct = 0, [], []
        for lineno, line in body:
            key, _, val = line.partition(":")
            key = key.strip()
            if key == "genus":
                genus = int(val)
            elif key == "boundary":
                boundary = [int(v) for v in val.split()]
            elif key == "punctures":
                punct = val.split()
            else:
                raise _fail(lineno, line, key, f"unknown surface field {key!r}")
        return SurfaceDoc(genus, boundary, punct)
    if kind == "triangulation":
        arcs: list[str] = []
        bsegs: list[str] = []
        tris = []
        names: dict[str, str] = {}
        weak: dict[str, int] = {}
        for lineno, line in body:
            key, _, val = line.partition(":")
            key = key.strip()
            if key == "arcs":
                arcs.extend(val.split())
            elif key == "boundary":
                bsegs.extend(val.split())
            elif key == "triangle":
                sides, sep, corners = val.partition("|")
                s, c = sides.split(), corners.split()
                if not sep or len(s) != 3 or len(c) != 3:
                    raise _fail(lineno, line, "triangle", "expected 'triangle: s1 s2 s3 | c1 c2 c3'")
                tris.append((tuple(s), tuple(c)))
            elif key == "names":
                for item in val.split():
                    k, eq, v = item.partition("=")
                    if not eq:
                        raise _fail(lineno, line, item, "expected DEFAULT=NAME")
                    names[k] = v
            elif key == "weak":
                for item in val.split():
                    k, eq, v = item.partition("=")
                    if not eq:
                        raise _fail(lineno, line, item, "expected PUNCTURE=+1|-1")
                    weak[k] = int(v)
            else:
                raise _fail(lineno, line, key, f"unknown triangulation field {key!r}")
        return TriangulationDoc(arcs, bsegs, tris, names, weak)  # type: ignore[arg-type]
    raise DocumentError(f"unknown section kind {kind!r}")


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def _header(sec: Section) -> str:
    attrs = "".join(f" {k}={v}" for k, v in sec.attrs.items())
    name = f" {sec.name}" if sec.name else ""
    return f"[{sec.kind}{name}{attrs}]"


def _print_payload(sec: Section) -> list[str]:
    p = sec.payload
    if sec.kind == "text":
        return [str(p)]
    if isinstance(p, QuiverDoc):
        out = [f"vertices: {' '.join(p.vertices)}"]
        if p.idempotents:
            out.append(f"idempotents: {' '.join(p.idempotents)}")
        out += [f"define: {k} = {'.'.join(v)}" for k, v in p.defines.items()]
        out += [f"arrow {a.name}: {a.tail} -> {a.head}" for a in p.arrows]
        return out
    if isinstance(p, PotentialDoc):
        return [str(t) for t in p.terms]
    if isinstance(p, MorphismDoc):
        return [f"{a} -> {_format_signed(ts)}" for a, ts in p.rules.items()]
    if isinstance(p, ScalarsDoc):
        return [f"{k} = {v}" for k, v in p.values.items()]
    if isinstance(p, SurfaceDoc):
        return [f"genus: {p.genus}", f"boundary: {' '.join(map(str, p.boundary))}",
                f"punctures: {' '.join(p.punctures)}"]
    if isinstance(p, TriangulationDoc):
        out = [f"arcs: {' '.join(p.arcs)}"]
        if p.boundary:
            out.append(f"boundary: {' '.join(p.boundary)}")
        out += [f"triangle: {' '.join(s)} | {' '.join(c)}" for s, c in p.triangles]
        if p.names:
            out.append("names: " + " ".join(f"{k}={v}" for k, v in p.names.items()))
        if p.weak:
            out.append("weak: " + " ".join(f"{k}={v}" for k, v in p.weak.items()))
        return out
    raise DocumentError(f"cannot print section kind {sec.kind!r}")


def print_document(doc: Document) -> str:
    chunks = []
    for sec in doc.sections:
        chunks.append("\n".join([_header(sec)] + _print_payload(sec)))
    return "\n\n".join(chunks) + "\n"


def documents_equal(a: Document, b: Document) -> bool:
    """Structural equality ignoring source line numbers."""
    def key(d: Document):
        return [(s.kind, s.name, sorted(s.attrs.items()), s.payload) for s in d.sections]
    return key(a) == key(b)


# ---------------------------------------------------------------------------
# Conversions from computed objects
# ---------------------------------------------------------------------------


def _const_terms(items: Iterable[tuple[PathKey, Fraction]]) -> list[TermTemplate]:
    return [TermTemplate(Monomial(Fraction(c)), tuple(k)) for k, c in items]


def quiver_doc(q: Quiver) -> QuiverDoc:
    return QuiverDoc(list(q.vertices), list(q.arrows))


def potential_doc(pot: Potential, quiver_name: str) -> PotentialDoc:
    """Deterministic term order: by length, then canonical key."""
    items = sorted(pot.terms.items(), key=lambda kv: (len(kv[0]), kv[0]))
    return PotentialDoc(quiver_name, _const_terms(items), pot.trunc)


def morphism_doc(phi: Morphism, source: str, target: str, only_nontrivial: bool = True) -> MorphismDoc:
    rules = {}
    for a in phi.source.arrow_names:
        img = phi.images[a]
        if only_nontrivial and img == {(a,): 1}:
            continue
        rules[a] = _const_terms(sorted(img.items(), key=lambda kv: (len(kv[0]), kv[0])))
    return MorphismDoc(source, target, rules, phi.trunc)


def qp_document(quiver: Quiver, potential: Potential, qname: str = "Q", pname: str = "S") -> Document:
    doc = Document()
    doc.add("quiver", qname, quiver_doc(quiver))
    doc.add("potential", pname, potential_doc(potential, qname), quiver=qname,
            **({"trunc": str(potential.trunc)} if potential.trunc is not None else {}))
    return doc


def triangulation_doc(T, weak: Mapping[str, int] | None = None) -> TriangulationDoc:
    tris = [(tuple(t.sides), tuple(t.corners)) for t in T.triangles]
    return TriangulationDoc(list(T.arcs), list(T.boundary_segments), tris, dict(T.arrow_names),
                            {k: v for k, v in (weak or {}).items() if v != 1})


def read_document(path: str | Path) -> Document:
    return parse_document(Path(path).read_text())


def read_scalars(path: str | Path) -> dict[str, Fraction]:
    """Scalar choice from a JSON object or a document with a scalars section."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return {k: Fraction(str(v)) for k, v in data.items()}
    return parse_document(text).scalars()


FIXTURE_DIR = Path(__file__).with_name("fixtures")


def fixture_names() -> list[str]:
    return sorted(p.stem for p in FIXTURE_DIR.glob("*.qps"))


def load_fixture(name: str) -> Document:
    path = FIXTURE_DIR / f"{name}.qps"
    if not path.exists():
        raise DocumentError(f"unknown fixture {name!r}; available: {', '.join(fixture_names())}")
    return read_document(path)
