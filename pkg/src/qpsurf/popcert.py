"""Right-equivalences between a potential and its popped potential.

Three ingredients are provided:

* the seed reduction, which composes three explicit automorphisms and turns
  ``S(tau, x)`` into ``W(tau, x) + L_1`` on the designated fixture
  triangulations;
* the tail-lengthening step, which pushes the residual ``L_n`` to higher
  degree with one unitriangular substitution at a time, and the truncated
  limit certificate built from these steps;
* the witnesses for flips that land on a folded side, one per local
  configuration.

The designated triangulations ship as fixture documents carrying the arrow
names used in the formulas (``alpha``, ``eta1``, ``lambda3``, ``nu3``,
``rho`` and so on).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

from .documents import Document, DocumentError, load_fixture
from .pathalg import (
    INFINITY,
    Morphism,
    PathKey,
    Potential,
    apply_morphism,
    compose_morphisms,
    limit_compose,
    morphism_depth,
    rotations,
)
from .qpcalc import (
    QP,
    Certificate,
    arrow_matchings,
    check_right_equivalence,
    delete_vertices,
    find_right_equivalence,
    mutate,
    premutate,
    restrict,
    restrict_morphism,
)
from .surface import (
    IdealTriangulation,
    SurfaceError,
    TaggedTriangulation,
    build_qp,
    check_scalars,
    close_surface,
    popped_potential,
    popped_scalars,
)


class PopError(ValueError):
    """A contract of the pop construction failed (fixture or convention mismatch)."""


# ---------------------------------------------------------------------------
# Forced factors
# ---------------------------------------------------------------------------


def _occurrences(cycle: PathKey, factor: PathKey) -> list[int]:
    """Start positions of ``factor`` as a cyclic factor of ``cycle``."""
    n, m = len(cycle), len(factor)
    if m == 0 or m > n:
        return []
    doubled = cycle + cycle[: m - 1]
    return [s for s in range(n) if doubled[s:s + m] == factor]


@dataclass(frozen=True)
class ForcedFactorCondition:
    """Every cycle must contain one of ``factors`` as a cyclic factor."""

    factors: tuple[PathKey, ...]

    def has_factor(self, cycle: PathKey, which: int) -> bool:
        return bool(_occurrences(cycle, self.factors[which]))

    def holds_for(self, cycle: PathKey) -> bool:
        return any(self.has_factor(cycle, w) for w in range(len(self.factors)))

    def violations(self, potential: Potential) -> list[PathKey]:
        return [k for k in potential.terms if not self.holds_for(k)]

    def holds(self, potential: Potential) -> bool:
        return not self.violations(potential)

    def rotate_to(self, cycle: PathKey, which: int) -> PathKey:
        """The rotation of ``cycle`` that starts with factor ``which`` (first occurrence)."""
        hits = _occurrences(cycle, self.factors[which])
        if not hits:
            raise PopError(f"{'.'.join(cycle)} lacks {'.'.join(self.factors[which])}")
        s = hits[0]
        return cycle[s:] + cycle[:s]


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

POP_FIXTURES = ("torus2p_pop", "torus3p_pop", "sphere6p_pop")
POSITIVE_GENUS = "positive-genus"
SPHERE = "sphere"


def _text_fields(doc: Document, name: str) -> dict[str, str]:
    body = doc.find("text", name).payload
    out = {}
    for line in str(body).splitlines():
        if ":" in line:
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out


@dataclass
class PopFixture:
    """A designated triangulation together with the transcribed formulas."""

    name: str
    document: Document
    variant: str
    folded: str
    loop: str
    condition: ForcedFactorCondition

    @classmethod
    def load(cls, name: str) -> "PopFixture":
        doc = load_fixture(name)
        fields = _text_fields(doc, "pop")
        variant = fields.get("variant", "")
        if variant not in (POSITIVE_GENUS, SPHERE):
            raise DocumentError(f"fixture {name!r} has unknown pop variant {variant!r}")
        factors = tuple(doc.path("Q", w) for w in fields["factors"].split())
        return cls(name, doc, variant, fields["folded"], fields["loop"], ForcedFactorCondition(factors))

    @property
    def triangulation(self) -> IdealTriangulation:
        return self.document.triangulation("tau")

    @property
    def quiver(self):
        return self.document.quiver("Q")

    def path(self, word: str) -> PathKey:
        return self.document.path("Q", word)

    def scalars(self) -> dict[str, Fraction]:
        return self.document.scalars("x")

    def printed_S(self, x: Mapping[str, Fraction]) -> Potential:
        return self.document.potential("S_tau", x)

    def printed_W(self, x: Mapping[str, Fraction]) -> Potential:
        return self.document.potential("W_tau", x)

    def printed_residual(self, x: Mapping[str, Fraction]) -> Potential:
        return self.document.potential("L1", x)

    def seed_morphisms(self, x: Mapping[str, Fraction]) -> list[Morphism]:
        """``psi_beta_delta``, ``psi_alpha`` and ``psi_eta3``, in order of application."""
        return [self.document.morphism(n, x) for n in ("psi_beta_delta", "psi_alpha", "psi_eta3")]


def pop_fixture(name: str) -> PopFixture:
    return PopFixture.load(name)


# ---------------------------------------------------------------------------
# Seed reduction
# ---------------------------------------------------------------------------


@dataclass
class SeedResult:
    source: QP  # (Q(tau), S(tau, x))
    target: QP  # (Q(tau), W(tau, x))
    residual: Potential  # L_1
    morphism: Morphism  # psi_eta3 psi_alpha psi_beta_delta
    matches_printed_S: bool
    matches_printed_W: bool
    matches_printed_residual: bool


def seed_pop_reduction(fixture: PopFixture, x: Mapping[str, object]) -> SeedResult:
    """Apply the three seed automorphisms and split off the residual ``L_1``."""
    T = fixture.triangulation
    xs = check_scalars(T, x)
    S = build_qp(T, xs)
    W = popped_potential(T, xs, fixture.folded, fixture.loop)
    if S.quiver != fixture.quiver:
        raise PopError("the fixture quiver does not match the quiver of its triangulation")
    psi_bd, psi_a, psi_e = fixture.seed_morphisms(xs)
    phi0 = compose_morphisms(psi_e, compose_morphisms(psi_a, psi_bd))
    residual = apply_morphism(phi0, S.potential) - W.potential
    bad = fixture.condition.violations(residual)
    if bad:
        raise PopError(f"residual cycle {'.'.join(bad[0])} has none of the forced factors")
    return SeedResult(
        S, W, residual, phi0,
        S.potential == fixture.printed_S(xs),
        W.potential == fixture.printed_W(xs),
        residual == fixture.printed_residual(xs),
    )


# ---------------------------------------------------------------------------
# Tail lengthening
# ---------------------------------------------------------------------------


def short_degree(u: Potential) -> float:
    """Smallest term length (infinite for zero)."""
    return u.short()


def pop_metric(L: Potential, variant: str, condition: ForcedFactorCondition) -> tuple:
    """A tuple that strictly decreases (lexicographically) at every tail step.

    Positive genus: ``(-short, number of shortest cycles)``.  Sphere: the
    number of shortest cycles containing the second forced factor is
    appended with a minus sign, because the first phase of the sphere step
    only raises that number without lowering the count.
    """
    s = short_degree(L)
    if s == INFINITY:
        return (-INFINITY, 0, 0)
    shortest = [k for k in L.terms if len(k) == s]
    if variant == SPHERE:
        with_second = sum(1 for k in shortest if condition.has_factor(k, 1))
        return (-s, len(shortest), -with_second)
    return (-s, len(shortest), 0)


@dataclass
class PopState:
    residual: Potential  # L_n
    morphism: Morphism  # phi_{n-1} ... phi_0
    step: int = 0

    @property
    def short(self) -> float:
        return short_degree(self.residual)


@dataclass
class StepRecord:
    cycle: PathKey
    coefficient: Fraction
    arrow: str
    depth: float
    metric_before: tuple
    metric_after: tuple


def _step_rule(fixture: PopFixture, xi: PathKey, coeff: Fraction,
               x: Mapping[str, Fraction]) -> tuple[str, list[tuple[Fraction, PathKey]]]:
    """The substitution removing the shortest cycle ``xi`` (coefficient ``coeff``)."""
    cond = fixture.condition
    p = fixture.path
    first, second = cond.factors
    if fixture.variant == POSITIVE_GENUS:
        if cond.has_factor(xi, 0):
            zeta = cond.rotate_to(xi, 0)[len(first):]
            return "lambda3", [(Fraction(1), p("lambda3")), (-coeff, p("nu3") + zeta + p("eta2"))]
        zeta = cond.rotate_to(xi, 1)[len(second):]
        return "eta1", [(Fraction(1), p("eta1")), (-coeff, p("lambda2.nu3") + zeta)]
    if cond.has_factor(xi, 1):
        zeta = cond.rotate_to(xi, 1)[len(second):]
        return "eta1", [(Fraction(1), p("eta1")), (-coeff, p("nu.rho") + zeta)]
    zeta = cond.rotate_to(xi, 0)[len(first):]
    x4 = Fraction(x[_puncture_of_second_fold(fixture)])
    return "rho", [(Fraction(1), p("rho")), (coeff * x4, p("rho") + zeta + p("eta2"))]


def _puncture_of_second_fold(fixture: PopFixture) -> str:
    """The puncture enclosed by the self-folded triangle containing ``nu`` and ``rho``."""
    T = fixture.triangulation
    for sf in T.self_folded:
        if sf.folded != fixture.folded:
            return sf.puncture
    raise PopError("the sphere fixture needs a second self-folded triangle")


def tail_step(state: PopState, fixture: PopFixture, W: Potential, x: Mapping[str, Fraction],
              trunc: int) -> tuple[PopState, StepRecord, Morphism]:
    """Remove one shortest cycle of the residual by a unitriangular substitution."""
    L = state.residual
    if not L:
        raise PopError("the residual is already zero")
    bad = fixture.condition.violations(L)
    if bad:
        raise PopError(f"residual cycle {'.'.join(bad[0])} has none of the forced factors")
    s = state.short
    xi = min(k for k in L.terms if len(k) == s)  # canonical-key tie-break
    coeff = L.terms[xi]
    arrow, image = _step_rule(fixture, xi, coeff, x)
    phi = Morphism.from_rules(L.quiver, {arrow: image}, trunc=trunc)
    total = apply_morphism(phi, W.with_trunc(trunc) + L, trunc)
    new_L = total - W.with_trunc(trunc)
    before = pop_metric(L, fixture.variant, fixture.condition)
    after = pop_metric(new_L, fixture.variant, fixture.condition)
    record = StepRecord(xi, coeff, arrow, morphism_depth(phi), before, after)
    new_state = PopState(new_L, compose_morphisms(phi, state.morphism, trunc), state.step + 1)
    return new_state, record, phi


# ---------------------------------------------------------------------------
# Limit certificate
# ---------------------------------------------------------------------------


@dataclass
class PopCertificate:
    certificate: Certificate
    route: str  # "fixture", "glued" or "search"
    seed: SeedResult | None = None
    steps: list[StepRecord] = field(default_factory=list)
    limit_steps: int = 0

    @property
    def ok(self) -> bool:
        return self.certificate.ok

    @property
    def monotone(self) -> bool:
        return all(r.metric_after < r.metric_before for r in self.steps)

    @property
    def depth_schedule_ok(self) -> bool:
        return all(r.depth == len(r.cycle) - 3 for r in self.steps)

    def short_degrees(self) -> list[float]:
        return [-r.metric_before[0] for r in self.steps]


def pop_certificate_fixture(fixture: PopFixture, x: Mapping[str, object], trunc: int = 14,
                            max_steps: int = 10_000) -> PopCertificate:
    """Seed reduction followed by tail steps until the residual vanishes below ``trunc + 1``."""
    seed = seed_pop_reduction(fixture, x)
    xs = check_scalars(fixture.triangulation, x)
    W = seed.target.potential
    state = PopState(seed.residual.with_trunc(trunc), seed.morphism.with_trunc(trunc))
    records: list[StepRecord] = []

    def factors() -> Iterator[Morphism]:
        nonlocal state
        while state.residual:
            if len(records) >= max_steps:
                raise PopError(f"tail steps did not converge within {max_steps} steps")
            state, rec, phi = tail_step(state, fixture, W, xs, trunc)
            records.append(rec)
            yield phi
        # Nothing is left below the truncation degree: every further
        # factor is the identity there.
        yield Morphism.identity(fixture.quiver, trunc)

    limit = limit_compose(factors(), trunc, start=seed.morphism.with_trunc(trunc), max_steps=max_steps + 1)
    phi = limit.morphism
    cert = check_right_equivalence(phi, seed.source.with_trunc(trunc), seed.target.with_trunc(trunc), trunc)
    return PopCertificate(cert, "fixture", seed, records, limit.steps)


def pop_certificate(tau: IdealTriangulation | PopFixture | str, x: Mapping[str, object],
                    i: str | None = None, j: str | None = None, trunc: int = 14,
                    max_steps: int = 10_000) -> PopCertificate:
    """Certify ``(Q, S(tau, x)) -> (Q, W(tau, x))`` modulo paths longer than ``trunc``.

    Designated fixtures (given by name or as :class:`PopFixture`) use the
    seed-and-tail construction.  Any other triangulation falls back to the
    degree-wise witness search of :func:`find_right_equivalence`.
    """
    if isinstance(tau, str):
        tau = PopFixture.load(tau)
    if isinstance(tau, PopFixture):
        if (i, j) not in ((None, None), (tau.folded, tau.loop)):
            raise PopError("a fixture certificate pops its designated self-folded triangle")
        return pop_certificate_fixture(tau, x, trunc, max_steps)
    if i is None or j is None:
        raise PopError("the folded side and its loop are required")
    if tau.boundary_segments:
        return glued_pop_certificate(tau, x, i, j, trunc)
    S = build_qp(tau, x, trunc)
    W = popped_potential(tau, x, i, j, trunc)
    cert = find_right_equivalence(S, W, trunc, arrow_map={a: a for a in S.quiver.arrow_names})
    return PopCertificate(cert, "search")


def glued_pop_certificate(tau: IdealTriangulation, x: Mapping[str, object], i: str, j: str,
                          trunc: int = 8, punctures: int = 5) -> PopCertificate:
    """Pop on a bordered surface by way of its closure.

    Every boundary component receives a punctured polygon, the closed
    surface is certified by the witness search, and the certificate is
    restricted back to the arcs of ``tau``.  The restrictions of both glued
    potentials must reproduce ``S(tau, x)`` and ``W(tau, x)`` once the extra
    vertices are deleted; the restricted morphism is then re-verified.
    """
    xs = check_scalars(tau, x)
    closed = close_surface(tau, punctures)
    xg = {p: xs.get(p, Fraction(1)) for p in closed.punctures}
    S = build_qp(closed, xg, trunc)
    W = popped_potential(closed, xg, i, j, trunc)
    glued = find_right_equivalence(S, W, trunc, arrow_map={a: a for a in S.quiver.arrow_names})
    keep = set(tau.arcs)
    extra = [v for v in S.quiver.vertices if v not in keep]
    RS, RW = restrict(S, keep), restrict(W, keep)
    recovered = (delete_vertices(RS, extra).potential == build_qp(tau, xs, trunc).potential
                 and delete_vertices(RW, extra).potential == popped_potential(tau, xs, i, j, trunc).potential)
    cert = check_right_equivalence(restrict_morphism(glued.phi, keep), RS, RW, trunc)
    if not recovered:
        cert.ok = False
        cert.note = "restricted glued potentials do not reproduce the bordered ones"
    elif not glued.ok:
        cert.ok = False
        cert.note = f"closed-surface search failed: {glued.note}"
    return PopCertificate(cert, "glued")


# ---------------------------------------------------------------------------
# Flips landing on a folded side
# ---------------------------------------------------------------------------


class UnclassifiedConfiguration(PopError):
    """The neighbourhood of the flipped arc matches none of the five cases."""


@dataclass
class FoldedFlipWitness:
    case: int
    certificate: Certificate
    scaled_arrow: str | None = None
    factor: Fraction | None = None

    @property
    def ok(self) -> bool:
        return self.certificate.ok


def _terms_through(S: Potential, arrows: set[str]) -> list[tuple[PathKey, Fraction]]:
    return [(k, c) for k, c in S.terms.items() if arrows & set(k)]


def _passage_rotation(cycle: PathKey, a: str, b: str) -> PathKey | None:
    for r in rotations(cycle):
        if r[0] == a and len(r) > 1 and r[1] == b:
            return r
    return None


def classify_folded_configuration(P: QP, l: str) -> tuple[int, dict[str, str]]:
    """Local case (1 to 5) around the vertex ``l`` and the roles of its arrows."""
    ins, outs = P.quiver.arrows_at(l)
    at_l = set(ins) | set(outs)
    terms = _terms_through(P.potential, at_l)
    if len(ins) == 1 and len(outs) == 1:
        a, b = ins[0], outs[0]
        if len(terms) != 2 or any(_passage_rotation(k, a, b) is None for k, _ in terms):
            raise UnclassifiedConfiguration("expected exactly two cycles passing through l")
        pre = premutate(P, l)
        if any(len(k) == 2 for k in pre.potential.terms):
            return 2, {"a": a, "b": b}
        r1, r2 = sorted((_passage_rotation(k, a, b)[2:] for k, _ in terms), key=len)  # type: ignore[index]
        if r1 and _occurrences(r2, r1):
            return 3, {"a": a, "b": b}
        return 1, {"a": a, "b": b}
    if len(ins) == 2 and len(outs) == 1:
        b = outs[0]
        long = [k for k, _ in terms if len(k) > 4]
        users = {a for a in ins if any(a in k for k in long)}
        if len(terms) != 3 or len(users) != 1:
            raise UnclassifiedConfiguration("expected one long cycle through a single incoming arrow")
        alpha = users.pop()
        a = next(v for v in ins if v != alpha)
        return 4, {"a": a, "alpha": alpha, "b": b}
    if len(ins) == 1 and len(outs) == 2:
        b = ins[0]
        long = [k for k, _ in terms if len(k) > 4]
        users = {a for a in outs if any(a in k for k in long)}
        if len(terms) != 3 or len(users) != 1:
            raise UnclassifiedConfiguration("expected one long cycle through a single outgoing arrow")
        alpha = users.pop()
        a = next(v for v in outs if v != alpha)
        return 5, {"a": a, "alpha": alpha, "b": b}
    raise UnclassifiedConfiguration(f"l has {len(ins)} incoming and {len(outs)} outgoing arrows")


def _four_cycle_coefficient(P: QP, first: str, second: str) -> Fraction:
    for k, c in P.potential.terms.items():
        if len(k) == 4 and _passage_rotation(k, first, second) is not None:
            return c
    raise UnclassifiedConfiguration(f"no 4-cycle through {first}.{second}")


def folded_side_flip_witness(sigma: QP, l: str, tau: QP,
                             arrow_map: Mapping[str, str] | None = None) -> FoldedFlipWitness:
    """Certify ``mu_l(Q(sigma), S(sigma, x)) -> (Q(tau), W(tau, x))``.

    Cases 1 to 3 use the identity; cases 4 and 5 rescale the reversed arrow
    ``alpha*`` by ``-x_{q2}``, read off as the ratio of the coefficients of the
    two 4-cycles through ``l``.  ``arrow_map`` renames arrows of the mutated
    quiver onto ``tau``'s arrows when the two namings differ; when omitted and
    the quivers differ, endpoint-preserving bijections are tried in turn.
    """
    case, roles = classify_folded_configuration(sigma, l)
    M = mutate(sigma, l)
    scaled = factor = None
    scaling: dict[str, Fraction] = {}
    if case in (4, 5):
        if case == 4:
            c_a = _four_cycle_coefficient(sigma, roles["a"], roles["b"])
            c_alpha = _four_cycle_coefficient(sigma, roles["alpha"], roles["b"])
        else:
            c_a = _four_cycle_coefficient(sigma, roles["b"], roles["a"])
            c_alpha = _four_cycle_coefficient(sigma, roles["b"], roles["alpha"])
        factor = c_a / c_alpha  # equals -x_{q2}
        scaled = roles["alpha"] + "*"
        scaling[scaled] = factor
    maps: list[Mapping[str, str]]
    if arrow_map is not None:
        maps = [arrow_map]
    elif M.quiver == tau.quiver:
        maps = [{a: a for a in M.quiver.arrow_names}]
    else:
        maps = arrow_matchings(M.quiver, tau.quiver)  # type: ignore[assignment]
    best: Certificate | None = None
    for m in maps:
        images = {a: {(m[a],): scaling.get(a, Fraction(1))} for a in M.quiver.arrow_names}
        phi = Morphism(M.quiver, tau.quiver, images)
        cert = check_right_equivalence(phi, M, tau)
        if cert.ok:
            cert.note = f"case {case}"
            return FoldedFlipWitness(case, cert, scaled, factor)
        best = best or cert
    if best is None:
        raise UnclassifiedConfiguration("the mutated quiver does not match the quiver of tau")
    best.note = f"case {case}: printed witness failed"
    return FoldedFlipWitness(case, best, scaled, factor)


def folded_side_flip_witness_for(sigma: TaggedTriangulation, l: str, tau: IdealTriangulation,
                                 x: Mapping[str, object], trunc: int | None = None) -> FoldedFlipWitness:
    """Triangulation-level wrapper: ``l`` in ``sigma`` flips to the folded side ``l`` of ``tau``."""
    sf = next((s for s in tau.self_folded if s.folded == l), None)
    if sf is None:
        raise SurfaceError(f"{l!r} is not a folded side of tau")
    xs = check_scalars(tau, x)
    S = build_qp(sigma, xs, trunc)
    eps = {p: Fraction(v) for p, v in sigma.weak.items()}
    y = {p: xs[p] * eps.get(p, 1) for p in xs}
    y[sf.puncture] = xs[sf.puncture]  # the weak sign at the enclosed puncture is recorded by the pop
    W = popped_potential(tau, y, sf.folded, sf.loop, trunc)
    return folded_side_flip_witness(S, l, W)


__all__ = [
    "PopError", "UnclassifiedConfiguration", "ForcedFactorCondition", "PopFixture", "pop_fixture",
    "POP_FIXTURES", "SeedResult", "seed_pop_reduction", "PopState", "StepRecord", "tail_step",
    "pop_metric", "short_degree", "PopCertificate", "pop_certificate", "pop_certificate_fixture",
    "FoldedFlipWitness", "classify_folded_configuration", "folded_side_flip_witness",
    "folded_side_flip_witness_for", "popped_scalars",
]
