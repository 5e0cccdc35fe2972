"""Acceptance checks shared by the acceptance suite and the module tests.

Each check returns a :class:`CheckResult` carrying a pass flag, the elapsed
time and a short detail line; the time budget is part of the pass flag.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from qpsurf.documents import load_fixture
from qpsurf.pathalg import (
    Morphism,
    Potential,
    Series,
    apply_morphism,
    enumerate_paths,
    map_potential_arrows,
    morphism_depth,
)
from qpsurf.popcert import (
    POP_FIXTURES,
    PopFixture,
    folded_side_flip_witness,
    pop_certificate,
    seed_pop_reduction,
)
from qpsurf.qpcalc import (
    QP,
    Certificate,
    arrow_matchings,
    check_right_equivalence,
    jacobian_dim_truncated,
    mutate,
    nondegeneracy_scan,
    premutate,
    quivers_match,
    restrict,
    restrict_morphism,
    split_reduce,
)
from qpsurf.surface import (
    build_qp,
    dimer_rescale_equivalence,
    flip_ideal,
    flip_tagged,
    popped_potential,
    popped_scalars,
    tag,
)
from qpsurf.verify import CHANGED_SIGNATURES, EQUAL_SIGNATURES, scan_surface


@dataclass
class CheckResult:
    name: str
    ok: bool
    seconds: float
    detail: str = ""
    certificates: list[Certificate] = field(default_factory=list)

    def line(self) -> str:
        return f"{self.name} {'PASS' if self.ok else 'FAIL'} ({self.seconds:.2f}s) {self.detail}".rstrip()


def _timed(name: str, budget: float, body: Callable[[], tuple[bool, str, list[Certificate]]]) -> CheckResult:
    start = time.perf_counter()
    ok, detail, certs = body()
    elapsed = time.perf_counter() - start
    if elapsed > budget:
        ok = False
        detail = f"{detail}; over the {budget:g}s budget".lstrip("; ")
    return CheckResult(name, ok, elapsed, detail, certs)


def _qp(doc, quiver: str, potential: str, x) -> QP:
    return QP.build(doc.quiver(quiver), doc.potential(potential, x))


# ---------------------------------------------------------------------------
# Explicit examples
# ---------------------------------------------------------------------------


def check_hexagon_mutation() -> CheckResult:
    def body():
        d = load_fixture("hexagon3p")
        x = d.scalars("x")
        P = build_qp(d.triangulation("tau"), x)
        pre = premutate(P, "i")
        M = split_reduce(pre).reduced
        expected = d.potential("mu_i_S_tau", x)
        long_cycle = d.path("Q_sigma", "d1.d2.d3.d4.d5.a1.a2.a3.a4.a5")
        ok = (P.potential == d.potential("S_tau", x) and M.quiver == d.quiver("Q_sigma")
              and M.potential == expected and len(M.potential) == 6)
        return ok, f"{len(M.potential)} terms, coefficient {expected.coefficient(long_cycle)} on the cycle through both puncture fans", []
    return _timed("A1", 1.0, body)


def check_hexagon_witness() -> CheckResult:
    def body():
        d = load_fixture("hexagon3p")
        x = d.scalars("x")
        A = _qp(d, "Q_sigma", "S_sigma", x)
        B = mutate(build_qp(d.triangulation("tau"), x), "i")
        cert = check_right_equivalence(d.morphism("phi", x), A, B)
        # The document's sigma quiver must agree with the flipped triangulation's own.
        sigma = flip_tagged(tag(d.triangulation("tau")), "i").sigma
        same = quivers_match(build_qp(sigma, x).quiver, A.quiver)
        return cert.ok and cert.mode == "exact" and same, cert.summary(), [cert]
    return _timed("A2", 1.0, body)


def check_torus_mutation() -> CheckResult:
    def body():
        d = load_fixture("torus3p")
        x = d.scalars("x")
        P = build_qp(d.triangulation("tau"), x)
        M = mutate(P, "k")
        matches = M.quiver == d.quiver("Q_sigma") and M.potential == d.potential("mu_k_S_tau", x)
        target = _qp(d, "Q_sigma", "S_sigma", x)
        cert = check_right_equivalence(d.morphism("phi", x), M, target)
        sigma_built = build_qp(flip_ideal(d.triangulation("tau"), "k"), x)
        same_shape = len(sigma_built.potential) == len(target.potential)
        ok = matches and cert.ok and cert.mode == "exact" and same_shape
        return ok, f"mutation matches printed: {matches}; phi {cert.summary()}", [cert]
    return _timed("A3", 1.0, body)


def check_pop_transport() -> CheckResult:
    def body():
        d = load_fixture("torus3p")
        x = d.scalars("x")
        T = d.triangulation("tau")
        sigma = flip_ideal(T, "k")
        W_tau = popped_potential(T, x, "i", "j")
        W_sigma = popped_potential(sigma, x, "i", "j")
        # The flipped triangulation carries default arrow ids, so W(sigma) is
        # compared along an endpoint-preserving renaming onto the printed names.
        printed_sigma = d.potential("W_sigma", x)
        renamed = [map_potential_arrows(W_sigma.potential, printed_sigma.quiver, m)
                   for m in arrow_matchings(W_sigma.quiver, printed_sigma.quiver)]
        w_ok = W_tau.potential == d.potential("W_tau", x) and printed_sigma in renamed
        Qp = d.quiver("Q_premut")
        y = popped_scalars(x, "y")
        pre = premutate(build_qp(T, y), "k")
        trivial = split_reduce(pre).trivial.potential
        expected_trivial = d.potential("T_trivial", x)
        t_ok = trivial.terms == expected_trivial.terms
        # phi_y: premutation of S(tau, y) onto S(sigma, y) plus the trivial part.
        B = QP.build(Qp, Potential(Qp, d.potential("S_sigma", y).terms) + Potential(Qp, expected_trivial.terms))
        c1 = check_right_equivalence(d.morphism("phi_y", x), QP.build(Qp, pre.potential), B)
        # Its conjugate by the exchange of i and j acts on the popped side.
        swap = {"beta": "delta", "delta": "beta", "[gamma:alpha]": "[eps:alpha]", "[eps:alpha]": "[gamma:alpha]"}
        swapped_trivial = Potential(Qp, {tuple(swap.get(a, a) for a in k): v
                                         for k, v in expected_trivial.terms.items()})
        W_pre = premutate(QP.build(d.quiver("Q_tau"), d.potential("W_tau", x)), "k")
        B2 = QP.build(Qp, Potential(Qp, d.potential("W_sigma", x).terms) + swapped_trivial)
        c2 = check_right_equivalence(d.morphism("phi_popped", x), QP.build(Qp, W_pre.potential), B2)
        ok = w_ok and t_ok and c1.ok and c2.ok and c1.mode == c2.mode == "exact"
        detail = f"W matches: {w_ok}; trivial part matches: {t_ok}; conjugated rules {c2.summary()}"
        return ok, detail, [c1, c2]
    return _timed("A4", 1.0, body)


def check_seed_reduction() -> CheckResult:
    def body():
        counts, ok = [], True
        for name in POP_FIXTURES:
            f = PopFixture.load(name)
            s = seed_pop_reduction(f, f.scalars())
            ok = ok and s.matches_printed_S and s.matches_printed_W and s.matches_printed_residual
            counts.append(f"{name}:{len(s.residual)}")
        sphere = seed_pop_reduction(PopFixture.load("sphere6p_pop"), PopFixture.load("sphere6p_pop").scalars())
        ok = ok and len(sphere.residual) == 1
        return ok, "residual terms " + " ".join(counts), []
    return _timed("A5", 5.0, body)


# ---------------------------------------------------------------------------
# Certificates and scans
# ---------------------------------------------------------------------------


def check_pop_convergence(trunc: int = 14, deep: dict[str, int] | None = None) -> CheckResult:
    """The fixture certificate at ``trunc``, plus deeper runs that exercise the tail steps."""
    deep = deep if deep is not None else {"torus2p_pop": 40, "sphere6p_pop": 36}
    certs: list[Certificate] = []
    parts, ok = [], True
    total = 0.0
    for name in ("torus2p_pop", "sphere6p_pop"):
        f = PopFixture.load(name)
        for n in (trunc, deep.get(name)):
            if n is None:
                continue
            start = time.perf_counter()
            pc = pop_certificate(f, f.scalars(), trunc=n)
            elapsed = time.perf_counter() - start
            total = max(total, elapsed)
            good = pc.ok and pc.monotone and pc.depth_schedule_ok and elapsed < 60
            ok = ok and good
            certs.append(pc.certificate)
            parts.append(f"{name}@{n}:{len(pc.steps)} steps")
    result = CheckResult("A6", ok, total, "; ".join(parts), certs)
    return result


def check_folded_cases() -> CheckResult:
    def body():
        d = load_fixture("folded_configs")
        x = d.scalars("x")
        certs, cases, ok = [], [], True
        for n in range(1, 6):
            S = _qp(d, f"Q_sigma_{n}", f"S_sigma_{n}", x)
            W = _qp(d, f"Q_tau_{n}", f"W_tau_{n}", x)
            w = folded_side_flip_witness(S, "l", W)
            printed_ok = True
            if n in (4, 5):
                printed = check_right_equivalence(d.morphism(f"witness_{n}", x), mutate(S, "l"), W)
                printed_ok = printed.ok
                certs.append(printed)
            ok = ok and w.ok and w.case == n and printed_ok
            cases.append(w.case)
            certs.append(w.certificate)
        return ok, "cases " + " ".join(map(str, cases)), certs
    return _timed("A7", 5.0, body)


def check_flip_mutation_suite(depth: int = 2) -> CheckResult:
    def body():
        branches: set[str] = set()
        ok, parts = True, []
        certs = []
        for name, tri in (("hexagon3p", "tau"), ("torus3p", "tau"), ("torus3p", "tau_tagged")):
            d = load_fixture(name)
            tau = d.tagged(tri)
            scan = scan_surface(tau, d.scalars("x"), depth)
            ok = ok and scan.ok
            branches |= scan.branches
            parts.append(f"{name}/{tri}:{len(scan.reports)}")
            certs.extend(r.certificate for r in scan.reports[:4] if r.certificate is not None)
        ok = ok and branches >= {EQUAL_SIGNATURES, CHANGED_SIGNATURES}
        return ok, "reports " + " ".join(parts) + f"; branches {sorted(branches)}", certs
    return _timed("A8", 300.0, body)


def check_nondegeneracy(depth: int = 4, walks: int = 200, walk_length: int = 8, seed: int = 0) -> CheckResult:
    def body():
        d = load_fixture("hexagon3p")
        P = build_qp(d.triangulation("tau"), d.scalars("x"))
        ex = nondegeneracy_scan(P, depth)
        rnd = nondegeneracy_scan(P, walk_length, "random", seed=seed, count=walks)
        ok = ex.ok and rnd.ok
        return ok, f"{ex.sequences_checked} exhaustive and {rnd.sequences_checked} random mutations", []
    return _timed("A9", 300.0, body)


def check_scalar_irrelevance(seeds: tuple[int, int] = (1, 2)) -> CheckResult:
    def body():
        d = load_fixture("hexagon3p_dimer")
        T = d.triangulation("tau")
        ones = {p: Fraction(1) for p in T.punctures}
        certs, choices = [], []
        for s in seeds:
            rng = random.Random(s)
            x = {p: Fraction(rng.choice([-1, 1]) * rng.randint(1, 9), rng.randint(1, 9)) for p in T.punctures}
            choices.append(x)
            certs.append(dimer_rescale_equivalence(T, x, ones))
        distinct = choices[0] != choices[1]
        ok = distinct and all(c.ok and c.mode == "exact" for c in certs)
        return ok, "scalars " + "; ".join(" ".join(f"{p}={v}" for p, v in sorted(x.items())) for x in choices), certs
    return _timed("A10", 10.0, body)


# ---------------------------------------------------------------------------
# Property suites
# ---------------------------------------------------------------------------


def _random_unitriangular(rng: random.Random, quiver, max_len: int) -> Morphism:
    rules = {}
    for a in quiver.arrow_names:
        if rng.random() < 0.5:
            continue
        tail, head = quiver.tail(a), quiver.head(a)
        extra = {}
        for length in range(2, max_len + 1):
            options = [p for p in enumerate_paths(quiver, length)
                       if quiver.tail(p[0]) == tail and quiver.head(p[-1]) == head]
            if options and rng.random() < 0.6:
                extra[rng.choice(options)] = Fraction(rng.randint(-3, 3) or 1)
        if extra:
            rules[a] = {(a,): Fraction(1), **extra}
    return Morphism(quiver, quiver, rules)


def depth_lemma_cases(count: int = 500, seed: int = 7) -> tuple[int, int]:
    """Random unitriangular maps and series; returns (cases, failures)."""
    d = load_fixture("hexagon3p")
    quiver = d.quiver("Q_tau")
    rng = random.Random(seed)
    paths = {n: enumerate_paths(quiver, n) for n in range(1, 5)}
    failures = 0
    for _ in range(count):
        phi = _random_unitriangular(rng, quiver, 3)
        n = rng.randint(1, 3)
        terms = {}
        for _ in range(rng.randint(1, 5)):
            length = rng.randint(n, 4)
            terms[rng.choice(paths[length])] = Fraction(rng.randint(1, 5))
        u = Series(quiver, terms)
        depth = morphism_depth(phi)
        diff = apply_morphism(phi, u, 12) - u.with_trunc(12)
        low = min((len(k) for k in diff.terms), default=None)
        if low is not None and low < u.short() + depth:
            failures += 1
    return count, failures


def restriction_commutes(cert: Certificate, subsets: list[list[str]]) -> bool:
    for I in subsets:
        phi = restrict_morphism(cert.phi, I)
        A, B = restrict(cert.source, I), restrict(cert.target, I)
        trunc = None if cert.mode == "exact" else cert.degree
        if not check_right_equivalence(phi, A, B, trunc).ok:
            return False
    return True


def _vertex_subsets(cert: Certificate, rng: random.Random, count: int = 3) -> list[list[str]]:
    verts = sorted(cert.source.quiver.vertices)
    out = [verts[:-1]] if len(verts) > 1 else []
    for _ in range(count):
        k = rng.randint(1, len(verts))
        out.append(sorted(rng.sample(verts, k)))
    return out


def fixture_qps() -> list[tuple[str, QP]]:
    out = []
    for name, tri in (("hexagon3p", "tau"), ("torus3p", "tau"), ("torus3p", "tau_tagged"),
                      ("hexagon3p_dimer", "tau")):
        d = load_fixture(name)
        out.append((f"{name}/{tri}", build_qp(d.tagged(tri), d.scalars("x"))))
    for name in POP_FIXTURES:
        f = PopFixture.load(name)
        out.append((name, build_qp(f.triangulation, f.scalars())))
    d = load_fixture("folded_configs")
    x = d.scalars("x")
    for n in range(1, 6):
        out.append((f"folded_configs/{n}", _qp(d, f"Q_sigma_{n}", f"S_sigma_{n}", x)))
    return out


def involution_and_jdim(P: QP, degree: int = 8) -> list[str]:
    """Vertices where mutating twice changes the quiver pattern or the truncated dimensions."""
    bad = []
    base = jacobian_dim_truncated(P, degree - 1)
    for k in P.quiver.vertices:
        ins, outs = P.quiver.arrows_at(k)
        if not ins and not outs:
            continue
        if any(a in ins for a in outs):
            continue
        R = mutate(mutate(P, k), k)
        if not quivers_match(R.quiver, P.quiver) or jacobian_dim_truncated(R, degree - 1) != base:
            bad.append(k)
    return bad


def check_property_suites(certificates: list[Certificate]) -> CheckResult:
    def body():
        cases, failures = depth_lemma_cases()
        rng = random.Random(11)
        restrict_bad = sum(not restriction_commutes(c, _vertex_subsets(c, rng)) for c in certificates)
        invol_bad = []
        for name, P in fixture_qps():
            bad = involution_and_jdim(P, 8)
            if bad:
                invol_bad.append(f"{name}:{','.join(bad)}")
        ok = failures == 0 and restrict_bad == 0 and not invol_bad and certificates
        detail = (f"depth lemma {cases - failures}/{cases}; restriction {len(certificates) - restrict_bad}/"
                  f"{len(certificates)} certificates; involution failures {invol_bad or 'none'}")
        return bool(ok), detail, []
    return _timed("A11", 300.0, body)


CHECKS: list[Callable[[], CheckResult]] = [
    check_hexagon_mutation, check_hexagon_witness, check_torus_mutation, check_pop_transport,
    check_seed_reduction, check_pop_convergence, check_folded_cases, check_flip_mutation_suite,
    check_nondegeneracy, check_scalar_irrelevance,
]
