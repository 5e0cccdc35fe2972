"""End-to-end checks that flips of tagged arcs correspond to QP mutations.

For a tagged triangulation ``tau`` and an arc ``i`` the checker flips ``i``
to get ``sigma``, mutates ``(Q(tau), S(tau, x))`` at ``i`` and certifies a
right-equivalence onto ``(Q(sigma), S(sigma, x))``.  Two situations are
told apart, following whether the weak signature changes:

* equal weak signatures: an ideal flip, certified on the scalars
  ``y_p = eps(p) x_p`` of the ideal counterparts;
* different weak signatures: ``i`` is a folded side on one side of the flip.
  Besides the main certificate the local folded-side witness is checked
  whenever the neighbourhood of ``i`` is one of the five recognised
  configurations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .pathalg import PathAlgebraError
from .popcert import PopError, UnclassifiedConfiguration, folded_side_flip_witness
from .qpcalc import (
    QP,
    Certificate,
    QPError,
    find_right_equivalence,
    jacobian_dim_truncated,
    mutate,
    nondegeneracy_scan,
    quivers_match,
)
from .surface import (
    IdealTriangulation,
    SurfaceError,
    TaggedTriangulation,
    build_qp,
    check_scalars,
    flip_tagged,
    popped_potential,
    tag,
)

EQUAL_SIGNATURES = "equal"
CHANGED_SIGNATURES = "changed"


def _is_five_punctured_sphere(T: IdealTriangulation) -> bool:
    return not T.boundary_segments and len(T.punctures) == 5 and len(T.arcs) == 9


@dataclass
class FlipMutationReport:
    tau: TaggedTriangulation
    arc: str
    sigma: TaggedTriangulation | None
    branch: str
    relabel: dict[str, str]
    changed_puncture: str | None = None
    quivers_agree: bool = False
    certificate: Certificate | None = None
    folded_route: Certificate | None = None
    folded_case: int | None = None
    jacobian_source: list[int] = field(default_factory=list)
    jacobian_target: list[int] = field(default_factory=list)
    note: str = ""

    @property
    def ok(self) -> bool:
        if self.certificate is None or not self.certificate.ok or not self.quivers_agree:
            return False
        if self.folded_route is not None and not self.folded_route.ok:
            return False
        return self.jacobian_source == self.jacobian_target

    def summary(self) -> str:
        status = "ok" if self.ok else "FAIL"
        parts = [f"{status} flip {self.arc} [{self.branch}]"]
        if self.certificate is not None:
            parts.append(self.certificate.summary())
        if self.folded_case is not None:
            parts.append(f"folded case {self.folded_case}")
        if self.note:
            parts.append(self.note)
        return "; ".join(parts)


def _folded_route(tau: TaggedTriangulation, sigma: TaggedTriangulation, i: str,
                  x: Mapping[str, Fraction]) -> tuple[Certificate | None, int | None, str]:
    """The local folded-side witness, when ``i`` is a folded side of ``tau`` or ``sigma``.

    The triangulation in which ``i`` is a folded side plays the role of the
    target; its counterpart is mutated at ``i``.
    """
    for folded, other in ((tau, sigma), (sigma, tau)):
        sf = next((s for s in folded.circ.self_folded if s.folded == i), None)
        if sf is None:
            continue
        # The counterpart is built with the scalars signed by its own weak
        # signature, which negates the scalar at the enclosed puncture.  The
        # popped potential negates that scalar itself, so it takes the scalars
        # signed by the folded triangulation.
        S = build_qp(other.circ, {p: x[p] * other.weak.get(p, 1) for p in x})
        W = popped_potential(folded.circ, {p: x[p] * folded.weak.get(p, 1) for p in x},
                             sf.folded, sf.loop)
        try:
            w = folded_side_flip_witness(S, i, W)
        except UnclassifiedConfiguration as exc:
            return None, None, f"folded route skipped: {exc}"
        return w.certificate, w.case, ""
    return None, None, "no folded side at the flipped arc"


def check_flip_mutation(tau: TaggedTriangulation | IdealTriangulation, i: str,
                        x: Mapping[str, object], trunc: int = 8,
                        jacobian_degree: int = 4) -> FlipMutationReport:
    """Certify ``mu_i(Q(tau), S(tau, x))`` against ``(Q(sigma), S(sigma, x))``."""
    if isinstance(tau, IdealTriangulation):
        tau = tag(tau)
    if _is_five_punctured_sphere(tau.circ):
        raise SurfaceError("the five-times-punctured sphere is excluded")
    xs = check_scalars(tau.circ, x)
    try:
        flip = flip_tagged(tau, i)
    except SurfaceError as exc:
        return FlipMutationReport(tau, i, None, "", {}, note=f"flip failed: {exc}")
    sigma = flip.sigma
    branch = EQUAL_SIGNATURES if flip.changed_puncture is None else CHANGED_SIGNATURES
    report = FlipMutationReport(tau, i, sigma, branch, dict(flip.relabel), flip.changed_puncture)
    try:
        mutated = mutate(build_qp(tau, xs), i)
    except (QPError, PathAlgebraError) as exc:
        report.note = f"mutation failed: {exc}"
        return report
    target = build_qp(sigma, xs)
    report.quivers_agree = quivers_match(mutated.quiver, target.quiver)
    if not report.quivers_agree:
        report.note = "the mutated quiver differs from the quiver of the flip"
        return report
    report.certificate = find_right_equivalence(mutated, target, trunc)
    report.jacobian_source = jacobian_dim_truncated(mutated, jacobian_degree)
    report.jacobian_target = jacobian_dim_truncated(target, jacobian_degree)
    if branch == CHANGED_SIGNATURES:
        try:
            cert, case, note = _folded_route(tau, sigma, i, xs)
        except (PopError, SurfaceError, QPError) as exc:
            cert, case, note = None, None, f"folded route failed: {exc}"
        report.folded_route, report.folded_case, report.note = cert, case, note
    return report


# ---------------------------------------------------------------------------
# Batch driver
# ---------------------------------------------------------------------------


@dataclass
class SurfaceScan:
    reports: list[FlipMutationReport] = field(default_factory=list)
    nondegeneracy_ok: bool = True
    nondegeneracy_checked: int = 0
    triangulations: int = 0

    @property
    def ok(self) -> bool:
        return self.nondegeneracy_ok and all(r.ok for r in self.reports)

    @property
    def branches(self) -> set[str]:
        return {r.branch for r in self.reports}

    @property
    def folded_cases(self) -> set[int]:
        return {r.folded_case for r in self.reports if r.folded_case is not None}

    def failures(self) -> list[FlipMutationReport]:
        return [r for r in self.reports if not r.ok]


def scan_surface(tau: TaggedTriangulation | IdealTriangulation, x: Mapping[str, object],
                 flip_depth: int, trunc: int = 8, nondegeneracy_depth: int = 2,
                 jacobian_degree: int = 4) -> SurfaceScan:
    """Check every flip of every tagged triangulation within ``flip_depth`` flips of ``tau``."""
    if isinstance(tau, IdealTriangulation):
        tau = tag(tau)
    scan = SurfaceScan()
    if flip_depth <= 0:
        return scan
    xs = check_scalars(tau.circ, x)
    seen = {tau}
    frontier = [tau]
    for level in range(flip_depth):
        nxt = []
        for t in frontier:
            scan.triangulations += 1
            for i in sorted(t.circ.arcs):
                rep = check_flip_mutation(t, i, xs, trunc, jacobian_degree)
                scan.reports.append(rep)
                if rep.sigma is not None and rep.sigma not in seen and level + 1 < flip_depth:
                    seen.add(rep.sigma)
                    nxt.append(rep.sigma)
        frontier = nxt
    nd = nondegeneracy_scan(build_qp(tau, xs), nondegeneracy_depth)
    scan.nondegeneracy_ok = nd.ok
    scan.nondegeneracy_checked = nd.sequences_checked
    return scan


__all__ = [
    "FlipMutationReport", "check_flip_mutation", "SurfaceScan", "scan_surface",
    "EQUAL_SIGNATURES", "CHANGED_SIGNATURES",
]
