"""Command-line front end: ``qpsurf COMMAND [options]``.

Every command reads its input from a fixture (``--fixture NAME``) or a
document file (``--input FILE``), prints a document or a report on standard
output and exits with status 0 exactly when every certificate and validation
it ran passed.  ``--json`` switches to machine-readable output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from .documents import (
    Document,
    DocumentError,
    documents_equal,
    fixture_names,
    load_fixture,
    morphism_doc,
    parse_document,
    print_document,
    qp_document,
    read_document,
    read_scalars,
    triangulation_doc,
)
from .pathalg import PathAlgebraError, Potential
from .popcert import POP_FIXTURES, PopError, PopFixture, pop_certificate
from .qpcalc import (
    QP,
    Certificate,
    QPError,
    jacobian_dim_truncated,
    mutate,
    nondegeneracy_scan,
    restrict,
)
from .surface import (
    IdealTriangulation,
    SurfaceError,
    TaggedTriangulation,
    build_qp,
    dimer_rescale_equivalence,
    flip_tagged,
    glue_boundary_polygon,
    popped_potential,
    punctured_polygon,
    validate,
)
from .verify import check_flip_mutation

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class Outcome:
    """What a command produced: a pass flag, a text rendering and a JSON payload."""

    def __init__(self, ok: bool, text: str, data: Mapping[str, Any]):
        self.ok = ok
        self.text = text
        self.data = {"ok": ok, **data}


# ---------------------------------------------------------------------------
# Input helpers
# ---------------------------------------------------------------------------


def _load(args: argparse.Namespace) -> Document:
    if args.input:
        return read_document(args.input)
    if args.fixture:
        return load_fixture(args.fixture)
    raise DocumentError("give --fixture NAME or --input FILE")


def _scalars(args: argparse.Namespace, doc: Document) -> dict[str, Fraction]:
    if args.scalars:
        return read_scalars(args.scalars)
    if "x" in doc.names("scalars"):
        return doc.scalars("x")
    if doc.names("scalars"):
        return doc.scalars()
    raise DocumentError("no scalar choice: give --scalars FILE")


def _tagged(args: argparse.Namespace, doc: Document) -> TaggedTriangulation:
    return doc.tagged(args.triangulation)


def _qp(args: argparse.Namespace, doc: Document) -> QP:
    """A QP from a quiver and potential section, or built from a triangulation."""
    if doc.names("potential") and (args.potential or not doc.names("triangulation")):
        sec = doc.find("potential", args.potential)
        x = _scalars(args, doc) if doc.names("scalars") or args.scalars else None
        pot = doc.potential(sec.name, x)
        return QP.build(pot.quiver, pot, args.trunc)
    tau = _tagged(args, doc)
    return build_qp(tau, _scalars(args, doc), args.trunc)


def _terms_json(pot: Potential) -> list[list[object]]:
    items = sorted(pot.terms.items(), key=lambda kv: (len(kv[0]), kv[0]))
    return [[str(c), ".".join(k)] for k, c in items]


def _qp_outcome(P: QP, ok: bool = True, **extra: Any) -> Outcome:
    doc = qp_document(P.quiver, P.potential)
    data = {"document": print_document(doc), "arrows": [[a.name, a.tail, a.head] for a in P.quiver.arrows],
            "terms": _terms_json(P.potential), **extra}
    return Outcome(ok, print_document(doc), data)


def _certificate_json(cert: Certificate) -> dict[str, Any]:
    return {
        "ok": cert.ok,
        "mode": cert.mode,
        "automorphism": cert.automorphism,
        "note": cert.note,
        "lowest_diff": [[str(c), ".".join(k)] for c, k in cert.lowest_diff()],
    }


def _certificate_text(cert: Certificate, title: str) -> str:
    lines = [f"{title}: {cert.summary()}"]
    if cert.note:
        lines.append(f"  note: {cert.note}")
    if cert.ok:
        doc = Document()
        doc.add("morphism", "phi", morphism_doc(cert.phi, "source", "target"))
        body = print_document(doc).splitlines()[1:]
        lines.extend("  " + b for b in body if b.strip())
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_build_qp(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    P = build_qp(_tagged(args, doc), _scalars(args, doc), args.trunc)
    return _qp_outcome(P)


def cmd_mutate(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    P = _qp(args, doc)
    for k in args.at:
        P = mutate(P, k)
    two = P.quiver.two_cycles()
    return _qp_outcome(P, ok=not two, two_cycles=[list(c) for c in two])


def cmd_flip(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    tau = _tagged(args, doc)
    flip = flip_tagged(tau, args.at)
    sigma = flip.sigma
    report = validate(sigma.circ)
    out = Document()
    out.add("triangulation", "sigma", triangulation_doc(sigma.circ, sigma.weak))
    text = print_document(out)
    data = {"document": text, "changed_puncture": flip.changed_puncture,
            "weak": {p: v for p, v in sorted(sigma.weak.items())}, "problems": list(report.problems)}
    return Outcome(report.ok, text, data)


def _self_folded_pair(args: argparse.Namespace, tau: TaggedTriangulation) -> tuple[str, str]:
    if args.folded is not None and args.loop is not None:
        return args.folded, args.loop
    sf = tau.circ.self_folded
    if not sf:
        raise SurfaceError("the triangulation has no self-folded triangle")
    return sf[0].folded, sf[0].loop


def cmd_pop(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    tau = _tagged(args, doc)
    folded, loop = _self_folded_pair(args, tau)
    W = popped_potential(tau.circ, _scalars(args, doc), folded, loop, args.trunc)
    return _qp_outcome(W, folded=folded, loop=loop)


def _convergence_plot(path: str, name: str, degrees: Sequence[float], trunc: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(len(degrees)), degrees, marker="o")
    ax.axhline(trunc, linestyle="--", color="grey", label=f"truncation {trunc}")
    ax.set_xlabel("tail step")
    ax.set_ylabel("shortest residual cycle")
    ax.set_title(name)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_pop_cert(args: argparse.Namespace) -> Outcome:
    start = time.perf_counter()
    if args.fixture in POP_FIXTURES and not args.input:
        name = args.fixture
        fixture = PopFixture.load(name)
        x = read_scalars(args.scalars) if args.scalars else fixture.scalars()
        trunc = args.trunc if args.trunc is not None else 14
        pc = pop_certificate(fixture, x, trunc=trunc, max_steps=args.budget)
    else:
        # Other triangulations: glued route when bordered, witness search when closed.
        doc = _load(args)
        name = args.fixture or str(args.input)
        tau = _tagged(args, doc)
        folded, loop = _self_folded_pair(args, tau)
        trunc = args.trunc if args.trunc is not None else 8
        pc = pop_certificate(tau.circ, _scalars(args, doc), folded, loop, trunc=trunc)
    elapsed = time.perf_counter() - start
    seed = pc.seed
    degrees = [seed.residual.short()] if seed is not None else []
    degrees += [-r.metric_after[0] for r in pc.steps]
    shown = [d for d in degrees if d != float("inf")]
    if args.plot:
        _convergence_plot(args.plot, name, shown + ([trunc + 1] if len(shown) < len(degrees) else []), trunc)
    ok = pc.ok and pc.monotone and pc.depth_schedule_ok
    lines = [
        f"pop certificate for {name} mod paths longer than {trunc}: {'ok' if ok else 'FAIL'}",
        f"  seed matches printed formulas: S={seed.matches_printed_S} W={seed.matches_printed_W} "
        f"L1={seed.matches_printed_residual}" if seed else f"  route: {pc.route}",
        f"  tail steps: {len(pc.steps)}; metric strictly decreasing: {pc.monotone}; "
        f"depths equal short-3: {pc.depth_schedule_ok}",
        f"  shortest residual cycle per step: {' '.join(str(int(d)) for d in shown) or '-'}",
        f"  elapsed: {elapsed:.2f}s",
    ]
    if pc.certificate.note:
        lines.append(f"  note: {pc.certificate.note}")
    data = {"fixture": name, "route": pc.route, "trunc": trunc, "certificate": _certificate_json(pc.certificate),
            "steps": len(pc.steps), "monotone": pc.monotone, "depth_schedule_ok": pc.depth_schedule_ok,
            "short_degrees": shown, "elapsed": elapsed}
    return Outcome(ok, "\n".join(lines), data)


def cmd_check_flip_mutation(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    tau = _tagged(args, doc)
    trunc = args.trunc if args.trunc is not None else 8
    arcs = args.at or sorted(tau.circ.arcs)
    reports = [check_flip_mutation(tau, i, _scalars(args, doc), trunc) for i in arcs]
    ok = all(r.ok for r in reports)
    text = "\n".join(r.summary() for r in reports)
    data = {"reports": [{"arc": r.arc, "ok": r.ok, "branch": r.branch, "changed_puncture": r.changed_puncture,
                         "folded_case": r.folded_case, "note": r.note,
                         "certificate": _certificate_json(r.certificate) if r.certificate else None}
                        for r in reports]}
    return Outcome(ok, text, data)


def cmd_nondegen_scan(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    P = _qp(args, doc)
    if args.random:
        rep = nondegeneracy_scan(P, args.depth, "random", seed=args.seed, count=args.random)
    else:
        rep = nondegeneracy_scan(P, args.depth)
    lines = [f"non-degeneracy scan to depth {args.depth}: {'ok' if rep.ok else 'FAIL'} "
             f"({rep.sequences_checked} mutations)"]
    lines += [f"  {'.'.join(seq)}: {why}" for seq, why in rep.violations[:20]]
    data = {"depth": args.depth, "mutations": rep.sequences_checked,
            "violations": [[list(seq), why] for seq, why in rep.violations]}
    return Outcome(rep.ok, "\n".join(lines), data)


def cmd_dimer_rescale(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    T = doc.triangulation(args.triangulation)
    x = _scalars(args, doc)
    ones = {p: Fraction(1) for p in T.punctures}
    cert = dimer_rescale_equivalence(T, x, ones)
    return Outcome(cert.ok, _certificate_text(cert, "S(tau, 1) -> S(tau, x)"),
                   {"certificate": _certificate_json(cert)})


def cmd_restrict(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    P = _qp(args, doc)
    R = restrict(P, args.vertices)
    return _qp_outcome(R, vertices=list(args.vertices))


def cmd_glue(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    T = doc.triangulation(args.triangulation)
    cycle = T.boundary_cycle(args.point)
    polygon, points = punctured_polygon(len(cycle), args.prefix, args.punctures)
    glued = glue_boundary_polygon(T, args.point, polygon, points)
    report = validate(glued)
    out = Document()
    out.add("triangulation", "glued", triangulation_doc(glued))
    text = print_document(out)
    return Outcome(report.ok, text, {"document": text, "problems": list(report.problems)})


def cmd_jdim(args: argparse.Namespace) -> Outcome:
    doc = _load(args)
    P = _qp(args, doc)
    dims = jacobian_dim_truncated(P, args.degree)
    text = "truncated Jacobian dimensions by degree: " + " ".join(str(d) for d in dims)
    return Outcome(True, text, {"dimensions": dims})


def cmd_fixtures(args: argparse.Namespace) -> Outcome:
    """Parse every shipped fixture and confirm it prints back to the same document."""
    rows, ok = [], True
    for name in fixture_names():
        doc = load_fixture(name)
        same = documents_equal(parse_document(print_document(doc)), doc)
        valid = all(validate(doc.triangulation(t)).ok for t in doc.names("triangulation"))
        ok = ok and same and valid
        rows.append({"fixture": name, "round_trip": same, "valid": valid})
    text = "\n".join(f"{r['fixture']}: round trip {r['round_trip']}, valid {r['valid']}" for r in rows)
    return Outcome(ok, text, {"fixtures": rows})


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _source_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fixture", help="shipped fixture name")
    p.add_argument("--input", type=Path, help="document file")
    p.add_argument("--triangulation", help="triangulation section name (default: first)")
    p.add_argument("--potential", help="potential section name (default: first)")
    p.add_argument("--scalars", type=Path, help="scalar choice (JSON object or document)")
    p.add_argument("--trunc", type=int, help="truncation degree N (certify modulo paths longer than N)")
    p.add_argument("--json", action="store_true", help="machine-readable output")


COMMANDS: dict[str, tuple[Callable[[argparse.Namespace], Outcome], str]] = {
    "build-qp": (cmd_build_qp, "reduced QP of a triangulation"),
    "mutate": (cmd_mutate, "QP-mutation at one or more vertices"),
    "flip": (cmd_flip, "flip a tagged arc"),
    "pop": (cmd_pop, "popped potential of a self-folded triangle"),
    "pop-cert": (cmd_pop_cert, "truncated right-equivalence between S and its popped potential"),
    "check-flip-mutation": (cmd_check_flip_mutation, "certify that flips match mutations"),
    "nondegen-scan": (cmd_nondegen_scan, "search mutation sequences for 2-cycles"),
    "dimer-rescale": (cmd_dimer_rescale, "rescale every puncture scalar to 1 along dimer walks"),
    "restrict": (cmd_restrict, "restriction to a set of vertices"),
    "glue": (cmd_glue, "glue a punctured polygon onto a boundary component"),
    "jdim": (cmd_jdim, "truncated Jacobian algebra dimensions"),
    "fixtures": (cmd_fixtures, "self-test of the shipped fixtures"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpsurf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_fn, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _source_options(p)
        if name == "mutate":
            p.add_argument("--at", nargs="+", required=True, help="vertices, mutated left to right")
        elif name == "flip":
            p.add_argument("--at", required=True, help="arc to flip")
        elif name == "check-flip-mutation":
            p.add_argument("--at", nargs="*", help="arcs to flip (default: all)")
        if name in ("pop", "pop-cert"):
            p.add_argument("--folded", help="folded side (default: first self-folded triangle)")
            p.add_argument("--loop", help="enclosing loop")
        if name == "pop-cert":
            p.add_argument("--budget", type=int, default=10_000, help="maximum number of tail steps")
            p.add_argument("--plot", help="write a convergence plot (PNG) to this path")
        elif name == "nondegen-scan":
            p.add_argument("--depth", type=int, default=3, help="maximum sequence length")
            p.add_argument("--random", type=int, default=0, help="number of random walks instead of all sequences")
            p.add_argument("--seed", type=int, default=0, help="seed for random walks")
        elif name == "restrict":
            p.add_argument("--vertices", nargs="+", required=True)
        elif name == "glue":
            p.add_argument("--point", required=True, help="a marked point on the boundary component")
            p.add_argument("--punctures", type=int, default=5, help="interior punctures of the polygon")
            p.add_argument("--prefix", default="g", help="label prefix for the polygon")
        elif name == "jdim":
            p.add_argument("--degree", type=int, default=8)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fn, _help = COMMANDS[args.command]
    try:
        outcome = fn(args)
    except DocumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SurfaceError, QPError, PopError, PathAlgebraError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    if args.json:
        print(json.dumps(outcome.data, indent=2, sort_keys=True, default=str))
    else:
        print(outcome.text.rstrip("\n"))
    return EXIT_OK if outcome.ok else EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
