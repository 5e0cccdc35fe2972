import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from qpsurf.documents import (
    DocumentError,
    Monomial,
    documents_equal,
    fixture_names,
    load_fixture,
    parse_document,
    print_document,
    qp_document,
    read_scalars,
    triangulation_doc,
)
from qpsurf.pathalg import Potential, Quiver
from qpsurf.surface import validate

FIXTURES = fixture_names()

SMALL = """\
[quiver Q]
vertices: u v w
arrow a: u -> v
arrow b: v -> w
arrow c: w -> u

[scalars x]
p = 3
q = -1/2

[potential S quiver=Q]
x[p] * a.b.c
"""


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip(name):
    doc = load_fixture(name)
    again = parse_document(print_document(doc))
    assert documents_equal(doc, again)
    assert print_document(again) == print_document(doc)


def test_every_fixture_is_shipped():
    assert {"hexagon3p", "torus3p", "torus2p_pop", "sphere6p_pop", "folded_configs"} <= set(FIXTURES)


def test_unknown_fixture_lists_alternatives():
    with pytest.raises(DocumentError, match="hexagon3p"):
        load_fixture("no-such-surface")


class TestParsing:
    def test_small_document(self):
        doc = parse_document(SMALL)
        x = doc.scalars("x")
        assert x == {"p": Fraction(3), "q": Fraction(-1, 2)}
        pot = doc.potential("S", x)
        assert pot.terms == {("a", "b", "c"): Fraction(3)}

    def test_error_carries_line(self):
        bad = SMALL.replace("arrow b: v -> w", "arrow b v w")
        with pytest.raises(DocumentError) as info:
            parse_document(bad)
        assert info.value.line == 4

    def test_path_that_does_not_compose(self):
        bad = SMALL.replace("x[p] * a.b.c", "x[p] * a.c.b")
        with pytest.raises(DocumentError):
            parse_document(bad).potential("S", {"p": 3, "q": 1})

    @pytest.mark.parametrize("text, value", [
        ("x[p]", Fraction(3)), ("2*x[p]^-1", Fraction(2, 3)), ("x[p]*x[q]", Fraction(-3, 2)), ("5/7", Fraction(5, 7)),
    ])
    def test_monomials(self, text, value):
        assert Monomial.parse(text).evaluate({"p": Fraction(3), "q": Fraction(-1, 2)}) == value


QUIVER = Quiver("uvw", [("a", "u", "v"), ("b", "v", "w"), ("c", "w", "u"), ("d", "w", "v")])
CYCLES = [("a", "b", "c"), ("b", "d"), ("a", "b", "d", "b", "c"), ("a", "b", "c", "a", "b", "c")]


@settings(max_examples=40)
@given(st.dictionaries(st.sampled_from(range(len(CYCLES))),
                       st.fractions(min_value=-20, max_value=20, max_denominator=12).filter(bool), min_size=1))
def test_printed_qp_parses_back(coeffs):
    pot = Potential(QUIVER, {CYCLES[k]: v for k, v in coeffs.items()})
    doc = qp_document(QUIVER, pot)
    back = parse_document(print_document(doc))
    assert back.quiver("Q") == QUIVER
    assert back.potential("S") == pot


@pytest.mark.parametrize("name", ["hexagon3p", "torus3p", "hexagon3p_dimer"])
def test_triangulation_section_round_trip(name):
    T = load_fixture(name).triangulation("tau")
    doc = parse_document(SMALL)
    doc.add("triangulation", "copy", triangulation_doc(T))
    back = parse_document(print_document(doc)).triangulation("copy")
    assert back == T and validate(back).ok


class TestScalarFiles:
    def test_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(json.dumps({"p1": "2/3", "p2": -4}))
        assert read_scalars(path) == {"p1": Fraction(2, 3), "p2": Fraction(-4)}

    def test_document(self, tmp_path):
        path = tmp_path / "x.qps"
        path.write_text(SMALL)
        assert read_scalars(path)["q"] == Fraction(-1, 2)
