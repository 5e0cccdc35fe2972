from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

import checks
from qpsurf.documents import load_fixture
from qpsurf.pathalg import Morphism, invert_morphism, scaling
from qpsurf.qpcalc import (
    QP,
    QPError,
    check_right_equivalence,
    composite_name,
    delete_vertices,
    find_right_equivalence,
    jacobian_dim_truncated,
    mutate,
    nondegeneracy_scan,
    premutate,
    quivers_match,
    restrict,
    restrict_morphism,
    reversed_name,
    split_reduce,
)
from qpsurf.surface import build_qp

HEX = load_fixture("hexagon3p")
X = HEX.scalars("x")
P_HEX = build_qp(HEX.triangulation("tau"), X)
FIXTURE_QPS = checks.fixture_qps()


def _sigma_qp():
    return QP.build(HEX.quiver("Q_sigma"), HEX.potential("S_sigma", X))


class TestNaming:
    def test_reversed_and_composite(self):
        assert reversed_name("alpha") == "alpha*"
        assert composite_name("a", "b") == "[a:b]"

    def test_premutation_adds_delta_term(self):
        pre = premutate(P_HEX, "i")
        names = set(pre.quiver.arrow_names)
        assert {"delta*", "eps*", "[delta:eps]"} <= names
        delta_term = min(k for k in pre.potential.terms if "[delta:eps]" in k and len(k) == 3)
        assert pre.potential.terms[delta_term] == 1

    def test_vertex_set_preserved(self):
        assert set(mutate(P_HEX, "i").quiver.vertices) == set(P_HEX.quiver.vertices)


class TestSplitting:
    def test_hexagon_mutation_golden(self):
        assert mutate(P_HEX, "i").potential == HEX.potential("mu_i_S_tau", X)

    @pytest.mark.parametrize("name, P", FIXTURE_QPS, ids=[n for n, _ in FIXTURE_QPS])
    def test_idempotent_on_reduced(self, name, P):
        res = split_reduce(P)
        assert res.reduced.potential == P.potential and not res.pairs and res.exact

    def test_trivial_part_is_quadratic(self):
        res = split_reduce(premutate(P_HEX, "i"))
        assert all(len(k) == 2 for k in res.trivial.potential.terms)
        assert res.reduced.is_reduced

    def test_witness_certifies_split(self):
        pre = premutate(P_HEX, "i")
        res = split_reduce(pre)
        total = res.reduced.potential.on_quiver(pre.quiver) + res.trivial.potential.on_quiver(pre.quiver)
        cert = check_right_equivalence(res.witness, pre, QP.build(pre.quiver, total))
        assert cert.ok

    def test_loop_vertex_rejected(self):
        from qpsurf.pathalg import Potential, Quiver
        q = Quiver("uv", [("l", "u", "u"), ("a", "u", "v"), ("b", "v", "u")])
        P = QP.build(q, Potential(q, {("a", "b"): Fraction(1)}))
        with pytest.raises(QPError):
            premutate(P, "u")


class TestInvolution:
    @pytest.mark.parametrize("name, P", FIXTURE_QPS, ids=[n for n, _ in FIXTURE_QPS])
    def test_mutating_twice_restores_quiver_and_dimensions(self, name, P):
        assert checks.involution_and_jdim(P, 8) == []


class TestRestriction:
    @settings(max_examples=30)
    @given(st.sets(st.sampled_from(sorted(P_HEX.quiver.vertices)), min_size=1))
    def test_commutes_with_the_hexagon_witness(self, verts):
        A, B = _sigma_qp(), mutate(P_HEX, "i")
        phi = HEX.morphism("phi", X)
        assert check_right_equivalence(phi, A, B).ok
        cert = check_right_equivalence(restrict_morphism(phi, verts), restrict(A, verts), restrict(B, verts))
        assert cert.ok

    def test_delete_vertices_drops_them(self):
        R = delete_vertices(P_HEX, ["i"])
        assert "i" not in R.quiver.vertices
        assert all("delta" not in k and "eps" not in k for k in R.potential.terms)


class TestCertificates:
    def test_wrong_morphism_reports_lowest_diff(self):
        A, B = _sigma_qp(), mutate(P_HEX, "i")
        cert = check_right_equivalence(Morphism.identity(A.quiver), A, B)
        assert not cert.ok and cert.lowest_diff()
        assert "FAIL" in cert.summary()

    def test_search_recovers_a_right_equivalence(self):
        A, B = _sigma_qp(), mutate(P_HEX, "i")
        cert = find_right_equivalence(A, B, 12)
        assert cert.ok

    def test_inverse_certifies_backwards(self):
        A, B = _sigma_qp(), mutate(P_HEX, "i")
        phi = HEX.morphism("phi", X)
        inv = invert_morphism(phi, 12)
        assert check_right_equivalence(inv, B, A, 12).ok

    def test_jacobian_dimensions_agree_across_a_certificate(self):
        A, B = _sigma_qp(), mutate(P_HEX, "i")
        assert jacobian_dim_truncated(A, 6) == jacobian_dim_truncated(B, 6)

    def test_rescaling_changes_potential_but_not_dimensions(self):
        phi = scaling(P_HEX.quiver, {"alpha": 2})
        from qpsurf.pathalg import apply_morphism
        Q = QP.build(P_HEX.quiver, apply_morphism(phi, P_HEX.potential))
        assert Q.potential != P_HEX.potential
        assert check_right_equivalence(phi, P_HEX, Q).ok
        assert jacobian_dim_truncated(Q, 5) == jacobian_dim_truncated(P_HEX, 5)

    def test_quivers_match_ignores_names(self):
        renamed = P_HEX.quiver.renamed({"alpha": "zeta"})
        assert quivers_match(renamed, P_HEX.quiver) and renamed != P_HEX.quiver


class TestScan:
    def test_depth_zero_is_empty(self):
        rep = nondegeneracy_scan(P_HEX, 0)
        assert rep.ok and rep.sequences_checked == 0

    @pytest.mark.parametrize("depth", [1, 2])
    def test_hexagon_has_no_two_cycles(self, depth):
        assert nondegeneracy_scan(P_HEX, depth).ok

    def test_random_walks_are_reproducible(self):
        a = nondegeneracy_scan(P_HEX, 5, "random", seed=3, count=10)
        b = nondegeneracy_scan(P_HEX, 5, "random", seed=3, count=10)
        assert a.sequences_checked == b.sequences_checked and a.ok
