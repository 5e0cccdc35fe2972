from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from qpsurf.documents import load_fixture
from qpsurf.pathalg import Potential
from qpsurf.qpcalc import QP, check_right_equivalence, mutate
from qpsurf.popcert import (
    POP_FIXTURES,
    SPHERE,
    ForcedFactorCondition,
    PopError,
    PopFixture,
    PopState,
    UnclassifiedConfiguration,
    classify_folded_configuration,
    folded_side_flip_witness,
    pop_certificate,
    pop_metric,
    seed_pop_reduction,
    tail_step,
)
from qpsurf.surface import build_qp, popped_potential

FOLDED = load_fixture("folded_configs")
FX = FOLDED.scalars("x")


def _folded_pair(n, x=FX):
    S = QP.build(FOLDED.quiver(f"Q_sigma_{n}"), FOLDED.potential(f"S_sigma_{n}", x))
    W = QP.build(FOLDED.quiver(f"Q_tau_{n}"), FOLDED.potential(f"W_tau_{n}", x))
    return S, W


class TestForcedFactors:
    def test_factor_found_across_the_seam(self):
        cond = ForcedFactorCondition((("a", "b"),))
        assert cond.holds_for(("b", "c", "a"))
        assert cond.rotate_to(("b", "c", "a"), 0) == ("a", "b", "c")

    def test_missing_factor_reported(self):
        cond = ForcedFactorCondition((("a", "b"), ("d",)))
        assert not cond.holds_for(("a", "c"))
        with pytest.raises(PopError):
            cond.rotate_to(("a", "c"), 0)


@pytest.mark.parametrize("name", POP_FIXTURES)
class TestSeed:
    def test_seed_reproduces_the_printed_formulas(self, name):
        seed = seed_pop_reduction(PopFixture.load(name), PopFixture.load(name).scalars())
        assert seed.matches_printed_S and seed.matches_printed_W and seed.matches_printed_residual

    def test_residual_satisfies_the_forced_factor_condition(self, name):
        f = PopFixture.load(name)
        assert f.condition.holds(seed_pop_reduction(f, f.scalars()).residual)

    @settings(max_examples=5)
    @given(st.lists(st.sampled_from([2, 3, -5, Fraction(1, 7), Fraction(-3, 4)]), min_size=6, max_size=6))
    def test_seed_matches_for_other_scalars(self, name, values):
        f = PopFixture.load(name)
        x = dict(zip(sorted(f.triangulation.punctures), values))
        seed = seed_pop_reduction(f, x)
        assert seed.matches_printed_W and seed.matches_printed_residual


class TestTailSteps:
    @pytest.mark.parametrize("name", POP_FIXTURES)
    def test_each_step_lowers_the_metric_and_has_the_expected_depth(self, name):
        f = PopFixture.load(name)
        x = f.scalars()
        seed = seed_pop_reduction(f, x)
        trunc = 30
        state = PopState(seed.residual.with_trunc(trunc), seed.morphism.with_trunc(trunc))
        W = seed.target.potential
        for _ in range(6):
            if not state.residual:
                break
            xi_len = state.short
            state, rec, _phi = tail_step(state, f, W, x, trunc)
            assert rec.metric_after < rec.metric_before
            assert rec.depth == xi_len - 3
            assert rec.cycle not in state.residual.terms

    def test_zero_residual_rejected(self):
        f = PopFixture.load("torus2p_pop")
        seed = seed_pop_reduction(f, f.scalars())
        state = PopState(Potential.zero(seed.residual.quiver), seed.morphism)
        with pytest.raises(PopError):
            tail_step(state, f, seed.target.potential, f.scalars(), 10)

    def test_sphere_metric_counts_the_second_factor(self):
        f = PopFixture.load("sphere6p_pop")
        L = seed_pop_reduction(f, f.scalars()).residual
        metric = pop_metric(L, SPHERE, f.condition)
        assert metric[0] == -L.short() and len(metric) == 3


class TestCertificates:
    @pytest.mark.parametrize("name, trunc", [("torus2p_pop", 14), ("torus3p_pop", 14), ("sphere6p_pop", 14),
                                             ("torus2p_pop", 30)])
    def test_converges(self, name, trunc):
        pc = pop_certificate(name, PopFixture.load(name).scalars(), trunc=trunc)
        assert pc.ok and pc.route == "fixture" and pc.monotone and pc.depth_schedule_ok

    def test_deep_run_needs_tail_steps(self):
        pc = pop_certificate("torus2p_pop", PopFixture.load("torus2p_pop").scalars(), trunc=30)
        degrees = pc.short_degrees()
        assert pc.steps and degrees == sorted(degrees)

    def test_wrong_pair_rejected(self):
        f = PopFixture.load("torus2p_pop")
        with pytest.raises(PopError):
            pop_certificate(f, f.scalars(), "k", "l")

    def test_pair_required_off_fixture(self):
        d = load_fixture("torus3p")
        with pytest.raises(PopError):
            pop_certificate(d.triangulation("tau"), d.scalars("x"))

    def test_search_route_on_a_closed_surface(self):
        d = load_fixture("torus3p")
        pc = pop_certificate(d.triangulation("tau"), d.scalars("x"), "i", "j", trunc=8)
        assert pc.ok and pc.route == "search"

    @pytest.mark.parametrize("trunc", [6, 8])
    def test_bordered_surface_goes_through_the_closure(self, trunc):
        d = load_fixture("hexagon3p")
        pc = pop_certificate(d.triangulation("tau"), d.scalars("x"), "i", "j", trunc=trunc)
        assert pc.ok and pc.route == "glued"
        assert set(pc.certificate.phi.images) <= set(pc.certificate.source.quiver.arrow_names)


class TestFoldedConfigurations:
    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_classifier_and_witness(self, n):
        S, W = _folded_pair(n)
        case, roles = classify_folded_configuration(S, "l")
        w = folded_side_flip_witness(S, "l", W)
        assert case == n and w.case == n and w.ok
        assert (w.scaled_arrow is not None) == (n in (4, 5))

    @pytest.mark.parametrize("n", [4, 5])
    def test_printed_witness_agrees_with_computed_scaling(self, n):
        S, W = _folded_pair(n)
        w = folded_side_flip_witness(S, "l", W)
        printed = FOLDED.morphism(f"witness_{n}", FX)
        target = mutate(S, "l")
        assert w.certificate.ok
        assert check_right_equivalence(printed, target, W).ok

    def test_unclassified_vertex_is_reported(self):
        d = load_fixture("torus3p")
        P = build_qp(d.triangulation("tau"), d.scalars("x"))
        with pytest.raises(UnclassifiedConfiguration):
            classify_folded_configuration(P, "k")

    def test_wrong_target_fails(self):
        S, _W = _folded_pair(1)
        _S2, W2 = _folded_pair(2)
        with pytest.raises(PopError, match="does not match"):
            folded_side_flip_witness(S, "l", W2)


def test_popped_potential_differs_from_original_on_a_fixture():
    f = PopFixture.load("torus2p_pop")
    x = f.scalars()
    assert build_qp(f.triangulation, x).potential != popped_potential(f.triangulation, x, f.folded, f.loop).potential
