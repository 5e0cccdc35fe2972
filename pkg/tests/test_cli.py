import json

import pytest

from qpsurf.cli import EXIT_FAILED, EXIT_OK, EXIT_USAGE, main
from qpsurf.documents import load_fixture, parse_document
from qpsurf.qpcalc import mutate
from qpsurf.surface import build_qp


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, _err = run(capsys, *argv, "--json")
    return code, json.loads(out)


def test_build_qp_has_six_terms(capsys):
    code, data = run_json(capsys, "build-qp", "--fixture", "hexagon3p")
    assert code == EXIT_OK and len(data["terms"]) == 6


def test_mutate_prints_the_mutated_potential(capsys):
    code, out, _ = run(capsys, "mutate", "--fixture", "hexagon3p", "--at", "i")
    d = load_fixture("hexagon3p")
    expected = mutate(build_qp(d.triangulation("tau"), d.scalars("x")), "i")
    printed = parse_document(out)
    assert code == EXIT_OK and printed.potential(None, None) == expected.potential


def test_mutating_twice_restores_the_quiver(capsys):
    code, data = run_json(capsys, "mutate", "--fixture", "hexagon3p", "--at", "k", "k")
    _, base = run_json(capsys, "build-qp", "--fixture", "hexagon3p")
    assert code == EXIT_OK
    # Arrow names change; the endpoints do not.
    assert sorted((t, h) for _a, t, h in data["arrows"]) == sorted((t, h) for _a, t, h in base["arrows"])


def test_flip_reports_the_new_triangulation(capsys):
    code, out, _ = run(capsys, "flip", "--fixture", "hexagon3p", "--at", "i")
    assert code == EXIT_OK and "[triangulation" in out


def test_pop_matches_the_printed_popped_potential(capsys):
    code, out, _ = run(capsys, "pop", "--fixture", "torus2p_pop")
    d = load_fixture("torus2p_pop")
    assert code == EXIT_OK
    assert parse_document(out).potential(None, None) == d.potential("W_tau", d.scalars("x"))


@pytest.mark.parametrize("fixture", ["torus2p_pop", "sphere6p_pop"])
def test_pop_cert_designated(capsys, fixture):
    code, data = run_json(capsys, "pop-cert", "--fixture", fixture)
    assert code == EXIT_OK and data["route"] == "fixture" and data["monotone"]


def test_pop_cert_bordered_goes_through_the_closure(capsys):
    code, data = run_json(capsys, "pop-cert", "--fixture", "hexagon3p", "--trunc", "6")
    assert code == EXIT_OK and data["route"] == "glued"


def test_pop_cert_plot(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    path = tmp_path / "conv.png"
    code, _out, _ = run(capsys, "pop-cert", "--fixture", "torus2p_pop", "--trunc", "30", "--plot", str(path))
    assert code == EXIT_OK and path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_check_flip_mutation_all_arcs(capsys):
    code, data = run_json(capsys, "check-flip-mutation", "--fixture", "hexagon3p")
    assert code == EXIT_OK and len(data["reports"]) == 12
    assert {r["branch"] for r in data["reports"]} == {"equal", "changed"}


@pytest.mark.parametrize("extra", [[], ["--random", "5", "--depth", "6", "--seed", "1"]])
def test_nondegen_scan(capsys, extra):
    code, data = run_json(capsys, "nondegen-scan", "--fixture", "hexagon3p", "--depth", "2", *extra)
    assert code == EXIT_OK and data["mutations"] > 0 and not data["violations"]


def test_dimer_rescale(capsys):
    code, data = run_json(capsys, "dimer-rescale", "--fixture", "hexagon3p_dimer")
    assert code == EXIT_OK and data["certificate"]["mode"] == "exact"


def test_restrict_keeps_vertices(capsys):
    code, data = run_json(capsys, "restrict", "--fixture", "hexagon3p", "--vertices", "i", "j", "k", "l")
    assert code == EXIT_OK
    assert all(t in "ijkl" and h in "ijkl" for _a, t, h in data["arrows"])


def test_glue_closes_a_boundary_component(capsys):
    code, data = run_json(capsys, "glue", "--fixture", "hexagon3p", "--point", "B1")
    glued = parse_document(data["document"]).triangulation("glued")
    assert code == EXIT_OK and not glued.boundary_segments


def test_jdim(capsys):
    code, data = run_json(capsys, "jdim", "--fixture", "hexagon3p", "--degree", "3")
    assert code == EXIT_OK and data["dimensions"][0] == 12


def test_fixtures_self_test(capsys):
    code, out, _ = run(capsys, "fixtures")
    assert code == EXIT_OK and "round trip True" in out


def test_scalars_file(capsys, tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"p1": "1/2", "p2": 7, "p3": -1}))
    code, data = run_json(capsys, "build-qp", "--fixture", "hexagon3p", "--scalars", str(path))
    assert code == EXIT_OK and ["-1/7", "alpha.delta.eps"] in data["terms"]


class TestExitCodes:
    def test_unknown_fixture_is_a_usage_error(self, capsys):
        code, _out, err = run(capsys, "build-qp", "--fixture", "nope")
        assert code == EXIT_USAGE and "unknown fixture" in err

    def test_missing_source_is_a_usage_error(self, capsys):
        assert run(capsys, "build-qp")[0] == EXIT_USAGE

    def test_module_error_fails(self, capsys):
        code, _out, err = run(capsys, "mutate", "--fixture", "hexagon3p", "--at", "nowhere")
        assert code == EXIT_FAILED and err.startswith("error:")

    def test_failed_certificate_fails(self, capsys):
        code, _out, _ = run(capsys, "pop-cert", "--fixture", "hexagon3p", "--trunc", "10")
        assert code == EXIT_FAILED
