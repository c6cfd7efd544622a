import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netagree.scenario import (
    ScenarioError,
    bundled_scenario_names,
    bundled_scenario_text,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)

from conftest import DENSE_EDGES, HETERO_KINDS

BUNDLED = bundled_scenario_names()
SMOKE = bundled_scenario_text("case_smoke")


def _codes(text):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    return [(d.field, d.code) for d in info.value.diagnostics]


def test_bundled_set():
    assert set(BUNDLED) == {"case_hetero", "case_negative", "case_linear", "case_smoke"}


@pytest.mark.parametrize("name", BUNDLED)
def test_round_trip_is_fixed_point(name):
    scn = parse_scenario(bundled_scenario_text(name))
    text = serialize_scenario(scn)
    again = parse_scenario(text)
    assert again == scn
    assert serialize_scenario(again) == text


def test_case_study_contents():
    scn = parse_scenario(bundled_scenario_text("case_hetero"))
    assert scn.vertices == 5 and scn.edges == DENSE_EDGES
    assert tuple(a.kind for a in scn.agents) == HETERO_KINDS
    assert len(scn.controllers) == 8 and all(dict(c.params)["gain"] == 2.0 for c in scn.controllers)
    assert scn.x0 == (0.23, -0.2, 1.0, -2.4, 0.0)
    assert scn.integration.dt == 1e-3 and scn.integration.t_end == 20.0
    net = scn.build_network()
    assert net.state_dim == 5
    np.testing.assert_array_equal(scn.initial_state(net), scn.x0)


def test_load_from_path(tmp_path):
    path = tmp_path / "s.scn"
    path.write_text(SMOKE, encoding="utf-8")
    assert load_scenario(path).name == "case_smoke"


@pytest.mark.parametrize(
    "text, expected",
    [
        ("", ("graph", "missing-section")),
        (SMOKE.replace("repeat = 2\n\n[initial]", "repeat = 3\n\n[initial]"), ("controller", "dimension")),
        (SMOKE.replace("[graph]", "[graph]\ncolour = red"), ("graph.colour", "unknown-key")),
        (SMOKE.replace("x = 1, -1", "x = nan, -1"), ("initial.x", "non-finite")),
        (SMOKE.replace("x = 1, -1", "x = 1, -1, 3"), ("initial.x", "dimension")),
        (SMOKE.replace("vertices = 2", "vertices = 2\nvertices = 2"), ("graph.vertices", "duplicate-key")),
        (SMOKE + "\n[bogus]\n", ("bogus", "unknown-section")),
        (SMOKE + "\n[graph]\nvertices = 2\n", ("graph", "duplicate-section")),
        (SMOKE.replace("[graph]", "[graph]\nnot a pair"), ("not a pair", "syntax")),
        (SMOKE + "\n[audit]\nid = compensation\n", ("audit.id", "duplicate-audit")),
        (SMOKE.replace("dt = 0.001", "dt = fast"), ("integration.dt", "bad-value")),
        (SMOKE.replace("kind = integrator\n", "kind = general\n"), ("agent.kind", "bad-value")),
        (SMOKE.replace("edges = 1 2, 2 1", "edges = 1 1, 2 1"), ("graph.edges", "bad-value")),
        (SMOKE.replace("[graph]\nvertices = 2\n", "[graph]\n"), ("graph.vertices", "missing-key")),
    ],
    ids=[
        "empty",
        "controllers",
        "unknown-key",
        "nan",
        "x0-length",
        "duplicate-key",
        "unknown-section",
        "duplicate-section",
        "syntax",
        "duplicate-audit",
        "bad-number",
        "general-kind",
        "self-loop",
        "missing-key",
    ],
)
def test_diagnostics(text, expected):
    codes = _codes(text)
    assert expected in codes
    # a single defect produces a single diagnostic, except the empty file
    assert len(codes) == 1 or text == ""


def test_diagnostic_carries_line_number():
    with pytest.raises(ScenarioError) as info:
        parse_scenario(SMOKE.replace("dt = 0.001", "dt = fast"))
    (d,) = info.value.diagnostics
    assert SMOKE.splitlines()[d.line - 1].startswith("dt")
    assert "integration.dt" in str(info.value)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=2),
    st.floats(1e-4, 1.0),
    st.integers(1, 50),
)
def test_numeric_round_trip(x0, gain, steps):
    text = SMOKE.replace("x = 1, -1", f"x = {x0[0]!r}, {x0[1]!r}")
    text = text.replace("gain = 1\n", f"gain = {gain!r}\n")
    text = text.replace("t_end = 8", f"t_end = {steps * 0.001!r}")
    try:
        scn = parse_scenario(text)
    except ScenarioError as exc:
        # only horizon-related checks may legitimately refuse these inputs
        assert all(d.field.startswith(("integration", "agreement")) for d in exc.diagnostics)
        return
    assert parse_scenario(serialize_scenario(scn)) == scn
