import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthcity import geometry as geo
from synthcity.citygen import STYLE_IDS, load_style
from synthcity.errors import EmptyDerivation, GrammarError, Overflow, RecursionLimitExceeded
from synthcity.grammar import derive, parse_grammar
from synthcity.mesh import BUILDING_LABELS, Label

from conftest import rect

EXTRUDE = parse_grammar("Lot --> extrude(10)")


def test_forced_extrusion():
    m = derive(rect(0, 0, 20, 20), EXTRUDE, 0)
    assert m.projected_area([Label.ROOF]) == pytest.approx(400.0)
    assert m.triangles[:, :, 2].max() == pytest.approx(10.0)
    assert set(np.unique(m.label)) <= {int(x) for x in BUILDING_LABELS}
    assert m.volume() == pytest.approx(4000.0, rel=1e-12)


def test_determinism_triangle_for_triangle():
    g = load_style("h").grammar
    lot = rect(0, 0, 30, 22)
    a, b = derive(lot, g, 99), derive(lot, g, 99)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.label, b.label) and np.array_equal(a.material, b.material)
    assert a.materials == b.materials


def test_seed_changes_output():
    g = load_style("h").grammar
    lot = rect(0, 0, 30, 22)
    digests = {derive(lot, g, s).digest() for s in range(10)}
    assert len(digests) > 5


def test_branch_frequencies():
    g = parse_grammar("Lot --> 30%: A 70%: B\nterminal A, B")
    lot = rect(0, 0, 10, 10)
    n, hits = 10_000, 0
    for s in range(n):
        trace = []
        derive(lot, g, s, trace=trace)
        hits += trace[0][1] == 0
    assert abs(hits / n - 0.3) <= 0.02


@settings(max_examples=60)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=3, max_size=12),
       st.floats(0.5, 80))
def test_extrusion_volume(points, h):
    poly = geo.convex_hull(np.array(points))
    if len(poly) < 3 or geo.polygon_area(poly) < 1.0:
        return
    m = derive(poly, parse_grammar(f"Lot --> extrude({h!r})"), 1)
    A = geo.polygon_area(poly)
    assert m.volume() == pytest.approx(A * h, rel=1e-6)


def test_roof_volumes():
    lot = rect(0, 0, 20, 10)
    gable = derive(lot, parse_grammar("Lot --> extrude(10) roof(gable, 45) B"), 0)
    assert gable.volume() == pytest.approx(2000 + 0.5 * 10 * 5 * 20)
    hip = derive(lot, parse_grammar("Lot --> extrude(10) roof(hip, 45) B"), 0)
    # hip roof over an A x B rectangle with rise r: B*r*(3A - B)/6
    assert hip.volume() == pytest.approx(2000 + 10 * 5 * (60 - 10) / 6)
    assert set(np.unique(hip.label)) == {int(Label.BUILDING), int(Label.ROOF)}


def test_split_pieces_conserve_volume():
    g = parse_grammar("Lot --> split(x){ 5: A | ~1: B }\nA --> extrude(3)\nB --> extrude(6)")
    assert derive(rect(0, 0, 20, 10), g, 0).volume() == pytest.approx(5 * 10 * 3 + 15 * 10 * 6)


def test_comp_faces_and_nil():
    g = parse_grammar("Lot --> extrude(8) comp(faces){ top: T | side: NIL }\nterminal T")
    m = derive(rect(0, 0, 10, 10), g, 0)
    assert np.allclose(m.triangles[:, :, 2], 8.0)
    assert np.all(m.label == Label.ROOF)


def test_setback_collapse_drops_shape():
    m = derive(rect(0, 0, 4, 4), parse_grammar("Lot --> setback(3) extrude(5)"), 0)
    assert len(m) == 0


def test_recursion_limit():
    with pytest.raises(RecursionLimitExceeded):
        derive(rect(0, 0, 5, 5), parse_grammar("Lot --> A\nA --> B\nB --> A"), 0)


def test_missing_start_symbol():
    with pytest.raises(EmptyDerivation):
        derive(rect(0, 0, 5, 5), parse_grammar("Mass --> extrude(3)"), 0)


def test_split_overflow_propagates():
    with pytest.raises(Overflow):
        derive(rect(0, 0, 10, 5), parse_grammar("Lot --> split(x){ 30: A }"), 0)


def test_unknown_texture():
    with pytest.raises(GrammarError):
        derive(rect(0, 0, 10, 5), parse_grammar("Lot --> extrude(3) texture(marble)"), 0, palette={})


def test_no_degenerate_triangles_and_single_class():
    for sid in STYLE_IDS:
        style = load_style(sid)
        for seed in range(3):
            m = derive(rect(0, 0, 35, 24), style.grammar, seed, style.palette)
            if len(m) == 0:
                continue
            e = np.cross(m.triangles[:, 1] - m.triangles[:, 0], m.triangles[:, 2] - m.triangles[:, 0])
            assert (0.5 * np.linalg.norm(e, axis=1)).min() > 1e-9
            assert len(m.label) == len(m)
            assert set(np.unique(m.label)) <= {0, 1, 2, 3, 4}
