import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def rect(x0, y0, w, h):
    return np.array([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]], dtype=float)


@pytest.fixture(scope="session")
def small_scene():
    from synthcity.citygen import WorldConfig, build_world

    return build_world(WorldConfig(extent_m=(400.0, 400.0), style="b", seed=11))


def box_mesh(boxes, ground=None):
    """LabeledMesh of closed axis-aligned prisms ``(x0, y0, x1, y1, h)``.

    Roof tops are labelled Roof, walls Building, each box its own instance
    (1-based). ``ground`` (x0, y0, x1, y1) adds a Ground quad at z = 0.
    """
    from synthcity.mesh import Label, Material, MeshBuilder

    wall, roof, soil = Material("wall", (0.7, 0.7, 0.7)), Material("roof", (0.6, 0.3, 0.2)), \
        Material("ground", (0.3, 0.5, 0.3))
    mb = MeshBuilder()
    if ground is not None:
        x0, y0, x1, y1 = ground
        q = np.array([[x0, y0, 0], [x1, y0, 0], [x1, y1, 0], [x0, y1, 0]], float)
        mb.add([q[[0, 1, 2]], q[[0, 2, 3]]], Label.GROUND, soil)
    for k, (x0, y0, x1, y1, h) in enumerate(boxes, start=1):
        b = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)
        top = np.c_[b, np.full(4, h)]
        mb.add([top[[0, 1, 2]], top[[0, 2, 3]]], Label.ROOF, roof, k)
        for i in range(4):
            p, q = b[i], b[(i + 1) % 4]
            quad = np.array([[*p, 0], [*q, 0], [*q, h], [*p, h]], float)
            mb.add([quad[[0, 1, 2]], quad[[0, 2, 3]]], Label.BUILDING, wall, k)
    return mb.build()


def center_count(boxes, cam):
    """Brute-force count of pixel centers covered by the union of box footprints."""
    xmin, ymin, _, _ = cam.bounds
    c = (np.arange(cam.image_px) + 0.5) * cam.gsd_m
    X, Y = np.meshgrid(xmin + c, ymin + c)
    hit = np.zeros(X.shape, bool)
    for x0, y0, x1, y1, _ in boxes:
        hit |= (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
    return int(hit.sum())


# acceptance reporting: one PASS/FAIL line per criterion at the end of the run

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        detail = str(rep.longrepr).strip().splitlines()[-1][:160]
    _ACCEPTANCE.append((mark.args[0], rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
