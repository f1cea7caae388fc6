import numpy as np
import pytest

from cutopt.boundary import BoundarySpec, Load, Segment
from cutopt.levelset import InitialDesign, init_levelset
from cutopt.mesh import DesignDomain, build_background_mesh, refine_uniform

# criterion number -> (title, passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record():
    def _record(num: int, title: str, passed: bool, detail: str = ""):
        ACCEPTANCE[num] = (title, bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {title}  {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {num:2d}. {title}  {detail}")


def make_refined(width=1.0, height=1.0, h=0.25, kind="quad", k=1, void=None):
    mesh = build_background_mesh(DesignDomain(width, height, void), h, kind)
    return refine_uniform(mesh, k)


def levelset_from(refined, f=None, holes=()):
    return init_levelset(InitialDesign(holes=[list(h) for h in holes], custom=f), refined)


def clamped_square_spec(load=(0.0, -1.0)):
    """Unit square clamped on the left, traction on part of the top edge."""
    return BoundarySpec(dirichlet=[Segment((0.0, 0.0), (0.0, 1.0))],
                        loads=[Load(Segment((0.0, 1.0), (0.5, 1.0)), load)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
