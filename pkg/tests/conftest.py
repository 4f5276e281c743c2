import numpy as np
import pytest

from maxwell_ddm.fem import EdgeSpace, MaterialMap
from maxwell_ddm.mesh import GeometrySpec, build_rect_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def block_space():
    mesh = build_rect_mesh(8, 8, GeometrySpec.block())
    return mesh, EdgeSpace(mesh), MaterialMap.from_mesh(mesh)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
