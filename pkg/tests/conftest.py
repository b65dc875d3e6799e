import numpy as np
import pytest

from curvelab.ambient import ComplexProjectivePlane, SphereProduct
from curvelab.domain import SphereGrid, build_grid
from curvelab.mapspace import SurfaceMap, line_map, sphere_section_map


@pytest.fixture(scope="session")
def grid() -> SphereGrid:
    return build_grid(8, 16)


@pytest.fixture(scope="session")
def fine_grid() -> SphereGrid:
    return build_grid(16, 32)


@pytest.fixture(scope="session")
def cp2() -> ComplexProjectivePlane:
    return ComplexProjectivePlane()


@pytest.fixture(scope="session")
def s2xs2() -> SphereProduct:
    return SphereProduct(0.0)


@pytest.fixture(scope="session")
def line(cp2: ComplexProjectivePlane, grid: SphereGrid) -> SurfaceMap:
    return line_map(cp2, grid)


@pytest.fixture(scope="session")
def tilted_line(cp2: ComplexProjectivePlane, grid: SphereGrid) -> SurfaceMap:
    return line_map(cp2, grid, normal=(0.3 + 0.1j, -0.2, 1.0))


@pytest.fixture(scope="session")
def sphere(s2xs2: SphereProduct, grid: SphereGrid) -> SurfaceMap:
    return sphere_section_map(s2xs2, grid, 0.4 - 0.2j)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fine_line(cp2: ComplexProjectivePlane, fine_grid: SphereGrid) -> SurfaceMap:
    return line_map(cp2, fine_grid, normal=(0.3 + 0.1j, -0.2, 1.0))
