# ruff: noqa
from .loop import Loop
from .globs import get_running_loop, set_running_loop
from .task import Task
from .utils import gather, map_jobs, run
from .ambient import (
    AmbientManifold,
    ComplexProjectivePlane,
    ManifoldName,
    Perturbation,
    SphereProduct,
    StructurePath,
    build_manifold,
    polar_compatible_J,
)
from .domain import SphereGrid, build_grid
from .mapspace import (
    SurfaceMap,
    VariationField,
    form_eval,
    form_gram,
    line_map,
    perturbed_line_map,
    random_variation,
    sphere_section_map,
)
from .holomorphy import SolveOptions, dbar, gauss_newton_solve, solve, vertical_differential
from .moduli import build_frame, continue_path, invariant_integral, quotient_compatible_J
from .exceptions import CurveLabError
