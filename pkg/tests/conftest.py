import numpy as np
import pytest

from lesbench.mesh import GlobalGrid, StaggeredField, build_decomposition
from lesbench.stepper import coords_1d


def single_worker_plan(dims, spacing, ghost, kinds=None):
    return build_decomposition(GlobalGrid(dims, spacing), (1, 1, 1), ghost,
                               kinds)


def analytic_fields(dims, spacing, ghost, fn_u=None, fn_v=None, fn_w=None,
                    two_phase=False):
    """Fields sampled from analytic functions over the padded arrays.

    Ghost entries take the analytic values too, which doubles as an exact
    periodic (or smooth-extension) halo fill for operator tests.
    """
    plan = single_worker_plan(dims, spacing, ghost)
    sub = plan.subdomains[0]
    fields = StaggeredField(sub.local_dims, ghost, two_phase)
    grid = plan.grid
    shape = fields.shape
    for comp, fn in enumerate((fn_u, fn_v, fn_w)):
        if fn is None:
            continue
        lines = [coords_1d(grid, sub, a, a == comp, shape[a], ghost)
                 for a in range(3)]
        x, y, z = np.meshgrid(*lines, indexing="ij")
        getattr(fields, ("u", "v", "w")[comp])[...] = fn(x, y, z)
    return plan, sub, fields


def center_coords(plan, sub, shape, ghost):
    lines = [coords_1d(plan.grid, sub, a, False, shape[a], ghost)
             for a in range(3)]
    return np.meshgrid(*lines, indexing="ij")


def face_coords(plan, sub, shape, ghost, comp):
    lines = [coords_1d(plan.grid, sub, a, a == comp, shape[a], ghost)
             for a in range(3)]
    return np.meshgrid(*lines, indexing="ij")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
