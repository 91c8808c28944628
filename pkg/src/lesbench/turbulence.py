"""WALE subgrid-scale eddy viscosity."""

from __future__ import annotations

import numpy as np

from . import kernels as K
from .mesh import flat_view, strides_of

C_W = 0.46
DENOM_FLOOR = 1.0e-30


def wale_viscosity(g: np.ndarray, delta: float, c_w: float = C_W) -> float:
    """Eddy viscosity from one velocity-gradient tensor.

    Uses the traceless symmetric part of the squared gradient, so pure shear
    (g.g = 0) and quiescent states return exactly zero; a floored
    denominator keeps near-zero gradients from dividing 0 by 0.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (3, 3):
        raise ValueError("velocity gradient must be a 3x3 tensor")
    if not delta > 0.0:
        raise ValueError("filter width must be positive")
    sbar = 0.5 * (g + g.T)
    g2 = g @ g
    sd = 0.5 * (g2 + g2.T) - np.eye(3) * (np.trace(g2) / 3.0)
    sdsd = float(np.sum(sd * sd))
    ss = float(np.sum(sbar * sbar))
    denom = ss ** 2.5 + sdsd ** 1.25
    if denom < DENOM_FLOOR:
        return 0.0
    return (c_w * delta) ** 2 * sdsd ** 1.5 / denom


def filter_width(spacing) -> float:
    """Cube root of the cell volume; equals the spacing on isotropic grids."""
    dx, dy, dz = spacing
    return float((dx * dy * dz) ** (1.0 / 3.0))


def eddy_viscosity_field(fields, spacing):
    """Fill ``fields.nut`` on the interior from current velocity ghosts.

    Gradients are assembled at cell centres with CD2 regardless of the
    convection scheme.  Ghost layers of nut are the caller's to refresh.
    """
    g = fields.ghost_width
    strides = strides_of(fields.u)
    nx, nxny = strides[1], strides[2]
    bounds = K.interior_bounds(fields.shape, g)
    delta = filter_width(spacing)
    K.k_wale(flat_view(fields.u), flat_view(fields.v), flat_view(fields.w),
             flat_view(fields.nut), strides[0], strides[1], strides[2],
             1.0 / spacing[0], 1.0 / spacing[1], 1.0 / spacing[2],
             (C_W * delta) ** 2, nx, nxny, bounds)
