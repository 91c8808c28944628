"""Spatial discretisation: central differences, WENO5, diffusion.

The scalar functions here are the reference definitions of every stencil;
the numba kernels in :mod:`lesbench.kernels` inline the same formulas for
field sweeps and are cross-checked against these in the test suite.

``cd4_variant`` selects the coefficient set for the 4th-order first
derivative: ``standard`` is (-1, 8, -8, 1)/(12 dx), exact through degree 4;
``legacy`` is the (-1, 9, -9, 1)/(16 dx) set kept for fidelity experiments
with an existing code base (it evaluates linear slopes to 7/8 and is not a
consistent derivative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .errors import SchemeStencilOverflow
from .mesh import SCHEME_GHOSTS, flat_view, strides_of

SCHEMES = ("cd2", "cd4", "weno5")

CD4_COEFFS = {
    "standard": (-1.0, 8.0, 12.0),
    "legacy": (-1.0, 9.0, 16.0),
}


@dataclass(frozen=True)
class Stencil5:
    """Five consecutive samples f_{i-2}..f_{i+2} along one axis."""

    values: tuple[float, float, float, float, float]
    dx: float = 1.0

    def __post_init__(self):
        if len(self.values) != 5:
            raise ValueError("Stencil5 needs exactly five samples")
        if not self.dx > 0.0:
            raise ValueError("spacing must be positive")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("stencil samples must be finite")


@dataclass(frozen=True)
class WenoParams:
    """Optimal weights, regularisation and exponent of the WENO5 blend."""

    c: tuple[float, float, float] = (0.1, 0.3, 0.6)
    eps: float = 1.0e-6
    m: int = 2


def cd2_derivative(f_m1: float, f_p1: float, dx: float) -> float:
    """Second-order centred first derivative from the two adjacent samples."""
    return (f_p1 - f_m1) / (2.0 * dx)


def cd4_derivative(s: Stencil5, variant: str = "standard") -> float:
    """Fourth-order centred first derivative (see module docstring)."""
    a2, a1, den = CD4_COEFFS[variant]
    fm2, fm1, _, fp1, fp2 = s.values
    return (a2 * fp2 + a1 * fp1 - a1 * fm1 - a2 * fm2) / (den * s.dx)


def midpoint_interp4(f_m1: float, f_0: float, f_p1: float, f_p2: float) -> float:
    """Fourth-order midpoint value between f_0 and f_p1 (exact for cubics)."""
    return (9.0 * (f_0 + f_p1) - (f_m1 + f_p2)) / 16.0


def weno_smoothness(s: Stencil5) -> tuple[float, float, float]:
    """Smoothness indicators of the three candidate stencils.

    Candidates are ordered (upwind, downwind, central) to match the optimal
    weights (1/10, 3/10, 6/10): beta_1 measures f_{i-2}..f_i, beta_2
    f_i..f_{i+2}, beta_3 f_{i-1}..f_{i+1}.  The central indicator uses the
    (f_{i-1} - f_{i+1})^2 form so constants measure as perfectly smooth on
    all three candidates.
    """
    fm2, fm1, f0, fp1, fp2 = s.values
    b1 = K.K13_12 * (fm2 - 2.0 * fm1 + f0) ** 2 \
        + 0.25 * (fm2 - 4.0 * fm1 + 3.0 * f0) ** 2
    b2 = K.K13_12 * (f0 - 2.0 * fp1 + fp2) ** 2 \
        + 0.25 * (3.0 * f0 - 4.0 * fp1 + fp2) ** 2
    b3 = K.K13_12 * (fm1 - 2.0 * f0 + fp1) ** 2 \
        + 0.25 * (fm1 - fp1) ** 2
    return b1, b2, b3


def weno_weights(betas, params: WenoParams = WenoParams()):
    """Normalised nonlinear weights; convex for any finite non-negative betas."""
    alphas = [c / (b + params.eps) ** params.m for c, b in zip(params.c, betas)]
    total = sum(alphas)
    return tuple(a / total for a in alphas)


def weno_combine(omegas, s: Stencil5) -> float:
    """Blend the three candidate face values at i+1/2 with weights omegas.

    Weight 1 multiplies the fully upwind candidate, weight 2 the downwind
    one, weight 3 the central one, matching :func:`weno_smoothness`.
    """
    w1, w2, w3 = omegas
    fm2, fm1, f0, fp1, fp2 = s.values
    return (w1 * (2.0 * fm2 - 7.0 * fm1 + 11.0 * f0)
            + w2 * (2.0 * f0 + 5.0 * fp1 - fp2)
            + w3 * (-fm1 + 5.0 * f0 + 2.0 * fp1)) / 6.0


def weno5_face_value(samples, upwind_sign: float,
                     params: WenoParams = WenoParams()) -> float:
    """Upwinded interface value at i+1/2 from samples f_{i-2}..f_{i+3}.

    Positive advection keeps the left-biased reconstruction; negative takes
    the exact mirror image.
    """
    if len(samples) != 6:
        raise ValueError("interface reconstruction needs six samples")
    if upwind_sign >= 0.0:
        sten = Stencil5(tuple(samples[0:5]))
    else:
        sten = Stencil5(tuple(samples[5:0:-1]))
    return weno_combine(weno_weights(weno_smoothness(sten), params), sten)


def weno5_derivative(samples, upwind_sign: float, dx: float,
                     params: WenoParams = WenoParams()) -> float:
    """Upwinded derivative at i from samples f_{i-3}..f_{i+3}.

    Formed as (F_{i+1/2} - F_{i-1/2}) / dx from the two sign-matched
    interface reconstructions.
    """
    if len(samples) != 7:
        raise ValueError("derivative stencil needs seven samples")
    f_hi = weno5_face_value(samples[1:7], upwind_sign, params)
    f_lo = weno5_face_value(samples[0:6], upwind_sign, params)
    return (f_hi - f_lo) / dx


def require_ghosts(scheme: str, ghost_width: int):
    need = SCHEME_GHOSTS[scheme]
    if ghost_width < need:
        raise SchemeStencilOverflow(
            f"scheme {scheme} needs ghost width {need}, decomposition has "
            f"{ghost_width}")


# ---------------------------------------------------------------------------
# field-level operators
# ---------------------------------------------------------------------------

class SchemeWorkspace:
    """Preallocated scratch arrays for the momentum operators."""

    def __init__(self, shape):
        self.adv = np.zeros(shape, dtype=np.float64, order="F")
        self.der = np.zeros(shape, dtype=np.float64, order="F")
        self.fl = np.zeros(shape, dtype=np.float64, order="F")
        self.fr = np.zeros(shape, dtype=np.float64, order="F")
        self.nuf = np.zeros(shape, dtype=np.float64, order="F")
        self.nu_tot = np.zeros(shape, dtype=np.float64, order="F")


def _interp_half(dst, src, axis_shift: int, sign: str, strides, nx, nxny,
                 bounds, order4: bool):
    """Sample src half a cell along ``axis_shift``; ``sign`` is the offset
    of the bracketing pair: '+' pairs (0, +1), '-' pairs (-1, 0)."""
    s = strides[axis_shift]
    base = 0 if sign == "+" else -s
    if order4:
        K.k_interp4(src, dst, s, base, nx, nxny, bounds)
    else:
        K.k_interp2(src, dst, s, base, nx, nxny, bounds)


def advecting_velocity(fields, comp: int, axis: int, ws: SchemeWorkspace,
                       order4: bool, out):
    """Velocity component ``axis`` interpolated to component ``comp``'s faces.

    Staggered placement needs two half-cell shifts: +1/2 along ``comp`` (the
    target lives on that face) and -1/2 along ``axis`` (the source lives on
    its own face).  Fourth-order midpoints for cd4/weno5 runs, two-point
    averages for cd2.
    """
    arrs = (fields.u, fields.v, fields.w)
    src = flat_view(arrs[axis])
    strides = strides_of(fields.u)
    nx, nxny = strides[1], strides[2]
    g = fields.ghost_width
    reach = 2 if order4 else 1
    bounds = K.interior_bounds(fields.shape, g, axis=comp, lo_extra=0,
                               hi_extra=0)
    # widen the intermediate pass so the second shift has fresh data
    mid_bounds = K.interior_bounds(fields.shape, g, axis=comp,
                                   lo_extra=reach, hi_extra=reach)
    tmp = flat_view(ws.der)
    _interp_half(tmp, src, axis, "-", strides, nx, nxny, mid_bounds, order4)
    _interp_half(flat_view(out), tmp, comp, "+", strides, nx, nxny, bounds,
                 order4)


def convective_term(fields, spacing, scheme: str, ws: SchemeWorkspace,
                    rhs_views, cd4_variant: str = "standard"):
    """Accumulate -u_j du_i/dx_j onto each momentum right-hand side.

    ``rhs_views`` are flat views of the three accumulator arrays, already
    zeroed or carrying other terms.  WENO upwinding is keyed per axis to the
    sign of the interpolated advecting component.
    """
    require_ghosts(scheme, fields.ghost_width)
    g = fields.ghost_width
    strides = strides_of(fields.u)
    nx, nxny = strides[1], strides[2]
    order4 = scheme != "cd2"
    vel = (fields.u, fields.v, fields.w)
    for comp in range(3):
        fcomp = flat_view(vel[comp])
        bounds = K.interior_bounds(fields.shape, g)
        for axis in range(3):
            s = strides[axis]
            invd = 1.0 / spacing[axis]
            if axis == comp:
                adv_flat = fcomp
            else:
                advecting_velocity(fields, comp, axis, ws, order4, ws.adv)
                adv_flat = flat_view(ws.adv)
            if scheme == "weno5":
                face_bounds = K.interior_bounds(fields.shape, g, axis=axis,
                                                lo_extra=1, hi_extra=0)
                K.k_weno_faces_both(fcomp, flat_view(ws.fl), flat_view(ws.fr),
                                    s, nx, nxny, face_bounds)
                K.k_conv_acc_weno(flat_view(ws.fl), flat_view(ws.fr),
                                  adv_flat, rhs_views[comp], s, invd,
                                  nx, nxny, bounds)
            else:
                if scheme == "cd2":
                    a2, a1, den = 0.0, 1.0, 2.0
                else:
                    a2, a1, den = CD4_COEFFS[cd4_variant]
                K.k_deriv_central(fcomp, flat_view(ws.der), s, a2, a1,
                                  1.0 / (den * spacing[axis]), nx, nxny,
                                  bounds)
                K.k_acc_minus_product(rhs_views[comp], adv_flat,
                                      flat_view(ws.der), nx, nxny, bounds)


def diffusive_term(fields, spacing, ws: SchemeWorkspace, rhs_views):
    """Accumulate (nu + nu_t) * 4th-order Laplacian of each component.

    The total viscosity is sampled at each component's face by averaging the
    two adjacent cell values; the time step factor is applied once by the
    integrator, not here.
    """
    if fields.ghost_width < 2:
        raise SchemeStencilOverflow(
            "the 4th-order diffusive stencil reaches two cells; ghost "
            f"width {fields.ghost_width} is too small")
    g = fields.ghost_width
    strides = strides_of(fields.u)
    nx, nxny = strides[1], strides[2]
    np.add(fields.nu, fields.nut, out=ws.nu_tot)
    nu_flat = flat_view(ws.nu_tot)
    vel = (fields.u, fields.v, fields.w)
    bounds = K.interior_bounds(fields.shape, g)
    for comp in range(3):
        K.k_face_average(nu_flat, flat_view(ws.nuf), strides[comp],
                         nx, nxny, bounds)
        lap = flat_view(ws.der)
        lap[:] = 0.0
        for axis in range(3):
            inv12d2 = 1.0 / (12.0 * spacing[axis] ** 2)
            K.k_lap4_acc(flat_view(vel[comp]), lap, strides[axis], inv12d2,
                         nx, nxny, bounds)
        K.k_acc_plus_product(rhs_views[comp], flat_view(ws.nuf), lap,
                             nx, nxny, bounds)
