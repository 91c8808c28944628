"""Level-set transport, reinitialisation and two-phase material mapping.

The signed-distance function phi is advected with WENO5 derivatives inside
a three-stage TVD Runge-Kutta step (convex stage combinations 1; 3/4, 1/4;
1/3, 2/3), upwinded per axis by the cell-centred velocity sign.  Six face
reconstructions per stage, eighteen per transport step.

Reinitialisation relaxes ``d_tau = s(d) (1 - |grad d|)`` with the same RK
scheme, Godunov-upwinded WENO gradients keyed to sign(d), and a smoothed
sign function.  Convergence is judged by the max-norm of ``| |grad d| - 1 |``
over a narrow band around the interface (the full domain when no interface
cells exist): outside that band a short pseudo-time horizon cannot repair a
stretched profile and the Heaviside mapping never looks there anyway.  An
iteration that strictly increases the residual is rejected and the previous
field kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .exchange import allreduce
from .mesh import flat_view, strides_of


@dataclass(frozen=True)
class FluidPair:
    """Densities and dynamic viscosities of the heavy and light phases."""

    rho_w: float = 1000.0
    rho_a: float = 1.25
    mu_w: float = 1.0e-3
    mu_a: float = 2.25e-5

    def __post_init__(self):
        if min(self.rho_w, self.rho_a, self.mu_w, self.mu_a) <= 0.0:
            raise ValueError("material properties must be positive")
        if not self.rho_w > self.rho_a:
            raise ValueError("heavy phase density must exceed the light one")


@dataclass(frozen=True)
class ReinitConfig:
    """Pseudo-time relaxation settings for the signed-distance repair."""

    cfl: float = 0.10
    max_iterations: int = 15
    residual_tol: float = 5.0e-3
    band_factor: float = 3.0  # residual band half-width in units of max(dx)

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError("reinit CFL must lie in (0, 1]")
        if self.residual_tol <= 0.0:
            raise ValueError("residual tolerance must be positive")


def interface_half_thickness(spacing) -> float:
    """Heaviside smoothing band: 1.5 grid spacings."""
    return 1.5 * max(spacing)


def heaviside(phi, eps: float):
    """Smoothed step: 0 below -eps, 1 above +eps, sine-eased between."""
    if eps <= 0.0:
        raise ValueError("interface half-thickness must be positive")
    phi_arr = np.asarray(phi, dtype=np.float64)
    inner = 0.5 * (1.0 + phi_arr / eps + np.sin(np.pi * phi_arr / eps) / np.pi)
    out = np.where(phi_arr >= eps, 1.0, np.where(phi_arr <= -eps, 0.0, inner))
    if np.isscalar(phi) or phi_arr.ndim == 0:
        return float(out)
    return out


def material_fields(phi, pair: FluidPair, eps: float):
    """Density and dynamic viscosity from the level-set function."""
    h = heaviside(phi, eps)
    rho = pair.rho_a + (pair.rho_w - pair.rho_a) * h
    mu = pair.mu_a + (pair.mu_w - pair.mu_a) * h
    return rho, mu


def signed_function(d0, grad_mag, eps_r: float):
    """Smoothed sign of d0; the |grad| eps_r term regularises the jump."""
    if eps_r <= 0.0:
        raise ValueError("smoothing length must be positive")
    d0_arr = np.asarray(d0, dtype=np.float64)
    denom = np.sqrt(d0_arr ** 2 + (np.asarray(grad_mag) * eps_r) ** 2)
    out = np.divide(d0_arr, denom, out=np.zeros_like(d0_arr),
                    where=denom > 0.0)
    if np.isscalar(d0) or d0_arr.ndim == 0:
        return float(out)
    return out


class LsmWorkspace:
    def __init__(self, shape):
        f = dict(dtype=np.float64, order="F")
        self.phi0 = np.zeros(shape, **f)
        self.stage = np.zeros(shape, **f)
        self.rhs = np.zeros(shape, **f)
        self.fl = np.zeros(shape, **f)
        self.fr = np.zeros(shape, **f)
        self.ucx = np.zeros(shape, **f)
        self.ucy = np.zeros(shape, **f)
        self.ucz = np.zeros(shape, **f)
        self.gmag = np.zeros(shape, **f)
        self.dm = [np.zeros(shape, **f) for _ in range(3)]
        self.dp = [np.zeros(shape, **f) for _ in range(3)]
        self.prev = np.zeros(shape, **f)
        self.dref = np.zeros(shape, **f)


def _advection_rhs(phi, uc, spacing, g, ws):
    """rhs = -sum_a u_a dphi/dx_a, WENO5 upwinded by sign(u_a) per axis."""
    strides = strides_of(phi)
    nx, nxny = strides[1], strides[2]
    bounds = K.interior_bounds(phi.shape, g)
    rhs = flat_view(ws.rhs)
    rhs[:] = 0.0
    pf = flat_view(phi)
    for axis in range(3):
        face_bounds = K.interior_bounds(phi.shape, g, axis=axis, lo_extra=1)
        K.k_weno_faces_both(pf, flat_view(ws.fl), flat_view(ws.fr),
                            strides[axis], nx, nxny, face_bounds)
        K.k_conv_acc_weno(flat_view(ws.fl), flat_view(ws.fr),
                          flat_view(uc[axis]), rhs, strides[axis],
                          1.0 / spacing[axis], nx, nxny, bounds)
    return ws.rhs


def _stage_combo(phi, phi0, r, frac, dt, ws):
    # phi <- phi0 + frac * ((phi - phi0) + dt * r): algebraically the convex
    # TVD stage, written as an increment so a zero rhs leaves phi bit-exact
    phi -= phi0
    np.multiply(r, dt, out=ws.stage)
    phi += ws.stage
    phi *= frac
    phi += phi0


def _rk3(phi, rhs_of, dt, ws, refresh, first_rhs=None):
    """TVD-RK3 driver with convex stages (1; 3/4,1/4; 1/3,2/3).

    ``rhs_of(arr)`` fills and returns ws.rhs; a precomputed stage-one rhs
    can be passed to avoid evaluating it twice.
    """
    np.copyto(ws.phi0, phi)
    r = first_rhs if first_rhs is not None else rhs_of(phi)
    _stage_combo(phi, ws.phi0, r, 1.0, dt, ws)
    refresh(phi)
    r = rhs_of(phi)
    _stage_combo(phi, ws.phi0, r, 0.25, dt, ws)
    refresh(phi)
    r = rhs_of(phi)
    _stage_combo(phi, ws.phi0, r, 2.0 / 3.0, dt, ws)
    refresh(phi)


def lsm_advect(fields, spacing, dt, ws: LsmWorkspace, refresh):
    """Transport phi by the current velocity field over one time step.

    ``refresh`` must reapply physical boundary values and exchange halos of
    the array it is handed; it runs after every RK stage.
    """
    g = fields.ghost_width
    strides = strides_of(fields.phi)
    nx, nxny = strides[1], strides[2]
    uc = (ws.ucx, ws.ucy, ws.ucz)
    b = K.interior_bounds(fields.shape, g)
    for axis, vel in enumerate((fields.u, fields.v, fields.w)):
        K.k_interp2(flat_view(vel), flat_view(uc[axis]), strides[axis],
                    -strides[axis], nx, nxny, b)

    def rhs_of(arr):
        return _advection_rhs(arr, uc, spacing, g, ws)

    _rk3(fields.phi, rhs_of, dt, ws, refresh)


def _godunov_gradient(d, spacing, g, ws):
    strides = strides_of(d)
    nx, nxny = strides[1], strides[2]
    df = flat_view(d)
    binterior = K.interior_bounds(d.shape, g)
    for axis in range(3):
        face_bounds = K.interior_bounds(d.shape, g, axis=axis, lo_extra=1)
        K.k_weno_faces_both(df, flat_view(ws.fl), flat_view(ws.fr),
                            strides[axis], nx, nxny, face_bounds)
        K.k_oneside_derivs(flat_view(ws.fl), flat_view(ws.fr),
                           flat_view(ws.dm[axis]), flat_view(ws.dp[axis]),
                           strides[axis], 1.0 / spacing[axis], nx, nxny,
                           binterior)
    K.k_godunov_norm(flat_view(ws.dm[0]), flat_view(ws.dp[0]),
                     flat_view(ws.dm[1]), flat_view(ws.dp[1]),
                     flat_view(ws.dm[2]), flat_view(ws.dp[2]),
                     df, flat_view(ws.gmag), nx, nxny, binterior)
    return ws.gmag


def _band_residual(transport, dref, gmag, band, g, margins=None,
                   profiler=None):
    """Max | |grad d| - 1 | over cells with |dref| <= band (collective).

    Band membership comes from ``dref`` (the field at the start of the
    reinitialisation) so the monitored set is fixed while the relaxation
    runs; with no interface cells anywhere the full-domain max is used.
    ``margins`` shrinks the monitored box per face: cells beside a
    prescribed-profile boundary (wave inflow) sit against ghost data the
    relaxation cannot reshape and would pin the residual forever.
    """
    strides = strides_of(dref)
    nx, nxny = strides[1], strides[2]
    b = list(K.interior_bounds(dref.shape, g))
    if margins is not None:
        for axis in range(3):
            b[2 * axis] += margins[2 * axis]
            b[2 * axis + 1] -= margins[2 * axis + 1]
    mb, count, mall = K.k_band_residual(flat_view(gmag), flat_view(dref),
                                        band, nx, nxny, tuple(b))
    total = allreduce(transport, float(count), "sum", profiler)
    gmb = allreduce(transport, mb, "max", profiler)
    gma = allreduce(transport, mall, "max", profiler)
    return gmb if total > 0.0 else gma


def reinitialize(fields, spacing, cfg: ReinitConfig, ws: LsmWorkspace,
                 refresh, transport, residual_margins=None, profiler=None):
    """Drive |grad phi| toward 1 without moving the zero level.

    Runs full RK3 pseudo-steps of the relaxation equation, at most
    ``cfg.max_iterations`` of them, stopping early once the banded residual
    reaches ``cfg.residual_tol`` or an iteration makes it strictly worse
    (that iteration is undone).  Returns (pseudo-steps run, residual).
    """
    d = fields.phi
    g = fields.ghost_width
    tau = cfg.cfl * max(spacing)
    eps_r = max(spacing)
    band = cfg.band_factor * max(spacing)
    strides = strides_of(d)
    nx, nxny = strides[1], strides[2]
    binterior = K.interior_bounds(d.shape, g)

    def rhs_from(arr, gmag):
        K.k_reinit_rhs(flat_view(arr), flat_view(gmag), flat_view(ws.rhs),
                       eps_r, nx, nxny, binterior)
        return ws.rhs

    def rhs_of(arr):
        return rhs_from(arr, _godunov_gradient(arr, spacing, g, ws))

    np.copyto(ws.dref, d)
    steps = 0
    prev_res = np.inf
    while True:
        # the probe gradient doubles as the next step's stage-one gradient
        gmag = _godunov_gradient(d, spacing, g, ws)
        res = _band_residual(transport, ws.dref, gmag, band, g,
                             residual_margins, profiler)
        if steps > 0 and res <= cfg.residual_tol:
            break
        if steps > 0 and res > prev_res:
            np.copyto(d, ws.prev)
            res = prev_res
            break
        if steps >= cfg.max_iterations:
            break
        prev_res = res
        np.copyto(ws.prev, d)
        _rk3(d, rhs_of, tau, ws, refresh, first_rhs=rhs_from(d, gmag))
        steps += 1
    return steps, res
