"""Benchmark cases: lid-driven cavity, Taylor-Green vortex, solitary wave.

Each builder resolves a :class:`SimConfig` into a fully concrete
:class:`ResolvedCase` (grid, boundary map, scheme, material data, inflow
callables) that the stepper and harness consume.  Initialisation uses
global coordinates so a field assembled from any decomposition is identical
to the single-worker one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownCase
from .exchange import allreduce, broadcast_array, gather_arrays
from .levelset import FluidPair, interface_half_thickness, material_fields
from .mesh import (GlobalGrid, INFLOW, LID, NO_SLIP, OUTFLOW, PERIODIC,
                   SCHEME_GHOSTS, SLIP, StaggeredField)
from .stepper import SimConfig, SimState, coords_1d

GRAVITY = 9.81


@dataclass(frozen=True)
class CavitySpec:
    """Closed cubic cavity, Re 400, unit lid sliding in +x at the top."""

    edge: float = 1.0
    reynolds: float = 400.0
    lid_speed: float = 1.0
    cfl: float = 0.8
    default_grid: tuple = (32, 32, 32)

    @property
    def nu(self) -> float:
        return self.lid_speed * self.edge / self.reynolds


@dataclass(frozen=True)
class TgvSpec:
    """Triply periodic Taylor-Green vortex; box edge 2*pi*L."""

    u0: float = 1.0
    length: float = 1.0
    reynolds: float = 1600.0
    cfl: float = 0.3
    default_grid: tuple = (32, 32, 32)

    @property
    def nu(self) -> float:
        return self.length * self.u0 / self.reynolds

    @property
    def extent(self) -> float:
        return 2.0 * math.pi * self.length


@dataclass(frozen=True)
class WaveSpec:
    """Solitary wave tank: Boussinesq inflow, level-set free surface.

    Tank length and width are 12.8 m and 0.4 m; the height follows the grid
    (n_z cells at the uniform spacing, 0.3 m on the coarse 1280x40x30 grid)
    so the spacing stays isotropic.  Depth 0.2 m, amplitude 0.02 m.
    """

    length: float = 12.8
    width: float = 0.4
    depth: float = 0.2
    amplitude: float = 0.02
    gravity: float = GRAVITY
    dt: float = 0.001
    cfl_lsm: float = 0.10
    default_grid: tuple = (1280, 40, 30)
    fluids: FluidPair = field(default_factory=FluidPair)

    @property
    def wavenumber(self) -> float:
        return math.sqrt(3.0 * self.amplitude / (4.0 * self.depth ** 3))

    @property
    def celerity(self) -> float:
        return math.sqrt(self.gravity * (self.amplitude + self.depth))

    @property
    def epsilon(self) -> float:
        return self.amplitude / self.depth


@dataclass
class ResolvedCase:
    """Concrete per-run settings shared by every worker."""

    name: str
    grid: GlobalGrid
    boundary_kinds: tuple
    scheme: str
    cd4_variant: str
    cfl: float | None
    fixed_dt: float | None
    fallback_dt: float | None
    nu: float
    source: tuple
    enable_lsm: bool
    enable_sgs: bool
    cfl_lsm: float
    reinit_max_iterations: int
    reinit_tol: float
    pressure_tol: float
    pressure_max_cycles: int
    pre_sweeps: int
    post_sweeps: int
    coarse_sweeps: int
    coarse_solver: str
    lid_velocity: tuple = (0.0, 0.0, 0.0)
    fluids: FluidPair | None = None
    spec: object = None
    inflow_velocity: object = None   # (comp, c1, c2, t) -> values
    phi_boundary: object = None      # (x, y, z, t) -> phi

    @property
    def ghost_width(self) -> int:
        return SCHEME_GHOSTS[self.scheme]

    @property
    def two_phase(self) -> bool:
        return self.enable_lsm


def _common(config: SimConfig, defaults: dict) -> dict:
    out = dict(defaults)
    for key in ("scheme", "cfl", "fixed_dt", "fallback_dt", "nu", "source",
                "enable_lsm"):
        val = getattr(config, key)
        if val is not None:
            out[key] = val
    # an explicit time-step policy displaces the case default for the other
    if config.fixed_dt is not None and config.cfl is None:
        out["cfl"] = None
    if config.cfl is not None and config.fixed_dt is None:
        out["fixed_dt"] = None
    out.update(dict(
        cd4_variant=config.cd4_variant,
        enable_sgs=config.enable_sgs,
        cfl_lsm=config.cfl_lsm,
        reinit_max_iterations=config.reinit_max_iterations,
        reinit_tol=config.reinit_tol,
        pressure_tol=config.pressure_tol,
        pressure_max_cycles=config.pressure_max_cycles,
        pre_sweeps=config.pre_sweeps,
        post_sweeps=config.post_sweeps,
        coarse_sweeps=config.coarse_sweeps,
        coarse_solver=config.coarse_solver,
    ))
    if out.get("cfl") is not None and out.get("fixed_dt") is not None:
        raise ValueError("exactly one of cfl / fixed_dt may be set")
    return out


def make_case(config: SimConfig) -> ResolvedCase:
    if config.case == "cavity":
        return make_cavity(config)
    if config.case == "tgv":
        return make_tgv(config)
    if config.case == "wave":
        return make_wave(config)
    raise UnknownCase(f"no case named {config.case!r}")


def make_cavity(config: SimConfig, spec: CavitySpec = CavitySpec()):
    dims = tuple(config.grid or spec.default_grid)
    h = spec.edge / dims[0]
    grid = GlobalGrid(dims, (spec.edge / dims[0], spec.edge / dims[1],
                             spec.edge / dims[2]))
    kinds = (NO_SLIP, NO_SLIP, PERIODIC, PERIODIC, NO_SLIP, LID)
    defaults = dict(scheme="cd4", cfl=spec.cfl, fixed_dt=None,
                    fallback_dt=spec.cfl * h / max(spec.lid_speed, 1.0),
                    nu=spec.nu, source=(0.0, 0.0, 0.0), enable_lsm=False)
    return ResolvedCase(name="cavity", grid=grid, boundary_kinds=kinds,
                        lid_velocity=(spec.lid_speed, 0.0, 0.0), spec=spec,
                        **_common(config, defaults))


def make_tgv(config: SimConfig, spec: TgvSpec = TgvSpec()):
    dims = tuple(config.grid or spec.default_grid)
    grid = GlobalGrid(dims, tuple(spec.extent / n for n in dims))
    kinds = (PERIODIC,) * 6
    defaults = dict(scheme="weno5", cfl=spec.cfl, fixed_dt=None,
                    fallback_dt=spec.cfl * grid.spacing[0] / spec.u0,
                    nu=spec.nu, source=(0.0, 0.0, 0.0), enable_lsm=False)
    return ResolvedCase(name="tgv", grid=grid, boundary_kinds=kinds,
                        spec=spec, **_common(config, defaults))


def make_wave(config: SimConfig, spec: WaveSpec = WaveSpec()):
    dims = tuple(config.grid or spec.default_grid)
    dx = spec.length / dims[0]
    grid = GlobalGrid(dims, (dx, dx, dx))
    kinds = (INFLOW, OUTFLOW, SLIP, SLIP, SLIP, SLIP)
    defaults = dict(scheme="weno5", cfl=None, fixed_dt=spec.dt,
                    fallback_dt=spec.dt, nu=None, source=(0.0, 0.0,
                                                          -spec.gravity),
                    enable_lsm=True)
    defaults["nu"] = spec.fluids.mu_w / spec.fluids.rho_w
    if config.cfl_lsm == SimConfig.cfl_lsm:
        config = config  # case default matches the config default
    case = ResolvedCase(name="wave", grid=grid, boundary_kinds=kinds,
                        fluids=spec.fluids, spec=spec,
                        **_common(config, defaults))
    case.inflow_velocity = _wave_inflow_profile(spec)
    case.phi_boundary = _wave_phi_profile(spec)
    return case


# ---------------------------------------------------------------------------
# wave analytics
# ---------------------------------------------------------------------------

def wave_elevation(t, spec: WaveSpec, x=0.0):
    """Free-surface elevation of the Boussinesq solitary wave at ``x``."""
    theta = spec.wavenumber * (x - spec.celerity * t)
    return spec.amplitude / np.cosh(theta) ** 2


def _eta_h_derivatives(t, spec: WaveSpec):
    """eta/H and its first three time derivatives at the inlet plane."""
    a = spec.wavenumber * spec.celerity
    theta = -a * np.asarray(t, dtype=np.float64)
    s = 1.0 / np.cosh(theta)
    tnh = np.tanh(theta)
    eta = s ** 2
    d1 = 2.0 * a * s ** 2 * tnh
    d2 = a ** 2 * (4.0 * s ** 2 * tnh ** 2 - 2.0 * s ** 4)
    d3 = a ** 3 * (8.0 * s ** 2 * tnh ** 3 - 16.0 * s ** 4 * tnh)
    return eta, d1, d2, d3


def wave_inflow(z, t, spec: WaveSpec):
    """Boussinesq inlet velocities (u, v, w) at height z above the bed.

    The normalised elevation derivatives are evaluated at the current time;
    v vanishes identically.
    """
    z = np.asarray(z, dtype=np.float64)
    eps = spec.epsilon
    d = spec.depth
    c = spec.celerity
    sgd = math.sqrt(spec.gravity * d)
    eta, d1, d2, d3 = _eta_h_derivatives(t, spec)
    u = eps * sgd * (eta - eps * eta ** 2 / 4.0
                     + (d ** 2 / (3.0 * c ** 2))
                     * (1.0 - 1.5 * z ** 2 / d ** 2) * d2)
    w = z * (eps / c) * sgd * ((1.0 - eps * eta / 2.0) * d1
                               + (d ** 2 / (3.0 * c ** 2))
                               * (1.0 - 0.5 * z ** 2 / d ** 2) * d3)
    v = np.zeros_like(u + z)
    return u, v, w


def _wave_inflow_profile(spec: WaveSpec):
    def profile(comp, c1, c2, t):
        # face perpendicular to x: coordinates are (y, z)
        z = c2
        u, v, w = wave_inflow(z, t, spec)
        surface = spec.depth + float(wave_elevation(t, spec))
        water = z <= surface
        vals = (u, v, w)[comp]
        return np.where(water, vals, 0.0)
    return profile


def _wave_phi_profile(spec: WaveSpec):
    def profile(x, y, z, t):
        eta = wave_elevation(t, spec, x=x)
        return spec.depth + eta - z
    return profile


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def init_state(case: ResolvedCase, plan, sub) -> SimState:
    fields = StaggeredField(sub.local_dims, sub.ghost_width,
                            two_phase=case.two_phase)
    fields.nu[...] = case.nu
    if case.name == "cavity":
        pass  # quiescent start
    elif case.name == "tgv":
        _init_tgv_fields(case, plan, sub, fields)
    elif case.name == "wave":
        _init_wave_fields(case, plan, sub, fields)
    else:
        raise UnknownCase(case.name)
    return SimState(fields=fields)


def _grids_for(case, plan, sub, fields, staggered_axis):
    g = sub.ghost_width
    shape = fields.shape
    lines = []
    for a in range(3):
        lines.append(coords_1d(plan.grid, sub, a, a == staggered_axis,
                               shape[a], g))
    return np.meshgrid(*lines, indexing="ij")


def _init_tgv_fields(case, plan, sub, fields):
    spec = case.spec
    el = spec.length
    x, y, z = _grids_for(case, plan, sub, fields, staggered_axis=0)
    fields.u[...] = spec.u0 * np.sin(x / el) * np.cos(y / el) * np.cos(z / el)
    x, y, z = _grids_for(case, plan, sub, fields, staggered_axis=1)
    fields.v[...] = -spec.u0 * np.cos(x / el) * np.sin(y / el) * np.cos(z / el)
    fields.w[...] = 0.0


def _init_wave_fields(case, plan, sub, fields):
    spec = case.spec
    x, y, z = _grids_for(case, plan, sub, fields, staggered_axis=None)
    fields.phi[...] = spec.depth - z
    eps = interface_half_thickness(plan.grid.spacing)
    rho, mu = material_fields(fields.phi, case.fluids, eps)
    fields.rho[...] = rho
    fields.mu[...] = mu
    np.divide(fields.mu, fields.rho, out=fields.nu)
    _hydrostatic_pressure(case, plan, sub, fields)


def _hydrostatic_pressure(case, plan, sub, fields):
    """Discretely balanced initial pressure: the face-averaged density
    gradient cancels gravity exactly, so still water stays still.

    The 1-D column profile is integrated top-down on every rank from global
    coordinates, making it independent of the decomposition.
    """
    spec = case.spec
    nz = plan.grid.dims[2]
    dz = plan.grid.spacing[2]
    eps = interface_half_thickness(plan.grid.spacing)
    zc = plan.grid.origin[2] + (np.arange(nz, dtype=np.float64) + 0.5) * dz
    rho_col, _ = material_fields(spec.depth - zc, case.fluids, eps)
    p_col = np.zeros(nz)
    acc = 0.0
    for k in range(nz - 2, -1, -1):
        rho_face = 0.5 * (rho_col[k] + rho_col[k + 1])
        acc += spec.gravity * dz * rho_face
        p_col[k] = acc
    g = sub.ghost_width
    ksl = np.arange(fields.shape[2]) - g + sub.offset[2]
    ksl = np.clip(ksl, 0, nz - 1)
    fields.p[...] = p_col[ksl][np.newaxis, np.newaxis, :]


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def kinetic_energy(fields, sub, transport, n_global, profiler=None) -> float:
    """Volume-mean of u_i u_i / 2 over owned face samples (collective)."""
    total = 0.0
    for name in ("u", "v", "w"):
        block = fields.interior(name)
        total += float(np.sum(np.square(block, dtype=np.float64),
                              dtype=np.longdouble))
    local = 0.5 * total / n_global
    return allreduce(transport, local, "sum", profiler)


def surface_elevation_profile(fields, plan, sub, transport, profiler=None):
    """Interface height above the bed for every x column (rank 0 gets the
    assembled profile; other ranks get None).

    Columns are sampled at the rank's mid-y plane and the zero crossing of
    phi is located by linear interpolation between cell centres.
    """
    g = sub.ghost_width
    nxl, nyl, nzl = sub.local_dims
    jmid_global = plan.grid.dims[1] // 2
    jl = jmid_global - sub.offset[1]
    heights = np.full(nxl, -1.0)
    if 0 <= jl < nyl:
        dz = plan.grid.spacing[2]
        z0 = plan.grid.origin[2] + (sub.offset[2] + 0.5) * dz
        phi = fields.phi[g:g + nxl, g + jl, g:g + nzl]
        for i in range(nxl):
            col = phi[i]
            height = -1.0
            for k in range(nzl - 1):
                if col[k] >= 0.0 > col[k + 1]:
                    frac = col[k] / (col[k] - col[k + 1])
                    height = z0 + (k + frac) * dz
                    break
            heights[i] = height
    payload = np.concatenate((
        [float(sub.offset[0]), float(nxl), float(1 if 0 <= jl < nyl else 0)],
        heights))
    parts = gather_arrays(transport, payload, profiler)
    if transport.rank != 0:
        return None
    profile = np.full(plan.grid.dims[0], -1.0)
    for part in parts:
        off, n, has = int(part[0]), int(part[1]), int(part[2])
        if has:
            vals = part[3:3 + n]
            profile[off:off + n] = np.maximum(profile[off:off + n], vals)
    return profile


def wave_crest_position(fields, plan, sub, transport, profiler=None) -> float:
    """x of the highest interface point (same value on every rank).

    The crest is located as the elevation-weighted centroid of the hump
    above half its peak height, which is stable against cell-level jitter
    on a smeared interface; it reduces to the argmax column for a sharp
    peak.
    """
    profile = surface_elevation_profile(fields, plan, sub, transport,
                                        profiler)
    if transport.rank == 0:
        dx = plan.grid.spacing[0]
        base = np.median(profile[profile >= 0.0])
        eta = np.where(profile >= 0.0, profile - base, 0.0)
        peak = float(eta.max())
        xc = plan.grid.origin[0] + (np.arange(profile.size) + 0.5) * dx
        if peak <= 0.0:
            x = xc[int(np.argmax(profile))]
        else:
            weights = np.where(eta >= 0.5 * peak, eta, 0.0)
            x = float(np.sum(weights * xc) / np.sum(weights))
        out = np.array([x])
    else:
        out = None
    return float(broadcast_array(transport, out, profiler)[0])
