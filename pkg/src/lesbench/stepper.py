"""Fractional-step time integration on one worker's subdomain.

Step sequence: dt from the CFL condition (collective max), optional
level-set transport + reinitialisation + material update, WALE eddy
viscosity, three-stage Runge-Kutta predictor with the pressure gradient
frozen at the old time level, pressure-correction solve (multigrid for
single-phase runs, the density-consistent solver for two-phase ones),
projection and pressure update, boundary refresh.  The profiler brackets
the level-set, predictor, Poisson and update phases the same way the
timing report consumes them.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import kernels as K
from . import levelset, pressure, schemes, turbulence
from .errors import ConfigError, UnknownBoundaryKind
from .exchange import allreduce, exchange_halos
from .mesh import (HIGH, INFLOW, LID, LOW, NO_SLIP, OUTFLOW, SLIP,
                   face_index, flat_view, strides_of)

VELOCITY_NAMES = ("u", "v", "w")


@dataclass
class SimConfig:
    """Run settings; unset entries fall back to the selected case's values."""

    case: str = "cavity"
    grid: tuple | None = None
    topology: tuple = (1, 1, 1)
    scheme: str | None = None
    cd4_variant: str = "standard"
    cfl: float | None = None
    fixed_dt: float | None = None
    fallback_dt: float | None = None
    steps: int = 50
    window: int = 40
    nu: float | None = None
    source: tuple | None = None
    enable_lsm: bool | None = None
    enable_sgs: bool = True
    cfl_lsm: float = 0.10
    reinit_max_iterations: int = 15
    reinit_tol: float = 5.0e-3
    pressure_tol: float = 1.0e-6
    pressure_max_cycles: int = 100
    pre_sweeps: int = 2
    post_sweeps: int = 2
    coarse_sweeps: int = 50
    coarse_solver: str = "exact"
    transport: str = "inproc"
    workers_per_node: int = 1
    out_dir: str | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        for key in ("grid", "topology", "source"):
            val = getattr(cfg, key)
            if val is not None:
                setattr(cfg, key, tuple(val))
        return cfg


@dataclass
class SimState:
    """One worker's evolving view of the run."""

    fields: object
    t: float = 0.0
    step_index: int = 0
    dt: float = 0.0
    reinit_steps: int = 0
    reinit_residual: float = 0.0
    pressure_cycles: int = 0


# ---------------------------------------------------------------------------
# coordinates
# ---------------------------------------------------------------------------

def coords_1d(grid, sub, axis: int, staggered: bool, padded_size: int,
              ghost: int) -> np.ndarray:
    """Physical positions for every padded index along one axis.

    Cell centres sit at (i_global + 1/2) dx, component faces at
    (i_global + 1) dx; ghost entries extrapolate the same formula.
    """
    idx = np.arange(padded_size, dtype=np.float64) - ghost + sub.offset[axis]
    shift = 1.0 if staggered else 0.5
    return grid.origin[axis] + (idx + shift) * grid.spacing[axis]


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

class BoundaryHandler:
    """Fills physical-face ghosts (and prescribed boundary faces).

    Reflection rules on a wall plane: the normal component's face on the
    wall takes the wall value and its ghost faces mirror antisymmetrically;
    tangential components and scalars reflect about the plane, with ghost =
    2*wall - interior for prescribed values and a plain mirror copy for
    slip / zero-gradient fills.  Outflow faces copy the last interior plane
    and, when the run has prescribed inflow, get a uniform correction so
    net boundary flux vanishes (the all-Neumann pressure problem is
    otherwise unsolvable).
    """

    def __init__(self, plan, sub, case, transport, profiler=None):
        self.plan = plan
        self.sub = sub
        self.case = case
        self.transport = transport
        self.profiler = profiler
        g = sub.ghost_width
        grid = plan.grid
        shape = tuple(n + 2 * g for n in sub.local_dims)
        self.centers = [coords_1d(grid, sub, a, False, shape[a], g)
                        for a in range(3)]
        self.faces = [coords_1d(grid, sub, a, True, shape[a], g)
                      for a in range(3)]
        self.has_outflow = OUTFLOW in plan.boundary_kinds
        self._outflow_area = None
        if self.has_outflow:
            ax = plan.boundary_kinds.index(OUTFLOW) // 2
            perp = [a for a in range(3) if a != ax]
            cells = plan.grid.dims[perp[0]] * plan.grid.dims[perp[1]]
            da = plan.grid.spacing[perp[0]] * plan.grid.spacing[perp[1]]
            self._outflow_area = cells * da
            self._outflow_cells = cells

    # -- slab helpers -----------------------------------------------------

    def _slab(self, arr, axis, index):
        sl = [slice(None)] * 3
        sl[axis] = index
        return arr[tuple(sl)]

    def _physical_faces(self):
        for axis in range(3):
            for side in (LOW, HIGH):
                fid = face_index(axis, side)
                if self.sub.neighbors[fid] is None:
                    yield axis, side, self.plan.boundary_kinds[fid]

    # -- wall values ------------------------------------------------------

    def _wall_value(self, kind, axis, side, comp, t):
        """Prescribed velocity of component ``comp`` on this face, or None
        for mirror-copy kinds; arrays broadcast over the face slab."""
        if kind in (NO_SLIP,):
            return 0.0
        if kind == SLIP:
            return 0.0 if comp == axis else None
        if kind == LID:
            if comp == axis:
                return 0.0
            return float(self.case.lid_velocity[comp])
        if kind == INFLOW:
            return self._inflow_value(axis, side, comp, t)
        if kind == OUTFLOW:
            return None
        raise UnknownBoundaryKind(kind)

    def _inflow_value(self, axis, side, comp, t):
        prof = self.case.inflow_velocity
        if prof is None:
            return 0.0
        # positions of component `comp` over the face slab, broadcastable
        coords = []
        for a in range(3):
            if a == axis:
                continue
            line = self.faces[a] if a == comp else self.centers[a]
            coords.append(line)
        mesh = np.meshgrid(*coords, indexing="ij")
        return prof(comp, mesh[0], mesh[1], t)

    # -- fills ------------------------------------------------------------

    def _fill_normal(self, arr, axis, side, kind, t, update_outflow=True):
        g = self.sub.ghost_width
        nl = self.sub.local_dims[axis]
        if kind == OUTFLOW:
            # with update_outflow False the boundary face keeps its
            # flux-balanced pre-solve value (the projection leaves it
            # untouched, so rewriting it would break the projected
            # divergence at the outflow column); ghosts still follow it
            bf = g + nl - 1 if side == HIGH else g - 1
            src = (g + nl - 2 if side == HIGH else g) if update_outflow \
                else bf
            if side == HIGH:
                rng = range(bf if update_outflow else bf + 1,
                            arr.shape[axis])
            else:
                rng = range(0, bf + 1 if update_outflow else bf)
            for m in rng:
                self._slab(arr, axis, m)[...] = self._slab(arr, axis, src)
            return
        wall = self._wall_value(kind, axis, side, axis, t)
        bf = g + nl - 1 if side == HIGH else g - 1
        self._slab(arr, axis, bf)[...] = wall
        if side == HIGH:
            for m in range(1, g + 1):
                self._slab(arr, axis, bf + m)[...] = \
                    2.0 * wall - self._slab(arr, axis, bf - m)
        else:
            for m in range(1, g):
                self._slab(arr, axis, bf - m)[...] = \
                    2.0 * wall - self._slab(arr, axis, bf + m)

    def _fill_tangential(self, arr, axis, side, kind, comp, t):
        g = self.sub.ghost_width
        nl = self.sub.local_dims[axis]
        wall = self._wall_value(kind, axis, side, comp, t)
        for m in range(g):
            if side == LOW:
                dst, src = g - 1 - m, g + m
            else:
                dst, src = g + nl + m, g + nl - 1 - m
            mirror = self._slab(arr, axis, src)
            if wall is None:
                self._slab(arr, axis, dst)[...] = mirror
            else:
                self._slab(arr, axis, dst)[...] = 2.0 * wall - mirror

    def _fill_scalar(self, arr, axis, side, name, t):
        g = self.sub.ghost_width
        nl = self.sub.local_dims[axis]
        kind = self.plan.boundary_kinds[face_index(axis, side)]
        profile = None
        if name == "phi" and kind == INFLOW and \
                self.case.phi_boundary is not None:
            profile = self.case.phi_boundary
        for m in range(g):
            if side == LOW:
                dst, src = g - 1 - m, g + m
            else:
                dst, src = g + nl + m, g + nl - 1 - m
            slab = self._slab(arr, axis, dst)
            if profile is None:
                slab[...] = self._slab(arr, axis, src)
            else:
                coords = [self.centers[a] for a in range(3)]
                coords[axis] = coords[axis][dst:dst + 1]
                mesh = np.meshgrid(*coords, indexing="ij")
                vals = np.asarray(profile(mesh[0], mesh[1], mesh[2], t))
                if vals.ndim == 3:
                    vals = np.squeeze(vals, axis=axis)
                slab[...] = vals

    # -- public -----------------------------------------------------------

    def apply(self, fields, t, names=None, update_outflow=True):
        """Fill every physical-face ghost of the named components."""
        if names is None:
            names = fields.names()
        for axis, side, kind in self._physical_faces():
            for comp, cname in enumerate(VELOCITY_NAMES):
                if cname not in names:
                    continue
                arr = getattr(fields, cname)
                if comp == axis:
                    self._fill_normal(arr, axis, side, kind, t,
                                      update_outflow)
                else:
                    self._fill_tangential(arr, axis, side, kind, comp, t)
            for name in names:
                if name in VELOCITY_NAMES:
                    continue
                arr = getattr(fields, name)
                if arr is not None:
                    self._fill_scalar(arr, axis, side, name, t)
        if self.has_outflow and update_outflow \
                and any(n in names for n in VELOCITY_NAMES):
            self._balance_outflow(fields)

    def _balance_outflow(self, fields):
        """Shift outflow-face normal velocity so net boundary flux is zero.

        Walls and slip faces carry no normal flux, so only prescribed inflow
        and copied outflow faces enter the budget; the residual divided by
        the outflow area becomes a uniform outward correction.  Without it
        the all-Neumann pressure problem has no solution while a wave is
        being pushed in.
        """
        arrs = (fields.u, fields.v, fields.w)
        g = self.sub.ghost_width
        flux_in_local = 0.0
        flux_out_local = 0.0
        for axis, side, kind in self._physical_faces():
            if kind not in (INFLOW, OUTFLOW):
                continue
            nl = self.sub.local_dims
            arr = arrs[axis]
            bf = g + nl[axis] - 1 if side == HIGH else g - 1
            perp = [a for a in range(3) if a != axis]
            sl = [slice(g, g + nl[a]) for a in range(3)]
            sl[axis] = bf
            block = arr[tuple(sl)]
            da = self.plan.grid.spacing[perp[0]] * \
                self.plan.grid.spacing[perp[1]]
            outward = 1.0 if side == HIGH else -1.0
            if kind == INFLOW:
                flux_in_local += -outward * float(np.sum(block)) * da
            else:
                flux_out_local += outward * float(np.sum(block)) * da
        fin = allreduce(self.transport, flux_in_local, "sum", self.profiler)
        fout = allreduce(self.transport, flux_out_local, "sum",
                         self.profiler)
        delta = (fin - fout) / self._outflow_area
        for axis, side, kind in self._physical_faces():
            if kind != OUTFLOW:
                continue
            nl = self.sub.local_dims
            arr = arrs[axis]
            bf = g + nl[axis] - 1 if side == HIGH else g - 1
            outward = 1.0 if side == HIGH else -1.0
            lo = bf if side == HIGH else 0
            hi = arr.shape[axis] if side == HIGH else bf + 1
            sl = [slice(g, g + nl[a]) for a in range(3)]
            for m in range(lo, hi):
                sl[axis] = m
                arr[tuple(sl)] += outward * delta


def apply_boundary_conditions(fields, plan, sub, case, t, transport,
                              profiler=None, names=None):
    BoundaryHandler(plan, sub, case, transport, profiler).apply(
        fields, t, names)


# ---------------------------------------------------------------------------
# worker-side stepping context
# ---------------------------------------------------------------------------

class Stepper:
    """Owns scratch arrays, boundary handler and solver for one worker."""

    def __init__(self, plan, sub, case, transport, profiler):
        self.plan = plan
        self.sub = sub
        self.case = case
        self.transport = transport
        self.profiler = profiler
        self.spacing = plan.grid.spacing
        shape = tuple(n + 2 * sub.ghost_width for n in sub.local_dims)
        self.ws = schemes.SchemeWorkspace(shape)
        self.bc = BoundaryHandler(plan, sub, case, transport, profiler)
        if case.two_phase:
            # the projection divides by rho(phi); the Poisson operator must
            # carry the same face densities or the corrected field is not
            # divergence free and the free surface loses its restoring force
            self.solver = pressure.VariableDensityPressureSolver(
                plan, sub, transport, tolerance=case.pressure_tol,
                max_iterations=8 * case.pressure_max_cycles,
                profiler=profiler)
        else:
            self.solver = pressure.PressureSolver(
                plan, sub, transport,
                tolerance=case.pressure_tol,
                max_cycles=case.pressure_max_cycles,
                pre_sweeps=case.pre_sweeps, post_sweeps=case.post_sweeps,
                coarse_sweeps=case.coarse_sweeps,
                coarse_solver=case.coarse_solver, profiler=profiler)
        f8 = dict(dtype=np.float64, order="F")
        self.rhs_u = np.zeros(shape, **f8)
        self.rhs_v = np.zeros(shape, **f8)
        self.rhs_w = np.zeros(shape, **f8)
        self.u0 = np.zeros(shape, **f8)
        self.v0 = np.zeros(shape, **f8)
        self.w0 = np.zeros(shape, **f8)
        self.div = np.zeros(shape, **f8)
        self.p_hat = np.zeros(shape, **f8)
        self.lap = np.zeros(shape, **f8)
        self.inv_rho = [None, None, None]
        if case.enable_lsm:
            self.lsm_ws = levelset.LsmWorkspace(shape)
        else:
            self.lsm_ws = None

    # -- refresh helpers ---------------------------------------------------

    def refresh(self, fields, t, names, update_outflow=True):
        # exchange before the physical fills: boundary mirrors then see
        # fresh ghost columns, so corner ghosts match the single-worker run
        for name in names:
            arr = getattr(fields, name)
            if arr is not None:
                exchange_halos(self.transport, self.sub, arr, name,
                               self.profiler)
        self.bc.apply(fields, t, names, update_outflow)

    def refresh_array(self, arr, name, fields, t):
        """Refresh one scratch array using scalar (Neumann-style) fills."""
        g = self.sub.ghost_width
        exchange_halos(self.transport, self.sub, arr, name, self.profiler)
        for axis, side, kind in self.bc._physical_faces():
            nl = self.sub.local_dims[axis]
            for m in range(g):
                if side == LOW:
                    dst, src = g - 1 - m, g + m
                else:
                    dst, src = g + nl + m, g + nl - 1 - m
                self.bc._slab(arr, axis, dst)[...] = \
                    self.bc._slab(arr, axis, src)

    # -- dt ----------------------------------------------------------------

    def compute_dt(self, fields) -> float:
        """CFL time step from the previous step's velocity maxima."""
        case = self.case
        if case.fixed_dt is not None:
            return case.fixed_dt
        strides = strides_of(fields.u)
        bounds = K.interior_bounds(fields.shape, self.sub.ghost_width)
        local = K.k_dt_denominator_max(
            flat_view(fields.u), flat_view(fields.v), flat_view(fields.w),
            strides[0], strides[1], strides[2],
            1.0 / self.spacing[0], 1.0 / self.spacing[1],
            1.0 / self.spacing[2], strides[1], strides[2], bounds)
        gmax = allreduce(self.transport, local, "max", self.profiler)
        if gmax < 1.0e-12:
            return case.fallback_dt
        return case.cfl / gmax

    # -- momentum ------------------------------------------------------------

    def _momentum_rhs(self, fields):
        """R(u) = -C + D - grad(p)/rho + S on every owned face."""
        rhs_views = (flat_view(self.rhs_u), flat_view(self.rhs_v),
                     flat_view(self.rhs_w))
        for rv in rhs_views:
            rv[:] = 0.0
        schemes.convective_term(fields, self.spacing, self.case.scheme,
                                self.ws, rhs_views, self.case.cd4_variant)
        schemes.diffusive_term(fields, self.spacing, self.ws, rhs_views)
        strides = strides_of(fields.p)
        nx, nxny = strides[1], strides[2]
        bounds = K.interior_bounds(fields.shape, self.sub.ghost_width)
        pf = flat_view(fields.p)
        for comp in range(3):
            invd = 1.0 / self.spacing[comp]
            if fields.two_phase:
                K.k_pgrad_acc_rho(rhs_views[comp], pf,
                                  flat_view(self.inv_rho[comp]),
                                  strides[comp], invd, nx, nxny, bounds)
            else:
                K.k_pgrad_acc(rhs_views[comp], pf, strides[comp], invd,
                              nx, nxny, bounds)
            s = self.case.source[comp]
            if s != 0.0:
                arr = (self.rhs_u, self.rhs_v, self.rhs_w)[comp]
                g = self.sub.ghost_width
                nl = self.sub.local_dims
                sl = tuple(slice(g, g + nl[a]) for a in range(3))
                arr[sl] += s

    def _update_face_density(self, fields):
        strides = strides_of(fields.rho)
        nx, nxny = strides[1], strides[2]
        shape = fields.shape
        for comp in range(3):
            if self.inv_rho[comp] is None:
                self.inv_rho[comp] = np.zeros(shape, dtype=np.float64,
                                              order="F")
            bounds = K.interior_bounds(shape, self.sub.ghost_width)
            K.k_face_average(flat_view(fields.rho),
                             flat_view(self.inv_rho[comp]),
                             strides[comp], nx, nxny, bounds)
            interior = self.inv_rho[comp]
            np.divide(1.0, interior, out=interior,
                      where=interior != 0.0)

    def predictor(self, fields, dt, t):
        """Three-stage low-storage RK with fractions (1/3, 1/2, 1)."""
        np.copyto(self.u0, fields.u)
        np.copyto(self.v0, fields.v)
        np.copyto(self.w0, fields.w)
        for frac in (1.0 / 3.0, 0.5, 1.0):
            self._momentum_rhs(fields)
            coef = frac * dt
            np.multiply(self.rhs_u, coef, out=fields.u)
            fields.u += self.u0
            np.multiply(self.rhs_v, coef, out=fields.v)
            fields.v += self.v0
            np.multiply(self.rhs_w, coef, out=fields.w)
            fields.w += self.w0
            self.refresh(fields, t, VELOCITY_NAMES)

    # -- full step ---------------------------------------------------------

    def step(self, state: SimState):
        fields = state.fields
        prof = self.profiler
        case = self.case
        with prof.section("total"):
            state.dt = self.compute_dt(fields)
            if case.enable_lsm:
                with prof.section("ls"):
                    self._levelset_update(state)
            if case.enable_sgs:
                turbulence.eddy_viscosity_field(fields, self.spacing)
                self.refresh(fields, state.t, ("nut",))
            else:
                fields.nut[...] = 0.0
            with prof.section("cd"):
                if fields.two_phase:
                    self._update_face_density(fields)
                self.predictor(fields, state.dt, state.t)
                # boundary data advances to the new time level before the
                # solve so the projected field satisfies the new fluxes
                self.refresh(fields, state.t + state.dt, VELOCITY_NAMES)
            with prof.section("p"):
                state.pressure_cycles = self.solver.solve(
                    fields, state.dt, self.div)
            with prof.section("up"):
                pressure.copy_phat_full(self.solver, fields, self.p_hat)
                self.refresh_array(self.p_hat, "p", fields, state.t)
                if fields.two_phase:
                    pressure.project_velocity_rho(fields, self.p_hat,
                                                  self.spacing, state.dt,
                                                  self.inv_rho)
                else:
                    pressure.project_velocity(fields, self.p_hat,
                                              self.spacing, state.dt)
                pressure.update_pressure(fields, self.p_hat, self.spacing,
                                         state.dt, self.lap)
                state.t += state.dt
                self.refresh(fields, state.t, ("u", "v", "w", "p"),
                             update_outflow=False)
            state.step_index += 1
        return state

    def _levelset_update(self, state):
        fields = state.fields
        case = self.case

        def refresh_phi(arr):
            exchange_halos(self.transport, self.sub, arr, "phi",
                           self.profiler)
            self.bc.apply(fields, state.t, names=("phi",))

        levelset.lsm_advect(fields, self.spacing, state.dt, self.lsm_ws,
                            refresh_phi)
        cfg = levelset.ReinitConfig(
            cfl=case.cfl_lsm, max_iterations=case.reinit_max_iterations,
            residual_tol=case.reinit_tol)
        state.reinit_steps, state.reinit_residual = levelset.reinitialize(
            fields, self.spacing, cfg, self.lsm_ws, refresh_phi,
            self.transport, residual_margins=self._phi_residual_margins(),
            profiler=self.profiler)
        eps = levelset.interface_half_thickness(self.spacing)
        rho, mu = levelset.material_fields(fields.phi, case.fluids, eps)
        fields.rho[...] = rho
        fields.mu[...] = mu
        np.divide(fields.mu, fields.rho, out=fields.nu)
        self.refresh(fields, state.t, ("rho", "mu", "nu"))

    def _phi_residual_margins(self):
        """Cells to exclude from the reinit residual beside faces whose phi
        ghosts are prescribed analytically (the relaxation cannot agree
        with them to signed-distance accuracy)."""
        if self.case.phi_boundary is None:
            return None
        margins = [0] * 6
        for axis, side, kind in self.bc._physical_faces():
            if kind == INFLOW:
                margins[face_index(axis, side)] = self.sub.ghost_width
        return tuple(margins)

    def post_step_divergence(self, fields) -> float:
        """Global max |div u| over owned cells (collective)."""
        pressure.divergence_interior(fields, self.spacing, self.div)
        strides = strides_of(self.div)
        bounds = K.interior_bounds(fields.shape, self.sub.ghost_width)
        local = K.k_max_abs(flat_view(self.div), strides[1], strides[2],
                            bounds)
        return allreduce(self.transport, local, "max", self.profiler)
