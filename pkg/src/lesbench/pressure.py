"""Pressure-correction Poisson solve: geometric multigrid plus projection.

V(pre, post) cycles with red-black Gauss-Seidel smoothing, cell-centred
full-weighting restriction and trilinear prolongation.  The hierarchy depth
comes from the global grid (factor-2 per direction, coarsest global dims at
least 4), clamped so every rank's block stays divisible; symmetric
topologies therefore build the same hierarchy a single worker does, which
keeps the solve bit-identical across those worker counts.

The coarsest level is gathered to the master rank and solved exactly by a
fast transform (FFT along periodic axes, DCT-II along Neumann axes, which
diagonalise the 7-point operator on a uniform grid).  Grids whose smallest
dimension blocks deep coarsening, like a long shallow tank, leave a coarse
level with hundreds of cells along one axis; relaxation sweeps alone cannot
converge its smooth modes, while the exact solve keeps every V-cycle
contraction grid-independent.  A fixed-sweep fallback remains available.

Boundary handling per level: periodic faces exchange halos, every physical
face is homogeneous Neumann (ghost mirrors the first interior cell), which
also means the projection never touches prescribed boundary-normal faces.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

from . import kernels as K
from .errors import DimensionNotEven, NoConvergence
from .exchange import (exact_mean, exchange_axis, allreduce,
                       gather_arrays, pack_tag)
from .mesh import PERIODIC, face_index, flat_view, strides_of


def divergence_interior(fields, spacing, out):
    """Staggered divergence (u_i - u_{i-1})/dx + ... per owned cell."""
    g = fields.ghost_width
    strides = strides_of(fields.u)
    bounds = K.interior_bounds(fields.shape, g)
    K.k_divergence(flat_view(fields.u), flat_view(fields.v),
                   flat_view(fields.w), flat_view(out),
                   strides[0], strides[1], strides[2],
                   1.0 / spacing[0], 1.0 / spacing[1], 1.0 / spacing[2],
                   strides[1], strides[2], bounds)
    return out


def hierarchy_depth(global_dims, local_dims) -> int:
    """Number of multigrid levels supported by grid and decomposition."""
    depth = 1
    gd = list(global_dims)
    ld = list(local_dims)
    while (all(n % 2 == 0 for n in gd) and all(n // 2 >= 4 for n in gd)
           and all(n % 2 == 0 for n in ld)):
        gd = [n // 2 for n in gd]
        ld = [n // 2 for n in ld]
        depth += 1
    return depth


class _Level:
    def __init__(self, local_dims, spacing, offset):
        self.local_dims = tuple(local_dims)
        self.spacing = tuple(spacing)
        self.offset = tuple(offset)
        shape = tuple(n + 2 for n in local_dims)
        self.p = np.zeros(shape, dtype=np.float64, order="F")
        self.rhs = np.zeros(shape, dtype=np.float64, order="F")
        self.r = np.zeros(shape, dtype=np.float64, order="F")
        self.coef = tuple(1.0 / d ** 2 for d in spacing)
        self.diag_inv = 1.0 / (2.0 * sum(self.coef))
        # parity of the first interior cell in global terms (ghost = 1)
        self.parity = tuple((o - 1) % 2 for o in offset)

    @property
    def shape(self):
        return self.p.shape

    def interior(self, a):
        nx, ny, nz = self.local_dims
        return a[1:1 + nx, 1:1 + ny, 1:1 + nz]


class _CoarseTransform:
    """Exact solve of the 7-point Poisson operator on the gathered level.

    Periodic axes diagonalise under the DFT, Neumann axes under the DCT-II
    (cell-centred mirror ghosts); the singular mean mode is pinned to zero.
    Runs on the master rank only; the result is therefore identical for
    every decomposition of the same global coarse grid.
    """

    def __init__(self, global_dims, spacing, periodic):
        self.dims = tuple(global_dims)
        self.periodic = tuple(periodic)
        eig = np.zeros(self.dims)
        for axis in range(3):
            n = self.dims[axis]
            k = np.arange(n)
            theta = (2.0 * np.pi * k / n) if self.periodic[axis] \
                else (np.pi * k / n)
            lam = (2.0 * np.cos(theta) - 2.0) / spacing[axis] ** 2
            shape = [1, 1, 1]
            shape[axis] = n
            eig = eig + lam.reshape(shape)
        self.eig = eig

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        a = rhs.astype(np.complex128 if any(self.periodic) else np.float64)
        for axis in range(3):
            if self.periodic[axis]:
                a = sfft.fft(a, axis=axis)
            else:
                a = sfft.dct(a, type=2, axis=axis, norm="ortho")
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(np.abs(self.eig) > 1.0e-12, a / self.eig, 0.0)
        for axis in range(3):
            if self.periodic[axis]:
                a = sfft.ifft(a, axis=axis)
            else:
                a = sfft.idct(a, type=2, axis=axis, norm="ortho")
        return np.ascontiguousarray(a.real)


class PressureSolver:
    """Per-worker multigrid context bound to one decomposition."""

    def __init__(self, plan, sub, transport, tolerance=1.0e-6,
                 max_cycles=100, pre_sweeps=2, post_sweeps=2,
                 coarse_sweeps=50, coarse_solver="exact", profiler=None):
        self.plan = plan
        self.sub = sub
        self.transport = transport
        self.tolerance = float(tolerance)
        self.max_cycles = int(max_cycles)
        self.pre_sweeps = int(pre_sweeps)
        self.post_sweeps = int(post_sweeps)
        self.coarse_sweeps = int(coarse_sweeps)
        self.coarse_solver = coarse_solver
        self.profiler = profiler
        self.last_cycles = 0

        if any(d % 2 != 0 for d in plan.grid.dims):
            raise DimensionNotEven(
                f"grid {plan.grid.dims} has an odd dimension; the pressure "
                "hierarchy needs factor-2 coarsening")
        depth = hierarchy_depth(plan.grid.dims, sub.local_dims)
        self.levels = []
        ld = list(sub.local_dims)
        sp = list(plan.grid.spacing)
        off = list(sub.offset)
        for _ in range(depth):
            self.levels.append(_Level(ld, sp, off))
            ld = [n // 2 for n in ld]
            sp = [d * 2.0 for d in sp]
            off = [o // 2 for o in off]
        self.n_cells_global = plan.grid.cell_count
        self._coarse = None
        if coarse_solver == "exact":
            factor = 2 ** (depth - 1)
            cg = tuple(d // factor for d in plan.grid.dims)
            periodic = tuple(
                plan.boundary_kinds[face_index(a, 0)] == PERIODIC
                for a in range(3))
            if transport.rank == 0:
                self._coarse = _CoarseTransform(
                    cg, self.levels[-1].spacing, periodic)
            self._coarse_dims = cg

    # -- boundary handling ---------------------------------------------

    def _refresh(self, lv: _Level, a: np.ndarray):
        # exchange first: the physical fills then mirror fresh ghost
        # columns, which keeps corner ghosts decomposition-independent
        for axis in range(3):
            exchange_axis(self.transport, self.sub, a, axis, 3,
                          self.profiler, ghost_width=1)
        self._fill_physical(lv, a)

    def _fill_physical(self, lv: _Level, a: np.ndarray):
        # homogeneous Neumann on every non-periodic face this rank owns
        for axis in range(3):
            n = lv.local_dims[axis]
            for side in (0, 1):
                if self.sub.neighbors[face_index(axis, side)] is not None:
                    continue
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if side == 0:
                    dst[axis] = 0
                    src[axis] = 1
                else:
                    dst[axis] = n + 1
                    src[axis] = n
                a[tuple(dst)] = a[tuple(src)]

    # -- multigrid pieces ----------------------------------------------

    def _smooth(self, lv: _Level, sweeps: int):
        pf = flat_view(lv.p)
        rf = flat_view(lv.rhs)
        nx, nxny = strides_of(lv.p)[1:]
        bounds = K.interior_bounds(lv.shape, 1)
        for _ in range(sweeps):
            for color in (0, 1):
                self._refresh(lv, lv.p)
                K.k_rbgs_sweep(pf, rf, color, 1, nx, nxny,
                               lv.coef[0], lv.coef[1], lv.coef[2],
                               lv.diag_inv, lv.parity[0], lv.parity[1],
                               lv.parity[2], nx, nxny, bounds)

    def _residual(self, lv: _Level):
        self._refresh(lv, lv.p)
        nx, nxny = strides_of(lv.p)[1:]
        bounds = K.interior_bounds(lv.shape, 1)
        K.k_residual(flat_view(lv.p), flat_view(lv.rhs), flat_view(lv.r),
                     1, nx, nxny, lv.coef[0], lv.coef[1], lv.coef[2],
                     nx, nxny, bounds)

    def _solve_coarsest(self, lv: _Level):
        """Gathered exact solve on the master rank, scattered back."""
        payload = np.concatenate((
            [float(v) for v in lv.offset],
            [float(v) for v in lv.local_dims],
            np.ascontiguousarray(lv.interior(lv.rhs)).ravel()))
        parts = gather_arrays(self.transport, payload, self.profiler)
        rank = self.transport.rank
        tag = pack_tag(3, 7, 0)
        if rank == 0:
            grhs = np.zeros(self._coarse_dims)
            metas = []
            for part in parts:
                off = tuple(int(v) for v in part[0:3])
                ld = tuple(int(v) for v in part[3:6])
                metas.append((off, ld))
                block = part[6:].reshape(ld)
                grhs[off[0]:off[0] + ld[0], off[1]:off[1] + ld[1],
                     off[2]:off[2] + ld[2]] = block
            sol = self._coarse.solve(grhs)
            for dest in range(1, self.transport.size):
                off, ld = metas[dest]
                block = sol[off[0]:off[0] + ld[0], off[1]:off[1] + ld[1],
                            off[2]:off[2] + ld[2]]
                self.transport.send(dest, tag, block.ravel())
            off, ld = metas[0]
            mine = sol[off[0]:off[0] + ld[0], off[1]:off[1] + ld[1],
                       off[2]:off[2] + ld[2]]
        else:
            mine = self.transport.recv(0, tag).reshape(lv.local_dims)
        lv.interior(lv.p)[...] = mine

    def _vcycle(self, idx: int):
        lv = self.levels[idx]
        if idx == len(self.levels) - 1:
            if self.coarse_solver == "exact":
                self._solve_coarsest(lv)
            else:
                self._smooth(lv, self.coarse_sweeps)
            return
        self._smooth(lv, self.pre_sweeps)
        self._residual(lv)
        coarse = self.levels[idx + 1]
        fnx, fnxny = strides_of(lv.p)[1:]
        cnx, cnxny = strides_of(coarse.p)[1:]
        K.k_restrict(flat_view(lv.r), flat_view(coarse.rhs), fnx, fnxny,
                     cnx, cnxny, 1, 1, K.interior_bounds(coarse.shape, 1))
        coarse.p[...] = 0.0
        self._vcycle(idx + 1)
        self._refresh(coarse, coarse.p)
        K.k_prolong_add(flat_view(coarse.p), flat_view(lv.p), fnx, fnxny,
                        cnx, cnxny, 1, 1, K.interior_bounds(lv.shape, 1))
        self._smooth(lv, self.post_sweeps)

    # -- public API ------------------------------------------------------

    def solve(self, fields, dt: float, div_scratch: np.ndarray):
        """Solve lap(p_hat) = div(u*)/dt until the projected velocity's
        divergence falls at or below the tolerance everywhere.

        Returns the level-0 state; fetch the correction from ``self.p_hat``
        (one ghost layer).  The right-hand side mean is removed with a
        partition-invariant quantised sum, and the returned correction is
        itself mean-free, which fixes the gauge of the singular all-Neumann
        or all-periodic operator.
        """
        lv0 = self.levels[0]
        divergence_interior(fields, self.plan.grid.spacing, div_scratch)
        g = fields.ghost_width
        nx, ny, nz = fields.local_dims
        lv0.rhs[1:-1, 1:-1, 1:-1] = \
            div_scratch[g:g + nx, g:g + ny, g:g + nz] / dt
        mean = exact_mean(self.transport, lv0.interior(lv0.rhs),
                          self.n_cells_global, self.profiler)
        lv0.rhs[1:-1, 1:-1, 1:-1] -= mean
        lv0.p[...] = 0.0

        bounds = K.interior_bounds(lv0.shape, 1)
        fnx, fnxny = strides_of(lv0.p)[1:]
        cycles = 0
        while True:
            self._residual(lv0)
            local = K.k_max_abs(flat_view(lv0.r), fnx, fnxny, bounds)
            res = dt * allreduce(self.transport, local, "max", self.profiler)
            if res <= self.tolerance:
                break
            if cycles >= self.max_cycles:
                raise NoConvergence(
                    f"pressure solve stuck at residual {res:.3e} after "
                    f"{cycles} V-cycles (tolerance {self.tolerance:.1e})")
            self._vcycle(0)
            cycles += 1
        pmean = exact_mean(self.transport, lv0.interior(lv0.p),
                           self.n_cells_global, self.profiler)
        lv0.p[1:-1, 1:-1, 1:-1] -= pmean
        self._refresh(lv0, lv0.p)
        self.last_cycles = cycles
        return cycles

    @property
    def p_hat(self) -> np.ndarray:
        return self.levels[0].p

    def phat_interior(self):
        return self.levels[0].p[1:-1, 1:-1, 1:-1]


def copy_phat_full(solver, fields, out: np.ndarray):
    """Widen the solver's correction into field-sized scratch (interior)."""
    g = fields.ghost_width
    nx, ny, nz = fields.local_dims
    out[g:g + nx, g:g + ny, g:g + nz] = solver.phat_interior()
    return out


def project_velocity(fields, p_hat_full, spacing, dt):
    """u <- u - dt grad(p_hat) on every owned face.

    Ghosts of ``p_hat_full`` must be current; Neumann mirrors make the
    correction vanish on physical boundary faces, so prescribed wall or
    inflow values survive unchanged.
    """
    strides = strides_of(fields.u)
    nx, nxny = strides[1], strides[2]
    bounds = K.interior_bounds(fields.shape, fields.ghost_width)
    ph = flat_view(p_hat_full)
    for comp, arr in enumerate((fields.u, fields.v, fields.w)):
        K.k_correct_face(flat_view(arr), ph, strides[comp],
                         dt / spacing[comp], nx, nxny, bounds)


def project_velocity_rho(fields, p_hat_full, spacing, dt, inv_rho_faces):
    """Two-phase projection: u <- u - dt (1/rho_face) grad(p_hat)."""
    strides = strides_of(fields.u)
    nx, nxny = strides[1], strides[2]
    bounds = K.interior_bounds(fields.shape, fields.ghost_width)
    ph = flat_view(p_hat_full)
    for comp, arr in enumerate((fields.u, fields.v, fields.w)):
        K.k_correct_face_rho(flat_view(arr), ph,
                             flat_view(inv_rho_faces[comp]), strides[comp],
                             dt / spacing[comp], nx, nxny, bounds)


def update_pressure(fields, p_hat_full, spacing, dt, lap_scratch):
    """p <- p + p_hat - nu dt lap(p_hat)/2 (cell-centred molecular nu)."""
    strides = strides_of(fields.p)
    nx, nxny = strides[1], strides[2]
    bounds = K.interior_bounds(fields.shape, fields.ghost_width)
    coef = tuple(1.0 / d ** 2 for d in spacing)
    K.k_laplace7(flat_view(p_hat_full), flat_view(lap_scratch), strides[0],
                 strides[1], strides[2], coef[0], coef[1], coef[2],
                 nx, nxny, bounds)
    g = fields.ghost_width
    nxl, nyl, nzl = fields.local_dims
    sl = (slice(g, g + nxl), slice(g, g + nyl), slice(g, g + nzl))
    fields.p[sl] += p_hat_full[sl] - 0.5 * dt * fields.nu[sl] * lap_scratch[sl]


# ---------------------------------------------------------------------------
# variable-density Poisson solve (two-phase runs)
# ---------------------------------------------------------------------------

class _LayeredPreconditioner:
    """Exact inverse of div(beta_bar(z) grad .) for a horizontally layered
    coefficient: DCT-II modes across x and y, a variable-coefficient
    tridiagonal solve along z per mode (Thomas sweeps vectorised over all
    modes).  Homogeneous Neumann everywhere; the singular mean mode is
    pinned to zero.
    """

    def __init__(self, beta_bar, spacing, dims):
        nx, ny, nz = dims
        dx, dy, dz = spacing
        lam_x = (2.0 * np.cos(np.pi * np.arange(nx) / nx) - 2.0) / dx ** 2
        lam_y = (2.0 * np.cos(np.pi * np.arange(ny) / ny) - 2.0) / dy ** 2
        lam = (lam_x[:, None] + lam_y[None, :]).reshape(-1)
        bz_face = 0.5 * (beta_bar[:-1] + beta_bar[1:]) / dz ** 2
        lower = np.concatenate(([0.0], bz_face))     # multiplies p_{k-1}
        upper = np.concatenate((bz_face, [0.0]))     # multiplies p_{k+1}
        diag = (-(lower + upper))[:, None] + beta_bar[:, None] * lam[None, :]
        self.lower = lower
        self.upper = upper
        self.dims = dims
        # Thomas factors for every non-singular mode (m >= 1); the mean
        # mode is handled by a small pinned dense solve plus projection,
        # which is its exact pseudo-inverse on consistent data
        cp = np.zeros_like(diag)
        denom = np.zeros_like(diag)
        denom[0] = diag[0]
        denom[0, 0] = 1.0  # placeholder; mode 0 never uses these factors
        for k in range(1, nz):
            cp[k - 1] = upper[k - 1] / denom[k - 1]
            denom[k] = diag[k] - lower[k] * cp[k - 1]
            denom[k, 0] = 1.0
        self._cp = cp
        self._denom = denom
        t0 = np.diag(-(lower + upper)) + np.diag(upper[:-1], 1) \
            + np.diag(lower[1:], -1)
        t0[0, :] = 0.0
        t0[0, 0] = 1.0
        self._mode0 = np.linalg.inv(t0)

    def apply(self, r):
        nx, ny, nz = self.dims
        rhat = sfft.dctn(r, type=2, axes=(0, 1), norm="ortho")
        modes = rhat.reshape(nx * ny, nz).T.copy()   # (nz, M)
        r0 = modes[:, 0].copy()
        modes[:, 0] = 0.0
        y = np.empty_like(modes)
        y[0] = modes[0] / self._denom[0]
        for k in range(1, nz):
            y[k] = (modes[k] - self.lower[k] * y[k - 1]) / self._denom[k]
        x = y
        for k in range(nz - 2, -1, -1):
            x[k] = y[k] - self._cp[k] * x[k + 1]
        r0 -= r0.mean()
        r0[0] = 0.0
        x0 = self._mode0 @ r0
        x[:, 0] = x0 - x0.mean()
        phat = x.T.reshape(nx, ny, nz)
        return sfft.idctn(phat, type=2, axes=(0, 1), norm="ortho")


class VariableDensityPressureSolver:
    """Preconditioned CG for div((1/rho) grad p) = div(u*)/dt (two-phase).

    A pressure correction applied as u <- u* - dt (1/rho) grad(p_hat) needs
    this variable-coefficient operator to yield a divergence-free field; a
    constant-coefficient solve gives air the inertia of water and turns the
    free surface into a rigid-lid internal mode (roughly a third of the
    gravity-wave speed in the solitary-wave tank).  Face coefficients match
    the projection's face densities exactly, and physical boundary faces
    carry zero coefficients, so prescribed boundary fluxes stay untouched.

    The problem is gathered to the master rank and solved by CG with an
    exactly-invertible horizontally-layered preconditioner (the z-profile
    of 1/rho), which captures the interface stratification; the handful of
    near-interface cells where the true coefficient deviates converge in a
    few tens of iterations.  Gathering also makes the result independent of
    the decomposition.
    """

    def __init__(self, plan, sub, transport, tolerance=1.0e-6,
                 max_iterations=400, profiler=None):
        self.plan = plan
        self.sub = sub
        self.transport = transport
        self.tolerance = float(tolerance)
        self.max_iterations = int(max_iterations)
        self.profiler = profiler
        self.last_cycles = 0
        self._phat = np.zeros(sub.local_dims, order="F")
        self._dims = plan.grid.dims
        self._spacing = plan.grid.spacing
        if transport.rank == 0:
            shape = tuple(n + 2 for n in self._dims)
            self._gp = np.zeros(shape, order="F")
            self._gout = np.zeros(shape, order="F")
            self._bx = np.zeros(shape, order="F")
            self._by = np.zeros(shape, order="F")
            self._bz = np.zeros(shape, order="F")

    def phat_interior(self):
        return self._phat

    # -- gathered pieces (master rank) -----------------------------------

    def _build_coefficients(self, rho):
        nx, ny, nz = self._dims
        dx, dy, dz = self._spacing
        for arr in (self._bx, self._by, self._bz):
            arr[...] = 0.0
        # interior faces only; boundary faces keep zero flux
        self._bx[1:nx, 1:ny + 1, 1:nz + 1] = \
            2.0 / (rho[:-1, :, :] + rho[1:, :, :]) / dx ** 2
        self._by[1:nx + 1, 1:ny, 1:nz + 1] = \
            2.0 / (rho[:, :-1, :] + rho[:, 1:, :]) / dy ** 2
        self._bz[1:nx + 1, 1:ny + 1, 1:nz] = \
            2.0 / (rho[:, :, :-1] + rho[:, :, 1:]) / dz ** 2
        beta_bar = np.mean(1.0 / rho, axis=(0, 1))
        return _LayeredPreconditioner(beta_bar, self._spacing, self._dims)

    def _apply(self, p_core):
        nx, ny, nz = self._dims
        self._gp[1:nx + 1, 1:ny + 1, 1:nz + 1] = p_core
        pf = flat_view(self._gp)
        of = flat_view(self._gout)
        strides = strides_of(self._gp)
        K.k_apply_var_poisson(pf, of, flat_view(self._bx),
                              flat_view(self._by), flat_view(self._bz),
                              strides[0], strides[1], strides[2],
                              strides[1], strides[2],
                              K.interior_bounds(self._gp.shape, 1))
        return self._gout[1:nx + 1, 1:ny + 1, 1:nz + 1]

    def _pcg(self, rhs, precond, dt):
        """CG on the negated (positive semidefinite) system; returns the
        iteration count, leaves the solution in self._sol."""
        x = np.zeros_like(rhs)
        r = -rhs  # solve (-A) x = -rhs, -A positive semidefinite
        r -= r.mean()
        resmax = np.max(np.abs(r))
        if dt * resmax <= self.tolerance:
            self._sol = x
            return 0
        iters = 0
        z = -precond.apply(r)
        p = z.copy()
        rz = float(np.sum(r * z))
        while True:
            if iters >= self.max_iterations:
                raise NoConvergence(
                    f"variable-density solve stuck at residual "
                    f"{dt * resmax:.3e} after {iters} CG iterations")
            ap = -self._apply(p)
            alpha = rz / float(np.sum(p * ap))
            x += alpha * p
            r -= alpha * ap
            r -= r.mean()
            resmax = np.max(np.abs(r))
            iters += 1
            if dt * resmax <= self.tolerance:
                break
            z = -precond.apply(r)
            rz_new = float(np.sum(r * z))
            p = z + (rz_new / rz) * p
            rz = rz_new
        self._sol = x - x.mean()
        return iters

    # -- collective entry point -------------------------------------------

    def solve(self, fields, dt, div_scratch):
        divergence_interior(fields, self._spacing, div_scratch)
        g = fields.ghost_width
        nx, ny, nz = fields.local_dims
        core = div_scratch[g:g + nx, g:g + ny, g:g + nz] / dt
        meta = [float(v) for v in self.sub.offset] + \
            [float(v) for v in fields.local_dims]
        payload = np.concatenate((meta, np.ascontiguousarray(core).ravel(),
                                  np.ascontiguousarray(
                                      fields.interior("rho")).ravel()))
        parts = gather_arrays(self.transport, payload, self.profiler)
        rank = self.transport.rank
        tag = pack_tag(3, 6, 0)
        if rank == 0:
            grhs = np.zeros(self._dims)
            grho = np.zeros(self._dims)
            metas = []
            for part in parts:
                off = tuple(int(v) for v in part[0:3])
                ld = tuple(int(v) for v in part[3:6])
                ncells = ld[0] * ld[1] * ld[2]
                metas.append((off, ld))
                sl = tuple(slice(off[a], off[a] + ld[a]) for a in range(3))
                grhs[sl] = part[6:6 + ncells].reshape(ld)
                grho[sl] = part[6 + ncells:6 + 2 * ncells].reshape(ld)
            precond = self._build_coefficients(grho)
            grhs -= grhs.mean()
            iters = self._pcg(grhs, precond, dt)
            for dest in range(1, self.transport.size):
                off, ld = metas[dest]
                sl = tuple(slice(off[a], off[a] + ld[a]) for a in range(3))
                self.transport.send(dest, tag,
                                    np.concatenate(([float(iters)],
                                                    self._sol[sl].ravel())))
            off, ld = metas[0]
            sl = tuple(slice(off[a], off[a] + ld[a]) for a in range(3))
            self._phat[...] = self._sol[sl]
        else:
            data = self.transport.recv(0, tag)
            iters = int(data[0])
            self._phat[...] = data[1:].reshape(fields.local_dims)
        self.last_cycles = iters
        return iters


# ---------------------------------------------------------------------------
# plain-array transfer operators (testing and reuse surface)
# ---------------------------------------------------------------------------

def restrict_field(fine: np.ndarray) -> np.ndarray:
    """Coarsen a plain (ghost-free) array by 8-cell averaging."""
    if any(n % 2 != 0 for n in fine.shape):
        raise DimensionNotEven(f"cannot halve shape {fine.shape}")
    f = fine
    return 0.125 * (f[0::2, 0::2, 0::2] + f[1::2, 0::2, 0::2]
                    + f[0::2, 1::2, 0::2] + f[1::2, 1::2, 0::2]
                    + f[0::2, 0::2, 1::2] + f[1::2, 0::2, 1::2]
                    + f[0::2, 1::2, 1::2] + f[1::2, 1::2, 1::2])


def prolong_field(coarse: np.ndarray, periodic: bool = True) -> np.ndarray:
    """Trilinear interpolation onto the doubled grid (plain arrays)."""
    cs = tuple(n + 2 for n in coarse.shape)
    cpad = np.zeros(cs, dtype=np.float64, order="F")
    cpad[1:-1, 1:-1, 1:-1] = coarse
    mode = "wrap" if periodic else "edge"
    cpad[...] = np.pad(coarse, 1, mode=mode)
    fine_shape = tuple(2 * n for n in coarse.shape)
    fpad = np.zeros(tuple(n + 2 for n in fine_shape), dtype=np.float64,
                    order="F")
    fnx, fnxny = strides_of(fpad)[1:]
    cnx, cnxny = strides_of(cpad)[1:]
    K.k_prolong_add(flat_view(np.asfortranarray(cpad)), flat_view(fpad),
                    fnx, fnxny, cnx, cnxny, 1, 1,
                    K.interior_bounds(fpad.shape, 1))
    return np.ascontiguousarray(fpad[1:-1, 1:-1, 1:-1])
