"""Global Cartesian staggered grid, balanced decomposition, and field storage.

Staggering convention: ``u[i, j, k]`` holds the x-velocity on the face
between cells ``i`` and ``i + 1`` (and analogously ``v``/``w`` for y/z),
while ``p``, ``phi`` and the material fields live at cell centres.  Every
array is allocated with ``ghost_width`` extra layers on all six sides and is
Fortran-ordered so the x index varies fastest in memory; stencil kernels
address neighbours through flat-index offsets only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GhostTooWide, NonDivisible

X, Y, Z = 0, 1, 2
LOW, HIGH = 0, 1

PERIODIC = "periodic"
NO_SLIP = "no_slip"
SLIP = "slip"
LID = "lid"
INFLOW = "inflow"
OUTFLOW = "outflow"

BOUNDARY_KINDS = (PERIODIC, NO_SLIP, SLIP, LID, INFLOW, OUTFLOW)

#: ghost width required by each flux scheme (stencil half width plus one)
SCHEME_GHOSTS = {"cd2": 2, "cd4": 3, "weno5": 4}


def face_index(axis: int, side: int) -> int:
    return 2 * axis + side


@dataclass(frozen=True)
class GlobalGrid:
    """Uniform Cartesian grid: cell counts, per-direction spacing, origin."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.dims) != 3 or len(self.spacing) != 3:
            raise ValueError("dims and spacing must have three entries")
        if any(int(n) < 4 for n in self.dims):
            raise ValueError(f"all grid dims must be >= 4, got {self.dims}")
        if any(d <= 0.0 for d in self.spacing):
            raise ValueError(f"all spacings must be positive, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "spacing", tuple(float(d) for d in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def cell_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def extent(self, axis: int) -> float:
        return self.dims[axis] * self.spacing[axis]


@dataclass(frozen=True)
class SubdomainSpec:
    """One worker's share of the global grid.

    ``neighbors[face]`` is the adjacent rank across that face (the rank
    itself for a periodic self-wrap) or ``None`` when the face lies on a
    physical boundary.  ``offset`` is the global index of local cell 0.
    """

    rank: int
    coords: tuple[int, int, int]
    local_dims: tuple[int, int, int]
    offset: tuple[int, int, int]
    neighbors: tuple
    ghost_width: int


@dataclass(frozen=True)
class DecompositionPlan:
    """Balanced partition of a grid over a worker topology."""

    grid: GlobalGrid
    topology: tuple[int, int, int]
    ghost_width: int
    boundary_kinds: tuple[str, str, str, str, str, str]
    subdomains: tuple = field(repr=False, default=())

    @property
    def n_workers(self) -> int:
        tx, ty, tz = self.topology
        return tx * ty * tz

    @property
    def local_dims(self) -> tuple[int, int, int]:
        return tuple(n // t for n, t in zip(self.grid.dims, self.topology))

    def rank_of(self, coords) -> int:
        cx, cy, cz = coords
        tx, ty, _ = self.topology
        return cx + tx * (cy + ty * cz)


def build_decomposition(grid: GlobalGrid, topology, ghost_width: int,
                        boundary_kinds=None) -> DecompositionPlan:
    """Partition ``grid`` into a ``topology`` of uniform subdomains.

    Rejects any dimension that does not divide evenly (the partition is
    balanced by construction, never padded) and any subdomain too small to
    host ``ghost_width`` ghost layers on both sides.
    """
    topology = tuple(int(t) for t in topology)
    if any(t < 1 for t in topology):
        raise ValueError(f"topology counts must be >= 1, got {topology}")
    if ghost_width not in (2, 3, 4):
        raise ValueError(f"ghost_width must be one of 2, 3, 4, got {ghost_width}")
    if boundary_kinds is None:
        boundary_kinds = (PERIODIC,) * 6
    boundary_kinds = tuple(boundary_kinds)
    if len(boundary_kinds) != 6:
        raise ValueError("boundary_kinds needs one entry per face (6)")
    for kind in boundary_kinds:
        if kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {kind!r}")
    for axis in range(3):
        lo, hi = boundary_kinds[2 * axis], boundary_kinds[2 * axis + 1]
        if (lo == PERIODIC) != (hi == PERIODIC):
            raise ValueError(f"axis {axis}: periodic faces must come in pairs")

    local = []
    for axis in range(3):
        n, t = grid.dims[axis], topology[axis]
        if n % t != 0:
            raise NonDivisible(
                f"grid dim {n} along axis {axis} not divisible by topology {t}")
        nl = n // t
        if nl < 2 * ghost_width:
            raise GhostTooWide(
                f"local dim {nl} along axis {axis} cannot hold 2*{ghost_width} ghosts")
        local.append(nl)
    local = tuple(local)

    plan = DecompositionPlan(grid, topology, ghost_width, boundary_kinds)
    subs = []
    tx, ty, tz = topology
    for cz in range(tz):
        for cy in range(ty):
            for cx in range(tx):
                coords = (cx, cy, cz)
                neighbors = []
                for axis in range(3):
                    for side in (LOW, HIGH):
                        step = -1 if side == LOW else 1
                        c = list(coords)
                        c[axis] += step
                        if 0 <= c[axis] < topology[axis]:
                            neighbors.append(plan.rank_of(c))
                        elif boundary_kinds[face_index(axis, side)] == PERIODIC:
                            c[axis] %= topology[axis]
                            neighbors.append(plan.rank_of(c))
                        else:
                            neighbors.append(None)
                offset = tuple(coords[a] * local[a] for a in range(3))
                subs.append(SubdomainSpec(
                    rank=plan.rank_of(coords),
                    coords=coords,
                    local_dims=local,
                    offset=offset,
                    neighbors=tuple(neighbors),
                    ghost_width=ghost_width,
                ))
    subs.sort(key=lambda s: s.rank)
    return DecompositionPlan(grid, topology, ghost_width, boundary_kinds,
                             tuple(subs))


def message_cell_count(plan: DecompositionPlan, axis: int) -> int:
    """Ghost cells exchanged per field across one subdomain face.

    This is the accounting figure ``n_g * n_xi * n_xj`` built from the local
    face dimensions; it does not depend on which neighbour sits across the
    face.  The transport may pad slabs with ghost-extended columns so corner
    data propagates through sequential per-axis passes (see exchange module).
    """
    nl = plan.local_dims
    perp = [nl[a] for a in range(3) if a != axis]
    return plan.ghost_width * perp[0] * perp[1]


def alloc_field(local_dims, ghost_width: int) -> np.ndarray:
    """Zero-filled local array with ghosts, Fortran layout (x fastest)."""
    shape = tuple(n + 2 * ghost_width for n in local_dims)
    return np.zeros(shape, dtype=np.float64, order="F")


def flat_view(a: np.ndarray) -> np.ndarray:
    """1-D view of an F-ordered array; index = i + nx*(j + ny*k)."""
    if not a.flags.f_contiguous:
        raise ValueError("field arrays must stay Fortran-contiguous")
    return a.reshape(-1, order="F")


def strides_of(a: np.ndarray) -> tuple[int, int, int]:
    nx, ny, _ = a.shape
    return 1, nx, nx * ny


class StaggeredField:
    """Per-worker field storage: face velocities plus cell-centred scalars.

    Velocity components sit on their own faces (see module docstring), all
    arrays share one padded shape so stencils can mix them by flat offsets.
    ``phi``/``rho``/``mu`` are allocated only for two-phase runs.
    """

    VELOCITIES = ("u", "v", "w")
    CENTERED = ("p", "nut", "nu", "phi", "rho", "mu")

    def __init__(self, local_dims, ghost_width: int, two_phase: bool = False):
        self.local_dims = tuple(int(n) for n in local_dims)
        self.ghost_width = int(ghost_width)
        self.two_phase = bool(two_phase)
        self.u = alloc_field(local_dims, ghost_width)
        self.v = alloc_field(local_dims, ghost_width)
        self.w = alloc_field(local_dims, ghost_width)
        self.p = alloc_field(local_dims, ghost_width)
        self.nut = alloc_field(local_dims, ghost_width)
        self.nu = alloc_field(local_dims, ghost_width)
        if two_phase:
            self.phi = alloc_field(local_dims, ghost_width)
            self.rho = alloc_field(local_dims, ghost_width)
            self.mu = alloc_field(local_dims, ghost_width)
        else:
            self.phi = None
            self.rho = None
            self.mu = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.u.shape

    def interior(self, name: str) -> np.ndarray:
        """View of the owned (non-ghost) block of one component."""
        g = self.ghost_width
        nx, ny, nz = self.local_dims
        return getattr(self, name)[g:g + nx, g:g + ny, g:g + nz]

    def names(self):
        out = list(self.VELOCITIES) + ["p", "nut", "nu"]
        if self.two_phase:
            out += ["phi", "rho", "mu"]
        return out
