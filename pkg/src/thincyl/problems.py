"""Problem builders tying geometry, assembly and the eigensolver together.

Includes the analytic references: the separated spectrum of the straight
thin rectangle, the transverse eigenpairs of the unit-interval cross
section (and of its Dirichlet/Neumann half used by symmetry reductions),
and the harmonic-oscillator limit of the narrowing strip.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domains import (
    BoundaryTag,
    DistortedCylinder,
    DomainSpec,
    Dumbbell,
    HalfSemiCylinder,
    SemiCylinder,
    StraightCylinder,
    Trapezoid,
)
from .eigensolve import DEFAULT_SEED, EigenSolution, smallest_eigenpairs
from .errors import DomainError, GeometryError, PreconditionError
from .fem import BC, AssembledSystem, assemble_system
from .mesh import Mesh, build_mesh, refine_uniform, validate_mesh
from .profiles import Profile

__all__ = [
    "IntervalSection",
    "PolygonSection",
    "IntervalEigens",
    "HalfIntervalEigens",
    "PolygonEigens",
    "cross_section_eigens",
    "half_interval_eigens",
    "SpectrumResult",
    "TrappedVerdict",
    "SemiCylinderResult",
    "solve_domain",
    "solve_thin",
    "solve_semicylinder",
    "StraightMode",
    "reference_straight",
    "TrapezoidLimit",
    "reference_trapezoid_limit",
    "triangulate_polygon",
]

TRUNCATION_CAVEAT = ("truncated eigenvalues at or above the transverse cutoff "
                     "discretize the continuous spectrum and are not trapped modes")


# ---------------------------------------------------------------------------
# cross sections

@dataclass(frozen=True)
class IntervalSection:
    """The unit interval cross-section (0, 1); eigenpairs are analytic."""


@dataclass(frozen=True)
class PolygonSection:
    """A simple counterclockwise polygon; eigenpairs come from Dirichlet FEM."""

    vertices: tuple

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise DomainError("polygon needs at least 3 vertices")


@dataclass
class IntervalEigens:
    """Dirichlet eigenpairs of the unit interval, mu_p = (p*pi)^2."""

    count: int

    @property
    def eigenvalues(self) -> np.ndarray:
        p = np.arange(1, self.count + 1)
        return (p * np.pi) ** 2

    def phi(self, p: int, eta):
        return np.sqrt(2.0) * np.sin(p * np.pi * np.asarray(eta, dtype=float))

    def dphi(self, p: int, eta):
        return np.sqrt(2.0) * p * np.pi * np.cos(p * np.pi * np.asarray(eta, dtype=float))


@dataclass
class HalfIntervalEigens:
    """Eigenpairs of the halved interval (0, 1/2) with a Dirichlet cut.

    The cut at s = 0 models the symmetry plane; the outer end s = 1/2
    keeps the natural condition, so mu_p = ((2p-1)*pi)^2 and the first
    eigenfunction is 2*sin(pi*s), unit-normalized on (0, 1/2).
    """

    count: int

    @property
    def eigenvalues(self) -> np.ndarray:
        p = np.arange(1, self.count + 1)
        return ((2 * p - 1) * np.pi) ** 2

    def phi(self, p: int, s):
        return 2.0 * np.sin((2 * p - 1) * np.pi * np.asarray(s, dtype=float))

    def dphi(self, p: int, s):
        w = (2 * p - 1) * np.pi
        return 2.0 * w * np.cos(w * np.asarray(s, dtype=float))


@dataclass
class PolygonEigens:
    """FEM eigenpairs of a polygonal cross-section with Dirichlet boundary."""

    eigenvalues: np.ndarray
    mesh: Mesh
    system: AssembledSystem
    nodal_modes: np.ndarray   # (n_nodes, k), includes constrained zeros
    solution: EigenSolution


def half_interval_eigens(k: int) -> HalfIntervalEigens:
    if k < 1:
        raise DomainError("k must be at least 1")
    return HalfIntervalEigens(count=k)


def triangulate_polygon(vertices, refinements: int = 0) -> Mesh:
    """Ear-clipping triangulation of a simple CCW polygon, then uniform
    refinement; every boundary edge is tagged lateral."""
    verts = np.asarray(vertices, dtype=float)
    n = len(verts)
    area2 = 0.0
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        area2 += x0 * y1 - x1 * y0
    if area2 <= 0:
        raise GeometryError("polygon must be counterclockwise and non-degenerate")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def inside(p, a, b, c):
        # closed triangle: a vertex on an ear edge makes the ear unsafe
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        return d1 >= -1e-14 and d2 >= -1e-14 and d3 >= -1e-14

    remaining = list(range(n))
    triangles = []
    guard = 0
    while len(remaining) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise GeometryError("polygon is not simple; ear clipping failed")
        clipped = False
        for pos in range(len(remaining)):
            ia = remaining[pos - 1]
            ib = remaining[pos]
            ic = remaining[(pos + 1) % len(remaining)]
            if cross(verts[ia], verts[ib], verts[ic]) <= 1e-14:
                continue
            if any(inside(verts[j], verts[ia], verts[ib], verts[ic])
                   for j in remaining if j not in (ia, ib, ic)):
                continue
            triangles.append((ia, ib, ic))
            remaining.pop(pos)
            clipped = True
            break
        if not clipped:
            raise GeometryError("polygon is not simple; ear clipping failed")
    triangles.append(tuple(remaining))
    tris = np.array(triangles, dtype=np.int64)
    edges = np.array([[i, (i + 1) % n] for i in range(n)], dtype=np.int64)
    edges = np.sort(edges, axis=1)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    mesh = Mesh(nodes=verts.copy(), triangles=tris, boundary_edges=edges[order],
                boundary_tags=np.full(n, int(BoundaryTag.LATERAL))[order],
                resolution=(0, 0))
    validate_mesh(mesh)
    for _ in range(refinements):
        mesh = refine_uniform(mesh)
    return mesh


def cross_section_eigens(spec, k: int, resolution: int = 4,
                         tol: float = 1e-10, seed: int = DEFAULT_SEED):
    """Transverse eigenpairs of the cross-section Dirichlet problem.

    For the interval the pairs are analytic; a polygon is meshed by ear
    clipping plus ``resolution`` uniform refinements and solved by FEM.
    """
    if k < 1:
        raise DomainError("k must be at least 1")
    if isinstance(spec, IntervalSection):
        return IntervalEigens(count=k)
    if isinstance(spec, PolygonSection):
        mesh = triangulate_polygon(spec.vertices, refinements=resolution)
        system = assemble_system(mesh, {BoundaryTag.LATERAL: BC.DIRICHLET})
        sol = smallest_eigenpairs(system.k_full, system.m_full, k=k, tol=tol, seed=seed)
        modes = np.stack([system.expand(sol.eigenvectors[:, j]) for j in range(k)], axis=1)
        return PolygonEigens(eigenvalues=sol.eigenvalues, mesh=mesh, system=system,
                             nodal_modes=modes, solution=sol)
    raise DomainError(f"unsupported cross-section {type(spec).__name__}")


# ---------------------------------------------------------------------------
# domain solves

@dataclass
class SpectrumResult:
    """Eigenpairs of one assembled domain plus solve metadata."""

    spec: DomainSpec
    bc: dict
    resolution: tuple
    mesh: Mesh
    system: AssembledSystem
    solution: EigenSolution
    wall_time: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.solution.eigenvalues

    def nodal_mode(self, j: int) -> np.ndarray:
        return self.system.expand(self.solution.eigenvectors[:, j])

    def diagnostics(self) -> dict:
        d = self.solution.diagnostics()
        d["wall_time"] = self.wall_time
        d["n_free"] = self.system.n_free
        d["resolution"] = list(self.resolution)
        return d


def solve_domain(spec: DomainSpec, bc: dict, resolution, k: int,
                 tol: float = 1e-10, shift: Optional[float] = None,
                 seed: int = DEFAULT_SEED, mesh: Optional[Mesh] = None) -> SpectrumResult:
    """Mesh, assemble and solve; the workhorse behind the named solvers."""
    t0 = time.perf_counter()
    if mesh is None:
        mesh = build_mesh(spec, resolution)
    system = assemble_system(mesh, bc)
    if shift is None:
        present = {BoundaryTag(int(t)) for t in np.unique(mesh.boundary_tags)}
        any_dirichlet = any(bc[t] is BC.DIRICHLET for t in present)
        shift = 0.0 if any_dirichlet else -1.0
    solution = smallest_eigenpairs(system.k_full, system.m_full, k=k, tol=tol,
                                   shift=shift, seed=seed)
    return SpectrumResult(spec=spec, bc=bc, resolution=mesh.resolution, mesh=mesh,
                          system=system, solution=solution,
                          wall_time=time.perf_counter() - t0)


_THIN_KINDS = ("mixed", "all_dirichlet", "all_neumann", "half_neumann")


def thin_bc(bc_kind: str) -> dict:
    if bc_kind == "mixed":
        return {BoundaryTag.LATERAL: BC.DIRICHLET,
                BoundaryTag.END_PLUS: BC.NEUMANN,
                BoundaryTag.END_MINUS: BC.NEUMANN}
    if bc_kind == "all_dirichlet":
        return {t: BC.DIRICHLET for t in BoundaryTag}
    if bc_kind == "all_neumann":
        return {t: BC.NEUMANN for t in BoundaryTag}
    if bc_kind == "half_neumann":
        bc = {t: BC.NEUMANN for t in BoundaryTag}
        bc[BoundaryTag.SYMMETRY] = BC.DIRICHLET
        return bc
    raise DomainError(f"unknown thin bc kind {bc_kind!r}; expected one of {_THIN_KINDS}")


def solve_thin(spec, bc_kind: str, resolution, k: int, tol: float = 1e-10,
               seed: int = DEFAULT_SEED, mesh: Optional[Mesh] = None) -> SpectrumResult:
    """Solve a thin bounded domain under one of the named BC assignments."""
    if not isinstance(spec, (StraightCylinder, DistortedCylinder, Dumbbell, Trapezoid)):
        raise DomainError("solve_thin expects a bounded thin domain spec")
    bc = thin_bc(bc_kind)
    if bc_kind == "half_neumann":
        probe = mesh if mesh is not None else build_mesh(spec, resolution)
        if int(BoundaryTag.SYMMETRY) not in np.unique(probe.boundary_tags):
            raise PreconditionError("half_neumann needs a symmetry-tagged face "
                                    "(use a half='eta' domain)")
        mesh = probe
    return solve_domain(spec, bc, resolution, k, tol=tol, seed=seed, mesh=mesh)


@dataclass
class TrappedVerdict:
    eigenvalue: float
    cutoff: float
    margin: float
    trapped: bool
    caveat: str = TRUNCATION_CAVEAT


@dataclass
class SemiCylinderResult:
    """Truncated-channel spectrum with below-cutoff verdicts."""

    result: SpectrumResult
    cutoff: float
    margin: float
    verdicts: list

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.result.eigenvalues

    @property
    def trapped_eigenvalues(self) -> np.ndarray:
        return np.array([v.eigenvalue for v in self.verdicts if v.trapped])


_SEMI_KINDS = ("mixed", "all_dirichlet", "half_mixed")


def semicylinder_bc(bc_kind: str, truncation_bc: BC = BC.DIRICHLET) -> dict:
    if bc_kind == "mixed":
        return {BoundaryTag.LATERAL: BC.DIRICHLET,
                BoundaryTag.END_PLUS: BC.NEUMANN,
                BoundaryTag.ARTIFICIAL: truncation_bc}
    if bc_kind == "all_dirichlet":
        bc = {t: BC.DIRICHLET for t in BoundaryTag}
        bc[BoundaryTag.ARTIFICIAL] = truncation_bc
        return bc
    if bc_kind == "half_mixed":
        return {BoundaryTag.SYMMETRY: BC.DIRICHLET,
                BoundaryTag.LATERAL: BC.NEUMANN,
                BoundaryTag.END_PLUS: BC.NEUMANN,
                BoundaryTag.ARTIFICIAL: truncation_bc}
    raise DomainError(f"unknown channel bc kind {bc_kind!r}; expected one of {_SEMI_KINDS}")


def solve_semicylinder(spec, bc_kind: str, resolution, k: int,
                       truncation_bc: BC = BC.DIRICHLET,
                       margin_factor: float = 1e-3, tol: float = 1e-10,
                       seed: int = DEFAULT_SEED,
                       mesh: Optional[Mesh] = None) -> SemiCylinderResult:
    """Solve the truncated channel and flag eigenvalues below the cutoff.

    The cutoff is the first transverse eigenvalue of the matching
    cross-section problem (the halved interval for ``half_mixed``); an
    eigenvalue counts as trapped only when it lies below the cutoff by
    more than ``margin_factor * cutoff``, since the truncated problem also
    discretizes the continuous spectrum just above the cutoff.
    """
    if isinstance(spec, HalfSemiCylinder):
        if bc_kind != "half_mixed":
            raise PreconditionError("half channels use the half_mixed assignment")
        cutoff = float(half_interval_eigens(1).eigenvalues[0])
    elif isinstance(spec, SemiCylinder):
        if bc_kind == "half_mixed":
            raise PreconditionError("half_mixed needs a half-channel spec")
        cutoff = float(cross_section_eigens(IntervalSection(), 1).eigenvalues[0])
    else:
        raise DomainError("solve_semicylinder expects a truncated channel spec")
    bc = semicylinder_bc(bc_kind, truncation_bc)
    res = solve_domain(spec, bc, resolution, k, tol=tol, seed=seed, mesh=mesh)
    margin = margin_factor * cutoff
    verdicts = [TrappedVerdict(eigenvalue=float(lam), cutoff=cutoff, margin=margin,
                               trapped=bool(lam < cutoff - margin))
                for lam in res.eigenvalues]
    return SemiCylinderResult(result=res, cutoff=cutoff, margin=margin, verdicts=verdicts)


# ---------------------------------------------------------------------------
# analytic references

@dataclass
class StraightMode:
    """Separated eigenpair of the straight thin rectangle (mixed problem)."""

    h: float
    p: int
    q: int
    eigenvalue: float

    def __call__(self, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        norm = np.sqrt(2.0 / (self.h * (2.0 if self.q == 0 else 1.0)))
        return norm * np.sin(self.p * np.pi * y / self.h) * \
            np.cos(0.5 * self.q * np.pi * (z + 1.0))


def reference_straight(h: float, p: int, q: int) -> StraightMode:
    """Mixed-problem eigenpair of the straight rectangle (0,h) x (-1,1).

    ``p >= 1`` counts transverse half-waves, ``q >= 0`` axial half-waves;
    q = 0 (constant along the axis) satisfies the natural end conditions
    and is part of the discrete spectrum, so it is accepted here.
    The eigenfunction is unit-normalized over the rectangle.
    """
    if h <= 0 or p < 1 or q < 0:
        raise DomainError("need h > 0, p >= 1, q >= 0")
    mu_p = (p * np.pi) ** 2
    lam = mu_p / h ** 2 + (np.pi * q) ** 2 / 4.0
    return StraightMode(h=h, p=p, q=q, eigenvalue=float(lam))


@dataclass
class TrapezoidLimit:
    """Harmonic-oscillator limit of the narrowing-strip spectrum."""

    leading: float            # pi^2 / H(0)^2, coefficient of h^-2
    curvature: float          # -H''(0) from finite differences
    oscillator_coeff: float   # pi^2 * curvature / H(0)^3
    index: int
    correction: float         # sqrt(oscillator_coeff) * (2 j + 1)


def reference_trapezoid_limit(width_profile: Profile, j: int,
                              fd_step: float = 0.05) -> TrapezoidLimit:
    """Leading term and first-order correction for the narrowing strip.

    The width profile (over z via eta = (z+1)/2) must have a strict
    interior maximum at z = 0 with positive curvature ``b = -H''(0)``,
    checked by central finite differences with step ``fd_step`` in z.
    The transverse confinement contributes its cutoff factor pi^2 to the
    effective oscillator, so the correction for mode ``j`` is
    ``sqrt(pi^2 * b / H(0)^3) * (2 j + 1)``.
    """
    if j < 0:
        raise DomainError("mode index must be >= 0")
    if not 0.0 < fd_step < 0.5:
        raise DomainError("finite-difference step must lie in (0, 1/2)")
    at_z = lambda z: float(width_profile((z + 1.0) / 2.0))
    h0 = at_z(0.0)
    hp = at_z(fd_step)
    hm = at_z(-fd_step)
    b = (2.0 * h0 - hp - hm) / fd_step ** 2
    if h0 <= hp or h0 <= hm or b <= 1e-10:
        raise PreconditionError(
            "width profile needs a strict interior maximum at z = 0 with "
            f"positive curvature (got b = {b:.3e}); no localization predicted")
    coeff = np.pi ** 2 * b / h0 ** 3
    return TrapezoidLimit(leading=float(np.pi ** 2 / h0 ** 2), curvature=float(b),
                          oscillator_coeff=float(coeff), index=j,
                          correction=float(np.sqrt(coeff) * (2 * j + 1)))
