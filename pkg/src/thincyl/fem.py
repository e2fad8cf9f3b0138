"""P1 finite-element assembly for the Laplace eigenproblem.

Element integrals are exact closed forms (constant gradients and the
standard P1 mass matrix), so no quadrature error enters the pencil.
Dirichlet conditions are imposed by eliminating constrained rows and
columns, which keeps the stiffness/mass pair symmetric positive
(semi)definite.  Both matrices are stored as their upper triangles; the
stored triangle defines the operator, so symmetry is exact by
construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .domains import BoundaryTag
from .errors import ConfigError, DegenerateSystemError, DomainError, NumericError
from .mesh import Mesh

__all__ = [
    "BC",
    "AssembledSystem",
    "FieldVector",
    "assemble_system",
    "rayleigh_quotient",
    "interpolate_function",
    "write_matrix",
]

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


class BC(enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass
class FieldVector:
    """Values on the free degrees of freedom of one assembled system."""

    values: np.ndarray
    system: "AssembledSystem"

    def __post_init__(self):
        if len(self.values) != self.system.n_free:
            raise DomainError("field length does not match the free DOF count")


@dataclass
class AssembledSystem:
    """Stiffness/mass pencil on the free DOFs after Dirichlet elimination."""

    k_upper: sp.csr_array
    m_upper: sp.csr_array
    node_to_free: np.ndarray   # (n_nodes,), -1 where constrained
    free_nodes: np.ndarray     # (n_free,) mesh node index per DOF
    mesh: Mesh
    bc: dict
    _k_full: sp.csr_array = field(default=None, repr=False)
    _m_full: sp.csr_array = field(default=None, repr=False)

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)

    @staticmethod
    def _symmetrize(upper: sp.csr_array) -> sp.csr_array:
        diag = sp.diags_array(upper.diagonal())
        return (upper + upper.T - diag).tocsr()

    @property
    def k_full(self) -> sp.csr_array:
        if self._k_full is None:
            self._k_full = self._symmetrize(self.k_upper)
        return self._k_full

    @property
    def m_full(self) -> sp.csr_array:
        if self._m_full is None:
            self._m_full = self._symmetrize(self.m_upper)
        return self._m_full

    def free_coords(self) -> np.ndarray:
        return self.mesh.nodes[self.free_nodes]

    def expand(self, values: np.ndarray) -> np.ndarray:
        """Embed a free-DOF vector into a full nodal vector (zeros on Dirichlet)."""
        out = np.zeros(self.mesh.n_nodes)
        out[self.free_nodes] = values
        return out


def element_matrices(mesh: Mesh):
    """Exact P1 element stiffness and mass matrices, shapes (t, 3, 3)."""
    p = mesh.nodes[mesh.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    area = 0.5 * det
    grad = np.empty((len(det), 3, 2))
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        grad[:, k, 0] = (y[:, k1] - y[:, k2]) / det
        grad[:, k, 1] = (x[:, k2] - x[:, k1]) / det
    ke = np.einsum("tkd,tld->tkl", grad, grad) * area[:, None, None]
    me = _MASS_REF[None, :, :] * area[:, None, None]
    return ke, me


def dirichlet_nodes(mesh: Mesh, bc: dict) -> np.ndarray:
    """Nodes constrained by the assignment; junction nodes follow the
    stricter condition (Dirichlet wins when any incident edge is Dirichlet)."""
    present = {BoundaryTag(int(t)) for t in np.unique(mesh.boundary_tags)}
    missing = [t.label for t in present if t not in bc]
    if missing:
        raise ConfigError(f"no boundary condition assigned for tags: {', '.join(sorted(missing))}")
    mask = np.array([bc[BoundaryTag(int(t))] is BC.DIRICHLET for t in mesh.boundary_tags])
    return np.unique(mesh.boundary_edges[mask])


def assemble_system(mesh: Mesh, bc: dict) -> AssembledSystem:
    """Assemble the P1 stiffness/mass pair and eliminate Dirichlet DOFs."""
    constrained = dirichlet_nodes(mesh, bc)
    node_to_free = np.full(mesh.n_nodes, -1, dtype=np.int64)
    free_nodes = np.setdiff1d(np.arange(mesh.n_nodes), constrained)
    if free_nodes.size == 0:
        raise DegenerateSystemError("all nodes are constrained; the system is empty")
    node_to_free[free_nodes] = np.arange(free_nodes.size)

    ke, me = element_matrices(mesh)
    fr = node_to_free[mesh.triangles]  # (t, 3)
    rows, cols, kv, mv = [], [], [], []
    for a in range(3):
        for b in range(a, 3):
            fa, fb = fr[:, a], fr[:, b]
            keep = (fa >= 0) & (fb >= 0)
            i = np.minimum(fa[keep], fb[keep])
            j = np.maximum(fa[keep], fb[keep])
            rows.append(i)
            cols.append(j)
            kv.append(ke[keep, a, b])
            mv.append(me[keep, a, b])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    n = free_nodes.size
    k_upper = sp.coo_array((np.concatenate(kv), (rows, cols)), shape=(n, n)).tocsr()
    m_upper = sp.coo_array((np.concatenate(mv), (rows, cols)), shape=(n, n)).tocsr()
    return AssembledSystem(k_upper=k_upper, m_upper=m_upper, node_to_free=node_to_free,
                           free_nodes=free_nodes, mesh=mesh, bc=dict(bc))


def rayleigh_quotient(system: AssembledSystem, v) -> float:
    """(v'Kv)/(v'Mv) for a nonzero free-DOF vector."""
    vec = v.values if isinstance(v, FieldVector) else np.asarray(v, dtype=float)
    if not np.any(vec):
        raise DomainError("Rayleigh quotient of the zero vector")
    kv = system.k_full @ vec
    mv = system.m_full @ vec
    return float((vec @ kv) / (vec @ mv))


def interpolate_function(mesh: Mesh, system: AssembledSystem, f) -> FieldVector:
    """Nodal interpolant of ``f(y, z)`` restricted to the free DOFs."""
    coords = system.free_coords()
    values = np.asarray(f(coords[:, 0], coords[:, 1]), dtype=float)
    if values.shape != (system.n_free,):
        values = np.broadcast_to(values, (system.n_free,)).astype(float)
    bad = np.nonzero(~np.isfinite(values))[0]
    if bad.size:
        node = int(system.free_nodes[bad[0]])
        raise NumericError(f"non-finite interpolation value at node {node} "
                           f"(y={mesh.nodes[node, 0]:.6g}, z={mesh.nodes[node, 1]:.6g})")
    return FieldVector(values=values, system=system)


def write_matrix(upper: sp.csr_array, stream) -> None:
    """Write a stored upper triangle in the coordinate text format.

    One entry per line, 0-based ``row col value`` with row <= col; the
    full matrix is the symmetric completion.
    """
    coo = upper.tocoo()
    stream.write("# thincyl matrix 1\n")
    stream.write(f"size {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for i, j, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{i} {j} {float(v)!r}\n")
