import io

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import quad

from thincyl.domains import BoundaryTag, SemiCylinder, StraightCylinder
from thincyl.errors import ConfigError, DegenerateSystemError, DomainError, NumericError
from thincyl.fem import (
    BC,
    assemble_system,
    interpolate_function,
    rayleigh_quotient,
    write_matrix,
)
from thincyl.mesh import Mesh, build_mesh, refine_uniform, validate_mesh
from thincyl.profiles import fourier_profile, zero_profile

ALL_N = {t: BC.NEUMANN for t in BoundaryTag}
ALL_D = {t: BC.DIRICHLET for t in BoundaryTag}
MIXED = {BoundaryTag.LATERAL: BC.DIRICHLET,
         BoundaryTag.END_PLUS: BC.NEUMANN,
         BoundaryTag.END_MINUS: BC.NEUMANN}


def reference_triangle_mesh():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2]])
    edges = np.array([[0, 1], [1, 2], [0, 2]])
    tags = np.full(3, int(BoundaryTag.LATERAL))
    mesh = Mesh(nodes=nodes, triangles=triangles, boundary_edges=edges,
                boundary_tags=tags, resolution=(1, 1))
    validate_mesh(mesh)
    return mesh


def unit_square_mesh():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    edges = np.array([[0, 1], [1, 2], [2, 3], [0, 3]])
    tags = np.full(4, int(BoundaryTag.LATERAL))
    return Mesh(nodes=nodes, triangles=triangles, boundary_edges=edges,
                boundary_tags=tags, resolution=(1, 1))


def test_reference_triangle_element_matrices():
    sys = assemble_system(reference_triangle_mesh(), ALL_N)
    m = sys.m_full.toarray()
    k = sys.k_full.toarray()
    assert np.allclose(m, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0, atol=1e-15)
    assert np.allclose(k, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)


def test_unit_square_dirichlet_interior_node_and_eigenvalue():
    mesh = refine_uniform(unit_square_mesh())
    sys = assemble_system(mesh, ALL_D)
    assert sys.n_free == 1
    lam_prev = None
    errs = []
    for _ in range(4):
        sys = assemble_system(mesh, ALL_D)
        lam = float(sla.eigh(sys.k_full.toarray(), sys.m_full.toarray(),
                             eigvals_only=True)[0])
        errs.append(lam - 2.0 * np.pi ** 2)
        lam_prev = lam
        mesh = refine_uniform(mesh)
    assert all(e > 0 for e in errs)  # discrete eigenvalues bound from above
    assert errs[-2] / errs[-1] == pytest.approx(4.0, rel=0.2)
    assert lam_prev == pytest.approx(2.0 * np.pi ** 2, rel=2e-2)


def test_neumann_stiffness_rows_sum_to_zero():
    mesh = build_mesh(StraightCylinder(0.5), (4, 12))
    sys = assemble_system(mesh, ALL_N)
    rows = np.asarray(sys.k_full.sum(axis=1)).ravel()
    assert np.max(np.abs(rows)) < 1e-12


def test_stiffness_exactly_symmetric():
    mesh = build_mesh(StraightCylinder(0.4), (3, 9))
    sys = assemble_system(mesh, ALL_N)
    diff = (sys.k_full - sys.k_full.T).tocoo()
    assert diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0


def test_mass_positive_definite_on_random_vectors():
    mesh = build_mesh(StraightCylinder(0.3), (4, 16))
    sys = assemble_system(mesh, MIXED)
    rng = np.random.default_rng(42)
    for _ in range(100):
        v = rng.standard_normal(sys.n_free)
        assert v @ (sys.m_full @ v) > 0.0


def test_rayleigh_quotient_basics():
    mesh = build_mesh(StraightCylinder(0.5), (4, 12))
    sys = assemble_system(mesh, ALL_N)
    ones = np.ones(sys.n_free)
    assert abs(rayleigh_quotient(sys, ones)) < 1e-12
    with pytest.raises(DomainError):
        rayleigh_quotient(sys, np.zeros(sys.n_free))
    rng = np.random.default_rng(3)
    lam_min = float(sla.eigh(sys.k_full.toarray(), sys.m_full.toarray(),
                             eigvals_only=True)[0])
    for _ in range(20):
        v = rng.standard_normal(sys.n_free)
        assert rayleigh_quotient(sys, v) >= lam_min - 1e-10


def test_interpolation_identity_and_errors():
    h = 0.25
    mesh = build_mesh(StraightCylinder(h), (4, 16))
    sys = assemble_system(mesh, MIXED)
    const = interpolate_function(mesh, assemble_system(mesh, ALL_N), lambda y, z: np.ones_like(y))
    assert np.all(const.values == 1.0)
    f = lambda y, z: np.sin(np.pi * y / h)
    interp = interpolate_function(mesh, sys, f)
    coords = sys.free_coords()
    assert np.max(np.abs(interp.values - f(coords[:, 0], coords[:, 1]))) < 1e-15
    assert np.all(np.abs(interp.values) > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(NumericError):
            interpolate_function(mesh, sys, lambda y, z: y / (z - z))


def test_trial_function_quotient_matches_closed_form():
    # interpolated exp(-eps*zeta)*sqrt(2)*sin(pi*eta) on a flat truncated
    # channel reproduces the exact quotient (pi^2 + eps^2 for H = 0) up to
    # O(mesh^2) + O(exp(-2 eps L))
    eps = 0.5
    L = 12.0
    spec = SemiCylinder(zero_profile(), L)
    bc = {BoundaryTag.LATERAL: BC.DIRICHLET, BoundaryTag.END_PLUS: BC.NEUMANN,
          BoundaryTag.ARTIFICIAL: BC.DIRICHLET}
    exact = np.pi ** 2 + eps ** 2
    errs = []
    for na in (12, 24):
        mesh = build_mesh(spec, (na, na * 12))
        sys = assemble_system(mesh, bc)
        w = interpolate_function(
            mesh, sys,
            lambda e, zeta: np.exp(-eps * zeta) * np.sqrt(2) * np.sin(np.pi * e))
        errs.append(rayleigh_quotient(sys, w) - exact)
    # truncation bias exp(-2 eps L) ~ 3e-4 is negligible next to mesh error
    assert abs(errs[1]) < 5e-3 * exact
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)


def test_trial_function_quotient_matches_quadrature_for_profile():
    eps = 0.6
    L = 8.0
    prof = fourier_profile(0.0, [-1.0])
    spec = SemiCylinder(prof, L)
    mesh = build_mesh(spec, (32, 32 * 8))
    bc = {BoundaryTag.LATERAL: BC.DIRICHLET, BoundaryTag.END_PLUS: BC.NEUMANN,
          BoundaryTag.ARTIFICIAL: BC.DIRICHLET}
    sys = assemble_system(mesh, bc)
    w = interpolate_function(
        mesh, sys,
        lambda e, zeta: np.exp(-eps * zeta) * np.sqrt(2) * np.sin(np.pi * e))
    phi2 = lambda e: 2.0 * np.sin(np.pi * e) ** 2
    dphi2 = lambda e: 2.0 * np.pi ** 2 * np.cos(np.pi * e) ** 2
    num = quad(lambda e: np.exp(2 * eps * prof(e)) * (dphi2(e) + eps ** 2 * phi2(e)), 0, 1)[0]
    den = quad(lambda e: np.exp(2 * eps * prof(e)) * phi2(e), 0, 1)[0]
    exact = num / den
    assert rayleigh_quotient(sys, w) == pytest.approx(exact, rel=5e-3)


def test_unassigned_tag_raises_config_error():
    mesh = build_mesh(StraightCylinder(0.5), (2, 4))
    with pytest.raises(ConfigError):
        assemble_system(mesh, {BoundaryTag.LATERAL: BC.DIRICHLET})


def test_all_dirichlet_trivial_mesh_degenerates():
    with pytest.raises(DegenerateSystemError):
        assemble_system(unit_square_mesh(), ALL_D)


def test_junction_nodes_take_dirichlet():
    mesh = build_mesh(StraightCylinder(0.5), (2, 4))
    sys = assemble_system(mesh, MIXED)
    # corner nodes sit on both a lateral (Dirichlet) and an end (Neumann)
    # edge and must be eliminated
    corners = [i for i, (y, z) in enumerate(mesh.nodes)
               if (abs(y) < 1e-14 or abs(y - 0.5) < 1e-14) and abs(abs(z) - 1.0) < 1e-14]
    assert all(sys.node_to_free[c] == -1 for c in corners)


def test_galerkin_upper_bound_on_straight_rectangle():
    h = 0.5
    exact = np.pi ** 2 / h ** 2  # lowest mixed eigenvalue (no axial half-waves)
    mesh = build_mesh(StraightCylinder(h), (4, 16))
    for _ in range(2):
        sys = assemble_system(mesh, MIXED)
        lam = float(sla.eigh(sys.k_full.toarray(), sys.m_full.toarray(),
                             eigvals_only=True)[0])
        assert lam >= exact - 1e-9
        mesh = refine_uniform(mesh)


def test_mixed_eigenvalue_second_order_convergence():
    h = 0.5
    exact = np.pi ** 2 / h ** 2 + np.pi ** 2 / 4.0
    errs = []
    mesh = build_mesh(StraightCylinder(h), (4, 16))
    for _ in range(3):
        sys = assemble_system(mesh, MIXED)
        lams = sla.eigh(sys.k_full.toarray(), sys.m_full.toarray(), eigvals_only=True)
        errs.append(lams[1] - exact)
        mesh = refine_uniform(mesh)
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)


def test_matrix_export_roundtrip():
    mesh = build_mesh(StraightCylinder(0.5), (2, 6))
    sys = assemble_system(mesh, MIXED)
    buf = io.StringIO()
    write_matrix(sys.k_upper, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# thincyl matrix 1"
    n, m, nnz = (int(t) for t in lines[1].split()[1:])
    assert (n, m) == (sys.n_free, sys.n_free)
    assert nnz == len(lines) - 2
    coo = sys.k_upper.tocoo()
    i, j, v = lines[2].split()
    assert int(i) == coo.row[0] and int(j) == coo.col[0]
    assert float(v) == coo.data[0]


def test_rayleigh_quotient_of_eigenvector_recovers_eigenvalue():
    from thincyl.eigensolve import smallest_eigenpairs
    mesh = build_mesh(StraightCylinder(0.5), (6, 24))
    sys = assemble_system(mesh, MIXED)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=2, tol=1e-11)
    for j in range(2):
        q = rayleigh_quotient(sys, sol.eigenvectors[:, j])
        assert q == pytest.approx(sol.eigenvalues[j], rel=1e-11)
