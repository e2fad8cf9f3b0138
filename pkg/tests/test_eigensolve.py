import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from thincyl.domains import BoundaryTag, StraightCylinder
from thincyl.eigensolve import (
    dense_oracle,
    factorize,
    relative_residuals,
    reorder,
    smallest_eigenpairs,
)
from thincyl.errors import ConvergenceError, DomainError, SingularMatrixError
from thincyl.fem import BC, assemble_system
from thincyl.mesh import build_mesh

MIXED = {BoundaryTag.LATERAL: BC.DIRICHLET,
         BoundaryTag.END_PLUS: BC.NEUMANN,
         BoundaryTag.END_MINUS: BC.NEUMANN}
ALL_N = {t: BC.NEUMANN for t in BoundaryTag}


def random_banded_spd(n, bw, seed):
    rng = np.random.default_rng(seed)
    a = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - bw), min(n, i + bw + 1)):
            if i >= j:
                a[i, j] = a[j, i] = rng.normal()
    a = a + a.T
    a += np.diag(np.full(n, 4.0 * bw + 4.0))
    return a


def grid_laplacian(nside):
    n = nside * nside
    a = sp.lil_array((n, n))
    idx = lambda i, j: i * nside + j
    for i in range(nside):
        for j in range(nside):
            a[idx(i, j), idx(i, j)] = 4.0
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < nside and 0 <= jj < nside:
                    a[idx(i, j), idx(ii, jj)] = -1.0
    return a.tocsr()


def test_reorder_identity_on_diagonal():
    pattern = sp.eye_array(5, format="csr")
    perm = reorder(pattern)
    f = factorize(pattern, 0.0, pattern, permutation=perm)
    assert f.fill_count() == 0


def test_reorder_reduces_path_bandwidth():
    rng = np.random.default_rng(0)
    n = 40
    shuffle = rng.permutation(n)
    a = sp.lil_array((n, n))
    for i in range(n):
        a[i, i] = 2.0
    for i in range(n - 1):
        a[shuffle[i], shuffle[i + 1]] = -1.0
        a[shuffle[i + 1], shuffle[i]] = -1.0
    a = a.tocsr()
    coo = a.tocoo()
    bw_before = int(np.max(np.abs(coo.row - coo.col)))
    perm = reorder(a)
    pos = np.empty(n, dtype=int)
    pos[perm] = np.arange(n)
    bw_after = int(np.max(np.abs(pos[coo.row] - pos[coo.col])))
    assert bw_after <= bw_before
    assert bw_after == 1  # RCM recovers the path


def test_reordered_factor_fill_not_worse_on_grid():
    a = grid_laplacian(10)
    rng = np.random.default_rng(5)
    shuffle = rng.permutation(a.shape[0])
    a = a[np.ix_(shuffle, shuffle)]
    m = sp.eye_array(a.shape[0], format="csr")
    f_rcm = factorize(a, -1.0, m)
    f_nat = factorize(a, -1.0, m, permutation=np.arange(a.shape[0]))
    assert f_rcm.fill_count() <= f_nat.fill_count()


def test_factorize_hand_example():
    a = sp.csr_array(np.array([[4.0, 1.0], [1.0, 3.0]]))
    m = sp.eye_array(2, format="csr")
    f = factorize(a, 0.0, m, permutation=np.arange(2))
    assert f.d == pytest.approx([4.0, 11.0 / 4.0], abs=1e-14)
    assert f.l_band[1, 0] == pytest.approx(0.25, abs=1e-15)
    assert f.l_band[0, 0] == 1.0 and f.l_band[0, 1] == 1.0


def test_factorize_rejects_singular_neumann_stiffness():
    mesh = build_mesh(StraightCylinder(0.5), (3, 6))
    sys = assemble_system(mesh, ALL_N)
    with pytest.raises(SingularMatrixError):
        factorize(sys.k_full, 0.0, sys.m_full)


def test_factor_solve_matches_dense():
    a = random_banded_spd(50, 4, seed=11)
    asp = sp.csr_array(a)
    m = sp.eye_array(50, format="csr")
    f = factorize(asp, 0.0, m)
    rng = np.random.default_rng(1)
    for _ in range(5):
        b = rng.standard_normal(50)
        x = f.solve(b)
        assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-10


def test_factorization_roundtrip_invariant():
    a = random_banded_spd(30, 3, seed=2)
    m = np.diag(np.linspace(1.0, 2.0, 30))
    shift = -0.5
    f = factorize(sp.csr_array(a), shift, sp.csr_array(m))
    shifted = a - shift * m
    rng = np.random.default_rng(3)
    for _ in range(5):
        b = rng.standard_normal(30)
        assert np.linalg.norm(shifted @ f.solve(b) - b) < 1e-10 * np.linalg.norm(b)


def test_dense_oracle_trivial_cases():
    eye3 = sp.eye_array(3, format="csr")
    assert np.allclose(dense_oracle(eye3, eye3), [1.0, 1.0, 1.0])
    k = sp.csr_array(np.diag([1.0, 2.0, 3.0]))
    assert np.allclose(dense_oracle(k, eye3), [1.0, 2.0, 3.0])


def test_dense_oracle_trace_identity():
    rng = np.random.default_rng(8)
    n = 30
    k = random_banded_spd(n, 29, seed=13)
    w = rng.standard_normal((n, n))
    m = w @ w.T + n * np.eye(n)
    vals = dense_oracle(sp.csr_array(k), sp.csr_array(m))
    trace = np.trace(np.linalg.solve(m, k))
    assert np.sum(vals) == pytest.approx(trace, rel=1e-9)


def test_dense_oracle_accuracy_on_random_pencils():
    n = 100
    k = random_banded_spd(n, 99, seed=21)
    m = random_banded_spd(n, 99, seed=22)
    vals = dense_oracle(sp.csr_array(k), sp.csr_array(m))
    ref = sla.eigh(k, m, eigvals_only=True)
    assert np.max(np.abs(vals - ref)) < 1e-12 * np.max(np.abs(ref))


def test_dense_oracle_size_guard():
    n = 2001
    eye = sp.eye_array(n, format="csr")
    with pytest.raises(DomainError):
        dense_oracle(eye, eye)


def test_straight_rectangle_mixed_spectrum():
    h = 0.5
    mesh = build_mesh(StraightCylinder(h), (12, 48))
    sys = assemble_system(mesh, MIXED)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=2, tol=1e-10)
    exact1 = np.pi ** 2 / h ** 2
    exact2 = np.pi ** 2 / h ** 2 + np.pi ** 2 / 4.0
    assert sol.eigenvalues[0] == pytest.approx(exact1, rel=1e-2)
    assert sol.eigenvalues[1] == pytest.approx(exact2, rel=1e-2)
    assert np.all(np.diff(sol.eigenvalues) >= 0)
    assert np.all(sol.residuals <= 1e-10)


def test_lanczos_matches_dense_oracle_under_500_dofs():
    h = 0.4
    mesh = build_mesh(StraightCylinder(h), (6, 30))
    sys = assemble_system(mesh, MIXED)
    assert sys.n_free <= 500
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=5, tol=1e-10)
    ref = dense_oracle(sys.k_full, sys.m_full)[:5]
    assert np.max(np.abs(sol.eigenvalues - ref) / ref) < 1e-10


def test_m_orthonormality_of_returned_vectors():
    mesh = build_mesh(StraightCylinder(0.5), (8, 24))
    sys = assemble_system(mesh, MIXED)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=4, tol=1e-10)
    gram = sol.eigenvectors.T @ (sys.m_full @ sol.eigenvectors)
    assert np.max(np.abs(gram - np.eye(4))) < 1e-8


def test_residual_contract_and_reporting():
    mesh = build_mesh(StraightCylinder(0.5), (8, 24))
    sys = assemble_system(mesh, MIXED)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=3, tol=1e-11)
    recomputed = relative_residuals(sys.k_full, sys.m_full, sol.eigenvalues, sol.eigenvectors)
    assert np.all(recomputed <= 1e-11)
    assert np.allclose(recomputed, sol.residuals)


def test_shift_robustness_on_spd_stiffness():
    mesh = build_mesh(StraightCylinder(0.5), (6, 20))
    sys = assemble_system(mesh, MIXED)
    sol0 = smallest_eigenpairs(sys.k_full, sys.m_full, k=3, tol=1e-11, shift=0.0)
    sol1 = smallest_eigenpairs(sys.k_full, sys.m_full, k=3, tol=1e-11, shift=-1.0)
    assert np.max(np.abs(sol0.eigenvalues - sol1.eigenvalues) / sol0.eigenvalues) < 1e-9


def test_pure_neumann_regularized_shift():
    mesh = build_mesh(StraightCylinder(0.5), (6, 20))
    sys = assemble_system(mesh, ALL_N)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=3, tol=1e-9, shift=-1.0)
    assert abs(sol.eigenvalues[0]) < 1e-9  # constant mode
    ref = dense_oracle(sys.k_full, sys.m_full)[:3]
    assert np.max(np.abs(sol.eigenvalues[1:] - ref[1:])) < 1e-8 * ref[2]


def test_singular_shift_retry_path():
    # shift exactly on the lowest Neumann eigenvalue (0) is singular; the
    # solver retries at shift/2 - delta and still succeeds
    mesh = build_mesh(StraightCylinder(0.5), (4, 12))
    sys = assemble_system(mesh, ALL_N)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=2, tol=1e-9, shift=0.0)
    assert abs(sol.eigenvalues[0]) < 1e-9
    assert sol.shift < 0.0


def test_interlacing_extra_dirichlet_edge_never_lowers_lambda1():
    mesh = build_mesh(StraightCylinder(0.5), (6, 20))
    base = assemble_system(mesh, MIXED)
    lam_base = smallest_eigenpairs(base.k_full, base.m_full, k=1, tol=1e-10).eigenvalues[0]
    stricter = dict(MIXED)
    stricter[BoundaryTag.END_PLUS] = BC.DIRICHLET
    sys2 = assemble_system(mesh, stricter)
    lam2 = smallest_eigenpairs(sys2.k_full, sys2.m_full, k=1, tol=1e-10).eigenvalues[0]
    assert lam2 >= lam_base - 1e-10


def test_k_out_of_range_rejected():
    mesh = build_mesh(StraightCylinder(0.5), (3, 6))
    sys = assemble_system(mesh, MIXED)
    with pytest.raises(DomainError):
        smallest_eigenpairs(sys.k_full, sys.m_full, k=0)
    with pytest.raises(DomainError):
        smallest_eigenpairs(sys.k_full, sys.m_full, k=sys.n_free + 1)


def test_determinism_of_iteration_counts():
    mesh = build_mesh(StraightCylinder(0.5), (6, 20))
    sys = assemble_system(mesh, MIXED)
    a = smallest_eigenpairs(sys.k_full, sys.m_full, k=3, tol=1e-10, seed=7)
    b = smallest_eigenpairs(sys.k_full, sys.m_full, k=3, tol=1e-10, seed=7)
    assert a.iterations == b.iterations
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_convergence_error_carries_residuals():
    mesh = build_mesh(StraightCylinder(0.5), (8, 30))
    sys = assemble_system(mesh, MIXED)
    with pytest.raises(ConvergenceError) as err:
        smallest_eigenpairs(sys.k_full, sys.m_full, k=4, tol=1e-10, max_iterations=5)
    assert err.value.residuals is None or len(err.value.residuals) == 4


def test_near_degenerate_cluster_detection():
    k = sp.csr_array(np.diag([1.0, 1.0 + 1e-12, 2.0, 3.0]))
    m = sp.eye_array(4, format="csr")
    sol = smallest_eigenpairs(k, m, k=4, tol=1e-8, shift=0.5)
    assert sol.clusters[0] == [0, 1]


def test_dirichlet_strip_one_dimensional_spectrum():
    # Dirichlet ends, Neumann sides: the thin strip reduces to the axial
    # second-derivative problem on (-1, 1), eigenvalues (j*pi/2)^2
    mesh = build_mesh(StraightCylinder(0.2), (3, 120))
    bc = {BoundaryTag.LATERAL: BC.NEUMANN,
          BoundaryTag.END_PLUS: BC.DIRICHLET,
          BoundaryTag.END_MINUS: BC.DIRICHLET}
    sys = assemble_system(mesh, bc)
    sol = smallest_eigenpairs(sys.k_full, sys.m_full, k=4, tol=1e-10)
    for j, lam in enumerate(sol.eigenvalues, start=1):
        assert lam == pytest.approx((j * np.pi / 2.0) ** 2, rel=2e-3)
    assert np.all(np.diff(sol.eigenvalues) > 0)
