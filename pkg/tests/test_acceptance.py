"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Shared heavy computations (the trapped-profile channel reference and the
thin-width sweep) are module-scoped fixtures.  Criteria that measure
quantities below what float64 can resolve for the pinned profile are
implemented verbatim and allowed to fail with the measured values in the
message; the decisions ledger carries the analysis.
"""

import time

import numpy as np
import pytest

from thincyl.asymptotics import (
    CylinderFamily,
    DumbbellFamily,
    ResolutionPolicy,
    channel_reference,
    fit_exponential,
    mode_decay_rate,
    neumann_half_localization,
    splitting_analysis,
    sweep_h,
)
from thincyl.conditions import (
    condition_fourier_first_coeff,
    condition_gradient_form,
    condition_laplacian_form,
)
from thincyl.domains import (
    BoundaryTag,
    Dumbbell,
    HeadSpec,
    SemiCylinder,
    StraightCylinder,
    Trapezoid,
)
from thincyl.eigensolve import dense_oracle, smallest_eigenpairs
from thincyl.errors import FitError
from thincyl.fem import BC, assemble_system
from thincyl.mesh import build_mesh, refine_uniform
from thincyl.problems import (
    IntervalSection,
    cross_section_eigens,
    half_interval_eigens,
    solve_semicylinder,
    solve_thin,
)
from thincyl.profiles import fourier_profile, table_profile, zero_profile

PI2 = np.pi ** 2
MIXED = {BoundaryTag.LATERAL: BC.DIRICHLET,
         BoundaryTag.END_PLUS: BC.NEUMANN,
         BoundaryTag.END_MINUS: BC.NEUMANN}
TRAPPED_PROFILE = fourier_profile(0.0, [-1.0])
POLICY = ResolutionPolicy(n_across=8, truncation_lengths=(6.0, 8.0))


def verdict(num: int, passed: bool, detail: str) -> None:
    print(f"[acceptance {num:02d}] {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def trapped_reference():
    policy = ResolutionPolicy(n_across=12, truncation_lengths=(6.0, 8.0))
    return channel_reference(lambda L: (SemiCylinder(TRAPPED_PROFILE, L), "mixed"),
                             1, policy)


@pytest.fixture(scope="module")
def trapped_sweep():
    family = CylinderFamily(TRAPPED_PROFILE, zero_profile())
    return sweep_h(family, [0.2, 0.15, 0.1, 0.075, 0.05], "mixed", k=1, policy=POLICY)


def test_criterion_01_straight_rectangle_oracle():
    """Mixed rectangle eigenvalue matches the separated reference at rate 2."""
    t0 = time.perf_counter()
    h = 0.2
    exact = PI2 / h ** 2 + PI2 / 4.0
    mesh = build_mesh(StraightCylinder(h), (10, 100))
    errs = []
    for level in range(3):
        system = assemble_system(mesh, MIXED)
        sol = smallest_eigenpairs(system.k_full, system.m_full, k=2, tol=1e-10)
        errs.append((sol.eigenvalues[1] - exact) / exact)
        if level < 2:
            mesh = refine_uniform(mesh)
    elapsed = time.perf_counter() - t0
    ratios = (errs[0] / errs[1], errs[1] / errs[2])
    ok = (abs(errs[-1]) < 1e-3 and all(3.5 <= r <= 4.5 for r in ratios)
          and elapsed < 30.0)
    verdict(1, ok, f"rel errors {[f'{e:.2e}' for e in errs]}, ratios "
                   f"{[f'{r:.2f}' for r in ratios]}, {elapsed:.1f}s")
    assert abs(errs[-1]) < 1e-3
    assert all(3.5 <= r <= 4.5 for r in ratios)
    assert elapsed < 30.0


def test_criterion_02_oracle_equivalence_small_meshes():
    """Shift-invert Lanczos matches the dense oracle on every small mesh."""
    t0 = time.perf_counter()
    cases = [
        (build_mesh(StraightCylinder(0.2), (4, 40)), MIXED, 0.0),
        (build_mesh(StraightCylinder(0.5), (6, 20)),
         {t: BC.NEUMANN for t in BoundaryTag}, -1.0),
        (build_mesh(SemiCylinder(TRAPPED_PROFILE, 8.0), (6, 48)),
         {BoundaryTag.LATERAL: BC.DIRICHLET, BoundaryTag.END_PLUS: BC.NEUMANN,
          BoundaryTag.ARTIFICIAL: BC.DIRICHLET}, 0.0),
        (build_mesh(Trapezoid(0.2, fourier_profile(1.25, [0.25])), (6, 36)),
         {t: BC.DIRICHLET for t in BoundaryTag}, 0.0),
        (build_mesh(Dumbbell(0.5, HeadSpec(1.5, 1.5), HeadSpec(1.5, 1.5)), (6, 24)),
         {t: BC.DIRICHLET for t in BoundaryTag}, 0.0),
    ]
    worst = 0.0
    for mesh, bc, shift in cases:
        system = assemble_system(mesh, bc)
        assert system.n_free <= 500, f"mesh too large for the oracle gate: {system.n_free}"
        sol = smallest_eigenpairs(system.k_full, system.m_full, k=5, tol=1e-10,
                                  shift=shift)
        ref = dense_oracle(system.k_full, system.m_full)[:5]
        scale = np.maximum(np.abs(ref), 1.0)
        worst = max(worst, float(np.max(np.abs(sol.eigenvalues - ref) / scale)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and elapsed < 10.0
    verdict(2, ok, f"worst rel gap {worst:.2e} over {len(cases)} meshes, {elapsed:.1f}s")
    assert worst < 1e-10
    assert elapsed < 10.0


def test_criterion_03_trapped_mode_existence(trapped_reference):
    """First Fourier coefficient certifies a trapped mode; truncation-stable."""
    t0 = time.perf_counter()
    rep = condition_fourier_first_coeff(TRAPPED_PROFILE)
    lam = float(trapped_reference.values[0])
    margin = PI2 - lam
    rel_change = float(trapped_reference.truncation_change[0]) / lam
    elapsed = time.perf_counter() - t0
    ok = (rep.value == -0.5 and rep.verdict == "satisfied"
          and margin > 1e-3 * PI2 and rel_change < 1e-6 and elapsed < 60.0)
    verdict(3, ok, f"coefficient {rep.value}, eigenvalue {lam:.6f}, margin {margin:.3f}, "
                   f"L-change {rel_change:.2e}, {elapsed:.1f}s")
    assert rep.value == -0.5
    assert trapped_reference.trapped[0]
    assert margin > 1e-3 * PI2
    assert rel_change < 1e-6
    assert elapsed < 60.0


def test_criterion_04_no_false_trapped_modes():
    """The flat channel never reports an eigenvalue below the cutoff."""
    smallest = []
    for length in (4.0, 6.0, 8.0):
        out = solve_semicylinder(SemiCylinder(zero_profile(), length), "mixed",
                                 (8, int(8 * length)), k=2)
        assert not any(v.trapped for v in out.verdicts)
        smallest.append(float(out.eigenvalues[0]))
    ok = all(s > PI2 * (1.0 - 1e-3) for s in smallest)
    verdict(4, ok, f"smallest truncated eigenvalues {[f'{s:.5f}' for s in smallest]} "
                   f"vs cutoff {PI2:.5f}")
    assert ok


def test_criterion_05_condition_identity():
    """Curvature form equals twice the gradient form for smooth profiles."""
    eig = cross_section_eigens(IntervalSection(), 1)
    profiles = [
        TRAPPED_PROFILE,
        fourier_profile(0.3, [0.8, -0.2]),
        fourier_profile(-0.1, [0.0, 0.6], [0.4]),
        fourier_profile(0.0, [0.5, 0.25, -0.125]),
        fourier_profile(1.0, [-0.4], [0.9]),
    ]
    worst = 0.0
    for prof in profiles:
        grad = condition_gradient_form(eig, prof)
        lap = condition_laplacian_form(eig, prof)
        worst = max(worst, abs(lap.value - 2.0 * grad.value))
    ok = worst <= 1e-9
    verdict(5, ok, f"worst identity gap {worst:.2e} over {len(profiles)} profiles")
    assert ok


def test_criterion_06_eigenvalue_asymptotics_sweep(trapped_sweep, trapped_reference):
    """Scaled-eigenvalue deviations decrease strictly and fit an exponential.

    The pinned profile traps deeply (decay rate ~ 3), so the true
    deviation is far below float64 at the pinned widths; the measured
    sequence bottoms out at the rounding floor.  Implemented verbatim and
    expected to fail there; the ledger carries the analysis.
    """
    t0 = time.perf_counter()
    devs = [float(r.deviations[0]) for r in trapped_sweep.records]
    strictly_decreasing = all(a > b for a, b in zip(devs, devs[1:]))
    fit_detail = "fit unavailable"
    tau_ok = False
    try:
        fit = fit_exponential(trapped_sweep.deviation_points(0))
        tau_ok = fit.tau > 0 and fit.r_squared > 0.95
        fit_detail = f"tau {fit.tau:.3g}, R^2 {fit.r_squared:.4f}"
    except FitError as exc:
        fit_detail = str(exc)
    elapsed = time.perf_counter() - t0
    ok = strictly_decreasing and tau_ok and elapsed < 600.0
    verdict(6, ok, f"deviations {[f'{d:.2e}' for d in devs]}; {fit_detail}")
    assert strictly_decreasing, f"deviations not strictly decreasing: {devs}"
    assert tau_ok, fit_detail
    assert elapsed < 600.0


def test_criterion_07_localization(trapped_sweep):
    """Middle-band mass collapses for the trapped mode, not the straight one."""
    mids = [float(r.metrics[0].band_fractions[1]) for r in trapped_sweep.records]
    decreasing = all(a > b for a, b in zip(mids, mids[1:]))
    final_small = mids[-1] < 1e-3
    # contrast: the (p,q) = (1,1) straight-rectangle mode; the stated
    # closed-form oracle integral(cos^2((pi/2)(z+1)), |z|<1/3) evaluates to
    # 1/3 - sin(pi/3)/pi ~ 0.057668 (the printed 0.1997 does not match its
    # own oracle; see the decisions ledger)
    oracle = 1.0 / 3.0 - np.sin(np.pi / 3.0) / np.pi
    res = solve_thin(StraightCylinder(0.2), "mixed", (8, 120), k=2)
    from thincyl.asymptotics import band_masses
    straight_mid = float(band_masses(res, 1)[1])
    ok = decreasing and final_small and abs(straight_mid - oracle) < 0.01
    verdict(7, ok, f"middle masses {[f'{m:.2e}' for m in mids]}; straight mode "
                   f"{straight_mid:.5f} vs oracle {oracle:.5f}")
    assert decreasing
    assert final_small
    assert straight_mid == pytest.approx(oracle, abs=0.01)


def test_criterion_08_boundary_layer_decay_rate():
    """Interior decay slope of the trapped mode matches the tail rate."""
    semi = solve_semicylinder(SemiCylinder(TRAPPED_PROFILE, 8.0), "mixed",
                              (16, 128), k=1)
    fit = mode_decay_rate(semi)
    beta = float(np.sqrt(semi.cutoff - semi.eigenvalues[0]))
    rel = abs(-fit.slope - beta) / beta
    ok = rel < 0.05
    verdict(8, ok, f"slope {fit.slope:.4f} vs -sqrt(cutoff - eigenvalue) "
                   f"{-beta:.4f} (rel {rel:.2%}, R^2 {fit.r_squared:.6f})")
    assert rel < 0.05


def test_criterion_09_splitting(trapped_reference):
    """Symmetric-pair gap fits the tail model with slope near -1.

    For the pinned profile the gap scale exp(-2*sqrt(cutoff-value)/h) is
    ~1e-13 relative at h = 0.2 and smaller beyond: below eigenvalue
    resolution, so every point is excluded and the fit must refuse.
    Implemented verbatim; expected to fail here (ledger entry).  The
    half-domain cross-validation clause is still exercised.
    """
    family = CylinderFamily(TRAPPED_PROFILE, TRAPPED_PROFILE)
    lam = float(trapped_reference.values[0])
    slope_ok = False
    halves_ok = False
    detail = ""
    try:
        rep = splitting_analysis(family, lam, [0.2, 0.15, 0.1, 0.075], policy=POLICY)
        slope_ok = -1.15 <= rep.slope <= -0.85
        halves_ok = all(p.half_even_rel < 1e-8 and p.half_odd_rel < 1e-8
                        for p in rep.points)
        detail = (f"slope {rep.slope:.4f}, |F| {rep.coupling_magnitude:.3g}, "
                  f"half-deviations ok: {halves_ok}")
    except FitError as exc:
        detail = (f"{exc}; expected rate 2*sqrt(cutoff-value) = "
                  f"{2 * np.sqrt(PI2 - lam):.3f} puts every pinned width below "
                  f"eigenvalue resolution")
    verdict(9, slope_ok and halves_ok, detail)
    assert slope_ok, detail
    assert halves_ok, detail


def test_criterion_10_trapezoid_series():
    """Narrowing-strip corrections against the printed oscillator levels.

    The measured corrections converge cleanly to pi*(2j+1) (the
    transverse cutoff factor belongs inside the oscillator coefficient),
    so the literal targets 2j+1 fail by a factor pi; implemented verbatim
    and expected to fail (ledger entry).  The localization clause holds.
    """
    t0 = time.perf_counter()
    from thincyl.asymptotics import trapezoid_series
    zs = np.linspace(0.0, 1.0, 2001)
    prof = table_profile(zs, 1.0 - (2.0 * zs - 1.0) ** 2 / 2.0)
    rep = trapezoid_series(prof, [0.02], [0, 1], n_across=12)
    elapsed = time.perf_counter() - t0
    masses_ok = all(p.mass_near_peak > 0.99 for p in rep.points)
    literal = {p.index: abs(p.correction - (2 * p.index + 1)) / (2 * p.index + 1)
               for p in rep.points}
    literal_ok = all(v < 0.05 for v in literal.values())
    measured = {p.index: p.correction for p in rep.points}
    verdict(10, literal_ok and masses_ok and elapsed < 300.0,
            f"corrections {measured} vs literal targets {{0: 1, 1: 3}} "
            f"(measured values sit at pi*(2j+1)); masses>0.99: {masses_ok}; "
            f"{elapsed:.0f}s")
    assert masses_ok
    assert elapsed < 300.0
    assert literal_ok, (f"corrections {measured} differ from the literal targets "
                        f"2j+1 by the transverse-cutoff factor pi")


def test_criterion_11_dumbbell_localization():
    """Head-fed trapped mode and exponential approach of the scaled spectrum."""
    head = HeadSpec(1.5, 1.5)
    head_ground = PI2 * (1.0 / head.width ** 2 + 1.0 / head.height ** 2)
    assert head_ground < PI2
    family = DumbbellFamily(head, head)
    series = sweep_h(family, [0.5, 0.4, 0.32, 0.27, 0.24], "all_dirichlet",
                     k=1, policy=POLICY, metrics=False)
    lam = float(series.reference.values[0])
    fit = fit_exponential(series.deviation_points(0))
    ok = lam < PI2 and fit.r_squared > 0.9 and fit.tau > 0
    verdict(11, ok, f"channel eigenvalue {lam:.5f} < cutoff {PI2:.5f}; "
                    f"fit tau {fit.tau:.3f} (2*sqrt gap rate "
                    f"{2 * np.sqrt(PI2 - lam):.3f}), R^2 {fit.r_squared:.5f}")
    assert lam < PI2
    assert fit.r_squared > 0.9


def test_criterion_12_neumann_half_domain():
    """High-index Neumann eigenvalue locks onto the half-channel mode."""
    assert float(half_interval_eigens(1).eigenvalues[0]) == pytest.approx(PI2, rel=1e-15)
    profile = fourier_profile(0.0, [1.0])  # even; satisfies the half condition
    report = neumann_half_localization(profile, [0.5, 0.3, 0.2], policy=POLICY)
    assert not report.no_prediction
    devs = [p.deviation for p in report.points]
    indices = [p.index for p in report.points]
    decreasing = all(a > b for a, b in zip(devs, devs[1:]))
    increasing = all(b > a for a, b in zip(indices, indices[1:]))
    ok = decreasing and increasing
    verdict(12, ok, f"deviations {[f'{d:.2e}' for d in devs]}, indices {indices}, "
                    f"half cutoff = pi^2 exactly")
    assert decreasing
    assert increasing
