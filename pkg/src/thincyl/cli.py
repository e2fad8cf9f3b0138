"""Configuration-driven experiment runner.

One experiment per invocation: ``thincyl <kind> --config file.ini
[--out dir] [--plots] [--verbose] [--explain]``.  Results are written as
delimited tables, stable JSON and (on request) SVG figures, together
with a manifest listing every emitted file with its content digest.

Exit codes: 0 success, 2 configuration error, 3 solve error, 4 fit
error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .conditions import (
    condition_epsilon_order,
    condition_fourier_first_coeff,
    condition_gradient_form,
    condition_laplacian_form,
    condition_symmetric_half,
    integrand_samples,
    rayleigh_scan,
)
from .config import EXPERIMENT_KINDS, ExperimentConfig, load_config
from .domains import Dumbbell, HalfSemiCylinder, SemiCylinder
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSystemError,
    DomainError,
    FitError,
    GeometryError,
    NumericError,
    PreconditionError,
    SingularMatrixError,
    SweepError,
    ThincylError,
)
from .mesh import write_field, write_mesh
from .problems import (
    IntervalSection,
    PolygonSection,
    cross_section_eigens,
    half_interval_eigens,
    solve_semicylinder,
)
from .report import (
    NEUMANN_HALF_HEADER,
    SPLITTING_HEADER,
    SWEEP_HEADER,
    TRAPEZOID_HEADER,
    RunManifest,
    figure_band_mass,
    figure_decay,
    figure_deviations,
    figure_scan,
    figure_splitting,
    neumann_half_table,
    save_figure,
    sha256_file,
    splitting_table,
    trapezoid_table,
    write_csv,
    write_json,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVE = 3
EXIT_FIT = 4
EXIT_IO = 5

PI2 = float(np.pi ** 2)


def _policy(cfg: ExperimentConfig):
    from .asymptotics import ResolutionPolicy
    return ResolutionPolicy(n_across=cfg.n_across,
                            truncation_lengths=cfg.truncation_lengths,
                            solver_tol=cfg.tol, seed=cfg.seed)


def _strip_volatile(diag: dict) -> dict:
    out = dict(diag)
    out.pop("wall_time", None)
    return out


class Runner:
    def __init__(self, cfg: ExperimentConfig, outdir: str, plots: bool,
                 verbose: bool, explain: bool):
        self.cfg = cfg
        self.outdir = outdir
        self.plots = plots
        self.verbose = verbose
        self.explain = explain
        os.makedirs(outdir, exist_ok=True)
        probe = os.path.join(outdir, ".write-probe")
        try:
            with open(probe, "w") as stream:
                stream.write("ok")
            os.remove(probe)
        except OSError as exc:
            raise OSError(f"output directory {outdir!r} is not writable: {exc}")

    def path(self, name: str) -> str:
        return os.path.join(self.outdir, name)

    def log(self, message: str) -> None:
        print(message)

    def diag(self, label: str, payload: dict) -> None:
        if self.verbose:
            print(f"--- diagnostics: {label}")
            print(json.dumps(_strip_volatile(payload), indent=2, sort_keys=True,
                             default=str))

    # ------------------------------------------------------------------
    def run(self) -> dict:
        return getattr(self, "run_" + self.cfg.kind.replace("-", "_"))()

    def run_cross_section(self) -> dict:
        cfg = self.cfg
        if cfg.section_kind == "interval":
            eig = cross_section_eigens(IntervalSection(), cfg.k)
            payload = {"section": "interval",
                       "eigenvalues": [float(v) for v in eig.eigenvalues],
                       "first_eigenfunction": "sqrt(2)*sin(pi*eta)"}
        elif cfg.section_kind == "polygon":
            if not cfg.vertices:
                raise ConfigError("polygon cross-sections need 'vertices'")
            eig = cross_section_eigens(PolygonSection(tuple(cfg.vertices)), cfg.k,
                                       resolution=cfg.refinements,
                                       tol=cfg.tol, seed=cfg.seed)
            payload = {"section": "polygon",
                       "eigenvalues": [float(v) for v in eig.eigenvalues],
                       "refinements": cfg.refinements,
                       "residuals": [float(r) for r in eig.solution.residuals]}
            self.diag("cross-section", eig.solution.diagnostics())
        else:
            raise ConfigError(f"unknown cross-section kind {cfg.section_kind!r}")
        write_json(payload, self.path("result.json"))
        return payload

    def run_condition(self) -> dict:
        cfg = self.cfg
        profile = cfg.profile("end")
        eig = cross_section_eigens(IntervalSection(), 1)
        reports = [condition_gradient_form(eig, profile),
                   condition_fourier_first_coeff(profile),
                   condition_epsilon_order(eig, profile)]
        if profile.is_smooth:
            reports.append(condition_laplacian_form(eig, profile))
        if profile.is_even():
            reports.append(condition_symmetric_half(half_interval_eigens(1), profile))
        scan = rayleigh_scan(eig, profile, cfg.eps_grid())
        payload = {"conditions": [r.to_dict() for r in reports],
                   "scan": scan.to_dict()}
        write_json(payload, self.path("result.json"))
        for rep in reports:
            self.log(f"{rep.condition_id}: {rep.verdict} (value {rep.value:.6g})")
        self.log(f"trial scan: {scan.verdict} (best quotient {scan.best_quotient:.6g} "
                 f"vs cutoff {scan.cutoff:.6g})")
        if self.explain:
            for rep in reports:
                grid, vals = integrand_samples(rep.condition_id, profile)
                rows = [{"x": float(x), "integrand": float(v)}
                        for x, v in zip(grid, vals)]
                write_csv(rows, self.path(f"integrand_{rep.condition_id}.csv"),
                          ["x", "integrand"])
        if self.plots:
            save_figure(figure_scan(scan), self.path("scan.svg"))
        return payload

    def run_semicylinder(self) -> dict:
        cfg = self.cfg
        spec = cfg.domain()
        if not isinstance(spec, (SemiCylinder, HalfSemiCylinder)):
            raise ConfigError("the semicylinder experiment needs a channel domain")
        from .asymptotics import mode_decay_rate
        from .fem import BC
        tbc = BC.DIRICHLET if cfg.truncation_bc == "dirichlet" else BC.NEUMANN
        out = solve_semicylinder(spec, cfg.bc_kind, cfg.resolution, cfg.k,
                                 truncation_bc=tbc, tol=cfg.tol, seed=cfg.seed)
        self.diag("semicylinder", out.result.diagnostics())
        decay = None
        if out.verdicts[0].trapped:
            try:
                decay = mode_decay_rate(out)
            except PreconditionError as exc:
                self.log(f"decay fit skipped: {exc}")
        payload = {
            "eigenvalues": [float(v) for v in out.eigenvalues],
            "cutoff": out.cutoff,
            "margin": out.margin,
            "verdicts": [{"eigenvalue": v.eigenvalue, "trapped": v.trapped,
                          "caveat": v.caveat} for v in out.verdicts],
            "residuals": [float(r) for r in out.result.solution.residuals],
            "decay": decay.to_dict() if decay else None,
        }
        write_json(payload, self.path("result.json"))
        with open(self.path("mesh.txt"), "w") as stream:
            write_mesh(out.result.mesh, stream)
        with open(self.path("mode1.txt"), "w") as stream:
            write_field(out.result.nodal_mode(0), stream)
        for v in out.verdicts:
            self.log(f"eigenvalue {v.eigenvalue:.8f}: "
                     f"{'trapped' if v.trapped else 'not trapped'}")
        if self.plots and decay is not None:
            save_figure(figure_decay(decay), self.path("decay.svg"))
        return payload

    def _sweep_common(self, family, bc_kind: str) -> dict:
        from .asymptotics import fit_exponential, sweep_h
        cfg = self.cfg
        if not cfg.h_list:
            raise ConfigError("sweeps need [sweep] h_list")
        policy = _policy(cfg)
        csv_path = self.path("sweep.csv")
        with open(csv_path, "w", newline="") as stream:
            writer = csv.DictWriter(stream, fieldnames=SWEEP_HEADER,
                                    extrasaction="ignore")
            writer.writeheader()

            def flush(record):
                for row in record.to_row_dicts():
                    writer.writerow(row)
                stream.flush()
                self.log(f"h={record.h}: scaled eigenvalue "
                         f"{record.scaled[0]:.10f}")

            series = sweep_h(family, cfg.h_list, bc_kind, cfg.k,
                             policy=policy, on_record=flush)
        points = series.deviation_points(0)
        fit = None
        fit_error = None
        try:
            fit = fit_exponential(points)
        except FitError as exc:
            fit_error = str(exc)
        payload = {
            "bc_kind": bc_kind,
            "h_list": [float(h) for h in cfg.h_list],
            "reference": [float(v) for v in series.reference.values]
            if series.reference else None,
            "reference_trapped": [bool(b) for b in series.reference.trapped]
            if series.reference else None,
            "deviation_fit": fit.to_dict() if fit else None,
            "fit_error": fit_error,
            "crossover_h": series.crossover_h(0),
            "records": [r.to_row_dicts() for r in series.records],
        }
        write_json(payload, self.path("summary.json"))
        if self.plots:
            if points:
                save_figure(figure_deviations(points, fit), self.path("deviations.svg"))
            save_figure(figure_band_mass(series.records), self.path("band_mass.svg"))
        return payload

    def run_thin_sweep(self) -> dict:
        from .asymptotics import CylinderFamily
        cfg = self.cfg
        family = CylinderFamily(cfg.profile("plus"), cfg.profile("minus"))
        return self._sweep_common(family, "mixed")

    def run_dumbbell(self) -> dict:
        from .asymptotics import DumbbellFamily
        cfg = self.cfg
        spec = cfg.domain()
        if not isinstance(spec, Dumbbell):
            raise ConfigError("the dumbbell experiment needs a dumbbell domain")
        family = DumbbellFamily(spec.head_plus, spec.head_minus)
        return self._sweep_common(family, "all_dirichlet")

    def run_trapezoid(self) -> dict:
        from .asymptotics import trapezoid_series
        cfg = self.cfg
        profile = cfg.profile("width")
        if not cfg.h_list:
            raise ConfigError("the trapezoid experiment needs [sweep] h_list")
        report = trapezoid_series(profile, cfg.h_list, cfg.j_list,
                                  n_across=cfg.n_across, tol=cfg.tol, seed=cfg.seed)
        rows = trapezoid_table(report)
        write_csv(rows, self.path("trapezoid.csv"), TRAPEZOID_HEADER)
        payload = report.to_dict()
        write_json(payload, self.path("summary.json"))
        for p in report.points:
            self.log(f"h={p.h} j={p.index}: correction {p.correction:.6f} "
                     f"(predicted {p.predicted:.6f}, rel err {p.rel_error:.2%})")
        return payload

    def run_splitting(self) -> dict:
        from .asymptotics import CylinderFamily, channel_reference, splitting_analysis
        cfg = self.cfg
        profile = cfg.profile("plus") if cfg.has_profile("plus") else cfg.profile("end")
        family = CylinderFamily(profile, profile)
        policy = _policy(cfg)
        ref = channel_reference(
            lambda L: (SemiCylinder(profile, L), "mixed"), 1, policy)
        if not ref.trapped[0]:
            raise PreconditionError("the splitting study needs a trapped end mode")
        report = splitting_analysis(family, float(ref.values[0]), cfg.h_list,
                                    policy=policy)
        write_csv(splitting_table(report), self.path("splitting.csv"), SPLITTING_HEADER)
        payload = report.to_dict()
        write_json(payload, self.path("summary.json"))
        self.log(f"splitting slope {report.slope:.4f} (expected -1), "
                 f"|coupling| ~ {report.coupling_magnitude:.4g}")
        if self.plots:
            save_figure(figure_splitting(report), self.path("splitting.svg"))
        return payload

    def run_neumann_half(self) -> dict:
        from .asymptotics import neumann_half_localization
        cfg = self.cfg
        profile = cfg.profile("end")
        report = neumann_half_localization(profile, cfg.h_list, policy=_policy(cfg))
        payload = report.to_dict()
        write_json(payload, self.path("summary.json"))
        if report.points:
            write_csv(neumann_half_table(report), self.path("neumann_half.csv"),
                      NEUMANN_HALF_HEADER)
            for p in report.points:
                self.log(f"h={p.h}: deviation {p.deviation:.3e}, index {p.index}")
        else:
            self.log("no localization predicted for this profile")
        return payload

    def run_validate(self) -> dict:
        checks = run_validation_suite(seed=self.cfg.seed)
        payload = {"checks": checks, "all_passed": all(c["passed"] for c in checks)}
        write_json(payload, self.path("validate.json"))
        for c in checks:
            self.log(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['detail']}")
        if not payload["all_passed"]:
            raise ConvergenceError("validation suite reported failures")
        return payload


def run_validation_suite(seed: int = 20240817) -> list:
    """Built-in oracle checks: solver-vs-oracle, analytic spectra, fits."""
    from .asymptotics import fit_exponential
    from .domains import BoundaryTag, StraightCylinder
    from .eigensolve import dense_oracle, factorize, smallest_eigenpairs
    from .fem import BC, assemble_system
    from .mesh import build_mesh
    from .problems import IntervalSection

    checks = []

    def record(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    mesh = build_mesh(StraightCylinder(0.4), (6, 30))
    system = assemble_system(mesh, {BoundaryTag.LATERAL: BC.DIRICHLET,
                                    BoundaryTag.END_PLUS: BC.NEUMANN,
                                    BoundaryTag.END_MINUS: BC.NEUMANN})
    sol = smallest_eigenpairs(system.k_full, system.m_full, k=5, tol=1e-10, seed=seed)
    ref = dense_oracle(system.k_full, system.m_full)[:5]
    gap = float(np.max(np.abs(sol.eigenvalues - ref) / ref))
    record("lanczos_matches_dense_oracle", gap < 1e-10, f"max rel gap {gap:.2e}")

    mesh2 = build_mesh(StraightCylinder(0.4), (12, 60))
    system2 = assemble_system(mesh2, {BoundaryTag.LATERAL: BC.DIRICHLET,
                                      BoundaryTag.END_PLUS: BC.NEUMANN,
                                      BoundaryTag.END_MINUS: BC.NEUMANN})
    sol2 = smallest_eigenpairs(system2.k_full, system2.m_full, k=2, tol=1e-10, seed=seed)
    extrap = (4.0 * sol2.eigenvalues[1] - sol.eigenvalues[1]) / 3.0
    exact = PI2 / 0.4 ** 2 + PI2 / 4.0
    rel = abs(extrap - exact) / exact
    record("rectangle_spectrum", rel < 1e-3, f"rel error {rel:.2e} after extrapolation")

    fit = fit_exponential([(h, 3.0 * np.exp(-2.0 / h)) for h in (0.5, 0.25, 0.125)])
    ok = abs(fit.c - 3.0) < 1e-9 and abs(fit.tau - 2.0) < 1e-9
    record("fit_recovery", ok, f"c={fit.c:.12g} tau={fit.tau:.12g}")

    rng = np.random.default_rng(seed)
    import scipy.sparse as sp
    a = rng.standard_normal((40, 40))
    spd = sp.csr_array(a @ a.T + 40.0 * np.eye(40))
    f = factorize(spd, 0.0, sp.eye_array(40, format="csr"))
    b = rng.standard_normal(40)
    resid = float(np.linalg.norm(spd @ f.solve(b) - b) / np.linalg.norm(b))
    record("factorization_roundtrip", resid < 1e-10, f"residual {resid:.2e}")

    from .conditions import condition_gradient_form
    from .problems import cross_section_eigens
    from .profiles import fourier_profile
    rep = condition_gradient_form(cross_section_eigens(IntervalSection(), 1),
                                  fourier_profile(0.0, [-1.0]))
    ok = abs(rep.value + PI2) < 1e-9 and rep.verdict == "satisfied"
    record("condition_closed_form", ok, f"value {rep.value:.12g}")
    return checks


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thincyl",
        description="Spectral experiments for thin waveguides with distorted ends")
    parser.add_argument("--version", action="version", version=f"thincyl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="configuration file (INI, schema = 1)")
        p.add_argument("--out", default="thincyl-out", help="output directory")
        p.add_argument("--verbose", action="store_true",
                       help="emit solver diagnostics as JSON blocks")
        p.add_argument("--plots", action="store_true", help="emit SVG figures")
        p.add_argument("--explain", action="store_true",
                       help="emit sampled condition integrands as CSV")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"configuration kind {cfg.kind!r} does not match "
                              f"subcommand {args.command!r}")
        runner = Runner(cfg, args.out, plots=args.plots, verbose=args.verbose,
                        explain=args.explain)
        manifest = RunManifest(config_digest=sha256_file(args.config),
                               code_version=__version__,
                               created_utc=datetime.now(timezone.utc).isoformat(),
                               kind=cfg.kind)
        try:
            runner.run()
            manifest.add_step(cfg.kind, "ok", time.perf_counter() - started)
        except Exception:
            manifest.add_step(cfg.kind, "failed", time.perf_counter() - started)
            _finalize_manifest(manifest, args.out)
            raise
        _finalize_manifest(manifest, args.out)
        return EXIT_OK
    except (ConfigError, DomainError, PreconditionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (GeometryError, ConvergenceError, SingularMatrixError,
            DegenerateSystemError, NumericError, SweepError) as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ThincylError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVE


def _finalize_manifest(manifest: RunManifest, outdir: str) -> None:
    for root, _, names in os.walk(outdir):
        for name in names:
            if name == "manifest.json":
                continue
            manifest.add_file(os.path.join(root, name), outdir)
    write_json(manifest.to_dict(), os.path.join(outdir, "manifest.json"))


if __name__ == "__main__":
    sys.exit(main())
