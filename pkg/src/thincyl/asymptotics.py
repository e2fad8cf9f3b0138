"""Parameter sweeps, localization metrics and asymptotic-rate fitting.

Every sweep point is solved at two grid densities (q and 2q cells per
stretched unit length with the across count doubled alongside) and the
eigenvalues are Richardson-extrapolated at the P1 rate; the coarse/fine
difference is kept as a mesh-error estimate.  Channel references are
computed the same way at two truncation lengths and extrapolated
geometrically with the theoretical tail rate, so that comparisons against
them are dominated by physics rather than discretization.  Thin-domain
and channel meshes share their end-region lattice (see the mesh module),
which makes the deviation of the scaled thin eigenvalue from the channel
eigenvalue meaningful far below the raw mesh-error level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .domains import (
    BoundaryTag,
    DistortedCylinder,
    Dumbbell,
    HalfSemiCylinder,
    HeadSpec,
    SemiCylinder,
    Trapezoid,
)
from .eigensolve import DEFAULT_SEED
from .errors import DomainError, FitError, PreconditionError, SweepError
from .fem import BC, element_matrices
from .mesh import Mesh
from .problems import (
    SemiCylinderResult,
    SpectrumResult,
    reference_trapezoid_limit,
    solve_domain,
    solve_semicylinder,
    solve_thin,
)
from .profiles import Profile, zero_profile

__all__ = [
    "ResolutionPolicy",
    "CylinderFamily",
    "DumbbellFamily",
    "ExponentialFit",
    "fit_exponential",
    "RichardsonValue",
    "solve_thin_extrapolated",
    "ChannelReference",
    "channel_reference",
    "LocalizationMetrics",
    "localization_metrics",
    "boundary_layer_mismatch",
    "MeshInterpolator",
    "DecayFit",
    "mode_decay_rate",
    "SweepRecord",
    "SweepSeries",
    "sweep_h",
    "SplittingPoint",
    "SplittingReport",
    "splitting_analysis",
    "TrapezoidPoint",
    "TrapezoidSeriesReport",
    "trapezoid_series",
    "NeumannHalfPoint",
    "NeumannHalfReport",
    "neumann_half_localization",
]

DEFAULT_BANDS = ((-1.0, -1.0 / 3.0), (-1.0 / 3.0, 1.0 / 3.0), (1.0 / 3.0, 1.0))


# ---------------------------------------------------------------------------
# policies and families

@dataclass(frozen=True)
class ResolutionPolicy:
    """Grid policy for thin/channel sweeps.

    ``n_across`` transverse cells stay fixed while the axial count scales
    like 1/h through the shared lattice density ``cells_per_unit``
    (defaulting to ``n_across``, i.e. unit-aspect cells in stretched
    coordinates).  ``truncation_lengths`` drive the channel references.
    """

    n_across: int = 8
    cells_per_unit: Optional[int] = None
    truncation_lengths: tuple = (6.0, 8.0)
    solver_tol: float = 1e-10
    seed: int = DEFAULT_SEED

    @property
    def q(self) -> int:
        return self.n_across if self.cells_per_unit is None else self.cells_per_unit

    def thin_resolution(self, h: float, refine: int = 1):
        total = 2.0 / h
        return (refine * self.n_across, int(round(refine * self.q * total)))

    def channel_resolution(self, length: float, refine: int = 1):
        return (refine * self.n_across, int(round(refine * self.q * length)))


@dataclass(frozen=True)
class CylinderFamily:
    """Thin cylinders with fixed end profiles, parameterized by h."""

    profile_plus: Profile
    profile_minus: Profile

    def spec(self, h: float, half: Optional[str] = None) -> DistortedCylinder:
        return DistortedCylinder(h=h, profile_plus=self.profile_plus,
                                 profile_minus=self.profile_minus, half=half)

    def end_channels(self, truncation: float):
        return [(SemiCylinder(self.profile_plus, truncation), "mixed"),
                (SemiCylinder(self.profile_minus, truncation), "mixed")]

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        eta = np.linspace(0.0, 1.0, 257)
        return bool(np.max(np.abs(self.profile_plus(eta) - self.profile_minus(eta))) <= tol)


@dataclass(frozen=True)
class DumbbellFamily:
    """Thin dumbbells with fixed stretched head shapes, parameterized by h."""

    head_plus: HeadSpec = HeadSpec()
    head_minus: HeadSpec = HeadSpec()

    def spec(self, h: float) -> Dumbbell:
        return Dumbbell(h=h, head_plus=self.head_plus, head_minus=self.head_minus)

    def end_channels(self, truncation: float):
        return [(SemiCylinder(zero_profile(), truncation, self.head_plus), "all_dirichlet"),
                (SemiCylinder(zero_profile(), truncation, self.head_minus), "all_dirichlet")]

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return self.head_plus == self.head_minus


# ---------------------------------------------------------------------------
# exponential fitting

@dataclass
class ExponentialFit:
    """Least-squares fit of deviation(h) ~ c * exp(-tau / h)."""

    c: float
    tau: float
    r_squared: float
    n_used: int
    dropped: int

    def to_dict(self) -> dict:
        return {"c": self.c, "tau": self.tau, "r_squared": self.r_squared,
                "n_used": self.n_used, "dropped": self.dropped}


def fit_exponential(points) -> ExponentialFit:
    """OLS of log(deviation) against 1/h; non-positive deviations are dropped."""
    pts = [(float(h), float(d)) for h, d in points]
    usable = [(h, d) for h, d in pts if d > 0.0 and np.isfinite(d)]
    dropped = len(pts) - len(usable)
    if len(usable) < 3:
        raise FitError(f"exponential fit needs at least 3 positive deviations, "
                       f"got {len(usable)} ({dropped} dropped)")
    x = np.array([1.0 / h for h, _ in usable])
    y = np.log([d for _, d in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = y - np.mean(y)
    ss_tot = float(np.dot(total, total))
    r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(c=float(np.exp(intercept)), tau=float(-slope),
                          r_squared=float(r2), n_used=len(usable), dropped=dropped)


# ---------------------------------------------------------------------------
# Richardson-extrapolated solves and channel references

@dataclass
class RichardsonValue:
    """Eigenvalues extrapolated from a (q, 2q) resolution pair."""

    values: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    mesh_error: np.ndarray
    fine_result: SpectrumResult

    @staticmethod
    def combine(coarse: np.ndarray, fine: np.ndarray, fine_result=None) -> "RichardsonValue":
        coarse = np.asarray(coarse, dtype=float)
        fine = np.asarray(fine, dtype=float)
        values = (4.0 * fine - coarse) / 3.0
        return RichardsonValue(values=values, coarse=coarse, fine=fine,
                               mesh_error=np.abs(fine - coarse) / 3.0,
                               fine_result=fine_result)


def solve_thin_extrapolated(spec_of_refine: Callable[[int], tuple], k: int,
                            policy: ResolutionPolicy) -> RichardsonValue:
    """Solve a (spec, bc_kind, resolution) pair at two densities and extrapolate.

    ``spec_of_refine(r)`` returns (spec, bc_kind, resolution) for density
    multiplier r in {1, 2}.
    """
    results = []
    for refine in (1, 2):
        spec, bc_kind, resolution = spec_of_refine(refine)
        results.append(solve_thin(spec, bc_kind, resolution, k,
                                  tol=policy.solver_tol, seed=policy.seed))
    return RichardsonValue.combine(results[0].eigenvalues, results[1].eigenvalues,
                                   fine_result=results[1])


def _truncation_extrapolate(lam1: float, lam2: float, l1: float, l2: float,
                            cutoff: float) -> float:
    """Remove the leading exp(-2*beta*L) truncation bias from lam2 (L2 > L1)."""
    beta_sq = cutoff - lam2
    if beta_sq <= 0.0:
        return lam2
    ratio = np.exp(2.0 * np.sqrt(beta_sq) * (l2 - l1)) - 1.0
    if ratio <= 0.0:
        return lam2
    return lam2 - (lam1 - lam2) / ratio


@dataclass
class ChannelReference:
    """Extrapolated channel eigenvalues used as sweep references."""

    values: np.ndarray            # ascending, per mode
    trapped: np.ndarray           # bool per mode
    cutoff: float
    truncation_lengths: tuple
    truncation_change: np.ndarray  # |value(L2) - value(L1)| per mode
    mesh_error: np.ndarray
    fine_solve: SemiCylinderResult


def channel_reference(spec_of_length: Callable[[float], tuple], k: int,
                      policy: ResolutionPolicy,
                      truncation_bc=BC.DIRICHLET) -> ChannelReference:
    """Reference spectrum of a truncated channel, mesh- and L-extrapolated.

    ``spec_of_length(L)`` returns (channel spec, bc_kind) at truncation L.
    Solves run at both policy densities for each length; trapped entries
    are additionally extrapolated in the truncation length using the
    theoretical tail rate 2*sqrt(cutoff - value).
    """
    lengths = sorted(policy.truncation_lengths)
    per_length = {}
    fine_solve = None
    for length in lengths:
        vals = []
        for refine in (1, 2):
            spec, bc_kind = spec_of_length(length)
            out = solve_semicylinder(spec, bc_kind, policy.channel_resolution(length, refine),
                                     k, truncation_bc=truncation_bc,
                                     tol=policy.solver_tol, seed=policy.seed)
            vals.append(out)
        rich = RichardsonValue.combine(vals[0].eigenvalues, vals[1].eigenvalues)
        per_length[length] = (rich, vals[1])
        fine_solve = vals[1]
    l2 = lengths[-1]
    rich2, _ = per_length[l2]
    cutoff = fine_solve.cutoff
    values = rich2.values.copy()
    change = np.zeros_like(values)
    if len(lengths) > 1:
        l1 = lengths[-2]
        rich1, _ = per_length[l1]
        change = np.abs(rich2.values - rich1.values)
        for i in range(len(values)):
            if rich2.values[i] < cutoff - fine_solve.margin:
                values[i] = _truncation_extrapolate(rich1.values[i], rich2.values[i],
                                                    l1, l2, cutoff)
    trapped = values < cutoff - fine_solve.margin
    return ChannelReference(values=values, trapped=trapped, cutoff=cutoff,
                            truncation_lengths=tuple(lengths),
                            truncation_change=change, mesh_error=rich2.mesh_error,
                            fine_solve=fine_solve)


# ---------------------------------------------------------------------------
# localization metrics

class MeshInterpolator:
    """Nearest-triangle P1 interpolation of nodal fields."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        p = mesh.nodes[mesh.triangles]
        self._corners = p
        self._centroids = p.mean(axis=1)
        self._tree = cKDTree(self._centroids)
        x, y = p[:, :, 0], p[:, :, 1]
        self._det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) \
            - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])

    def _barycentric(self, tri_idx: np.ndarray, pts: np.ndarray) -> np.ndarray:
        p = self._corners[tri_idx]
        det = self._det[tri_idx]
        l1 = ((p[:, 2, 1] - p[:, 0, 1]) * (pts[:, 0] - p[:, 0, 0])
              - (p[:, 2, 0] - p[:, 0, 0]) * (pts[:, 1] - p[:, 0, 1])) / det
        l2 = ((p[:, 0, 1] - p[:, 1, 1]) * (pts[:, 0] - p[:, 0, 0])
              - (p[:, 0, 0] - p[:, 1, 0]) * (pts[:, 1] - p[:, 0, 1])) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=1)

    def __call__(self, points: np.ndarray, nodal_values: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, len(self._centroids))
        _, cand = self._tree.query(points, k=k)
        cand = np.atleast_2d(cand)
        best = cand[:, 0].copy()
        best_bary = self._barycentric(best, points)
        unresolved = np.min(best_bary, axis=1) < -1e-9
        for rank in range(1, k):
            if not np.any(unresolved):
                break
            idx = cand[unresolved, rank]
            bary = self._barycentric(idx, points[unresolved])
            better = np.min(bary, axis=1) > np.min(best_bary[unresolved], axis=1)
            sel = np.nonzero(unresolved)[0][better]
            best[sel] = idx[better]
            best_bary[sel] = bary[better]
            unresolved = np.min(best_bary, axis=1) < -1e-9
        # clamp: points marginally outside use the nearest triangle
        bary = np.clip(best_bary, 0.0, None)
        bary /= np.sum(bary, axis=1, keepdims=True)
        tri_nodes = self.mesh.triangles[best]
        return np.einsum("pk,pk->p", nodal_values[tri_nodes], bary)


@dataclass
class LocalizationMetrics:
    """Axial mass distribution and boundary-layer agreement of one mode."""

    band_fractions: np.ndarray
    bands: tuple
    sup_ratio: float
    mismatch: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "band_fractions": [float(b) for b in self.band_fractions],
            "bands": [list(b) for b in self.bands],
            "sup_ratio": float(self.sup_ratio),
            "mismatch": None if self.mismatch is None else float(self.mismatch),
        }


def band_masses(result: SpectrumResult, mode_index: int, bands=DEFAULT_BANDS,
                axis: int = 1) -> np.ndarray:
    """Fractions of the squared mode mass per axial band (element-wise exact)."""
    mesh = result.mesh
    nodal = result.nodal_mode(mode_index)
    _, me = element_matrices(mesh)
    vals = nodal[mesh.triangles]
    cell = np.einsum("tk,tkl,tl->t", vals, me, vals)
    centroid = mesh.nodes[mesh.triangles].mean(axis=1)[:, axis]
    total = float(np.sum(cell))
    fractions = np.empty(len(bands))
    hi_edge = max(b[1] for b in bands)
    for i, (lo, hi) in enumerate(bands):
        sel = (centroid >= lo) & (centroid < hi)
        if hi == hi_edge:
            sel |= centroid == hi
        fractions[i] = float(np.sum(cell[sel])) / total
    return fractions


def localization_metrics(result: SpectrumResult, mode_index: int = 0,
                         bands=DEFAULT_BANDS, h: Optional[float] = None,
                         reference: Optional[SemiCylinderResult] = None,
                         end: str = "plus") -> LocalizationMetrics:
    """Band masses, interior sup ratio and optional boundary-layer mismatch.

    The mode is taken M-normalized from the solve.  ``reference`` (a
    truncated-channel solve of the matching end profile) enables the
    stretched-coordinate mismatch; ``h`` is then required.
    """
    fractions = band_masses(result, mode_index, bands=bands)
    mesh = result.mesh
    nodal = np.abs(result.nodal_mode(mode_index))
    mid = (bands[1][0], bands[1][1])
    inner = (mesh.nodes[:, 1] >= mid[0]) & (mesh.nodes[:, 1] <= mid[1])
    sup_ratio = float(np.max(nodal[inner]) / np.max(nodal)) if np.any(inner) else 0.0
    mismatch = None
    if reference is not None:
        if h is None:
            raise DomainError("the boundary-layer mismatch needs the width h")
        mismatch = boundary_layer_mismatch(result, mode_index, h, reference, end=end)
    return LocalizationMetrics(band_fractions=fractions, bands=tuple(bands),
                               sup_ratio=sup_ratio, mismatch=mismatch)


def boundary_layer_mismatch(thin: SpectrumResult, mode_index: int, h: float,
                            reference: SemiCylinderResult, ref_mode: int = 0,
                            end: str = "plus", n_eta: int = 33,
                            n_zeta: int = 81) -> float:
    """L2 distance between normalized end layers on a shared stretched grid.

    Both fields are resampled by nearest-triangle interpolation on a grid
    in the stretched end coordinates, unit-normalized in the discrete L2
    sense, and sign-aligned; the result lies in [0, 2].
    """
    spec = reference.result.spec
    profile = spec.profile
    c_h = profile.max_abs()
    zeta_max = min(float(spec.truncation) - 1.0, 1.0 / h)
    eta = np.linspace(0.0, 1.0, n_eta)
    zeta = np.linspace(-c_h, zeta_max, n_zeta)
    ee, zz = np.meshgrid(eta, zeta, indexing="ij")
    mask = zz >= -profile(ee) + 1e-9
    pts_ref = np.column_stack([ee[mask], zz[mask]])
    if end == "plus":
        phys = np.column_stack([h * ee[mask], 1.0 - h * zz[mask]])
    elif end == "minus":
        phys = np.column_stack([h * ee[mask], -1.0 + h * zz[mask]])
    else:
        raise DomainError("end must be 'plus' or 'minus'")
    ref_vals = MeshInterpolator(reference.result.mesh)(
        pts_ref, reference.result.nodal_mode(ref_mode))
    thin_vals = MeshInterpolator(thin.mesh)(phys, thin.nodal_mode(mode_index))
    na = np.linalg.norm(thin_vals)
    nb = np.linalg.norm(ref_vals)
    if na == 0.0 or nb == 0.0:
        return 2.0
    a = thin_vals / na
    b = ref_vals / nb
    if np.dot(a, b) < 0:
        b = -b
    return float(np.linalg.norm(a - b))


# ---------------------------------------------------------------------------
# decay rates

@dataclass
class DecayFit:
    slope: float
    intercept: float
    r_squared: float
    stations: np.ndarray
    log_norms: np.ndarray
    window: tuple

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "window": list(self.window),
                "stations": [float(s) for s in self.stations],
                "log_norms": [float(v) for v in self.log_norms]}


def mode_decay_rate(semi: SemiCylinderResult, mode_index: int = 0,
                    window: Optional[tuple] = None, min_stations: int = 10,
                    field: Optional[np.ndarray] = None,
                    assumed_eigenvalue: Optional[float] = None) -> DecayFit:
    """Fitted axial decay exponent of a trapped channel mode.

    Cross-section L2 norms are measured on grid stations in the interior
    window (default: from max|H| + 1 to the truncation face minus a guard
    that keeps the image of the artificial boundary condition below half
    a percent) and the log-norm is fitted linearly against the station
    coordinate.  ``field`` substitutes a synthetic nodal field for the
    eigenvector (with ``assumed_eigenvalue`` sizing the guard).
    """
    spec = semi.result.spec
    if not isinstance(spec, (SemiCylinder, HalfSemiCylinder)):
        raise DomainError("decay rates are measured on truncated channels")
    lam = float(semi.eigenvalues[mode_index]) if assumed_eigenvalue is None \
        else float(assumed_eigenvalue)
    if lam >= semi.cutoff - semi.margin:
        raise PreconditionError("decay rates need a trapped mode below the cutoff")
    length = float(spec.truncation)
    c_h = spec.profile.max_abs()
    beta = float(np.sqrt(semi.cutoff - lam))
    if window is None:
        guard = max(1.0, np.log(200.0) / (2.0 * beta))
        window = (c_h + 1.0, length - guard)
    lo, hi = window
    na, nl = semi.result.resolution
    spacing = length / nl
    j_lo = int(np.ceil(lo / spacing - 1e-9))
    j_hi = int(np.floor(hi / spacing + 1e-9))
    stations = np.arange(j_lo, j_hi + 1) * spacing
    if len(stations) < min_stations:
        raise PreconditionError(
            f"decay window [{lo:.3g}, {hi:.3g}] holds {len(stations)} stations; "
            f"need at least {min_stations}")
    if isinstance(spec, HalfSemiCylinder):
        eta = np.linspace(0.5, 1.0, 4 * na + 1)
    else:
        eta = np.linspace(0.0, 1.0, 4 * na + 1)
    interp = MeshInterpolator(semi.result.mesh)
    nodal = semi.result.nodal_mode(mode_index) if field is None else np.asarray(field)
    norms = np.empty(len(stations))
    for i, zeta in enumerate(stations):
        pts = np.column_stack([eta, np.full_like(eta, zeta)])
        vals = interp(pts, nodal)
        norms[i] = np.sqrt(np.trapezoid(vals ** 2, eta))
    logs = np.log(norms)
    slope, intercept = np.polyfit(stations, logs, 1)
    resid = logs - (slope * stations + intercept)
    tot = logs - logs.mean()
    r2 = 1.0 - float(resid @ resid) / float(tot @ tot)
    return DecayFit(slope=float(slope), intercept=float(intercept), r_squared=float(r2),
                    stations=stations, log_norms=logs, window=(float(lo), float(hi)))


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepRecord:
    """One h-point of a thin-domain sweep."""

    h: float
    resolution: tuple
    eigenvalues: np.ndarray       # Richardson-extrapolated
    scaled: np.ndarray            # h^2 * eigenvalues
    mesh_error: np.ndarray        # on the scaled values
    references: np.ndarray        # channel values, padded with nan
    deviations: np.ndarray        # |scaled - reference|
    below_mesh_floor: np.ndarray  # deviation < 10x mesh-error estimate
    metrics: list                 # LocalizationMetrics per mode (may be empty)

    def to_row_dicts(self) -> list:
        rows = []
        for p in range(len(self.eigenvalues)):
            met = self.metrics[p] if p < len(self.metrics) else None
            rows.append({
                "h": self.h,
                "p": p + 1,
                "eigenvalue": float(self.eigenvalues[p]),
                "scaled": float(self.scaled[p]),
                "mesh_error": float(self.mesh_error[p]),
                "reference": float(self.references[p]) if np.isfinite(self.references[p]) else "",
                "deviation": float(self.deviations[p]) if np.isfinite(self.deviations[p]) else "",
                "below_mesh_floor": bool(self.below_mesh_floor[p]),
                "band_minus": float(met.band_fractions[0]) if met else "",
                "band_middle": float(met.band_fractions[1]) if met else "",
                "band_plus": float(met.band_fractions[2]) if met else "",
                "sup_ratio": float(met.sup_ratio) if met else "",
                "mismatch": float(met.mismatch) if met and met.mismatch is not None else "",
            })
        return rows


@dataclass
class SweepSeries:
    """All records of one sweep plus the channel reference used."""

    records: list
    reference: Optional[ChannelReference]
    bc_kind: str
    policy: ResolutionPolicy

    def deviation_points(self, p: int = 0):
        return [(r.h, float(r.deviations[p])) for r in self.records
                if p < len(r.deviations) and np.isfinite(r.deviations[p])]

    def crossover_h(self, p: int = 0) -> Optional[float]:
        """Largest h at which the deviation sits below the mesh floor."""
        hs = [r.h for r in self.records if p < len(r.deviations) and r.below_mesh_floor[p]]
        return max(hs) if hs else None


def sweep_h(family, h_list, bc_kind: str, k: int,
            policy: ResolutionPolicy = ResolutionPolicy(),
            metrics: bool = True, on_record=None) -> SweepSeries:
    """Sweep the width parameter, one extrapolated solve pair per h.

    The channel reference is computed once from the family's end channels
    at the policy truncation lengths (merged ascending).  Solve failures
    abort the sweep but completed records ride along on the error.
    """
    h_list = list(h_list)
    if len(h_list) < 3:
        raise PreconditionError("sweeps need at least 3 width values")
    reference = None
    ref_fields = None
    if bc_kind in ("mixed", "all_dirichlet"):
        entries = []
        ref_fields = {}
        seen = set()
        for spec_for, kind in family.end_channels(max(policy.truncation_lengths)):
            key = repr(spec_for.profile) + repr(getattr(spec_for, "head", None))
            if key in seen:
                continue
            seen.add(key)

            def spec_of_length(length, base=spec_for, bk=kind):
                if isinstance(base, SemiCylinder):
                    return SemiCylinder(base.profile, length, base.head), bk
                return HalfSemiCylinder(base.profile, length), bk

            ref = channel_reference(spec_of_length, k, policy)
            entries.append(ref)
        merged = np.sort(np.concatenate([r.values for r in entries]))[:k]
        trapped = np.sort(np.concatenate([r.values[r.trapped] for r in entries]))
        reference = entries[0]
        ref_values = merged
        ref_fields["entries"] = entries
        ref_fields["trapped"] = trapped
    records = []
    try:
        for h in h_list:
            rich = solve_thin_extrapolated(
                lambda refine, hh=h: (family.spec(hh), bc_kind,
                                      policy.thin_resolution(hh, refine)),
                k, policy)
            scaled = h * h * rich.values
            scaled_err = h * h * rich.mesh_error
            refs = np.full(k, np.nan)
            if reference is not None:
                refs[:len(ref_values)] = ref_values[:k]
            deviations = np.abs(scaled - refs)
            floor = deviations < 10.0 * scaled_err
            mets = []
            if metrics:
                trapped_ref = None
                if ref_fields and len(ref_fields["entries"][0].values):
                    first = ref_fields["entries"][0]
                    if first.trapped[0]:
                        trapped_ref = first.fine_solve
                for p in range(k):
                    mets.append(localization_metrics(
                        rich.fine_result, p, h=h,
                        reference=trapped_ref if p == 0 else None))
            rec = SweepRecord(h=h, resolution=rich.fine_result.resolution,
                              eigenvalues=rich.values, scaled=scaled,
                              mesh_error=scaled_err, references=refs,
                              deviations=deviations, below_mesh_floor=floor,
                              metrics=mets)
            records.append(rec)
            if on_record is not None:
                on_record(rec)
    except Exception as exc:
        if isinstance(exc, (KeyboardInterrupt, SystemExit)):
            raise
        raise SweepError(f"sweep aborted at h={h}: {exc}", records=records) from exc
    return SweepSeries(records=records, reference=reference, bc_kind=bc_kind, policy=policy)


# ---------------------------------------------------------------------------
# splitting of the lowest symmetric pair

@dataclass
class SplittingPoint:
    h: float
    lam1: float
    lam2: float
    gap: float
    scaled_half_gap: float        # h^2 * gap / 2
    residual_scale: float
    included: bool
    note: str
    half_even: float              # symmetry-plane Neumann ground state
    half_odd: float               # symmetry-plane Dirichlet ground state
    half_even_rel: float
    half_odd_rel: float


@dataclass
class SplittingReport:
    points: list
    slope: float
    intercept: float
    r_squared: float
    coupling_magnitude: float     # exp(intercept)
    reference: float              # channel eigenvalue used in the abscissa
    rate: float                   # 2 sqrt(cutoff - reference)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept,
            "r_squared": self.r_squared,
            "coupling_magnitude": self.coupling_magnitude,
            "reference": self.reference, "rate": self.rate,
            "points": [{
                "h": p.h, "lambda1": p.lam1, "lambda2": p.lam2, "gap": p.gap,
                "scaled_half_gap": p.scaled_half_gap,
                "residual_scale": p.residual_scale, "included": p.included,
                "note": p.note, "half_even": p.half_even, "half_odd": p.half_odd,
                "half_even_rel": p.half_even_rel, "half_odd_rel": p.half_odd_rel,
            } for p in self.points],
        }


def splitting_analysis(family: CylinderFamily, lam_ref: float, h_list,
                       policy: ResolutionPolicy = ResolutionPolicy(),
                       cutoff: float = np.pi ** 2,
                       validate_halves: bool = True) -> SplittingReport:
    """Measure the gap of the lowest symmetric pair against the tail model.

    The scaled half-gap ``h^2 (lambda2 - lambda1) / 2`` is fitted in log
    against ``2 sqrt(cutoff - lam_ref) / h`` (expected slope -1, intercept
    log of the end-coupling magnitude).  Points whose gap falls below ten
    times the eigenvalue residual scale are excluded with a note.  The
    symmetry-plane Neumann/Dirichlet half problems cross-validate the pair
    on the same fine mesh.
    """
    if not family.is_symmetric():
        raise PreconditionError("the splitting study needs matching end profiles")
    if lam_ref >= cutoff:
        raise PreconditionError("the reference eigenvalue must lie below the cutoff")
    rate = 2.0 * float(np.sqrt(cutoff - lam_ref))
    points = []
    for h in h_list:
        pair = solve_thin_extrapolated(
            lambda refine, hh=h: (family.spec(hh), "mixed",
                                  policy.thin_resolution(hh, refine)),
            2, policy)
        lam1, lam2 = pair.values
        gap = float(lam2 - lam1)
        fine = pair.fine_result
        resid_scale = float(np.max(fine.solution.residuals) * fine.eigenvalues[1])
        included = gap >= 10.0 * resid_scale
        note = "" if included else "gap below 10x eigenvalue residual; excluded"
        if gap <= 0.0:
            # extrapolation noise flipped an unresolved pair
            included = False
            note = "gap not resolved at this width; excluded"
        half_even = half_odd = np.nan
        even_rel = odd_rel = np.nan
        if validate_halves:
            half_spec = family.spec(h, half="z")
            resolution = policy.thin_resolution(h, 2)
            bc_even = {BoundaryTag.LATERAL: BC.DIRICHLET,
                       BoundaryTag.END_PLUS: BC.NEUMANN,
                       BoundaryTag.SYMMETRY: BC.NEUMANN}
            bc_odd = {BoundaryTag.LATERAL: BC.DIRICHLET,
                      BoundaryTag.END_PLUS: BC.NEUMANN,
                      BoundaryTag.SYMMETRY: BC.DIRICHLET}
            even = solve_domain(half_spec, bc_even, resolution, 1,
                                tol=policy.solver_tol, seed=policy.seed)
            odd = solve_domain(half_spec, bc_odd, resolution, 1,
                               tol=policy.solver_tol, seed=policy.seed)
            half_even = float(even.eigenvalues[0])
            half_odd = float(odd.eigenvalues[0])
            even_rel = abs(half_even - fine.eigenvalues[0]) / fine.eigenvalues[0]
            odd_rel = abs(half_odd - fine.eigenvalues[1]) / fine.eigenvalues[1]
        points.append(SplittingPoint(
            h=float(h), lam1=float(lam1), lam2=float(lam2), gap=gap,
            scaled_half_gap=float(h * h * gap / 2.0), residual_scale=resid_scale,
            included=bool(included), note=note, half_even=half_even,
            half_odd=half_odd, half_even_rel=float(even_rel), half_odd_rel=float(odd_rel)))
    usable = [p for p in points if p.included and p.scaled_half_gap > 0]
    if len(usable) < 3:
        raise FitError(f"splitting fit needs at least 3 usable points, got {len(usable)}")
    x = np.array([rate / p.h for p in usable])
    y = np.log([p.scaled_half_gap for p in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    tot = y - y.mean()
    r2 = 1.0 - float(resid @ resid) / float(tot @ tot) if len(usable) > 2 else 1.0
    return SplittingReport(points=points, slope=float(slope), intercept=float(intercept),
                           r_squared=float(r2),
                           coupling_magnitude=float(np.exp(intercept)),
                           reference=float(lam_ref), rate=rate)


# ---------------------------------------------------------------------------
# narrowing-strip series

@dataclass
class TrapezoidPoint:
    h: float
    index: int
    eigenvalue: float
    correction: float             # (h^2 lambda - leading) / h
    predicted: float
    rel_error: float
    mass_near_peak: float         # fraction within |z| <= 3 sqrt(h)
    mesh_error: float


@dataclass
class TrapezoidSeriesReport:
    leading: float
    oscillator_coeff: float
    points: list
    level_gaps: dict              # h -> measured gap between successive corrections

    def to_dict(self) -> dict:
        return {
            "leading": self.leading,
            "oscillator_coeff": self.oscillator_coeff,
            "points": [vars(p) for p in self.points],
            "level_gaps": {repr(k): v for k, v in self.level_gaps.items()},
        }


def trapezoid_series(width_profile: Profile, h_list, j_list,
                     n_across: int = 12,
                     n_along: Optional[Callable[[float], int]] = None,
                     tol: float = 1e-10, seed: int = DEFAULT_SEED) -> TrapezoidSeriesReport:
    """Convergence of narrowing-strip corrections to the oscillator levels.

    For each width the strip is solved with the all-Dirichlet assignment
    at two densities and extrapolated; the report compares
    ``(h^2 lambda_j - leading)/h`` with the predicted level and measures
    the mass fraction within ``|z| <= 3 sqrt(h)``.
    """
    j_list = sorted(int(j) for j in j_list)
    limits = {j: reference_trapezoid_limit(width_profile, j) for j in j_list}
    leading = limits[j_list[0]].leading
    coeff = limits[j_list[0]].oscillator_coeff
    if n_along is None:
        n_along = lambda h: int(np.ceil(48.0 / np.sqrt(h)))
    k = max(j_list) + 1
    points = []
    gaps = {}
    for h in h_list:
        sols = []
        for refine in (1, 2):
            spec = Trapezoid(h, width_profile)
            res = (refine * n_across, refine * n_along(h))
            sols.append(solve_thin(spec, "all_dirichlet", res, k, tol=tol, seed=seed))
        rich = RichardsonValue.combine(sols[0].eigenvalues, sols[1].eigenvalues,
                                       fine_result=sols[1])
        corrections = {}
        for j in j_list:
            lam = float(rich.values[j])
            corr = (h * h * lam - leading) / h
            corrections[j] = corr
            half_width = 3.0 * np.sqrt(h)
            bands = ((-1.0, -half_width), (-half_width, half_width), (half_width, 1.0))
            fracs = band_masses(rich.fine_result, j, bands=bands)
            predicted = limits[j].correction
            points.append(TrapezoidPoint(
                h=float(h), index=j, eigenvalue=lam, correction=float(corr),
                predicted=float(predicted),
                rel_error=float(abs(corr - predicted) / predicted),
                mass_near_peak=float(fracs[1]),
                mesh_error=float(h * h * rich.mesh_error[j] / h)))
        if len(j_list) >= 2:
            gaps[h] = {f"{j0}->{j1}": corrections[j1] - corrections[j0]
                       for j0, j1 in zip(j_list[:-1], j_list[1:])}
    return TrapezoidSeriesReport(leading=float(leading), oscillator_coeff=float(coeff),
                                 points=points, level_gaps=gaps)


# ---------------------------------------------------------------------------
# symmetric Neumann localization

@dataclass
class NeumannHalfPoint:
    h: float
    matched_eigenvalue: float     # odd-symmetry thin eigenvalue (extrapolated)
    target: float                 # reference / h^2
    deviation: float
    index: int                    # 1-based position in the full Neumann spectrum
    spectrum_size: int


@dataclass
class NeumannHalfReport:
    no_prediction: bool
    condition_value: float
    reference: Optional[float]    # extrapolated half-channel eigenvalue
    cutoff: float
    points: list
    indices_increasing: Optional[bool]
    fit: Optional[ExponentialFit]

    def to_dict(self) -> dict:
        return {
            "no_prediction": self.no_prediction,
            "condition_value": self.condition_value,
            "reference": self.reference,
            "cutoff": self.cutoff,
            "indices_increasing": self.indices_increasing,
            "fit": self.fit.to_dict() if self.fit else None,
            "points": [vars(p) for p in self.points],
        }


def neumann_half_localization(profile: Profile, h_list,
                              policy: ResolutionPolicy = ResolutionPolicy(),
                              condition_report=None) -> NeumannHalfReport:
    """Track the high-index Neumann eigenvalue locked to the half-channel mode.

    Needs an end profile even about the midline satisfying the symmetric-
    half condition (otherwise the report carries ``no_prediction``).  For
    each width the odd-in-eta thin eigenvalue comes from the symmetry-cut
    (Dirichlet) half problem and is located inside the full Neumann
    spectrum to find its index N(h).
    """
    from .conditions import condition_symmetric_half
    from .problems import half_interval_eigens

    if condition_report is None:
        condition_report = condition_symmetric_half(half_interval_eigens(1), profile)
    if condition_report.verdict != "satisfied":
        return NeumannHalfReport(no_prediction=True, condition_value=condition_report.value,
                                 reference=None, cutoff=float(np.pi ** 2), points=[],
                                 indices_increasing=None, fit=None)

    def spec_of_length(length):
        return HalfSemiCylinder(profile, length), "half_mixed"

    ref = channel_reference(spec_of_length, 1, policy)
    if not ref.trapped[0]:
        return NeumannHalfReport(no_prediction=True, condition_value=condition_report.value,
                                 reference=float(ref.values[0]), cutoff=ref.cutoff,
                                 points=[], indices_increasing=None, fit=None)
    lam_ref = float(ref.values[0])
    family = CylinderFamily(profile, profile)
    points = []
    for h in h_list:
        rich = solve_thin_extrapolated(
            lambda refine, hh=h: (family.spec(hh, half="eta"), "half_neumann",
                                  policy.thin_resolution(hh, refine)),
            1, policy)
        lam = float(rich.values[0])
        target = lam_ref / h ** 2
        deviation = abs(lam - target)
        # index inside the full Neumann spectrum (widen once if too narrow)
        k_full = int(np.ceil(2.0 * np.sqrt(lam_ref) / (np.pi * h))) + 4
        spec_full = family.spec(h)
        for attempt in range(2):
            full = solve_thin(spec_full, "all_neumann",
                              policy.thin_resolution(h, 2), k_full,
                              tol=max(policy.solver_tol, 1e-9), seed=policy.seed)
            if full.eigenvalues[-1] >= lam:
                break
            if attempt == 1:
                raise DomainError("could not bracket the matched eigenvalue in the "
                                  "full Neumann spectrum after widening once")
            k_full = 2 * k_full + 5
        idx = int(np.argmin(np.abs(full.eigenvalues - target)))
        points.append(NeumannHalfPoint(h=float(h), matched_eigenvalue=lam,
                                       target=float(target), deviation=float(deviation),
                                       index=idx + 1, spectrum_size=k_full))
    indices = [p.index for p in points]
    increasing = all(b > a for a, b in zip(indices, indices[1:]))
    fit = None
    try:
        fit = fit_exponential([(p.h, p.deviation) for p in points])
    except FitError:
        fit = None
    return NeumannHalfReport(no_prediction=False, condition_value=condition_report.value,
                             reference=lam_ref, cutoff=ref.cutoff, points=points,
                             indices_increasing=increasing, fit=fit)
