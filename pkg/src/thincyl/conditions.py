"""Sufficient-condition evaluators for trapped modes below the cutoff.

Every condition is a sign test on an integral built from the first
transverse eigenpair.  On the unit interval the eigenpair is analytic
(phi_1 = sqrt(2) sin(pi eta)), so the integrals reduce to weighted
averages of the profile:

* gradient form:     integral of H * (|phi_1'|^2 - mu_1 phi_1^2)
* laplacian form:    integral of phi_1^2 * H''   (twice the gradient form)
* first Fourier law: integral of H * cos(2 pi eta)  (equals a_1 / 2)
* symmetric half:    gradient form built from the halved-interval pair

A strictly negative value certifies an eigenvalue below the continuous
spectrum of the matching channel problem; the conditions are sufficient,
not necessary.  For trigonometric-sum profiles the integrals are evaluated
in closed form (so scaling the profile scales the value exactly); table
profiles fall back to adaptive quadrature split at the kink points.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, PreconditionError
from .problems import HalfIntervalEigens, IntervalEigens, PolygonEigens
from .profiles import Profile

__all__ = [
    "ConditionReport",
    "RayleighScanResult",
    "condition_gradient_form",
    "condition_laplacian_form",
    "condition_fourier_first_coeff",
    "condition_symmetric_half",
    "condition_epsilon_order",
    "rayleigh_scan",
    "default_eps_grid",
    "integrand_samples",
]

INCONCLUSIVE_BAND = 1e-10
_QUAD_WARN = 1e-10


@dataclass
class ConditionReport:
    """Outcome of one sufficient-condition integral."""

    condition_id: str
    value: float
    verdict: str                  # "satisfied" | "not_satisfied"
    inconclusive: bool
    quad_error: float
    accuracy_warning: bool
    inputs_digest: str
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition_id,
            "value": self.value,
            "verdict": self.verdict,
            "inconclusive": self.inconclusive,
            "quad_error": self.quad_error,
            "accuracy_warning": self.accuracy_warning,
            "inputs_digest": self.inputs_digest,
            **{k: v for k, v in self.extras.items()},
        }


def _digest(*parts) -> str:
    text = "|".join(repr(p) for p in parts)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _report(condition_id, value, quad_error, digest, extras=None) -> ConditionReport:
    value = float(value)
    inconclusive = abs(value) <= INCONCLUSIVE_BAND
    verdict = "satisfied" if value < -INCONCLUSIVE_BAND else "not_satisfied"
    return ConditionReport(condition_id=condition_id, value=value, verdict=verdict,
                           inconclusive=inconclusive, quad_error=float(quad_error),
                           accuracy_warning=bool(quad_error > _QUAD_WARN * max(1.0, abs(value))),
                           inputs_digest=digest, extras=extras or {})


def _quad_profile(f, profile: Profile, lo=0.0, hi=1.0):
    pts = [p for p in profile.kink_points() if lo < p < hi]
    val, err = quad(f, lo, hi, points=pts or None, limit=200)
    return val, err


def _polygon_element_data(eigens: PolygonEigens):
    mesh = eigens.mesh
    mode = eigens.nodal_modes[:, 0]
    p = mesh.nodes[mesh.triangles]
    x, y = p[:, :, 0], p[:, :, 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    areas = 0.5 * det
    grads = np.zeros((len(det), 2))
    vals = mode[mesh.triangles]
    for k in range(3):
        k1, k2 = (k + 1) % 3, (k + 2) % 3
        grads[:, 0] += vals[:, k] * (y[:, k1] - y[:, k2]) / det
        grads[:, 1] += vals[:, k] * (x[:, k2] - x[:, k1]) / det
    centroids = p.mean(axis=1)
    phi_c = vals.mean(axis=1)
    return areas, grads, centroids, phi_c


def condition_gradient_form(eigens, profile) -> ConditionReport:
    """Sign test on the gradient-weighted profile average.

    ``eigens`` is the interval eigenpair object or a polygon FEM pair;
    ``profile`` is a Profile on the interval or a callable H(y1, y2) on
    the polygon (element midpoint rule on the eigenfunction mesh).
    """
    if isinstance(eigens, IntervalEigens):
        mu1 = float(eigens.eigenvalues[0])
        if isinstance(profile, Profile) and profile.kind == "fourier":
            # |phi_1'|^2 - mu_1 phi_1^2 = 2 pi^2 cos(2 pi eta): only the
            # first cosine coefficient survives
            value = np.pi ** 2 * (profile.cos_coeffs[0] if profile.cos_coeffs else 0.0)
            return _report("gradient_form", value, 0.0, _digest("gradient", profile))
        f = lambda e: profile(e) * (eigens.dphi(1, e) ** 2 - mu1 * eigens.phi(1, e) ** 2)
        value, err = _quad_profile(f, profile)
        return _report("gradient_form", value, err, _digest("gradient", profile))
    if isinstance(eigens, PolygonEigens):
        mu1 = float(eigens.eigenvalues[0])
        areas, grads, centroids, phi_c = _polygon_element_data(eigens)
        hvals = np.asarray(profile(centroids[:, 0], centroids[:, 1]), dtype=float)
        gsq = np.sum(grads ** 2, axis=1)
        value = float(np.sum(areas * hvals * (gsq - mu1 * phi_c ** 2)))
        return _report("gradient_form", value, 0.0,
                       _digest("gradient-polygon", eigens.mesh.n_nodes),
                       extras={"quadrature": "element midpoint rule"})
    raise DomainError("unsupported eigenpair object for the gradient form")


def condition_laplacian_form(eigens: IntervalEigens, profile: Profile) -> ConditionReport:
    """Sign test on the eigenfunction-weighted profile curvature.

    Requires a twice-differentiable profile (trigonometric sums only);
    table profiles are rejected.  The report carries the cross-check that
    this integral equals twice the gradient form.
    """
    if not isinstance(profile, Profile) or profile.kind != "fourier":
        raise PreconditionError("the curvature form needs a twice-differentiable "
                                "(fourier) profile; table profiles are rejected")
    # phi_1^2 = 1 - cos(2 pi eta): the mean of H'' vanishes and only the
    # first cosine coefficient survives with weight -1/2
    a1 = profile.cos_coeffs[0] if profile.cos_coeffs else 0.0
    value = 2.0 * np.pi ** 2 * a1
    grad = condition_gradient_form(eigens, profile)
    gap = value - 2.0 * grad.value
    rep = _report("laplacian_form", value, 0.0, _digest("laplacian", profile),
                  extras={"gradient_form_value": grad.value,
                          "equivalence_gap": float(gap)})
    if abs(gap) > 1e-9 * max(1.0, abs(value)):
        rep.accuracy_warning = True
    return rep


def condition_fourier_first_coeff(profile: Profile) -> ConditionReport:
    """Sign of the profile's first cosine Fourier coefficient (times 1/2)."""
    if profile.kind == "fourier":
        value = (profile.cos_coeffs[0] if profile.cos_coeffs else 0.0) / 2.0
        return _report("fourier_first_coeff", value, 0.0, _digest("fourier2d", profile))
    f = lambda e: profile(e) * np.cos(2.0 * np.pi * e)
    value, err = _quad_profile(f, profile)
    return _report("fourier_first_coeff", value, err, _digest("fourier2d", profile))


def condition_symmetric_half(eigens: HalfIntervalEigens, profile: Profile,
                             even_tol: float = 1e-10) -> ConditionReport:
    """Gradient-form sign test built from the halved-interval eigenpair.

    The profile must be even about the midpoint (sampled check); the
    integral runs over the half interval in the cut-distance coordinate
    s = eta - 1/2.
    """
    if not profile.is_even(tol=even_tol):
        raise PreconditionError("the symmetric-half condition needs a profile "
                                "even about the midpoint")
    if not isinstance(eigens, HalfIntervalEigens):
        raise DomainError("expected halved-interval eigenpairs")
    if profile.kind == "fourier":
        # |phi^'|^2 - mu (phi^)^2 = 4 pi^2 cos(2 pi s); under eta = s + 1/2
        # the first cosine coefficient flips sign and contributes -1/4
        a1 = profile.cos_coeffs[0] if profile.cos_coeffs else 0.0
        value = -np.pi ** 2 * a1
        return _report("symmetric_half", value, 0.0, _digest("symhalf", profile))
    mu1 = float(eigens.eigenvalues[0])
    f = lambda s: profile(s + 0.5) * (eigens.dphi(1, s) ** 2 - mu1 * eigens.phi(1, s) ** 2)
    pts = [p - 0.5 for p in profile.kink_points() if 0.5 < p < 1.0]
    value, err = quad(f, 0.0, 0.5, points=pts or None, limit=200)
    return _report("symmetric_half", value, err, _digest("symhalf", profile))


def _weighted_integrals(eigens: IntervalEigens, profile: Profile, weight):
    """Integrals of weight(H) * |phi_1'|^2 and weight(H) * phi_1^2."""
    mu1 = float(eigens.eigenvalues[0])
    fa = lambda e: weight(profile(e)) * eigens.dphi(1, e) ** 2
    fb = lambda e: weight(profile(e)) * eigens.phi(1, e) ** 2
    a, ea = _quad_profile(fa, profile)
    b, eb = _quad_profile(fb, profile)
    return a, b, ea + eb, mu1


def condition_epsilon_order(eigens: IntervalEigens, profile: Profile) -> ConditionReport:
    """First-order-in-decay-rate sign test: 1/2 + I[H^2 |phi'|^2] - mu1 I[H^2 phi^2].

    For a straight-line profile this equals 1/2 + I[|H'|^2 phi^2] > 0,
    which is why harmonic profiles cannot certify a trapped mode through
    the exponential trial family.
    """
    a, b, err, mu1 = _weighted_integrals(eigens, profile, lambda v: v * v)
    value = 0.5 + a - mu1 * b
    return _report("epsilon_order", value, err, _digest("epsorder", profile))


def default_eps_grid() -> np.ndarray:
    """40 logarithmic points in [1e-3, 1]."""
    return np.geomspace(1e-3, 1.0, 40)


@dataclass
class RayleighScanResult:
    """Quotient of the exponential trial family over a decay-rate grid."""

    eps_grid: np.ndarray
    quotients: np.ndarray
    best_eps: float
    best_quotient: float
    cutoff: float
    verdict: str                    # "satisfied" if the quotient dips below the cutoff
    slope_at_zero: float            # 2 x gradient-form integral
    epsilon_order_value: float
    gradient_form_value: float

    def to_dict(self) -> dict:
        return {
            "eps_grid": [float(e) for e in self.eps_grid],
            "quotients": [float(q) for q in self.quotients],
            "best_eps": self.best_eps,
            "best_quotient": self.best_quotient,
            "cutoff": self.cutoff,
            "verdict": self.verdict,
            "slope_at_zero": self.slope_at_zero,
            "epsilon_order_value": self.epsilon_order_value,
            "gradient_form_value": self.gradient_form_value,
        }


def rayleigh_scan(eigens, profile, eps_grid=None) -> RayleighScanResult:
    """Scan the exponential trial family exp(-eps*zeta) phi_1(eta).

    The quotient at each decay rate eps is evaluated from the exact
    cross-section integrals (weight exp(2*eps*H)), not from a mesh:

        Q(eps) = eps^2 + I[e^{2 eps H} |phi'|^2] / I[e^{2 eps H} phi^2].

    Q tends to the cutoff as eps -> 0+ for any profile, with initial slope
    twice the gradient-form integral; a dip below the cutoff certifies a
    trapped mode.
    """
    if eps_grid is None:
        eps_grid = default_eps_grid()
    eps_grid = np.asarray(eps_grid, dtype=float)
    if len(eps_grid) == 0 or np.any(eps_grid <= 0) or np.any(np.diff(eps_grid) <= 0):
        raise DomainError("eps grid must be positive and strictly ascending")

    if isinstance(eigens, IntervalEigens):
        mu1 = float(eigens.eigenvalues[0])

        def quotient(eps):
            a, b, _, _ = _weighted_integrals(eigens, profile,
                                             lambda v: np.exp(2.0 * eps * v))
            return eps * eps + a / b

        grad = condition_gradient_form(eigens, profile)
        eps_order = condition_epsilon_order(eigens, profile)
    elif isinstance(eigens, PolygonEigens):
        mu1 = float(eigens.eigenvalues[0])
        areas, grads, centroids, phi_c = _polygon_element_data(eigens)
        hvals = np.asarray(profile(centroids[:, 0], centroids[:, 1]), dtype=float)
        gsq = np.sum(grads ** 2, axis=1)

        def quotient(eps):
            w = np.exp(2.0 * eps * hvals)
            return eps * eps + float(np.sum(areas * w * gsq) / np.sum(areas * w * phi_c ** 2))

        grad = condition_gradient_form(eigens, profile)
        h2v = hvals ** 2
        eps_val = 0.5 + float(np.sum(areas * h2v * gsq) - mu1 * np.sum(areas * h2v * phi_c ** 2))
        eps_order = _report("epsilon_order", eps_val, 0.0, _digest("epsorder-polygon", len(areas)))
    else:
        raise DomainError("unsupported eigenpair object for the trial scan")

    quotients = np.array([quotient(e) for e in eps_grid])
    best = int(np.argmin(quotients))
    verdict = "satisfied" if quotients[best] < mu1 else "not_satisfied"
    return RayleighScanResult(
        eps_grid=eps_grid, quotients=quotients,
        best_eps=float(eps_grid[best]), best_quotient=float(quotients[best]),
        cutoff=mu1, verdict=verdict,
        slope_at_zero=2.0 * grad.value,
        epsilon_order_value=eps_order.value,
        gradient_form_value=grad.value)


def integrand_samples(condition_id: str, profile: Profile, n: int = 401):
    """Sample the condition integrand on a uniform grid (for --explain CSV)."""
    eigens = IntervalEigens(count=1)
    mu1 = float(eigens.eigenvalues[0])
    if condition_id == "gradient_form":
        grid = np.linspace(0.0, 1.0, n)
        f = profile(grid) * (eigens.dphi(1, grid) ** 2 - mu1 * eigens.phi(1, grid) ** 2)
    elif condition_id == "laplacian_form":
        grid = np.linspace(0.0, 1.0, n)
        f = eigens.phi(1, grid) ** 2 * profile.second_derivative(grid)
    elif condition_id == "fourier_first_coeff":
        grid = np.linspace(0.0, 1.0, n)
        f = profile(grid) * np.cos(2.0 * np.pi * grid)
    elif condition_id == "symmetric_half":
        half = HalfIntervalEigens(count=1)
        grid = np.linspace(0.0, 0.5, n)
        f = profile(grid + 0.5) * (half.dphi(1, grid) ** 2 -
                                   float(half.eigenvalues[0]) * half.phi(1, grid) ** 2)
    elif condition_id == "epsilon_order":
        grid = np.linspace(0.0, 1.0, n)
        f = profile(grid) ** 2 * (eigens.dphi(1, grid) ** 2 - mu1 * eigens.phi(1, grid) ** 2)
    else:
        raise DomainError(f"unknown condition id {condition_id!r}")
    return grid, np.asarray(f, dtype=float)
