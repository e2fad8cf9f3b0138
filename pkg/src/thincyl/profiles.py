"""End-profile functions defined on the unit parameter interval.

A profile describes how far a cylinder end is pushed in or out, as a
function of the normalized transverse coordinate ``eta`` in [0, 1].
Two representations are supported: a finite trigonometric sum with
frequencies ``2*pi*k`` (periodic, smooth) and a piecewise-linear table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError

__all__ = ["Profile", "fourier_profile", "table_profile", "zero_profile"]


@dataclass(frozen=True)
class Profile:
    """Profile function on ``eta`` in [0, 1].

    For ``kind == "fourier"`` the value is
    ``a0 + sum_k cos_coeffs[k-1]*cos(2*pi*k*eta) + sin_coeffs[k-1]*sin(2*pi*k*eta)``.
    For ``kind == "table"`` the value interpolates ``values`` linearly over
    the strictly increasing ``nodes``, which must start at 0 and end at 1.
    """

    kind: str
    a0: float = 0.0
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()
    nodes: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fourier", "table"):
            raise DomainError(f"unknown profile kind {self.kind!r}")
        if self.kind == "table":
            nodes = np.asarray(self.nodes, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if nodes.ndim != 1 or nodes.size < 2 or nodes.size != values.size:
                raise DomainError("table profile needs matching nodes/values with at least 2 entries")
            if not (abs(nodes[0]) < 1e-15 and abs(nodes[-1] - 1.0) < 1e-15):
                raise DomainError("table nodes must start at 0 and end at 1")
            if not np.all(np.diff(nodes) > 0):
                raise DomainError("table nodes must be strictly increasing")
            if not np.all(np.isfinite(values)):
                raise DomainError("table values must be finite")

    def __call__(self, eta):
        """Evaluate the profile at ``eta`` (scalar or array) in [0, 1]."""
        eta_arr = np.asarray(eta, dtype=float)
        if np.any(eta_arr < -1e-15) or np.any(eta_arr > 1.0 + 1e-15):
            raise DomainError("profile argument outside [0, 1]")
        eta_arr = np.clip(eta_arr, 0.0, 1.0)
        if self.kind == "fourier":
            out = np.full_like(eta_arr, self.a0)
            for k, a in enumerate(self.cos_coeffs, start=1):
                if a != 0.0:
                    out = out + a * np.cos(2.0 * np.pi * k * eta_arr)
            for k, b in enumerate(self.sin_coeffs, start=1):
                if b != 0.0:
                    out = out + b * np.sin(2.0 * np.pi * k * eta_arr)
        else:
            out = np.interp(eta_arr, self.nodes, self.values)
        return out if np.ndim(eta) else float(out)

    @property
    def is_smooth(self) -> bool:
        """True when second derivatives are available in closed form."""
        return self.kind == "fourier"

    def second_derivative(self, eta):
        """Closed-form second derivative; only defined for fourier profiles."""
        if self.kind != "fourier":
            raise PreconditionError("second derivative requires a fourier profile")
        eta_arr = np.asarray(eta, dtype=float)
        out = np.zeros_like(eta_arr)
        for k, a in enumerate(self.cos_coeffs, start=1):
            w = 2.0 * np.pi * k
            out = out - a * w * w * np.cos(w * eta_arr)
        for k, b in enumerate(self.sin_coeffs, start=1):
            w = 2.0 * np.pi * k
            out = out - b * w * w * np.sin(w * eta_arr)
        return out if np.ndim(eta) else float(out)

    def max_abs(self, samples: int = 2001) -> float:
        """Sampled bound on |profile| over [0, 1]."""
        return float(np.max(np.abs(self(np.linspace(0.0, 1.0, samples)))))

    def kink_points(self) -> tuple[float, ...]:
        """Interior points where the profile may be non-differentiable."""
        if self.kind == "table":
            return tuple(float(t) for t in self.nodes[1:-1])
        return ()

    def is_even(self, tol: float = 1e-10, samples: int = 513) -> bool:
        """Sampled check of mirror symmetry about eta = 1/2."""
        s = np.linspace(0.0, 1.0, samples)
        return bool(np.max(np.abs(self(s) - self(1.0 - s))) <= tol)


def _strip_trailing_zeros(seq) -> tuple:
    out = [float(v) for v in seq]
    while out and out[-1] == 0.0:
        out.pop()
    return tuple(out)


def fourier_profile(a0: float = 0.0, cos_coeffs=(), sin_coeffs=()) -> Profile:
    """Canonical fourier-profile constructor (trailing zero coefficients dropped)."""
    return Profile(kind="fourier", a0=float(a0),
                   cos_coeffs=_strip_trailing_zeros(cos_coeffs),
                   sin_coeffs=_strip_trailing_zeros(sin_coeffs))


def table_profile(nodes, values) -> Profile:
    return Profile(kind="table",
                   nodes=tuple(float(t) for t in nodes),
                   values=tuple(float(v) for v in values))


def zero_profile() -> Profile:
    return fourier_profile(0.0)


def builtin_profiles() -> dict:
    """Named profile family used by demonstrations and consistency tests."""
    return {
        "flat": zero_profile(),
        "inward_cosine": fourier_profile(0.0, [-1.0]),
        "gentle_inward": fourier_profile(0.0, [-0.3]),
        "outward_cosine": fourier_profile(0.0, [1.0]),
        "skewed": fourier_profile(0.0, [-0.5], [0.4]),
        "two_mode": fourier_profile(0.0, [-0.6, 0.2]),
        "tent_down": table_profile([0.0, 0.5, 1.0], [0.0, -1.0, 0.0]),
    }
