"""Declarative geometry specifications for every supported domain family."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError, GeometryError
from .profiles import Profile

__all__ = [
    "BoundaryTag",
    "HeadSpec",
    "StraightCylinder",
    "DistortedCylinder",
    "Trapezoid",
    "SemiCylinder",
    "HalfSemiCylinder",
    "Dumbbell",
    "DomainSpec",
]


class BoundaryTag(enum.IntEnum):
    """Classification of boundary edges; every edge carries exactly one tag."""

    LATERAL = 0
    END_PLUS = 1
    END_MINUS = 2
    ARTIFICIAL = 3
    SYMMETRY = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @staticmethod
    def from_label(label: str) -> "BoundaryTag":
        try:
            return BoundaryTag[label.upper()]
        except KeyError:
            raise DomainError(f"unknown boundary tag {label!r}") from None


@dataclass(frozen=True)
class HeadSpec:
    """Axis-aligned rectangular head in stretched units.

    ``width`` is measured across the channel (must be >= 1 so the head
    covers the channel opening) and ``height`` along the axis.  Both are
    snapped to the mesh grid at build time.
    """

    width: float = 1.5
    height: float = 1.5

    def __post_init__(self):
        if self.width < 1.0:
            raise DomainError("head width must cover the channel opening (width >= 1)")
        if self.height <= 0.0:
            raise DomainError("head height must be positive")


@dataclass(frozen=True)
class StraightCylinder:
    """Rectangle (0, h) x (-1, 1)."""

    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise DomainError("h must be positive")

    @property
    def kind(self) -> str:
        return "straight_cylinder_2d"


@dataclass(frozen=True)
class DistortedCylinder:
    """Thin cylinder of width h whose ends follow h-scaled profiles.

    ``half`` selects a symmetric sub-domain: ``"z"`` keeps z > 0 (the cut
    face gets the symmetry tag), ``"eta"`` keeps y > h/2 likewise.
    """

    h: float
    profile_plus: Profile
    profile_minus: Profile
    half: Optional[str] = None

    def __post_init__(self):
        if self.h <= 0:
            raise DomainError("h must be positive")
        if self.half not in (None, "z", "eta"):
            raise DomainError("half must be None, 'z' or 'eta'")
        eta = np.linspace(0.0, 1.0, 801)
        gap = (1.0 + self.h * self.profile_plus(eta)) - (-1.0 - self.h * self.profile_minus(eta))
        if np.min(gap) <= 0.0:
            raise GeometryError("cylinder ends intersect: 1 + h*Hp must exceed -1 - h*Hm")

    @property
    def kind(self) -> str:
        return "distorted_cylinder_2d"


@dataclass(frozen=True)
class Trapezoid:
    """Thin strip {|z| < 1, 0 < y < h*H(z)} with a z-dependent width profile.

    ``width_profile`` is parameterized over [0, 1] via eta = (z + 1)/2.
    """

    h: float
    width_profile: Profile

    def __post_init__(self):
        if self.h <= 0:
            raise DomainError("h must be positive")
        vals = self.width_profile(np.linspace(0.0, 1.0, 801))
        if np.min(vals) <= 0.0:
            raise GeometryError("trapezoid width profile must stay positive")

    def width_of_z(self, z):
        return self.width_profile((np.asarray(z, dtype=float) + 1.0) / 2.0)

    @property
    def kind(self) -> str:
        return "trapezoid_2d"


@dataclass(frozen=True)
class SemiCylinder:
    """Truncated half-infinite channel in stretched coordinates.

    The domain is {eta in (0,1), -H(eta) < zeta < L}; the face zeta = L is
    artificial (truncation).  An optional rectangular head may be glued at
    zeta < 0, in which case the profile must vanish (flat interface).
    """

    profile: Profile
    truncation: float
    head: Optional[HeadSpec] = None

    def __post_init__(self):
        if self.truncation <= self.profile.max_abs() + 1.0:
            raise DomainError("truncation length must exceed max|H| + 1")
        if self.head is not None and self.profile.max_abs() > 1e-14:
            raise DomainError("a head requires a flat end profile")

    @property
    def kind(self) -> str:
        return "semicylinder_2d"


@dataclass(frozen=True)
class HalfSemiCylinder:
    """Half of the truncated channel: eta in (1/2, 1), symmetry face at eta = 1/2."""

    profile: Profile
    truncation: float

    def __post_init__(self):
        if self.truncation <= self.profile.max_abs() + 1.0:
            raise DomainError("truncation length must exceed max|H| + 1")

    @property
    def kind(self) -> str:
        return "half_semicylinder_2d"


@dataclass(frozen=True)
class Dumbbell:
    """Thin channel (0,h) x (-1,1) with h-scaled rectangular heads at both ends."""

    h: float
    head_plus: HeadSpec = HeadSpec()
    head_minus: HeadSpec = HeadSpec()

    def __post_init__(self):
        if self.h <= 0:
            raise DomainError("h must be positive")

    @property
    def kind(self) -> str:
        return "dumbbell_2d"


DomainSpec = Union[
    StraightCylinder,
    DistortedCylinder,
    Trapezoid,
    SemiCylinder,
    HalfSemiCylinder,
    Dumbbell,
]
