"""Sectioned key-value configuration (schema = 1).

Domain specifications and experiment descriptions share one INI-style
format, documented in the README.  Profiles live in ``[profile.<name>]``
sections with either trigonometric coefficients (``a0``, ``a1``..,
``b1``..) or table ``nodes``/``values`` lists; domains in ``[domain]``;
experiment-wide knobs in ``[experiment]`` plus kind-specific sections.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .domains import (
    DistortedCylinder,
    DomainSpec,
    Dumbbell,
    HalfSemiCylinder,
    HeadSpec,
    SemiCylinder,
    StraightCylinder,
    Trapezoid,
)
from .errors import ConfigError
from .profiles import Profile, fourier_profile, table_profile, zero_profile

__all__ = [
    "SCHEMA_VERSION",
    "EXPERIMENT_KINDS",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "profile_from_section",
    "profile_to_section",
    "domain_from_config",
    "domain_to_config",
    "dumps_domain",
    "loads_domain",
]

SCHEMA_VERSION = 1
EXPERIMENT_KINDS = ("cross-section", "condition", "semicylinder", "thin-sweep",
                    "trapezoid", "splitting", "dumbbell", "neumann-half", "validate")


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=(";", "#"))


def _floats(text: str) -> list:
    return [float(tok) for tok in text.replace(",", " ").split()]


def _check_schema(section) -> None:
    raw = section.get("schema")
    if raw is None:
        raise ConfigError("missing 'schema' field")
    if int(raw) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {raw!r} (expected {SCHEMA_VERSION})")


# ---------------------------------------------------------------------------
# profiles

def profile_from_section(section) -> Profile:
    kind = section.get("kind", "fourier").strip()
    if kind == "fourier":
        a0 = float(section.get("a0", "0"))
        cos_coeffs = []
        sin_coeffs = []
        k = 1
        while f"a{k}" in section or f"b{k}" in section:
            cos_coeffs.append(float(section.get(f"a{k}", "0")))
            sin_coeffs.append(float(section.get(f"b{k}", "0")))
            k += 1
        return fourier_profile(a0, cos_coeffs, sin_coeffs)  # canonicalizes zeros
    if kind == "table":
        if "nodes" not in section or "values" not in section:
            raise ConfigError("table profile needs 'nodes' and 'values'")
        return table_profile(_floats(section["nodes"]), _floats(section["values"]))
    raise ConfigError(f"unknown profile kind {kind!r}")


def profile_to_section(profile: Profile) -> dict:
    if profile.kind == "fourier":
        out = {"kind": "fourier", "a0": repr(profile.a0)}
        for k, a in enumerate(profile.cos_coeffs, start=1):
            out[f"a{k}"] = repr(a)
        for k, b in enumerate(profile.sin_coeffs, start=1):
            out[f"b{k}"] = repr(b)
        return out
    return {"kind": "table",
            "nodes": ", ".join(repr(t) for t in profile.nodes),
            "values": ", ".join(repr(v) for v in profile.values)}


# ---------------------------------------------------------------------------
# domains

def _head_from_section(section) -> HeadSpec:
    return HeadSpec(width=float(section.get("width", "1.5")),
                    height=float(section.get("height", "1.5")))


def domain_from_config(cfg: configparser.ConfigParser) -> DomainSpec:
    if "domain" not in cfg:
        raise ConfigError("missing [domain] section")
    dom = cfg["domain"]
    _check_schema(dom)
    kind = dom.get("kind", "").strip()

    def prof(name: str, default: Optional[Profile] = None) -> Profile:
        sec = f"profile.{name}"
        if sec in cfg:
            return profile_from_section(cfg[sec])
        if default is not None:
            return default
        raise ConfigError(f"missing [{sec}] section")

    if kind == "straight_cylinder_2d":
        return StraightCylinder(h=float(dom["h"]))
    if kind == "distorted_cylinder_2d":
        half = dom.get("half", "").strip() or None
        return DistortedCylinder(h=float(dom["h"]),
                                 profile_plus=prof("plus", zero_profile()),
                                 profile_minus=prof("minus", zero_profile()),
                                 half=half)
    if kind == "trapezoid_2d":
        return Trapezoid(h=float(dom["h"]), width_profile=prof("width"))
    if kind == "semicylinder_2d":
        head = _head_from_section(cfg["head"]) if "head" in cfg else None
        return SemiCylinder(profile=prof("end", zero_profile()),
                            truncation=float(dom["truncation"]), head=head)
    if kind == "half_semicylinder_2d":
        return HalfSemiCylinder(profile=prof("end", zero_profile()),
                                truncation=float(dom["truncation"]))
    if kind == "dumbbell_2d":
        hp = _head_from_section(cfg["head.plus"]) if "head.plus" in cfg else HeadSpec()
        hm = _head_from_section(cfg["head.minus"]) if "head.minus" in cfg else hp
        return Dumbbell(h=float(dom["h"]), head_plus=hp, head_minus=hm)
    raise ConfigError(f"unknown domain kind {kind!r}")


def domain_to_config(spec: DomainSpec) -> configparser.ConfigParser:
    cfg = _parser()
    cfg["domain"] = {"schema": str(SCHEMA_VERSION), "kind": spec.kind}
    if isinstance(spec, StraightCylinder):
        cfg["domain"]["h"] = repr(spec.h)
    elif isinstance(spec, DistortedCylinder):
        cfg["domain"]["h"] = repr(spec.h)
        if spec.half:
            cfg["domain"]["half"] = spec.half
        cfg["profile.plus"] = profile_to_section(spec.profile_plus)
        cfg["profile.minus"] = profile_to_section(spec.profile_minus)
    elif isinstance(spec, Trapezoid):
        cfg["domain"]["h"] = repr(spec.h)
        cfg["profile.width"] = profile_to_section(spec.width_profile)
    elif isinstance(spec, SemiCylinder):
        cfg["domain"]["truncation"] = repr(spec.truncation)
        cfg["profile.end"] = profile_to_section(spec.profile)
        if spec.head is not None:
            cfg["head"] = {"width": repr(spec.head.width),
                           "height": repr(spec.head.height)}
    elif isinstance(spec, HalfSemiCylinder):
        cfg["domain"]["truncation"] = repr(spec.truncation)
        cfg["profile.end"] = profile_to_section(spec.profile)
    elif isinstance(spec, Dumbbell):
        cfg["domain"]["h"] = repr(spec.h)
        cfg["head.plus"] = {"width": repr(spec.head_plus.width),
                            "height": repr(spec.head_plus.height)}
        cfg["head.minus"] = {"width": repr(spec.head_minus.width),
                             "height": repr(spec.head_minus.height)}
    else:
        raise ConfigError(f"cannot serialize {type(spec).__name__}")
    return cfg


def dumps_domain(spec: DomainSpec) -> str:
    buf = io.StringIO()
    domain_to_config(spec).write(buf)
    return buf.getvalue()


def loads_domain(text: str) -> DomainSpec:
    cfg = _parser()
    cfg.read_string(text)
    return domain_from_config(cfg)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentConfig:
    """Typed view of one experiment configuration file."""

    kind: str
    seed: int
    k: int
    tol: float
    raw: configparser.ConfigParser = field(repr=False)

    # sweep knobs
    h_list: list = field(default_factory=list)
    n_across: int = 8
    truncation_lengths: tuple = (6.0, 8.0)
    j_list: list = field(default_factory=lambda: [0, 1])
    # channel knobs
    truncation: float = 8.0
    bc_kind: str = "mixed"
    truncation_bc: str = "dirichlet"
    resolution: tuple = (8, 64)
    # condition knobs
    eps_lo: float = 1e-3
    eps_hi: float = 1.0
    eps_count: int = 40
    # cross-section knobs
    section_kind: str = "interval"
    vertices: list = field(default_factory=list)
    refinements: int = 4

    def domain(self) -> DomainSpec:
        return domain_from_config(self.raw)

    def profile(self, name: str) -> Profile:
        sec = f"profile.{name}"
        if sec not in self.raw:
            raise ConfigError(f"missing [{sec}] section")
        return profile_from_section(self.raw[sec])

    def has_profile(self, name: str) -> bool:
        return f"profile.{name}" in self.raw

    def eps_grid(self) -> np.ndarray:
        return np.geomspace(self.eps_lo, self.eps_hi, self.eps_count)


def parse_config(text: str) -> ExperimentConfig:
    cfg = _parser()
    try:
        cfg.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    if "experiment" not in cfg:
        raise ConfigError("missing [experiment] section")
    exp = cfg["experiment"]
    _check_schema(exp)
    kind = exp.get("kind", "").strip()
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; "
                          f"expected one of {', '.join(EXPERIMENT_KINDS)}")
    out = ExperimentConfig(
        kind=kind,
        seed=int(exp.get("seed", "20240817")),
        k=int(exp.get("k", "2")),
        tol=float(exp.get("tol", "1e-10")),
        raw=cfg,
    )
    if "sweep" in cfg:
        sw = cfg["sweep"]
        if "h_list" in sw:
            out.h_list = _floats(sw["h_list"])
        out.n_across = int(sw.get("n_across", str(out.n_across)))
        if "truncation_lengths" in sw:
            out.truncation_lengths = tuple(_floats(sw["truncation_lengths"]))
        if "j_list" in sw:
            out.j_list = [int(v) for v in _floats(sw["j_list"])]
    if "channel" in cfg:
        ch = cfg["channel"]
        out.truncation = float(ch.get("truncation", str(out.truncation)))
        out.bc_kind = ch.get("bc", out.bc_kind).strip()
        out.truncation_bc = ch.get("truncation_bc", out.truncation_bc).strip()
        na = int(ch.get("n_across", "8"))
        nl = int(ch.get("n_along", str(int(na * out.truncation))))
        out.resolution = (na, nl)
    if "condition" in cfg:
        co = cfg["condition"]
        out.eps_lo = float(co.get("eps_lo", str(out.eps_lo)))
        out.eps_hi = float(co.get("eps_hi", str(out.eps_hi)))
        out.eps_count = int(co.get("eps_count", str(out.eps_count)))
    if "cross_section" in cfg:
        cs = cfg["cross_section"]
        out.section_kind = cs.get("kind", "interval").strip()
        out.refinements = int(cs.get("refinements", str(out.refinements)))
        if "vertices" in cs:
            toks = [p.strip() for p in cs["vertices"].split(",")]
            out.vertices = [tuple(float(v) for v in tok.split()) for tok in toks]
    return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as stream:
            text = stream.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)
