import pytest

from thincyl.config import (
    EXPERIMENT_KINDS,
    dumps_domain,
    loads_domain,
    parse_config,
    profile_from_section,
    profile_to_section,
)
from thincyl.domains import (
    DistortedCylinder,
    Dumbbell,
    HalfSemiCylinder,
    HeadSpec,
    SemiCylinder,
    StraightCylinder,
    Trapezoid,
)
from thincyl.errors import ConfigError
from thincyl.profiles import fourier_profile, table_profile, zero_profile


@pytest.mark.parametrize("spec", [
    StraightCylinder(0.25),
    DistortedCylinder(0.2, fourier_profile(0.1, [-1.0, 0.25], [0.5]), zero_profile()),
    DistortedCylinder(0.2, fourier_profile(0.0, [-1.0]), fourier_profile(0.0, [-1.0]),
                      half="z"),
    Trapezoid(0.05, table_profile([0.0, 0.5, 1.0], [1.0, 1.5, 1.0])),
    SemiCylinder(fourier_profile(0.0, [-1.0]), 8.0),
    SemiCylinder(zero_profile(), 6.0, HeadSpec(1.5, 1.25)),
    HalfSemiCylinder(fourier_profile(0.0, [1.0]), 8.0),
    Dumbbell(0.4, HeadSpec(1.5, 1.5), HeadSpec(2.0, 1.0)),
])
def test_domain_roundtrip(spec):
    text = dumps_domain(spec)
    assert "schema = 1" in text
    back = loads_domain(text)
    assert back == spec


def test_profile_section_roundtrip():
    prof = fourier_profile(0.125, [-1.0, 0.0, 0.5], [0.25])
    sec = profile_to_section(prof)
    back = profile_from_section(sec)
    assert back == prof
    tab = table_profile([0.0, 0.3, 1.0], [0.1, -0.7, 0.2])
    assert profile_from_section(profile_to_section(tab)) == tab


def test_missing_schema_rejected():
    with pytest.raises(ConfigError):
        loads_domain("[domain]\nkind = straight_cylinder_2d\nh = 0.5\n")
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nkind = validate\n")


def test_wrong_schema_version_rejected():
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nschema = 2\nkind = validate\n")


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError):
        parse_config("[experiment]\nschema = 1\nkind = frobnicate\n")
    with pytest.raises(ConfigError):
        loads_domain("[domain]\nschema = 1\nkind = moebius\n")


def test_experiment_parsing_fields():
    text = """
[experiment]
schema = 1
kind = thin-sweep
k = 3
tol = 1e-9
seed = 7

[profile.plus]
kind = fourier
a0 = 0
a1 = -1

[profile.minus]
kind = fourier

[sweep]
h_list = 0.4, 0.3, 0.2
n_across = 10
truncation_lengths = 5, 7
"""
    cfg = parse_config(text)
    assert cfg.kind == "thin-sweep"
    assert cfg.k == 3 and cfg.seed == 7 and cfg.tol == 1e-9
    assert cfg.h_list == [0.4, 0.3, 0.2]
    assert cfg.n_across == 10
    assert cfg.truncation_lengths == (5.0, 7.0)
    prof = cfg.profile("plus")
    assert prof(0.0) == pytest.approx(-1.0)


def test_polygon_vertices_parse():
    text = """
[experiment]
schema = 1
kind = cross-section
k = 1

[cross_section]
kind = polygon
vertices = 0 0, 1 0, 1 1, 0 1
refinements = 3
"""
    cfg = parse_config(text)
    assert cfg.section_kind == "polygon"
    assert cfg.vertices == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    assert cfg.refinements == 3


def test_eps_grid_from_config():
    text = """
[experiment]
schema = 1
kind = condition

[condition]
eps_lo = 1e-2
eps_hi = 0.5
eps_count = 7
"""
    cfg = parse_config(text)
    grid = cfg.eps_grid()
    assert len(grid) == 7
    assert grid[0] == pytest.approx(1e-2) and grid[-1] == pytest.approx(0.5)


def test_all_kinds_listed():
    assert set(EXPERIMENT_KINDS) == {
        "cross-section", "condition", "semicylinder", "thin-sweep",
        "trapezoid", "splitting", "dumbbell", "neumann-half", "validate"}
