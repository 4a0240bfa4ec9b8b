import pytest

from sparse_fdi.netmodel import parse_case
from sparse_fdi.scenario import IEEE57_BOUNDARY, IEEE57_ZONE
from sparse_fdi.zone import ZoneError, build_zone, suggest_boundary, zone_report

from conftest import SIX_BUS, TWO_BUS


def test_case57_zone_partition(net57, zone57):
    assert len(zone57.interior_buses) == 17
    assert zone57.interior_buses == tuple(sorted(set(IEEE57_ZONE) - set(IEEE57_BOUNDARY)))
    assert zone57.interior_zero_injection == {21, 22, 24, 26, 34, 36, 37, 39, 40}
    assert zone57.interior_zero_injection | zone57.interior_nonzero == set(zone57.interior_buses)
    br = net57.branches[zone57.target_line]
    assert {br.from_bus, br.to_bus} == {23, 24}
    for k in zone57.zone_lines:
        b = net57.branches[k]
        assert b.from_bus in zone57.zone_buses and b.to_bus in zone57.zone_buses


def test_interior_has_no_outside_neighbors(net57, zone57):
    for b in zone57.interior_buses:
        assert net57.neighbors(b) <= zone57.zone_buses


def test_target_by_index(net57, zone57):
    again = build_zone(net57, IEEE57_ZONE, IEEE57_BOUNDARY, zone57.target_line, 3.0)
    assert again == zone57


def test_leaky_zone_rejected(net57):
    with pytest.raises(ZoneError, match="adjacent to non-zone"):
        build_zone(net57, IEEE57_ZONE, [], (23, 24), 3.0)


def test_boundary_outside_zone(net57):
    with pytest.raises(ZoneError, match="outside the zone"):
        build_zone(net57, IEEE57_ZONE, list(IEEE57_BOUNDARY) + [1], (23, 24), 3.0)


def test_zero_injection_boundary_rejected(net57):
    zone = [20, 21, 22, 23, 24, 25, 30]
    with pytest.raises(ZoneError):
        build_zone(net57, zone, [21, 25], (22, 23), 3.0)


def test_disconnected_zone_rejected(net57):
    with pytest.raises(ZoneError, match="connected"):
        build_zone(net57, [1, 2, 30, 31], [1, 2, 30, 31], (1, 2), 3.0)


def test_target_touching_boundary_rejected(net57):
    with pytest.raises(ZoneError, match="touches boundary"):
        build_zone(net57, IEEE57_ZONE, IEEE57_BOUNDARY, (20, 21), 3.0)


def test_target_outside_zone_rejected(net57):
    with pytest.raises(ZoneError, match="not inside"):
        build_zone(net57, IEEE57_ZONE, IEEE57_BOUNDARY, (1, 2), 3.0)


def test_two_bus_target_must_avoid_boundary():
    net = parse_case(TWO_BUS)
    with pytest.raises(ZoneError):
        build_zone(net, [1, 2], [1], (1, 2), 2.0)


@pytest.mark.parametrize("w", [0.0, -1.0])
def test_nonpositive_w_rejected(net57, w):
    with pytest.raises(ZoneError, match="W must be positive"):
        build_zone(net57, IEEE57_ZONE, IEEE57_BOUNDARY, (23, 24), w)


def test_unknown_bus_rejected(net57):
    with pytest.raises(ZoneError, match="not in network"):
        build_zone(net57, list(IEEE57_ZONE) + [99], IEEE57_BOUNDARY, (23, 24), 3.0)


def test_zone_report(net57, zone57):
    rep = zone_report(net57, zone57)
    assert rep["target_line"] in ([23, 24], [24, 23])
    assert len(rep["interior_buses"]) == 17
    assert rep["w"] == 3.0


def test_suggest_boundary_contains_focal(net57):
    zone, boundary = suggest_boundary(net57, [24])
    assert 24 in zone and 24 not in boundary
    assert boundary <= zone


def test_fully_loaded_zone_has_no_zero_injection(six_bus):
    text = SIX_BUS.replace("3\t1\t0\t0", "3\t1\t5\t1").replace("5\t1\t0\t0", "5\t1\t5\t1")
    net = parse_case(text)
    zone = build_zone(net, [2, 3, 4, 5, 6], [2], (4, 5), 2.0)
    assert zone.interior_zero_injection == frozenset()
    rep = zone_report(net, zone)
    assert len(rep["interior_buses"]) + len(rep["boundary_buses"]) == len(rep["zone_buses"])
