"""Attack zone construction and validation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .netmodel import Network, zero_injection_buses


class ZoneError(ValueError):
    """The requested zone violates a confinement rule."""


@dataclass(frozen=True)
class AttackZone:
    zone_buses: frozenset[int]
    boundary_buses: frozenset[int]
    interior_buses: tuple[int, ...]  # sorted; fixes the selection-vector order
    zone_lines: tuple[int, ...]  # branch indices with both ends in the zone
    interior_zero_injection: frozenset[int]
    interior_nonzero: frozenset[int]
    target_line: int
    w_coefficient: float

    @property
    def zero_injection(self) -> frozenset[int]:
        return self.interior_zero_injection


def _connected(net: Network, buses: set[int]) -> bool:
    if not buses:
        return False
    start = next(iter(buses))
    seen = {start}
    todo = deque([start])
    while todo:
        b = todo.popleft()
        for n in net.neighbors(b) & buses:
            if n not in seen:
                seen.add(n)
                todo.append(n)
    return seen == buses


def build_zone(
    net: Network,
    zone_buses: Iterable[int],
    boundary_buses: Iterable[int],
    target_line: int | tuple[int, int],
    w: float,
) -> AttackZone:
    """Validate a user-specified zone; ``target_line`` is a branch index or a (from, to) pair."""
    zone = frozenset(zone_buses)
    boundary = frozenset(boundary_buses)
    missing = sorted(b for b in zone if b not in net.index)
    if missing:
        raise ZoneError(f"zone buses not in network: {missing}")
    if not boundary <= zone:
        raise ZoneError(f"boundary buses outside the zone: {sorted(boundary - zone)}")
    if not w > 0:
        raise ZoneError(f"W must be positive, got {w}")
    if not _connected(net, set(zone)):
        raise ZoneError("zone buses do not form a connected subgraph")

    interior = zone - boundary
    for b in sorted(interior):
        leaks = sorted(net.neighbors(b) - zone)
        if leaks:
            raise ZoneError(f"interior bus {b} is adjacent to non-zone bus(es) {leaks}; make it a boundary bus")

    zi_all = zero_injection_buses(net)
    zi_boundary = sorted(boundary & zi_all)
    if zi_boundary:
        raise ZoneError(f"boundary buses must have power injection; zero-injection: {zi_boundary}")

    if isinstance(target_line, tuple):
        try:
            target = net.find_branch(*target_line)
        except KeyError as exc:
            raise ZoneError(str(exc)) from None
    else:
        target = int(target_line)
        if not 0 <= target < len(net.branches):
            raise ZoneError(f"branch index {target} out of range")
    br = net.branches[target]
    ends = {br.from_bus, br.to_bus}
    if not ends <= zone:
        raise ZoneError(f"target line {br.from_bus}-{br.to_bus} is not inside the zone")
    if ends & boundary:
        raise ZoneError(f"target line {br.from_bus}-{br.to_bus} touches boundary bus(es) {sorted(ends & boundary)}")

    lines = tuple(k for k, b in enumerate(net.branches) if b.from_bus in zone and b.to_bus in zone)
    return AttackZone(
        zone_buses=zone,
        boundary_buses=boundary,
        interior_buses=tuple(sorted(interior)),
        zone_lines=lines,
        interior_zero_injection=frozenset(interior & zi_all),
        interior_nonzero=frozenset(interior - zi_all),
        target_line=target,
        w_coefficient=float(w),
    )


def zone_report(net: Network, zone: AttackZone) -> dict:
    """Plain-data summary of the zone partition."""
    return {
        "zone_buses": sorted(zone.zone_buses),
        "boundary_buses": sorted(zone.boundary_buses),
        "interior_buses": list(zone.interior_buses),
        "interior_zero_injection": sorted(zone.interior_zero_injection),
        "interior_nonzero": sorted(zone.interior_nonzero),
        "zone_lines": [[net.branches[k].from_bus, net.branches[k].to_bus] for k in zone.zone_lines],
        "target_line": [net.branches[zone.target_line].from_bus, net.branches[zone.target_line].to_bus],
        "w": zone.w_coefficient,
    }


def suggest_boundary(net: Network, focal_buses: Iterable[int], max_rounds: int = 10) -> tuple[set[int], set[int]]:
    """Best-effort zone closure from focal buses.

    Repeatedly pulls in neighbours of interior buses; a neighbour with power
    injection becomes boundary, a zero-injection one becomes interior and is
    expanded further. Returns ``(zone_buses, boundary_buses)``. The result is
    not guaranteed to be minimal or to pass :func:`build_zone`.
    """
    zi = zero_injection_buses(net)
    interior = set(focal_buses)
    boundary: set[int] = set()
    for _ in range(max_rounds):
        frontier = set()
        for b in interior:
            frontier |= net.neighbors(b)
        frontier -= interior | boundary
        if not frontier:
            break
        for n in frontier:
            (interior if n in zi else boundary).add(n)
    return interior | boundary, boundary
