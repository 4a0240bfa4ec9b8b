"""Measurement-space attack vector: a = h(x_attack) - h(x) restricted to the zone."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .acpf import VoltageState, branch_flow_at
from .netmodel import Network
from .zone import AttackZone

FLOW_KINDS = ("flow_p_from", "flow_q_from", "flow_p_to", "flow_q_to")
BUS_KINDS = ("inj_p", "inj_q", "v_mag", "v_ang")
KINDS = FLOW_KINDS + BUS_KINDS

DROP_BELOW = 1e-12


class ConfinementError(ValueError):
    """The attacked state changes something outside the zone interior."""


@dataclass(frozen=True, order=True)
class MeasurementId:
    kind: str
    location: int  # branch index for flow kinds, bus id otherwise

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")

    @property
    def is_flow(self) -> bool:
        return self.kind in FLOW_KINDS


@dataclass
class AttackVector:
    entries: dict[MeasurementId, float]
    zone: AttackZone | None = None
    before: dict[MeasurementId, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def delta(self, mid: MeasurementId) -> float:
        return self.entries.get(mid, 0.0)

    def without(self, mid: MeasurementId) -> "AttackVector":
        return AttackVector({k: v for k, v in self.entries.items() if k != mid}, self.zone,
                            {k: v for k, v in self.before.items() if k != mid})

    def negated(self) -> "AttackVector":
        after = {k: self.before.get(k, 0.0) + v for k, v in self.entries.items()}
        return AttackVector({k: -v for k, v in self.entries.items()}, self.zone, after)

    # -- serialization -------------------------------------------------------

    def rows(self, net: Network | None = None) -> list[dict]:
        out = []
        for mid in sorted(self.entries):
            before = self.before.get(mid, float("nan"))
            row = {"kind": mid.kind, "location": mid.location, "from_bus": "", "to_bus": ""}
            if mid.is_flow and net is not None:
                br = net.branches[mid.location]
                row["from_bus"], row["to_bus"] = br.from_bus, br.to_bus
            delta = self.entries[mid]
            row.update(baseline=before, attacked=before + delta, delta=delta)
            out.append(row)
        return out

    def to_csv(self, net: Network | None = None) -> str:
        buf = io.StringIO()
        fields = ["kind", "location", "from_bus", "to_bus", "baseline", "attacked", "delta"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in self.rows(net):
            for key in ("baseline", "attacked", "delta"):
                row[key] = f"{row[key]:.17g}"
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self, net: Network | None = None) -> str:
        doc = {"entries": self.rows(net)}
        if self.zone is not None and net is not None:
            from .zone import zone_report

            doc["zone"] = zone_report(net, self.zone)
        return json.dumps(doc, indent=2)

    @classmethod
    def from_rows(cls, rows, zone: AttackZone | None = None) -> "AttackVector":
        entries, before = {}, {}
        for row in rows:
            mid = MeasurementId(row["kind"], int(row["location"]))
            entries[mid] = float(row["delta"])
            before[mid] = float(row["baseline"])
        return cls(entries, zone, before)

    @classmethod
    def from_csv(cls, text: str, zone: AttackZone | None = None) -> "AttackVector":
        return cls.from_rows(csv.DictReader(io.StringIO(text)), zone)

    @classmethod
    def from_json(cls, text: str, zone: AttackZone | None = None) -> "AttackVector":
        return cls.from_rows(json.loads(text)["entries"], zone)


def bus_injection(net: Network, state: VoltageState, bus_id: int) -> tuple[float, float]:
    """Metered net injection (P, Q) at a bus: outgoing flows plus shunt consumption."""
    i = net.index[bus_id]
    bus = net.buses[i]
    p = bus.g_shunt * state.v[i] ** 2
    q = -bus.b_shunt * state.v[i] ** 2
    for k in net.incident_branches(bus_id):
        br = net.branches[k]
        flow = branch_flow_at(br, net, state)
        if br.from_bus == bus_id:
            p, q = p + flow.p_lm, q + flow.q_lm
        else:
            p, q = p + flow.p_ml, q + flow.q_ml
    return float(p), float(q)


def post_injections(
    net: Network, zone: AttackZone, baseline: VoltageState, attacked: VoltageState
) -> dict[int, tuple[float, float]]:
    """Post-attack injections at the zone's non-zero-injection buses.

    Pre-attack injection plus the flow changes on incident zone lines. A bus
    shunt whose voltage moved also changes the metered injection, so that term
    is added too (it vanishes for buses without shunts).
    """
    out = {}
    zone_lines = set(zone.zone_lines)
    nonzero = sorted(zone.boundary_buses | zone.interior_nonzero)
    for bus_id in nonzero:
        p, q = bus_injection(net, baseline, bus_id)
        for k in net.incident_branches(bus_id):
            if k not in zone_lines:
                continue
            br = net.branches[k]
            new = branch_flow_at(br, net, attacked)
            old = branch_flow_at(br, net, baseline)
            if br.from_bus == bus_id:
                p += new.p_lm - old.p_lm
                q += new.q_lm - old.q_lm
            else:
                p += new.p_ml - old.p_ml
                q += new.q_ml - old.q_ml
        i = net.index[bus_id]
        bus = net.buses[i]
        dv2 = attacked.v[i] ** 2 - baseline.v[i] ** 2
        p += bus.g_shunt * dv2
        q -= bus.b_shunt * dv2
        out[bus_id] = (float(p), float(q))
    return out


def check_confinement(net: Network, zone: AttackZone, baseline: VoltageState, attacked: VoltageState) -> None:
    interior = {net.index[b] for b in zone.interior_buses}
    outside = np.array([i not in interior for i in range(net.n_bus)])
    moved = outside & ((attacked.v != baseline.v) | (attacked.theta != baseline.theta))
    if moved.any():
        buses = [net.buses[i].id for i in np.nonzero(moved)[0]]
        raise ConfinementError(f"attacked state differs from baseline outside the zone interior at buses {buses}")


def assemble(net: Network, zone: AttackZone, baseline: VoltageState, attacked: VoltageState) -> AttackVector:
    """Signed measurement deltas over zone lines and zone buses; near-zero entries dropped."""
    check_confinement(net, zone, baseline, attacked)
    entries: dict[MeasurementId, float] = {}
    before: dict[MeasurementId, float] = {}

    def put(mid, old, new):
        d = new - old
        if abs(d) >= DROP_BELOW:
            entries[mid] = float(d)
            before[mid] = float(old)

    for k in zone.zone_lines:
        br = net.branches[k]
        old = branch_flow_at(br, net, baseline)
        new = branch_flow_at(br, net, attacked)
        put(MeasurementId("flow_p_from", k), old.p_lm, new.p_lm)
        put(MeasurementId("flow_q_from", k), old.q_lm, new.q_lm)
        put(MeasurementId("flow_p_to", k), old.p_ml, new.p_ml)
        put(MeasurementId("flow_q_to", k), old.q_ml, new.q_ml)
    for bus_id, (p_new, q_new) in post_injections(net, zone, baseline, attacked).items():
        p_old, q_old = bus_injection(net, baseline, bus_id)
        put(MeasurementId("inj_p", bus_id), p_old, p_new)
        put(MeasurementId("inj_q", bus_id), q_old, q_new)
    for bus_id in sorted(zone.zone_buses):
        i = net.index[bus_id]
        put(MeasurementId("v_mag", bus_id), baseline.v[i], attacked.v[i])
        put(MeasurementId("v_ang", bus_id), baseline.theta[i], attacked.theta[i])
    return AttackVector(entries, zone, before)
