"""Re-check a stored attack vector without re-solving."""

from __future__ import annotations

from dataclasses import dataclass

from .acpf import VoltageState, branch_flow_at, injection_mismatch
from .attack_vector import AttackVector, assemble
from .netmodel import Network
from .sparse_attack import SolverConfig
from .stealth import stealth_check
from .zone import AttackZone


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    magnitude: float
    detail: str = ""


def attacked_state_from_vector(net: Network, baseline: VoltageState, a: AttackVector) -> VoltageState:
    """Rebuild x_attack from the phasor deltas carried by the vector."""
    v = baseline.v.copy()
    th = baseline.theta.copy()
    for mid, d in a.entries.items():
        if mid.kind == "v_mag":
            v[net.index[mid.location]] += d
        elif mid.kind == "v_ang":
            th[net.index[mid.location]] += d
    return VoltageState(v, th)


def verify_attack(
    net: Network,
    zone: AttackZone,
    baseline: VoltageState,
    a: AttackVector,
    cfg: SolverConfig | None = None,
    overload_tol: float = 1e-6,
    consistency_tol: float = 1e-9,
    **stealth_kw,
) -> list[Check]:
    cfg = cfg or SolverConfig()
    checks: list[Check] = []

    zone_line_set = set(zone.zone_lines)
    outside = [m for m in a.entries if (m.location not in zone_line_set if m.is_flow else m.location not in zone.zone_buses)]
    moved_fixed = [m for m in a.entries if m.kind in ("v_mag", "v_ang") and m.location not in zone.interior_buses]
    bad = outside + moved_fixed
    checks.append(Check("confinement", not bad, float(len(bad)),
                        f"entries outside the zone interior: {bad[:5]}" if bad else ""))
    if bad:
        return checks

    attacked = attacked_state_from_vector(net, baseline, a)

    expected = assemble(net, zone, baseline, attacked)
    keys = set(expected.entries) | set(a.entries)
    worst, worst_id = 0.0, None
    for mid in keys:
        err = abs(expected.delta(mid) - a.delta(mid))
        if err > worst:
            worst, worst_id = err, mid
    checks.append(Check("consistency", worst <= consistency_tol, worst,
                        f"largest mismatch with h(x_attack) - h(x) at {worst_id}" if worst_id else ""))

    br = net.branches[zone.target_line]
    old = branch_flow_at(br, net, baseline)
    new = branch_flow_at(br, net, attacked)
    w = zone.w_coefficient
    if cfg.target_end == "from":
        pairs = [(new.p_lm, old.p_lm), (new.q_lm, old.q_lm)]
    else:
        pairs = [(new.p_ml, old.p_ml), (new.q_ml, old.q_ml)]
    if not cfg.reactive_overload:
        pairs = pairs[:1]
    err = max(abs(n - w * o) for n, o in pairs)
    checks.append(Check("overload", err <= overload_tol, err,
                        f"line {br.from_bus}-{br.to_bus} flow off W*baseline by {err:.3g} p.u."))

    zi_err = 0.0
    for bus_id in zone.interior_zero_injection:
        dp, dq = injection_mismatch(net, attacked, bus_id)
        zi_err = max(zi_err, abs(dp), abs(dq))
    checks.append(Check("zero_injection_balance", zi_err <= cfg.eq_tol, zi_err,
                        f"largest zero-injection mismatch {zi_err:.3g} p.u."))

    excess = 0.0
    for k in zone.zone_lines:
        b = net.branches[k]
        d = attacked.theta[net.index[b.from_bus]] - attacked.theta[net.index[b.to_bus]]
        excess = max(excess, abs(d) - cfg.angle_limit)
    checks.append(Check("angle_bounds", excess <= 0, max(excess, 0.0),
                        f"angle difference exceeds limit by {excess:.3g} rad" if excess > 0 else ""))

    verdict = stealth_check(net, zone, baseline, attacked, attack=a, **stealth_kw)
    checks.append(Check("stealth", verdict.passed, verdict.difference,
                        f"|r_attack| - |r| = {verdict.difference:.3g} (tol {verdict.tolerance:.3g})"))
    return checks
