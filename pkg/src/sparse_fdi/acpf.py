"""Branch flows, injection balance, and Newton-Raphson power flow in polar form."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .netmodel import PQ, PV, SLACK, Branch, Network

logger = logging.getLogger(__name__)


class PowerFlowError(RuntimeError):
    """Newton iteration failed (no convergence or singular Jacobian)."""


@dataclass(frozen=True)
class VoltageState:
    """Bus voltage magnitudes (p.u.) and angles (rad), ordered like ``Network.buses``."""

    v: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        theta = np.array(self.theta, dtype=float)
        if v.shape != theta.shape or v.ndim != 1:
            raise ValueError("v and theta must be 1-D arrays of equal length")
        if np.any(v <= 0):
            raise ValueError("voltage magnitudes must be positive")
        v.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def flat(cls, net: Network) -> "VoltageState":
        """1.0 p.u. / 0 rad, with generator setpoints at PV and slack buses."""
        v = np.ones(net.n_bus)
        for g in net.generators:
            i = net.index[g.bus]
            if net.buses[i].kind in (PV, SLACK):
                v[i] = g.v_setpoint
        return cls(v, np.zeros(net.n_bus))

    @classmethod
    def from_case(cls, net: Network) -> "VoltageState":
        """Stored case voltages, with PV/slack magnitudes at setpoint and slack angle 0."""
        flat = cls.flat(net)
        v = np.array([b.vm_init for b in net.buses])
        kinds = [b.kind for b in net.buses]
        for i, kind in enumerate(kinds):
            if kind in (PV, SLACK):
                v[i] = flat.v[i]
        theta = np.array([b.va_init for b in net.buses])
        theta = theta - theta[net.slack_index]
        return cls(v, theta)

    @property
    def phasor(self) -> np.ndarray:
        return self.v * np.exp(1j * self.theta)

    def replace(self, v: np.ndarray | None = None, theta: np.ndarray | None = None) -> "VoltageState":
        return VoltageState(self.v if v is None else v, self.theta if theta is None else theta)


@dataclass(frozen=True)
class BranchFlow:
    p_lm: float
    q_lm: float
    p_ml: float
    q_ml: float


def _terms(br: Branch, vl, vm, tl, tm):
    ys = br.series_admittance
    g, b = ys.real, ys.imag
    u = vl / br.tap
    d = tl - tm - br.shift
    return g, b, u, d


def branch_flow(br: Branch, vl: float, vm: float, tl: float, tm: float) -> BranchFlow:
    """Pi-model flows at both ends; the tap and phase shift sit on the from side.

    ``vl, tl`` are the from-bus magnitude/angle, ``vm, tm`` the to-bus ones.
    """
    g, b, u, d = _terms(br, vl, vm, tl, tm)
    bc = br.b_charging / 2
    c, s = np.cos(d), np.sin(d)
    return BranchFlow(
        p_lm=g * u * u - u * vm * (g * c + b * s),
        q_lm=-(b + bc) * u * u - u * vm * (g * s - b * c),
        p_ml=g * vm * vm - u * vm * (g * c - b * s),
        q_ml=-(b + bc) * vm * vm + u * vm * (g * s + b * c),
    )


def branch_flow_at(br: Branch, net: Network, state: VoltageState) -> BranchFlow:
    f, t = net.index[br.from_bus], net.index[br.to_bus]
    return branch_flow(br, state.v[f], state.v[t], state.theta[f], state.theta[t])


def flow_jacobian(br: Branch, vl: float, vm: float, tl: float, tm: float) -> np.ndarray:
    """d(p_lm, q_lm, p_ml, q_ml) / d(vl, vm, tl, tm) as a 4x4 array."""
    g, b, u, d = _terms(br, vl, vm, tl, tm)
    a = br.tap
    bc = br.b_charging / 2
    c, s = np.cos(d), np.sin(d)
    jac = np.empty((4, 4))
    # p_lm
    jac[0, 0] = (2 * g * u - vm * (g * c + b * s)) / a
    jac[0, 1] = -u * (g * c + b * s)
    jac[0, 2] = -u * vm * (-g * s + b * c)
    jac[0, 3] = -jac[0, 2]
    # q_lm
    jac[1, 0] = (-2 * (b + bc) * u - vm * (g * s - b * c)) / a
    jac[1, 1] = -u * (g * s - b * c)
    jac[1, 2] = -u * vm * (g * c + b * s)
    jac[1, 3] = -jac[1, 2]
    # p_ml
    jac[2, 0] = -vm * (g * c - b * s) / a
    jac[2, 1] = 2 * g * vm - u * (g * c - b * s)
    jac[2, 2] = -u * vm * (-g * s - b * c)
    jac[2, 3] = -jac[2, 2]
    # q_ml
    jac[3, 0] = vm * (g * s + b * c) / a
    jac[3, 1] = -2 * (b + bc) * vm + u * (g * s + b * c)
    jac[3, 2] = u * vm * (g * c - b * s)
    jac[3, 3] = -jac[3, 2]
    return jac


def injection_mismatch(net: Network, state: VoltageState, bus_id: int) -> tuple[float, float]:
    """(dP, dQ): shunt + outgoing branch flows minus scheduled net generation at one bus."""
    i = net.index[bus_id]
    bus = net.buses[i]
    vi = state.v[i]
    dp = bus.g_shunt * vi * vi + bus.p_demand
    dq = -bus.b_shunt * vi * vi + bus.q_demand
    for k in net.incident_branches(bus_id):
        br = net.branches[k]
        flow = branch_flow_at(br, net, state)
        if br.from_bus == bus_id:
            dp += flow.p_lm
            dq += flow.q_lm
        else:
            dp += flow.p_ml
            dq += flow.q_ml
    for gen in net.generators:
        if gen.bus == bus_id:
            dp -= gen.p_gen
            dq -= gen.q_gen
    return float(dp), float(dq)


def bus_injections(ybus: np.ndarray, state: VoltageState) -> np.ndarray:
    """Complex power leaving each bus into the network and its shunt, S = V conj(Y V)."""
    vc = state.phasor
    return vc * np.conj(ybus @ vc)


def dsbus_dv(ybus: np.ndarray, state: VoltageState) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of bus injections w.r.t. angle and magnitude (dense)."""
    vc = state.phasor
    ibus = ybus @ vc
    vnorm = vc / np.abs(vc)
    dva = 1j * np.diag(vc) @ np.conj(np.diag(ibus) - ybus @ np.diag(vc))
    dvm = np.diag(vc) @ np.conj(ybus @ np.diag(vnorm)) + np.diag(np.conj(ibus) * vnorm)
    return dva, dvm


def newton_power_flow(
    net: Network,
    init: VoltageState | None = None,
    tol: float = 1e-10,
    max_iter: int = 30,
    enforce_q_limits: bool = False,
) -> VoltageState:
    """Full-Jacobian Newton power flow with step halving.

    ``init`` defaults to the case's stored voltages. With ``enforce_q_limits``
    PV buses whose reactive output leaves its limits are switched to PQ and the
    solve is repeated.
    """
    state = init if init is not None else VoltageState.from_case(net)
    kinds = [b.kind for b in net.buses]
    if not enforce_q_limits:
        return _newton(net, state, kinds, {}, tol, max_iter)

    fixed_q: dict[int, float] = {}
    for _ in range(net.n_bus):
        state = _newton(net, state, kinds, fixed_q, tol, max_iter)
        q_gen = generator_reactive(net, state)
        switched = False
        for i, b in enumerate(net.buses):
            if kinds[i] != PV:
                continue
            qmin = sum(g.q_min for g in net.generators if g.bus == b.id)
            qmax = sum(g.q_max for g in net.generators if g.bus == b.id)
            if q_gen[i] > qmax + tol or q_gen[i] < qmin - tol:
                kinds[i] = PQ
                fixed_q[i] = min(max(q_gen[i], qmin), qmax)
                switched = True
                logger.info("bus %d hits reactive limit, switched to PQ", b.id)
        if not switched:
            return state
    return state


def _newton(net, state, kinds, fixed_q, tol, max_iter):
    ybus = net.ybus()
    p_sched, q_sched = net.net_generation()
    for i, q in fixed_q.items():
        q_sched[i] = q - net.buses[i].q_demand
    pv = [i for i, k in enumerate(kinds) if k == PV]
    pq = [i for i, k in enumerate(kinds) if k == PQ]
    pvpq = pv + pq
    npvpq = len(pvpq)

    def mismatch(st):
        s = bus_injections(ybus, st)
        return np.concatenate([s.real[pvpq] - p_sched[pvpq], s.imag[pq] - q_sched[pq]])

    v = state.v.copy()
    theta = state.theta.copy()
    theta -= theta[net.slack_index]
    st = VoltageState(v, theta)
    f = mismatch(st)
    for it in range(max_iter + 1):
        norm = np.max(np.abs(f)) if f.size else 0.0
        if norm <= tol:
            logger.debug("power flow converged in %d iterations (%.3g)", it, norm)
            return st
        if it == max_iter:
            break
        dva, dvm = dsbus_dv(ybus, st)
        jac = np.block([
            [dva.real[np.ix_(pvpq, pvpq)], dvm.real[np.ix_(pvpq, pq)]],
            [dva.imag[np.ix_(pq, pvpq)], dvm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian at iteration {it}") from exc
        if not np.all(np.isfinite(dx)):
            raise PowerFlowError(f"singular Jacobian at iteration {it}")
        step = 1.0
        for _ in range(11):
            th = st.theta.copy()
            vm = st.v.copy()
            th[pvpq] += step * dx[:npvpq]
            vm[pq] += step * dx[npvpq:]
            if np.all(vm > 0):
                trial = VoltageState(vm, th)
                f_trial = mismatch(trial)
                if np.linalg.norm(f_trial) < np.linalg.norm(f):
                    break
            step /= 2
        else:
            raise PowerFlowError(f"step halving failed at iteration {it} (mismatch {norm:.3g})")
        st, f = trial, f_trial
    raise PowerFlowError(f"no convergence after {max_iter} iterations (mismatch {norm:.3g})")


def generator_reactive(net: Network, state: VoltageState) -> np.ndarray:
    """Reactive generation each bus must supply at ``state`` (Q_calc + Q_D), p.u."""
    s = bus_injections(net.ybus(), state)
    return s.imag + np.array([b.q_demand for b in net.buses])


def solved_dispatch(net: Network, state: VoltageState) -> tuple[np.ndarray, np.ndarray]:
    """Net generation implied by a solved state: scheduled values at PQ buses,
    computed slack P and slack/PV Q."""
    s = bus_injections(net.ybus(), state)
    p, q = net.net_generation()
    for i, b in enumerate(net.buses):
        if b.kind == SLACK:
            p[i] = s.real[i]
        if b.kind in (SLACK, PV):
            q[i] = s.imag[i]
    return p, q


def max_mismatch(net: Network, state: VoltageState) -> float:
    """Largest |dP| over non-slack buses and |dQ| over PQ buses."""
    s = bus_injections(net.ybus(), state)
    p, q = net.net_generation()
    worst = 0.0
    for i, b in enumerate(net.buses):
        if b.kind != SLACK:
            worst = max(worst, abs(s.real[i] - p[i]))
        if b.kind == PQ:
            worst = max(worst, abs(s.imag[i] - q[i]))
    return worst
