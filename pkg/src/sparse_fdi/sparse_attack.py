"""Minimum-cardinality AC attack design.

The mixed-integer program is solved by enumerating selections of interior
buses in ascending cardinality. For a fixed selection the big-M gates reduce
to pinning (unselected buses keep their pre-attack phasor) and what remains is
a small nonlinear system, solved with a damped Gauss-Newton iteration.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .acpf import VoltageState, branch_flow, flow_jacobian
from .netmodel import Network
from .zone import AttackZone

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_HEURISTIC = "feasible_heuristic"
INFEASIBLE = "infeasible"
BUDGET_EXHAUSTED = "budget_exhausted"

STRATEGIES = ("exact_enumeration", "branch_and_prune", "greedy")


@dataclass(frozen=True)
class SolverConfig:
    big_m: float = 10.0
    angle_limit: float = math.pi / 6
    eq_tol: float = 1e-8
    lm_max_iter: int = 200
    strategy: str = "exact_enumeration"
    time_budget: float = 600.0
    lm_damping: float = 1e-3
    polish_tol: float = 1e-12
    reactive_overload: bool = True
    target_end: str = "to"  # end of the target line whose flow is scaled by W

    def __post_init__(self):
        if not self.big_m > 0:
            raise ValueError("big_m must be positive")
        if not self.eq_tol > 0:
            raise ValueError("eq_tol must be positive")
        if not self.angle_limit > 0:
            raise ValueError("angle_limit must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.target_end not in ("from", "to"):
            raise ValueError("target_end must be 'from' or 'to'")


@dataclass(frozen=True)
class SelectionVector:
    buses: tuple[int, ...]  # interior buses, sorted
    z: tuple[int, ...]

    def __post_init__(self):
        if len(self.buses) != len(self.z):
            raise ValueError("selection length does not match interior size")
        if any(v not in (0, 1) for v in self.z):
            raise ValueError("selection entries must be 0 or 1")

    @classmethod
    def of(cls, zone: AttackZone, selected: Iterable[int]) -> "SelectionVector":
        chosen = set(selected)
        unknown = chosen - set(zone.interior_buses)
        if unknown:
            raise ValueError(f"selected buses are not interior: {sorted(unknown)}")
        return cls(zone.interior_buses, tuple(int(b in chosen) for b in zone.interior_buses))

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(b for b, v in zip(self.buses, self.z) if v)

    @property
    def cardinality(self) -> int:
        return sum(self.z)


@dataclass(frozen=True)
class InnerSolution:
    state: VoltageState  # full network; everything except selected buses equals the baseline
    feasible: bool
    residual_norm: float  # max equality violation
    iterations: int
    angle_violation: float = 0.0


@dataclass(frozen=True)
class SparseAttackResult:
    selection: SelectionVector
    cardinality: int
    solution: InnerSolution
    subsets_explored: int
    status: str
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


class ZoneProblem:
    """Residuals and derivatives of the attack constraints for one zone/baseline.

    Equality rows: P and Q balance at each interior zero-injection bus, then the
    target-line active (and optionally reactive) flow at ``W`` times baseline.
    """

    def __init__(self, net: Network, zone: AttackZone, baseline: VoltageState, cfg: SolverConfig):
        self.net = net
        self.zone = zone
        self.baseline = baseline
        self.cfg = cfg
        idx = net.index
        self.zi_rows = np.array([idx[b] for b in sorted(zone.interior_zero_injection)], dtype=int)
        ybus = net.ybus()
        self.y_rows = ybus[self.zi_rows, :]
        p_sched, q_sched = net.net_generation()
        self.p_sched = p_sched[self.zi_rows]
        self.q_sched = q_sched[self.zi_rows]
        self.target = net.branches[zone.target_line]
        self.t_from = idx[self.target.from_bus]
        self.t_to = idx[self.target.to_bus]
        base_flow = branch_flow(self.target, baseline.v[self.t_from], baseline.v[self.t_to],
                                baseline.theta[self.t_from], baseline.theta[self.t_to])
        if cfg.target_end == "from":
            self.target_rows = (0, 1)
            base_pq = (base_flow.p_lm, base_flow.q_lm)
        else:
            self.target_rows = (2, 3)
            base_pq = (base_flow.p_ml, base_flow.q_ml)
        w = zone.w_coefficient
        self.target_values = np.array([w * base_pq[0], w * base_pq[1]])
        if not cfg.reactive_overload:
            self.target_rows = self.target_rows[:1]
            self.target_values = self.target_values[:1]
        self.lines = [(idx[net.branches[k].from_bus], idx[net.branches[k].to_bus]) for k in zone.zone_lines]
        self.v_min = np.array([b.v_min for b in net.buses])
        self.v_max = np.array([b.v_max for b in net.buses])
        self.n_eq = 2 * len(self.zi_rows) + len(self.target_rows)

    # -- residuals -----------------------------------------------------------

    def equality_residual(self, state: VoltageState) -> np.ndarray:
        vc = state.phasor
        s = vc[self.zi_rows] * np.conj(self.y_rows @ vc)
        flow = branch_flow(self.target, state.v[self.t_from], state.v[self.t_to],
                           state.theta[self.t_from], state.theta[self.t_to])
        fv = (flow.p_lm, flow.q_lm, flow.p_ml, flow.q_ml)
        tgt = np.array([fv[r] for r in self.target_rows]) - self.target_values
        return np.concatenate([s.real - self.p_sched, s.imag - self.q_sched, tgt])

    def angle_excess(self, state: VoltageState) -> np.ndarray:
        """Signed excess of |theta_l - theta_m| over the limit on each zone line (0 when inside)."""
        if not self.lines:
            return np.zeros(0)
        f = np.array([a for a, _ in self.lines])
        t = np.array([b for _, b in self.lines])
        d = state.theta[f] - state.theta[t]
        return np.sign(d) * np.maximum(np.abs(d) - self.cfg.angle_limit, 0.0)

    def equality_jacobian(self, state: VoltageState, free: np.ndarray) -> np.ndarray:
        """d(residual)/d(v_free, theta_free)."""
        vc = state.phasor
        n_free = len(free)
        rows = self.zi_rows
        ibus = self.y_rows @ vc
        a = vc[rows, None] * np.conj(self.y_rows[:, free] * vc[free][None, :])
        d_theta = -1j * a
        d_v = a / state.v[free][None, :]
        diag = rows[:, None] == free[None, :]
        if diag.any():
            r, c = np.nonzero(diag)
            d_theta[r, c] += 1j * vc[rows[r]] * np.conj(ibus[r])
            d_v[r, c] += vc[rows[r]] / state.v[rows[r]] * np.conj(ibus[r])
        jac = np.zeros((self.n_eq, 2 * n_free))
        nz = len(rows)
        jac[:nz, :n_free] = d_v.real
        jac[:nz, n_free:] = d_theta.real
        jac[nz:2 * nz, :n_free] = d_v.imag
        jac[nz:2 * nz, n_free:] = d_theta.imag
        fj = flow_jacobian(self.target, state.v[self.t_from], state.v[self.t_to],
                           state.theta[self.t_from], state.theta[self.t_to])
        # columns of fj: v_from, v_to, theta_from, theta_to
        for k, r in enumerate(self.target_rows):
            row = 2 * nz + k
            for pos, bus_pos in enumerate((self.t_from, self.t_to)):
                hit = np.nonzero(free == bus_pos)[0]
                if hit.size:
                    jac[row, hit[0]] += fj[r, pos]
                    jac[row, n_free + hit[0]] += fj[r, 2 + pos]
        return jac

    def angle_jacobian(self, state: VoltageState, free: np.ndarray, active: np.ndarray) -> np.ndarray:
        n_free = len(free)
        out = np.zeros((len(active), 2 * n_free))
        col = {int(b): k for k, b in enumerate(free)}
        for r, li in enumerate(active):
            f, t = self.lines[li]
            sign = np.sign(state.theta[f] - state.theta[t])
            if f in col:
                out[r, n_free + col[f]] += sign
            if t in col:
                out[r, n_free + col[t]] -= sign
        return out

    # -- inner solve ---------------------------------------------------------

    def free_positions(self, selection: SelectionVector) -> np.ndarray:
        return np.array([self.net.index[b] for b in selection.selected], dtype=int)

    def _compose(self, free: np.ndarray, x: np.ndarray) -> VoltageState:
        v = self.baseline.v.copy()
        th = self.baseline.theta.copy()
        n = len(free)
        v[free] = x[:n]
        th[free] = x[n:]
        return VoltageState(v, th)

    def _project(self, free: np.ndarray, x: np.ndarray) -> np.ndarray:
        n = len(free)
        x = x.copy()
        x[:n] = np.clip(x[:n], self.v_min[free], self.v_max[free])
        th0 = self.baseline.theta[free]
        x[n:] = np.clip(x[n:], th0 - self.cfg.big_m, th0 + self.cfg.big_m)
        return x

    def solve(self, selection: SelectionVector) -> InnerSolution:
        cfg = self.cfg
        free = self.free_positions(selection)
        n = len(free)
        x = np.concatenate([self.baseline.v[free], self.baseline.theta[free]])
        state = self._compose(free, x)

        def merit(st):
            eq = self.equality_residual(st)
            ang = self.angle_excess(st)
            return eq, ang, float(eq @ eq + ang @ ang)

        eq, ang, cost = merit(state)
        iterations = 0
        if n == 0:
            return self._package(state, eq, ang, iterations)
        jac0 = self.equality_jacobian(state, free)
        dead = ~np.any(jac0 != 0, axis=1)
        if np.any(np.abs(eq[dead]) > cfg.eq_tol):
            # some constraint does not depend on any free variable and is violated
            return self._package(state, eq, ang, iterations)

        lam = cfg.lm_damping
        while iterations < cfg.lm_max_iter:
            if np.max(np.abs(eq)) <= cfg.polish_tol and not np.any(ang):
                break
            iterations += 1
            active = np.nonzero(ang)[0]
            jac = self.equality_jacobian(state, free)
            res = eq
            if active.size:
                jac = np.vstack([jac, self.angle_jacobian(state, free, active)])
                res = np.concatenate([eq, ang[active]])
            accepted = False
            while lam <= 1e10:
                step = _damped_min_norm_step(jac, res, lam)
                x_trial = self._project(free, x + step)
                trial = self._compose(free, x_trial)
                eq_t, ang_t, cost_t = merit(trial)
                if cost_t < cost:
                    accepted = True
                    break
                lam *= 10
            if not accepted:
                break
            improvement = cost - cost_t
            x, state, eq, ang, cost = x_trial, trial, eq_t, ang_t, cost_t
            lam = max(lam / 10, 1e-14)
            if improvement <= 1e-30 and np.max(np.abs(eq)) > cfg.eq_tol:
                break
        return self._package(state, eq, ang, iterations)

    def _package(self, state, eq, ang, iterations) -> InnerSolution:
        resid = float(np.max(np.abs(eq))) if eq.size else 0.0
        excess = float(np.max(np.abs(ang))) if ang.size else 0.0
        feasible = resid <= self.cfg.eq_tol and excess == 0.0
        return InnerSolution(state=state, feasible=feasible, residual_norm=resid,
                             iterations=iterations, angle_violation=excess)


def _damped_min_norm_step(jac: np.ndarray, res: np.ndarray, lam: float) -> np.ndarray:
    """Levenberg-Marquardt step; tends to the minimum-norm Gauss-Newton step as lam -> 0."""
    m, n = jac.shape
    if m <= n:
        y = np.linalg.solve(jac @ jac.T + lam * np.eye(m), res)
        return -jac.T @ y
    return -np.linalg.solve(jac.T @ jac + lam * np.eye(n), jac.T @ res)


def inner_feasibility(
    net: Network,
    zone: AttackZone,
    baseline: VoltageState,
    selection: SelectionVector | Iterable[int],
    cfg: SolverConfig | None = None,
) -> InnerSolution:
    cfg = cfg or SolverConfig()
    if not isinstance(selection, SelectionVector):
        selection = SelectionVector.of(zone, selection)
    return ZoneProblem(net, zone, baseline, cfg).solve(selection)


class _Search:
    def __init__(self, problem: ZoneProblem, budget: float):
        self.problem = problem
        self.zone = problem.zone
        self.start = time.perf_counter()
        self.budget = budget
        self.explored = 0
        self.cache: dict[tuple[int, ...], InnerSolution] = {}

    def out_of_time(self) -> bool:
        return time.perf_counter() - self.start > self.budget

    def evaluate(self, selected: Sequence[int]) -> InnerSolution:
        key = tuple(sorted(selected))
        if key not in self.cache:
            self.explored += 1
            self.cache[key] = self.problem.solve(SelectionVector.of(self.zone, key))
        return self.cache[key]

    def result(self, selected, sol, status, **extra) -> SparseAttackResult:
        sel = SelectionVector.of(self.zone, selected)
        return SparseAttackResult(selection=sel, cardinality=sel.cardinality, solution=sol,
                                  subsets_explored=self.explored, status=status,
                                  wall_time=time.perf_counter() - self.start, extra=extra)


def solve_sparse(
    net: Network,
    zone: AttackZone,
    baseline: VoltageState,
    cfg: SolverConfig | None = None,
) -> SparseAttackResult:
    """Smallest set of interior buses whose phasors must change to realise the attack.

    Ties at the minimal cardinality go to the lexicographically smallest bus list.
    """
    cfg = cfg or SolverConfig()
    search = _Search(ZoneProblem(net, zone, baseline, cfg), cfg.time_budget)
    interior = zone.interior_buses

    everything = search.evaluate(interior)
    if not everything.feasible:
        return search.result(interior, everything, INFEASIBLE)

    if cfg.strategy == "greedy":
        return _greedy(search, interior)
    if cfg.strategy == "branch_and_prune":
        return _branch_and_prune(search, interior)

    for k in range(len(interior) + 1):
        for combo in itertools.combinations(interior, k):
            if search.out_of_time():
                return search.result(interior, everything, BUDGET_EXHAUSTED, reached_cardinality=k)
            sol = search.evaluate(combo)
            if sol.feasible:
                return search.result(combo, sol, OPTIMAL)
    return search.result(interior, everything, OPTIMAL)  # unreachable: all-ones is feasible


def _branch_and_prune(search: _Search, interior: tuple[int, ...]) -> SparseAttackResult:
    n = len(interior)
    completion_ok: dict[frozenset[int], bool] = {}

    def completion_feasible(excluded: frozenset[int]) -> bool:
        if excluded not in completion_ok:
            completion_ok[excluded] = search.evaluate([b for b in interior if b not in excluded]).feasible
        return completion_ok[excluded]

    class _Timeout(Exception):
        pass

    def dfs(pos: int, chosen: list[int], excluded: frozenset[int], k: int):
        if search.out_of_time():
            raise _Timeout
        if len(chosen) == k:
            sol = search.evaluate(chosen)
            return (tuple(chosen), sol) if sol.feasible else None
        if n - pos < k - len(chosen):
            return None
        if excluded and not completion_feasible(excluded):
            return None
        bus = interior[pos]
        found = dfs(pos + 1, chosen + [bus], excluded, k)
        if found:
            return found
        return dfs(pos + 1, chosen, excluded | {bus}, k)

    for k in range(n + 1):
        try:
            found = dfs(0, [], frozenset(), k)
        except _Timeout:
            return search.result(interior, search.cache[tuple(interior)], BUDGET_EXHAUSTED,
                                 reached_cardinality=k)
        if found:
            return search.result(found[0], found[1], OPTIMAL)
    return search.result(interior, search.cache[tuple(interior)], OPTIMAL)


def _greedy(search: _Search, interior: tuple[int, ...]) -> SparseAttackResult:
    chosen: list[int] = []
    sol = search.evaluate(chosen)
    while not sol.feasible:
        if search.out_of_time():
            return search.result(interior, search.cache[tuple(interior)], BUDGET_EXHAUSTED)
        best = None
        for bus in interior:
            if bus in chosen:
                continue
            trial = search.evaluate(chosen + [bus])
            score = (not trial.feasible, trial.residual_norm + trial.angle_violation, bus)
            if best is None or score < best[0]:
                best = (score, bus, trial)
        chosen.append(best[1])
        sol = best[2]
    return search.result(chosen, sol, FEASIBLE_HEURISTIC)


def solve_arbitrary(
    net: Network,
    zone: AttackZone,
    baseline: VoltageState,
    cfg: SolverConfig | None = None,
) -> SparseAttackResult:
    """Every interior bus is manipulated; no sparsity objective."""
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    selection = SelectionVector.of(zone, zone.interior_buses)
    sol = ZoneProblem(net, zone, baseline, cfg).solve(selection)
    return SparseAttackResult(selection=selection, cardinality=selection.cardinality, solution=sol,
                              subsets_explored=1, status=FEASIBLE_HEURISTIC if sol.feasible else INFEASIBLE,
                              wall_time=time.perf_counter() - start)
