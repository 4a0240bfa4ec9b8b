"""Scenario configuration and the end-to-end attack pipeline."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .acpf import VoltageState, newton_power_flow
from .attack_vector import AttackVector, assemble
from .netmodel import Network, bundled_case_path, load_case
from .sparse_attack import SolverConfig, SparseAttackResult, solve_arbitrary, solve_sparse
from .stealth import StealthVerdict, stealth_check
from .zone import AttackZone, build_zone

IEEE57_ZONE = (20, 21, 22, 23, 24, 25, 26, 27, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 56, 57)
IEEE57_BOUNDARY = (20, 27, 38, 56)


@dataclass
class StealthConfig:
    noise_sigma: Any = None  # None, a float, or {kind: sigma}
    tau: float | None = None
    pmu_channels: bool = True


@dataclass
class ScenarioConfig:
    zone_buses: list[int]
    boundary_buses: list[int]
    target_line: tuple[int, int]
    w: float = 3.0
    mode: str = "sparse"
    case_path: str | None = None  # None -> bundled IEEE 57-bus case
    solver: SolverConfig = field(default_factory=SolverConfig)
    stealth: StealthConfig = field(default_factory=StealthConfig)
    output_dir: str = "out"
    seed: int = 0
    enforce_q_limits: bool = False

    def __post_init__(self):
        if self.mode not in ("sparse", "arbitrary"):
            raise ValueError(f"mode must be 'sparse' or 'arbitrary', got {self.mode!r}")
        self.target_line = tuple(int(b) for b in self.target_line)
        if len(self.target_line) != 2:
            raise ValueError("target_line must be a pair of bus ids")

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        solver = doc.pop("solver", {}) or {}
        stealth = doc.pop("stealth", {}) or {}
        return cls(solver=SolverConfig(**solver), stealth=StealthConfig(**stealth), **doc)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["target_line"] = list(self.target_line)
        return doc

    def with_overrides(self, **changes) -> "ScenarioConfig":
        """Copy with top-level, ``solver.*`` or ``stealth.*`` fields replaced; ``None`` values are ignored."""
        top, solver, stealth = {}, {}, {}
        solver_fields = {f.name for f in dataclasses.fields(SolverConfig)}
        stealth_fields = {f.name for f in dataclasses.fields(StealthConfig)}
        for key, value in changes.items():
            if value is None:
                continue
            if key in solver_fields:
                solver[key] = value
            elif key in stealth_fields:
                stealth[key] = value
            else:
                top[key] = value
        return dataclasses.replace(
            self,
            solver=dataclasses.replace(self.solver, **solver),
            stealth=dataclasses.replace(self.stealth, **stealth),
            **top,
        )

    def load_network(self) -> Network:
        return load_case(self.case_path or bundled_case_path())


def ieee57_scenario(mode: str = "sparse", w: float = 3.0) -> ScenarioConfig:
    """The 57-bus zone with target line 23-24."""
    return ScenarioConfig(zone_buses=list(IEEE57_ZONE), boundary_buses=list(IEEE57_BOUNDARY),
                          target_line=(23, 24), w=w, mode=mode)


@dataclass
class AttackRun:
    net: Network
    zone: AttackZone
    baseline: VoltageState
    result: SparseAttackResult
    vector: AttackVector | None
    verdict: StealthVerdict | None
    wall_time: float


def prepare(cfg: ScenarioConfig) -> tuple[Network, VoltageState, AttackZone]:
    net = cfg.load_network()
    baseline = newton_power_flow(net, enforce_q_limits=cfg.enforce_q_limits)
    zone = build_zone(net, cfg.zone_buses, cfg.boundary_buses, cfg.target_line, cfg.w)
    return net, baseline, zone


def run_attack(cfg: ScenarioConfig) -> AttackRun:
    """Parse, solve power flow, build the zone, design the attack, and check stealth."""
    start = time.perf_counter()
    net, baseline, zone = prepare(cfg)
    solve = solve_sparse if cfg.mode == "sparse" else solve_arbitrary
    result = solve(net, zone, baseline, cfg.solver)
    vector = verdict = None
    if result.solution.feasible:
        attacked = result.solution.state
        vector = assemble(net, zone, baseline, attacked)
        verdict = stealth_check(net, zone, baseline, attacked, cfg.stealth.noise_sigma, cfg.stealth.tau,
                                seed=cfg.seed, pmu_channels=cfg.stealth.pmu_channels, attack=vector)
    return AttackRun(net, zone, baseline, result, vector, verdict, time.perf_counter() - start)


def selection_rows(run: AttackRun) -> list[dict]:
    """Per-zone-bus rows in the layout of the before/after voltage tables."""
    net, zone = run.net, run.zone
    chosen = set(run.result.selection.selected) if run.result.solution.feasible else set()
    after = run.result.solution.state
    rows = []
    for bus_id in sorted(zone.zone_buses):
        i = net.index[bus_id]
        rows.append({
            "bus_id": bus_id,
            "role": "boundary" if bus_id in zone.boundary_buses else "interior",
            "zero_injection": bus_id in zone.interior_zero_injection,
            "selected": bus_id in chosen,
            "v_before": float(run.baseline.v[i]),
            "v_after": float(after.v[i]),
            "theta_before": float(run.baseline.theta[i]),
            "theta_after": float(after.theta[i]),
        })
    return rows


def write_outputs(run: AttackRun, cfg: ScenarioConfig) -> dict[str, Path]:
    from .report import write_attack_reports

    return write_attack_reports(run, cfg, Path(cfg.output_dir))
