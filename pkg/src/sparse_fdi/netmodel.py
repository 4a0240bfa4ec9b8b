"""MATPOWER case parsing and the immutable per-unit network model."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

SLACK, PV, PQ = "slack", "PV", "PQ"
_KIND_CODES = {1: PQ, 2: PV, 3: SLACK}
_KIND_NUMBERS = {PQ: 1, PV: 2, SLACK: 3}


class CaseFormatError(ValueError):
    """Raised for malformed or inconsistent case data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_demand: float
    q_demand: float
    g_shunt: float
    b_shunt: float
    v_min: float
    v_max: float
    base_kv: float
    vm_init: float = 1.0
    va_init: float = 0.0  # rad

    def __post_init__(self):
        if self.kind not in (SLACK, PV, PQ):
            raise CaseFormatError(f"bus {self.id}: unknown kind {self.kind!r}")
        if not 0 < self.v_min <= self.v_max:
            raise CaseFormatError(f"bus {self.id}: voltage bounds [{self.v_min}, {self.v_max}] invalid")


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float
    tap: float = 1.0
    shift: float = 0.0  # rad
    status: bool = True
    rate_a: float = 0.0  # MVA, 0 = unlimited

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus} is a self-loop")
        if self.r**2 + self.x**2 <= 1e-12:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus} has degenerate impedance")
        if self.tap <= 0:
            raise CaseFormatError(f"branch {self.from_bus}-{self.to_bus} has non-positive tap")

    @property
    def series_admittance(self) -> complex:
        """g + jb of the series element."""
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_gen: float
    q_gen: float
    q_min: float
    q_max: float
    v_setpoint: float
    status: bool = True
    p_min: float = 0.0
    p_max: float = 0.0

    def __post_init__(self):
        if self.q_min > self.q_max:
            raise CaseFormatError(f"generator at bus {self.bus}: q_min > q_max")


@dataclass(frozen=True)
class Network:
    """Per-unit network on ``base_mva``. Only in-service branches and generators are kept."""

    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = field(default=())
    name: str = "case"

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise CaseFormatError(f"duplicate bus id(s): {dup}")
        known = set(ids)
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseFormatError(f"branch {br.from_bus}-{br.to_bus} references missing bus {end}")
        for g in self.generators:
            if g.bus not in known:
                raise CaseFormatError(f"generator references missing bus {g.bus}")
        n_slack = sum(b.kind == SLACK for b in self.buses)
        if n_slack != 1:
            raise CaseFormatError(f"expected exactly one slack bus, found {n_slack}")

    @cached_property
    def index(self) -> dict[int, int]:
        """Bus id -> position in ``buses``."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @cached_property
    def slack_index(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == SLACK)

    @cached_property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses])

    @cached_property
    def gen_buses(self) -> frozenset[int]:
        return frozenset(g.bus for g in self.generators)

    def bus(self, bus_id: int) -> Bus:
        try:
            return self.buses[self.index[bus_id]]
        except KeyError:
            raise KeyError(f"no bus {bus_id}") from None

    def find_branch(self, from_bus: int, to_bus: int) -> int:
        """Index of the first branch joining the two buses, in either orientation."""
        for k, br in enumerate(self.branches):
            if (br.from_bus, br.to_bus) in ((from_bus, to_bus), (to_bus, from_bus)):
                return k
        raise KeyError(f"no branch between buses {from_bus} and {to_bus}")

    def incident_branches(self, bus_id: int) -> list[int]:
        return [k for k, br in enumerate(self.branches) if bus_id in (br.from_bus, br.to_bus)]

    def neighbors(self, bus_id: int) -> set[int]:
        out = set()
        for br in self.branches:
            if br.from_bus == bus_id:
                out.add(br.to_bus)
            elif br.to_bus == bus_id:
                out.add(br.from_bus)
        return out

    def net_generation(self) -> tuple[np.ndarray, np.ndarray]:
        """Scheduled (P_G - P_D, Q_G - Q_D) per bus, p.u."""
        p = -np.array([b.p_demand for b in self.buses])
        q = -np.array([b.q_demand for b in self.buses])
        for g in self.generators:
            i = self.index[g.bus]
            p[i] += g.p_gen
            q[i] += g.q_gen
        return p, q

    def ybus(self) -> np.ndarray:
        """Dense complex bus admittance matrix, taps and phase shifts included."""
        n = self.n_bus
        y = np.zeros((n, n), dtype=complex)
        for br in self.branches:
            f, t = self.index[br.from_bus], self.index[br.to_bus]
            ys = br.series_admittance
            ratio = br.tap * np.exp(1j * br.shift)
            ytt = ys + 0.5j * br.b_charging
            y[f, f] += ytt / (br.tap**2)
            y[f, t] += -ys / np.conj(ratio)
            y[t, f] += -ys / ratio
            y[t, t] += ytt
        for i, b in enumerate(self.buses):
            y[i, i] += complex(b.g_shunt, b.b_shunt)
        return y


def zero_injection_buses(net: Network, exclude: Iterable[int] = ()) -> set[int]:
    """Buses with no in-service generator and no load."""
    excluded = set(exclude)
    return {
        b.id
        for b in net.buses
        if b.id not in excluded and b.id not in net.gen_buses and b.p_demand == 0 and b.q_demand == 0
    }


# -- parsing -----------------------------------------------------------------

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")


def _strip_comment(line: str) -> str:
    # '%' inside quoted strings is rare in case files; strings only appear in names
    in_quote = False
    for i, ch in enumerate(line):
        if ch == "'":
            in_quote = not in_quote
        elif ch == "%" and not in_quote:
            return line[:i]
    return line


def _logical_lines(text: str) -> list[tuple[int, str]]:
    """Comment-free lines with MATLAB '...' continuations joined; keeps the first line number."""
    out: list[tuple[int, str]] = []
    pending = ""
    start = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).rstrip()
        if not pending:
            start = lineno
        if line.endswith("..."):
            pending += line[:-3] + " "
            continue
        out.append((start, pending + line))
        pending = ""
    if pending:
        out.append((start, pending))
    return out


def _parse_matrices(text: str) -> tuple[dict[str, list[tuple[int, list[float]]]], dict[str, float]]:
    matrices: dict[str, list[tuple[int, list[float]]]] = {}
    scalars: dict[str, float] = {}
    lines = _logical_lines(text)
    i = 0
    while i < len(lines):
        lineno, line = lines[i]
        i += 1
        m = _ASSIGN.match(line)
        if not m:
            continue
        name, rhs = m.group(1), m.group(2).strip()
        if rhs.startswith("{"):
            # cell arrays (bus names etc.) are skipped
            depth_text = rhs
            while "}" not in depth_text and i < len(lines):
                depth_text = lines[i][1]
                i += 1
            continue
        if not rhs.startswith("["):
            value = rhs.rstrip(";").strip()
            if value.startswith("'"):
                continue
            try:
                scalars[name] = float(value)
            except ValueError:
                raise CaseFormatError(f"cannot parse value of mpc.{name}: {value!r}", lineno) from None
            continue
        rows: list[tuple[int, list[float]]] = []
        body = [(lineno, rhs[1:])]
        closed = "]" in rhs
        while not closed and i < len(lines):
            body.append(lines[i])
            closed = "]" in lines[i][1]
            i += 1
        if not closed:
            raise CaseFormatError(f"unterminated matrix mpc.{name}", lineno)
        for ln, chunk in body:
            chunk = chunk.split("]")[0]
            for piece in chunk.split(";"):
                tokens = piece.replace(",", " ").split()
                if not tokens:
                    continue
                try:
                    rows.append((ln, [float(t) for t in tokens]))
                except ValueError:
                    raise CaseFormatError(f"non-numeric entry in mpc.{name}: {piece.strip()!r}", ln) from None
        matrices[name] = rows
    return matrices, scalars


def _need(row: list[float], n: int, what: str, lineno: int) -> None:
    if len(row) < n:
        raise CaseFormatError(f"{what} row has {len(row)} columns, expected at least {n}", lineno)


def parse_case(text: str, name: str = "case") -> Network:
    """Parse MATPOWER case text into a per-unit :class:`Network`."""
    matrices, scalars = _parse_matrices(text)
    for required in ("bus", "gen", "branch"):
        if required not in matrices:
            raise CaseFormatError(f"missing mpc.{required}")
    if "baseMVA" not in scalars:
        raise CaseFormatError("missing mpc.baseMVA")
    base = scalars["baseMVA"]
    if base <= 0:
        raise CaseFormatError("mpc.baseMVA must be positive")

    generators = []
    for ln, row in matrices["gen"]:
        _need(row, 8, "gen", ln)
        if row[7] <= 0:
            continue
        generators.append(
            Generator(
                bus=int(row[0]),
                p_gen=row[1] / base,
                q_gen=row[2] / base,
                q_max=row[3] / base,
                q_min=row[4] / base,
                v_setpoint=row[5],
                status=True,
                p_max=row[8] / base if len(row) > 8 else 0.0,
                p_min=row[9] / base if len(row) > 9 else 0.0,
            )
        )
    gen_buses = {g.bus for g in generators}

    buses = []
    for ln, row in matrices["bus"]:
        _need(row, 13, "bus", ln)
        code = int(row[1])
        if code not in _KIND_CODES:
            raise CaseFormatError(f"bus {int(row[0])}: unsupported bus type {code}", ln)
        kind = _KIND_CODES[code]
        bus_id = int(row[0])
        if kind == PV and bus_id not in gen_buses:
            kind = PQ
        try:
            buses.append(
                Bus(
                    id=bus_id,
                    kind=kind,
                    p_demand=row[2] / base,
                    q_demand=row[3] / base,
                    g_shunt=row[4] / base,
                    b_shunt=row[5] / base,
                    vm_init=row[7],
                    va_init=math.radians(row[8]),
                    base_kv=row[9],
                    v_max=row[11],
                    v_min=row[12],
                )
            )
        except CaseFormatError as exc:
            raise CaseFormatError(str(exc), ln) from None

    branches = []
    for ln, row in matrices["branch"]:
        _need(row, 11, "branch", ln)
        if row[10] <= 0:
            continue
        try:
            branches.append(
                Branch(
                    from_bus=int(row[0]),
                    to_bus=int(row[1]),
                    r=row[2],
                    x=row[3],
                    b_charging=row[4],
                    rate_a=row[5],
                    tap=row[8] if row[8] != 0 else 1.0,
                    shift=math.radians(row[9]),
                )
            )
        except CaseFormatError as exc:
            raise CaseFormatError(str(exc), ln) from None

    return Network(base_mva=base, buses=tuple(buses), branches=tuple(branches),
                   generators=tuple(generators), name=name)


def load_case(path: str | Path) -> Network:
    path = Path(path)
    return parse_case(path.read_text(), name=path.stem)


def bundled_case_path(name: str = "case57") -> Path:
    """Path of a case file shipped with the package."""
    return Path(str(resources.files("sparse_fdi") / "data" / f"{name}.m"))


def write_case(net: Network) -> str:
    """Serialize back to MATPOWER text. Values are written with full precision."""
    base = net.base_mva
    f = repr
    lines = [
        f"function mpc = {net.name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {f(base)};",
        "",
        "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin",
        "mpc.bus = [",
    ]
    for b in net.buses:
        vals = [b.id, _KIND_NUMBERS[b.kind], b.p_demand * base, b.q_demand * base,
                b.g_shunt * base, b.b_shunt * base, 1, b.vm_init, math.degrees(b.va_init),
                b.base_kv, 1, b.v_max, b.v_min]
        lines.append("\t" + "\t".join(f(v) for v in vals) + ";")
    lines += ["];", "", "%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin", "mpc.gen = ["]
    for g in net.generators:
        vals = [g.bus, g.p_gen * base, g.q_gen * base, g.q_max * base, g.q_min * base,
                g.v_setpoint, base, 1, g.p_max * base, g.p_min * base]
        lines.append("\t" + "\t".join(f(v) for v in vals) + ";")
    lines += ["];", "", "%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax",
              "mpc.branch = ["]
    for br in net.branches:
        vals = [br.from_bus, br.to_bus, br.r, br.x, br.b_charging, br.rate_a, 0, 0,
                br.tap, math.degrees(br.shift), 1, -360, 360]
        lines.append("\t" + "\t".join(f(v) for v in vals) + ";")
    lines.append("];")
    return "\n".join(lines) + "\n"
