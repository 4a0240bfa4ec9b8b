"""Report files: CSV/JSON in full precision plus rounded text tables."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .acpf import VoltageState
from .netmodel import Network


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def rows_to_csv(rows: list[dict], fields: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def text_table(rows: list[dict], fields: list[str], digits: int = 4) -> str:
    def cell(v):
        if isinstance(v, bool):
            return "x" if v else ""
        if isinstance(v, float):
            return f"{v:.{digits}f}"
        return str(v)

    cells = [[cell(r[f]) for f in fields] for r in rows]
    widths = [max(len(f), *(len(c[i]) for c in cells)) if cells else len(f) for i, f in enumerate(fields)]
    lines = ["  ".join(f.rjust(w) for f, w in zip(fields, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


PF_FIELDS = ["bus_id", "kind", "v", "theta"]


def pf_rows(net: Network, state: VoltageState) -> list[dict]:
    return [{"bus_id": b.id, "kind": b.kind, "v": float(state.v[i]), "theta": float(state.theta[i])}
            for i, b in enumerate(net.buses)]


SELECTION_FIELDS = ["bus_id", "role", "zero_injection", "selected",
                    "v_before", "v_after", "theta_before", "theta_after"]


def write_attack_reports(run, cfg, out_dir: Path) -> dict[str, Path]:
    from .scenario import selection_rows
    from .zone import zone_report

    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    def put(name: str, text: str):
        path = out_dir / name
        path.write_text(text)
        paths[name] = path

    rows = selection_rows(run)
    put("selection.csv", rows_to_csv(rows, SELECTION_FIELDS))
    put("selection.txt", text_table(rows, SELECTION_FIELDS))
    result = run.result
    meta = {
        "mode": cfg.mode,
        "status": result.status,
        "feasible": result.solution.feasible,
        "cardinality": result.cardinality,
        "selected_buses": list(result.selection.selected),
        "subsets_explored": result.subsets_explored,
        "inner_residual": result.solution.residual_norm,
        "zone": zone_report(run.net, run.zone),
        "config": cfg.to_dict(),
    }
    put("run.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    # wall time varies between runs, so it lives apart from the reproducible reports
    put("timing.json", json.dumps({"wall_time_s": run.wall_time, "solver_time_s": result.wall_time}) + "\n")
    if run.vector is not None:
        put("attack_vector.csv", run.vector.to_csv(run.net))
        put("attack_vector.json", run.vector.to_json(run.net) + "\n")
    if run.verdict is not None:
        put("stealth.json", run.verdict.to_json() + "\n")
    return paths
