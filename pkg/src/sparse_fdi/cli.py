"""Command-line front end.

    sparse-fdi config ieee57-sparse > scenario.json
    sparse-fdi pf scenario.json
    sparse-fdi attack scenario.json --mode arbitrary
    sparse-fdi verify out/attack_vector.json scenario.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .acpf import PowerFlowError, newton_power_flow
from .attack_vector import AttackVector
from .netmodel import CaseFormatError
from .report import PF_FIELDS, pf_rows, rows_to_csv, text_table
from .scenario import ScenarioConfig, ieee57_scenario, prepare, run_attack, write_outputs
from .sparse_attack import STRATEGIES
from .stealth import EstimationError
from .verify import verify_attack
from .zone import ZoneError

logger = logging.getLogger("sparse_fdi")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_STEALTH = 3
EXIT_INPUT = 4
EXIT_CONVERGENCE = 5


def _noise(value: str | None):
    if value is None:
        return None
    if value == "default":
        from .stealth import DEFAULT_SIGMAS

        return dict(DEFAULT_SIGMAS)
    return float(value)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=Path, help="scenario JSON file")
    g = p.add_argument_group("overrides (flag wins over file)")
    g.add_argument("--case", dest="case_path")
    g.add_argument("--output-dir")
    g.add_argument("--mode", choices=["sparse", "arbitrary"])
    g.add_argument("--w", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--strategy", choices=STRATEGIES)
    g.add_argument("--big-m", type=float)
    g.add_argument("--angle-limit", type=float, help="rad")
    g.add_argument("--eq-tol", type=float)
    g.add_argument("--lm-max-iter", type=int)
    g.add_argument("--time-budget", type=float, help="seconds")
    g.add_argument("--target-end", choices=["from", "to"])
    g.add_argument("--no-reactive-overload", dest="reactive_overload", action="store_const", const=False)
    g.add_argument("--noise-sigma", type=_noise, help="float, or 'default' for per-kind defaults")
    g.add_argument("--tau", type=float)
    g.add_argument("--no-pmu", dest="pmu_channels", action="store_const", const=False)
    g.add_argument("--enforce-q-limits", action="store_const", const=True)


_OVERRIDE_KEYS = ("case_path", "output_dir", "mode", "w", "seed", "strategy", "big_m", "angle_limit",
                  "eq_tol", "lm_max_iter", "time_budget", "target_end", "reactive_overload",
                  "noise_sigma", "tau", "pmu_channels", "enforce_q_limits")


def load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_json(args.config.read_text())
    return cfg.with_overrides(**{k: getattr(args, k, None) for k in _OVERRIDE_KEYS})


def cmd_config(args) -> int:
    mode = "arbitrary" if args.name.endswith("arbitrary") else "sparse"
    print(json.dumps(ieee57_scenario(mode).to_dict(), indent=2))
    return EXIT_OK


def cmd_pf(args) -> int:
    cfg = load_config(args)
    net = cfg.load_network()
    state = newton_power_flow(net, enforce_q_limits=cfg.enforce_q_limits)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = pf_rows(net, state)
    (out / "pf.csv").write_text(rows_to_csv(rows, PF_FIELDS))
    (out / "pf.txt").write_text(text_table(rows, PF_FIELDS))
    print(f"power flow converged: {net.n_bus} buses -> {out / 'pf.csv'}")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = load_config(args)
    run = run_attack(cfg)
    paths = write_outputs(run, cfg)
    res = run.result
    print(f"status={res.status} cardinality={res.cardinality} selected={list(res.selection.selected)} "
          f"subsets={res.subsets_explored} time={run.wall_time:.2f}s")
    print((Path(cfg.output_dir) / "selection.txt").read_text(), end="")
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    if not res.solution.feasible:
        print(f"no feasible attack (max residual {res.solution.residual_norm:.3g})", file=sys.stderr)
        return EXIT_INFEASIBLE
    v = run.verdict
    print(f"stealth: |r|={v.clean.norm:.6g} |r_attack|={v.attacked.norm:.6g} "
          f"tau={v.clean.threshold:.6g} -> {'pass' if v.passed else 'FAIL'}")
    return EXIT_OK if v.passed else EXIT_STEALTH


def cmd_verify(args) -> int:
    cfg = load_config(args)
    net, baseline, zone = prepare(cfg)
    text = args.attack_file.read_text()
    if args.attack_file.suffix.lower() == ".csv":
        vector = AttackVector.from_csv(text, zone)
    else:
        vector = AttackVector.from_json(text, zone)
    checks = verify_attack(net, zone, baseline, vector, cfg.solver, noise_sigma=cfg.stealth.noise_sigma,
                           tau=cfg.stealth.tau, seed=cfg.seed, pmu_channels=cfg.stealth.pmu_channels)
    for c in checks:
        line = f"{'ok  ' if c.passed else 'FAIL'} {c.name:<24} {c.magnitude:.3g}"
        if not c.passed and c.detail:
            line += f"  {c.detail}"
        print(line)
    failed = [c for c in checks if not c.passed]
    if not failed:
        return EXIT_OK
    if all(c.name == "stealth" for c in failed):
        return EXIT_STEALTH
    return EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparse-fdi", description="Sparse AC false data injection attack design")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="print a built-in scenario config")
    p.add_argument("name", choices=["ieee57-sparse", "ieee57-arbitrary"])
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("pf", help="solve the pre-attack power flow and write per-bus voltages")
    _add_overrides(p)
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("attack", help="design the attack and check stealth")
    _add_overrides(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("verify", help="re-check a stored attack vector")
    p.add_argument("attack_file", type=Path)
    _add_overrides(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except (CaseFormatError, ZoneError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PowerFlowError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
