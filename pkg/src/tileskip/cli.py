"""Command line front end: generate, run, calibrate, experiment, report.

Configuration is a flat key=value file; any flag given on the command line
overrides the file.  Unknown keys are rejected.  Every artifact embeds the
fully resolved configuration so each table can be reproduced from the
artifact alone.

Thresholds are accepted in their signed form (a number <= 0); the engine
works with epsilon = -threshold.

Exit codes: 0 success, 2 validation failure, 3 runtime failure,
4 calibration finished with flagged timesteps.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .attention import TileGeometry
from .calibration import ErrorBoundSpec, calibrate, load_schedule, save_schedule
from .errors import ValidationError, require
from .harness import (
    TrajectoryConfig,
    forward_bound_check,
    generate_trajectory,
    persistence_experiment,
    perturbation_experiment,
)
from .ordering import OrderingStrategy
from .skipmask import compile_skip_list, SkipMask
from .trajectory import read_latn, write_latn

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_FLAGGED = 4

EXPERIMENTS = ("persistence", "perturbation", "length-sweep", "tradeoff",
               "bound-check")

_INT = ("timesteps", "layers", "heads", "n", "d", "seed", "h_q", "h_k",
        "workers", "reps")
_FLOAT = ("rho", "threshold", "xi", "tau")
_STR = ("mode", "ordering", "schedule", "out")
_CSV_FLOAT = ("grid", "epsilons")
_CSV_INT = ("deltas", "inject_ts", "ns")

DEFAULTS = {
    "timesteps": 8, "layers": 1, "heads": 1, "n": 128, "d": 32,
    "seed": 0, "h_q": 16, "h_k": 16, "workers": 1, "reps": 1,
    "rho": 0.02, "threshold": -4.0, "xi": 0.075, "tau": 0.01,
    "mode": "qk", "ordering": "linear", "schedule": "", "out": "runs",
    "grid": [2.0, 4.0, 6.0, 8.0, 12.0],
    "epsilons": [2.0, 4.0, 8.0],
    "deltas": [1, 4, 8],
    "inject_ts": [],
    "ns": [256, 512, 1024],
}


def _parse_value(key: str, raw):
    if isinstance(raw, (int, float, list)):
        return raw
    raw = raw.strip()
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
        if key in _CSV_FLOAT:
            return [float(x) for x in raw.split(",") if x.strip()]
        if key in _CSV_INT:
            return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: bad value {raw!r}") from exc
    return raw


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the key=value file, then command line overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in DEFAULTS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            cfg[key] = _parse_value(key, raw)
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        require(key in DEFAULTS, f"unknown config key {key!r}")
        cfg[key] = _parse_value(key, val)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    require(cfg["mode"] in ("dense", "pv", "qk"),
            f"mode must be dense, pv or qk, got {cfg['mode']!r}")
    require(cfg["ordering"] in ("linear", "radial"),
            f"ordering must be linear or radial, got {cfg['ordering']!r}")
    require(cfg["threshold"] <= 0.0,
            f"threshold is signed and must be <= 0, got {cfg['threshold']}")
    for key in ("timesteps", "layers", "heads", "n", "d", "h_q", "h_k",
                "workers", "reps"):
        require(cfg[key] >= 1, f"{key} must be >= 1, got {cfg[key]}")
    require(0.0 <= cfg["rho"] <= 1.0, f"rho must be in [0, 1], got {cfg['rho']}")


def _epsilon(cfg: dict) -> float:
    return -float(cfg["threshold"])


def _ordering(cfg: dict) -> OrderingStrategy:
    return OrderingStrategy(cfg["ordering"])


def _traj_config(cfg: dict) -> TrajectoryConfig:
    return TrajectoryConfig(cfg["timesteps"], cfg["layers"], cfg["heads"],
                            cfg["n"], cfg["d"], cfg["rho"], cfg["seed"])


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_traj_checked(cfg: dict, path: str):
    traj = read_latn(path)
    expect = (cfg["timesteps"], cfg["layers"], cfg["heads"], cfg["n"], cfg["d"])
    got = (traj.timesteps, traj.layers, traj.heads, traj.n, traj.d)
    require(got == expect,
            f"{path}: trajectory shape {got} does not match config "
            f"(timesteps, layers, heads, n, d) = {expect}")
    return traj


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"wrote {path}")


# -- commands ------------------------------------------------------------------


def cmd_generate(cfg: dict) -> int:
    out = _outdir(cfg)
    traj = generate_trajectory(_traj_config(cfg))
    path = out / "trajectory.latn"
    write_latn(path, traj)
    print(f"wrote {path}")
    print(f"sha256 {_sha256(path)}")
    return EXIT_OK


def cmd_run(cfg: dict, input_path: str) -> int:
    out = _outdir(cfg)
    traj = _load_traj_checked(cfg, input_path)
    geom = TileGeometry(traj.n, cfg["h_q"], cfg["h_k"])
    schedule = None
    epsilon = None
    if cfg["mode"] != "dense":
        if cfg["schedule"]:
            require(cfg["mode"] == "qk", "schedule files drive qk mode only")
            schedule, _ = load_schedule(cfg["schedule"])
        else:
            epsilon = _epsilon(cfg)
    run = bench.execute_run(traj, geom, mode=cfg["mode"], epsilon=epsilon,
                            schedule=schedule, ordering=_ordering(cfg),
                            workers=cfg["workers"], reps=cfg["reps"])
    payload = run.report.to_json()
    payload["config"] = cfg
    payload["input"] = str(input_path)
    _write_json(out / "report.json", payload)
    bench.write_csv(out / "report.csv", [run.report])
    print(f"wrote {out / 'report.csv'}")
    if run.mask is not None:
        run.mask.save_snapshot(out / "mask.json")
        print(f"wrote {out / 'mask.json'}")
    print(f"mode={cfg['mode']} sparsity={run.report.sparsity:.4f} "
          f"eta_final={run.report.eta_final:.3e} "
          f"wall={run.report.wall_seconds:.3f}s")
    return EXIT_OK


def cmd_calibrate(cfg: dict, input_path: str) -> int:
    out = _outdir(cfg)
    traj = _load_traj_checked(cfg, input_path)
    geom = TileGeometry(traj.n, cfg["h_q"], cfg["h_k"])
    spec = ErrorBoundSpec(cfg["xi"], cfg["tau"], traj.timesteps)
    result = calibrate(traj, geom, cfg["grid"], spec, ordering=_ordering(cfg))
    path = out / "schedule.json"
    save_schedule(path, result, cfg["xi"], cfg["tau"], seed=cfg["seed"])
    print(f"wrote {path}")
    print(f"schedule {[float(e) for e in result.schedule.eps]}")
    if result.flagged:
        print(f"flagged timesteps (bound unmet at largest grid value): "
              f"{result.flagged}", file=sys.stderr)
        return EXIT_FLAGGED
    return EXIT_OK


def _experiment_persistence(cfg: dict) -> dict:
    traj = generate_trajectory(_traj_config(cfg))
    geom = TileGeometry(traj.n, cfg["h_q"], cfg["h_k"])
    deltas = [d for d in cfg["deltas"] if d < traj.timesteps]
    require(deltas, "no delta fits inside the trajectory")
    report = persistence_experiment(traj, geom, _epsilon(cfg), deltas,
                                    ordering=_ordering(cfg))
    return {
        "epsilon": report.epsilon,
        "deltas": list(report.deltas),
        "total_cells": report.total_cells,
        "samples": [
            {"t": t, "delta": delta, "persisted": s.persisted,
             "base_rate": s.base_rate}
            for (t, delta), s in sorted(report.samples.items())
        ],
    }


def _experiment_perturbation(cfg: dict) -> dict:
    traj = generate_trajectory(_traj_config(cfg))
    geom = TileGeometry(traj.n, cfg["h_q"], cfg["h_k"])
    T = traj.timesteps
    inject = cfg["inject_ts"] or sorted({0, T // 3, 2 * T // 3, T - 1})
    etas = perturbation_experiment(traj, geom, inject, _epsilon(cfg),
                                   ordering=_ordering(cfg))
    return {"epsilon_inject": _epsilon(cfg),
            "eta_final": [{"t": t, "eta": etas[t]} for t in sorted(etas)]}


def _experiment_length_sweep(cfg: dict, out: Path) -> dict:
    base = _traj_config(cfg)
    reports = bench.length_sweep(cfg["ns"], base, cfg["h_q"], cfg["h_k"],
                                 _epsilon(cfg), mode=cfg["mode"],
                                 ordering=_ordering(cfg),
                                 reps=max(3, cfg["reps"]))
    bench.write_csv(out / "length_sweep.csv", reports)
    print(f"wrote {out / 'length_sweep.csv'}")
    return {"rows": [r.to_json() for r in reports]}


def _experiment_tradeoff(cfg: dict, out: Path) -> dict:
    reports = bench.sparsity_runtime_tradeoff(_traj_config(cfg), cfg["h_q"],
                                              cfg["h_k"], cfg["epsilons"],
                                              ordering=_ordering(cfg),
                                              reps=max(3, cfg["reps"]))
    bench.write_csv(out / "tradeoff.csv", reports)
    print(f"wrote {out / 'tradeoff.csv'}")
    return {"rows": [r.to_json() for r in reports]}


def _experiment_bound_check(cfg: dict, checks: int = 100_000) -> dict:
    rng = np.random.default_rng(cfg["seed"])
    n, d = 32, 8
    batch = 1000
    violations = 0
    min_slack = np.inf
    done = 0
    while done < checks:
        m = min(batch, checks - done)
        p_t = rng.dirichlet(np.full(n, 0.5), size=m)
        p_prev = rng.dirichlet(np.full(n, 0.5), size=m)
        v_t = rng.standard_normal((n, d))
        v_prev = v_t + 0.1 * rng.standard_normal((n, d))
        res = forward_bound_check(p_t, p_prev, v_t, v_prev)
        violations += 0 if res.holds else int((res.lhs > res.rhs).sum())
        min_slack = min(min_slack, res.slack)
        done += m
    return {"checks": done, "violations": violations,
            "min_slack": float(min_slack)}


def cmd_experiment(cfg: dict, name: str) -> int:
    require(name in EXPERIMENTS,
            f"unknown experiment {name!r}, choose from {EXPERIMENTS}")
    out = _outdir(cfg)
    if name == "persistence":
        payload = _experiment_persistence(cfg)
    elif name == "perturbation":
        payload = _experiment_perturbation(cfg)
    elif name == "length-sweep":
        payload = _experiment_length_sweep(cfg, out)
    elif name == "tradeoff":
        payload = _experiment_tradeoff(cfg, out)
    else:
        payload = _experiment_bound_check(cfg)
    payload = {"experiment": name, "config": cfg, "results": payload}
    _write_json(out / f"{name.replace('-', '_')}.json", payload)
    return EXIT_OK


def cmd_report(cfg: dict) -> int:
    out = _outdir(cfg)
    lines = []
    report_path = out / "report.json"
    if report_path.exists():
        with open(report_path) as fh:
            rep = json.load(fh)
        lines.append(f"run: mode={rep['mode']} n={rep['n']} d={rep['d']} "
                     f"T={rep['T']} epsilon={rep['epsilon']}")
        lines.append(f"  sparsity={rep['sparsity']:.4f} "
                     f"flops={rep['flops_performed']}/{rep['flops_dense']} "
                     f"wall={rep['wall_seconds']:.3f}s workers={rep['workers']}")
        lines.append("  sparsity_per_t: "
                     + " ".join(f"{s:.3f}" for s in rep["sparsity_per_t"]))
        if rep.get("eta_per_t"):
            lines.append("  eta_per_t:      "
                         + " ".join(f"{e:.2e}" for e in rep["eta_per_t"]))
    mask_path = out / "mask.json"
    if mask_path.exists():
        mask = SkipMask.load_snapshot(mask_path)
        skip_list = compile_skip_list(mask)
        lines.append(f"mask: {mask.layers}x{mask.heads} slices of "
                     f"{mask.ti}x{mask.tj} tiles, sparsity={mask.sparsity():.4f}")
        for layer in range(mask.layers):
            for head in range(mask.heads):
                nranges = sum(len(skip_list.row_ranges(layer, head, i))
                              for i in range(mask.ti))
                kept = sum(e - s for i in range(mask.ti)
                           for s, e in skip_list.row_ranges(layer, head, i))
                lines.append(f"  (layer {layer}, head {head}): "
                             f"{kept}/{mask.ti * mask.tj} tiles kept "
                             f"in {nranges} ranges")
    for name in EXPERIMENTS:
        path = out / f"{name.replace('-', '_')}.json"
        if not path.exists():
            continue
        with open(path) as fh:
            payload = json.load(fh)
        res = payload.get("results", {})
        if name == "persistence":
            samples = res.get("samples", [])
            defined = [s for s in samples if s["persisted"] is not None]
            if defined:
                mean_p = sum(s["persisted"] for s in defined) / len(defined)
                mean_b = sum(s["base_rate"] for s in defined) / len(defined)
                lines.append(f"persistence: eps={res['epsilon']} over "
                             f"{len(samples)} probes, mean persisted "
                             f"{mean_p:.3f} vs base rate {mean_b:.3f}")
        elif name == "perturbation":
            etas = ", ".join(f"t={row['t']}: {row['eta']:.3e}"
                             for row in res.get("eta_final", []))
            lines.append(f"perturbation: eps_inject={res['epsilon_inject']} "
                         f"final errors {etas}")
        elif name == "bound-check":
            lines.append(f"bound-check: {res['violations']} violations in "
                         f"{res['checks']} checks (min slack "
                         f"{res['min_slack']:.3e})")
        else:
            lines.append(f"{name}: {len(res.get('rows', []))} rows "
                         f"(see {path.with_suffix('.csv').name})")
    if not lines:
        raise ValidationError(f"no artifacts found under {out}")
    text = "\n".join(lines)
    print(text)
    (out / "summary.txt").write_text(text + "\n")
    print(f"wrote {out / 'summary.txt'}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key=value file")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=["dense", "pv", "qk"])
    common.add_argument("--ordering", choices=["linear", "radial"])
    common.add_argument("--threshold", type=float,
                        help="signed skip threshold, <= 0; engine epsilon is its negation")
    common.add_argument("--schedule", metavar="PATH")
    common.add_argument("--grid", metavar="CSV-FLOATS")
    common.add_argument("--xi", type=float)
    common.add_argument("--tau", type=float)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--workers", type=int)
    common.add_argument("--reps", type=int)

    parser = argparse.ArgumentParser(
        prog="tileskip",
        description="tiled sparse attention with persistent skip masks")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common],
                   help="write a synthetic trajectory tensor file")
    p_run = sub.add_parser("run", parents=[common],
                           help="run the engine over a tensor file")
    p_run.add_argument("input", help="LATN tensor file")
    p_cal = sub.add_parser("calibrate", parents=[common],
                           help="search per-timestep thresholds")
    p_cal.add_argument("input", help="LATN tensor file")
    p_exp = sub.add_parser("experiment", parents=[common],
                           help="run a named experiment")
    p_exp.add_argument("name", choices=EXPERIMENTS)
    sub.add_parser("report", parents=[common],
                   help="summarize artifacts in the output directory")
    return parser


_OVERRIDE_KEYS = ("seed", "mode", "ordering", "threshold", "schedule",
                  "grid", "xi", "tau", "out", "workers", "reps")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS}
        cfg = load_config(args.config, overrides)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.input)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args.input)
        if args.command == "experiment":
            return cmd_experiment(cfg, args.name)
        return cmd_report(cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
