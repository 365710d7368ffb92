"""Command-line front end: validated configs in, CSV/JSON results out.

Sweep points are pure tasks dispatched over a process pool (--threads);
rows are collected and written by the parent in point order, so results do
not depend on the worker count.  Every output file embeds the fully
resolved config and master seed in header comments.  Sweeps record
failures per point and continue; the exit code is nonzero only when
nothing succeeded (or the oracle battery fails).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .chain import ChainSpec
from .config import ConfigError, ExperimentConfig, load_config_file, resolve_config
from .presets import preset_config

CSV_VERSION = "zcoh-csv v1"
REPORT_VERSION = "zcoh-report v1"
ORACLE_TOLERANCE = 1e-10

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_COMPUTE = 2
EXIT_ORACLE = 3

_COMMANDS = {
    "reg-time": "registration-time",
    "ptz-complete": "ptz-complete",
    "ptz-restricted": "ptz-restricted",
    "arb-transfer": "arbitrary-parameter",
    "oracle-check": "oracle-check",
}


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return "" if value is None else str(value)


def write_csv(
    path: Path,
    columns: Sequence[str],
    rows: Sequence[Mapping[str, Any]],
    cfg: ExperimentConfig,
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# {CSV_VERSION}\n")
        fh.write(
            "# config: "
            + json.dumps(cfg.resolved, sort_keys=True, separators=(",", ":"))
            + "\n"
        )
        fh.write(f"# seed: {cfg.seed}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")
    return path


def _run_points(
    fn: Callable[[Dict[str, Any]], Dict[str, Any]],
    payloads: List[Dict[str, Any]],
    threads: int,
) -> List[Dict[str, Any]]:
    if threads <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, payloads))


# Worker bodies live at module level so the process pool can import them.


def _registration_point(payload: Dict[str, Any]) -> Dict[str, Any]:
    from .dynamics import SpectralCache
    from .solvers import RegistrationCriterion, find_registration_time

    t0 = time.perf_counter()
    criterion = RegistrationCriterion(payload["criterion"])
    k = 2 if criterion is RegistrationCriterion.TWO_EXCITATION_PROBABILITY else 1
    cache = SpectralCache(ChainSpec(payload["n"], payload["coupling_mode"]), k)
    try:
        reg = find_registration_time(
            cache,
            criterion,
            payload["n_sender"],
            window=payload["window"],
            grid_step=payload["grid_step"],
        )
        return {
            "n": payload["n"],
            "criterion": criterion.value,
            "t_star": reg.t_star,
            "criterion_value": reg.value,
            "wall_time": time.perf_counter() - t0,
            "status": "ok",
        }
    except Exception as exc:  # record-and-continue
        return {
            "n": payload["n"],
            "criterion": criterion.value,
            "t_star": float("nan"),
            "criterion_value": float("nan"),
            "wall_time": time.perf_counter() - t0,
            "status": f"failed:{type(exc).__name__}: {exc}",
        }


def run_table_registration_times(
    cfg: ExperimentConfig, threads: int = 1
) -> List[Dict[str, Any]]:
    criterion = cfg.criterion_or_rule()
    payloads = [
        {
            "n": n,
            "n_sender": cfg.n_sender,
            "criterion": criterion.value,
            "coupling_mode": cfg.coupling_mode,
            "window": cfg.window,
            "grid_step": cfg.registration_grid_step(),
        }
        for n in cfg.n_values
    ]
    return _run_points(_registration_point, payloads, threads)


def _deviation_point(payload: Dict[str, Any]) -> Dict[str, Any]:
    from .dynamics import SpectralCache
    from .optimize import DEConfig, ObjectiveSpec
    from .solvers import (
        RegistrationCriterion,
        find_registration_time,
        optimize_restricted_angles,
        solve_ptz_complete,
        solve_ptz_restricted,
    )

    t0 = time.perf_counter()
    n, ns = payload["n"], payload["n_sender"]
    spec = ChainSpec(n, payload["coupling_mode"])
    row: Dict[str, Any] = {
        "n": n,
        "n_sender": ns,
        "n_ancilla": payload.get("n_ancilla"),
        "delta": float("nan"),
        "residual": float("nan"),
        "seed": payload["seed"],
        "status": "ok",
    }
    caught: List[warnings.WarningMessage] = []
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if payload["protocol"] == "ptz-complete":
                cache = SpectralCache(spec, ns)
                reg = find_registration_time(
                    cache,
                    RegistrationCriterion(payload["criterion"]),
                    ns,
                    window=payload["window"],
                    grid_step=payload["grid_step"],
                )
                sol = solve_ptz_complete(cache, ns, reg)
            else:
                cache = SpectralCache(spec, 1)
                reg = find_registration_time(
                    cache,
                    RegistrationCriterion.FROBENIUS_W,
                    ns,
                    window=payload["window"],
                    grid_step=payload["grid_step"],
                )
                objective = ObjectiveSpec(
                    residual_form=payload["objective"]["residual_form"],
                    w1=payload["objective"]["w1"],
                    w2=payload["objective"]["w2"],
                )
                angles = optimize_restricted_angles(
                    cache,
                    ns,
                    payload["n_er"],
                    reg.t_star,
                    objective=objective,
                    de_config=DEConfig(**payload["de_config"]),
                )
                sol = solve_ptz_restricted(
                    cache,
                    ns,
                    payload["n_er"],
                    reg,
                    angles.params,
                    residual_form=objective.residual_form,
                )
            row["delta"] = sol.delta
            row["residual"] = sol.residual
    except Exception as exc:  # record-and-continue
        row["status"] = f"failed:{type(exc).__name__}: {exc}"
    notes = [str(w.message) for w in caught if issubclass(w.category, UserWarning)]
    if notes:
        joined = " | ".join(notes).replace(",", ";")
        row["status"] += f" (warn: {joined})"
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_curve_deviation(cfg: ExperimentConfig, threads: int = 1) -> List[Dict[str, Any]]:
    if cfg.protocol not in ("ptz-complete", "ptz-restricted"):
        raise ConfigError(
            f"deviation curves need a ptz protocol, got {cfg.protocol}", "$.protocol"
        )
    payloads = []
    index = 0
    for n in cfg.n_values:
        ers = cfg.er_list() if cfg.protocol == "ptz-restricted" else (None,)
        for er in ers:
            seed = cfg.point_seed(index)
            payload: Dict[str, Any] = {
                "protocol": cfg.protocol,
                "n": n,
                "n_sender": cfg.n_sender,
                "coupling_mode": cfg.coupling_mode,
                "criterion": cfg.criterion_or_rule().value,
                "window": cfg.window,
                "grid_step": cfg.registration_grid_step(),
                "objective": dict(cfg.resolved["objective"]),
                "seed": seed,
            }
            if er is not None:
                payload["n_er"] = er
                payload["n_ancilla"] = er - cfg.n_sender
                de = cfg.de_config(seed)
                payload["de_config"] = {
                    "population_size": de.population_size,
                    "max_generations": de.max_generations,
                    "crossover_probability": de.crossover_probability,
                    "mutation_range": de.mutation_range,
                    "spread_tol": de.spread_tol,
                    "seed": de.seed,
                }
            payloads.append(payload)
            index += 1
    return _run_points(_deviation_point, payloads, threads)


def _lambda_point(payload: Dict[str, Any]) -> Dict[str, Any]:
    from .dynamics import SpectralCache
    from .optimize import DEConfig
    from .solvers import InfeasibleConfigurationError, solve_arbitrary_parameter

    t0 = time.perf_counter()
    n, ns = payload["n"], payload["n_sender"]
    cache = SpectralCache(ChainSpec(n, payload["coupling_mode"]), 1)
    out: Dict[str, Any] = {"scan": [], "summary": None}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            result = solve_arbitrary_parameter(
                cache,
                ns,
                payload["n_er"],
                window=payload["window"],
                grid_step=payload["grid_step"],
                de_config=DEConfig(**payload["de_config"]),
                seed=payload["seed"],
            )
        scan = result.scan
        summary = {
            "n": n,
            "t_opt": result.t_opt,
            "lambda_opt_max": result.lam_opt,
            "status": "ok",
        }
    except InfeasibleConfigurationError as exc:
        scan = exc.scan if exc.scan is not None else np.zeros((0, 4))
        summary = {
            "n": n,
            "t_opt": float("nan"),
            "lambda_opt_max": float("nan"),
            "status": f"infeasible: floor={exc.floor:.6e}",
        }
    except Exception as exc:  # record-and-continue
        scan = np.zeros((0, 4))
        summary = {
            "n": n,
            "t_opt": float("nan"),
            "lambda_opt_max": float("nan"),
            "status": f"failed:{type(exc).__name__}: {exc}",
        }
    out["scan"] = [
        {
            "n": n,
            "t": float(t),
            "lambda_opt": float(lam),
            "offdiag_residual": float(off),
        }
        for t, lam, off, _ in scan
    ]
    summary["wall_time"] = time.perf_counter() - t0
    out["summary"] = summary
    return out


def run_curve_lambda(cfg: ExperimentConfig, threads: int = 1) -> Dict[str, Any]:
    if cfg.protocol != "arbitrary-parameter":
        raise ConfigError(
            f"lambda curves need the arbitrary-parameter protocol, got {cfg.protocol}",
            "$.protocol",
        )
    er = cfg.er_list()[0]
    payloads = []
    for index, n in enumerate(cfg.n_values):
        seed = cfg.point_seed(index)
        de = cfg.de_config(seed, max_generations=min(cfg.optimizer["max_generations"], 150))
        payloads.append(
            {
                "n": n,
                "n_sender": cfg.n_sender,
                "n_er": er,
                "coupling_mode": cfg.coupling_mode,
                "window": cfg.window,
                "grid_step": cfg.scan_grid_step(),
                "seed": seed,
                "de_config": {
                    "population_size": de.population_size,
                    "max_generations": de.max_generations,
                    "crossover_probability": de.crossover_probability,
                    "mutation_range": de.mutation_range,
                    "spread_tol": de.spread_tol,
                    "seed": de.seed,
                },
            }
        )
    results = _run_points(_lambda_point, payloads, threads)
    return {
        "scan": [row for res in results for row in res["scan"]],
        "summary": [res["summary"] for res in results],
    }


def run_oracle_suite(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Randomized block-pipeline vs full-space agreement battery."""
    from .dynamics import SpectralCache
    from . import oracle
    from .solvers import transfer_receiver_state
    from .states import random_state
    from .unitary import ReceiverUnitaryParams, angle_count

    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox([cfg.seed, 0xACE]))
    worst = 0.0
    failures: List[Dict[str, Any]] = []
    trials: List[Dict[str, Any]] = []
    for trial in range(cfg.n_trials):
        n = int(rng.choice(cfg.n_values))
        ns = int(rng.integers(1, min(4, n)))
        k = int(rng.integers(1, ns + 1))
        ner = int(rng.integers(2, n + 1))
        t = float(rng.uniform(0.0, 2.0 * n))
        spec = ChainSpec(n, cfg.coupling_mode)
        sender = random_state(ns, k, rng)
        params = None
        if rng.uniform() < 0.75:
            params = ReceiverUnitaryParams(
                ner,
                {
                    s: rng.uniform(-np.pi, np.pi, angle_count(ner, s))
                    for s in range(1, min(k, ner) + 1)
                },
            )
        cache = SpectralCache(spec, k)
        got = transfer_receiver_state(cache, sender, t, params)
        u = oracle.full_propagator(oracle.full_hamiltonian(spec), t)
        if params is not None:
            u = np.kron(
                np.eye(2 ** (n - ner)), oracle.full_er_unitary(params)
            ) @ u
        rho = oracle.embed_full_sender(sender, n)
        reduced = oracle.partial_trace_keep_last(u @ rho @ u.conj().T, n, ns)
        want = oracle.dense_to_blocks(reduced, ns, min(k, ns))
        dev = max(
            float(np.max(np.abs(a - b)))
            for a, b in zip(got.blocks, want.blocks)
        )
        worst = max(worst, dev)
        record = {"trial": trial, "n": n, "n_sender": ns, "k": k,
                  "n_er": ner, "t": t, "deviation": dev}
        trials.append(record)
        if dev >= ORACLE_TOLERANCE:
            failures.append(record)
    return {
        "schema": REPORT_VERSION,
        "config": dict(cfg.resolved),
        "seed": cfg.seed,
        "n_trials": cfg.n_trials,
        "tolerance": ORACLE_TOLERANCE,
        "max_abs_deviation": worst,
        "pass": not failures,
        "failures": failures,
        "wall_time": time.perf_counter() - t0,
    }


def _assemble_raw(args: argparse.Namespace, protocol: str) -> Dict[str, Any]:
    raw: Dict[str, Any] = {}
    if args.preset:
        try:
            raw.update(preset_config(args.preset))
        except KeyError as exc:
            raise ConfigError(str(exc.args[0]), "$.preset")
    if args.config:
        raw.update(load_config_file(args.config))
    if not raw:
        if protocol == "oracle-check":
            raw = {"n": [4, 5, 6, 7, 8], "n_sender": 2}
        else:
            raise ConfigError("provide --config PATH or --preset NAME")
    if raw.get("protocol", protocol) != protocol:
        raise ConfigError(
            f"config is for protocol {raw['protocol']!r}, "
            f"but the subcommand runs {protocol!r}",
            "$.protocol",
        )
    raw["protocol"] = protocol
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output_dir"] = args.out
    return raw


def _file_stem(args: argparse.Namespace, default: str) -> str:
    if args.preset:
        return args.preset
    if args.config:
        return Path(args.config).stem
    return default


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="zcoh",
        description=(
            "Spin-chain zero-order coherence transfer: registration-time "
            "tables, perfectly transferable states, and scale-factor curves."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "reg-time": "registration-time table (CSV)",
        "ptz-complete": "complete-space transferable states, deviation curve (CSV)",
        "ptz-restricted": "restricted-space protocol with angle search (CSV)",
        "arb-transfer": "arbitrary-parameter protocol, scale-factor scan (CSV)",
        "oracle-check": "randomized block-vs-full-space agreement battery (JSON)",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON config path (overrides preset fields)")
        p.add_argument("--preset", help="named built-in configuration")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for sweep points (default 1)")
    args = parser.parse_args(argv)
    protocol = _COMMANDS[args.command]

    try:
        cfg = resolve_config(_assemble_raw(args, protocol))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(cfg.output_dir)
    stem = _file_stem(args, args.command)
    try:
        if protocol == "registration-time":
            rows = run_table_registration_times(cfg, args.threads)
            path = write_csv(
                out_dir / f"{stem}_registration_times.csv",
                ("n", "criterion", "t_star", "criterion_value", "wall_time", "status"),
                rows,
                cfg,
            )
            print(f"wrote {path}")
            ok = [r for r in rows if r["status"] == "ok"]
            return EXIT_OK if ok else EXIT_COMPUTE
        if protocol in ("ptz-complete", "ptz-restricted"):
            rows = run_curve_deviation(cfg, args.threads)
            path = write_csv(
                out_dir / f"{stem}_deviation.csv",
                ("n", "n_sender", "n_ancilla", "delta", "residual",
                 "seed", "wall_time", "status"),
                rows,
                cfg,
            )
            print(f"wrote {path}")
            ok = [r for r in rows if r["status"].startswith("ok")]
            return EXIT_OK if ok else EXIT_COMPUTE
        if protocol == "arbitrary-parameter":
            result = run_curve_lambda(cfg, args.threads)
            scan_path = write_csv(
                out_dir / f"{stem}_lambda_scan.csv",
                ("n", "t", "lambda_opt", "offdiag_residual"),
                result["scan"],
                cfg,
            )
            summary_path = write_csv(
                out_dir / f"{stem}_lambda_summary.csv",
                ("n", "t_opt", "lambda_opt_max", "wall_time", "status"),
                result["summary"],
                cfg,
            )
            print(f"wrote {scan_path}")
            print(f"wrote {summary_path}")
            ok = [r for r in result["summary"] if r["status"] == "ok"]
            return EXIT_OK if ok else EXIT_COMPUTE
        report = run_oracle_suite(cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / f"{stem}_oracle_report.json"
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        print(f"wrote {report_path}")
        print(
            f"oracle battery: {report['n_trials']} trials, "
            f"max |deviation| = {report['max_abs_deviation']:.3e}, "
            f"{'PASS' if report['pass'] else 'FAIL'}"
        )
        return EXIT_OK if report["pass"] else EXIT_ORACLE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - defensive
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
