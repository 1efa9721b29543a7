"""qmix command line: seeded, file-driven experiment runner.

Every subcommand is a pure function of (config JSON, input files, seed):
reruns with the same inputs produce byte-identical outputs. Exit codes:
0 success, 2 usage/input error, 3 non-convergence, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classical import (
    ConvergenceConfig,
    classical_fit,
    mixture_to_dict as classical_mixture_to_dict,
    random_init,
)
from .colorseg import (
    binarize,
    colorize,
    read_rgb_png,
    segment,
    write_mask_png,
)
from .core import Dataset, GaussianClass, read_dataset_csv, write_dataset_csv
from .errors import QmixError
from .experiments import (
    ClassSpec,
    ScenarioSpec,
    deformation_sweep,
    generate,
    landscape_scan,
    overlap_sweep,
    run_trials,
)
from .quantum import (
    mixture_to_dict as quantum_mixture_to_dict,
    quantum_fit,
    random_init2,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_NUMERICAL = 4


class ConfigError(Exception):
    """Invalid configuration; the message carries the field path."""


def round9(value):
    """Round floats (recursively) to 9 significant digits for stable files."""
    if isinstance(value, float):
        return float(format(value, ".9g"))
    if isinstance(value, (list, tuple)):
        return [round9(v) for v in value]
    if isinstance(value, dict):
        return {k: round9(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return round9(value.tolist())
    if isinstance(value, (np.floating,)):
        return round9(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def fmt9(value: float) -> str:
    return format(float(value), ".9g")


def _get(cfg, path, expect=None, default=None, required=True):
    node = cfg
    walked = []
    for key in path.split("."):
        walked.append(key)
        if not isinstance(node, dict) or key not in node:
            if required and default is None:
                raise ConfigError(f"{'.'.join(walked)}: missing required field")
            return default
        node = node[key]
    if expect is not None and not isinstance(node, expect):
        names = expect if isinstance(expect, tuple) else (expect,)
        raise ConfigError(
            f"{path}: expected {'/'.join(t.__name__ for t in names)}, "
            f"got {type(node).__name__}"
        )
    return node


def _class_spec(cfg, path) -> ClassSpec:
    node = _get(cfg, path, dict)
    center = _get(cfg, f"{path}.center", list)
    sigma = _get(cfg, f"{path}.sigma", list)
    n = _get(cfg, f"{path}.n", int)
    theta = float(_get(cfg, f"{path}.theta", (int, float), default=0.0, required=False))
    try:
        return ClassSpec(center=tuple(center), sigma=tuple(sigma), n=n, theta=theta)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _scenario(cfg, path, seed) -> ScenarioSpec:
    _get(cfg, path, dict)
    eps = float(_get(cfg, f"{path}.eps", (int, float), default=0.0, required=False))
    try:
        return ScenarioSpec(
            class1=_class_spec(cfg, f"{path}.class1"),
            class2=_class_spec(cfg, f"{path}.class2"),
            eps=eps,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _engine(cfg, allow_both=False):
    engine = _get(cfg, "engine", str, default="classical", required=False)
    allowed = ("classical", "quantum") + (("both",) if allow_both else ())
    if engine not in allowed:
        raise ConfigError(f"engine: must be one of {allowed}, got {engine!r}")
    return engine


def _conv_cfg(cfg) -> ConvergenceConfig:
    tol = float(_get(cfg, "tol", (int, float), default=1e-8, required=False))
    max_iter = _get(cfg, "max_iter", int, default=500, required=False)
    if tol <= 0 or max_iter < 1:
        raise ConfigError("tol/max_iter: must be positive")
    return ConvergenceConfig(tol=tol, max_iter=max_iter)


def _seed(cfg, override):
    if override is not None:
        return int(override)
    seed = _get(cfg, "seed", int, required=True)
    return int(seed)


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(round9(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _write_manifest(out_dir: Path, command: str, engine: str, seed: int, cfg) -> None:
    manifest = {
        "command": command,
        "engine": engine,
        "seed": seed,
        "config": cfg,
        "version": __version__,
    }
    _write_json(out_dir / f"{command}_{engine}_{seed}_manifest.json", manifest)


def _stats_row(eps, stats):
    row = {"eps": eps, "trials": stats.trials, "failed": stats.failed}
    for name in stats.names:
        row[f"err_{name}"] = stats.errors[name]
        row[f"fluct_{name}"] = stats.fluctuations[name]
    return row


def _write_rows_csv(path: Path, rows, columns) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            out = []
            for c in columns:
                v = row[c]
                out.append(fmt9(v) if isinstance(v, float) else str(v))
            writer.writerow(out)


def cmd_generate(cfg, seed, out_dir, jobs) -> int:
    spec = _scenario(cfg, "scenario", seed)
    data, labels = generate(spec)
    name = _get(cfg, "output", str, default=f"generate_dataset_{seed}.csv", required=False)
    write_dataset_csv(out_dir / name, data, labels=labels)
    _write_manifest(out_dir, "generate", "none", seed, cfg)
    return EXIT_OK


def cmd_fit(cfg, seed, out_dir, jobs) -> int:
    engine = _engine(cfg)
    dataset_path = Path(_get(cfg, "dataset", str))
    if not dataset_path.exists():
        raise ConfigError(f"dataset: file not found: {dataset_path}")
    data, _ = read_dataset_csv(dataset_path)
    conv = _conv_cfg(cfg)
    rng = np.random.default_rng(seed)
    if engine == "classical":
        rep = classical_fit(data, random_init(data, 2, rng), conv)
        params = classical_mixture_to_dict(rep.params_final)
    else:
        rep = quantum_fit(data, random_init2(data, rng), conv)
        params = quantum_mixture_to_dict(rep.params_final)
    report = {
        "engine": engine,
        "seed": seed,
        "parameters": params,
        "objective_trace": rep.objective_trace.tolist(),
        "n_per_class": rep.n_per_class.tolist(),
        "iterations": rep.iterations,
        "converged": rep.converged,
    }
    name = _get(cfg, "output", str, default=f"fit_{engine}_{seed}.json", required=False)
    _write_json(out_dir / name, report)
    _write_manifest(out_dir, "fit", engine, seed, cfg)
    return EXIT_OK if rep.converged else EXIT_NO_CONVERGENCE


def cmd_trials(cfg, seed, out_dir, jobs) -> int:
    engine = _engine(cfg)
    spec = _scenario(cfg, "scenario", seed)
    trials = _get(cfg, "trials", int, default=20, required=False)
    restarts = _get(cfg, "restarts", int, default=1, required=False)
    stats = run_trials(
        spec, trials, engine, base_seed=seed, cfg=_conv_cfg(cfg),
        restarts=restarts, jobs=jobs,
    )
    row = _stats_row(0.0, stats)
    del row["eps"]
    columns = list(row.keys())
    _write_rows_csv(out_dir / f"trials_{engine}_{seed}.csv", [row], columns)
    summary = {
        "engine": engine,
        "seed": seed,
        "trials": stats.trials,
        "failed": stats.failed,
        "truth": stats.truth,
        "errors": stats.errors,
        "fluctuations": stats.fluctuations,
    }
    _write_json(out_dir / f"trials_{engine}_{seed}.json", summary)
    _write_manifest(out_dir, "trials", engine, seed, cfg)
    return EXIT_OK


def cmd_overlap(cfg, seed, out_dir, jobs) -> int:
    spec = _scenario(cfg, "scenario", seed)
    separations = _get(cfg, "separations", list)
    if len(separations) < 2:
        raise ConfigError("separations: need at least 2 values")
    rows = overlap_sweep(spec, [float(s) for s in separations], seed, _conv_cfg(cfg))
    table = [
        {"separation": s, "overlap": t, "cos_phi": c} for s, t, c in rows
    ]
    _write_rows_csv(
        out_dir / f"overlap_quantum_{seed}.csv", table, ["separation", "overlap", "cos_phi"]
    )
    _write_json(out_dir / f"overlap_quantum_{seed}.json", {"rows": table, "seed": seed})
    _write_manifest(out_dir, "overlap", "quantum", seed, cfg)
    return EXIT_OK


def cmd_landscape(cfg, seed, out_dir, jobs) -> int:
    engine = _engine(cfg)
    spec = _scenario(cfg, "scenario", seed)
    data, _ = generate(spec)
    mu_step = float(_get(cfg, "mu_step", (int, float), default=0.01, required=False))
    alpha_step = float(_get(cfg, "alpha_step", (int, float), default=0.01, required=False))
    grid = landscape_scan(
        data, spec, engine, init_seed=seed, cfg=_conv_cfg(cfg),
        mu_step=mu_step, alpha_step=alpha_step,
    )
    with open(out_dir / f"landscape_{engine}_{seed}.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu1_x"] + [fmt9(a) for a in grid.alpha_axis])
        for i, mu in enumerate(grid.mu_axis):
            writer.writerow([fmt9(mu)] + [fmt9(v) for v in grid.cost[i]])
    summary = {
        "engine": engine,
        "seed": seed,
        "initial_cost": grid.initial_cost,
        "final_cost": grid.final_cost,
        "true_cost": grid.true_cost,
        "mu_cells": int(grid.mu_axis.size),
        "alpha_cells": int(grid.alpha_axis.size),
    }
    _write_json(out_dir / f"landscape_{engine}_{seed}.json", summary)
    _write_manifest(out_dir, "landscape", engine, seed, cfg)
    return EXIT_OK


def cmd_deform(cfg, seed, out_dir, jobs) -> int:
    engine = _engine(cfg)
    spec = _scenario(cfg, "scenario", seed)
    eps_values = _get(cfg, "eps_values", list)
    if not eps_values:
        raise ConfigError("eps_values: need at least 1 value")
    trials = _get(cfg, "trials", int, default=20, required=False)
    rows = deformation_sweep(
        spec, [float(e) for e in eps_values], trials, engine,
        base_seed=seed, cfg=_conv_cfg(cfg), jobs=jobs,
    )
    table = [_stats_row(eps, stats) for eps, stats in rows]
    _write_rows_csv(out_dir / f"deform_{engine}_{seed}.csv", table, list(table[0].keys()))
    _write_json(
        out_dir / f"deform_{engine}_{seed}.json",
        {"engine": engine, "seed": seed,
         "rows": [{"eps": e, "errors": s.errors, "fluctuations": s.fluctuations,
                   "failed": s.failed} for e, s in rows]},
    )
    _write_manifest(out_dir, "deform", engine, seed, cfg)
    return EXIT_OK


def _lab_class(cfg, path) -> GaussianClass:
    mu = _get(cfg, f"{path}.mu", list)
    sigma = _get(cfg, f"{path}.sigma", list)
    if len(mu) != 3 or len(sigma) != 3:
        raise ConfigError(f"{path}: mu and sigma must have 3 components")
    try:
        return GaussianClass(mu=np.array(mu, dtype=float),
                             cov=np.diag(np.array(sigma, dtype=float) ** 2))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_segment(cfg, seed, out_dir, jobs) -> int:
    engine = _engine(cfg, allow_both=True)
    image_path = Path(_get(cfg, "image", str))
    if not image_path.exists():
        raise ConfigError(f"image: file not found: {image_path}")
    try:
        rgb = read_rgb_png(image_path)
    except Exception as exc:
        raise ConfigError(f"image: cannot decode {image_path}: {exc}") from None
    threshold = _get(cfg, "threshold", int, default=100, required=False)
    cls_black = _lab_class(cfg, "class_black")
    cls_white = _lab_class(cfg, "class_white")
    trials = _get(cfg, "trials", int, default=10, required=False)
    conv = _conv_cfg(cfg)

    mask = binarize(rgb, threshold=threshold)
    image, truth = colorize(mask, cls_black, cls_white, seed)
    engines = ("classical", "quantum") if engine == "both" else (engine,)
    results = {}
    for eng in engines:
        res = segment(image, eng, seed, truth=truth, trials=trials, cfg=conv)
        write_mask_png(out_dir / f"segment_{eng}_{seed}_mask.png", res.mask)
        results[eng] = res

    table = {}
    keys = ["mu_white", "mu_black", "n_white", "n_black", "var_white", "var_black"]
    for key in keys:
        entry = {}
        for eng in engines:
            entry[f"{eng}_error"] = results[eng].errors[key]
        if len(engines) == 2:
            c = results["classical"].errors[key]
            q = results["quantum"].errors[key]
            entry["relative_error"] = q / c if c > 0 else float("inf")
        table[key] = entry
    payload = {
        "seed": seed,
        "threshold": threshold,
        "ground_truth": {
            "class_black": {"mu": truth.class_black.mu.tolist(),
                            "sigma": np.sqrt(np.diag(truth.class_black.cov)).tolist(),
                            "n": truth.n_black},
            "class_white": {"mu": truth.class_white.mu.tolist(),
                            "sigma": np.sqrt(np.diag(truth.class_white.cov)).tolist(),
                            "n": truth.n_white},
        },
        "error_table": table,
        "misassigned": {eng: results[eng].misassigned for eng in engines},
        "estimated_counts": {eng: results[eng].counts for eng in engines},
    }
    _write_json(out_dir / f"segment_{engine}_{seed}.json", payload)
    _write_manifest(out_dir, "segment", engine, seed, cfg)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "trials": cmd_trials,
    "overlap": cmd_overlap,
    "landscape": cmd_landscape,
    "deform": cmd_deform,
    "segment": cmd_segment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmix",
        description="Two-class interference mixture vs classical GMM: "
                    "experiment runner with seeded, reproducible outputs.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for trial panels")
    parser.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config_path = Path(args.config)
    if not config_path.exists():
        print(f"config: file not found: {config_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        print(f"config: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not isinstance(cfg, dict):
        print("config: top level must be a JSON object", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"out: cannot create {out_dir}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("jobs: must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        seed = _seed(cfg, args.seed)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, seed, out_dir, args.jobs)
    except ConfigError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QmixError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
