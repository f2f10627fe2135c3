"""Command-line entry point: run, verify, report, gen-data.

Exit codes: 0 ok, 1 runtime failure, 2 usage or config error, 3 data error,
4 output directory exists (use --force), 5 verification violation.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import logging
import math
import platform
import shutil
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .controller import ControllerConfig
from .dataset import DataError, load_binary, load_csv, save_binary, save_csv, split_pool_val
from .scoring import SHORT_NAMES
from .selection import METHODS, RunConfig, SelectionRun, run_method
from .synthetic import gaussian_mixture
from .verify import (SetFunction, approximation_curve, check_diminishing_returns, check_weighted_combination,
                     random_facility_location, squared_cardinality)

log = logging.getLogger("modesel")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_DATA, EXIT_EXISTS, EXIT_VIOLATION = 0, 1, 2, 3, 4, 5
BOUND = 1 - 1 / math.e


class ConfigError(ValueError):
    pass


# CSV helpers


def write_csv(path, header, rows) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _parse(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path):
    """Rows as dicts with ints and floats parsed back; the inverse of write_csv."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# config


def _coerce(value: str, default):
    v = value.strip()
    if isinstance(default, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(v)
    if isinstance(default, float):
        return float(v)
    return v


def _dataclass_from(section, cls, **extra):
    defaults = {f.name: f.default for f in dataclasses.fields(cls)
                if f.default is not dataclasses.MISSING}
    kwargs = dict(extra)
    for key, raw in section.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {key!r} in [{section.name}]")
        if key == "budget":
            kwargs[key] = float(raw) if any(c in raw for c in ".eE") else int(raw)
        else:
            kwargs[key] = _coerce(raw, defaults[key])
    return cls(**kwargs)


@dataclasses.dataclass
class Config:
    data_path: str
    data_format: str
    label_column: str
    standardize: bool
    val_fraction: float
    split_seed: int
    method: str
    run: RunConfig
    stream_weights: tuple
    output_dir: Path
    source: dict


# [run] and [controller] keys are checked against their dataclasses
SECTION_KEYS = {
    "data": {"path", "format", "label_column", "standardize"},
    "split": {"val_fraction", "seed"},
    "run": None,
    "controller": None,
    "output": {"dir"},
}


def load_config(path) -> Config:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config {path}")
    for name in parser.sections():
        if name not in SECTION_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        allowed = SECTION_KEYS[name]
        unknown = [k for k in parser[name] if allowed is not None and k not in allowed]
        if unknown:
            raise ConfigError(f"unknown key {unknown[0]!r} in [{name}]")
    try:
        data = parser["data"] if parser.has_section("data") else {}
        split = parser["split"] if parser.has_section("split") else {}
        run_sec = parser["run"] if parser.has_section("run") else parser["DEFAULT"]
        method = run_sec.get("method", "mode").strip()
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
        run_items = {k: v for k, v in run_sec.items() if k not in ("method", "stream_weights")}
        controller = (_dataclass_from(parser["controller"], ControllerConfig)
                      if parser.has_section("controller") else ControllerConfig())
        run = _dataclass_from(_Items("run", run_items), RunConfig, controller=controller)
        weights = tuple(float(x) for x in run_sec.get("stream_weights", "0.25,0.25,0.25,0.25").split(","))
        if len(weights) != 4:
            raise ConfigError("stream_weights needs four comma-separated values")
        data_path = data.get("path", "toy").strip()
        if data_path != "toy" and not Path(data_path).is_absolute():
            data_path = str((path.parent / data_path).resolve())
        out = Path(parser.get("output", "dir", fallback="runs/out"))
        if not out.is_absolute():
            out = (path.parent / out).resolve()
        fmt = data.get("format", "").strip() or ("binary" if data_path.endswith(".bin") else "csv")
        if fmt not in ("csv", "binary"):
            raise ConfigError(f"unknown data format {fmt!r}")
        return Config(
            data_path=data_path,
            data_format=fmt,
            label_column=data.get("label_column", "label").strip(),
            standardize=_coerce(data.get("standardize", "false"), False),
            val_fraction=float(split.get("val_fraction", "0.1")),
            split_seed=int(split.get("seed", str(run.seed))),
            method=method,
            run=run,
            stream_weights=weights,
            output_dir=out,
            source={s: dict(parser[s]) for s in parser.sections()},
        )
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


class _Items(dict):
    def __init__(self, name, items):
        super().__init__(items)
        self.name = name


def toy_path() -> Path:
    return Path(str(resources.files("modesel") / "data" / "toy.csv"))


def load_dataset(cfg: Config):
    if cfg.data_path == "toy":
        return load_csv(toy_path(), "label", cfg.standardize)
    if cfg.data_format == "binary":
        return load_binary(cfg.data_path, cfg.standardize)
    return load_csv(cfg.data_path, cfg.label_column, cfg.standardize)


# outputs


def write_run(out: Path, run: SelectionRun, cfg: Config, data, elapsed: float) -> None:
    round_of = {}
    for rnd, batch in enumerate(run.batches):
        for i in batch:
            round_of[i] = rnd
    write_csv(out / "selected.csv", ["round", "sample_id"], [(round_of[i], i) for i in run.selected])

    names = list(SHORT_NAMES)
    header = (["round", "coreset_size", "n_selected", "val_accuracy", "train_loss", "grad_norm", "temperature"]
              + [f"gain_{s}" for s in names] + [f"flagged_{s}" for s in names]
              + ["cache_hits", "cache_misses", "distance_evals", "wall_time"])
    write_csv(out / "rounds.csv", header, [
        [r.round, r.coreset_size, r.n_selected, r.val_accuracy, r.train_loss, r.grad_norm, r.temperature,
         *r.gains, *r.flagged, r.cache_hits, r.cache_misses, r.distance_evals, r.wall_time]
        for r in run.rounds])

    write_csv(out / "weights.csv",
              ["round", "temp"] + [f"w_{s}" for s in names] + [f"r_{s}" for s in names] + ["val_acc"],
              [[r.round, r.temperature, *r.weights, *r.rewards, r.val_accuracy] for r in run.rounds])

    if run.scores:
        rows = []
        for rnd, ids, raw, norm, combined in run.scores:
            for i, sid in enumerate(ids):
                rows.append([rnd, sid, *raw[i], *norm[i], combined[i]])
        write_csv(out / "scores.csv", ["round", "sample_id"] + [f"raw_{s}" for s in names]
                  + [f"norm_{s}" for s in names] + ["combined"], rows)

    manifest = {
        "method": run.method,
        "seed": cfg.run.seed,
        "split_seed": cfg.split_seed,
        "config": cfg.source,
        "run_config": _jsonable(cfg.run.to_dict()),
        "dataset": {"path": cfg.data_path, "n": data.n, "d": data.d, "classes": data.class_count,
                    "sha256": data.digest()},
        "versions": {"modesel": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "results": {
            "final_val_accuracy": run.final_val_accuracy,
            "final_test_accuracy": run.final_test_accuracy,
            "val_recall": [None if np.isnan(v) else float(v) for v in run.val_recall],
            "selected": len(run.selected),
            "rounds": len(run.rounds),
        },
        "metadata": _jsonable(run.metadata),
        "elapsed_seconds": elapsed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# subcommands


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    out = Path(args.out).resolve() if args.out else cfg.output_dir
    if out.exists() and any(out.iterdir()):
        if not args.force:
            log.error("output directory %s exists; pass --force to overwrite", out)
            return EXIT_EXISTS
        shutil.rmtree(out)
    try:
        data = load_dataset(cfg)
        split = split_pool_val(data, cfg.val_fraction, cfg.split_seed)
        cfg.run.budget_size(len(split.pool_indices))
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except ValueError as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        run = run_method(cfg.method, cfg.run, data, split, fixed_weights=cfg.stream_weights)
    except Exception as exc:  # surfaced as a runtime failure with the message intact
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME
    out.mkdir(parents=True, exist_ok=True)
    write_run(out, run, cfg, data, time.perf_counter() - t0)
    print(f"{cfg.method}: selected {len(run.selected)} samples in {len(run.rounds)} rounds, "
          f"val accuracy {run.final_val_accuracy:.4f} -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    checks = []
    if args.trials == 0:
        print("warning: no trials requested; diminishing-returns checks skipped", file=sys.stderr)
    else:
        fl = random_facility_location(args.size, rng).as_set_function("facility_location")
        checks.append(check_diminishing_returns(fl, args.trials, args.seed))
        fl2 = random_facility_location(args.size, rng).as_set_function("facility_location_2")
        w = rng.random(2)
        rep = check_weighted_combination([fl, fl2], w, args.trials, args.seed + 1)
        rep.name = "weighted_sum"
        checks.append(rep)
        if args.inject_supermodular:
            checks.append(check_diminishing_returns(SetFunction(args.size, squared_cardinality(), "injected_|S|^2"),
                                                    args.trials, args.seed))
    budgets = [int(b) for b in args.budgets.split(",")]
    curve = approximation_curve(budgets, range(args.seed, args.seed + args.instances), n=args.brute_size)
    ok = True
    for rep in checks:
        status = "ok" if rep.ok else "VIOLATION"
        print(f"{rep.name:24s} trials={rep.trials:6d} violations={rep.violations:6d} "
              f"max_gap={rep.max_gap:.3e} {status}")
        ok &= rep.ok
    for row in curve:
        passed = row["min_ratio"] >= BOUND - 1e-12
        print(f"greedy/opt B={row['budget']:<3d} mean={row['mean_ratio']:.4f} min={row['min_ratio']:.4f} "
              f"{'ok' if passed else 'VIOLATION'}")
        ok &= passed
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "approximation_curve.csv", ["budget", "mean_ratio", "min_ratio", "instances", "bound"],
                  [[r["budget"], r["mean_ratio"], r["min_ratio"], r["instances"], BOUND] for r in curve])
    return EXIT_OK if ok else EXIT_VIOLATION


def summarize(run_dirs):
    """Group manifests by method: {method: [final accuracies]}."""
    groups: dict[str, list] = {}
    for d in run_dirs:
        path = Path(d) / "manifest.json"
        try:
            doc = json.loads(path.read_text())
            groups.setdefault(doc["method"], []).append(float(doc["results"]["final_val_accuracy"]))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: unreadable run ({exc})") from exc
    rows = []
    ref = np.mean(groups["random"]) if "random" in groups else None
    for method in sorted(groups, key=lambda m: (METHODS.index(m) if m in METHODS else len(METHODS), m)):
        acc = np.asarray(groups[method]) * 100
        std = float(np.std(acc, ddof=1)) if acc.size > 1 else 0.0
        delta = float(acc.mean() - ref * 100) if ref is not None else float("nan")
        rows.append({"method": method, "runs": acc.size, "mean": float(acc.mean()), "std": std, "delta": delta})
    return rows


def cmd_report(args) -> int:
    if not args.runs:
        print("usage: modesel report RUN_DIR [RUN_DIR ...]", file=sys.stderr)
        return EXIT_USAGE
    try:
        rows = summarize(args.runs)
    except DataError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    lines = ["| method | runs | val acc (%) | delta vs random |", "|---|---|---|---|"]
    for r in rows:
        delta = "n/a" if math.isnan(r["delta"]) else f"{r['delta']:+.2f}"
        lines.append(f"| {r['method']} | {r['runs']} | {r['mean']:.2f} ± {r['std']:.2f} | {delta} |")
    md = "\n".join(lines)
    print(md)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(md + "\n")
        write_csv(out / "report.csv", ["method", "runs", "mean", "std", "delta"],
                  [[r["method"], r["runs"], r["mean"], r["std"], r["delta"]] for r in rows])
    return EXIT_OK


def cmd_gen_data(args) -> int:
    try:
        data = gaussian_mixture(args.n, args.classes, args.dim, args.separation, args.imbalance, args.seed,
                                args.spread)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    out = Path(args.out)
    if out.exists() and not args.force:
        log.error("%s exists; pass --force to overwrite", out)
        return EXIT_EXISTS
    out.parent.mkdir(parents=True, exist_ok=True)
    (save_binary if out.suffix == ".bin" else save_csv)(data, out)
    counts = np.bincount(data.labels, minlength=data.class_count)
    print(f"wrote {data.n} x {data.d} ({data.class_count} classes, sizes {counts.tolist()}) -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modesel", description="Adaptive multi-strategy coreset selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one selection method from an INI config")
    r.add_argument("config")
    r.add_argument("--out", help="override [output] dir")
    r.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check submodularity and greedy bounds on random instances")
    v.add_argument("--trials", type=int, default=10000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--size", type=int, default=14, help="ground-set size for chain checks (<= 16)")
    v.add_argument("--brute-size", type=int, default=12, help="ground-set size for brute-force optima")
    v.add_argument("--budgets", default="1,2,3,4,5")
    v.add_argument("--instances", type=int, default=20, help="instances per budget")
    v.add_argument("--inject-supermodular", action="store_true", help="add |S|^2 as a control that must fail")
    v.add_argument("--out", help="directory for approximation_curve.csv")
    v.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="aggregate run directories into a comparison table")
    rep.add_argument("runs", nargs="*")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)

    g = sub.add_parser("gen-data", help="write a synthetic Gaussian-mixture dataset (.csv or .bin)")
    g.add_argument("out")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--separation", type=float, default=5.0)
    g.add_argument("--imbalance", type=float, default=1.0)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
