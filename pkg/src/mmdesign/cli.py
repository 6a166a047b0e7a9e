"""Command-line front end.

Subcommands: evaluate, search-maximin, search-mme, build-table, generate,
example-miezin, compare.  Every run is driven by an ExperimentConfig (JSON
file plus flag overrides) and a seed list, and writes its primary outputs
(CSV/JSON/design files) deterministically: rerunning with the same config and
seeds reproduces them byte for byte.  Timing and version info go to a separate
run_meta.json so the primary artifacts stay stable.

Exit codes: 0 success, 2 configuration error, 3 input parse error, 4 runtime
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .criteria import (COMPARISON_P_STEP, LocalOptTable, MinResult, ParamGrid,
                       make_grid, min_phi_a, min_re, min_rg, p_grid,
                       theta_to_angles)
from .designs import (DEFAULT_PRIMITIVE_POLYS, Design, block_design,
                      constrained_random, cyclic_design, extend_m_sequence,
                      find_primitive_poly, load_design, m_sequence,
                      m_sequence_design, random_design, save_design)
from .errors import (ConfigurationError, InputParseError, MmdesignError,
                     TableLookupError)
from .glsmodel import DriftSpec, NoiseSpec, get_evaluator
from .search import (GaConfig, SearchResult, ga_search, maximin_objective,
                     mme_objective, build_local_opt_table)
from .util import fmt_float, mean_and_stderr, parallel_map, resolve_threads

_GA_FIELDS = {"population_size", "max_evaluations", "max_generations",
              "crossover_pairs", "mutation_rate", "immigrant_count", "elite_count"}


@dataclass
class ExperimentConfig:
    """One experiment: model settings, grids, search space, GA knobs, seeds."""

    q_types: int = 1
    length: int = 255
    isi: float = 4.0
    tr: float = 2.0
    rho: float = 0.3
    drift_order: int = 2
    runs: int = 1
    run_shift: float = 1.25
    grid: str | None = None          # objective/evaluation preset; per-command default
    region: str = "theta0"
    p_step: float | None = None
    phi_step: float | None = None
    report_grid: str = "comparison"  # final-evaluation preset for searches
    space: str = "xi"
    seeds: tuple[int, ...] = (0,)
    threads: int | None = None
    table: str | None = None
    out: str = "mmdesign-out"
    ga: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        ga = data.get("ga", {})
        if not isinstance(ga, dict):
            raise ConfigurationError("config key 'ga' must be an object")
        bad = sorted(set(ga) - _GA_FIELDS)
        if bad:
            raise ConfigurationError(f"unknown ga config keys: {', '.join(bad)}")
        kwargs = dict(data)
        if "seeds" in kwargs:
            seeds = kwargs["seeds"]
            if not isinstance(seeds, list) or not seeds:
                raise ConfigurationError("config key 'seeds' must be a nonempty list")
            kwargs["seeds"] = tuple(int(s) for s in seeds)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"config {path} must hold a JSON object")
        return cls.from_dict(data)

    def noise(self) -> NoiseSpec:
        return NoiseSpec(rho=self.rho, runs=self.runs)

    def drift(self) -> DriftSpec:
        return DriftSpec(order=self.drift_order)

    def evaluator(self, n_slots: int | None = None):
        return get_evaluator(self.q_types, n_slots if n_slots is not None else self.length,
                             self.isi, self.tr, self.noise(), self.drift(),
                             run_shift=self.run_shift)

    def make_grid(self, default_preset: str, include_zero: bool = False) -> ParamGrid:
        preset = self.grid if self.grid is not None else default_preset
        return make_grid(self.q_types, preset=preset, region=self.region,
                         include_zero=include_zero, p_step=self.p_step,
                         phi_step=self.phi_step)

    def report_param_grid(self, include_zero: bool = False) -> ParamGrid:
        return make_grid(self.q_types, preset=self.report_grid, region=self.region,
                         include_zero=include_zero, p_step=self.p_step,
                         phi_step=self.phi_step)

    def ga_config(self, seed: int, space: str | None = None,
                  length: int | None = None) -> GaConfig:
        return GaConfig(q_types=self.q_types,
                        length=length if length is not None else self.length,
                        isi=self.isi, space=space if space is not None else self.space,
                        seed=seed, **self.ga)

    def to_json_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        # worker count is a run-environment detail (recorded in run_meta.json),
        # not part of what the outputs depend on
        del d["threads"]
        return d


def config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    fields = {}
    if getattr(args, "seed", None):
        fields["seeds"] = tuple(args.seed)
    for name in ("grid", "space", "table", "out", "threads"):
        v = getattr(args, name, None)
        if v is not None:
            fields[name] = v
    for name in ("q", "length", "isi", "tr", "rho", "runs"):
        v = getattr(args, name, None)
        if v is not None:
            fields["q_types" if name == "q" else name] = v
    if fields:
        cfg = replace(cfg, **fields)
    if getattr(args, "budget", None) is not None:
        cfg = replace(cfg, ga={**cfg.ga, "max_evaluations": args.budget})
    return cfg


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _ensure_out(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(x) if isinstance(x, float) else x for x in row])


def write_run_meta(outdir: str, started: str, wall_s: float, cpu_s: float,
                   threads: int, extra: dict | None = None) -> None:
    meta = {
        "argv": sys.argv,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_time_s": wall_s,
        "cpu_time_s": cpu_s,
        "threads": threads,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
    }
    if extra:
        meta.update(extra)
    write_json(os.path.join(outdir, "run_meta.json"), meta)


def grid_header(q: int, with_re: bool) -> list[str]:
    cols = ["p1", "p6"]
    cols += [f"phi_{i}" for i in range(1, q)]
    cols += [f"theta_{i}" for i in range(1, q + 1)]
    cols.append("phi_a")
    if with_re:
        cols.append("re")
    return cols


def grid_rows(grid: ParamGrid, values: np.ndarray, re_values: np.ndarray | None = None):
    """One CSV row per grid point, in grid (theta-major) order."""
    for i, th in enumerate(grid.thetas):
        angles = theta_to_angles(th)
        for j, p in enumerate(grid.ps):
            row = [p.p1, p.p6, *angles, *th, float(values[i, j])]
            if re_values is not None:
                row.append(float(re_values[i, j]))
            yield row


def min_result_dict(r: MinResult) -> dict:
    return {"value": r.value, "theta": list(r.theta), "p1": r.p.p1, "p6": r.p.p6}


def _map_fn(threads: int):
    if threads <= 1:
        return None
    return lambda f, xs: parallel_map(f, xs, threads)


def _now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _load_design_checked(path: str, cfg: ExperimentConfig) -> Design:
    try:
        return load_design(path, q_types=cfg.q_types, isi=cfg.isi)
    except OSError as e:
        raise InputParseError(f"cannot read design {path}: {e}") from e


def _load_table(path: str, cfg: ExperimentConfig) -> LocalOptTable:
    try:
        return LocalOptTable.load(path, q_types=cfg.q_types, isi=cfg.isi)
    except OSError as e:
        raise TableLookupError(f"cannot read table {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise TableLookupError(f"table {path} is not valid JSON: {e}") from e


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    cfg = config_from_args(args)
    threads = resolve_threads(cfg.threads)
    started, t0, c0 = _now_iso(), time.perf_counter(), time.process_time()
    d = _load_design_checked(args.design, cfg)
    table = _load_table(cfg.table, cfg) if cfg.table else None
    grid = cfg.make_grid("comparison", include_zero=table is not None)
    ev = cfg.evaluator(len(d))
    values = ev.phi_a_grid(d, grid.thetas, grid.ps)
    re_values = None
    summary = {
        "design_file": args.design,
        "q_types": d.q_types,
        "length": len(d),
        "isi": d.isi,
        "grid_points": grid.n_points,
        "min_phi_a": min_result_dict(
            min_phi_a(d, grid, cfg.tr, cfg.noise(), cfg.drift(), cfg.run_shift)),
    }
    if table is not None:
        missing = table.missing(grid)
        if missing:
            th, p = missing[0]
            raise TableLookupError(
                f"table does not cover the evaluation grid ({len(missing)} points "
                f"missing, first: theta={th}, p=({p.p1}, {p.p6}))")
        denom = np.empty_like(values)
        for i, th in enumerate(grid.thetas):
            for j, p in enumerate(grid.ps):
                denom[i, j] = table.value(th, p)
        re_values = values / denom
        summary["min_re"] = min_result_dict(
            min_re(d, grid, table, cfg.tr, cfg.noise(), cfg.drift(), cfg.run_shift))
    outdir = _ensure_out(cfg)
    write_csv(os.path.join(outdir, "evaluation.csv"),
              grid_header(d.q_types, with_re=re_values is not None),
              grid_rows(grid, values, re_values))
    write_json(os.path.join(outdir, "evaluation.json"), summary)
    write_run_meta(outdir, started, time.perf_counter() - t0,
                   time.process_time() - c0, threads)
    print(f"min phi_a {fmt_float(summary['min_phi_a']['value'])} at "
          f"p=({fmt_float(summary['min_phi_a']['p1'])}, "
          f"{fmt_float(summary['min_phi_a']['p6'])})")
    if "min_re" in summary:
        print(f"min re {fmt_float(summary['min_re']['value'])}")
    print(f"wrote {outdir}/evaluation.csv ({grid.n_points} rows)")
    return 0


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = config_from_args(args)
    seed = cfg.seeds[0]
    q, length, isi = cfg.q_types, cfg.length, cfg.isi
    if args.kind == "block":
        d = block_design(q, args.block_size, length, isi)
    elif args.kind == "mseq":
        fo = q + 1
        degree = args.degree
        if degree is None:
            degree = 2
            while fo ** degree - 1 < length:
                degree += 1
        poly = DEFAULT_PRIMITIVE_POLYS.get((fo, degree))
        if poly is None:
            poly = find_primitive_poly(fo, degree)
        seq = m_sequence(fo, degree, primitive_poly=poly)
        d = extend_m_sequence(seq, length, isi, q_types=q)
        print(f"field GF({fo}), degree {degree}, recurrence coefficients "
              f"{list(poly)}, period {len(seq)} (full period verified)")
    elif args.kind == "random":
        d = random_design(q, length, isi, seed)
    elif args.kind == "constrained-random":
        d = constrained_random(length, args.zero_fraction, (args.gap_min, args.gap_max),
                               isi, seed)
    elif args.kind == "cyclic":
        if not args.short:
            raise ConfigurationError("cyclic generation needs --short FILE")
        short = _load_design_checked(args.short, cfg)
        d = cyclic_design(short, q, length)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown design kind {args.kind!r}")
    out = args.output
    if out is None:
        outdir = _ensure_out(cfg)
        out = os.path.join(outdir, f"{args.kind}.txt")
    else:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
    save_design(d, out, fmt="json" if out.endswith(".json") else "text")
    print(f"wrote {out} (q={d.q_types}, L={len(d)}, isi={fmt_float(d.isi)})")
    return 0


# ---------------------------------------------------------------------------
# searches
# ---------------------------------------------------------------------------

def _search_seeds(cfg: ExperimentConfig, objective, space: str | None = None,
                  length: int | None = None, map_fn=None) -> list[SearchResult]:
    results = []
    for seed in cfg.seeds:
        ga = cfg.ga_config(seed, space=space, length=length)
        results.append(ga_search(objective, ga, map_fn=map_fn))
    return results


def _summary_stats(values: list[float]) -> dict:
    mean, stderr = mean_and_stderr(values)
    return {"max": max(values), "mean": mean,
            "std_err": stderr if len(values) > 1 else None}


def _write_seed_designs(outdir: str, results: list[SearchResult],
                        seeds: tuple[int, ...], best_idx: int) -> None:
    ddir = os.path.join(outdir, "designs")
    os.makedirs(ddir, exist_ok=True)
    for seed, r in zip(seeds, results):
        save_design(r.best_design, os.path.join(ddir, f"seed_{seed}.txt"))
    save_design(results[best_idx].best_design, os.path.join(outdir, "best_design.txt"))


def cmd_search_maximin(args) -> int:
    cfg = config_from_args(args)
    threads = resolve_threads(cfg.threads)
    started, t0, c0 = _now_iso(), time.perf_counter(), time.process_time()
    ev = cfg.evaluator()
    objective = maximin_objective(ev, cfg.make_grid("search"))
    results = _search_seeds(cfg, objective, map_fn=_map_fn(threads))
    report_grid = cfg.report_param_grid()
    noise, drift = cfg.noise(), cfg.drift()
    per_seed = []
    finals = []
    for seed, r in zip(cfg.seeds, results):
        mr = min_phi_a(r.best_design, report_grid, cfg.tr, noise, drift, cfg.run_shift)
        finals.append(mr.value)
        row = {"seed": seed, "search_objective": r.best_objective,
               "min_phi_a": min_result_dict(mr),
               "evaluations": r.n_evaluations, "generations": len(r.trace) - 1}
        if cfg.q_types >= 2 and cfg.region == "theta0":
            row["min_rg"] = min_rg(r.best_design, p_grid(COMPARISON_P_STEP), cfg.tr,
                                   noise, drift, run_shift=cfg.run_shift)
        per_seed.append(row)
    best_idx = max(range(len(finals)), key=lambda i: (finals[i], -i))
    summary = {
        "criterion": "min_phi_a",
        "config": cfg.to_json_dict(),
        "per_seed": per_seed,
        "stats": _summary_stats(finals),
        "best_seed": cfg.seeds[best_idx],
        "best_min_phi_a": finals[best_idx],
    }
    outdir = _ensure_out(cfg)
    _write_seed_designs(outdir, results, cfg.seeds, best_idx)
    write_json(os.path.join(outdir, "summary.json"), summary)
    write_run_meta(outdir, started, time.perf_counter() - t0,
                   time.process_time() - c0, threads,
                   {"per_seed_cpu_s": [r.cpu_time_s for r in results]})
    stats = summary["stats"]
    print(f"min phi_a over {len(cfg.seeds)} seed(s): max {fmt_float(stats['max'])}, "
          f"mean {fmt_float(stats['mean'])}"
          + (f", std err {fmt_float(stats['std_err'])}" if stats["std_err"] is not None else ""))
    print(f"best design (seed {summary['best_seed']}) -> {outdir}/best_design.txt")
    return 0


def cmd_search_mme(args) -> int:
    cfg = config_from_args(args)
    if not cfg.table:
        raise ConfigurationError("search-mme needs --table PATH (or config key 'table')")
    threads = resolve_threads(cfg.threads)
    started, t0, c0 = _now_iso(), time.perf_counter(), time.process_time()
    table = _load_table(cfg.table, cfg)
    grid = cfg.make_grid("search", include_zero=True)
    ev = cfg.evaluator()
    objective = mme_objective(ev, grid, table)
    results = _search_seeds(cfg, objective, map_fn=_map_fn(threads))
    noise, drift = cfg.noise(), cfg.drift()
    per_seed = []
    finals = []
    for seed, r in zip(cfg.seeds, results):
        mr = min_re(r.best_design, grid, table, cfg.tr, noise, drift, cfg.run_shift)
        finals.append(mr.value)
        per_seed.append({"seed": seed, "search_objective": r.best_objective,
                         "min_re": min_result_dict(mr),
                         "evaluations": r.n_evaluations,
                         "generations": len(r.trace) - 1})
    best_idx = max(range(len(finals)), key=lambda i: (finals[i], -i))
    summary = {
        "criterion": "min_re",
        "config": cfg.to_json_dict(),
        "table": cfg.table,
        "table_entries": len(table),
        "per_seed": per_seed,
        "stats": _summary_stats(finals),
        "best_seed": cfg.seeds[best_idx],
        "best_min_re": finals[best_idx],
    }
    outdir = _ensure_out(cfg)
    _write_seed_designs(outdir, results, cfg.seeds, best_idx)
    write_json(os.path.join(outdir, "summary.json"), summary)
    write_run_meta(outdir, started, time.perf_counter() - t0,
                   time.process_time() - c0, threads,
                   {"per_seed_cpu_s": [r.cpu_time_s for r in results]})
    stats = summary["stats"]
    print(f"min re over {len(cfg.seeds)} seed(s): max {fmt_float(stats['max'])}, "
          f"mean {fmt_float(stats['mean'])}"
          + (f", std err {fmt_float(stats['std_err'])}" if stats["std_err"] is not None else ""))
    print(f"best design (seed {summary['best_seed']}) -> {outdir}/best_design.txt")
    return 0


# ---------------------------------------------------------------------------
# build-table
# ---------------------------------------------------------------------------

def cmd_build_table(args) -> int:
    cfg = config_from_args(args)
    threads = resolve_threads(cfg.threads)
    started, t0, c0 = _now_iso(), time.perf_counter(), time.process_time()
    grid = cfg.make_grid("search", include_zero=True)
    outdir = _ensure_out(cfg)
    path = cfg.table or os.path.join(outdir, "table.json")
    existing = None
    if os.path.exists(path):
        existing = _load_table(path, cfg)
        print(f"merging into existing table with {len(existing)} entries")
    ev = cfg.evaluator()
    ga = cfg.ga_config(cfg.seeds[0])
    done = {"n": 0}

    def progress(i, total):
        done["n"] = i
        if i % 25 == 0 or i == total:
            print(f"  {i}/{total} grid points", file=sys.stderr)

    table = build_local_opt_table(grid, ev, ga, existing=existing,
                                  map_fn=_map_fn(threads), progress=progress)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    table.save(path)
    write_run_meta(outdir, started, time.perf_counter() - t0,
                   time.process_time() - c0, threads,
                   {"table": path, "grid_points": grid.n_points})
    print(f"wrote {path} ({len(table)} entries over {grid.n_points} grid points)")
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(args) -> int:
    cfg = config_from_args(args)
    threads = resolve_threads(cfg.threads)
    started, t0, c0 = _now_iso(), time.perf_counter(), time.process_time()
    table = _load_table(cfg.table, cfg) if cfg.table else None
    grid = cfg.make_grid("comparison", include_zero=table is not None)
    noise, drift = cfg.noise(), cfg.drift()
    denom = None
    if table is not None:
        missing = table.missing(grid)
        if missing:
            raise TableLookupError(
                f"table does not cover the comparison grid ({len(missing)} points missing)")
        denom = np.array([[table.value(th, p) for p in grid.ps] for th in grid.thetas])
    names = []
    rows = []
    per_design = []
    for path in args.designs:
        d = _load_design_checked(path, cfg)
        name = os.path.splitext(os.path.basename(path))[0]
        names.append(name)
        ev = cfg.evaluator(len(d))
        values = ev.phi_a_grid(d, grid.thetas, grid.ps)
        re_values = values / denom if denom is not None else None
        for row in grid_rows(grid, values, re_values):
            rows.append([name, *row])
        entry = {"design": name, "file": path,
                 "min_phi_a": min_result_dict(
                     min_phi_a(d, grid, cfg.tr, noise, drift, cfg.run_shift)),
                 "mean_phi_a": float(values.mean()), "max_phi_a": float(values.max())}
        if re_values is not None:
            entry["min_re"] = min_result_dict(
                min_re(d, grid, table, cfg.tr, noise, drift, cfg.run_shift))
        if args.rg and d.q_types >= 2:
            entry["min_rg"] = min_rg(d, grid.ps, cfg.tr, noise, drift,
                                     run_shift=cfg.run_shift)
        per_design.append(entry)
    key = "min_re" if denom is not None else "min_phi_a"
    ranking = sorted(range(len(per_design)),
                     key=lambda i: -per_design[i][key]["value"])
    summary = {"criterion": key, "designs": per_design,
               "ranking": [names[i] for i in ranking]}
    outdir = _ensure_out(cfg)
    write_csv(os.path.join(outdir, "comparison.csv"),
              ["design"] + grid_header(cfg.q_types, with_re=denom is not None), rows)
    write_json(os.path.join(outdir, "comparison.json"), summary)
    write_run_meta(outdir, started, time.perf_counter() - t0,
                   time.process_time() - c0, threads)
    for i in ranking:
        e = per_design[i]
        line = f"{e['design']}: min phi_a {fmt_float(e['min_phi_a']['value'])}"
        if "min_re" in e:
            line += f", min re {fmt_float(e['min_re']['value'])}"
        if "min_rg" in e:
            line += f", min rg {fmt_float(e['min_rg'])}"
        print(line)
    return 0


# ---------------------------------------------------------------------------
# two-run worked example
# ---------------------------------------------------------------------------

def cmd_example_miezin(args) -> int:
    cfg = config_from_args(args)
    cfg = replace(cfg, q_types=1, length=132, isi=2.5, tr=2.5, runs=2,
                  run_shift=1.25, drift_order=2, region="theta0")
    threads = resolve_threads(cfg.threads)
    started, t0, c0 = _now_iso(), time.perf_counter(), time.process_time()
    noise, drift = cfg.noise(), cfg.drift()
    search_grid = cfg.make_grid("search")
    report_grid = cfg.report_param_grid()
    map_fn = _map_fn(threads)

    ev = cfg.evaluator()
    objective = maximin_objective(ev, search_grid)
    results = _search_seeds(cfg, objective, map_fn=map_fn)
    finals = [min_phi_a(r.best_design, report_grid, cfg.tr, noise, drift,
                        cfg.run_shift).value for r in results]
    best_idx = max(range(len(finals)), key=lambda i: (finals[i], -i))
    d_star = results[best_idx].best_design

    # competing designs: alternating six-rest/six-stimulus blocks, an
    # m-sequence wrapped to length, and the best of 100 spacing-constrained
    # random sequences (about half rest, mean onset gap near 5 s)
    competitors = {"maximin": d_star,
                   "block": block_design(1, 6, cfg.length, cfg.isi),
                   "mseq": m_sequence_design(1, cfg.length, cfg.isi)}
    rand_seeds = np.random.SeedSequence(cfg.seeds[0]).spawn(args.n_random)
    best_rand, best_rand_min = None, -1.0
    for child in rand_seeds:
        seed = int(child.generate_state(1, dtype=np.uint64)[0] % (2 ** 63))
        dr = constrained_random(cfg.length, 0.5, (4.9, 5.1), cfg.isi, seed)
        v = min_phi_a(dr, report_grid, cfg.tr, noise, drift, cfg.run_shift).value
        if v > best_rand_min:
            best_rand, best_rand_min = dr, v
    competitors["random_best"] = best_rand

    rows = []
    per_design = {}
    for name, d in competitors.items():
        values = ev.phi_a_grid(d, report_grid.thetas, report_grid.ps)
        for row in grid_rows(report_grid, values):
            rows.append([name, *row])
        per_design[name] = min_result_dict(
            min_phi_a(d, report_grid, cfg.tr, noise, drift, cfg.run_shift))

    # robustness: how much of the rho-matched optimum the rho=0.3 design keeps
    robustness = {}
    for rho_alt in (0.0, 0.5):
        noise_alt = NoiseSpec(rho=rho_alt, runs=2)
        cfg_alt = replace(cfg, rho=rho_alt)
        ev_alt = cfg_alt.evaluator()
        obj_alt = maximin_objective(ev_alt, search_grid)
        res_alt = _search_seeds(cfg_alt, obj_alt, map_fn=map_fn)
        fin_alt = [min_phi_a(r.best_design, report_grid, cfg.tr, noise_alt, drift,
                             cfg.run_shift).value for r in res_alt]
        alt_idx = max(range(len(fin_alt)), key=lambda i: (fin_alt[i], -i))
        own = min_phi_a(d_star, report_grid, cfg.tr, noise_alt, drift,
                        cfg.run_shift).value
        robustness[f"rho_{fmt_float(rho_alt)}"] = {
            "matched_min_phi_a": fin_alt[alt_idx],
            "design_min_phi_a": own,
            "retained_fraction": own / fin_alt[alt_idx],
        }

    summary = {
        "config": cfg.to_json_dict(),
        "per_design_min_phi_a": per_design,
        "best_seed": cfg.seeds[best_idx],
        "robustness": robustness,
    }
    outdir = _ensure_out(cfg)
    ddir = os.path.join(outdir, "designs")
    os.makedirs(ddir, exist_ok=True)
    for name, d in competitors.items():
        save_design(d, os.path.join(ddir, f"{name}.txt"))
    write_csv(os.path.join(outdir, "distributions.csv"),
              ["design"] + grid_header(1, with_re=False), rows)
    write_json(os.path.join(outdir, "summary.json"), summary)
    write_run_meta(outdir, started, time.perf_counter() - t0,
                   time.process_time() - c0, threads)
    for name in competitors:
        print(f"{name}: min phi_a {fmt_float(per_design[name]['value'])}")
    for key, r in robustness.items():
        print(f"{key}: retains {fmt_float(100 * r['retained_fraction'])}% of the "
              f"matched optimum")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, action="append",
                   help="random seed (repeatable; overrides config seeds)")
    p.add_argument("--grid", choices=["search", "comparison"],
                   help="grid preset override")
    p.add_argument("--space", choices=["xi", "xi0"], help="design space override")
    p.add_argument("--table", help="locally optimal design table (JSON)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads "
                   "(default: MMDESIGN_THREADS or hardware parallelism)")


def _add_model_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=int, help="number of stimulus types")
    p.add_argument("--length", type=int, help="number of stimulus slots")
    p.add_argument("--isi", type=float, help="inter-stimulus interval, seconds")
    p.add_argument("--tr", type=float, help="scan repetition time, seconds")
    p.add_argument("--rho", type=float, help="AR(1) noise correlation")
    p.add_argument("--runs", type=int, help="number of runs (1 or 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmdesign",
        description="Find and evaluate worst-case efficient fMRI stimulus sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="evaluate a design file over a grid")
    p.add_argument("design", help="design file (text or JSON)")
    _add_common(p)
    _add_model_overrides(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search-maximin", help="search for a worst-case optimal design")
    _add_common(p)
    _add_model_overrides(p)
    p.add_argument("--budget", type=int, help="fitness evaluations per search")
    p.set_defaults(func=cmd_search_maximin)

    p = sub.add_parser("search-mme",
                       help="search for a worst-case efficient design (needs a table)")
    _add_common(p)
    _add_model_overrides(p)
    p.add_argument("--budget", type=int, help="fitness evaluations per search")
    p.set_defaults(func=cmd_search_mme)

    p = sub.add_parser("build-table",
                       help="build or extend a locally optimal design table")
    _add_common(p)
    _add_model_overrides(p)
    p.add_argument("--budget", type=int, help="fitness evaluations per grid point")
    p.set_defaults(func=cmd_build_table)

    p = sub.add_parser("generate", help="write a baseline design file")
    p.add_argument("kind", choices=["block", "mseq", "random",
                                    "constrained-random", "cyclic"])
    _add_common(p)
    _add_model_overrides(p)
    p.add_argument("--block-size", type=int, default=4,
                   help="stimuli per block (block kind)")
    p.add_argument("--degree", type=int, help="LFSR degree (mseq kind)")
    p.add_argument("--zero-fraction", type=float, default=0.5,
                   help="rest fraction (constrained-random kind)")
    p.add_argument("--gap-min", type=float, default=4.9,
                   help="smallest mean onset gap, seconds (constrained-random)")
    p.add_argument("--gap-max", type=float, default=5.1,
                   help="largest mean onset gap, seconds (constrained-random)")
    p.add_argument("--short", help="short design file (cyclic kind)")
    p.add_argument("-o", "--output", help="output design file path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("example-miezin",
                       help="two-run worked example with baselines and robustness")
    _add_common(p)
    p.add_argument("--budget", type=int, help="fitness evaluations per search")
    p.add_argument("--n-random", type=int, default=100,
                   help="number of constrained random competitors")
    p.set_defaults(func=cmd_example_miezin)

    p = sub.add_parser("compare", help="evaluate several design files side by side")
    p.add_argument("designs", nargs="+", help="design files")
    _add_common(p)
    _add_model_overrides(p)
    p.add_argument("--rg", action="store_true",
                   help="also report the permutation-image efficiency bound")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except MmdesignError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
