"""Genetic search: reproducibility, budgets, spaces, objectives, tables."""

import json
import math

import numpy as np
import pytest

from mmdesign.criteria import LocalOptTable, make_grid
from mmdesign.designs import Design, cyclic_design, random_design
from mmdesign.errors import ConfigurationError, NumericalError, TableLookupError
from mmdesign.glsmodel import DriftSpec, Evaluator, NoiseSpec
from mmdesign.search import (
    GaConfig,
    build_local_opt_table,
    decode_genome,
    ga_search,
    maximin_objective,
    mme_objective,
)


def count_ones(d: Design) -> float:
    return float(sum(1 for x in d.labels if x == 1))


def tiny_eval(q=1, length=12, isi=4.0, tr=2.0):
    return Evaluator(q_types=q, n_slots=length, isi=isi, tr=tr,
                     noise=NoiseSpec(rho=0.3), drift=DriftSpec(order=2))


TINY_GRID = make_grid(1, "search", p_step=1.5, phi_step=0.25 * math.pi)


# -- configuration -------------------------------------------------------------

def test_config_validation():
    base = dict(q_types=1, length=12, isi=4.0)
    with pytest.raises(ConfigurationError):
        GaConfig(space="free", **base)
    with pytest.raises(ConfigurationError):
        GaConfig(q_types=0, length=12, isi=4.0)
    with pytest.raises(ConfigurationError):
        GaConfig(q_types=1, length=12, isi=0.0)
    with pytest.raises(ConfigurationError):
        GaConfig(population_size=1, elite_count=1, **base)
    with pytest.raises(ConfigurationError):
        GaConfig(population_size=10, crossover_pairs=6, **base)
    with pytest.raises(ConfigurationError):
        GaConfig(mutation_rate=1.5, **base)
    with pytest.raises(ConfigurationError):
        GaConfig(immigrant_count=-1, **base)
    with pytest.raises(ConfigurationError):
        GaConfig(population_size=20, max_evaluations=10, **base)
    with pytest.raises(ConfigurationError):
        GaConfig(max_generations=-1, **base)


def test_genome_length_by_space():
    assert GaConfig(q_types=1, length=12, isi=4.0).genome_length == 12
    assert GaConfig(q_types=2, length=12, isi=4.0, space="xi0").genome_length == 6
    assert GaConfig(q_types=3, length=10, isi=4.0, space="xi0").genome_length == 4


def test_decode_genome_full_and_restricted():
    cfg = GaConfig(q_types=2, length=6, isi=4.0)
    assert decode_genome((1, 0, 2, 2, 0, 1), cfg).labels == (1, 0, 2, 2, 0, 1)
    cfg0 = GaConfig(q_types=2, length=6, isi=4.0, space="xi0")
    d = decode_genome((1, 0, 2), cfg0)
    assert d.labels == (1, 0, 2, 2, 0, 1)
    short = Design(labels=(1, 0, 2), q_types=2, isi=4.0)
    assert d == cyclic_design(short, 2, 6)


# -- search behavior -------------------------------------------------------------

def test_search_is_deterministic_per_seed():
    cfg = GaConfig(q_types=1, length=12, isi=4.0, max_evaluations=400, seed=7)
    r1 = ga_search(count_ones, cfg)
    r2 = ga_search(count_ones, cfg)
    assert r1.best_design == r2.best_design
    assert r1.trace == r2.trace
    assert r1.n_evaluations == r2.n_evaluations
    r3 = ga_search(count_ones, GaConfig(q_types=1, length=12, isi=4.0,
                                        max_evaluations=400, seed=8))
    assert r3.trace != r1.trace or r3.best_design != r1.best_design


def test_search_trace_monotone_and_budgeted():
    cfg = GaConfig(q_types=2, length=18, isi=4.0, max_evaluations=500, seed=1)
    res = ga_search(count_ones, cfg)
    assert all(b >= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.n_evaluations <= cfg.max_evaluations
    assert res.best_objective == res.trace[-1]
    assert res.trace[-1] >= res.trace[0]


def test_search_finds_trivial_optimum():
    cfg = GaConfig(q_types=1, length=12, isi=4.0, max_evaluations=2000, seed=0)
    res = ga_search(count_ones, cfg)
    assert res.best_objective == 12.0
    assert res.best_design.labels == (1,) * 12


def test_search_restricted_space_yields_cyclic_designs():
    cfg = GaConfig(q_types=2, length=12, isi=4.0, space="xi0",
                   max_evaluations=2000, seed=1)
    res = ga_search(count_ones, cfg)
    short = Design(labels=res.best_design.labels[:6], q_types=2, isi=4.0)
    assert res.best_design == cyclic_design(short, 2, 12)
    # the restricted optimum: ones in every short slot, relabeled to twos in
    # the second copy
    assert res.best_objective == 6.0


def test_search_zero_generations_scores_initial_population_only():
    cfg = GaConfig(q_types=1, length=12, isi=4.0, max_evaluations=400,
                   max_generations=0, seed=3)
    res = ga_search(count_ones, cfg)
    assert res.n_evaluations == cfg.population_size
    assert len(res.trace) == 1


def test_search_result_feasible_and_serializable():
    cfg = GaConfig(q_types=2, length=15, isi=4.0, max_evaluations=300, seed=5)
    res = ga_search(count_ones, cfg)
    assert len(res.best_design) == 15
    assert res.best_design.q_types == 2 and res.best_design.isi == 4.0
    assert all(0 <= x <= 2 for x in res.best_design.labels)
    blob = json.dumps(res.to_json_dict())
    assert json.loads(blob)["seed"] == 5


def test_seed_designs_warm_start():
    cfg = GaConfig(q_types=1, length=12, isi=4.0, max_evaluations=40,
                   max_generations=0, seed=9)
    best = Design(labels=(1,) * 12, q_types=1, isi=4.0)
    res = ga_search(count_ones, cfg, seed_designs=(best,))
    assert res.trace[0] == 12.0
    assert res.best_design == best


def test_seed_designs_must_match_genome_length():
    cfg = GaConfig(q_types=2, length=12, isi=4.0, space="xi0", max_evaluations=100)
    wrong = random_design(2, 12, 4.0, seed=0)  # full-length, not the short form
    with pytest.raises(ConfigurationError):
        ga_search(count_ones, cfg, seed_designs=(wrong,))


def test_map_fn_does_not_change_results():
    cfg = GaConfig(q_types=1, length=12, isi=4.0, max_evaluations=300, seed=11)
    plain = ga_search(count_ones, cfg)
    mapped = ga_search(count_ones, cfg, map_fn=lambda f, xs: [f(x) for x in xs])
    assert plain.best_design == mapped.best_design
    assert plain.trace == mapped.trace


# -- objectives -------------------------------------------------------------------

def test_maximin_objective_is_grid_minimum():
    ev = tiny_eval()
    fit = maximin_objective(ev, TINY_GRID)
    d = random_design(1, 12, 4.0, seed=13)
    want = ev.phi_a_grid(d, TINY_GRID.thetas, TINY_GRID.ps).min()
    assert fit(d) == want


def test_mme_objective_is_grid_minimum_of_ratios():
    ev = tiny_eval()
    grid = TINY_GRID.with_zero()
    table = LocalOptTable(q_types=1, isi=4.0)
    ref = random_design(1, 12, 4.0, seed=14)
    for th, p in grid.points():
        table.put(th, p, max(ev.phi_a(ref, th, p), 1e-6), ref)
    fit = mme_objective(ev, grid, table)
    d = random_design(1, 12, 4.0, seed=15)
    direct = min(ev.phi_a(d, th, p) / table.value(th, p) for th, p in grid.points())
    assert fit(d) == pytest.approx(direct, rel=1e-12)
    assert fit(ref) == pytest.approx(1.0, rel=1e-9)


def test_mme_objective_rejects_incomplete_table():
    ev = tiny_eval()
    with pytest.raises(TableLookupError):
        mme_objective(ev, TINY_GRID, LocalOptTable(q_types=1, isi=4.0))


# -- table construction -------------------------------------------------------------

GA_TINY = GaConfig(q_types=1, length=12, isi=4.0, population_size=10,
                   crossover_pairs=4, max_evaluations=60, seed=2)


def test_build_table_covers_grid_and_entries_reevaluate():
    ev = tiny_eval()
    table = build_local_opt_table(TINY_GRID, ev, GA_TINY)
    assert table.covers(TINY_GRID)
    assert len(table) == TINY_GRID.n_points
    for entry in table.entries.values():
        again = ev.phi_a(entry.design, entry.theta, entry.p)
        assert again == pytest.approx(entry.phi_a, rel=1e-9)


def test_build_table_is_deterministic():
    ev = tiny_eval()
    t1 = build_local_opt_table(TINY_GRID, ev, GA_TINY)
    t2 = build_local_opt_table(TINY_GRID, ev, GA_TINY)
    assert {k: e.phi_a for k, e in t1.entries.items()} == \
        {k: e.phi_a for k, e in t2.entries.items()}


def test_build_table_merges_keep_larger():
    ev = tiny_eval()
    first = build_local_opt_table(TINY_GRID, ev, GA_TINY)
    before = {k: e.phi_a for k, e in first.entries.items()}
    merged = build_local_opt_table(TINY_GRID, ev,
                                   GaConfig(q_types=1, length=12, isi=4.0,
                                            population_size=10, crossover_pairs=4,
                                            max_evaluations=120, seed=5),
                                   existing=first)
    assert merged is first
    for k, val in before.items():
        assert merged.entries[k].phi_a >= val


def test_build_table_progress_callback():
    ev = tiny_eval()
    calls = []
    build_local_opt_table(TINY_GRID, ev, GA_TINY,
                          progress=lambda done, total: calls.append((done, total)))
    assert calls == [(i + 1, TINY_GRID.n_points) for i in range(TINY_GRID.n_points)]


def test_build_table_raises_when_nothing_estimable():
    # an HRF truncated to a single sample (height 0 at onset) zeroes every
    # design, so no grid point has a positive optimum
    ev = Evaluator(q_types=1, n_slots=12, isi=4.0, tr=2.0,
                   noise=NoiseSpec(rho=0.3), drift=DriftSpec(order=2), hrf_length=1)
    with pytest.raises(NumericalError):
        build_local_opt_table(TINY_GRID, ev, GA_TINY)
