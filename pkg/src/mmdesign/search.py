"""Knowledge-based genetic search over stimulus sequences.

Each generation: parents are paired by fitness rank and recombined at a single
random cut point, children are mutated positionwise, and a few immigrants
(block designs, rotations of an m-sequence, uniform random sequences) keep the
population from collapsing.  Survivors are the best of parents, children, and
immigrants.  Everything is driven by one seeded generator, so runs are exactly
reproducible; fitness calls are pure and may be mapped by a worker pool.

The search space is either all label sequences of the given length, or the
restricted class built by cyclically relabeling a short sequence and
concatenating Q copies (genomes are then the short sequence).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .criteria import LocalOptTable, ParamGrid
from .designs import Design, block_design, cyclic_design, m_sequence_design
from .errors import (ConfigurationError, GenerationError, NumericalError,
                     TableLookupError)
from .glsmodel import Evaluator

SPACE_FULL = "xi"
SPACE_RESTRICTED = "xi0"


@dataclass(frozen=True)
class GaConfig:
    """Search-space description plus genetic-algorithm settings."""

    q_types: int
    length: int
    isi: float
    space: str = SPACE_FULL
    population_size: int = 20
    max_evaluations: int = 10_000
    max_generations: int | None = None
    crossover_pairs: int = 9
    mutation_rate: float = 0.01
    immigrant_count: int = 3
    elite_count: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.space not in (SPACE_FULL, SPACE_RESTRICTED):
            raise ConfigurationError(f"space must be 'xi' or 'xi0' (got {self.space!r})")
        if self.q_types < 1 or self.length < 1:
            raise ConfigurationError("q_types and length must be >= 1")
        if self.isi <= 0:
            raise ConfigurationError(f"isi must be positive (got {self.isi})")
        if self.elite_count < 0 or self.population_size < self.elite_count + 1:
            raise ConfigurationError("population_size must be >= elite_count + 1")
        if 2 * self.crossover_pairs > self.population_size:
            raise ConfigurationError("crossover needs 2*crossover_pairs <= population_size")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigurationError(
                f"mutation_rate must lie in [0, 1] (got {self.mutation_rate})")
        if self.immigrant_count < 0:
            raise ConfigurationError("immigrant_count must be >= 0")
        if self.max_evaluations < self.population_size:
            raise ConfigurationError(
                "max_evaluations must cover at least the initial population")
        if self.max_generations is not None and self.max_generations < 0:
            raise ConfigurationError("max_generations must be >= 0")

    @property
    def genome_length(self) -> int:
        if self.space == SPACE_RESTRICTED:
            return -(-self.length // self.q_types)  # ceil(L / Q)
        return self.length


@dataclass(frozen=True)
class SearchResult:
    best_design: Design
    best_objective: float
    trace: tuple[float, ...]  # best objective after each generation
    n_evaluations: int
    wall_time_s: float
    cpu_time_s: float
    config: GaConfig

    def to_json_dict(self) -> dict:
        return {
            "design": " ".join(str(x) for x in self.best_design.labels),
            "objective": self.best_objective,
            "trace": list(self.trace),
            "evaluations": self.n_evaluations,
            "seed": self.config.seed,
            "space": self.config.space,
        }


def decode_genome(genome: tuple[int, ...], config: GaConfig) -> Design:
    """Genome to design: identity for the full space, cyclic concatenation of
    the short sequence for the restricted space."""
    if config.space == SPACE_RESTRICTED:
        short = Design(labels=genome, q_types=config.q_types, isi=config.isi)
        return cyclic_design(short, config.q_types, config.length)
    return Design(labels=genome, q_types=config.q_types, isi=config.isi)


def _base_m_sequence(config: GaConfig) -> tuple[int, ...] | None:
    try:
        d = m_sequence_design(config.q_types, config.genome_length, config.isi)
    except (ConfigurationError, GenerationError):
        return None
    return d.labels


def _knowledge_seeds(config: GaConfig) -> list[tuple[int, ...]]:
    seeds = []
    mseq = _base_m_sequence(config)
    if mseq is not None:
        seeds.append(mseq)
    seeds.append(block_design(config.q_types, 4, config.genome_length, config.isi).labels)
    return seeds


def ga_search(objective, config: GaConfig, map_fn=None,
              seed_designs: tuple[Design, ...] = ()) -> SearchResult:
    """Maximize `objective` (a pure function of a Design) under the budget.

    `seed_designs` are injected into the initial population (used to warm-start
    from a neighboring grid point's winner when building tables); they must
    live in the configured search space.  A nonzero mutation rate is floored
    at one expected flip per child.
    """
    if map_fn is None:
        map_fn = lambda f, xs: [f(x) for x in xs]
    rng = np.random.default_rng(config.seed)
    glen = config.genome_length
    q = config.q_types
    # floor the per-position rate at 1/length so every child carries one
    # expected flip; short genomes would otherwise clone their parents and
    # burn the budget on duplicates (rate 0 still disables mutation)
    mut_rate = config.mutation_rate
    if mut_rate > 0.0:
        mut_rate = max(mut_rate, 1.0 / glen)

    def random_genome() -> tuple[int, ...]:
        return tuple(int(x) for x in rng.integers(0, q + 1, size=glen))

    genomes: list[tuple[int, ...]] = []
    for d in seed_designs:
        g = tuple(d.labels)
        if len(g) != glen:
            raise ConfigurationError(
                f"seed design length {len(g)} does not match genome length {glen}")
        genomes.append(g)
    genomes.extend(_knowledge_seeds(config))
    seen = set()
    unique = []
    for g in genomes:
        if g not in seen:
            seen.add(g)
            unique.append(g)
    while len(unique) < config.population_size:
        g = random_genome()
        if g not in seen:
            seen.add(g)
            unique.append(g)
    genomes = unique[:config.population_size]

    t_wall = time.perf_counter()
    t_cpu = time.process_time()
    n_evals = 0
    budget = config.max_evaluations

    def evaluate(batch: list[tuple[int, ...]]) -> list[tuple[float, tuple[int, ...]]]:
        nonlocal n_evals
        designs = [decode_genome(g, config) for g in batch]
        vals = list(map_fn(objective, designs))
        n_evals += len(batch)
        return [(float(v), g) for v, g in zip(vals, batch)]

    population = evaluate(genomes)
    population.sort(key=lambda it: (-it[0], it[1]))
    trace = [population[0][0]]
    mseq_base = _base_m_sequence(config)

    generation = 0
    while n_evals < budget:
        if config.max_generations is not None and generation >= config.max_generations:
            break
        candidates: list[tuple[int, ...]] = []
        for c in range(config.crossover_pairs):
            ga = population[2 * c][1]
            gb = population[2 * c + 1][1]
            cut = int(rng.integers(1, glen)) if glen > 1 else 0
            candidates.append(ga[:cut] + gb[cut:])
            candidates.append(gb[:cut] + ga[cut:])
        # positionwise mutation of every child, uniform resample over {0..Q}
        mutated = []
        for g in candidates:
            mask = rng.random(glen) < mut_rate
            vals = rng.integers(0, q + 1, size=glen)
            arr = np.where(mask, vals, np.asarray(g))
            mutated.append(tuple(int(x) for x in arr))
        candidates = mutated
        for i in range(config.immigrant_count):
            kind = i % 3
            if kind == 0:
                size = int(rng.integers(1, 9))
                candidates.append(block_design(q, size, glen, config.isi).labels)
            elif kind == 1 and mseq_base is not None:
                shift = int(rng.integers(0, glen))
                candidates.append(mseq_base[shift:] + mseq_base[:shift])
            else:
                candidates.append(random_genome())
        room = budget - n_evals
        candidates = candidates[:room]
        if not candidates:
            break
        population.extend(evaluate(candidates))
        population.sort(key=lambda it: (-it[0], it[1]))
        # keep distinct genomes ahead of duplicates when truncating, so
        # immigrants are not crowded out once the population collapses onto
        # a few sequences (short genomes mutate rarely and duplicate fast)
        kept_genomes = set()
        uniques, duplicates = [], []
        for item in population:
            if item[1] in kept_genomes:
                duplicates.append(item)
            else:
                kept_genomes.add(item[1])
                uniques.append(item)
        population = (uniques + duplicates)[:config.population_size]
        trace.append(population[0][0])
        generation += 1

    best_val, best_genome = population[0]
    return SearchResult(
        best_design=decode_genome(best_genome, config),
        best_objective=best_val,
        trace=tuple(trace),
        n_evaluations=n_evals,
        wall_time_s=time.perf_counter() - t_wall,
        cpu_time_s=time.process_time() - t_cpu,
        config=config,
    )


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------

def maximin_objective(ev: Evaluator, grid: ParamGrid):
    """Worst-case A-criterion value over the grid, as a fitness function."""
    thetas, ps = grid.thetas, grid.ps

    def fitness(d: Design) -> float:
        return float(ev.phi_a_grid(d, thetas, ps).min())

    return fitness


def mme_objective(ev: Evaluator, grid: ParamGrid, table: LocalOptTable):
    """Worst-case relative efficiency over the grid (which should include the
    zero direction), as a fitness function."""
    missing = table.missing(grid)
    if missing:
        th, p = missing[0]
        raise TableLookupError(
            f"table misses {len(missing)} grid points, first: theta={th}, "
            f"p=({p.p1}, {p.p6})")
    denom = np.empty((len(grid.thetas), len(grid.ps)))
    for i, th in enumerate(grid.thetas):
        for j, p in enumerate(grid.ps):
            denom[i, j] = table.value(th, p)

    def fitness(d: Design) -> float:
        return float((ev.phi_a_grid(d, grid.thetas, grid.ps) / denom).min())

    return fitness


# ---------------------------------------------------------------------------
# local-optimum table construction
# ---------------------------------------------------------------------------

def build_local_opt_table(grid: ParamGrid, ev: Evaluator, ga: GaConfig,
                          existing: LocalOptTable | None = None,
                          map_fn=None, progress=None) -> LocalOptTable:
    """One genetic search per grid point, warm-started from the previous
    point's winner; keep-the-larger merge into `existing` when given.

    Per-point seeds are spawned deterministically from ga.seed, so the table
    is reproducible regardless of how the per-point budget is configured.
    """
    table = existing if existing is not None else LocalOptTable(
        q_types=ga.q_types, isi=ga.isi)
    points = list(grid.points())
    children = np.random.SeedSequence(ga.seed).spawn(len(points))
    prev: Design | None = None
    for idx, (theta, p) in enumerate(points):
        point_seed = int(children[idx].generate_state(1, dtype=np.uint64)[0] % (2 ** 63))
        cfg = replace(ga, seed=point_seed)

        def fitness(d: Design, _theta=theta, _p=p) -> float:
            return ev.phi_a(d, _theta, _p)

        seeds = (prev,) if prev is not None else ()
        result = ga_search(fitness, cfg, map_fn=map_fn, seed_designs=seeds)
        if result.best_objective <= 0.0:
            raise NumericalError(
                f"no estimable design found at theta={theta}, p=({p.p1}, {p.p6})")
        table.put(theta, p, result.best_objective, result.best_design)
        prev = result.best_design
        if progress is not None:
            progress(idx + 1, len(points))
    return table
