"""Population lifecycle: init, offspring, NSGA-II culling, Pareto archive.

Every generation re-scores parents and offspring together on one rotating
library trajectory, keeps the best half by non-dominated rank with
crowded tie-breaks, and folds the first front into a run-spanning archive
of mutually non-dominated genomes. All randomness derives from
(seed, purpose-tag, ...) streams so results are independent of both
evaluation order and thread count, and runs can resume mid-way.
"""

from __future__ import annotations

import csv
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import (
    ControllerLibrary,
    Dyad,
    Lineage,
    Origin,
    default_library,
    dyad_from_dict,
    dyad_to_dict,
    make_agent,
    normalize_policy,
)
from .objectives import ObjectiveVector, score
from .simulator import EggParams, InitSpec, simulate_trial, validate_library_sufficiency
from .trajectory import ReferenceTrajectory, TrajectoryConfig, make_library

# Purpose tags for derived RNG streams.
_TAG_INIT = 1
_TAG_OFFSPRING = 2
_TAG_ROTATION = 3
_TAG_ANALYSIS = 4

SCORES_CSV_HEADER = ("dyad_id", "generation", "tracking", "stabilization", "effort1", "effort2", "jerk")


class EvolutionError(ValueError):
    """Invalid evolution inputs or corrupted checkpoints."""


def stream(seed: int, *tags: int) -> np.random.Generator:
    """Deterministic RNG stream for one purpose, independent of call order."""
    return np.random.default_rng(np.random.SeedSequence((seed, *tags)))


@dataclass
class ScoredDyad:
    dyad: Dyad
    objectives: ObjectiveVector | None = None
    rank: int | None = None
    crowding: float | None = None


@dataclass(frozen=True)
class Population:
    members: tuple[Dyad, ...]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def init_population(rng_seed: int, mu: int, library: ControllerLibrary) -> Population:
    """mu fresh dyads with sparse policies and random library controllers."""
    if mu <= 0:
        raise EvolutionError("population size must be positive")
    members = []
    for i in range(mu):
        rng = stream(rng_seed, _TAG_INIT, i)
        members.append(
            Dyad(
                agent1=make_agent(rng, library),
                agent2=make_agent(rng, library),
                lineage=Lineage(uid=f"s{rng_seed}-init-{i}", generation=0, origin=Origin.INIT),
            )
        )
    return Population(members=tuple(members), generation=0)


def crossover(
    parent_a: Dyad,
    parent_b: Dyad,
    rng: np.random.Generator,
    uid: str = "",
    generation: int = 0,
) -> Dyad:
    """Average-and-renormalize the four policy slots; one parent donates all
    controllers. Agent slots stay aligned (1 with 1, 2 with 2)."""
    donor = parent_a if int(rng.integers(0, 2)) == 0 else parent_b
    agents = []
    for slot in (1, 2):
        ag_a = parent_a.agent1 if slot == 1 else parent_a.agent2
        ag_b = parent_b.agent1 if slot == 1 else parent_b.agent2
        ag_d = donor.agent1 if slot == 1 else donor.agent2
        policies = {}
        for name in ("w_st", "w_ts"):
            wa = getattr(ag_a, name).weights
            wb = getattr(ag_b, name).weights
            mean = [0.5 * (a + b) for a, b in zip(wa, wb)]
            if all(w == 0.0 for w in mean):
                # exactly opposed parents have no mean direction; fall back
                # to parent A's policy
                policies[name] = getattr(ag_a, name)
            else:
                policies[name] = normalize_policy(mean)
        agents.append(
            type(ag_a)(w_st=policies["w_st"], w_ts=policies["w_ts"], c_s=ag_d.c_s, c_t=ag_d.c_t)
        )
    return Dyad(
        agent1=agents[0],
        agent2=agents[1],
        lineage=Lineage(
            uid=uid,
            generation=generation,
            parents=(parent_a.lineage.uid, parent_b.lineage.uid),
            origin=Origin.CROSSOVER,
        ),
    )


def mutate(
    rng: np.random.Generator,
    library: ControllerLibrary,
    uid: str = "",
    generation: int = 0,
) -> Dyad:
    """De novo dyad: mutation draws from the initialization distribution."""
    return Dyad(
        agent1=make_agent(rng, library),
        agent2=make_agent(rng, library),
        lineage=Lineage(uid=uid, generation=generation, origin=Origin.MUTATION),
    )


def dominates(a, b) -> bool:
    """Minimization dominance: <= everywhere and < somewhere."""
    not_worse = all(x <= y for x, y in zip(a, b))
    return not_worse and any(x < y for x, y in zip(a, b))


def non_dominated_sort(vectors) -> list[list[int]]:
    """Indices grouped into fronts, best first; ascending index within a front."""
    n = len(vectors)
    if n == 0:
        return []
    arr = np.asarray(vectors, dtype=float)
    le = (arr[:, None, :] <= arr[None, :, :]).all(axis=2)
    lt = (arr[:, None, :] < arr[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    n_dominators = dom.sum(axis=0)
    fronts = []
    remaining = n
    assigned = np.zeros(n, dtype=bool)
    counts = n_dominators.copy()
    while remaining:
        current = np.flatnonzero((counts == 0) & ~assigned)
        if len(current) == 0:
            raise EvolutionError("dominance cycle; non-finite objectives?")
        fronts.append([int(i) for i in current])
        assigned[current] = True
        remaining -= len(current)
        counts = counts - dom[current].sum(axis=0)
    return fronts


def crowding_distance(front_vectors) -> list[float]:
    """NSGA-II crowding: boundary members get +inf, interiors the sum of
    normalized neighbor gaps. Objectives with zero range are skipped, so a
    front of duplicates (size > 2) gets finite, equal distances."""
    n = len(front_vectors)
    if n == 0:
        raise EvolutionError("crowding_distance needs a nonempty front")
    if n <= 2:
        return [math.inf] * n
    arr = np.asarray(front_vectors, dtype=float)
    dist = np.zeros(n)
    for j in range(arr.shape[1]):
        col = arr[:, j]
        span = float(col.max() - col.min())
        if span == 0.0:
            continue
        order = np.argsort(col, kind="stable")
        dist[order[0]] = math.inf
        dist[order[-1]] = math.inf
        interior = order[1:-1]
        gaps = (col[order[2:]] - col[order[:-2]]) / span
        for idx, g in zip(interior, gaps):
            if not math.isinf(dist[idx]):
                dist[idx] += float(g)
    return [float(d) for d in dist]


def _rank_population(scored: list[ScoredDyad]) -> list[list[int]]:
    """Assign rank and crowding in place; returns the fronts."""
    fronts = non_dominated_sort([s.objectives for s in scored])
    for rank, front in enumerate(fronts):
        dists = crowding_distance([scored[i].objectives for i in front])
        for idx, d in zip(front, dists):
            scored[idx].rank = rank
            scored[idx].crowding = d
    return fronts


def cull(scored: list[ScoredDyad], mu: int) -> list[ScoredDyad]:
    """Keep mu members by ascending front, breaking the last front by
    descending crowding with stable input order."""
    if len(scored) < mu:
        raise EvolutionError(f"cannot cull {len(scored)} members to {mu}")
    fronts = _rank_population(scored)
    selected: list[ScoredDyad] = []
    for front in fronts:
        if len(selected) + len(front) <= mu:
            selected.extend(scored[i] for i in front)
        else:
            room = mu - len(selected)
            by_crowding = sorted(
                range(len(front)), key=lambda k: (-scored[front[k]].crowding, k)
            )
            selected.extend(scored[front[k]] for k in by_crowding[:room])
        if len(selected) == mu:
            break
    return selected


def _tournament_pick(pop: list[ScoredDyad], rng: np.random.Generator) -> Dyad:
    i = int(rng.integers(0, len(pop)))
    j = int(rng.integers(0, len(pop)))
    a, b = pop[i], pop[j]
    if a.rank is None or b.rank is None:
        return a.dyad
    if a.rank != b.rank:
        return a.dyad if a.rank < b.rank else b.dyad
    if a.crowding != b.crowding:
        return a.dyad if a.crowding > b.crowding else b.dyad
    return a.dyad


def make_offspring(
    pop: list[ScoredDyad],
    seed: int,
    generation: int,
    n_offspring: int,
    mutation_rate: float,
    library: ControllerLibrary,
) -> list[Dyad]:
    """n_offspring new dyads, each from its own derived RNG stream."""
    offspring = []
    for j in range(n_offspring):
        rng = stream(seed, _TAG_OFFSPRING, generation, j)
        uid = f"s{seed}-g{generation}-o{j}"
        if float(rng.random()) < mutation_rate:
            child = mutate(rng, library, uid=uid, generation=generation + 1)
        else:
            pa = _tournament_pick(pop, rng)
            pb = _tournament_pick(pop, rng)
            child = crossover(pa, pb, rng, uid=uid, generation=generation + 1)
        offspring.append(child)
    return offspring


@dataclass(frozen=True)
class HofEntry:
    dyad: Dyad
    objectives: ObjectiveVector
    generation: int


@dataclass
class HallOfFame:
    """Run-spanning archive of mutually non-dominated, genome-distinct dyads."""

    entries: list[HofEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def merge(self, front: list[ScoredDyad], generation: int) -> None:
        seen = {e.dyad.genome_key() for e in self.entries}
        merged = list(self.entries)
        for s in front:
            key = s.dyad.genome_key()
            if key in seen:
                continue
            seen.add(key)
            merged.append(HofEntry(dyad=s.dyad, objectives=s.objectives, generation=generation))
        vectors = [e.objectives for e in merged]
        keep = []
        for i, e in enumerate(merged):
            if not any(j != i and dominates(vectors[j], vectors[i]) for j in range(len(merged))):
                keep.append(e)
        self.entries = keep

    def is_mutually_non_dominated(self) -> bool:
        vecs = [e.objectives for e in self.entries]
        return not any(
            dominates(vecs[j], vecs[i])
            for i in range(len(vecs))
            for j in range(len(vecs))
            if i != j
        )

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "dyad": dyad_to_dict(e.dyad),
                    "objectives": list(e.objectives),
                    "generation": e.generation,
                }
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, d: dict, library: ControllerLibrary) -> "HallOfFame":
        return cls(
            entries=[
                HofEntry(
                    dyad=dyad_from_dict(e["dyad"], library),
                    objectives=ObjectiveVector(*e["objectives"]),
                    generation=e["generation"],
                )
                for e in d["entries"]
            ]
        )


def evaluate_population(
    dyads: list[Dyad],
    traj: ReferenceTrajectory,
    params: EggParams,
    dt: float,
    slope: float,
    threads: int = 1,
) -> list[ObjectiveVector]:
    """Score each dyad on one trial; order-stable and thread-count-invariant."""
    init = InitSpec.resting(params)

    def one(dyad: Dyad) -> ObjectiveVector:
        return score(simulate_trial(dyad, traj, params, dt, init=init), params, slope)

    if threads <= 1:
        return [one(d) for d in dyads]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, dyads))


@dataclass
class GenerationStats:
    generation: int
    trajectory_id: str
    front0_size: int
    hof_size: int


@dataclass
class EvolutionResult:
    hall_of_fame: HallOfFame
    population: list[ScoredDyad]
    log_rows: list[tuple]
    stats: list[GenerationStats]
    library: ControllerLibrary
    trajectories: list[ReferenceTrajectory]
    heldout: ReferenceTrajectory


def _float_cell(x: float) -> str:
    return repr(float(x))


def write_scores_csv(path, log_rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORES_CSV_HEADER)
        for uid, gen, obj in log_rows:
            w.writerow((uid, gen, *[_float_cell(v) for v in obj]))


def _population_to_dict(pop: list[ScoredDyad], generation: int) -> dict:
    return {
        "generation": generation,
        "members": [
            {
                "dyad": dyad_to_dict(s.dyad),
                "objectives": list(s.objectives) if s.objectives is not None else None,
                "rank": s.rank,
                "crowding": s.crowding,
            }
            for s in pop
        ],
    }


def _population_from_dict(d: dict, library: ControllerLibrary) -> list[ScoredDyad]:
    pop = []
    for m in d["members"]:
        pop.append(
            ScoredDyad(
                dyad=dyad_from_dict(m["dyad"], library),
                objectives=ObjectiveVector(*m["objectives"]) if m["objectives"] else None,
                rank=m["rank"],
                crowding=m["crowding"],
            )
        )
    return pop


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))


def _checkpoint(out_dir: Path, generation: int, pop, hof_doc, log_rows) -> None:
    _write_json(out_dir / f"gen_{generation:04d}_population.json", _population_to_dict(pop, generation))
    _write_json(out_dir / "hof.json", hof_doc)
    write_scores_csv(out_dir / "scores.csv", log_rows)


def latest_checkpoint(out_dir) -> int | None:
    """Highest generation with a population checkpoint, or None."""
    out_dir = Path(out_dir)
    gens = []
    for p in out_dir.glob("gen_*_population.json"):
        m = re.match(r"gen_(\d+)_population\.json$", p.name)
        if m:
            gens.append(int(m.group(1)))
    return max(gens) if gens else None


def run_evolution(
    config,
    seed: int | None = None,
    out_dir=None,
    threads: int = 1,
    progress=None,
    resume: bool = False,
) -> EvolutionResult:
    """Run the configured number of generations; deterministic in (config, seed).

    With out_dir set, every generation rewrites hof.json, scores.csv, and a
    population checkpoint, so an interrupted run resumes exactly where it
    stopped (per-generation RNG streams do not depend on loop history).
    """
    config.validate()
    if seed is None:
        seed = config.seed
    mu = config.population_size
    params = config.egg_params()
    library = default_library(params.f_opt)
    trajectories, heldout = make_library(seed, config.trajectory_config(), config.trajectory_count)
    if config.validate_controllers:
        validate_library_sufficiency(library, trajectories, params, config.dt)
    rotation = stream(seed, _TAG_ROTATION).permutation(len(trajectories))

    out_path: Path | None = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    hof = HallOfFame()
    log_rows: list[tuple] = []
    stats: list[GenerationStats] = []
    start_gen = 0
    pop: list[ScoredDyad]

    if resume and out_path is not None and (last := latest_checkpoint(out_path)) is not None:
        doc = json.loads((out_path / f"gen_{last:04d}_population.json").read_text())
        pop = _population_from_dict(doc, library)
        hof_doc = json.loads((out_path / "hof.json").read_text())
        hof = HallOfFame.from_dict(hof_doc, library)
        with open(out_path / "scores.csv", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                log_rows.append((row[0], int(row[1]), ObjectiveVector(*map(float, row[2:]))))
        start_gen = last + 1
    else:
        pop = [ScoredDyad(dyad=d) for d in init_population(seed, mu, library)]

    def hof_doc() -> dict:
        return {
            "seed": seed,
            "config": config.to_dict(),
            "library": library.to_dict(),
            **hof.to_dict(),
        }

    for g in range(start_gen, config.generations):
        offspring = make_offspring(pop, seed, g, mu, config.mutation_rate, library)
        traj = trajectories[int(rotation[g % len(trajectories)])]
        candidates = [s.dyad for s in pop] + offspring
        objs = evaluate_population(candidates, traj, params, config.dt, config.stabilization_slope, threads)
        scored = [ScoredDyad(dyad=d, objectives=o) for d, o in zip(candidates, objs)]
        for s in scored:
            log_rows.append((s.dyad.lineage.uid, g, s.objectives))
        selected = cull(scored, mu)
        front0 = [s for s in scored if s.rank == 0]
        hof.merge(front0, g)
        stats.append(
            GenerationStats(
                generation=g,
                trajectory_id=traj.id,
                front0_size=len(front0),
                hof_size=len(hof),
            )
        )
        if out_path is not None:
            _checkpoint(out_path, g, selected, hof_doc(), log_rows)
        if progress is not None:
            progress(stats[-1])
        pop = selected

    return EvolutionResult(
        hall_of_fame=hof,
        population=pop,
        log_rows=log_rows,
        stats=stats,
        library=library,
        trajectories=trajectories,
        heldout=heldout,
    )


