"""
Evolutionary search over a trained supernet.

Per iteration: evaluate new genes (cached by gene id), rank by fitness desc,
then params asc, then first-seen order, keep the top k, and refill the
population to P with equal shares of crossover and mutation offspring that
satisfy the cost constraint.
"""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from radnas.detector.layout import ModelConfig
from radnas.exceptions import SearchError
from radnas.nas.cost import count_params, estimate_flops
from radnas.nas.search_store import SearchStore
from radnas.nas.space import ArchitectureGene, SearchSpace, crossover, mutate, sample_uniform

logger = logging.getLogger(__name__)

MAX_OFFSPRING_TRIES = 100
SEARCH_LOG_COLUMNS = ("iteration", "gene_id", "fitness", "params", "flops")

FitnessFn = Callable[[ArchitectureGene], float]
CostFn = Callable[[ArchitectureGene], Tuple[int, int]]


class SearchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    population: int = Field(50, ge=2)
    iterations: int = Field(20, ge=1)
    top_k: int = Field(15, ge=1)
    mutation_prob: float = Field(0.1, ge=0.0, le=1.0)
    max_params: Optional[int] = Field(None, ge=1)
    max_flops: Optional[int] = Field(None, ge=1)
    seed: int = 0
    reduced_space: bool = False
    recalib_batches: int = Field(20, ge=0)
    num_workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _top_k_fits(self):
        if self.top_k > self.population:
            raise ValueError(f"top_k ({self.top_k}) must not exceed population ({self.population})")
        return self

    def constraint(self) -> "CostConstraint":
        return CostConstraint(max_params=self.max_params, max_flops=self.max_flops)


@dataclass(frozen=True)
class CostConstraint:
    max_params: Optional[int] = None
    max_flops: Optional[int] = None

    def __call__(self, params: int, flops: int) -> bool:
        if self.max_params is not None and params > self.max_params:
            return False
        if self.max_flops is not None and flops > self.max_flops:
            return False
        return True

    def describe(self) -> str:
        parts = []
        if self.max_params is not None:
            parts.append(f"params <= {self.max_params}")
        if self.max_flops is not None:
            parts.append(f"flops <= {self.max_flops}")
        return " and ".join(parts) or "unconstrained"


@dataclass
class Candidate:
    gene: ArchitectureGene
    params: int
    flops: int
    order: int
    iteration: int = 0
    fitness: Optional[float] = None

    def rank_key(self):
        return (-self.fitness, self.params, self.order)


@dataclass
class SearchResult:
    ranked: List[Candidate]
    best_history: List[float] = field(default_factory=list)
    log_rows: List[dict] = field(default_factory=list)
    cache_hits: int = 0

    @property
    def best(self) -> Candidate:
        return self.ranked[0]


def make_cost_fn(space: SearchSpace, model_config: ModelConfig, input_dims: Optional[Tuple[int, int]] = None) -> CostFn:
    def cost(gene: ArchitectureGene) -> Tuple[int, int]:
        return count_params(space, gene, model_config), estimate_flops(space, gene, model_config, input_dims)

    return cost


class _Evaluator:
    """Fitness with a per-run cache and an optional persistent store."""

    def __init__(self, fitness_fn: FitnessFn, cost_fn: CostFn, store: Optional[SearchStore], num_workers: int):
        self.fitness_fn = fitness_fn
        self.cost_fn = cost_fn
        self.store = store
        self.num_workers = num_workers
        self.candidates: Dict[ArchitectureGene, Candidate] = {}
        self.costs: Dict[ArchitectureGene, Tuple[int, int]] = {}
        self.rows: List[dict] = []
        self.cache_hits = 0

    def cost(self, gene: ArchitectureGene) -> Tuple[int, int]:
        if gene not in self.costs:
            self.costs[gene] = self.cost_fn(gene)
        return self.costs[gene]

    def _compute(self, gene: ArchitectureGene) -> Tuple[float, bool]:
        if self.store is not None:
            stored = self.store.get_fitness(gene.gene_id)
            if stored is not None:
                return stored, True
        return float(self.fitness_fn(gene)), False

    def evaluate(self, genes: List[ArchitectureGene], iteration: int) -> None:
        fresh = [g for g in dict.fromkeys(genes) if g not in self.candidates]
        self.cache_hits += len(genes) - len(fresh)
        if self.num_workers > 1 and len(fresh) > 1:
            with ThreadPoolExecutor(max_workers=self.num_workers) as pool:
                results = list(pool.map(self._compute, fresh))
        else:
            results = [self._compute(g) for g in fresh]
        for gene, (fitness, stored) in zip(fresh, results):
            params, flops = self.cost(gene)
            candidate = Candidate(gene, params, flops, order=len(self.candidates), iteration=iteration, fitness=fitness)
            self.candidates[gene] = candidate
            self.cache_hits += int(stored)
            self.rows.append({"iteration": iteration, "gene_id": gene.gene_id, "fitness": fitness, "params": params, "flops": flops})
            if self.store is not None and not stored:
                self.store.save_candidate(gene.gene_id, gene.space_hash, gene.choices, fitness, params, flops, iteration)


def _initial_population(space: SearchSpace, config: SearchConfig, constraint, evaluator: _Evaluator, rng) -> List[ArchitectureGene]:
    feasible: List[ArchitectureGene] = []
    for _ in range(10 * config.population):
        gene = sample_uniform(space, rng)
        if constraint(*evaluator.cost(gene)):
            feasible.append(gene)
    if len(feasible) < config.population:
        raise SearchError(
            f"only {len(feasible)} of {10 * config.population} sampled genes satisfy the constraint "
            f"({constraint.describe()}); need {config.population}"
        )
    unique = list(dict.fromkeys(feasible))
    duplicates = [g for i, g in enumerate(feasible) if g in feasible[:i]]
    return (unique + duplicates)[: config.population]


def _offspring(kind: str, parents: List[ArchitectureGene], space: SearchSpace, config: SearchConfig, rng) -> ArchitectureGene:
    if kind == "crossover":
        a = parents[int(rng.integers(len(parents)))]
        b = parents[int(rng.integers(len(parents)))]
        return crossover(a, b, rng)
    return mutate(space, parents[int(rng.integers(len(parents)))], config.mutation_prob, rng)


def _refill(parents, space, config, constraint, evaluator: _Evaluator, rng) -> List[ArchitectureGene]:
    population = list(parents)
    taken = set(population)
    need = config.population - len(population)
    kinds = ["crossover"] * (need // 2) + ["mutation"] * (need - need // 2)
    for kind in kinds:
        fallback = None
        chosen = None
        for _ in range(MAX_OFFSPRING_TRIES):
            child = _offspring(kind, parents, space, config, rng)
            if not constraint(*evaluator.cost(child)):
                continue
            if child not in taken and child not in evaluator.candidates:
                chosen = child
                break
            fallback = fallback or child
        if chosen is None:
            # operators keep producing known genes: explore with a fresh uniform sample
            for _ in range(MAX_OFFSPRING_TRIES):
                child = sample_uniform(space, rng)
                if constraint(*evaluator.cost(child)) and child not in taken and child not in evaluator.candidates:
                    chosen = child
                    break
        if chosen is None:
            chosen = fallback or parents[int(rng.integers(len(parents)))]
        population.append(chosen)
        taken.add(chosen)
    return population


def evolve_search(
    space: SearchSpace,
    config: SearchConfig,
    fitness_fn: FitnessFn,
    cost_fn: CostFn,
    constraint: Optional[Callable[[int, int], bool]] = None,
    store: Optional[SearchStore] = None,
) -> SearchResult:
    constraint = constraint or config.constraint()
    if not hasattr(constraint, "describe"):
        constraint = _Described(constraint)
    rng = np.random.default_rng(config.seed)
    evaluator = _Evaluator(fitness_fn, cost_fn, store, config.num_workers)
    population = _initial_population(space, config, constraint, evaluator, rng)
    best_history: List[float] = []
    ranked: List[Candidate] = []
    for iteration in range(config.iterations):
        evaluator.evaluate(population, iteration)
        members = [evaluator.candidates[g] for g in dict.fromkeys(population)]
        ranked = sorted(members, key=Candidate.rank_key)
        top = ranked[: config.top_k]
        best_history.append(top[0].fitness)
        logger.info(
            "[SEARCH] iteration %d/%d best %.4f (params %d) population %d evaluated %d cache hits %d",
            iteration + 1, config.iterations, top[0].fitness, top[0].params, len(population), len(evaluator.candidates), evaluator.cache_hits,
        )
        if iteration + 1 < config.iterations:
            population = _refill([c.gene for c in top], space, config, constraint, evaluator, rng)
            if len(population) != config.population:
                raise SearchError(f"refill produced {len(population)} genes instead of {config.population}")
    return SearchResult(ranked=ranked, best_history=best_history, log_rows=evaluator.rows, cache_hits=evaluator.cache_hits)


class _Described:
    def __init__(self, predicate):
        self.predicate = predicate

    def __call__(self, params: int, flops: int) -> bool:
        return bool(self.predicate(params, flops))

    def describe(self) -> str:
        return getattr(self.predicate, "__name__", "custom constraint")


def random_baseline(
    space: SearchSpace,
    n: int,
    fitness_fn: FitnessFn,
    cost_fn: CostFn,
    seed: int,
    constraint: Optional[Callable[[int, int], bool]] = None,
) -> List[Candidate]:
    """`n` uniformly sampled feasible subnets, evaluated in sampling order."""
    rng = np.random.default_rng(seed)
    constraint = constraint or CostConstraint()
    out: List[Candidate] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 10 * max(n, 1) * MAX_OFFSPRING_TRIES:
            raise SearchError(f"could not sample {n} feasible genes")
        gene = sample_uniform(space, rng)
        params, flops = cost_fn(gene)
        if constraint(params, flops):
            out.append(Candidate(gene, params, flops, order=len(out), fitness=float(fitness_fn(gene))))
    return out


def write_search_log(path: Union[str, Path], rows: List[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SEARCH_LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, "fitness": f"{row['fitness']:.6f}"})
    return path
