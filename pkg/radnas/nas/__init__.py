"""One-shot architecture search: space, genes, cost model, fitness and evolution."""

from .space import (
    ArchitectureGene,
    ChoiceBlockSpec,
    SearchSpace,
    build_search_space,
    crossover,
    load_gene,
    mutate,
    sample_uniform,
    save_gene,
)
from .cost import ConvShape, LayerPlan, adapter_overhead, count_params, estimate_flops, layer_plan, pooled_flops
from .search_store import SearchStore
from .fitness import RECALIBRATION_BATCHES, evaluate_fitness, recalibrate_bn
from .evolution import (
    Candidate,
    CostConstraint,
    SearchConfig,
    SearchResult,
    evolve_search,
    make_cost_fn,
    random_baseline,
    write_search_log,
)

__all__ = [
    "RECALIBRATION_BATCHES",
    "ArchitectureGene",
    "Candidate",
    "ChoiceBlockSpec",
    "ConvShape",
    "CostConstraint",
    "LayerPlan",
    "SearchConfig",
    "SearchResult",
    "SearchSpace",
    "SearchStore",
    "adapter_overhead",
    "build_search_space",
    "count_params",
    "crossover",
    "estimate_flops",
    "evaluate_fitness",
    "evolve_search",
    "layer_plan",
    "load_gene",
    "make_cost_fn",
    "mutate",
    "pooled_flops",
    "random_baseline",
    "recalibrate_bn",
    "sample_uniform",
    "save_gene",
    "write_search_log",
]
