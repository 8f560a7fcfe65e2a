from .base import Problem, blocks_of, linear_trace_problem, zero_problem
from .biquadratic import BiquadTensor, biquad_make, biquad_problem
from .cryoem import (
    CryoEmInstance,
    complete_rotation,
    cryoem_generate,
    cryoem_problem,
    eigs_init,
    load_instance,
    mirror_blocks,
    procrustes_mse,
    recovery_mse,
    refine_orientations,
    save_instance,
    smoothing_floor,
    truth_point,
)
from .polynomial import hp1_problem
from .stability import (
    Graph,
    cycle_graph,
    complete_graph,
    empty_graph,
    graph_generators,
    hamming_graph,
    parse_dimacs,
    petersen_graph,
    stability_estimate,
    stability_problem,
    to_dimacs,
)

__all__ = [
    "BiquadTensor",
    "CryoEmInstance",
    "Graph",
    "Problem",
    "biquad_make",
    "biquad_problem",
    "blocks_of",
    "complete_graph",
    "complete_rotation",
    "cryoem_generate",
    "cryoem_problem",
    "cycle_graph",
    "eigs_init",
    "empty_graph",
    "graph_generators",
    "hamming_graph",
    "hp1_problem",
    "linear_trace_problem",
    "load_instance",
    "mirror_blocks",
    "parse_dimacs",
    "petersen_graph",
    "procrustes_mse",
    "recovery_mse",
    "refine_orientations",
    "save_instance",
    "smoothing_floor",
    "stability_estimate",
    "stability_problem",
    "to_dimacs",
    "truth_point",
    "zero_problem",
]
