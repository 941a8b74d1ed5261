"""Belief propagation with loop-series Monte Carlo corrections for the
partition function of pairwise binary Markov random fields."""

__version__ = "0.1.0"

from .annealing import (AnnealSchedule, EstimateReport, ais_gibbs_baseline, combine_bp_mcmc,
                        estimate_z2loop, estimate_zloop, theorem2_params)
from .bp import BPFixedPoint, edge_weight_magnitudes, run_bp
from .errors import (DegenerateMarginal, LoopMCError, ModelFormatError, NegativeSeries,
                     SignCollapse, SizeGuardError)
from .loopchain import MoveSet, build_moveset, decompose_loop, sample_generalized_loops
from .loops import (EdgeSubgraph, LoopClass, classify_subgraph, enumerate_loops, loop_weight,
                    ls_oracle)
from .model import (PairwiseModel, VertexMap, degree3_transform, exact_partition,
                    gen_glassy_ising, gen_hardcore)
from .worm import WormParams, default_worm_params, sample_2regular, worm_step

__all__ = [
    "AnnealSchedule", "BPFixedPoint", "DegenerateMarginal", "EdgeSubgraph", "EstimateReport",
    "LoopClass", "LoopMCError", "ModelFormatError", "MoveSet", "NegativeSeries", "PairwiseModel",
    "SignCollapse", "SizeGuardError", "VertexMap", "WormParams", "ais_gibbs_baseline",
    "build_moveset", "classify_subgraph", "combine_bp_mcmc", "decompose_loop",
    "default_worm_params", "degree3_transform", "edge_weight_magnitudes", "enumerate_loops",
    "estimate_z2loop", "estimate_zloop", "exact_partition", "gen_glassy_ising", "gen_hardcore",
    "loop_weight", "ls_oracle", "run_bp", "sample_2regular", "sample_generalized_loops",
    "theorem2_params", "worm_step",
]
