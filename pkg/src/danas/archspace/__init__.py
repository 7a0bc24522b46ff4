"""Cell-based architecture search space: relaxed supernet and genotypes."""

from .modules import (NONE_OP, OP_SETS, ForwardCtx, Module, build_candidate)
from .supernet import (ArchParams, Cell, CellTopology, MixedOp, Supernet,
                       build_supernet, mixed_op_forward)
from .genotype import Genotype, discretize, edge_scores
from .discrete import DiscreteCell, DiscreteNetwork, param_count

__all__ = [
    "NONE_OP", "OP_SETS", "ForwardCtx", "Module", "build_candidate",
    "ArchParams", "Cell", "CellTopology", "MixedOp", "Supernet",
    "build_supernet", "mixed_op_forward",
    "Genotype", "discretize", "edge_scores",
    "DiscreteCell", "DiscreteNetwork", "param_count",
]
