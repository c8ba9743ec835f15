"""Foreign-key structure generation with a type-constrained block model."""
from .blockmodel import BlockPartition, SBMGraph, description_length, sbm_graph
from .generate import StructureConfig, StructureResult, generate_structure, run_structure
from .inference import InferenceConfig, infer_partition
from .sampling import (BlockEdgeMatrix, RelationDegrees, RewiringError, rewire_to_simple,
                       sample_edge_set)

__all__ = [
    "BlockEdgeMatrix", "BlockPartition", "InferenceConfig", "RelationDegrees", "RewiringError",
    "SBMGraph", "StructureConfig", "StructureResult", "description_length", "generate_structure",
    "infer_partition", "rewire_to_simple", "run_structure", "sample_edge_set", "sbm_graph",
]
