"""RNN-Descent graph indexes for approximate nearest neighbour search."""

from .builder import BuildParams, add_reverse_edges, build, rng_strategy, update_neighbors
from .dataset import (
    GroundTruth,
    VectorStore,
    brute_force_gt,
    load_fvecs,
    load_ivecs,
    synth_clustered,
    synth_uniform,
    write_fvecs,
    write_ivecs,
)
from .errors import DataError, ParameterError
from .evaluation import EvalReport, EvalRow, mark_pareto, recall_at_1, report_aod_table, sweep_build, sweep_search
from .graph import AdjacencyGraph, degree_stats, deserialize, random_init, serialize
from .metric import l2_sq
from .nndescent import build_nndescent
from .search import FixedEntry, RandomEntry, SearchIndex, SearchParams, batch_search, search

__version__ = "0.1.0"
