"""Deep hyper-network embedding for heterogeneous 3-uniform hypergraphs."""

from .errors import DhneError
from .evaluation import EvalReport, link_prediction_eval, reconstruction_eval
from .hypergraph import Hypergraph, SparseAdjacency, build_adjacency, read_triples
from .model import DhneDims, DhneParams, EmbeddingTable, embed_all, embed_out_of_sample, score_tuple
from .training import TrainConfig, TrainResult, load_snapshot, save_snapshot, train

__version__ = "0.1.0"

__all__ = [
    "DhneDims",
    "DhneError",
    "DhneParams",
    "EmbeddingTable",
    "EvalReport",
    "Hypergraph",
    "SparseAdjacency",
    "TrainConfig",
    "TrainResult",
    "build_adjacency",
    "embed_all",
    "embed_out_of_sample",
    "link_prediction_eval",
    "load_snapshot",
    "read_triples",
    "reconstruction_eval",
    "save_snapshot",
    "score_tuple",
    "train",
]
