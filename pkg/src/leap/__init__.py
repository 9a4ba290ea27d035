"""Edge property prediction by learned aggregation of bounded-length paths."""

from .aggregators import KINDS, AvgPool, DenseMax, EdgeConv, SeqOfSeq, VectorizedPathSet, make_aggregator
from .baselines import adamic_adar, katz, pagerank, reciprocal, score_pairs
from .config import ConfigError, ExperimentConfig, parse_config
from .datasets import DatasetNotFound, load_dataset
from .graph import (
    Graph,
    GraphFormatError,
    LabeledPairSet,
    SplitResult,
    load_edge_list,
    normalize_weights,
    sample_negative_pairs,
    split_edges,
)
from .metrics import ScoredPairs, auc, pcc, rmse
from .model import LeapModel, forward, load_model, load_pretrained_embeddings, predict_batch, save_model, train
from .paths import AssemblerConfig, PathSet, assemble, enumerate_paths, order_paths

__version__ = "0.1.0"
