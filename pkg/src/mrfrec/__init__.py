"""Recommendation over bipartite co-occurrence Markov random fields."""

from .corpus import (
    Corpus,
    CorpusFormatError,
    DropSummary,
    Entity,
    EntityType,
    Instance,
    Modifier,
    Record,
    assignment_value,
    filter_test_instances,
    gold_label,
    make_instances,
    parse_corpus,
    read_corpus,
    split_corpus,
    write_corpus,
)
from .energy import EnergyKind, EnergyModel, HyperParams, init_model, load_checkpoint, save_model
from .estimator import BaselineRecommender, MRFRecommender, RandomRecommender, make_recommender
from .graph import Bigraph, Emkn, TaskKind, build_emkn, degree_stats, extract_bigraph
from .inference import RankedResult, conditional_prob, rank_candidates
from .learning import TrainReport, sgd_step, train
from .metrics import MetricReport, aggregate, average_precision, precision_at_k, recall_at_k
from .synth import GroundTruth, SynthConfig, default_config, generate, oracle_rank

__version__ = "0.1.0"

__all__ = [
    "BaselineRecommender",
    "Bigraph",
    "Corpus",
    "CorpusFormatError",
    "DropSummary",
    "Emkn",
    "EnergyKind",
    "EnergyModel",
    "Entity",
    "EntityType",
    "GroundTruth",
    "HyperParams",
    "Instance",
    "MRFRecommender",
    "MetricReport",
    "Modifier",
    "RandomRecommender",
    "RankedResult",
    "Record",
    "SynthConfig",
    "TaskKind",
    "TrainReport",
    "aggregate",
    "assignment_value",
    "average_precision",
    "build_emkn",
    "conditional_prob",
    "default_config",
    "degree_stats",
    "extract_bigraph",
    "filter_test_instances",
    "generate",
    "gold_label",
    "init_model",
    "load_checkpoint",
    "make_instances",
    "make_recommender",
    "oracle_rank",
    "parse_corpus",
    "precision_at_k",
    "rank_candidates",
    "read_corpus",
    "recall_at_k",
    "save_model",
    "sgd_step",
    "split_corpus",
    "train",
    "write_corpus",
]
