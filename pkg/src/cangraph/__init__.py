"""Graph-feature naive Bayes intrusion detection for CAN bus traffic."""

__version__ = "0.1.0"

from .bayes import CountNaiveBayes, GaussianNaiveBayes, load_model, save_model
from .can_log import FrameLog, LabeledFrame, parse_candump, parse_dataset_csv, write_dataset_csv
from .evaluation import SplitSpec, evaluate
from .featurize import FEATURE_NAMES, FeatureMatrix, GraphFeaturizer, featurize_log
from .graphing import WindowSpec, build_graph, window_stream
from .ranking import PageRankOptions, pagerank, pr_summary
from .traffic_synth import AttackSpec, synthesize_corpus

__all__ = [
    "AttackSpec",
    "CountNaiveBayes",
    "FEATURE_NAMES",
    "FeatureMatrix",
    "FrameLog",
    "GaussianNaiveBayes",
    "GraphFeaturizer",
    "LabeledFrame",
    "PageRankOptions",
    "SplitSpec",
    "WindowSpec",
    "build_graph",
    "evaluate",
    "featurize_log",
    "load_model",
    "pagerank",
    "parse_candump",
    "parse_dataset_csv",
    "pr_summary",
    "save_model",
    "synthesize_corpus",
    "window_stream",
    "write_dataset_csv",
]
