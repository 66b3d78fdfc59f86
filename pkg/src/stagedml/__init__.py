"""Staged, locally-optimizing pipeline search for tabular classification.

The engine searches over pipelines of the shape

    scaler -> feature projection -> (optionally meta-wrapped) learner

by running a fixed sequence of stages over a shared, deduplicated
candidate pool. Each stage optimizes one slot of the pipeline using the
scores of a Monte-Carlo cross-validation evaluator. A benchmark harness
reproduces the paired-split comparison protocol (trimmed means, Wilcoxon
signed-rank verdicts, tournament and synergy tables).
"""

__version__ = "0.1.0"

from stagedml.data import Dataset, FeatureSet, SplitSpec, load_dataset, project, split
from stagedml.evaluation import Candidate, EvalConfig, Evaluator, Score, candidate_key
from stagedml.orchestrator import RunReport, SchemeConfig, run, scheme_presets

__all__ = [
    "Candidate",
    "Dataset",
    "EvalConfig",
    "Evaluator",
    "FeatureSet",
    "RunReport",
    "SchemeConfig",
    "Score",
    "SplitSpec",
    "candidate_key",
    "load_dataset",
    "project",
    "run",
    "scheme_presets",
    "split",
]
