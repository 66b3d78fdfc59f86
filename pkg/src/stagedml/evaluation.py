"""Candidate pipelines and their Monte-Carlo cross-validation scores.

A candidate is the tuple (scaler, feature set, learner, params), with an
optional homogeneous meta-learner wrapped around the learner. Blank
slots are real absent values (``None``), never sentinel strings.

Scoring runs ``repeats`` stratified splits of the optimization data.
The split seeds derive from (seed, repeat index) only, so every
candidate in a run is scored on the *same* folds (paired comparisons);
fit seeds additionally mix in the candidate key, so stochastic learners
stay decorrelated without depending on evaluation order. Scores are
cached by (candidate key, dataset hash, config); lower is better.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from stagedml.components.registry import Registry
from stagedml.data import Dataset, FeatureSet, SplitSpec, project, split_indices
from stagedml.rng import derive_seed
from stagedml.timing import Deadline, DeadlineExceeded

STATUS_OK = "ok"
STATUS_TIMEOUT = "failed_timeout"
STATUS_ERROR = "failed_error"


@dataclass(frozen=True)
class Candidate:
    """Encoding of one pipeline: (scaler, features, learner, params)."""

    learner: str
    params: Mapping | None = None  # None means registry defaults
    scaler: str | None = None
    features: FeatureSet | None = None
    meta: str | None = None  # meta-learner wrapped around `learner`
    meta_params: Mapping | None = None

    def with_features(self, features: FeatureSet | None) -> "Candidate":
        return replace(self, features=features)

    def with_meta(self, meta: str, meta_params: Mapping | None = None) -> "Candidate":
        return replace(self, meta=meta, meta_params=meta_params)

    def with_params(self, params: Mapping) -> "Candidate":
        return replace(self, params=params)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _format_params(params: Mapping | None) -> str:
    if params is None:
        return "default"
    return ",".join(f"{k}={_format_value(params[k])}" for k in sorted(params))


def candidate_key(c: Candidate) -> str:
    """Canonical string form, stable across runs.

    Grammar::

        key      := scaler "|" features "|" learner "|" params
        scaler   := "-" | scaler_id
        features := "-" | index ("," index)*          # ascending
        learner  := base_id | meta_id "{" params "}" "(" base_id ")"
        params   := "default" | name "=" value (","...)  # sorted names

    Floats are rendered with ``repr`` (shortest round-trip form), bools
    as ``true``/``false``.
    """
    scaler = c.scaler if c.scaler is not None else "-"
    features = ",".join(str(i) for i in c.features) if c.features is not None else "-"
    if c.meta is not None:
        learner = f"{c.meta}{{{_format_params(c.meta_params)}}}({c.learner})"
    else:
        learner = c.learner
    return f"{scaler}|{features}|{learner}|{_format_params(c.params)}"


def candidate_to_dict(c: Candidate) -> dict:
    return {
        "scaler": c.scaler,
        "features": list(c.features) if c.features is not None else None,
        "learner": c.learner,
        "params": dict(c.params) if c.params is not None else None,
        "meta": c.meta,
        "meta_params": dict(c.meta_params) if c.meta_params is not None else None,
    }


def candidate_from_dict(d: Mapping) -> Candidate:
    return Candidate(
        learner=d["learner"],
        params=d.get("params"),
        scaler=d.get("scaler"),
        features=FeatureSet(d["features"]) if d.get("features") else None,
        meta=d.get("meta"),
        meta_params=d.get("meta_params"),
    )


@dataclass(frozen=True)
class EvalConfig:
    repeats: int = 5
    train_fraction: float = 0.7
    metric: str = "error_rate"
    seed: int = 0
    per_eval_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.metric != "error_rate":
            raise ValueError(f"unsupported metric {self.metric!r}; only error_rate ships")

    def key(self) -> str:
        return (
            f"r={self.repeats};f={self.train_fraction!r};m={self.metric};"
            f"s={self.seed};t={self.per_eval_timeout!r}"
        )


@dataclass(frozen=True)
class Score:
    """MCCV result; ``mean`` is None unless status is ok."""

    mean: float | None
    std: float | None
    per_fold: tuple[float, ...]
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def error_rate(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction/label length mismatch")
    if y_true.size == 0:
        raise ValueError("error_rate of empty vectors is undefined")
    return float(np.mean(y_true != y_pred))


# ---------------------------------------------------------------------------
# pipeline materialization


@dataclass
class FittedPipeline:
    scaler: object | None
    features: FeatureSet | None
    model: object
    n_columns: int

    def predict(self, rows: np.ndarray, deadline: Deadline | None = None) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.n_columns:
            raise ValueError("prediction input column mismatch with pipeline")
        if self.scaler is not None:
            rows = self.scaler.transform(rows)
        if self.features is not None:
            rows = rows[:, list(self.features.indices)]
        return self.model.predict(rows)


@dataclass
class Pipeline:
    """Trainable composition: scaler -> projection -> learner."""

    candidate: Candidate
    registry: Registry

    def fit(self, train: Dataset, seed: int = 0, deadline: Deadline | None = None) -> FittedPipeline:
        c = self.candidate
        data = train
        scaler = None
        if c.scaler is not None:
            scaler = self.registry.apply_scaler(c.scaler, data)
            data = Dataset(
                instances=scaler.transform(data.instances),
                labels=data.labels,
                feature_names=list(data.feature_names),
                source_columns=list(data.source_columns),
                class_names=list(data.class_names),
                label_name=data.label_name,
            )
        if c.features is not None:
            data = project(data, c.features)
        if c.meta is not None:
            composite = self.registry.wrap_meta(
                c.meta,
                c.meta_params,
                c.learner,
                c.params,
            )
            model = composite.fit(
                data.instances, data.labels, len(data.class_names), seed=seed, deadline=deadline
            )
        else:
            model = self.registry.fit(c.learner, c.params, data, seed=seed, deadline=deadline)
        return FittedPipeline(
            scaler=scaler, features=c.features, model=model, n_columns=train.n_columns
        )


def materialize(candidate: Candidate, registry: Registry) -> Pipeline:
    """Validate a candidate against the registry and bind it."""
    base = registry.learner(candidate.learner)
    if candidate.meta is not None:
        meta = registry.learner(candidate.meta)
        if not meta.is_meta:
            raise ValueError(f"{candidate.meta!r} is not a meta-learner")
        if base.is_meta:
            raise ValueError("meta-of-meta candidates are rejected")
        registry.effective_params(candidate.meta, candidate.meta_params)
    elif base.is_meta:
        raise ValueError(f"{candidate.learner!r} is a meta-learner and needs a base learner")
    registry.effective_params(candidate.learner, candidate.params)
    if candidate.scaler is not None:
        registry.scaler(candidate.scaler)
    return Pipeline(candidate=candidate, registry=registry)


def fit_pipeline(
    candidate: Candidate,
    train: Dataset,
    registry: Registry,
    seed: int = 0,
    deadline: Deadline | None = None,
) -> FittedPipeline:
    return materialize(candidate, registry).fit(train, seed=seed, deadline=deadline)


# ---------------------------------------------------------------------------
# MCCV scoring


def mccv_splits(dataset: Dataset, cfg: EvalConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """The stratified (train, validation) row partitions of one run.

    Split seeds mix (cfg.seed, repeat index) only, so all candidates
    evaluated under one config share folds pairwise.
    """
    out = []
    for r in range(cfg.repeats):
        spec = SplitSpec(train_fraction=cfg.train_fraction, seed=derive_seed(cfg.seed, "mccv", r))
        out.append(split_indices(dataset.labels, spec, stratified=True))
    return out


def mccv_score(
    candidate: Candidate,
    dataset: Dataset,
    cfg: EvalConfig,
    registry: Registry,
    deadline: Deadline | None = None,
) -> Score:
    """Average validation error over `repeats` stratified splits.

    Failures are statuses, not exceptions: a lapsed deadline yields
    ``failed_timeout`` (partial folds discarded), a learner error yields
    ``failed_error``. Single-class data scores 0 trivially.
    """
    if len(np.unique(dataset.labels)) < 2:
        folds = tuple(0.0 for _ in range(cfg.repeats))
        return Score(mean=0.0, std=0.0, per_fold=folds, status=STATUS_OK)
    key = candidate_key(candidate)
    effective = Deadline.earliest(deadline, Deadline(cfg.per_eval_timeout))
    per_fold: list[float] = []
    try:
        pipeline = materialize(candidate, registry)
        for r, (train_rows, val_rows) in enumerate(mccv_splits(dataset, cfg)):
            effective.check()
            train = dataset.subset_rows(train_rows)
            val = dataset.subset_rows(val_rows)
            fit_seed = derive_seed(cfg.seed, "fit", key, r)
            fitted = pipeline.fit(train, seed=fit_seed, deadline=effective)
            preds = fitted.predict(val.instances, deadline=effective)
            per_fold.append(error_rate(val.labels, preds))
    except DeadlineExceeded:
        return Score(mean=None, std=None, per_fold=(), status=STATUS_TIMEOUT)
    except Exception:
        return Score(mean=None, std=None, per_fold=(), status=STATUS_ERROR)
    folds = np.array(per_fold)
    return Score(
        mean=float(folds.mean()),
        std=float(folds.std()),
        per_fold=tuple(float(v) for v in folds),
        status=STATUS_OK,
    )


# ---------------------------------------------------------------------------
# caching evaluator with journal


@dataclass
class JournalRecord:
    candidate_key: str
    stage: str
    mean: float | None
    std: float | None
    per_fold: tuple[float, ...]
    status: str
    wall_ms: float
    seed: int
    auxiliary: bool = False

    def to_dict(self) -> dict:
        return {
            "candidate_key": self.candidate_key,
            "stage": self.stage,
            "mean": self.mean,
            "std": self.std,
            "per_fold": list(self.per_fold),
            "status": self.status,
            "wall_ms": self.wall_ms,
            "seed": self.seed,
            "auxiliary": self.auxiliary,
        }


@dataclass
class Evaluator:
    """Scores candidates on one optimization dataset, with caching.

    ``evaluate`` is safe to call concurrently: the cache and journal are
    lock-protected and seeds derive from candidate keys, never from
    arrival order. ``fold_listener`` (if set) observes every fitted
    fold; tests use it for leakage bookkeeping.
    """

    registry: Registry
    dataset: Dataset
    cfg: EvalConfig
    fold_listener: object | None = None
    _cache: dict = field(default_factory=dict)
    _journal: list = field(default_factory=list)
    _by_key: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self) -> None:
        self._dataset_hash = self.dataset.content_hash()

    def evaluate(
        self,
        candidate: Candidate,
        stage: str,
        cfg: EvalConfig | None = None,
        deadline: Deadline | None = None,
    ) -> Score:
        cfg_eff = cfg if cfg is not None else self.cfg
        auxiliary = cfg is not None and cfg.key() != self.cfg.key()
        key = candidate_key(candidate)
        cache_key = (key, self._dataset_hash, cfg_eff.key())
        with self._lock:
            if cache_key in self._cache:
                return self._cache[cache_key]
        started = time.monotonic()
        score = self._score(candidate, cfg_eff, deadline)
        wall_ms = (time.monotonic() - started) * 1000.0
        record = JournalRecord(
            candidate_key=key,
            stage=stage,
            mean=score.mean,
            std=score.std,
            per_fold=score.per_fold,
            status=score.status,
            wall_ms=wall_ms,
            seed=cfg_eff.seed,
            auxiliary=auxiliary,
        )
        with self._lock:
            self._cache[cache_key] = score  # last writer wins on races
            self._journal.append(record)
            self._by_key[key] = candidate
        return score

    def _score(self, candidate: Candidate, cfg: EvalConfig, deadline: Deadline | None) -> Score:
        if self.fold_listener is None:
            return mccv_score(candidate, self.dataset, cfg, self.registry, deadline=deadline)
        return self._score_with_listener(candidate, cfg, deadline)

    def _score_with_listener(self, candidate: Candidate, cfg: EvalConfig, deadline) -> Score:
        # mirrors mccv_score, additionally reporting each fold to the listener
        if len(np.unique(self.dataset.labels)) < 2:
            return Score(0.0, 0.0, tuple(0.0 for _ in range(cfg.repeats)), STATUS_OK)
        key = candidate_key(candidate)
        effective = Deadline.earliest(deadline, Deadline(cfg.per_eval_timeout))
        per_fold: list[float] = []
        try:
            pipeline = materialize(candidate, self.registry)
            for r, (train_rows, val_rows) in enumerate(mccv_splits(self.dataset, cfg)):
                effective.check()
                train = self.dataset.subset_rows(train_rows)
                val = self.dataset.subset_rows(val_rows)
                self.fold_listener(key, r, train, val)
                fitted = pipeline.fit(train, seed=derive_seed(cfg.seed, "fit", key, r), deadline=effective)
                per_fold.append(error_rate(val.labels, fitted.predict(val.instances, deadline=effective)))
        except DeadlineExceeded:
            return Score(None, None, (), STATUS_TIMEOUT)
        except Exception:
            return Score(None, None, (), STATUS_ERROR)
        folds = np.array(per_fold)
        return Score(float(folds.mean()), float(folds.std()), tuple(map(float, folds)), STATUS_OK)

    # -- journal and bookkeeping ---------------------------------------

    @property
    def evaluation_count(self) -> int:
        return len(self._journal)

    def journal_records(self) -> list[JournalRecord]:
        with self._lock:
            return list(self._journal)

    def candidate_for_key(self, key: str) -> Candidate | None:
        return self._by_key.get(key)

    def best_ok(self) -> tuple[str, float] | None:
        """Best (key, mean) over full-protocol ok evaluations; first seen
        wins ties."""
        best: tuple[str, float] | None = None
        for rec in self._journal:
            if rec.auxiliary or rec.status != STATUS_OK or rec.mean is None:
                continue
            if best is None or rec.mean < best[1]:
                best = (rec.candidate_key, rec.mean)
        return best
