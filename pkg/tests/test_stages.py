import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stagedml.data import FeatureSet
from stagedml.evaluation import Candidate, EvalConfig, Evaluator, Score, candidate_key
from stagedml.stages import (
    CandidatePool,
    FilteringStage,
    MetaStage,
    ProbingStage,
    ScalingStage,
    ScoredCandidate,
    StageContext,
    TuningStage,
    ValidationConfig,
    ValidationStage,
    compute_feature_set,
    feature_curve,
    final_score,
    omega,
    prefix_schedule,
    scalers_to_expand,
    select_best_prefix,
    stage_run,
    tau,
)
from stagedml.synth import make_dataset
from stagedml.timing import Deadline

from conftest import make_numeric_dataset


def ok_score(mean, repeats=5):
    return Score(mean=mean, std=0.0, per_fold=tuple([mean] * repeats), status="ok")


def entry(mean, stage="probing", **cand):
    c = Candidate(**cand)
    return ScoredCandidate(c, ok_score(mean), stage)


class StubEvaluator:
    """Scores candidates from a fixed table; unknown keys yield 0.5."""

    def __init__(self, table=None, offset=0.0):
        self.table = dict(table or {})
        self.offset = offset
        self.calls = []
        self.cfg = EvalConfig(seed=0)

    def evaluate(self, candidate, stage, cfg=None, deadline=None):
        key = candidate_key(candidate)
        self.calls.append((key, stage))
        return ok_score(self.table.get(key, 0.5) + self.offset)


def ctx_for(evaluator, data, registry, **kw):
    return StageContext(evaluator=evaluator, registry=registry, data=data, **kw)


class TestValidationMath:
    def test_tau_points(self):
        assert tau(10000, 10000) == 1.0
        assert tau(0, 10000) == 0.0
        assert tau(100, 10000) == 0.01
        assert tau(20000, 10000) == 1.0

    def test_omega_reference_point(self):
        # 500 instances, 100 held out: 0.01 + 0.2 * 0.99 = 0.208
        assert omega(100, 500, 10000) == pytest.approx(0.208, abs=1e-12)

    def test_omega_extremes(self):
        assert omega(0, 500, 10000) == 0.0
        assert omega(10000, 10000, 10000) == 1.0

    def test_final_score_endpoints(self):
        assert final_score(0.3, 0.9, 0.0) == 0.3
        assert final_score(0.3, 0.9, 1.0) == 0.9
        assert final_score(0.20, 0.25, 0.208) == pytest.approx(0.2104, abs=1e-12)

    @given(
        x=st.floats(min_value=0, max_value=1),
        w=st.floats(min_value=0, max_value=1),
    )
    def test_final_score_consensus_fixpoint(self, x, w):
        assert final_score(x, x, w) == pytest.approx(x, abs=1e-12)

    @given(
        total=st.integers(min_value=1, max_value=50000),
        n_bar=st.integers(min_value=1, max_value=50000),
        data=st.data(),
    )
    @settings(max_examples=60, deadline=None)
    def test_omega_monotone_in_n(self, total, n_bar, data):
        n1 = data.draw(st.integers(min_value=0, max_value=total))
        n2 = data.draw(st.integers(min_value=n1, max_value=total))
        assert omega(n1, total, n_bar) <= omega(n2, total, n_bar) + 1e-12
        if total >= n_bar:
            assert omega(total, total, n_bar) == 1.0


class TestCandidatePool:
    def test_dedup_by_key(self):
        pool = CandidatePool()
        assert pool.add(entry(0.2, learner="knn"))
        assert not pool.add(entry(0.3, learner="knn"))
        assert len(pool) == 1

    def test_rejects_failed_scores(self):
        pool = CandidatePool()
        bad = ScoredCandidate(Candidate(learner="knn"), Score(None, None, (), "failed_error"), "probing")
        with pytest.raises(ValueError):
            pool.add(bad)

    def test_sorted_by_score_stable(self):
        pool = CandidatePool()
        pool.add(entry(0.3, learner="knn"))
        pool.add(entry(0.1, learner="gaussian_nb"))
        pool.add(entry(0.3, learner="decision_tree"))
        keys = [e.key for e in pool.sorted_by_score()]
        assert keys[0] == "-|-|gaussian_nb|default"
        assert keys[1] == "-|-|knn|default"  # tie keeps insertion order


class TestProbing:
    def test_adds_every_base_learner(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(stub, data, registry))
        assert len(pool) == 5
        assert {e.candidate.learner for e in pool} == set(registry.base_learner_ids())
        assert all(e.candidate.scaler is None and e.candidate.features is None for e in pool)

    def test_dedup_against_existing_pool(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.2, learner="knn")])
        stage_run(ProbingStage(), pool, ctx_for(stub, data, registry))
        assert len(pool) == 5
        assert sum(1 for key, _ in stub.calls if key == "-|-|knn|default") == 0

    def test_zero_deadline_no_work(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(stub, data, registry, deadline=Deadline(0.0)))
        assert len(pool) == 0 and stub.calls == []

    def test_failed_learner_excluded(self, registry):
        data = make_dataset("separable", 40, 3, 0)

        class Failing(StubEvaluator):
            def evaluate(self, candidate, stage, cfg=None, deadline=None):
                if candidate.learner == "decision_tree":
                    self.calls.append((candidate_key(candidate), stage))
                    return Score(None, None, (), "failed_timeout")
                return super().evaluate(candidate, stage, cfg, deadline)

        stub = Failing()
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(stub, data, registry))
        assert len(pool) == 4
        assert "-|-|decision_tree|default" not in pool

    def test_rerun_adds_no_duplicates(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(stub, data, registry))
        n = len(pool)
        stage_run(ProbingStage(), pool, ctx_for(stub, data, registry))
        assert len(pool) == n


class TestScaling:
    def test_expansion_rule_pure(self):
        baselines = {"-|-|knn|default": 0.40, "-|-|gaussian_nb|default": 0.30}
        scaled = {
            ("standardize", "-|-|knn|default"): 0.20,
            ("standardize", "-|-|gaussian_nb|default"): 0.30,
            ("minmax", "-|-|knn|default"): 0.40,
            ("minmax", "-|-|gaussian_nb|default"): 0.31,
        }
        assert scalers_to_expand(baselines, scaled) == ["standardize"]
        # epsilon raises the bar
        assert scalers_to_expand(baselines, scaled, epsilon=0.25) == []

    def test_expansion_invariant_to_score_shifts(self):
        baselines = {"p": 0.40}
        scaled = {("standardize", "p"): 0.35, ("minmax", "p"): 0.45}
        base = scalers_to_expand(baselines, scaled)
        for shift in (-0.2, 0.1, 0.33):
            shifted_b = {k: v + shift for k, v in baselines.items()}
            shifted_s = {k: v + shift for k, v in scaled.items()}
            assert scalers_to_expand(shifted_b, shifted_s) == base

    def test_stage_counts_with_stub(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()  # flat scores: no strict improvement anywhere
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(stub, data, registry))
        calls_before = len(stub.calls)
        ctx = ctx_for(stub, data, registry)
        stage_run(ScalingStage(include_best_pilot=False), pool, ctx)
        # 3 scalers x 2 pilots, no expansion under flat scores
        assert len(stub.calls) - calls_before == 6
        assert ctx.trace["expanded_scalers"] == []

    def test_stage_expands_on_improvement(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        table = {"standardize|-|knn|default": 0.1}  # all others 0.5
        stub = StubEvaluator(table)
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(stub, data, registry))
        ctx = ctx_for(stub, data, registry)
        stage_run(ScalingStage(include_best_pilot=False), pool, ctx)
        assert ctx.trace["expanded_scalers"] == ["standardize"]
        expanded_keys = {k for k, _ in stub.calls if k.startswith("standardize|")}
        # pilots (knn, gaussian_nb) plus the 3 non-pilot learners
        assert expanded_keys == {
            "standardize|-|knn|default",
            "standardize|-|gaussian_nb|default",
            "standardize|-|decision_tree|default",
            "standardize|-|logistic_regression|default",
            "standardize|-|random_forest|default",
        }

    def test_pilots_evaluated_on_raw_data_when_pool_lacks_them(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        ctx = ctx_for(stub, data, registry)
        pool = stage_run(ScalingStage(include_best_pilot=False), CandidatePool(), ctx)
        raw_pilot_calls = [k for k, _ in stub.calls if k in ("-|-|knn|default", "-|-|gaussian_nb|default")]
        assert len(raw_pilot_calls) == 2
        assert "-|-|knn|default" in pool

    def test_real_expansion_on_scale_sensitive_data(self, registry):
        data = make_dataset("scale_sensitive", 120, 5, 0)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=3))
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(ev, data, registry))
        ctx = ctx_for(ev, data, registry)
        stage_run(ScalingStage(), pool, ctx)
        assert "standardize" in ctx.trace["expanded_scalers"]


class TestFeatureCurve:
    def test_reference_walk(self):
        # argmin-with-smaller-l-tie-break oracle over the listed points
        table = {1: 0.30, 2: 0.25, 4: 0.25, 8: 0.26, 16: 0.27, 32: 0.10}
        points = feature_curve(table.__getitem__, [1, 2, 4, 8, 16, 32], tol=0.005, patience=2)
        assert points == [(1, 0.30), (2, 0.25), (4, 0.25), (8, 0.26), (16, 0.27)]
        best = select_best_prefix([("f", list(range(32)), points)])
        assert best[1] == 2  # smaller l wins the 0.25 tie

    def test_patience_resets_on_recovery(self):
        table = {1: 0.30, 2: 0.31, 4: 0.25, 8: 0.40, 16: 0.41}
        points = feature_curve(table.__getitem__, [1, 2, 4, 8, 16], tol=0.005, patience=2)
        assert [l for l, _ in points] == [1, 2, 4, 8, 16]

    def test_schedule_geometric_capped(self):
        assert prefix_schedule(1) == [1]
        assert prefix_schedule(6) == [1, 2, 4, 6]
        assert prefix_schedule(8) == [1, 2, 4, 8]
        assert prefix_schedule(100) == [1, 2, 4, 8, 16, 32, 64, 100]

    def test_tie_prefers_earlier_filter(self):
        points = [(1, 0.2)]
        best = select_best_prefix([
            ("first", [0], points),
            ("second", [0], points),
        ])
        assert best[4] == "first"

    def test_single_informative_feature_selected(self, registry):
        # y determined by column 0 alone; exhaustive-prefix oracle agrees
        rng = np.random.default_rng(1)
        x = rng.normal(size=(120, 6))
        y = (x[:, 0] > 0).astype(int)
        data = make_numeric_dataset(x, y)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=5))
        fs, curves = compute_feature_set(ctx_for(ev, data, registry))
        assert list(fs) == [0]

    def test_noise_only_ties_give_smallest_prefix(self, registry):
        data = make_numeric_dataset(np.ones((40, 4)), [0, 1] * 20)
        stub = StubEvaluator()  # every prefix scores identically
        fs, _ = compute_feature_set(ctx_for(stub, data, registry))
        assert len(fs) == 1

    def test_nonempty_and_bounded(self, registry):
        data = make_dataset("madelon_like", 80, 9, 2)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=6))
        fs, _ = compute_feature_set(ctx_for(ev, data, registry))
        assert 1 <= len(fs) <= data.n_columns


class TestFilteringStage:
    def test_full_feature_set_leaves_pool_unchanged(self, registry):
        data = make_numeric_dataset(np.ones((40, 3)), [0, 1] * 20)

        class FullWidth(StubEvaluator):
            # longer prefixes score strictly better, so the curve walks
            # out to the full column count
            def evaluate(self, candidate, stage, cfg=None, deadline=None):
                self.calls.append((candidate_key(candidate), stage))
                if candidate.features is None:
                    return ok_score(0.5)
                return ok_score(0.5 - 0.01 * len(candidate.features.indices))

        stub = FullWidth()
        ctx = ctx_for(stub, data, registry)
        pool = CandidatePool([entry(0.2, learner="knn")])
        stage_run(FilteringStage(), pool, ctx)
        assert ctx.trace["feature_set"] == [0, 1, 2]
        assert pool.keys() == ["-|-|knn|default"]  # twin == original, dedup

    def test_twins_added_best_first_under_deadline(self, registry):
        data = make_numeric_dataset(np.arange(120.0).reshape(40, 3), [0, 1] * 20)

        class CountingStub(StubEvaluator):
            def __init__(self, allowed):
                super().__init__()
                self.allowed = allowed
                self.full_evals = 0

            def evaluate(self, candidate, stage, cfg=None, deadline=None):
                key = candidate_key(candidate)
                self.calls.append((key, stage))
                if cfg is None and candidate.features is not None:
                    self.full_evals += 1
                    if self.full_evals > self.allowed:
                        return Score(None, None, (), "failed_timeout")
                return ok_score(0.4)

        stub = CountingStub(allowed=2)
        pool = CandidatePool([
            entry(0.3, learner="knn"),
            entry(0.1, learner="gaussian_nb"),
            entry(0.2, learner="decision_tree"),
        ])
        ctx = ctx_for(stub, data, registry)
        stage_run(FilteringStage(), pool, ctx)
        twins = [e for e in pool if e.candidate.features is not None]
        assert {t.candidate.learner for t in twins} == {"gaussian_nb", "decision_tree"}

    def test_madelon_twin_quality(self, registry):
        data = make_dataset("madelon_like", 300, 40, 0)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=7))
        pool = stage_run(ProbingStage(), CandidatePool(), ctx_for(ev, data, registry))
        best_before = pool.best()
        ctx = ctx_for(ev, data, registry)
        stage_run(FilteringStage(), pool, ctx)
        twin = pool.get(candidate_key(best_before.candidate.with_features(
            FeatureSet(ctx.trace["feature_set"])
        )))
        assert twin is not None
        assert twin.score.mean <= best_before.score.mean + 0.02
        assert len(ctx.trace["feature_set"]) <= 20


class TestMetaStage:
    def test_counts_two_metas_per_candidate(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.2, learner="knn")])
        stage_run(MetaStage(), pool, ctx_for(stub, data, registry))
        assert len(stub.calls) == 2
        metas = {e.candidate.meta for e in pool if e.candidate.meta}
        assert metas == {"bagging", "adaboost"}

    def test_meta_candidates_skipped(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.2, learner="knn", meta="bagging")])
        stage_run(MetaStage(), pool, ctx_for(stub, data, registry))
        assert stub.calls == []

    def test_feature_slots_untouched(self, registry):
        data = make_dataset("separable", 40, 4, 0)
        stub = StubEvaluator()
        pool = CandidatePool([
            entry(0.2, learner="knn", scaler="standardize", features=FeatureSet([0, 2])),
        ])
        stage_run(MetaStage(), pool, ctx_for(stub, data, registry))
        wrapped = [e for e in pool if e.candidate.meta]
        assert all(e.candidate.scaler == "standardize" for e in wrapped)
        assert all(e.candidate.features == FeatureSet([0, 2]) for e in wrapped)

    def test_bagging_stabilizes_high_variance_learner(self, registry):
        data = make_dataset("madelon_like", 150, 8, 4)
        wins = 0
        for seed in range(5):
            ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=seed))
            tree = Candidate(learner="decision_tree")
            base = ev.evaluate(tree, stage="probing")
            wrapped = ev.evaluate(tree.with_meta("bagging"), stage="meta")
            if wrapped.mean <= base.mean + 0.02:
                wins += 1
        assert wins >= 4


class TestTuningStage:
    def test_knn_grid_enumerated_minus_default(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.4, learner="knn")])
        stage_run(TuningStage(), pool, ctx_for(stub, data, registry))
        tuned_calls = [k for k, s in stub.calls if s == "tuning"]
        assert len(tuned_calls) == 6  # grid of 7 minus the default k=5
        assert "-|-|knn|k=5" not in tuned_calls

    def test_zero_budget_no_changes(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.4, learner="knn")])
        stage_run(TuningStage(), pool, ctx_for(stub, data, registry, deadline=Deadline(0.0)))
        assert stub.calls == []
        assert len(pool) == 1

    def test_only_improving_samples_added(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        table = {"-|-|knn|k=1": 0.1, "-|-|knn|k=3": 0.9}
        stub = StubEvaluator(table)
        pool = CandidatePool([entry(0.4, learner="knn")])
        stage_run(TuningStage(), pool, ctx_for(stub, data, registry))
        assert "-|-|knn|k=1" in pool
        assert "-|-|knn|k=3" not in pool
        assert "-|-|knn|default" in pool  # incumbent retained

    def test_gaussian_nb_has_nothing_to_tune(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.4, learner="gaussian_nb")])
        stage_run(TuningStage(), pool, ctx_for(stub, data, registry))
        assert stub.calls == []

    def test_random_search_improves_bad_learning_rate(self, registry):
        # grid-sweep oracle built the expectation: a tiny learning rate
        # underfits a separable set, and sampled rates recover it
        data = make_dataset("separable", 80, 3, 1)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=2))
        bad = Candidate(
            learner="logistic_regression",
            params={"learning_rate": 0.0001, "epochs": 50, "l2": 1e-6},
        )
        bad_score = ev.evaluate(bad, stage="probing")
        pool = CandidatePool([ScoredCandidate(bad, bad_score, "probing")])
        ctx = ctx_for(ev, data, registry, seed=9)
        stage_run(TuningStage(max_evals=30), pool, ctx)
        assert pool.best().score.mean < bad_score.mean

    def test_max_evals_respected_for_random_spaces(self, registry):
        data = make_dataset("separable", 40, 3, 0)
        stub = StubEvaluator()
        pool = CandidatePool([entry(0.4, learner="logistic_regression")])
        stage_run(TuningStage(max_evals=5), pool, ctx_for(stub, data, registry))
        assert len(stub.calls) <= 5


class TestValidationStage:
    def _pool(self, means):
        pool = CandidatePool()
        learners = ["knn", "gaussian_nb", "decision_tree", "logistic_regression", "random_forest"]
        for mean, lid in zip(means, learners):
            pool.add(entry(mean, learner=lid))
        return pool

    def test_m1_keeps_internal_best(self, registry):
        data = make_dataset("separable", 60, 3, 2)
        holdout = make_dataset("separable", 30, 3, 3)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=1))
        pool = self._pool([0.3, 0.1, 0.4])
        ctx = ctx_for(ev, data, registry, holdout=holdout, validation=ValidationConfig(m=1))
        out = stage_run(ValidationStage(), pool, ctx)
        assert len(out) == 1
        assert out.entries()[0].candidate.learner == "gaussian_nb"

    def test_equal_internal_scores_ranked_by_holdout(self, registry):
        data = make_dataset("separable", 60, 3, 2)
        holdout = make_dataset("noise_only", 40, 3, 4)  # nothing fits perfectly
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=1))
        pool = self._pool([0.2, 0.2])
        ctx = ctx_for(ev, data, registry, holdout=holdout, validation=ValidationConfig(m=2))
        out = stage_run(ValidationStage(), pool, ctx)
        entries = out.entries()
        assert len(entries) == 2
        assert entries[0].phi_validate <= entries[1].phi_validate

    def test_nbar_one_makes_ranking_pure_holdout(self, registry):
        data = make_dataset("separable", 60, 3, 2)
        holdout = make_dataset("noise_only", 24, 3, 4)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=1))
        pool = self._pool([0.10, 0.11])
        ctx = ctx_for(ev, data, registry, holdout=holdout, validation=ValidationConfig(n_bar=1, m=2))
        out = stage_run(ValidationStage(), pool, ctx)
        entries = out.entries()
        assert ctx.trace["omega"] == 1.0
        assert [e.final_score for e in entries] == [e.phi_validate for e in entries]

    def test_empty_holdout_skips_with_warning(self, registry):
        data = make_dataset("separable", 60, 3, 2)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=1))
        pool = self._pool([0.3])
        ctx = ctx_for(ev, data, registry, holdout=None)
        with pytest.warns(UserWarning, match="holdout empty"):
            out = stage_run(ValidationStage(), pool, ctx)
        assert out is pool
        assert ctx.trace["skipped"] == "holdout empty"

    def test_final_scores_blend_internal_and_holdout(self, registry):
        data = make_dataset("separable", 90, 3, 2)
        holdout = make_dataset("separable", 20, 3, 5)
        ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=1))
        pool = self._pool([0.25, 0.3])
        vcfg = ValidationConfig(m=2, n_bar=10000)
        ctx = ctx_for(ev, data, registry, holdout=holdout, validation=vcfg)
        out = stage_run(ValidationStage(), pool, ctx)
        w = omega(20, 110, 10000)
        for e in out:
            assert e.final_score == pytest.approx(
                final_score(e.score.mean, e.phi_validate, w), abs=1e-12
            )


def test_pool_min_never_worsens_across_stages(registry):
    data = make_dataset("scale_sensitive", 100, 5, 1)
    ev = Evaluator(registry=registry, dataset=data, cfg=EvalConfig(seed=8))
    pool = CandidatePool()
    best = float("inf")
    for stage in (ProbingStage(), ScalingStage(), FilteringStage(), MetaStage(), TuningStage(max_evals=4)):
        pool = stage_run(stage, pool, ctx_for(ev, data, registry, seed=3))
        current = pool.best().score.mean
        assert current <= best + 1e-12
        best = min(best, current)
