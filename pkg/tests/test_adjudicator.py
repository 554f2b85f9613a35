import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_select, welfare_direct
from sclm.adjudicator import (EGALITARIAN, NASH, UTILITARIAN, AdjudicatorError, NormalizationDegenerate,
                              ScoreColumn, ScoreMatrix, WelfareFunction, minmax01, pareto_front, pmean,
                              positivity_shift, relative_regret, score_matrix, select, simulator_score)
from sclm.generator import Candidate
from sclm.dsl import parse
from sclm.llm import MockTransport
from sclm.policy import PolicyEvaluator
from sclm.prompts import MaximizeUtility, NoShift, PreferencePrompt, Prioritize
from test_rmab import small_instance

PRESETS = [1.0, 0.5, 0.0, -1.0, -math.inf]

positive_vectors = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8)


class TestPmean:
    def test_presets(self):
        x = [1.0, 4.0]
        assert pmean(x, p=1) == pytest.approx(2.5)
        assert pmean(x, p=0) == pytest.approx(2.0)
        assert pmean(x, p=-math.inf) == 1.0
        assert pmean(x, p=-1) == pytest.approx(1.6)
        assert pmean(x, p=0.5) == pytest.approx(2.25)

    def test_weights(self):
        assert pmean([1.0, 4.0], [3, 1], p=1) == pytest.approx(1.75)
        assert pmean([1.0, 4.0], [1, 0], p=-math.inf) == 1.0
        assert pmean([1.0, 4.0], [0, 1], p=0) == pytest.approx(4.0)

    @settings(max_examples=100, deadline=None)
    @given(positive_vectors, st.sampled_from(PRESETS))
    def test_direct_formula(self, x, p):
        assert pmean(x, p=p) == pytest.approx(welfare_direct(x, np.ones(len(x)), p), rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(positive_vectors, st.sampled_from(PRESETS))
    def test_between_min_and_max(self, x, p):
        v = pmean(x, p=p)
        assert min(x) * (1 - 1e-12) <= v <= max(x) * (1 + 1e-12)

    @settings(max_examples=100, deadline=None)
    @given(positive_vectors, st.floats(-3, 1))
    def test_monotone_in_p(self, x, p):
        assert pmean(x, p=p - 0.5) <= pmean(x, p=p) * (1 + 1e-12)

    @settings(max_examples=100, deadline=None)
    @given(positive_vectors, st.sampled_from(PRESETS), st.sampled_from([0.5, 2.0, 10.0]))
    def test_homogeneous(self, x, p, lam):
        assert pmean(np.multiply(lam, x), p=p) == pytest.approx(lam * pmean(x, p=p), rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(positive_vectors, st.sampled_from(PRESETS), st.integers(0, 2 ** 31))
    def test_monotone_in_values(self, x, p, seed):
        y = np.asarray(x) + np.random.default_rng(seed).uniform(0, 1, len(x))
        assert pmean(x, p=p) <= pmean(y, p=p) * (1 + 1e-12)

    def test_continuity_at_zero(self):
        x = [1.0, 4.0, 2.5]
        g = pmean(x, p=0)
        assert abs(pmean(x, p=1e-6) - g) < 1e-6
        assert abs(pmean(x, p=-1e-6) - g) < 1e-6
        # second order: |M_p - M_0| <= |p| * M_0 * var(log x) for small p
        var = np.var(np.log(x))
        assert abs(pmean(x, p=1e-4) - g) <= 1e-4 * g * var

    def test_rejects(self):
        with pytest.raises(AdjudicatorError):
            pmean([1.0, 0.0], p=1)
        with pytest.raises(AdjudicatorError):
            pmean([1.0], p=2)
        with pytest.raises(AdjudicatorError):
            pmean([], p=1)
        with pytest.raises(AdjudicatorError):
            pmean([1.0, 2.0], [0, 0])

    def test_no_overflow(self):
        assert pmean([1e300, 1e300], p=0.5) == pytest.approx(1e300)
        assert pmean([1e-300, 1e-300], p=-1) == pytest.approx(1e-300)


class TestSelection:
    def test_named(self):
        assert WelfareFunction.named("nash").p == 0
        assert WelfareFunction.named("egal").p == -math.inf
        assert WelfareFunction.named("0.3").p == 0.3
        with pytest.raises(AdjudicatorError):
            WelfareFunction(2.0)

    def test_tie_lowest_id(self):
        m = ScoreMatrix.from_array([[1, 1, 1], [2, 2, 2]], candidate_ids=[7, 3, 5])
        assert select(m, UTILITARIAN).chosen_id == 3

    def test_welfare_differs(self):
        m = ScoreMatrix.from_array([[0.9, 0.5, 0.0], [0.1, 0.45, 1.2]])
        assert select(m, UTILITARIAN).chosen_index == 2
        assert select(m, EGALITARIAN).chosen_index == 1

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 12), st.integers(0, 2 ** 31), st.sampled_from(PRESETS))
    def test_brute_force(self, rows, cols, seed, p):
        rng = np.random.default_rng(seed)
        M = np.round(rng.normal(size=(rows, cols)), 2)  # rounding creates ties
        w = rng.uniform(0.5, 2, rows)
        sel = select(ScoreMatrix.from_array(M, weights=w), WelfareFunction(p))
        assert sel.chosen_index == brute_force_select(M, w, p)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(0.01, 100))
    def test_scale_invariant(self, seed, c):
        rng = np.random.default_rng(seed)
        M = rng.uniform(0.1, 1, size=(3, 10))
        for wf in (UTILITARIAN, NASH, EGALITARIAN):
            assert select(ScoreMatrix.from_array(M), wf).chosen_index == select(ScoreMatrix.from_array(c * M), wf).chosen_index

    def test_egalitarian_maximises_min(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            M = rng.normal(size=(3, 15))
            j = select(ScoreMatrix.from_array(M), EGALITARIAN).chosen_index
            assert M[:, j].min() == M.min(axis=0).max()

    def test_utilitarian_is_sum_argmax(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            M = rng.normal(size=(3, 15))
            j = select(ScoreMatrix.from_array(M), UTILITARIAN).chosen_index
            assert M[:, j].sum() == pytest.approx(M.sum(axis=0).max())

    def test_shift_recorded(self):
        m = ScoreMatrix.from_array([[-1.0, 0.5], [0.2, 0.3]])
        sel = select(m, NASH)
        assert sel.shift == pytest.approx(1 + 1e-6)
        assert sel.report(m)["shifts_applied"]["global_shift"] == sel.shift
        assert positivity_shift(np.array([[1.0, 2.0]])) == 0.0

    def test_unavailable_column_dropped(self):
        cols = [ScoreColumn(None, "x", np.array([1.0, 0.0]), np.array([1.0, 0.0])),
                ScoreColumn(None, "x", np.full(2, np.nan), np.full(2, np.nan), available=False)]
        sel = select(ScoreMatrix([0, 1], cols), EGALITARIAN)
        assert sel.chosen_id == 0 and sel.used_clauses == [0]

    def test_empty(self):
        with pytest.raises(AdjudicatorError):
            select(ScoreMatrix([], []), UTILITARIAN)


class TestRegret:
    def test_zero_without_noise(self):
        S = np.random.default_rng(0).uniform(0.1, 1, (3, 6))
        assert relative_regret(S, S, 1.0) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 31), st.sampled_from([0.5, 0.8, 0.9, 0.99]), st.sampled_from(PRESETS))
    def test_bound(self, seed, alpha, p):
        rng = np.random.default_rng(seed)
        S = rng.uniform(0.01, 1, (int(rng.integers(1, 6)), int(rng.integers(1, 31))))
        noisy = S * rng.uniform(alpha, 1 / alpha, S.shape)
        r = relative_regret(S, noisy, p)
        assert 0 <= r <= 1 - alpha ** 2 + 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(AdjudicatorError):
            relative_regret(np.ones((2, 2)), np.ones((2, 3)), 1)


class TestPareto:
    def test_standard_dominance(self):
        assert pareto_front([[1, 0, 0.2], [0, 1, 0.2]]) == [0, 1, 2]
        assert pareto_front([[1, 0, 0.2, 0.1], [0, 1, 0.2, 0.1]]) == [0, 1, 2]
        assert pareto_front([[1, 1], [1, 1]]) == [0, 1]

    def test_supported(self):
        assert pareto_front([[1, 0, 0.2], [0, 1, 0.2]], supported=True) == [0, 1]
        assert pareto_front([[1, 0, 0.6], [0, 1, 0.6]], supported=True) == [0, 1, 2]

    def test_needs_two_rows(self):
        with pytest.raises(AdjudicatorError):
            pareto_front([[1, 2, 3]])


def test_minmax01():
    assert minmax01([2, 4, 3]).tolist() == [0, 1, 0.5]
    assert minmax01([3, 3]).tolist() == [0.5, 0.5]


class TestScorers:
    @pytest.fixture(scope="class")
    @classmethod
    def setup(cls):
        inst = small_instance(n=10, k=3, horizon=6)
        ev = PolicyEvaluator(inst, [0, 1, 2])
        srcs = ["state", "state * (1 + 3*agent_feats[0])", "state * (1 + 3*agent_feats[1])",
                "state * (1 + 2*agent_feats[2])"]
        cands = [Candidate(j, parse(s, inst.n_features)) for j, s in enumerate(srcs)]
        return inst, ev, cands

    def test_simulator_default_is_zero(self, setup):
        inst, ev, cands = setup
        col = simulator_score(Prioritize("A", "low"), cands, ev, "state * agent_feats[0]")
        assert col.normalized[0] == 0.0
        assert col.baseline > 0

    def test_simulator_degenerate(self, setup):
        inst, ev, cands = setup
        with pytest.warns(NormalizationDegenerate):
            col = simulator_score(Prioritize("A", "low"), cands, ev, "0 - state")
        assert col.note == "degenerate-normalization"

    def test_matrix_layers(self, setup, tmp_path):
        inst, ev, cands = setup
        prompt = PreferencePrompt((Prioritize("A", "low"), NoShift("B"), MaximizeUtility()))
        m = score_matrix(prompt, cands, ev, "sim", {Prioritize("A", "low"): "state * agent_feats[0]"})
        assert m.values.shape == (3, 4)
        assert m.values[1, 0] == 1.0  # the default policy has no shift
        m.to_csv(tmp_path / "s.csv")
        header = (tmp_path / "s.csv").read_text().splitlines()[0]
        assert header.startswith("candidate_id,raw:A-low,norm:A-low")

    def test_llm_scores(self, setup):
        inst, ev, cands = setup
        prompt = PreferencePrompt((Prioritize("A", "low"), Prioritize("B", "high")))
        m = score_matrix(prompt, cands, ev, "llm", transport=MockTransport())
        assert set(np.unique(m.values)) <= {1.0, 2.0, 3.0, 4.0, 5.0}
        again = score_matrix(prompt, cands, ev, "llm", transport=MockTransport())
        assert np.array_equal(m.values, again.values)

    def test_llm_garbage_drops_clause(self, setup):
        inst, ev, cands = setup

        class Garbage:
            def complete(self, prompt, purpose="", **meta):
                return "I would rather not say."

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = score_matrix(PreferencePrompt((Prioritize("A", "low"),)), cands, ev, "llm", transport=Garbage())
        assert not m.available[0]

    def test_missing_proxy(self, setup):
        inst, ev, cands = setup
        with pytest.raises(AdjudicatorError):
            score_matrix(PreferencePrompt((Prioritize("A", "low"),)), cands, ev, "sim", {})
