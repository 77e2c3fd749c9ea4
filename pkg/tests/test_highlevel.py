from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semnav.perception import Pose
from semnav.policy.context import DecisionContext
from semnav.policy.highlevel import (
    GreedyPolicy, Hyperparams, LearnedPolicy, NoCandidate, RandomSubgoalPolicy, block_features,
    n_block_features, subgoal_reward,
)
from semnav.priors import KeyObjectsMap
from semnav.semantic_map import SemanticMap

A, B = Fraction(7, 10), Fraction(3, 10)


def _ctx(dims, explored, cell, targets=(), related=(), passable=None, P=16):
    sem = SemanticMap(dims)
    sem.counts[..., sem.explored_channel] = explored.astype(np.int32)
    lt = np.zeros(dims, bool)
    lr = np.zeros(dims, bool)
    for c in targets:
        lt[c] = True
    for c in related:
        lr[c] = True
    if passable is None:
        passable = np.ones(dims, bool)
    return DecisionContext(sem=sem, key=KeyObjectsMap(lt, lr), pose=Pose.from_cell(cell), passable=passable, P=P)


def _line_field(n, goal):
    return np.abs(np.arange(n) - goal).astype(float).reshape(n, 1)


class TestReward:
    def test_examples(self):
        f0 = np.zeros((10, 1))
        # delta dis_to = 2, delta dis_ko = 0
        dto = _line_field(10, 0)
        assert subgoal_reward((3, 0), (5, 0), dto, f0, A, B) == Fraction(7, 5)
        assert subgoal_reward((4, 0), (4, 0), dto, dto, A, B) == 0
        # delta dis_to = -3, delta dis_ko = 1
        dko = _line_field(10, 9)
        step = np.zeros((10, 1))
        step[2, 0] = 1
        assert subgoal_reward((5, 0), (2, 0), dto, step, A, B) == Fraction(-9, 5)
        assert float(subgoal_reward((5, 0), (2, 0), dto, step)) == pytest.approx(-1.8)
        assert float(subgoal_reward((3, 0), (5, 0), dto, None)) == pytest.approx(1.4)
        assert subgoal_reward((9, 0), (0, 0), None, dko, A, B) == B * 9

    def test_missing_or_infinite_terms_vanish(self):
        dto = _line_field(4, 0)
        dto[3, 0] = np.inf
        assert subgoal_reward((3, 0), (1, 0), dto, None, A, B) == 0
        assert subgoal_reward((3, 0), (1, 0), None, None) == 0

    def test_fifty_fixtures_against_hand_formula(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            dto = rng.integers(0, 40, (8, 8)).astype(float)
            dko = rng.integers(0, 40, (8, 8)).astype(float)
            new, prev = (tuple(rng.integers(0, 8, 2)) for _ in range(2))
            want = A * int(dto[prev] - dto[new]) + B * int(dko[prev] - dko[new])
            assert subgoal_reward(new, prev, dto, dko, A, B) == want

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=2, max_size=12),
           st.integers(0, 2**32 - 1))
    def test_telescopes_on_fixed_fields(self, chain, seed):
        rng = np.random.default_rng(seed)
        dto = rng.integers(0, 50, (6, 6)).astype(float)
        dko = rng.integers(0, 50, (6, 6)).astype(float)
        total = sum(subgoal_reward(chain[i + 1], chain[i], dto, dko, A, B) for i in range(len(chain) - 1))
        first, last = chain[0], chain[-1]
        assert total == A * int(dto[first] - dto[last]) + B * int(dko[first] - dko[last])


class TestGreedy:
    def test_single_target_cell_is_chosen(self):
        explored = np.ones((10, 10), bool)
        sg = GreedyPolicy().propose(_ctx((10, 10), explored, (1, 1), targets=[(7, 6)]))
        assert (sg.cell, sg.kind) == ((7, 6), "target")

    def test_frontier_fixture(self):
        # left half explored; frontier is the x = 4 column, nearest by hop count is (4, 1)
        explored = np.zeros((10, 10), bool)
        explored[:5] = True
        sg = GreedyPolicy().propose(_ctx((10, 10), explored, (1, 1)))
        frontier = [(4, y) for y in range(10)]
        want = min(frontier, key=lambda c: (abs(c[0] - 1) + abs(c[1] - 1), c))
        assert (sg.cell, sg.kind) == (want, "frontier")

    def test_related_used_when_no_target(self):
        explored = np.ones((10, 10), bool)
        sg = GreedyPolicy().propose(_ctx((10, 10), explored, (0, 0), related=[(9, 9), (2, 3)]))
        assert (sg.cell, sg.kind) == ((2, 3), "related")

    def test_fully_explored_empty_map_has_no_candidate(self):
        with pytest.raises(NoCandidate):
            GreedyPolicy().propose(_ctx((10, 10), np.ones((10, 10), bool), (5, 5)))

    def test_random_policy_samples_explored_reachable(self):
        explored = np.zeros((20, 20), bool)
        explored[:8, :8] = True
        ctx = _ctx((20, 20), explored, (1, 1))
        rng = np.random.default_rng(0)
        for _ in range(20):
            sg = RandomSubgoalPolicy().propose(ctx, rng)
            assert explored[sg.cell] and max(abs(sg.gx - 1), abs(sg.gy - 1)) > 2


def _learned(seed):
    rng = np.random.default_rng(seed)
    pol = LearnedPolicy(n_block_features(), hyper=Hyperparams(P=8))
    for k, v in pol.tables.items():
        pol.tables[k] = rng.normal(size=v.shape)
    return pol


class TestLearned:
    def _context(self):
        explored = np.zeros((32, 32), bool)
        explored[:20, :24] = True
        return _ctx((32, 32), explored, (4, 5), targets=[(15, 15)], related=[(3, 20)], P=8)

    def test_same_seed_same_subgoal(self):
        a = _learned(1).propose(self._context(), np.random.default_rng(9))
        b = _learned(1).propose(self._context(), np.random.default_rng(9))
        assert a == b and a.info["action"] == b.info["action"]

    def test_subgoal_is_snapped_to_valid_cell(self):
        ctx = self._context()
        rng = np.random.default_rng(0)
        for _ in range(10):
            sg = _learned(2).propose(ctx, rng)
            assert ctx.explored[sg.cell] and ctx.reachable[sg.cell]

    @given(st.floats(-1e3, 1e3, allow_nan=False))
    def test_logit_shift_leaves_distribution_unchanged(self, c):
        pol = _learned(4)
        phi = block_features(self._context())
        before = pol.distribution(phi)
        pol.tables["actor_bias"] = pol.tables["actor_bias"] + c
        np.testing.assert_allclose(pol.distribution(phi), before, rtol=1e-9, atol=1e-15)
        assert before.sum() == pytest.approx(1.0)

    def test_block_feature_shape(self):
        assert block_features(self._context()).shape == (64, n_block_features())

    def test_greedy_ignores_feature_scaling(self):
        ctx = self._context()
        first = GreedyPolicy().propose(ctx)
        ctx.sem.counts[...] *= 3
        assert GreedyPolicy().propose(ctx) == first
