import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convrec.dialogue import (BeliefState, ClarifiedMask, candidate_signal,
                              compose_state, state_dim)


class TestBeliefState:
    def test_empty_update_is_identity(self, tiny_model):
        b = BeliefState(6)
        before = b.b.copy()
        b.update([], tiny_model)
        assert (b.b == before).all()

    def test_additivity(self, tiny_model):
        b = BeliefState(6)
        b.update([1, 2], tiny_model)
        b.update([3], tiny_model)
        emb = tiny_model.params["entity_emb"]
        assert np.allclose(b.b, emb[1] + emb[2] + emb[3])
        assert b.affirmed_entities == [1, 2, 3]

    def test_unknown_entity_rejected(self, tiny_model):
        with pytest.raises(KeyError):
            BeliefState(6).update([999], tiny_model)

    @given(st.permutations([2, 5, 7, 11, 13]))
    def test_order_invariance(self, order):
        from convrec.embedding import PreferenceModel

        m = PreferenceModel(n_users=1, n_entities=20, n_relations=2, dim=6, seed=1)
        b = BeliefState(6)
        for e in order:
            b.update([e], m)
        ref = BeliefState(6).update([2, 5, 7, 11, 13], m)
        assert np.allclose(b.b, ref.b, atol=1e-12)

    def test_incremental_matches_batch_recompute(self, tiny_model, rng):
        b = BeliefState(6)
        for _ in range(5):
            b.update([int(e) for e in rng.integers(20, size=2)], tiny_model)
        assert np.allclose(b.b, b.recompute(tiny_model), atol=1e-9)


class TestClarifiedMask:
    def test_bits_set_and_never_reset(self):
        mask = ClarifiedMask(4)
        assert mask.q.sum() == 0
        mask.set(2)
        assert mask.is_set(2) and mask.q[2] == 1.0
        mask.set(2)
        assert mask.q.sum() == 1.0

    def test_monotone_across_turns(self):
        mask = ClarifiedMask(5)
        snapshots = []
        for r in (1, 3, 1, 4):
            mask.set(r)
            snapshots.append(mask.q.copy())
        for a, b in zip(snapshots, snapshots[1:]):
            assert (b >= a).all()


class TestComposeState:
    def test_length_is_dim_plus_relations_plus_one(self, tiny_model):
        belief = BeliefState(4)
        mask = ClarifiedMask(3)
        s = compose_state(belief, mask, 0.5)
        assert s.s.shape == (8,)
        assert state_dim(4, 3) == 8

    def test_zero_belief_zero_mask_unit_signal(self):
        s = compose_state(BeliefState(4), ClarifiedMask(3), 1.0)
        assert np.allclose(s.s, [0, 0, 0, 0, 0, 0, 0, 1.0])

    def test_slices_equal_components(self, tiny_model, rng):
        belief = BeliefState(6).update([int(e) for e in rng.integers(20, size=3)],
                                       tiny_model)
        mask = ClarifiedMask(3)
        mask.set(1)
        s = compose_state(belief, mask, 0.25, turn=2).s
        assert np.allclose(s[:6], belief.b)
        assert np.allclose(s[6:9], mask.q)
        assert s[9] == 0.25


class TestCandidateSignal:
    def test_infinite_threshold_gives_one(self, tiny_model):
        c = candidate_signal(tiny_model, 0, BeliefState(6), [1, 2, 3], np.inf)
        assert c == 1.0

    def test_zero_threshold_gives_zero(self, tiny_model):
        c = candidate_signal(tiny_model, 0, BeliefState(6), [1, 2, 3], 0.0)
        assert c == 0.0

    def test_empty_candidates_give_zero(self, tiny_model):
        assert candidate_signal(tiny_model, 0, BeliefState(6), [], 1.0) == 0.0

    def test_matches_counting_oracle(self, tiny_model, rng):
        belief = BeliefState(6).update([3, 4], tiny_model)
        cands = [int(i) for i in rng.choice(20, size=20, replace=False)]
        m = float(np.median([tiny_model.score_user_item(0, i, belief.b) for i in cands]))
        expected = sum(1 for i in cands
                       if tiny_model.score_user_item(0, i, belief.b) < m) / 20
        got = candidate_signal(tiny_model, 0, belief, cands, m)
        assert got == expected
        assert 0.0 <= got <= 1.0
