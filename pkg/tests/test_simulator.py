import numpy as np
import pytest

from convrec.kg import load_triples
from convrec.simulator import (EmptyTargetError, SimulatedUser, answer_question,
                               judge_recommendation, start_session)


@pytest.fixture()
def movie_kg(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text(
        "m1\tgenre\tg1\nm1\tgenre\tg2\nm1\tdirector\td1\n"
        "m2\tgenre\tg3\nm2\twiki\turl1\n",
        encoding="utf-8")
    return load_triples(p)


class TestStartSession:
    def test_preference_covers_target_relations(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, user=0, target_item=kg.entity("m1"))
        assert set(sim.preference) == {kg.relation("genre"), kg.relation("director")}

    def test_blocklisted_relation_excluded(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m2"),
                            blocklist=frozenset({kg.relation("wiki")}))
        assert set(sim.preference) == {kg.relation("genre")}

    def test_attribute_free_target_rejected(self, movie_kg):
        kg = movie_kg
        with pytest.raises(EmptyTargetError):
            start_session(kg, 0, kg.entity("g1"))

    def test_preference_equals_attribute_index(self, synth_data):
        _, kg, _ = synth_data
        rng = np.random.default_rng(9)
        items = [h for h in kg.attributes if kg.item_attributes(h)]
        for item in rng.choice(items, size=20, replace=False):
            sim = start_session(kg, 0, int(item))
            expected = {r: tuple(sorted(v))
                        for r, v in kg.item_attributes(int(item)).items()}
            assert sim.preference == expected


class TestAnswerQuestion:
    def test_returns_all_values_for_known_relation(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m1"))
        got = answer_question(sim, kg.relation("genre"))
        assert got == sorted([kg.entity("g1"), kg.entity("g2")])

    def test_unknown_relation_gives_empty(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m2"))
        assert answer_question(sim, kg.relation("director")) == []

    def test_answer_cap(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m1"))
        assert len(answer_question(sim, kg.relation("genre"), max_values=1)) == 1

    def test_repeat_query_deterministic(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m1"))
        first = answer_question(sim, kg.relation("genre"))
        for _ in range(5):
            assert answer_question(sim, kg.relation("genre")) == first

    def test_never_reveals_target_item(self, synth_data):
        _, kg, _ = synth_data
        items = sorted(h for h in kg.attributes)
        sim = start_session(kg, 0, items[0])
        for r in range(kg.n_relations):
            assert sim.target_item not in answer_question(sim, r)


class TestJudgeRecommendation:
    def test_target_in_last_position_accepts(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m1"))
        items = [kg.entity("m2")] * 9 + [kg.entity("m1")]
        assert judge_recommendation(sim, items) is True

    def test_target_absent_rejects(self, movie_kg):
        kg = movie_kg
        sim = start_session(kg, 0, kg.entity("m1"))
        assert judge_recommendation(sim, [kg.entity("m2")]) is False

    def test_accept_rate_equals_membership_frequency(self, rng):
        sim = SimulatedUser(user=0, target_item=5, preference={0: (1,)})
        accepts = 0
        contains = 0
        for _ in range(1000):
            items = [int(i) for i in rng.integers(20, size=10)]
            contains += 5 in items
            accepts += judge_recommendation(sim, items)
        assert accepts == contains
