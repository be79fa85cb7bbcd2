import json

import numpy as np
import pytest

from convrec.config import RewardConfig
from convrec.embedding import PreferenceModel
from convrec.engine import (AlwaysAsk, AlwaysRecommend, ConversationEngine, Episode,
                            QuestionTemplates, RenderError, SessionStore,
                            SimulatorResponder, read_transcripts, write_transcripts)
from convrec.kg import load_triples
from convrec.policy import Action
from convrec.simulator import start_session


class ScriptedProvider:
    def __init__(self, actions):
        self.actions = list(actions)

    def __call__(self, state, turn):
        return self.actions.pop(0)


@pytest.fixture()
def small_world(tmp_path):
    """Six items, two relations, three values each; untrained tiny model."""
    lines = []
    values = {"genre": ["g1", "g2", "g3"], "director": ["d1", "d2", "d3"]}
    for k in range(6):
        lines.append(f"m{k}\tgenre\t{values['genre'][k % 3]}")
        lines.append(f"m{k}\tdirector\t{values['director'][k // 2]}")
    p = tmp_path / "t.tsv"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    kg = load_triples(p)
    model = PreferenceModel(n_users=2, n_entities=kg.n_entities,
                            n_relations=kg.n_relations, dim=8, seed=17)
    items = [kg.entity(f"m{k}") for k in range(6)]
    return kg, model, items


def make_engine(kg, model, items, t_max=0, top_k=3, mode="attention",
                templates=None, train_positives=None):
    return ConversationEngine(
        model=model, kg=kg, reward_cfg=RewardConfig(t_max=t_max),
        templates=templates or QuestionTemplates(domain_noun="movie"),
        top_k=top_k, score_threshold=5.0, question_mode=mode,
        item_pool=items, train_positives=train_positives or {})


class TestTemplates:
    def test_default_template_matches_movie_domain(self):
        t = QuestionTemplates(domain_noun="movie")
        assert t.render("genre") == "What is your preference on the genre of the movie?"

    def test_underscores_render_as_spaces(self):
        t = QuestionTemplates(domain_noun="book")
        assert t.render("publication_year") == \
            "What is your preference on the publication year of the book?"

    def test_specific_template_wins(self):
        t = QuestionTemplates({"genre": "Which {relation} do you enjoy?"})
        assert t.render("genre") == "Which genre do you enjoy?"

    def test_missing_template_without_default_errors(self):
        t = QuestionTemplates(default=None)
        with pytest.raises(RenderError):
            t.render("genre")

    def test_file_roundtrip(self, tmp_path):
        p = tmp_path / "templates.tsv"
        p.write_text("genre\tWhat {relation} fits your mood?\n", encoding="utf-8")
        t = QuestionTemplates.load(p, domain_noun="movie")
        assert t.render("genre") == "What genre fits your mood?"
        assert t.render("director") == \
            "What is your preference on the director of the movie?"

    def test_all_synthetic_relations_render(self, synth_data):
        _, kg, _ = synth_data
        t = QuestionTemplates(domain_noun="item")
        for name in kg.relation_names:
            out = t.render(name)
            assert name.replace("_", " ") in out

    def test_bad_slot_reports_relation(self):
        t = QuestionTemplates({"genre": "Broken {slot}?"})
        with pytest.raises(RenderError, match="genre"):
            t.render("genre")


class TestSelectQuestion:
    def test_empty_asked_gives_top_ranked(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items)
        assert engine.select_question(0, set()) == model.rank_relations(0)[0]

    def test_all_but_one_asked_gives_remainder(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items)
        assert engine.select_question(0, {0}) == 1
        assert engine.select_question(0, {1}) == 0

    def test_all_asked_errors(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items)
        with pytest.raises(ValueError, match="forced"):
            engine.select_question(0, {0, 1})

    def test_matches_filter_argmax_oracle(self, trained_bundle, rng):
        engine = trained_bundle.make_engine("attention")
        model = trained_bundle.model
        for _ in range(20):
            user = int(rng.integers(model.n_users))
            asked = {int(r) for r in
                     rng.choice(model.n_relations,
                                size=int(rng.integers(model.n_relations)),
                                replace=False)}
            alpha = model.user_attention(user)
            unasked = [r for r in range(model.n_relations) if r not in asked]
            expected = max(unasked, key=lambda r: (alpha[r], -r))
            assert engine.select_question(user, asked) == expected

    def test_uniform_mode_draws_from_unasked(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, mode="uniform")
        rng = np.random.default_rng(0)
        picks = {engine.select_question(0, set(), rng) for _ in range(50)}
        assert picks == {0, 1}

    def test_blocklisted_relations_never_asked(self, small_world):
        kg, model, items = small_world
        engine = ConversationEngine(
            model=model, kg=kg, reward_cfg=RewardConfig(),
            question_blocklist=frozenset({kg.relation("director")}),
            item_pool=items, score_threshold=5.0)
        assert engine.askable == (kg.relation("genre"),)
        assert engine.t_max == 2


class TestRunEpisode:
    def test_immediate_recommend_success(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, t_max=1, top_k=len(items))
        sim = start_session(kg, 0, items[2])
        ep = engine.run_episode(0, SimulatorResponder(sim), AlwaysRecommend(),
                                target=items[2])
        assert ep.outcome == "success"
        assert ep.turns_used == 1
        assert ep.rewards == [1.0]

    def test_ask_only_policy_times_out_with_final_penalty(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, t_max=2)
        sim = start_session(kg, 0, items[0])
        ep = engine.run_episode(0, SimulatorResponder(sim), AlwaysAsk(),
                                target=items[0])
        assert ep.outcome == "failure"
        assert ep.turns_used == 2
        assert ep.rewards[-1] == -0.3
        assert ep.rewards[0] == 0.1  # informative first answer

    def test_all_relations_asked_forces_recommendation(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, top_k=len(items))  # t_max = 3
        sim = start_session(kg, 0, items[4])
        ep = engine.run_episode(0, SimulatorResponder(sim), AlwaysAsk(),
                                target=items[4])
        assert [t.action for t in ep.turns] == ["ask", "ask", "recommend"]
        assert ep.turns[-1].forced
        assert ep.outcome == "success"

    def test_no_relation_queried_twice(self, trained_policy_bundle):
        bundle = trained_policy_bundle
        engine = bundle.make_engine("attention")
        from convrec.experiment import simulate_episodes

        for ep in simulate_episodes(bundle, engine, 30, seed=5):
            asked = [t.relation for t in ep.turns if t.action == "ask"]
            assert len(asked) == len(set(asked))

    def test_rejected_items_never_reappear(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, t_max=4, top_k=2)
        target = items[5]
        sim = start_session(kg, 0, target)
        ep = engine.run_episode(0, SimulatorResponder(sim), AlwaysRecommend(),
                                target=target)
        shown = [tuple(t.items) for t in ep.turns if t.action == "recommend"]
        seen = set()
        for lst in shown:
            assert not (set(lst) & seen)
            seen.update(lst)

    def test_reward_sequence_maps_outcomes(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, t_max=4, top_k=2)
        sim = start_session(kg, 1, items[3])
        ep = engine.run_episode(1, SimulatorResponder(sim),
                                ScriptedProvider([Action.ASK, Action.RECOMMEND,
                                                  Action.ASK, Action.RECOMMEND]),
                                target=items[3])
        for turn in ep.turns:
            if turn.action == "ask" and turn.t < engine.t_max:
                assert turn.reward in (0.1, -0.1)
            elif turn.action == "recommend" and turn.accepted:
                assert turn.reward == 1.0
            else:
                assert turn.reward == -0.3

    def test_empty_candidate_pool_fails_immediately(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, train_positives={0: set(items)})
        sim = start_session(kg, 0, items[0])
        ep = engine.run_episode(0, SimulatorResponder(sim), AlwaysRecommend(),
                                target=items[0])
        assert ep.outcome == "failure"
        assert ep.turns == []

    def test_responder_failure_aborts_episode(self, small_world):
        kg, model, items = small_world

        class DeadResponder:
            def answer(self, relation):
                raise TimeoutError("live user went away")

            def judge(self, items):
                raise TimeoutError("live user went away")

        engine = make_engine(kg, model, items)
        with pytest.raises(TimeoutError):
            engine.run_episode(0, DeadResponder(), AlwaysAsk(), target=items[0])

    def test_deterministic_given_seed(self, trained_policy_bundle):
        from convrec.experiment import simulate_episodes

        engine = trained_policy_bundle.make_engine("attention")
        a = simulate_episodes(trained_policy_bundle, engine, 10, seed=3)
        b = simulate_episodes(trained_policy_bundle, engine, 10, seed=3)
        assert [ep.to_json() for ep in a] == [ep.to_json() for ep in b]


class TestGoldenTrace:
    def test_three_turn_scripted_episode(self, small_world):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, top_k=len(items))
        target = items[1]
        sim = start_session(kg, 0, target)
        ep = engine.run_episode(
            0, SimulatorResponder(sim),
            ScriptedProvider([Action.ASK, Action.ASK, Action.RECOMMEND]),
            target=target)

        first_rel = model.rank_relations(0)[0]
        second_rel = 1 - first_rel
        golden = {
            "user": 0, "target": target, "outcome": "success", "turns_used": 3,
            "turns": [
                {"t": 1, "action": "ask", "relation": first_rel,
                 "question": engine.render_question(first_rel),
                 "response_entities": sorted(kg.item_attributes(target)[first_rel]),
                 "reward": 0.1},
                {"t": 2, "action": "ask", "relation": second_rel,
                 "question": engine.render_question(second_rel),
                 "response_entities": sorted(kg.item_attributes(target)[second_rel]),
                 "reward": 0.1},
                {"t": 3, "action": "recommend", "items": ep.turns[2].items,
                 "accepted": True, "reward": 1.0},
            ],
        }
        assert ep.to_json() == golden
        assert target in ep.turns[2].items


class TestSessionStore:
    def test_double_rejection_shrinks_pool(self):
        store = SessionStore(candidates=set(range(40)))
        store.handle_rejection(list(range(10)))
        store.handle_rejection(list(range(10, 20)))
        assert len(store.rejected) == 20
        assert len(store.candidates) == 20

    def test_matches_set_difference_oracle(self, rng):
        universe = set(range(100))
        store = SessionStore(candidates=set(universe))
        rejected_all = set()
        for _ in range(5):
            batch = [int(i) for i in rng.choice(100, size=7, replace=False)]
            store.handle_rejection(batch)
            rejected_all.update(batch)
            assert store.candidates == universe - rejected_all


class TestTranscriptIO:
    def test_roundtrip(self, small_world, tmp_path):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, top_k=len(items))
        sim = start_session(kg, 0, items[2])
        ep = engine.run_episode(0, SimulatorResponder(sim), AlwaysRecommend(),
                                target=items[2])
        path = tmp_path / "transcripts.jsonl"
        write_transcripts(path, [ep])
        back = read_transcripts(path)
        assert len(back) == 1
        assert back[0].to_json() == ep.to_json()

    def test_lines_are_sorted_json(self, small_world, tmp_path):
        kg, model, items = small_world
        engine = make_engine(kg, model, items, top_k=len(items))
        sim = start_session(kg, 1, items[0])
        ep = engine.run_episode(1, SimulatorResponder(sim), AlwaysRecommend(),
                                target=items[0])
        path = tmp_path / "t.jsonl"
        write_transcripts(path, [ep])
        line = path.read_text(encoding="utf-8").strip()
        assert line == json.dumps(json.loads(line), sort_keys=True)
