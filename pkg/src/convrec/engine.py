"""Conversation orchestration: policy decision, question generation,
recommendation, and reaction handling, with one shared turn loop for both
simulated and live sessions."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RewardConfig
from .dialogue import BeliefState, ClarifiedMask, candidate_signal, compose_state
from .embedding import PreferenceModel
from .kg import KnowledgeGraph
from .policy import Action, PolicyNet, TurnOutcome, act, reward

SUCCESS, FAILURE = "success", "failure"


class RenderError(KeyError):
    pass


class QuestionTemplates:
    """Relation-name keyed clarifying-question templates with a generic
    fallback; relation names render with underscores as spaces."""

    DEFAULT = "What is your preference on the {relation} of the {noun}?"

    def __init__(self, templates: dict[str, str] | None = None,
                 domain_noun: str = "item", default: str | None = DEFAULT):
        self.templates = dict(templates or {})
        self.domain_noun = domain_noun
        self.default = default

    @classmethod
    def load(cls, path: str | Path, domain_noun: str = "item") -> "QuestionTemplates":
        templates = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected relation<TAB>template")
                templates[parts[0]] = parts[1]
        return cls(templates, domain_noun=domain_noun)

    def render(self, relation_name: str) -> str:
        template = self.templates.get(relation_name, self.default)
        if template is None:
            raise RenderError(f"no template for relation {relation_name!r}")
        try:
            return template.format(relation=relation_name.replace("_", " "),
                                   noun=self.domain_noun)
        except (KeyError, IndexError) as exc:
            raise RenderError(f"bad template for {relation_name!r}: {exc}") from exc


@dataclass
class SessionStore:
    """Per-episode candidate bookkeeping."""

    candidates: set[int]
    rejected: set[int] = field(default_factory=set)
    asked: set[int] = field(default_factory=set)

    def handle_rejection(self, rejected_items: list[int]) -> "SessionStore":
        self.rejected.update(int(i) for i in rejected_items)
        self.candidates.difference_update(self.rejected)
        return self


@dataclass
class TurnRecord:
    t: int
    action: str                      # "ask" | "recommend"
    relation: int | None = None
    question: str | None = None
    items: list[int] | None = None
    response_entities: list[int] | None = None
    accepted: bool | None = None
    reward: float = 0.0
    forced: bool = False

    def to_json(self) -> dict:
        out = {"t": self.t, "action": self.action, "reward": self.reward}
        if self.action == "ask":
            out["relation"] = self.relation
            out["question"] = self.question
            out["response_entities"] = self.response_entities
        else:
            out["items"] = self.items
            out["accepted"] = self.accepted
        if self.forced:
            out["forced"] = True
        return out


@dataclass
class Episode:
    user: int
    target: int | None
    turns: list[TurnRecord] = field(default_factory=list)
    outcome: str = FAILURE
    turns_used: int = 0

    @property
    def rewards(self) -> list[float]:
        return [t.reward for t in self.turns]

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS

    def to_json(self) -> dict:
        return {"user": self.user, "target": self.target, "outcome": self.outcome,
                "turns_used": self.turns_used,
                "turns": [t.to_json() for t in self.turns]}

    @classmethod
    def from_json(cls, raw: dict) -> "Episode":
        ep = cls(user=raw["user"], target=raw.get("target"),
                 outcome=raw["outcome"], turns_used=raw["turns_used"])
        for tr in raw["turns"]:
            ep.turns.append(TurnRecord(
                t=tr["t"], action=tr["action"], relation=tr.get("relation"),
                question=tr.get("question"), items=tr.get("items"),
                response_entities=tr.get("response_entities"),
                accepted=tr.get("accepted"), reward=tr["reward"],
                forced=tr.get("forced", False)))
        return ep


@dataclass
class SystemTurn:
    t: int
    action: Action
    relation: int | None = None
    question: str | None = None
    items: list[int] | None = None
    forced: bool = False


class EngineSession:
    def __init__(self, user: int, dim: int, n_relations: int, candidates: set[int]):
        self.user = user
        self.belief = BeliefState(dim)
        self.mask = ClarifiedMask(n_relations)
        self.store = SessionStore(candidates=candidates)
        self.turn = 0
        self.episode = Episode(user=user, target=None)
        self.done = False
        self.pending: SystemTurn | None = None
        self.pending_state: np.ndarray | None = None
        self.transitions: list[tuple] = []  # (s, a, r, s_next, terminal)


class PolicyActionProvider:
    """Epsilon-greedy wrapper around a Q-network."""

    def __init__(self, net: PolicyNet, eps: float = 0.0,
                 rng: np.random.Generator | None = None):
        self.net = net
        self.eps = eps
        self.rng = rng or np.random.default_rng(0)

    def __call__(self, state: np.ndarray, turn: int) -> Action:
        return act(self.net, state, self.eps, self.rng)


class AlwaysAsk:
    def __call__(self, state: np.ndarray, turn: int) -> Action:
        return Action.ASK


class AlwaysRecommend:
    def __call__(self, state: np.ndarray, turn: int) -> Action:
        return Action.RECOMMEND


class ConversationEngine:
    """Shared turn machinery. ``question_mode`` is "attention" (rank by the
    user's relation attention) or "uniform" (the average-pooling ablation)."""

    def __init__(self, model: PreferenceModel, kg: KnowledgeGraph,
                 reward_cfg: RewardConfig, templates: QuestionTemplates | None = None,
                 top_k: int = 10, score_threshold: float = 0.25,
                 question_mode: str = "attention",
                 question_blocklist: frozenset[int] = frozenset(),
                 item_pool: list[int] | None = None,
                 train_positives: dict[int, set[int]] | None = None):
        if question_mode not in ("attention", "uniform"):
            raise ValueError(f"unknown question mode {question_mode!r}")
        self.model = model
        self.kg = kg
        self.reward_cfg = reward_cfg
        self.templates = templates or QuestionTemplates()
        self.top_k = top_k
        self.score_threshold = score_threshold
        self.question_mode = question_mode
        self.askable = tuple(r for r in range(kg.n_relations)
                             if r not in question_blocklist)
        if not self.askable:
            raise ValueError("no askable relations left")
        self.t_max = reward_cfg.t_max if reward_cfg.t_max > 0 else len(self.askable) + 1
        self.item_pool = sorted(item_pool) if item_pool is not None else []
        self.train_positives = train_positives or {}

    # ------------------------------------------------------------------ #

    def new_session(self, user: int) -> EngineSession:
        pool = set(self.item_pool) - self.train_positives.get(user, set())
        sess = EngineSession(user, self.model.dim, self.kg.n_relations, pool)
        return sess

    def state_vector(self, sess: EngineSession) -> np.ndarray:
        c = candidate_signal(self.model, sess.user, sess.belief,
                             sess.store.candidates, self.score_threshold)
        return compose_state(sess.belief, sess.mask, c, turn=sess.turn).s

    def select_question(self, user: int, asked: set[int],
                        rng: np.random.Generator | None = None) -> int:
        unasked = [r for r in self.askable if r not in asked]
        if not unasked:
            raise ValueError("all relations asked; recommendation is forced")
        if self.question_mode == "uniform":
            rng = rng or np.random.default_rng(0)
            return int(sorted(unasked)[int(rng.integers(len(unasked)))])
        ranked = self.model.rank_relations(user)
        unasked_set = set(unasked)
        for r in ranked:
            if r in unasked_set:
                return r
        raise AssertionError("unreachable")

    def system_turn(self, sess: EngineSession,
                    action_provider, rng: np.random.Generator | None = None) -> SystemTurn:
        """Decide and emit the next system output; the session then waits for
        the user's reaction."""
        if sess.done:
            raise RuntimeError("session is finished")
        if sess.pending is not None:
            raise RuntimeError("session already has an open system turn")
        sess.turn += 1
        state = self.state_vector(sess)
        action = Action(action_provider(state, sess.turn))
        forced = False
        unasked = [r for r in self.askable if r not in sess.store.asked]
        if action == Action.ASK and not unasked:
            action = Action.RECOMMEND
            forced = True
        if action == Action.RECOMMEND and not sess.store.candidates:
            # degenerate: nothing left to recommend
            sess.done = True
            sess.episode.outcome = FAILURE
            sess.episode.turns_used = min(sess.turn, self.t_max)
            return SystemTurn(t=sess.turn, action=Action.RECOMMEND, items=[], forced=forced)

        if action == Action.ASK:
            rel = self.select_question(sess.user, sess.store.asked, rng)
            out = SystemTurn(t=sess.turn, action=action, relation=rel,
                             question=self.render_question(rel), forced=forced)
        else:
            items = self.model.recommend_topk(sess.user, sess.belief.b,
                                              sess.store.candidates, self.top_k)
            out = SystemTurn(t=sess.turn, action=action, items=items, forced=forced)
        sess.pending = out
        sess.pending_state = state
        return out

    def render_question(self, relation: int) -> str:
        return self.templates.render(self.kg.relation_names[relation])

    # ------------------------------------------------------------------ #

    def _finish_turn(self, sess: EngineSession, record: TurnRecord,
                     outcome: TurnOutcome) -> TurnRecord:
        cfg = self.reward_cfg
        success = outcome == TurnOutcome.ACCEPTED_RECOMMENDATION
        terminal = success or sess.turn >= self.t_max or not sess.store.candidates
        if sess.turn >= self.t_max and not success:
            outcome = TurnOutcome.REJECTED_OR_TIMEOUT
        record.reward = reward(outcome, cfg)
        sess.episode.turns.append(record)
        s_next = None if terminal else self.state_vector(sess)
        sess.transitions.append((sess.pending_state, int(record.action == "recommend"),
                                 record.reward, s_next, terminal))
        sess.pending = None
        sess.pending_state = None
        if terminal:
            sess.done = True
            sess.episode.outcome = SUCCESS if success else FAILURE
            sess.episode.turns_used = sess.turn
        return record

    def submit_answer(self, sess: EngineSession, entities: list[int]) -> TurnRecord:
        """Complete an open ASK turn with the user's affirmed entities."""
        if sess.pending is None or sess.pending.action != Action.ASK:
            raise RuntimeError("no open ask turn")
        rel = sess.pending.relation
        sess.store.asked.add(rel)
        entities = [int(e) for e in entities]
        informative = any(rel in self.kg.value_relations.get(e, ()) for e in entities)
        if entities:
            sess.belief.update(entities, self.model)
        if informative:
            sess.mask.set(rel)
        record = TurnRecord(t=sess.turn, action="ask", relation=rel,
                            question=sess.pending.question,
                            response_entities=entities, forced=sess.pending.forced)
        outcome = (TurnOutcome.INFORMATIVE_ANSWER if informative
                   else TurnOutcome.UNINFORMATIVE_ANSWER)
        return self._finish_turn(sess, record, outcome)

    def submit_judgement(self, sess: EngineSession, accept: bool,
                         rejected_items: list[int] | None = None) -> TurnRecord:
        """Complete an open RECOMMEND turn with accept/reject."""
        if sess.pending is None or sess.pending.action != Action.RECOMMEND:
            raise RuntimeError("no open recommendation turn")
        items = sess.pending.items
        record = TurnRecord(t=sess.turn, action="recommend", items=items,
                            accepted=bool(accept), forced=sess.pending.forced)
        if accept:
            outcome = TurnOutcome.ACCEPTED_RECOMMENDATION
        else:
            outcome = TurnOutcome.REJECTED_OR_TIMEOUT
            sess.store.handle_rejection(rejected_items if rejected_items is not None else items)
        return self._finish_turn(sess, record, outcome)

    # ------------------------------------------------------------------ #

    def run_episode(self, user: int, responder, action_provider,
                    rng: np.random.Generator | None = None,
                    target: int | None = None) -> Episode:
        """Drive a full conversation against a responder exposing
        ``answer(relation) -> list[int]`` and ``judge(items) -> bool``."""
        sess = self.new_session(user)
        sess.episode.target = target
        while not sess.done:
            out = self.system_turn(sess, action_provider, rng)
            if sess.done:            # empty candidate pool
                break
            if out.action == Action.ASK:
                self.submit_answer(sess, responder.answer(out.relation))
            else:
                self.submit_judgement(sess, responder.judge(out.items))
        return sess.episode


class SimulatorResponder:
    """Adapter presenting a simulated user to the engine loop."""

    def __init__(self, sim, max_values: int | None = None):
        from . import simulator

        self.sim = sim
        self.max_values = max_values
        self._answer = simulator.answer_question
        self._judge = simulator.judge_recommendation

    def answer(self, relation: int) -> list[int]:
        return self._answer(self.sim, relation, self.max_values)

    def judge(self, items: list[int]) -> bool:
        return self._judge(self.sim, items)


def write_transcripts(path: str | Path, episodes: list[Episode]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(ep.to_json(), sort_keys=True) + "\n")


def read_transcripts(path: str | Path) -> list[Episode]:
    episodes = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                episodes.append(Episode.from_json(json.loads(line)))
    return episodes
