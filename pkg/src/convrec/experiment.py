"""End-to-end pipelines: synthetic benchmark data, policy training against
the simulator, evaluation batches, and the ablation comparison."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AppConfig, PolicyConfig, TrainConfig
from .dialogue import state_dim
from .embedding import PreferenceModel
from .engine import (AlwaysAsk, ConversationEngine, Episode, PolicyActionProvider,
                     QuestionTemplates, SimulatorResponder)
from .kg import TEST, VALID, InteractionLog, KnowledgeGraph, load_interactions, load_triples
from .metrics import MetricReport, compute_report
from .policy import (PolicyNet, ReplayBuffer, RMSProp, dqn_step, epsilon_at,
                     sync_target)
from .simulator import EmptyTargetError, start_session
from .training import train_embedding

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------- #
# synthetic benchmark data                                               #
# ---------------------------------------------------------------------- #

def generate_synthetic_dataset(out_dir: str | Path, n_items: int = 200,
                               n_relations: int = 4, n_values: int = 5,
                               n_users: int = 100, pos_per_user: int = 15,
                               seed: int = 0) -> tuple[Path, Path]:
    """Items carry one value per relation; each user's positives all share a
    single value under that user's designated dominant relation."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    item_attr = rng.integers(n_values, size=(n_items, n_relations))
    triples = []
    for i in range(n_items):
        for r in range(n_relations):
            triples.append((f"item_{i:03d}", f"rel_{r}", f"rel{r}_val{item_attr[i, r]}"))
    triple_path = out_dir / "triples.tsv"
    triple_path.write_text("\n".join("\t".join(t) for t in triples) + "\n", encoding="utf-8")

    ratings = []
    for u in range(n_users):
        dominant = u % n_relations
        while True:
            value = int(rng.integers(n_values))
            matching = np.flatnonzero(item_attr[:, dominant] == value)
            if len(matching) >= pos_per_user:
                break
        picked = rng.choice(matching, size=pos_per_user, replace=False)
        for i in sorted(int(j) for j in picked):
            ratings.append((f"user_{u:03d}", f"item_{i:03d}", "5"))
    inter_path = out_dir / "interactions.tsv"
    inter_path.write_text("\n".join("\t".join(r) for r in ratings) + "\n", encoding="utf-8")
    return triple_path, inter_path


def synthetic_config(workdir: str | Path, seed: int = 0, epochs: int = 80,
                     dim: int = 64) -> AppConfig:
    """Desk-scale settings: fewer optimizer steps than the full datasets, so
    the adaptive learning rates run higher and the training belief covers the
    full attribute signature an episode can accumulate."""
    cfg = AppConfig()
    cfg.data.triples = str(Path(workdir) / "triples.tsv")
    cfg.data.interactions = str(Path(workdir) / "interactions.tsv")
    cfg.data.rating_threshold = 4
    cfg.data.min_interactions = 1
    cfg.data.domain_noun = "item"
    cfg.data.seed = seed
    cfg.train = TrainConfig(dim=dim, epochs=epochs, seed=seed, lr_rec=0.2,
                            lr_kg=0.04, lam=0.7, belief_max_entities=4)
    cfg.policy.seed = seed
    cfg.out_dir = str(Path(workdir) / "out")
    return cfg


# ---------------------------------------------------------------------- #
# pipeline pieces                                                        #
# ---------------------------------------------------------------------- #

@dataclass
class Bundle:
    """Everything a conversation needs: data, model, engine settings."""

    kg: KnowledgeGraph
    interactions: InteractionLog
    model: PreferenceModel
    config: AppConfig
    policy: PolicyNet | None = None
    templates: QuestionTemplates = field(default_factory=QuestionTemplates)

    def item_pool(self) -> list[int]:
        return sorted({i for _, i, _, _ in self.interactions.pairs})

    def make_engine(self, question_mode: str = "attention") -> ConversationEngine:
        return ConversationEngine(
            model=self.model, kg=self.kg, reward_cfg=self.config.reward,
            templates=self.templates, top_k=self.config.top_k,
            score_threshold=self.config.score_threshold,
            question_mode=question_mode, item_pool=self.item_pool(),
            train_positives=self.interactions.train_positive_sets(),
        )


def load_dataset(cfg: AppConfig) -> tuple[KnowledgeGraph, InteractionLog]:
    for key in ("triples", "interactions"):
        if not getattr(cfg.data, key):
            raise KeyError(f"config key data.{key} is not set")
    blocklist = frozenset()
    if cfg.data.blocklist:
        from .kg import load_blocklist

        blocklist = load_blocklist(cfg.data.blocklist)
    kg = load_triples(cfg.data.triples, blocklist)
    interactions = load_interactions(
        kg, cfg.data.interactions, cfg.data.rating_threshold,
        seed=cfg.data.seed, min_interactions=cfg.data.min_interactions)
    return kg, interactions


def fit_embedding(kg: KnowledgeGraph, interactions: InteractionLog,
                  cfg: AppConfig, average_pooling: bool = False,
                  log_fn=None) -> PreferenceModel:
    tc = cfg.train
    model = PreferenceModel(
        n_users=interactions.n_users, n_entities=kg.n_entities,
        n_relations=kg.n_relations, dim=tc.dim, attn_dim=tc.attn_dim,
        seed=tc.seed, average_pooling=average_pooling or tc.average_pooling)
    train_embedding(model, kg, interactions, tc, log_fn=log_fn)
    return model


def calibrate_threshold(model: PreferenceModel, kg: KnowledgeGraph,
                        interactions: InteractionLog, quantile: float = 0.5,
                        max_pairs: int = 500) -> float:
    """Median distance of training positives under a full attribute belief;
    used as the confidence threshold M on synthetic runs."""
    from .kg import TRAIN

    pairs = interactions.split_pairs(TRAIN)[:max_pairs]
    scores = []
    for u, i in pairs:
        vals = sorted({v for vs in kg.item_attributes(i).values() for v in vs})
        belief = (model.params["entity_emb"][vals].sum(axis=0)
                  if vals else np.zeros(model.dim))
        scores.append(model.score_user_item(u, i, belief))
    return float(np.quantile(scores, quantile))


def eval_pairs(kg: KnowledgeGraph, interactions: InteractionLog,
               split: str) -> list[tuple[int, int]]:
    """Held-out (user, target) pairs whose targets can drive a session."""
    out = []
    for u, i in sorted(interactions.split_pairs(split)):
        if kg.item_attributes(i):
            out.append((u, i))
    return out


def train_policy(bundle: Bundle, engine: ConversationEngine,
                 log_path: str | Path | None = None) -> tuple[PolicyNet, list[dict]]:
    """Online deep Q-learning against the simulator on validation targets."""
    cfg: PolicyConfig = bundle.config.policy
    pairs = eval_pairs(bundle.kg, bundle.interactions, VALID)
    if not pairs:
        raise ValueError("no validation pairs to train the policy on")
    rng = np.random.default_rng(cfg.seed + 11)
    net = PolicyNet(state_dim(bundle.model.dim, bundle.kg.n_relations),
                    hidden=cfg.hidden, seed=cfg.seed)
    target_net = net.clone()
    opt = RMSProp(cfg.lr)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    history: list[dict] = []
    steps = 0
    losses_last: float = float("nan")

    for ep in range(cfg.episodes):
        eps = epsilon_at(ep, cfg.episodes, cfg.eps_start, cfg.eps_end,
                         cfg.anneal_fraction)
        u, tgt = pairs[int(rng.integers(len(pairs)))]
        sim = start_session(bundle.kg, u, tgt)
        responder = SimulatorResponder(sim)
        provider = PolicyActionProvider(net, eps, rng)
        sess = engine.new_session(u)
        sess.episode.target = tgt
        while not sess.done:
            out = engine.system_turn(sess, provider, rng)
            if sess.done:
                break
            if out.action.name == "ASK":
                engine.submit_answer(sess, responder.answer(out.relation))
            else:
                engine.submit_judgement(sess, responder.judge(out.items))
            buffer.push(*sess.transitions[-1])
            if len(buffer) >= cfg.batch_size:
                losses_last = dqn_step(net, target_net, buffer, cfg.batch_size,
                                       bundle.config.reward.damping, opt, rng)
                steps += 1
                if steps % cfg.sync_every == 0:
                    sync_target(net, target_net)
        history.append({"episode": ep, "return": sum(sess.episode.rewards),
                        "epsilon": eps, "loss": losses_last})

    if log_path is not None:
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["episode", "return", "epsilon", "loss"])
            writer.writeheader()
            writer.writerows(history)
    return net, history


def simulate_episodes(bundle: Bundle, engine: ConversationEngine,
                      n_episodes: int, seed: int,
                      action_provider=None, split: str = TEST) -> list[Episode]:
    """Greedy-policy conversations on held-out targets, fully seeded."""
    pairs = eval_pairs(bundle.kg, bundle.interactions, split)
    if not pairs:
        raise ValueError(f"no {split} pairs to simulate")
    rng = np.random.default_rng(seed)
    if action_provider is None:
        if bundle.policy is None:
            raise ValueError("bundle has no trained policy")
        action_provider = PolicyActionProvider(bundle.policy, eps=0.0, rng=rng)
    episodes = []
    for k in range(n_episodes):
        u, tgt = pairs[int(rng.integers(len(pairs)))]
        try:
            sim = start_session(bundle.kg, u, tgt)
        except EmptyTargetError:
            continue
        ep = engine.run_episode(u, SimulatorResponder(sim), action_provider,
                                rng=rng, target=tgt)
        episodes.append(ep)
    return episodes


# ---------------------------------------------------------------------- #
# ablation harness                                                       #
# ---------------------------------------------------------------------- #

VARIANTS = ("attentive", "average_pool", "final_turn")


def run_variant(workdir: str | Path, variant: str, seed: int,
                n_eval_episodes: int = 200, epochs: int = 80,
                dim: int = 64, policy_episodes: int | None = None) -> tuple[MetricReport, Bundle, list[Episode]]:
    """Train + evaluate one configuration on the synthetic dataset already
    present in ``workdir``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    cfg = synthetic_config(workdir, seed=seed, epochs=epochs, dim=dim)
    if policy_episodes is not None:
        cfg.policy.episodes = policy_episodes
    kg, interactions = load_dataset(cfg)
    model = fit_embedding(kg, interactions, cfg,
                          average_pooling=variant == "average_pool")
    cfg.score_threshold = calibrate_threshold(model, kg, interactions)
    bundle = Bundle(kg=kg, interactions=interactions, model=model, config=cfg)
    mode = "attention" if variant == "attentive" else "uniform"
    engine = bundle.make_engine(question_mode=mode)

    if variant == "final_turn":
        provider = AlwaysAsk()
    else:
        bundle.policy, _ = train_policy(bundle, engine)
        provider = None
    episodes = simulate_episodes(bundle, engine, n_eval_episodes, seed=seed + 777,
                                 action_provider=provider)
    report = compute_report(episodes, engine.t_max, fingerprint=cfg.fingerprint())
    return report, bundle, episodes


def run_ablation(workdir: str | Path, seeds=(0, 1, 2), n_eval_episodes: int = 200,
                 epochs: int = 80, dim: int = 64,
                 variants=VARIANTS, out_dir: str | Path | None = None) -> dict:
    """Identical data and evaluation seeds across variants; one report each."""
    workdir = Path(workdir)
    if not (workdir / "triples.tsv").exists():
        generate_synthetic_dataset(workdir)
    results: dict[str, list[MetricReport]] = {v: [] for v in variants}
    for seed in seeds:
        for variant in variants:
            report, _, _ = run_variant(workdir, variant, seed,
                                       n_eval_episodes=n_eval_episodes,
                                       epochs=epochs, dim=dim)
            results[variant].append(report)
            log.info("seed %d %-12s SR=%.3f AT=%.2f", seed, variant,
                     report.sr, report.at)

    budgets = {r.t_max for reports in results.values() for r in reports}
    if len(budgets) > 1:
        raise ValueError(f"variants disagree on the turn budget: {sorted(budgets)}")

    summary = {}
    for variant, reports in results.items():
        t_max = reports[0].t_max
        mean_curve = [float(np.mean([r.sr_at[t] for r in reports]))
                      for t in range(t_max)]
        summary[variant] = {
            "sr_at_mean": mean_curve,
            "sr_mean": float(np.mean([r.sr for r in reports])),
            "at_mean": float(np.mean([r.at for r in reports])),
            "per_seed": [r.to_json() for r in reports],
        }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        for variant in variants:
            lines = ["T,sr"]
            lines += [f"{t + 1},{sr}" for t, sr in enumerate(summary[variant]["sr_at_mean"])]
            (out_dir / f"curve_{variant}.csv").write_text("\n".join(lines) + "\n",
                                                          encoding="utf-8")
    return summary
