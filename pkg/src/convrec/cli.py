"""Command-line surface: train both models, run simulations, evaluate logs,
serve the HTTP API, or chat in the terminal."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import AppConfig
from .embedding import CheckpointError, PreferenceModel
from .engine import QuestionTemplates, read_transcripts, write_transcripts
from .experiment import (Bundle, calibrate_threshold, fit_embedding,
                         load_dataset, simulate_episodes, train_policy)
from .kg import TEST
from .metrics import compute_report, write_curve_csv
from .policy import PolicyNet

log = logging.getLogger("convrec")


def _load_templates(cfg: AppConfig) -> QuestionTemplates:
    if cfg.data.templates:
        return QuestionTemplates.load(cfg.data.templates, domain_noun=cfg.data.domain_noun)
    return QuestionTemplates(domain_noun=cfg.data.domain_noun)


def build_bundle(cfg: AppConfig, embedding_path: str | Path,
                 policy_path: str | Path | None = None) -> Bundle:
    """Assemble data + checkpoints, verifying id-map compatibility."""
    kg, interactions = load_dataset(cfg)
    model, meta = PreferenceModel.load(embedding_path)
    if meta.get("relation_names") != kg.relation_names:
        raise CheckpointError("checkpoint relations do not match the loaded KG")
    if model.n_entities != kg.n_entities or model.n_users != interactions.n_users:
        raise CheckpointError("checkpoint id spaces do not match the loaded data")
    if "score_threshold" in meta:
        cfg.score_threshold = float(meta["score_threshold"])
    bundle = Bundle(kg=kg, interactions=interactions, model=model, config=cfg,
                    templates=_load_templates(cfg))
    if policy_path is not None:
        bundle.policy, _ = PolicyNet.load(policy_path)
    return bundle


def _out_dir(cfg: AppConfig, args) -> Path:
    out = Path(args.out if getattr(args, "out", None) else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train_embed(cfg: AppConfig, args) -> int:
    kg, interactions = load_dataset(cfg)
    out = _out_dir(cfg, args)
    reports = []

    def log_epoch(e, rep):
        reports.append(rep)
        log.info("epoch %3d  rec=%.4f kg=%.4f joint=%.4f",
                 e, rep.rec_loss, rep.kg_loss, rep.joint_loss)

    model = fit_embedding(kg, interactions, cfg, log_fn=log_epoch)
    if cfg.score_threshold <= 0:
        cfg.score_threshold = calibrate_threshold(model, kg, interactions)
        log.info("calibrated score threshold M = %.4f", cfg.score_threshold)
    model.save(out / "embedding.npz", extra_meta={
        "lam": cfg.train.lam,
        "train_seed": cfg.train.seed,
        "score_threshold": cfg.score_threshold,
        "entity_names": kg.entity_names,
        "relation_names": kg.relation_names,
        "user_names": interactions.user_names,
    })
    with open(out / "epochs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "rec_loss", "kg_loss", "joint_loss"])
        for e, rep in enumerate(reports):
            writer.writerow([e, rep.rec_loss, rep.kg_loss, rep.joint_loss])
    cfg.save(out / "config.json")
    log.info("wrote %s", out / "embedding.npz")
    return 0


def cmd_train_policy(cfg: AppConfig, args) -> int:
    bundle = build_bundle(cfg, args.embedding)
    out = _out_dir(cfg, args)
    engine = bundle.make_engine(question_mode=args.question_mode)
    engine.templates = bundle.templates
    net, _ = train_policy(bundle, engine, log_path=out / "policy_log.csv")
    net.save(out / "policy.npz", extra_meta={"question_mode": args.question_mode})
    log.info("wrote %s", out / "policy.npz")
    return 0


def cmd_simulate(cfg: AppConfig, args) -> int:
    bundle = build_bundle(cfg, args.embedding, args.policy)
    out = _out_dir(cfg, args)
    engine = bundle.make_engine(question_mode=args.question_mode)
    engine.templates = bundle.templates
    episodes = simulate_episodes(bundle, engine, args.episodes, seed=args.seed,
                                 split=args.split)
    path = out / "transcripts.jsonl"
    write_transcripts(path, episodes)
    report = compute_report(episodes, engine.t_max, fingerprint=cfg.fingerprint())
    report.save(out / "report.json")
    write_curve_csv(out / "curve.csv", report)
    log.info("simulated %d episodes: SR=%.3f AT=%.3f -> %s",
             len(episodes), report.sr, report.at, path)
    return 0


def cmd_evaluate(cfg: AppConfig | None, args) -> int:
    episodes = read_transcripts(args.transcripts)
    if not episodes:
        log.error("no episodes in %s", args.transcripts)
        return 2
    t_max = args.t_max or max(ep.turns_used for ep in episodes)
    try:
        report = compute_report(episodes, t_max)
    except (AssertionError, ValueError) as exc:
        log.error("metric invariant violated: %s", exc)
        return 1
    out = Path(args.out) if args.out else Path(args.transcripts).parent
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    write_curve_csv(out / "curve.csv", report)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def _make_service(cfg: AppConfig, args):
    from .service import LiveAnswerLexicon, SessionService

    bundle = build_bundle(cfg, args.embedding, args.policy)
    engine = bundle.make_engine(question_mode=args.question_mode)
    engine.templates = bundle.templates
    aliases = (LiveAnswerLexicon.load_aliases(cfg.data.aliases)
               if cfg.data.aliases else None)
    lexicon = LiveAnswerLexicon(bundle.kg, aliases)
    service = SessionService(engine, bundle.policy, bundle.kg, lexicon,
                             bundle.interactions.user_ids,
                             timeout_s=cfg.session_timeout_s)
    return bundle, service


def cmd_serve(cfg: AppConfig, args) -> int:
    import uvicorn

    from .service import create_app

    _, service = _make_service(cfg, args)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_chat(cfg: AppConfig, args) -> int:
    bundle, service = _make_service(cfg, args)
    users = bundle.interactions.user_names
    print(f"known users: {', '.join(users[:8])}{' ...' if len(users) > 8 else ''}")
    try:
        user = input("user id> ").strip()
        out = service.create_session(user)
    except (EOFError, KeyboardInterrupt):
        return 0
    sid = out["session_id"]
    while True:
        print(f"SYSTEM: {out['message']}")
        if out.get("recommendations"):
            for k, rec in enumerate(out["recommendations"], start=1):
                print(f"  {k}. {rec['name']}  (score {rec['score']:.3f})")
        if out["state"]["done"]:
            break
        try:
            text = input("you> ").strip()
        except (EOFError, KeyboardInterrupt):
            print()
            break
        if out.get("recommendations"):
            accept = text.lower() in ("y", "yes", "accept")
            out = service.judge(sid, accept)
        else:
            out = service.reply(sid, text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="convrec",
                                     description="conversational KG recommender")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="AppConfig JSON file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="override seeds")

    p = sub.add_parser("train-embed", help="train the preference model")
    add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lam", type=float, help="ranking/KG loss trade-off")
    p.add_argument("--average-pooling", action="store_true",
                   help="ablation: uniform relation aggregation")

    p = sub.add_parser("train-policy", help="train the dialogue policy by RL")
    add_common(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--question-mode", choices=("attention", "uniform"),
                   default="attention")

    p = sub.add_parser("simulate", help="run simulated conversations")
    add_common(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--split", default=TEST, choices=("train", "valid", "test"))
    p.add_argument("--question-mode", choices=("attention", "uniform"),
                   default="attention")

    p = sub.add_parser("evaluate", help="compute metrics from an episode log")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--t-max", type=int)
    p.add_argument("--out")

    p = sub.add_parser("serve", help="run the HTTP session API")
    add_common(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--question-mode", choices=("attention", "uniform"),
                   default="attention")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)

    p = sub.add_parser("chat", help="terminal chat loop")
    add_common(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--question-mode", choices=("attention", "uniform"),
                   default="attention")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    handlers = {
        "train-embed": cmd_train_embed,
        "train-policy": cmd_train_policy,
        "simulate": cmd_simulate,
        "evaluate": cmd_evaluate,
        "serve": cmd_serve,
        "chat": cmd_chat,
    }
    try:
        cfg = None
        if getattr(args, "config", None):
            cfg = AppConfig.load(args.config)
            if args.seed is not None:
                cfg.train.seed = args.seed
                cfg.policy.seed = args.seed
                cfg.data.seed = args.seed
            if getattr(args, "epochs", None):
                cfg.train.epochs = args.epochs
            if getattr(args, "lam", None) is not None:
                cfg.train.lam = args.lam
            if getattr(args, "average_pooling", False):
                cfg.train.average_pooling = True
            if getattr(args, "episodes", None) and args.command == "train-policy":
                cfg.policy.episodes = args.episodes
        return handlers[args.command](cfg, args)
    except (CheckpointError, FileNotFoundError, KeyError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
