"""HTTP session API for live conversations, plus the surface-string lexicon
that stands in for entity linking."""
from __future__ import annotations

import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .engine import ConversationEngine, EngineSession, PolicyActionProvider, SystemTurn
from .kg import KnowledgeGraph
from .policy import Action, PolicyNet

_PUNCT = re.compile(r"[^\w\s]", flags=re.UNICODE)
_WS = re.compile(r"\s+")


def normalize_surface(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace; idempotent."""
    text = text.lower().replace("_", " ")
    text = _PUNCT.sub(" ", text)
    return _WS.sub(" ", text).strip()


class LiveAnswerLexicon:
    """Exact/alias matching of normalized surfaces against entity names."""

    def __init__(self, kg: KnowledgeGraph, aliases: dict[str, str] | None = None):
        self.surface_to_entity: dict[str, int] = {}
        for eid, name in enumerate(kg.entity_names):
            self.surface_to_entity.setdefault(normalize_surface(name), eid)
        for surface, entity_name in (aliases or {}).items():
            if entity_name in kg.entity_ids:
                self.surface_to_entity[normalize_surface(surface)] = kg.entity_ids[entity_name]
        # longest surfaces first so multi-word names win over fragments
        self._ordered = sorted(self.surface_to_entity, key=lambda s: (-len(s), s))

    @staticmethod
    def load_aliases(path: str | Path) -> dict[str, str]:
        aliases = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected surface<TAB>entity-name")
                aliases[parts[0]] = parts[1]
        return aliases

    def link(self, text: str) -> list[int]:
        """Entity ids whose surface occurs in the text, in occurrence order."""
        haystack = f" {normalize_surface(text)} "
        found: list[tuple[int, int]] = []
        seen: set[int] = set()
        for surface in self._ordered:
            pos = haystack.find(f" {surface} ")
            if pos >= 0:
                eid = self.surface_to_entity[surface]
                if eid not in seen:
                    seen.add(eid)
                    found.append((pos, eid))
        return [eid for _, eid in sorted(found)]


@dataclass
class SessionHandle:
    session_id: str
    user: int
    engine_session: EngineSession
    created_at: float
    last_activity: float
    lock: threading.Lock = field(default_factory=threading.Lock)
    messages: list[dict] = field(default_factory=list)


NO_LINK_NOTICE = ("Sorry, I couldn't match that to anything I know. "
                  "Let me try a different question.")


class SessionService:
    def __init__(self, engine: ConversationEngine, policy: PolicyNet,
                 kg: KnowledgeGraph, lexicon: LiveAnswerLexicon,
                 user_ids: dict[str, int], timeout_s: float = 900.0,
                 clock=time.monotonic):
        self.engine = engine
        self.policy = policy
        self.kg = kg
        self.lexicon = lexicon
        self.user_ids = user_ids
        self.timeout_s = timeout_s
        self.clock = clock
        self.sessions: dict[str, SessionHandle] = {}
        self.registry_lock = threading.Lock()

    # -------------------------------------------------------------- #

    def _evict_expired(self) -> None:
        now = self.clock()
        with self.registry_lock:
            dead = [sid for sid, h in self.sessions.items()
                    if now - h.last_activity > self.timeout_s]
            for sid in dead:
                del self.sessions[sid]

    def _get(self, session_id: str) -> SessionHandle:
        self._evict_expired()
        with self.registry_lock:
            handle = self.sessions.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404, detail="unknown or expired session")
        handle.last_activity = self.clock()
        return handle

    def resolve_user(self, user_id) -> int:
        if isinstance(user_id, int):
            if 0 <= user_id < self.engine.model.n_users:
                return user_id
            raise HTTPException(status_code=404, detail=f"unknown user {user_id}")
        uid = self.user_ids.get(str(user_id))
        if uid is None:
            raise HTTPException(status_code=404, detail=f"unknown user {user_id!r}")
        return uid

    # -------------------------------------------------------------- #

    def state_summary(self, handle: SessionHandle) -> dict:
        sess = handle.engine_session
        alpha = self.engine.model.user_attention(sess.user)
        c = float(self.engine.state_vector(sess)[-1])
        return {
            "turn": sess.turn,
            "candidate_ratio": c,
            "candidates_left": len(sess.store.candidates),
            "clarified": [int(b) for b in sess.mask.q],
            "belief_entities": [
                {"id": e, "name": self.kg.entity_names[e]}
                for e in sess.belief.affirmed_entities
            ],
            "relation_attention": [
                {"relation": self.kg.relation_names[r], "weight": float(alpha[r])}
                for r in range(self.kg.n_relations)
            ],
            "done": sess.done,
            "outcome": sess.episode.outcome if sess.done else None,
            "turns_used": sess.episode.turns_used if sess.done else None,
        }

    def _emit_system(self, handle: SessionHandle, prefix: str = "") -> dict:
        """Advance the engine one system turn and package the output."""
        sess = handle.engine_session
        provider = PolicyActionProvider(self.policy, eps=0.0)
        out: SystemTurn = self.engine.system_turn(sess, provider)
        if sess.done and out.items == []:
            message = prefix + "I have run out of items to recommend."
            payload = {"message": message, "recommendations": None}
        elif out.action == Action.ASK:
            payload = {"message": prefix + out.question, "recommendations": None}
        else:
            recs = [{"item_id": i,
                     "name": self.kg.entity_names[i],
                     "score": float(self.engine.model.score_user_item(
                         sess.user, i, sess.belief.b))}
                    for i in out.items]
            message = prefix + "Here is what I would recommend. Anything you like?"
            payload = {"message": message, "recommendations": recs}
        handle.messages.append({"role": "system", **payload})
        return payload

    def create_session(self, user_id) -> dict:
        self._evict_expired()
        uid = self.resolve_user(user_id)
        sess = self.engine.new_session(uid)
        now = self.clock()
        handle = SessionHandle(session_id=secrets.token_hex(16), user=uid,
                               engine_session=sess, created_at=now,
                               last_activity=now)
        with handle.lock:
            payload = self._emit_system(handle)
        with self.registry_lock:
            self.sessions[handle.session_id] = handle
        return {"session_id": handle.session_id, **payload,
                "state": self.state_summary(handle)}

    def reply(self, session_id: str, text: str) -> dict:
        handle = self._get(session_id)
        with handle.lock:
            sess = handle.engine_session
            if sess.done:
                raise HTTPException(status_code=400, detail="session already finished")
            if sess.pending is None or sess.pending.action != Action.ASK:
                raise HTTPException(status_code=400,
                                    detail="no question is open; judge the recommendation instead")
            handle.messages.append({"role": "user", "message": text})
            entities = self.lexicon.link(text)
            self.engine.submit_answer(sess, entities)
            prefix = "" if entities else NO_LINK_NOTICE + " "
            if sess.done:
                payload = {"message": prefix + "We are out of turns. "
                                               "Thanks for chatting!",
                           "recommendations": None}
                handle.messages.append({"role": "system", **payload})
            else:
                payload = self._emit_system(handle, prefix)
            return {"linked_entities": entities, **payload,
                    "state": self.state_summary(handle)}

    def judge(self, session_id: str, accept: bool,
              rejected_items: list[int] | None = None) -> dict:
        handle = self._get(session_id)
        with handle.lock:
            sess = handle.engine_session
            if sess.done:
                raise HTTPException(status_code=400, detail="session already finished")
            if sess.pending is None or sess.pending.action != Action.RECOMMEND:
                raise HTTPException(status_code=400, detail="no recommendation is open")
            handle.messages.append({"role": "user",
                                    "message": "accept" if accept else "reject"})
            self.engine.submit_judgement(sess, accept, rejected_items)
            if sess.done:
                if accept:
                    msg = (f"Great! Found something you like in "
                           f"{sess.episode.turns_used} turn(s).")
                else:
                    msg = "We are out of turns. Thanks for chatting!"
                payload = {"message": msg, "recommendations": None}
                handle.messages.append({"role": "system", **payload})
            else:
                payload = self._emit_system(handle)
            return {**payload, "state": self.state_summary(handle)}

    def transcript(self, session_id: str) -> dict:
        handle = self._get(session_id)
        with handle.lock:
            return {"session_id": session_id,
                    "user": handle.user,
                    "messages": list(handle.messages),
                    "turns": [t.to_json() for t in handle.engine_session.episode.turns],
                    "state": self.state_summary(handle)}


class CreateSessionBody(BaseModel):
    user_id: str | int


class ReplyBody(BaseModel):
    text: str


class JudgeBody(BaseModel):
    accept: bool
    rejected_items: list[int] | None = None


def create_app(service: SessionService) -> FastAPI:
    from fastapi.middleware.cors import CORSMiddleware

    app = FastAPI(title="convrec session API")
    # single-tenant demo service; the browser client runs on another origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        return service.create_session(body.user_id)

    @app.post("/sessions/{session_id}/reply")
    def reply(session_id: str, body: ReplyBody):
        return service.reply(session_id, body.text)

    @app.post("/sessions/{session_id}/judge")
    def judge(session_id: str, body: JudgeBody):
        return service.judge(session_id, body.accept, body.rejected_items)

    @app.get("/sessions/{session_id}")
    def transcript(session_id: str):
        return service.transcript(session_id)

    @app.get("/health")
    def health():
        return {"status": "ok"}

    return app
