"""Preference-mining model: translation scoring on relation hyperplanes.

Users, items, and attribute values share a d-dimensional space. A user's
translation vector is an attention-weighted mix of relation embeddings, and
the user's projection hyperplane is a second attention-weighted mix of the
per-relation unit normals. Scores are L1 distances; lower means preferred.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

REC_PARAMS = ("user_emb", "attn_t_w", "attn_t_b", "attn_t_h",
              "attn_p_w", "attn_p_b", "attn_p_h")
KG_PARAMS = ("entity_emb", "relation_emb", "relation_normal")
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def project(v: np.ndarray, w: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Remove the component of ``v`` along the unit normal ``w``."""
    norm = np.linalg.norm(w)
    if abs(norm - 1.0) > atol:
        raise AssertionError(f"projection normal must have unit norm, got {norm}")
    return v - np.dot(w, v) * w


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class PreferenceModel:
    """All trainable tensors plus the forward computations over them."""

    def __init__(self, n_users: int, n_entities: int, n_relations: int,
                 dim: int = 100, attn_dim: int | None = None, seed: int = 0,
                 average_pooling: bool = False):
        if n_relations < 1:
            raise ValueError("need at least one relation")
        self.n_users = n_users
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.dim = dim
        self.attn_dim = dim if attn_dim is None else attn_dim
        self.seed = seed
        self.average_pooling = average_pooling

        rng = np.random.default_rng(seed)
        bound = 6.0 / np.sqrt(dim)
        da = self.attn_dim

        def uniform(*shape):
            return rng.uniform(-bound, bound, size=shape)

        self.params: dict[str, np.ndarray] = {
            "user_emb": uniform(n_users, dim),
            "entity_emb": uniform(n_entities, dim),
            "relation_emb": uniform(n_relations, dim),
            "relation_normal": uniform(n_relations, dim),
            "attn_t_w": uniform(da, 2 * dim),
            "attn_t_b": uniform(da),
            "attn_t_h": uniform(da),
            "attn_p_w": uniform(da, 2 * dim),
            "attn_p_b": uniform(da),
            "attn_p_h": uniform(da),
        }
        self.renormalize_hyperplanes()

    # ------------------------------------------------------------------ #
    # forward pieces                                                     #
    # ------------------------------------------------------------------ #

    def renormalize_hyperplanes(self) -> None:
        w = self.params["relation_normal"]
        w /= np.linalg.norm(w, axis=1, keepdims=True)

    def _attn_forward(self, users: np.ndarray, targets: np.ndarray,
                      w_key: str, b_key: str, h_key: str) -> dict:
        """Per-(user, relation) scalar scores via a one-hidden-layer net."""
        U = self.params["user_emb"][users]              # (B, d)
        B, d = U.shape
        R = targets.shape[0]
        X = np.empty((B, R, 2 * d))
        X[:, :, :d] = U[:, None, :]
        X[:, :, d:] = targets[None, :, :]
        Z = X @ self.params[w_key].T + self.params[b_key]
        G = np.maximum(Z, 0.0)
        logits = G @ self.params[h_key]                 # (B, R)
        return {"X": X, "Z": Z, "G": G, "logits": logits}

    def user_forward(self, users: np.ndarray, beliefs: np.ndarray | None = None,
                     with_cache: bool = False) -> dict:
        """Everything user-side: attention weights, translation, hyperplane.

        ``beliefs`` is a (B, d) array of fixed context vectors (or None).
        Raises if any aggregated hyperplane normal collapses to zero.
        """
        users = np.asarray(users, dtype=np.intp)
        B = users.shape[0]
        R = self.n_relations
        rel = self.params["relation_emb"]
        nrm = self.params["relation_normal"]

        if self.average_pooling:
            alpha = np.full((B, R), 1.0 / R)
            beta = np.full((B, R), 1.0 / R)
            cache_t = cache_p = None
        else:
            cache_t = self._attn_forward(users, rel, "attn_t_w", "attn_t_b", "attn_t_h")
            cache_p = self._attn_forward(users, nrm, "attn_p_w", "attn_p_b", "attn_p_h")
            alpha = _softmax_rows(cache_t["logits"])
            beta = _softmax_rows(cache_p["logits"])

        p_hat = alpha @ rel                              # (B, d)
        w_agg = beta @ nrm                               # (B, d)
        norms = np.linalg.norm(w_agg, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("aggregated projection normal has zero norm")
        w_u = w_agg / norms[:, None]

        U = self.params["user_emb"][users]
        u_hat = U if beliefs is None else U + beliefs
        dot_u = np.einsum("bd,bd->b", w_u, u_hat)
        u_perp = u_hat - dot_u[:, None] * w_u

        out = {"users": users, "alpha": alpha, "beta": beta, "p_hat": p_hat,
               "w_agg": w_agg, "norms": norms, "w_u": w_u,
               "u_hat": u_hat, "dot_u": dot_u, "u_perp": u_perp}
        if with_cache:
            out["cache_t"] = cache_t
            out["cache_p"] = cache_p
        return out

    def item_perp(self, items: np.ndarray, w_u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        I = self.params["entity_emb"][np.asarray(items, dtype=np.intp)]
        dot_i = np.einsum("bd,bd->b", w_u, I)
        return I - dot_i[:, None] * w_u, dot_i

    # ------------------------------------------------------------------ #
    # scoring                                                            #
    # ------------------------------------------------------------------ #

    def user_attention(self, user: int) -> np.ndarray:
        """Attention weights over relations; sums to 1."""
        return self.user_forward(np.array([user]))["alpha"][0]

    def user_translation(self, user: int) -> np.ndarray:
        return self.user_forward(np.array([user]))["p_hat"][0]

    def user_projection(self, user: int) -> np.ndarray:
        """Unit normal of the user's projection hyperplane."""
        return self.user_forward(np.array([user]))["w_u"][0]

    def score_user_item(self, user: int, item: int, belief: np.ndarray | None = None) -> float:
        if belief is not None and belief.shape != (self.dim,):
            raise ValueError(f"belief must have shape ({self.dim},), got {belief.shape}")
        return float(self.score_items(user, np.array([item]), belief)[0])

    def score_items(self, user: int, items: np.ndarray, belief: np.ndarray | None = None) -> np.ndarray:
        """L1 translation distances from one user to many items."""
        items = np.asarray(items, dtype=np.intp)
        b = None if belief is None else np.asarray(belief, dtype=float)[None, :]
        fw = self.user_forward(np.array([user]), b)
        w_u = np.repeat(fw["w_u"], len(items), axis=0)
        i_perp, _ = self.item_perp(items, w_u)
        diff = fw["u_perp"] + fw["p_hat"] - i_perp
        return np.abs(diff).sum(axis=1)

    def score_triple(self, triple: tuple[int, int, int]) -> float:
        h, r, t = triple
        for eid in (h, t):
            if not 0 <= eid < self.n_entities:
                raise KeyError(f"unknown entity id {eid}")
        if not 0 <= r < self.n_relations:
            raise KeyError(f"unknown relation id {r}")
        return float(self.score_triples(np.array([h]), np.array([r]), np.array([t]))[0])

    def score_triples(self, heads: np.ndarray, rels: np.ndarray, tails: np.ndarray) -> np.ndarray:
        E = self.params["entity_emb"]
        w = self.params["relation_normal"][rels]
        eh, et = E[heads], E[tails]
        h_perp = eh - np.einsum("bd,bd->b", w, eh)[:, None] * w
        t_perp = et - np.einsum("bd,bd->b", w, et)[:, None] * w
        diff = h_perp + self.params["relation_emb"][rels] - t_perp
        return np.abs(diff).sum(axis=1)

    def rank_relations(self, user: int) -> list[int]:
        """Relations sorted by attention weight, descending; ties by id."""
        alpha = self.user_attention(user)
        ids = np.arange(self.n_relations)
        return [int(r) for r in ids[np.lexsort((ids, -alpha))]]

    def recommend_topk(self, user: int, belief: np.ndarray | None,
                       candidates, k: int) -> list[int]:
        """The k lowest-scoring candidates, ascending; ties by item id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        cands = np.array(sorted(candidates), dtype=np.intp)
        if cands.size == 0:
            raise ValueError("empty candidate set")
        scores = self.score_items(user, cands, belief)
        order = np.lexsort((cands, scores))
        return [int(i) for i in cands[order][:k]]

    # ------------------------------------------------------------------ #
    # checkpointing                                                      #
    # ------------------------------------------------------------------ #

    def save(self, path: str | Path, extra_meta: dict | None = None) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "n_users": self.n_users,
            "n_entities": self.n_entities,
            "n_relations": self.n_relations,
            "dim": self.dim,
            "attn_dim": self.attn_dim,
            "seed": self.seed,
            "average_pooling": self.average_pooling,
        }
        if extra_meta:
            meta.update(extra_meta)
        np.savez(path, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
                 **self.params)

    @classmethod
    def load(cls, path: str | Path) -> tuple["PreferenceModel", dict]:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"incompatible checkpoint version {meta.get('version')}, "
                    f"expected {CHECKPOINT_VERSION}")
            model = cls.__new__(cls)
            model.n_users = meta["n_users"]
            model.n_entities = meta["n_entities"]
            model.n_relations = meta["n_relations"]
            model.dim = meta["dim"]
            model.attn_dim = meta["attn_dim"]
            model.seed = meta["seed"]
            model.average_pooling = meta["average_pooling"]
            model.params = {k: data[k].copy() for k in data.files if k != "meta"}
        return model, meta
