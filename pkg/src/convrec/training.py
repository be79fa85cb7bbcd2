"""Joint training of the preference model: pairwise ranking loss on
interactions plus a hinge loss on KG triples, with hand-derived gradients.

Gradient conventions: L1 distances use sign(0) = 0, ReLU uses a zero
subgradient at 0, and belief vectors are fixed context (no gradient flows
into the entity embeddings they were summed from).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .embedding import KG_PARAMS, REC_PARAMS, PreferenceModel
from .kg import TRAIN, InteractionLog, KnowledgeGraph


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    inner = np.einsum("br,br->b", probs, dprobs)
    return probs * (dprobs - inner[:, None])


def _proj_backward(dy: np.ndarray, v: np.ndarray, w: np.ndarray,
                   dot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Backward of y = v - (w.v) w for one upstream dy; returns (dv, dw)."""
    w_dot_dy = np.einsum("bd,bd->b", w, dy)
    dv = dy - w_dot_dy[:, None] * w
    dw = -w_dot_dy[:, None] * v - dot[:, None] * dy
    return dv, dw


def _attn_backward(dlogits: np.ndarray, cache: dict, model: PreferenceModel,
                   w_key: str, b_key: str, h_key: str,
                   grads: dict) -> tuple[np.ndarray, np.ndarray]:
    """Backward through one attention net; returns (dU, dTargets)."""
    d = model.dim
    grads[h_key] += np.einsum("br,brk->k", dlogits, cache["G"])
    dG = dlogits[:, :, None] * model.params[h_key]
    dZ = dG * (cache["Z"] > 0)
    grads[w_key] += np.einsum("brk,brm->km", dZ, cache["X"])
    grads[b_key] += dZ.sum(axis=(0, 1))
    dX = dZ @ model.params[w_key]
    return dX[:, :, :d].sum(axis=1), dX[:, :, d:].sum(axis=0)


def _zero_grads(model: PreferenceModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(p) for name, p in model.params.items()}


# ---------------------------------------------------------------------- #
# recommendation (BPR) side                                              #
# ---------------------------------------------------------------------- #

def rec_loss_and_grads(model: PreferenceModel, users: np.ndarray,
                       pos_items: np.ndarray, neg_items: np.ndarray,
                       beliefs: np.ndarray | None, l2_rec: float,
                       want_grads: bool = True):
    """Sum of -ln sigma(f_neg - f_pos) over the batch, plus the L2 penalty
    on the recommendation parameters. Returns (loss, grads-or-None)."""
    if len(users) == 0:
        raise ValueError("empty batch")
    users = np.asarray(users, dtype=np.intp)
    pos_items = np.asarray(pos_items, dtype=np.intp)
    neg_items = np.asarray(neg_items, dtype=np.intp)

    fw = model.user_forward(users, beliefs, with_cache=want_grads)
    w_u = fw["w_u"]
    pos_perp, pos_dot = model.item_perp(pos_items, w_u)
    neg_perp, neg_dot = model.item_perp(neg_items, w_u)
    base = fw["u_perp"] + fw["p_hat"]
    d_pos = base - pos_perp
    d_neg = base - neg_perp
    f_pos = np.abs(d_pos).sum(axis=1)
    f_neg = np.abs(d_neg).sum(axis=1)
    x = f_neg - f_pos
    loss = float(np.logaddexp(0.0, -x).sum())
    for name in REC_PARAMS:
        loss += l2_rec * float((model.params[name] ** 2).sum())
    if not want_grads:
        return loss, None

    grads = _zero_grads(model)
    g = sigmoid(x) - 1.0                       # d loss / d x, elementwise
    dd_pos = -g[:, None] * np.sign(d_pos)      # d loss / d d_pos
    dd_neg = g[:, None] * np.sign(d_neg)
    d_base = dd_pos + dd_neg

    E = model.params["entity_emb"]
    di_pos, dwu_pos = _proj_backward(-dd_pos, E[pos_items], w_u, pos_dot)
    di_neg, dwu_neg = _proj_backward(-dd_neg, E[neg_items], w_u, neg_dot)
    np.add.at(grads["entity_emb"], pos_items, di_pos)
    np.add.at(grads["entity_emb"], neg_items, di_neg)

    du_hat, dwu_user = _proj_backward(d_base, fw["u_hat"], w_u, fw["dot_u"])
    d_user = du_hat
    dw_u = dwu_pos + dwu_neg + dwu_user

    # translation branch: p_hat = alpha @ relation_emb
    dp = d_base
    dalpha = dp @ model.params["relation_emb"].T
    grads["relation_emb"] += fw["alpha"].T @ dp

    # hyperplane branch: w_u = (beta @ relation_normal) / ||.||
    w_dot = np.einsum("bd,bd->b", w_u, dw_u)
    dw_agg = (dw_u - w_dot[:, None] * w_u) / fw["norms"][:, None]
    dbeta = dw_agg @ model.params["relation_normal"].T
    grads["relation_normal"] += fw["beta"].T @ dw_agg

    if not model.average_pooling:
        dlog_t = _softmax_backward(fw["alpha"], dalpha)
        du_t, drel_t = _attn_backward(dlog_t, fw["cache_t"], model,
                                      "attn_t_w", "attn_t_b", "attn_t_h", grads)
        dlog_p = _softmax_backward(fw["beta"], dbeta)
        du_p, dnrm_p = _attn_backward(dlog_p, fw["cache_p"], model,
                                      "attn_p_w", "attn_p_b", "attn_p_h", grads)
        d_user = d_user + du_t + du_p
        grads["relation_emb"] += drel_t
        grads["relation_normal"] += dnrm_p

    np.add.at(grads["user_emb"], users, d_user)
    for name in REC_PARAMS:
        grads[name] += 2.0 * l2_rec * model.params[name]
    return loss, grads


def bpr_loss(model: PreferenceModel, batch: list[tuple[int, int, int]],
             beliefs: np.ndarray | None = None, l2_rec: float = 0.0) -> float:
    """Ranking-loss value for a batch of (user, positive, negative) triples."""
    if not batch:
        raise ValueError("empty batch")
    arr = np.asarray(batch, dtype=np.intp)
    loss, _ = rec_loss_and_grads(model, arr[:, 0], arr[:, 1], arr[:, 2],
                                 beliefs, l2_rec, want_grads=False)
    return loss


# ---------------------------------------------------------------------- #
# KG (hinge) side                                                        #
# ---------------------------------------------------------------------- #

def _triple_forward(model: PreferenceModel, trip: np.ndarray) -> dict:
    h, r, t = trip[:, 0], trip[:, 1], trip[:, 2]
    E = model.params["entity_emb"]
    w = model.params["relation_normal"][r]
    eh, et = E[h], E[t]
    dot_h = np.einsum("bd,bd->b", w, eh)
    dot_t = np.einsum("bd,bd->b", w, et)
    diff = (eh - dot_h[:, None] * w) + model.params["relation_emb"][r] \
        - (et - dot_t[:, None] * w)
    return {"h": h, "r": r, "t": t, "w": w, "eh": eh, "et": et,
            "dot_h": dot_h, "dot_t": dot_t, "diff": diff,
            "f": np.abs(diff).sum(axis=1)}


def _triple_backward(c: np.ndarray, fwd: dict, grads: dict) -> None:
    dd = c[:, None] * np.sign(fwd["diff"])
    deh, dw_h = _proj_backward(dd, fwd["eh"], fwd["w"], fwd["dot_h"])
    det, dw_t = _proj_backward(-dd, fwd["et"], fwd["w"], fwd["dot_t"])
    np.add.at(grads["entity_emb"], fwd["h"], deh)
    np.add.at(grads["entity_emb"], fwd["t"], det)
    np.add.at(grads["relation_emb"], fwd["r"], dd)
    np.add.at(grads["relation_normal"], fwd["r"], dw_h + dw_t)


def kg_loss_and_grads(model: PreferenceModel, pos_triples: np.ndarray,
                      neg_triples: np.ndarray, margin: float,
                      want_grads: bool = True):
    """Hinge on corrupted triples: sum of max(0, margin + f_pos - f_neg)."""
    if len(pos_triples) == 0:
        raise ValueError("empty batch")
    pos_triples = np.asarray(pos_triples, dtype=np.intp)
    neg_triples = np.asarray(neg_triples, dtype=np.intp)
    fp = _triple_forward(model, pos_triples)
    fn = _triple_forward(model, neg_triples)
    m = margin + fp["f"] - fn["f"]
    active = (m > 0).astype(float)
    loss = float((m * active).sum())
    if not want_grads:
        return loss, None
    grads = _zero_grads(model)
    _triple_backward(active, fp, grads)
    _triple_backward(-active, fn, grads)
    return loss, grads


def kg_margin_loss(model: PreferenceModel,
                   batch: list[tuple[tuple[int, int, int], tuple[int, int, int]]],
                   margin: float = 1.0) -> float:
    if not batch:
        raise ValueError("empty batch")
    pos = np.asarray([p for p, _ in batch], dtype=np.intp)
    neg = np.asarray([n for _, n in batch], dtype=np.intp)
    loss, _ = kg_loss_and_grads(model, pos, neg, margin, want_grads=False)
    return loss


# ---------------------------------------------------------------------- #
# joint objective                                                        #
# ---------------------------------------------------------------------- #

def joint_loss_and_grads(model: PreferenceModel, rec_batch: dict,
                         kg_batch: dict, cfg: TrainConfig,
                         want_grads: bool = True):
    """lam * L_rec + (1 - lam) * L_kg; grads combined with the same weights."""
    lf, g_rec = rec_loss_and_grads(
        model, rec_batch["users"], rec_batch["pos"], rec_batch["neg"],
        rec_batch.get("beliefs"), cfg.l2_rec, want_grads=want_grads and cfg.lam > 0)
    lg, g_kg = kg_loss_and_grads(
        model, kg_batch["pos"], kg_batch["neg"], cfg.margin,
        want_grads=want_grads and cfg.lam < 1)
    total = cfg.lam * lf + (1.0 - cfg.lam) * lg
    if not want_grads:
        return lf, lg, total, None
    grads = _zero_grads(model)
    for name in grads:
        if g_rec is not None:
            grads[name] += cfg.lam * g_rec[name]
        if g_kg is not None:
            grads[name] += (1.0 - cfg.lam) * g_kg[name]
    return lf, lg, total, grads


# ---------------------------------------------------------------------- #
# optimizers (explicit update rules, one slot set per tensor)            #
# ---------------------------------------------------------------------- #

class Adagrad:
    """theta -= lr * g / (sqrt(sum g^2) + eps)."""

    def __init__(self, lr: float, eps: float = 1e-8):
        self.lr = lr
        self.eps = eps
        self.acc: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             names: tuple[str, ...]) -> None:
        for n in names:
            g = grads[n]
            acc = self.acc.setdefault(n, np.zeros_like(g))
            acc += g * g
            params[n] -= self.lr * g / (np.sqrt(acc) + self.eps)


class Adam:
    """First/second-moment scaling with bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             names: tuple[str, ...]) -> None:
        self.t += 1
        for n in names:
            g = grads[n]
            m = self.m.setdefault(n, np.zeros_like(g))
            v = self.v.setdefault(n, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            params[n] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------- #
# epoch loop                                                             #
# ---------------------------------------------------------------------- #

@dataclass
class EpochReport:
    rec_loss: float     # mean per interaction pair
    kg_loss: float      # mean per triple pair
    joint_loss: float
    n_pairs: int


class NonFiniteParameters(RuntimeError):
    pass


class EmbeddingTrainer:
    def __init__(self, model: PreferenceModel, kg: KnowledgeGraph,
                 interactions: InteractionLog, cfg: TrainConfig):
        self.model = model
        self.kg = kg
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed + 1)
        self.opt_rec = Adagrad(cfg.lr_rec)
        self.opt_kg = Adam(cfg.lr_kg)
        self.triples = np.asarray(kg.triples, dtype=np.intp)

        self.train_pairs = interactions.split_pairs(TRAIN)
        if not self.train_pairs:
            raise ValueError("no training positives")
        self.neg_by_user: dict[int, list[int]] = {}
        for u, i, lab, s in interactions.pairs:
            if lab == 0 and s == TRAIN:
                self.neg_by_user.setdefault(u, []).append(i)
        self.pos_by_user = interactions.positives
        self.all_items = sorted({i for _, i in self.train_pairs}
                                | {i for negs in self.neg_by_user.values() for i in negs})
        # flattened attribute values per item, for belief sampling
        self.item_values: dict[int, list[int]] = {}
        for _, item in self.train_pairs:
            if item not in self.item_values:
                vals = sorted({v for vs in kg.item_attributes(item).values() for v in vs})
                self.item_values[item] = vals

    def _sample_negative_item(self, user: int) -> int:
        negs = self.neg_by_user.get(user)
        if negs:
            return negs[int(self.rng.integers(len(negs)))]
        forbidden = self.pos_by_user.get(user, set())
        pool = [i for i in self.all_items if i not in forbidden]
        return pool[int(self.rng.integers(len(pool)))]

    def _sample_belief(self, item: int) -> np.ndarray:
        vals = self.item_values.get(item, [])
        if not vals or self.rng.random() < self.cfg.belief_drop_prob:
            return np.zeros(self.model.dim)
        k = min(self.cfg.belief_max_entities, len(vals))
        picked = self.rng.choice(len(vals), size=k, replace=False)
        rows = [vals[j] for j in picked]
        return self.model.params["entity_emb"][rows].sum(axis=0)

    def _check_finite(self, batch_index: int) -> None:
        for name, p in self.model.params.items():
            if not np.isfinite(p).all():
                raise NonFiniteParameters(
                    f"non-finite values in {name} after batch {batch_index}")

    def epoch(self) -> EpochReport:
        cfg = self.cfg
        pairs = list(self.train_pairs)
        order = self.rng.permutation(len(pairs))
        n = len(pairs)
        kg_idx = self.rng.integers(len(self.triples), size=n)

        sum_lf = sum_lg = 0.0
        for b0 in range(0, n, cfg.batch_size):
            sel = order[b0:b0 + cfg.batch_size]
            users = np.array([pairs[j][0] for j in sel], dtype=np.intp)
            pos = np.array([pairs[j][1] for j in sel], dtype=np.intp)
            neg = np.array([self._sample_negative_item(int(u)) for u in users], dtype=np.intp)
            beliefs = np.stack([self._sample_belief(int(i)) for i in pos])

            kg_pos = self.triples[kg_idx[b0:b0 + len(sel)]]
            kg_neg = np.array([self.kg.sample_negative_triple(tuple(t), self.rng)
                               for t in kg_pos], dtype=np.intp)

            lf, lg, _, grads = joint_loss_and_grads(
                self.model,
                {"users": users, "pos": pos, "neg": neg, "beliefs": beliefs},
                {"pos": kg_pos, "neg": kg_neg}, cfg)
            sum_lf += lf
            sum_lg += lg

            self.opt_rec.step(self.model.params, grads, REC_PARAMS)
            self.opt_kg.step(self.model.params, grads, KG_PARAMS)
            self.model.renormalize_hyperplanes()
            self._check_finite(b0 // cfg.batch_size)

        lf_mean = sum_lf / n
        lg_mean = sum_lg / n
        return EpochReport(rec_loss=lf_mean, kg_loss=lg_mean,
                           joint_loss=cfg.lam * lf_mean + (1 - cfg.lam) * lg_mean,
                           n_pairs=n)


def train_embedding(model: PreferenceModel, kg: KnowledgeGraph,
                    interactions: InteractionLog, cfg: TrainConfig,
                    log_fn=None) -> list[EpochReport]:
    trainer = EmbeddingTrainer(model, kg, interactions, cfg)
    reports = []
    for e in range(cfg.epochs):
        rep = trainer.epoch()
        reports.append(rep)
        if log_fn is not None:
            log_fn(e, rep)
    return reports
