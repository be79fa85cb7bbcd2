"""Knowledge-graph and interaction-log ingestion.

Triples come as UTF-8 TSV ``head<TAB>relation<TAB>tail``; interactions as
``user<TAB>item<TAB>rating``. Strings are interned to dense ids in
first-seen order, so a fixed file always yields the same id assignment.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

POSITIVE = 1
NEGATIVE = 0

TRAIN, VALID, TEST = "train", "valid", "test"


class TripleFormatError(ValueError):
    """A triple or interaction file failed to parse."""


@dataclass
class KnowledgeGraph:
    entity_names: list[str]
    relation_names: list[str]
    triples: list[tuple[int, int, int]]
    entity_ids: dict[str, int]
    relation_ids: dict[str, int]
    triple_set: set[tuple[int, int, int]] = field(repr=False, default_factory=set)
    # head entity -> relation -> set of tail entities
    attributes: dict[int, dict[int, set[int]]] = field(repr=False, default_factory=dict)
    # tail entity -> relations it appears under
    value_relations: dict[int, set[int]] = field(repr=False, default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entity_names)

    @property
    def n_relations(self) -> int:
        return len(self.relation_names)

    def entity(self, name: str) -> int:
        return self.entity_ids[name]

    def relation(self, name: str) -> int:
        return self.relation_ids[name]

    def item_attributes(self, item: int) -> dict[int, set[int]]:
        """Attribute values of one head entity, grouped by relation."""
        if not 0 <= item < self.n_entities:
            raise KeyError(f"unknown entity id {item}")
        return self.attributes.get(item, {})

    def sample_negative_triple(
        self, positive: tuple[int, int, int], rng: np.random.Generator,
        max_attempts: int = 200,
    ) -> tuple[int, int, int]:
        """Corrupt head or tail (coin flip) until the triple is unobserved."""
        if not self.triples:
            raise ValueError("empty graph")
        h, r, t = positive
        for _ in range(max_attempts):
            e = int(rng.integers(self.n_entities))
            cand = (e, r, t) if rng.random() < 0.5 else (h, r, e)
            if cand not in self.triple_set:
                return cand
        raise RuntimeError(
            f"no unobserved corruption of {positive} found in {max_attempts} attempts"
        )


def load_triples(path: str | Path, blocklist: frozenset[str] | set[str] = frozenset()) -> KnowledgeGraph:
    """Load a triple TSV, dropping blocklisted relations, and index attributes."""
    path = Path(path)
    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    entity_names: list[str] = []
    relation_names: list[str] = []
    triples: list[tuple[int, int, int]] = []
    triple_set: set[tuple[int, int, int]] = set()
    attributes: dict[int, dict[int, set[int]]] = defaultdict(lambda: defaultdict(set))
    value_relations: dict[int, set[int]] = defaultdict(set)

    def intern(name: str, ids: dict[str, int], names: list[str]) -> int:
        if name not in ids:
            ids[name] = len(names)
            names.append(name)
        return ids[name]

    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise TripleFormatError(f"{path}:{lineno}: expected head<TAB>relation<TAB>tail, got {line!r}")
            n_lines += 1
            head, rel, tail = parts
            if rel in blocklist:
                continue
            h = intern(head, entity_ids, entity_names)
            r = intern(rel, relation_ids, relation_names)
            t = intern(tail, entity_ids, entity_names)
            trip = (h, r, t)
            if trip in triple_set:
                continue
            triple_set.add(trip)
            triples.append(trip)
            attributes[h][r].add(t)
            value_relations[t].add(r)
    if n_lines == 0:
        raise TripleFormatError(f"{path}: empty triple file")
    if not relation_names:
        raise TripleFormatError(f"{path}: no relations left after blocklist")
    kg = KnowledgeGraph(
        entity_names=entity_names,
        relation_names=relation_names,
        triples=triples,
        entity_ids=entity_ids,
        relation_ids=relation_ids,
        triple_set=triple_set,
        attributes={h: dict(rels) for h, rels in attributes.items()},
        value_relations=dict(value_relations),
    )
    log.info("loaded %s: %d entities, %d relations, %d triples",
             path.name, kg.n_entities, kg.n_relations, len(kg.triples))
    return kg


def load_blocklist(path: str | Path) -> frozenset[str]:
    """One relation name per line; blank lines ignored."""
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


@dataclass
class InteractionLog:
    """Implicit-feedback pairs with per-pair split assignment.

    ``pairs`` rows are (user, item, label, split). Users and items are dense
    ids; items are KG entity ids.
    """

    user_names: list[str]
    user_ids: dict[str, int]
    pairs: list[tuple[int, int, int, str]]
    positives: dict[int, set[int]] = field(repr=False, default_factory=dict)
    dropped_unknown_items: int = 0

    @property
    def n_users(self) -> int:
        return len(self.user_names)

    def split_pairs(self, split: str, label: int | None = POSITIVE) -> list[tuple[int, int]]:
        return [(u, i) for u, i, lab, s in self.pairs
                if s == split and (label is None or lab == label)]

    def train_positive_sets(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {u: set() for u in range(self.n_users)}
        for u, i, lab, s in self.pairs:
            if lab == POSITIVE and s == TRAIN:
                out[u].add(i)
        return out


def _kcore_filter(pos: dict[str, set[str]], min_interactions: int) -> dict[str, set[str]]:
    """Drop users/items with fewer than ``min_interactions`` positives, to a fixed point."""
    pos = {u: set(items) for u, items in pos.items()}
    while True:
        item_deg: dict[str, int] = defaultdict(int)
        for items in pos.values():
            for i in items:
                item_deg[i] += 1
        bad_items = {i for i, d in item_deg.items() if d < min_interactions}
        changed = False
        for u in list(pos):
            if bad_items:
                kept = pos[u] - bad_items
                if len(kept) != len(pos[u]):
                    pos[u] = kept
                    changed = True
            if len(pos[u]) < min_interactions:
                del pos[u]
                changed = True
        if not changed:
            return pos


def load_interactions(
    kg: KnowledgeGraph,
    path: str | Path,
    rating_threshold: int,
    seed: int = 0,
    min_interactions: int = 10,
    split_ratios: tuple[float, float, float] = (0.7, 0.2, 0.1),
) -> InteractionLog:
    """Threshold ratings into positives, sample matched negatives, split 7:2:1.

    Ratings at or above the threshold become positives; items unknown to the
    KG are dropped with a warning count. Negatives are sampled uniformly from
    items the user never rated, one per positive, then both sets are split
    per user.
    """
    if rating_threshold < 0:
        raise ValueError("rating_threshold must be >= 0")
    path = Path(path)
    rated: dict[str, set[str]] = defaultdict(set)
    positives: dict[str, set[str]] = defaultdict(set)
    dropped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise TripleFormatError(f"{path}:{lineno}: expected user<TAB>item<TAB>rating, got {line!r}")
            user, item, rating_s = parts
            try:
                rating = float(rating_s)
            except ValueError as exc:
                raise TripleFormatError(f"{path}:{lineno}: bad rating {rating_s!r}") from exc
            if item not in kg.entity_ids:
                dropped += 1
                continue
            rated[user].add(item)
            if rating >= rating_threshold:
                positives[user].add(item)
    if dropped:
        log.warning("%s: dropped %d records with items missing from the KG", path.name, dropped)

    positives = {u: items for u, items in positives.items() if items}
    if min_interactions > 1:
        positives = _kcore_filter(positives, min_interactions)

    # Universe for negative sampling: every item any retained user interacted with.
    item_pool = sorted({i for items in positives.values() for i in items})
    rng = np.random.default_rng(seed)

    user_names = sorted(positives)
    user_ids = {u: k for k, u in enumerate(user_names)}
    pairs: list[tuple[int, int, int, str]] = []
    pos_by_user: dict[int, set[int]] = {}

    def assign_splits(n: int) -> list[str]:
        cut1 = int(round(split_ratios[0] * n))
        cut2 = int(round((split_ratios[0] + split_ratios[1]) * n))
        labels = [TRAIN] * cut1 + [VALID] * (cut2 - cut1) + [TEST] * (n - cut2)
        return labels

    for uname in user_names:
        uid = user_ids[uname]
        pos_items = sorted(positives[uname])
        seen = rated[uname]
        candidates = [i for i in item_pool if i not in seen]
        n_neg = min(len(pos_items), len(candidates))
        neg_items = sorted(rng.choice(len(candidates), size=n_neg, replace=False).tolist())
        neg_items = [candidates[j] for j in neg_items]

        pos_ids = [kg.entity_ids[i] for i in pos_items]
        neg_ids = [kg.entity_ids[i] for i in neg_items]
        pos_by_user[uid] = set(pos_ids)

        for ids, label in ((pos_ids, POSITIVE), (neg_ids, NEGATIVE)):
            order = rng.permutation(len(ids))
            labels = assign_splits(len(ids))
            for k, j in enumerate(order):
                pairs.append((uid, ids[j], label, labels[k]))

    log.info("loaded %s: %d users, %d positive pairs (threshold %s)",
             path.name, len(user_names), sum(len(v) for v in positives.values()), rating_threshold)
    return InteractionLog(
        user_names=user_names,
        user_ids=user_ids,
        pairs=pairs,
        positives=pos_by_user,
        dropped_unknown_items=dropped,
    )
