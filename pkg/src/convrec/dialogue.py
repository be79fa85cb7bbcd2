"""Per-conversation state: belief vector, clarified-relation mask, and the
candidate-pool confidence signal, composed into the policy input."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import PreferenceModel


@dataclass
class BeliefState:
    """Running sum of embeddings of entities the user has affirmed."""

    dim: int
    affirmed_entities: list[int] = field(default_factory=list)
    b: np.ndarray = None

    def __post_init__(self) -> None:
        if self.b is None:
            self.b = np.zeros(self.dim)

    def update(self, new_entities: list[int], model: PreferenceModel) -> "BeliefState":
        for e in new_entities:
            if not 0 <= e < model.n_entities:
                raise KeyError(f"unknown entity id {e}")
        self.affirmed_entities.extend(int(e) for e in new_entities)
        if new_entities:
            rows = np.asarray(new_entities, dtype=np.intp)
            self.b = self.b + model.params["entity_emb"][rows].sum(axis=0)
        return self

    def recompute(self, model: PreferenceModel) -> np.ndarray:
        """Batch recomputation from the entity list; for consistency checks."""
        if not self.affirmed_entities:
            return np.zeros(self.dim)
        rows = np.asarray(self.affirmed_entities, dtype=np.intp)
        return model.params["entity_emb"][rows].sum(axis=0)


class ClarifiedMask:
    """Which relations the user has supplied a value for. Bits never reset."""

    def __init__(self, n_relations: int):
        self.q = np.zeros(n_relations, dtype=float)

    def set(self, relation: int) -> None:
        self.q[relation] = 1.0

    def is_set(self, relation: int) -> bool:
        return bool(self.q[relation] > 0)


def candidate_signal(model: PreferenceModel, user: int, belief: BeliefState,
                     candidates, threshold: float) -> float:
    """Fraction of candidates whose distance to the user falls below the
    threshold; an empty pool yields 0."""
    cands = sorted(candidates)
    if not cands:
        return 0.0
    scores = model.score_items(user, np.asarray(cands, dtype=np.intp), belief.b)
    return float((scores < threshold).sum() / len(cands))


@dataclass
class DialogueState:
    s: np.ndarray
    turn: int


def compose_state(belief: BeliefState, mask: ClarifiedMask, signal: float,
                  turn: int = 0) -> DialogueState:
    """Concatenate belief, mask, and signal in that fixed order."""
    if belief.b.ndim != 1:
        raise ValueError(f"belief must be a vector, got shape {belief.b.shape}")
    s = np.concatenate([belief.b, mask.q, np.array([signal], dtype=float)])
    return DialogueState(s=s, turn=turn)


def state_dim(dim: int, n_relations: int) -> int:
    return dim + n_relations + 1
