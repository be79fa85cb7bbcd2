"""Rule-based user simulator for online policy training and evaluation.

A session hides one held-out target item. Queried relations that the target
carries are answered with all of its values; anything else gets an empty
answer. Recommendation lists are accepted exactly when the target appears.
"""
from __future__ import annotations

from dataclasses import dataclass

from .kg import KnowledgeGraph


class EmptyTargetError(ValueError):
    """Target item has no attributes; the session cannot be simulated."""


@dataclass(frozen=True)
class SimulatedUser:
    user: int
    target_item: int
    preference: dict[int, tuple[int, ...]]  # relation -> sorted attribute values


def start_session(kg: KnowledgeGraph, user: int, target_item: int,
                  blocklist: frozenset[int] = frozenset()) -> SimulatedUser:
    attrs = kg.item_attributes(target_item)
    preference = {r: tuple(sorted(vals)) for r, vals in sorted(attrs.items())
                  if r not in blocklist}
    if not preference:
        raise EmptyTargetError(f"item {target_item} has no usable attributes")
    return SimulatedUser(user=user, target_item=target_item, preference=preference)


def answer_question(sim: SimulatedUser, relation: int,
                    max_values: int | None = None) -> list[int]:
    """All target values under the queried relation; empty if it has none."""
    vals = list(sim.preference.get(relation, ()))
    if max_values is not None:
        vals = vals[:max_values]
    return vals


def judge_recommendation(sim: SimulatedUser, items: list[int]) -> bool:
    return sim.target_item in items
