"""Conversational knowledge-graph recommender: attention-ranked clarifying
questions, hyperplane-translation preference scoring, and a two-action
RL dialogue policy."""

__version__ = "0.1.0"
