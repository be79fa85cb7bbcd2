from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from convrec.experiment import (Bundle, calibrate_threshold, fit_embedding,
                                generate_synthetic_dataset, load_dataset,
                                synthetic_config, train_policy)

settings.register_profile(
    "ci", derandomize=True, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow], deadline=None)
settings.load_profile("ci")

TRIPLES_3LINE = "i1\tgenre\tromantic\ni1\tdirector\td1\ni2\tgenre\thorror\n"


@pytest.fixture()
def toy_kg(tmp_path):
    """Five entities, two relations, three triples."""
    from convrec.kg import load_triples

    path = tmp_path / "triples.tsv"
    path.write_text(TRIPLES_3LINE, encoding="utf-8")
    return load_triples(path)


@pytest.fixture()
def tiny_model():
    from convrec.embedding import PreferenceModel

    return PreferenceModel(n_users=4, n_entities=20, n_relations=3, dim=6, seed=7)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    generate_synthetic_dataset(d, seed=0)
    return d


@pytest.fixture(scope="session")
def synth_data(synth_dir):
    cfg = synthetic_config(synth_dir, seed=0)
    kg, interactions = load_dataset(cfg)
    return cfg, kg, interactions


@pytest.fixture(scope="session")
def trained_bundle(synth_data):
    """One fully trained synthetic model shared across the suite."""
    cfg, kg, interactions = synth_data
    model = fit_embedding(kg, interactions, cfg)
    cfg.score_threshold = calibrate_threshold(model, kg, interactions)
    return Bundle(kg=kg, interactions=interactions, model=model, config=cfg)


@pytest.fixture(scope="session")
def trained_policy_bundle(trained_bundle):
    engine = trained_bundle.make_engine("attention")
    trained_bundle.policy, history = train_policy(trained_bundle, engine)
    trained_bundle.policy_history = history  # stashed for the RL-sanity check
    return trained_bundle


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
