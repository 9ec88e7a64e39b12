"""Shared fixtures: a small synthetic corpus and a briefly trained model.

Both are session-scoped because generating records is cheap but training
even a tiny network is not free; tests that mutate a model must copy it.
"""

import pytest

from seiznet.data.records import record_segments
from seiznet.data.splits import split_patients
from seiznet.data.synth import SynthParams, generate_corpus
from seiznet.model import ModelConfig, build, fit, sample_validation_split


def labeled_segments(records, patient_ids):
    wanted = set(patient_ids)
    segs = []
    for rec in sorted(records, key=lambda r: (r.patient_id, r.record_id)):
        if rec.patient_id in wanted:
            segs.extend(record_segments(rec, labeled_only=True))
    return segs


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(
        SynthParams(n_patients=12, records_per_patient=1, seed=7)
    )


@pytest.fixture(scope="session")
def small_plan(small_corpus):
    return split_patients(
        sorted({r.patient_id for r in small_corpus}), seed=7
    )


@pytest.fixture(scope="session")
def tiny_trained(small_corpus, small_plan):
    """A small model fitted for a few epochs on the small corpus.

    Cheap to train but already separates the classes well, which is
    enough for the interpretation and aggregation tests downstream.
    """
    config = ModelConfig.desk(
        time_kernel=15,
        filters=(2, 4, 4),
        fc_hidden=8,
        max_epochs=3,
        patience=3,
        seed=3,
    )
    model = build(config)
    segs = labeled_segments(small_corpus, small_plan.train_patients)
    train, val = sample_validation_split(segs, 0.1, seed=3)
    return fit(model, train, val)
