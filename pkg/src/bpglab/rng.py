"""Deterministic seed derivation for experiment runs.

Every run/component pair gets an independent stream derived as

    SeedSequence(entropy=(base_seed, crc32(experiment_id), run, component))

which is stable across processes and releases: ``numpy.random.SeedSequence``
hashing is a documented, fixed algorithm, and ``zlib.crc32`` is part of the
CSV/seed contract.  Component indices separate the consumers inside one run
(e.g. path sampling vs. Fisher estimation vs. evaluation rollouts) so adding
a consumer never perturbs existing streams.
"""

from __future__ import annotations

import zlib

import numpy as np


def seed_sequence(base_seed: int, experiment_id: str, run: int = 0, component: int = 0) -> np.random.SeedSequence:
    tag = zlib.crc32(experiment_id.encode("utf-8"))
    return np.random.SeedSequence(entropy=(int(base_seed), tag, int(run), int(component)))


def derive_rng(base_seed: int, experiment_id: str, run: int = 0, component: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(base_seed, experiment_id, run, component)))
