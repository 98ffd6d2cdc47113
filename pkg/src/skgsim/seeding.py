"""Labeled deterministic random streams.

Every stochastic component draws from its own substream derived from
(master seed, repetition, component label), so repetitions are paired
across sweep values and results never depend on execution order.
"""
from __future__ import annotations

import numpy as np

COMPONENTS = {
    "field_bob": 0,
    "field_eve": 1,
    "fading_bob": 2,
    "fading_eve": 3,
    "trajectory": 4,
    "training": 5,
}


def component_seed(master_seed: int, repetition: int, component: str) -> np.random.SeedSequence:
    try:
        cid = COMPONENTS[component]
    except KeyError:
        raise ValueError(f"unknown seed component {component!r}") from None
    return np.random.SeedSequence((int(master_seed), int(repetition), cid))


def component_rng(master_seed: int, repetition: int, component: str) -> np.random.Generator:
    return np.random.default_rng(component_seed(master_seed, repetition, component))
