"""Surjection constructions shared by the layer tests and the acceptance suite."""

import numpy as np

from survae.layers import AbsSurjection, MaxSurjection, ReLUSurjection, RoundingSurjection, SliceSurjection, SortSurjection


def randomize(layer, rng, scale=1.0):
    for p in layer.named_parameters().values():
        p.value[...] = scale * rng.normal(size=p.value.shape)
    return layer


def inference_cases(rng):
    return [
        (AbsSurjection(2), np.abs(rng.normal(size=(10, 2)))),
        (randomize(AbsSurjection(2, sign_model="classifier", hidden=[8], rng=rng), rng), np.abs(rng.normal(size=(10, 2)))),
        (MaxSurjection(4, k=2), rng.normal(size=(10, 2))),
        (MaxSurjection(3, k=3, fill="truncated_normal"), rng.normal(size=(10, 1)) * 3),
        (randomize(MaxSurjection(4, k=2, index_model="classifier", hidden=[8], rng=rng), rng), rng.normal(size=(10, 2))),
        (SortSurjection(4), np.sort(rng.normal(size=(10, 4)), axis=1)),
        (randomize(SortSurjection(3, perm_model="classifier", hidden=[8], rng=rng), rng), np.sort(rng.normal(size=(10, 3)), axis=1)),
        (SliceSurjection(3, "inference", [2, 1]), rng.normal(size=(10, 2))),
        (randomize(SliceSurjection(3, "inference", [1, 2], aux="conditional_normal", hidden=[4], rng=rng), rng, 0.3),
         rng.normal(size=(10, 1))),
        (RoundingSurjection(2, "inference"), rng.integers(-3, 3, size=(10, 2)).astype(float)),
        (randomize(RoundingSurjection(2, "inference", deq_model="conditional", hidden=[4], rng=rng), rng, 0.3),
         rng.integers(-3, 3, size=(10, 2)).astype(float)),
        (ReLUSurjection(3), np.maximum(rng.normal(size=(10, 3)), 0.0)),
    ]


def generative_cases(rng):
    return [
        (AbsSurjection(2, "generative"), np.abs(rng.normal(size=(10, 2)))),
        (randomize(AbsSurjection(2, "generative", "classifier", hidden=[8], rng=rng), rng), np.abs(rng.normal(size=(10, 2)))),
        (MaxSurjection(2, "generative", k=3), rng.normal(size=(10, 2))),
        (MaxSurjection(1, "generative", k=2, fill="truncated_normal"), rng.normal(size=(10, 1)) * 3),
        (SortSurjection(3, "generative"), np.sort(rng.normal(size=(10, 3)), axis=1)),
        (SliceSurjection(2, "generative", [2, 2]), rng.normal(size=(10, 2))),
        (randomize(SliceSurjection(2, "generative", [2, 1], aux="conditional_normal", hidden=[4], rng=rng), rng, 0.3),
         rng.normal(size=(10, 2))),
        (RoundingSurjection(2), rng.integers(-3, 3, size=(10, 2)).astype(float)),
        (randomize(RoundingSurjection(2, deq_model="conditional", hidden=[4], rng=rng), rng, 0.3),
         rng.integers(-3, 3, size=(10, 2)).astype(float)),
        (ReLUSurjection(2, "generative"), np.maximum(rng.normal(size=(10, 2)), 0.0)),
    ]
