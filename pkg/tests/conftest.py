"""Shared helpers for the test suite."""

import numpy as np
import pytest

from vil.amf import Annotation, PredictionEntry, PredictionSet
from vil.geometry import Box


def rand_box(rng, span_w: float = 100.0, span_h: float = 100.0,
             min_size: float = 1.0) -> Box:
    x1 = float(rng.uniform(0.0, span_w - min_size))
    y1 = float(rng.uniform(0.0, span_h - min_size))
    w = float(rng.uniform(min_size, span_w - x1))
    h = float(rng.uniform(min_size, span_h - y1))
    return Box(x1, y1, x1 + w, y1 + h)


def rand_prediction_set(rng, n: int, n_a: int = 5, n_o: int = 4,
                        span: float = 100.0) -> PredictionSet:
    entries = []
    for _ in range(n):
        s_a = rng.uniform(0.0, 1.0, size=n_a)
        s_o = rng.uniform(0.0, 1.0, size=n_o + 1)
        entries.append(
            PredictionEntry(
                b_h=rand_box(rng, span, span), b_o=rand_box(rng, span, span),
                s_a=s_a, s_o=s_o,
            )
        )
    return PredictionSet(entries, n_a, n_o)


def rand_annotation(rng, n_a: int = 5, n_o: int = 4,
                    span: float = 100.0) -> Annotation:
    return Annotation(
        c_a=int(rng.integers(0, n_a)), c_o=int(rng.integers(0, n_o)),
        b_h=rand_box(rng, span, span), b_o=rand_box(rng, span, span),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
