"""Shared fixtures: random model factories and slow trained fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from koopflow.data import Box
from koopflow.lifting import LiftingParams
from koopflow.model import KoopmanModel


def make_random_model(
    rng: np.random.Generator,
    d: int = 2,
    nu: int = 3,
    r: int = 2,
    w_scale: float = 1.0,
    op_scale: float | None = None,
    model_dt: float = 0.1,
    box: Box | None = None,
) -> KoopmanModel:
    """Random small model; operator entries scaled to keep dynamics tame."""
    n = nu + d
    if op_scale is None:
        op_scale = 1.0 / np.sqrt(r * n)
    lifting = LiftingParams(
        W=rng.normal(0.0, w_scale, size=(nu, d)),
        b=rng.uniform(0.0, 2.0 * np.pi, size=nu),
    )
    if box is None:
        box = Box(-np.ones(d), np.ones(d))
    return KoopmanModel(
        lifting=lifting,
        A=rng.normal(0.0, op_scale, size=(n, r)),
        B=rng.normal(0.0, op_scale, size=(n, r)),
        model_dt=model_dt,
        domain_box=box,
    )


@pytest.fixture(scope="session")
def trained_line_model():
    """Model trained on the straight-line corpus; shared where a
    "mildly trained" fixture is enough. Divergence weight off: the fixture
    is used for goal-reaching rollouts."""
    from koopflow.synthetic import line_corpus
    from koopflow.train import TrainingConfig, train
    from koopflow.losses import LossWeights

    dset = line_corpus(n_demos=7, n_points=25, seed=3)
    config = TrainingConfig(
        nu=128,
        rank=16,
        weights=LossWeights(1.0, 0.0, 0.01),
        epochs=200,
        batch_size=16,
        seed=7,
        normalize=True,
    )
    model, report = train(dset, config)
    return dset, model, report
