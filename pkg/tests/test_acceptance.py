"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Criteria 6 and 7 share one trained model; criterion 11 is
informational and runs only when a real handwriting corpus directory is
supplied via KOOPFLOW_LASA_DIR.
"""

from __future__ import annotations

import os
import time

import numpy as np
import pytest

from conftest import make_random_model
from koopflow.data import pair_arrays, subsample, training_pairs
from koopflow.lifting import lift
from koopflow.losses import LossWeights, gradients
from koopflow.metrics import dtwd, evaluate, sea
from koopflow.model import FlowField, divergence, predict_lifted
from koopflow.rollout import convergence_study, rollout
from koopflow.spectral import eigen_decompose
from koopflow.synthetic import scurve_corpus, two_start_corpus
from koopflow.train import TrainingConfig, train

from test_losses import assert_grad_close, fd_total_gradient
from test_metrics import brute_force_dtw, shoelace_sea


def ok(n, message):
    print(f"ACCEPTANCE {n}: PASS - {message}")


@pytest.fixture(scope="module")
def desk_scale_model():
    """Criterion 6/7 protocol: default hyperparameters with nu reduced to
    256 for runtime, data normalization on, on the 7 x 25 S-curve corpus."""
    dset = scurve_corpus(n_demos=7, n_points=25, seed=0)
    config = TrainingConfig(nu=256, seed=0, normalize=True)
    model, report = train(dset, config)
    return dset, model, report


def test_criterion_1_gradient_exactness():
    """Every parameter gradient matches central finite differences within
    rel 1e-4 / abs 1e-7 across >= 20 random small configurations."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    weights = LossWeights(1.0, 0.01, 0.01)
    for _ in range(20):
        d = int(rng.integers(1, 4))
        nu = int(rng.integers(1, 9))
        r = int(rng.integers(1, 5))
        m = int(rng.integers(1, 9))
        model = make_random_model(rng, d=d, nu=nu, r=min(r, nu + d), op_scale=0.5)
        X = rng.normal(size=(m, d))
        Y = X + 0.2 * rng.normal(size=(m, d))
        goal = rng.normal(size=d)
        _, grad = gradients(model, (X, Y), X, goal, weights)
        fd = fd_total_gradient(model, (X, Y), X, goal, weights)
        assert_grad_close(grad.dW, fd["W"])
        assert_grad_close(grad.db, fd["b"])
        assert_grad_close(grad.dA, fd["A"])
        assert_grad_close(grad.dB, fd["B"])
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    ok(1, f"gradients match finite differences on 20 configurations ({elapsed:.1f}s)")


def test_criterion_2_divergence_exactness():
    """Analytic divergence matches central finite differences within 1e-5
    absolute on 100 random (model, point) samples."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        nu = int(rng.integers(1, 9))
        r = int(rng.integers(1, min(nu + d, 4) + 1))
        model = make_random_model(rng, d=d, nu=nu, r=r, w_scale=1.5, op_scale=0.5)
        field = FlowField(model, scale=float(rng.uniform(0.5, 2.0)))
        x = rng.normal(size=d)
        h = 1e-5
        fd = 0.0
        from koopflow.model import vector_field

        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fd += (vector_field(field, x + e)[i] - vector_field(field, x - e)[i]) / (2 * h)
        err = abs(divergence(field, x) - fd)
        worst = max(worst, err)
        assert err < 1e-5
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    ok(2, f"divergence matches finite differences, worst |err| {worst:.1e} ({elapsed:.1f}s)")


def test_criterion_3_spectral_oracle():
    """Low-rank eigen trick matches a dense eigensolve of A B^T on 100
    instances within 1e-8 after modulus-sorted pairing; conjugate pairs."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)

    def sort_key(z):
        return (-np.abs(z), -z.real, -z.imag)

    for _ in range(100):
        d = int(rng.integers(1, 4))
        nu = int(rng.integers(1, 10))
        n = nu + d
        r = int(rng.integers(1, min(n, 4) + 1))
        model = make_random_model(rng, d=d, nu=nu, r=r, op_scale=1.0)
        report = eigen_decompose(model)
        mine = np.array(
            sorted(
                np.concatenate([report.eigenvalues, np.zeros(report.zero_multiplicity)]),
                key=sort_key,
            )
        )
        dense = np.array(sorted(np.linalg.eigvals(model.A @ model.B.T), key=sort_key))
        np.testing.assert_allclose(mine, dense, atol=1e-8)
        complex_eigs = report.eigenvalues[np.abs(report.eigenvalues.imag) > 1e-10]
        remaining = list(complex_eigs)
        while remaining:
            z = remaining.pop()
            gaps = [abs(np.conj(z) - w) for w in remaining]
            assert gaps, f"unpaired complex eigenvalue {z}"
            assert min(gaps) < 1e-8
            remaining.pop(int(np.argmin(gaps)))
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    ok(3, f"low-rank spectra equal dense spectra on 100 instances ({elapsed:.1f}s)")


def test_criterion_4_metric_oracles():
    """DTWD equals exhaustive alignment enumeration (lengths <= 6); SEA
    matches the triangle-shoelace oracle to 1e-12; 200 instances each."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(1, 7))
        d = int(rng.integers(1, 4))
        a = rng.normal(size=(n, d))
        b = rng.normal(size=(m, d))
        assert dtwd(a, b) == pytest.approx(brute_force_dtw(a, b), rel=1e-12, abs=1e-12)
    for _ in range(200):
        n = int(rng.integers(2, 12))
        demo = rng.normal(size=(n, 2))
        pred = rng.normal(size=(n, 2))
        assert sea(demo, pred) == pytest.approx(shoelace_sea(demo, pred), rel=1e-12, abs=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    ok(4, f"DTWD and SEA match their oracles on 200 instances each ({elapsed:.1f}s)")


def test_criterion_5_batching_arithmetic():
    """168 pairs at batch size 16 for 200 epochs run exactly 2200 iterations."""
    dset = scurve_corpus(n_demos=7, n_points=25, seed=0)
    assert len(training_pairs(dset)) == 168
    config = TrainingConfig(nu=8, rank=4, epochs=200, batch_size=16, seed=0, normalize=True)
    _, report = train(dset, config)
    assert report.iterations == 2200
    assert len(report.history) == 2200
    ok(5, "168 pairs / batch 16 / 200 epochs = exactly 2200 iterations")


def test_criterion_6_end_to_end_convergence(desk_scale_model):
    """100 random initial conditions in the 25%-inflated box all terminate
    reached_goal or hit_boundary (none stall)."""
    t0 = time.perf_counter()
    dset, model, report = desk_scale_model
    field = FlowField(model)
    max_steps = 50 * max(len(demo) for demo in dset.demos)
    study = convergence_study(
        field,
        n=100,
        exclusion=dset.initial_points,
        seed=0,
        goal=dset.goal,
        max_steps=max_steps,
    )
    elapsed = time.perf_counter() - t0 + report.wall_time
    assert study.n_trials == 100
    assert study.n_nonconverged == 0
    assert study.n_reached_goal + study.n_hit_boundary == 100
    assert elapsed < 600.0
    ok(
        6,
        f"0 of 100 trials non-converged ({study.n_reached_goal} reached goal, "
        f"{study.n_hit_boundary} hit boundary; {elapsed:.1f}s incl. training)",
    )


def test_criterion_7_trained_model_stable(desk_scale_model):
    """The criterion-6 model reports stable=true (all |lambda| < 1)."""
    _, model, _ = desk_scale_model
    report = eigen_decompose(model)
    assert report.stable is True
    assert report.max_modulus < 1.0
    ok(7, f"trained model stable, max |lambda| = {report.max_modulus:.4f}")


def test_criterion_8_goal_loss_ablation():
    """Two runs differing only in beta_g (0 vs 0.01): the goal-weighted run
    has a strictly smaller lifted goal residual, and its rollout from the
    first demo start reaches the goal.

    The run pair mirrors the published loss ablation's koopman-only vs
    koopman+goal panels, so the divergence weight is 0 in both runs; the
    corpus carries a goal dwell and the feature count is 512 so the
    endpoint attractor is resolved."""
    dset = scurve_corpus(n_demos=7, n_points=25, seed=0, dwell=0.2)

    def run(beta_g):
        config = TrainingConfig(
            nu=512,
            weights=LossWeights(1.0, 0.0, beta_g),
            seed=0,
            normalize=True,
        )
        model, _ = train(dset, config)
        return model

    def goal_residual(model):
        gm = model.to_model_coords(dset.goal)
        z = lift(model.lifting, gm)
        return float(np.linalg.norm(z - predict_lifted(model, z)))

    model_off = run(0.0)
    model_on = run(0.01)
    resid_off = goal_residual(model_off)
    resid_on = goal_residual(model_on)
    assert resid_on < resid_off
    max_steps = 50 * max(len(demo) for demo in dset.demos)
    result = rollout(FlowField(model_on), dset.demos[0].points[0], max_steps, dset.goal)
    assert result.terminated == "reached_goal"
    ok(
        8,
        f"goal residual {resid_off:.3e} -> {resid_on:.3e} with beta_g on; "
        f"demo-start rollout reached the goal in {result.steps_taken} steps",
    )


def test_criterion_9_loss_switch_off_bitwise():
    """With beta_d = beta_g = 0 the trained parameters are bitwise identical
    to a koopman-only Adam loop built from the term primitives directly."""
    import math

    from koopflow.losses import _residual_term
    from koopflow.lifting import init_lifting
    from koopflow.model import AffineNormalization, KoopmanModel
    from koopflow.synthetic import line_corpus
    from koopflow.train import AdamState, _init_operator, _params_of, _set_params, adam_step

    dset = line_corpus(n_demos=3, n_points=12, seed=7)
    config = TrainingConfig(
        nu=16, rank=8, weights=LossWeights(1.0, 0.0, 0.0), epochs=4, batch_size=16,
        seed=21, normalize=True,
    )
    model_a, _ = train(dset, config)

    X, Y = pair_arrays(dset)
    rng = np.random.default_rng(config.seed)
    normalization = AffineNormalization.from_box(dset.domain_box)
    lifting = init_lifting(dset.d, config.nu, config.resolved_sigma_w(), rng)
    A, B = _init_operator(config, lifting, normalization.to_model(X), rng)
    model_b = KoopmanModel(
        lifting=lifting, A=A, B=B, model_dt=dset.demos[0].dt,
        domain_box=dset.domain_box, normalization=normalization,
    )
    state = AdamState.for_params(_params_of(model_b))
    n_pairs = X.shape[0]
    batch = min(config.batch_size, n_pairs)
    for _epoch in range(config.epochs):
        perm = rng.permutation(n_pairs)
        for k in range(math.ceil(n_pairs / batch)):
            idx = perm[k * batch : (k + 1) * batch]
            _, grad = _residual_term(
                model_b,
                normalization.to_model(X[idx]),
                normalization.to_model(Y[idx]),
                want_grads=True,
            )
            params, state = adam_step(
                _params_of(model_b),
                {"W": grad.dW, "b": grad.db, "A": grad.dA, "B": grad.dB},
                state,
                config.learning_rate, config.adam_beta1, config.adam_beta2,
                config.adam_eps,
            )
            _set_params(model_b, params)

    assert np.array_equal(model_a.A, model_b.A)
    assert np.array_equal(model_a.B, model_b.B)
    assert np.array_equal(model_a.lifting.W, model_b.lifting.W)
    assert np.array_equal(model_a.lifting.b, model_b.lifting.b)
    ok(9, "beta_d = beta_g = 0 reproduces the koopman-only path bitwise")


def test_criterion_10_simulator_rendezvous():
    """Both starts of a trained two-start fixture track to the goal; final
    positions agree within 2 * eps_goal (tank-scale success radius: 2% of
    the domain diagonal)."""
    from koopflow.model import scale_to_speed
    from koopflow.rollout import grid_points
    from koopflow.vehicle import ControllerGains, WorldMap, simulate_run

    dset = two_start_corpus(n_demos_per_side=3, n_points=25, seed=0)
    config = TrainingConfig(
        nu=512, weights=LossWeights(1.0, 0.0, 0.01), seed=3, normalize=True
    )
    model, _ = train(dset, config)
    world_map = WorldMap.fit(model.domain_box)
    probe = grid_points(model.domain_box, 12)
    flow = scale_to_speed(FlowField(model), 0.5 / world_map.meters_per_unit, probe)
    eps_goal = 0.02 * dset.domain_box.diagonal
    finals = []
    for start in (dset.demos[0].points[0], dset.demos[3].points[0]):
        _, report = simulate_run(
            flow, ControllerGains(), None, world_map.to_world(start),
            duration=300.0, world_map=world_map, goal=dset.goal, eps_goal=eps_goal,
        )
        assert report.success
        finals.append(report.final_position)
    gap = float(np.linalg.norm(finals[0] - finals[1]))
    limit = 2.0 * eps_goal * world_map.meters_per_unit
    assert gap <= limit
    ok(10, f"rendezvous: both runs succeed, final gap {gap:.3f} m <= {limit:.3f} m")


@pytest.mark.skipif(
    not os.environ.get("KOOPFLOW_LASA_DIR"),
    reason="informational: set KOOPFLOW_LASA_DIR to a real handwriting corpus",
)
def test_criterion_11_real_corpus_band_informational():
    """With the real handwriting corpus supplied, mean DTWD at nu=1024 must
    land within [500, 4000] raw units (order-of-magnitude band)."""
    from koopflow.data import load_corpus

    dset_full = load_corpus(os.environ["KOOPFLOW_LASA_DIR"])
    dset = subsample(dset_full, 40)
    config = TrainingConfig(nu=1024, seed=0, normalize=True)
    model, _ = train(dset, config)
    report = evaluate(model, dset_full)
    assert 500.0 <= report.mean_dtwd <= 4000.0
    ok(11, f"real-corpus mean DTWD {report.mean_dtwd:.0f} inside [500, 4000]")
