"""Command-line pipeline: ingest -> train -> evaluate -> analyze -> simulate.

Every artifact-producing command writes exactly one run manifest next to its
outputs (config snapshot, seed, input hashes, output paths, tool version,
wall time), so deterministic commands can be reproduced bit-exactly from the
manifest alone.

Exit codes: 0 success, 1 numeric/training failure, 2 input error. Errors are
emitted as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_corpus, pair_arrays, subsample
from .exceptions import (
    CheckpointError,
    DivergedTrainingError,
    KoopflowError,
    NumericBlowupError,
)
from .losses import LossWeights
from .metrics import evaluate
from .model import FlowField, load, save, scale_to_speed
from .rollout import convergence_study, field_grid, grid_points, rollout
from .spectral import (
    eigen_decompose,
    eigenfunction_grid,
    write_eigenfunction_csv,
    write_unit_circle_csv,
)
from .synthetic import GENERATORS, write_corpus_dir
from .train import TrainingConfig, ablation_sweep, calibrate_weights, train
from .vehicle import (
    ControllerGains,
    Disturbance,
    WorldMap,
    simulate_run,
    write_trajectory_csv,
)
from .viz import spectrum_svg, streamlines_svg

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_INPUT = 2


def _hash_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_input(path) -> dict:
    path = Path(path)
    if path.is_dir():
        return {
            str(p): _hash_file(p) for p in sorted(path.iterdir()) if p.is_file()
        }
    return {str(path): _hash_file(path)}


def _write_manifest(outdir: Path, command: str, config: dict, seed, inputs, outputs, t0, extras=None):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "input_hashes": inputs,
        "output_paths": [str(p) for p in outputs],
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - t0,
    }
    if extras:
        manifest.update(extras)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_training_config(args) -> TrainingConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = TrainingConfig.from_json_dict(doc)
    weights = config.weights
    if args.beta_k is not None or args.beta_d is not None or args.beta_g is not None:
        weights = LossWeights(
            beta_k=weights.beta_k if args.beta_k is None else args.beta_k,
            beta_d=weights.beta_d if args.beta_d is None else args.beta_d,
            beta_g=weights.beta_g if args.beta_g is None else args.beta_g,
        )
    overrides = {
        "nu": args.nu,
        "rank": args.rank,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "seed": args.seed,
    }
    kwargs = config.to_json_dict()
    for key, value in overrides.items():
        if value is not None:
            kwargs[key] = value
    if getattr(args, "normalize", False):
        kwargs["normalize"] = True
    kwargs["weights"] = weights
    return TrainingConfig(**kwargs)


def cmd_make_corpus(args) -> int:
    t0 = time.perf_counter()
    generator = GENERATORS[args.shape]
    dset = generator(n_points=args.points, seed=args.seed)
    outdir = _outdir(args)
    write_corpus_dir(dset, outdir)
    _write_manifest(
        outdir,
        "make-corpus",
        {"shape": args.shape, "points": args.points},
        args.seed,
        {},
        sorted(str(p) for p in outdir.glob("*.csv")),
        t0,
    )
    print(f"wrote {dset.n_demos} demos to {outdir}")
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    dset = load_corpus(args.corpus)
    if args.stride and args.stride > 1:
        dset = subsample(dset, args.stride)
    config = _load_training_config(args)
    n_pairs = pair_arrays(dset)[0].shape[0]
    model, report = train(dset, config)
    outdir = _outdir(args)
    ckpt = outdir / "checkpoint.json"
    save(model, ckpt)
    losses_csv = outdir / "loss_history.csv"
    report.write_history_csv(losses_csv)
    _write_manifest(
        outdir,
        "train",
        config.to_json_dict(),
        config.seed,
        _hash_input(args.corpus),
        [ckpt, losses_csv],
        t0,
        extras={
            "effective_pair_count": n_pairs,
            "stride": args.stride or 1,
            "iterations": report.iterations,
        },
    )
    print(f"trained {report.iterations} iterations -> {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import csv as _csv

    t0 = time.perf_counter()
    model = load(args.checkpoint)
    full = load_corpus(args.corpus)
    report = evaluate(model, full)
    outdir = _outdir(args)
    out_json = outdir / "metrics.json"
    report.write_json(out_json)
    out_csv = outdir / "metrics.csv"
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(report.CSV_HEADER)
        writer.writerow(report.csv_row())
    _write_manifest(
        outdir,
        "eval",
        {},
        None,
        {**_hash_input(args.checkpoint), **_hash_input(args.corpus)},
        [out_json, out_csv],
        t0,
    )
    print(json.dumps(report.to_json_dict(), indent=2))
    return EXIT_OK


def cmd_convergence(args) -> int:
    t0 = time.perf_counter()
    model = load(args.checkpoint)
    flow = FlowField(model)
    exclusion = None
    goal = None
    max_steps = args.max_steps
    if args.corpus:
        dset = load_corpus(args.corpus)
        exclusion = dset.initial_points
        goal = dset.goal
        if max_steps is None:
            max_steps = 50 * max(len(demo) for demo in dset.demos)
    box = model.domain_box.inflate(args.inflate)
    study = convergence_study(
        flow,
        n=args.n,
        box=box,
        exclusion=exclusion,
        seed=args.seed if args.seed is not None else 0,
        goal=goal,
        max_steps=max_steps,
    )
    outdir = _outdir(args)
    out_json = outdir / "convergence.json"
    study.write_json(out_json)
    _write_manifest(
        outdir,
        "convergence",
        {"n": args.n, "inflate": args.inflate, "max_steps": study.max_steps},
        study.seed,
        _hash_input(args.checkpoint),
        [out_json],
        t0,
    )
    print(
        f"{study.n_reached_goal} reached goal, {study.n_hit_boundary} hit boundary, "
        f"{study.n_nonconverged} did not converge (of {study.n_trials})"
    )
    return EXIT_OK


def cmd_spectra(args) -> int:
    t0 = time.perf_counter()
    model = load(args.checkpoint)
    report = eigen_decompose(model, left=args.left)
    outdir = _outdir(args)
    out_json = outdir / "spectrum.json"
    report.write_json(out_json)
    circle_csv = outdir / "unit_circle.csv"
    write_unit_circle_csv(circle_csv, report)
    outputs = [out_json, circle_csv]
    if args.eigenfunction is not None:
        positions, values = eigenfunction_grid(
            model, report, args.eigenfunction, resolution=args.resolution
        )
        ef_csv = outdir / f"eigenfunction_{args.eigenfunction}.csv"
        write_eigenfunction_csv(ef_csv, positions, values)
        outputs.append(ef_csv)
    if args.svg:
        svg_path = outdir / "spectrum.svg"
        svg_path.write_text(spectrum_svg(report.eigenvalues), encoding="utf-8")
        outputs.append(svg_path)
    _write_manifest(
        outdir, "spectra", {"left": args.left}, None, _hash_input(args.checkpoint), outputs, t0
    )
    print(f"stable={report.stable} max|lambda|={report.max_modulus:.6f}")
    return EXIT_OK


def cmd_field(args) -> int:
    t0 = time.perf_counter()
    model = load(args.checkpoint)
    flow = FlowField(model)
    grid = field_grid(flow, args.resolution)
    outdir = _outdir(args)
    out_csv = outdir / "field_grid.csv"
    grid.write_csv(out_csv)
    outputs = [out_csv]
    if args.svg:
        streamlines = []
        box = model.domain_box
        coarse = grid_points(box, min(args.resolution, 8))
        # Streamlines target the grid point of minimum displacement, the
        # best goal estimate available without the corpus.
        goal_guess = grid.positions[int(np.argmin(np.linalg.norm(grid.displacements, axis=1)))]
        for start in coarse:
            try:
                result = rollout(
                    flow,
                    start,
                    max_steps=500,
                    goal=goal_guess,
                    eps_goal=0.01 * max(box.diagonal, 1e-9),
                    bounds=box.inflate(0.25),
                )
                streamlines.append(result.states)
            except NumericBlowupError:
                continue
        svg_path = outdir / "field.svg"
        svg_path.write_text(streamlines_svg(streamlines, box), encoding="utf-8")
        outputs.append(svg_path)
    _write_manifest(
        outdir,
        "field",
        {"resolution": args.resolution},
        None,
        _hash_input(args.checkpoint),
        outputs,
        t0,
    )
    print(f"wrote {grid.positions.shape[0]} grid samples -> {out_csv}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    model = load(args.checkpoint)
    sim_doc = json.loads(Path(args.sim_config).read_text(encoding="utf-8"))
    dset = load_corpus(args.corpus) if args.corpus else None
    goal = np.asarray(sim_doc["goal"]) if "goal" in sim_doc else (
        dset.goal if dset is not None else None
    )
    if goal is None:
        raise KoopflowError("simulate needs a goal: set it in sim config or pass --corpus")
    gains = ControllerGains(**sim_doc.get("gains", {}))
    disturbance = Disturbance(**sim_doc.get("disturbance", {}))
    world_map = WorldMap.fit(model.domain_box, tuple(sim_doc.get("workspace", (4.5, 3.0))))
    flow = FlowField(model)
    if sim_doc.get("max_speed"):
        probe = grid_points(model.domain_box, 10)
        target = sim_doc["max_speed"] / world_map.meters_per_unit
        flow = scale_to_speed(flow, target, probe)
    start_field = np.asarray(
        sim_doc.get("start_field", dset.initial_points[0] if dset is not None else None)
    )
    rows, report = simulate_run(
        flow,
        gains,
        disturbance,
        world_map.to_world(start_field),
        duration=sim_doc.get("duration", 120.0),
        world_map=world_map,
        goal=goal,
    )
    outdir = _outdir(args)
    traj_csv = outdir / "trajectory.csv"
    write_trajectory_csv(traj_csv, rows)
    report_json = outdir / "tracking_report.json"
    report.write_json(report_json)
    _write_manifest(
        outdir,
        "simulate",
        sim_doc,
        sim_doc.get("seed"),
        {**_hash_input(args.checkpoint), **_hash_input(args.sim_config)},
        [traj_csv, report_json],
        t0,
    )
    print(f"success={report.success} steps={report.n_steps} -> {traj_csv}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    dset = load_corpus(args.corpus)
    if args.stride and args.stride > 1:
        train_set = subsample(dset, args.stride)
    else:
        train_set = dset
    sweep_doc = json.loads(Path(args.sweep_config).read_text(encoding="utf-8"))
    base = TrainingConfig.from_json_dict(sweep_doc.get("base", {}))
    grid = sweep_doc.get("grid", {})
    outdir = _outdir(args)
    out_csv = outdir / "sweep.csv"
    rows = ablation_sweep(
        train_set,
        base,
        grid,
        full_set=dset,
        n_convergence=sweep_doc.get("n_convergence", 25),
        out_csv=out_csv,
    )
    _write_manifest(
        outdir,
        "sweep",
        sweep_doc,
        base.seed,
        {**_hash_input(args.corpus), **_hash_input(args.sweep_config)},
        [out_csv],
        t0,
        extras={"rows": len(rows)},
    )
    print(f"swept {len(rows)} configurations -> {out_csv}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    dset = load_corpus(args.corpus)
    if args.stride and args.stride > 1:
        dset = subsample(dset, args.stride)
    config = _load_training_config(args)
    result = calibrate_weights(dset, config)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopflow",
        description="Learn and analyze goal-converging flow fields from demonstrations.",
    )
    parser.add_argument("--version", action="version", version=f"koopflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_training_flags(p):
        p.add_argument("--config", help="training config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--nu", type=int, default=None, help="number of Fourier features")
        p.add_argument("--rank", type=int, default=None)
        p.add_argument("--beta-k", dest="beta_k", type=float, default=None)
        p.add_argument("--beta-d", dest="beta_d", type=float, default=None)
        p.add_argument("--beta-g", dest="beta_g", type=float, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--normalize", action="store_true")
        p.add_argument("--stride", type=int, default=None, help="temporal sub-sampling stride")

    p = sub.add_parser("make-corpus", help="generate a synthetic demonstration corpus")
    p.add_argument("--shape", choices=sorted(GENERATORS), default="scurve")
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("corpus")
    add_training_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="DTWD/SEA metrics against the full corpus")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convergence", help="random-initial-condition convergence study")
    p.add_argument("checkpoint")
    p.add_argument("--corpus", help="corpus supplying goal + excluded initial conditions")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inflate", type=float, default=0.25)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("spectra", help="eigenvalues, stability, eigenfunction grids")
    p.add_argument("checkpoint")
    p.add_argument("--left", action="store_true", help="use left eigenvectors")
    p.add_argument("--eigenfunction", type=int, default=None, help="eigenvalue index to grid")
    p.add_argument("--resolution", type=int, default=50)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("field", help="sample the displacement/divergence grid")
    p.add_argument("checkpoint")
    p.add_argument("--resolution", type=int, default=25)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("simulate", help="closed-loop vehicle tracking run")
    p.add_argument("checkpoint")
    p.add_argument("sim_config")
    p.add_argument("--corpus", help="corpus supplying goal and start if absent from config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid sweep over hyperparameters")
    p.add_argument("corpus")
    p.add_argument("sweep_config")
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="report per-term gradient norms at iteration 0")
    p.add_argument("corpus")
    add_training_flags(p)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DivergedTrainingError, NumericBlowupError) as exc:
        _emit_error(exc)
        return EXIT_NUMERIC
    except (KoopflowError, CheckpointError, FileNotFoundError, json.JSONDecodeError) as exc:
        _emit_error(exc)
        return EXIT_INPUT


def _emit_error(exc) -> None:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(doc), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
