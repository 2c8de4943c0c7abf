"""Synthetic demonstration corpora for tests, demos, and the CLI.

All generators produce planar demos at a handwriting-like scale (tens of
units across) that end exactly at a shared goal. Three properties mimic
pen-stroke corpora and matter for learnability: per-demo variation decays
along the path (strokes funnel onto a common backbone), progress
decelerates toward the endpoint, and a small noise wobble keeps the
one-step regression from being exactly solvable. A nonzero `dwell` holds
the last fraction of samples at the goal, which places near-stationary
pairs in the training data and pins the endpoint attractor.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import Box, Demonstration, DemonstrationSet


def _assemble(demos) -> DemonstrationSet:
    pts = np.concatenate([d.points for d in demos], axis=0)
    box = Box.from_points(pts)
    return DemonstrationSet(
        demos=tuple(demos),
        goal=demos[0].points[-1],
        subsample_stride=1,
        domain_box=box,
        eps_goal=0.01 * box.diagonal,
    )


def _progress(n_points: int, dwell: float) -> np.ndarray:
    """Path progress in [0, 1]: quadratic ease-out, optional goal dwell."""
    u = np.linspace(0.0, 1.0, n_points)
    ramp = np.clip(u / (1.0 - dwell), 0.0, 1.0) if dwell > 0 else u
    return 1.0 - (1.0 - ramp) ** 2


def scurve_corpus(
    n_demos: int = 7,
    n_points: int = 25,
    dt: float = 0.04,
    seed: int = 0,
    spread: float = 4.0,
    noise: float = 0.3,
    dwell: float = 0.0,
) -> DemonstrationSet:
    """S-shaped demos sweeping from the left to the goal at the origin."""
    rng = np.random.default_rng(seed)
    demos = []
    s = _progress(n_points, dwell)
    remain = 1.0 - s
    for i in range(n_demos):
        offset = rng.uniform(-spread, spread)
        x = -50.0 * remain
        y = 20.0 * np.sin(1.5 * np.pi * remain) * remain + offset * remain
        pts = np.stack([x, y], axis=1)
        pts += noise * rng.normal(size=pts.shape) * remain[:, None]
        demos.append(Demonstration(id=f"scurve_{i}", dt=dt, points=pts))
    return _assemble(demos)


def line_corpus(
    n_demos: int = 7,
    n_points: int = 25,
    dt: float = 0.04,
    seed: int = 0,
    spread: float = 3.0,
    noise: float = 0.2,
    dwell: float = 0.2,
) -> DemonstrationSet:
    """Straight-line demos from x = -50 to the goal at the origin."""
    rng = np.random.default_rng(seed)
    demos = []
    s = _progress(n_points, dwell)
    remain = 1.0 - s
    for i in range(n_demos):
        offset = rng.uniform(-spread, spread)
        x = -50.0 * remain
        y = offset * remain
        pts = np.stack([x, y], axis=1)
        pts += noise * rng.normal(size=pts.shape) * remain[:, None]
        demos.append(Demonstration(id=f"line_{i}", dt=dt, points=pts))
    return _assemble(demos)


def two_start_corpus(
    n_demos_per_side: int = 3,
    n_points: int = 25,
    dt: float = 0.04,
    seed: int = 0,
    spread: float = 3.0,
    noise: float = 0.2,
    dwell: float = 0.2,
) -> DemonstrationSet:
    """Multi-modal corpus: arcs from the left and the right meeting at a goal."""
    rng = np.random.default_rng(seed)
    demos = []
    s = _progress(n_points, dwell)
    goal = np.array([0.0, 0.0])
    for side, sign in (("left", -1.0), ("right", 1.0)):
        for i in range(n_demos_per_side):
            offset = rng.uniform(-spread, spread)
            start = np.array([sign * 50.0, 25.0 + offset])
            control = np.array([sign * 25.0, -20.0])
            pts = (
                ((1.0 - s) ** 2)[:, None] * start
                + (2.0 * s * (1.0 - s))[:, None] * control
                + (s**2)[:, None] * goal
            )
            pts += noise * rng.normal(size=pts.shape) * (1.0 - s)[:, None]
            demos.append(Demonstration(id=f"{side}_{i}", dt=dt, points=pts))
    return _assemble(demos)


GENERATORS = {
    "scurve": scurve_corpus,
    "line": line_corpus,
    "two-start": two_start_corpus,
}


def write_corpus_dir(dset: DemonstrationSet, outdir, with_manifest: bool = True) -> Path:
    """Write per-demo CSV files (and a manifest) under `outdir`."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for demo in dset.demos:
        name = f"{demo.id}.csv"
        names.append(name)
        with open(outdir / name, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{j+1}" for j in range(demo.d)])
            for k, point in enumerate(demo.points):
                writer.writerow([k * demo.dt] + list(point))
    if with_manifest:
        manifest = {"files": names, "dt": dset.demos[0].dt if dset.demos else None}
        (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return outdir
