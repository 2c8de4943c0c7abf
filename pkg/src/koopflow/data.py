"""Demonstration corpora: loading, temporal sub-sampling, and training pairs.

A corpus is a set of timestamped trajectories that share a common goal point
(the final point of every demonstration). Corpora are loaded from CSV files
(one file per demonstration, or a combined file with a leading ``demo_id``
column), optionally described by a JSON manifest. All values are immutable
after construction and safe to share across threads.

CSV schema
----------
Per-demo file:   header ``t,x1,...,xd``; rows sorted by ``t`` with uniform
spacing; UTF-8, ``.`` decimal separator, comma delimiter.
Combined file:   header ``demo_id,t,x1,...,xd``; rows grouped by demo id,
sorted by ``t`` within each demo.
Manifest (JSON): ``{"files": ["a.csv", ...], "dt": 0.01}``; paths are
relative to the manifest; ``dt`` is optional and overrides inference from
the first two ``t`` values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    CorpusFormatError,
    DimensionError,
    GoalMismatchError,
    InsufficientDataError,
)

# Fraction of the domain-box diagonal used for the default goal tolerance.
DEFAULT_GOAL_TOL_FRACTION = 0.01


def _frozen(arr) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box, lo <= hi per axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _frozen(self.lo))
        object.__setattr__(self, "hi", _frozen(self.hi))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise DimensionError("box lo/hi must be 1-D and of equal length")
        if np.any(self.lo > self.hi):
            raise ValueError("box has lo > hi on some axis")

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def inflate(self, fraction: float) -> "Box":
        """Grow the box by `fraction` of its per-axis extent on each side."""
        half = 0.5 * (self.hi - self.lo) * fraction
        return Box(self.lo - half, self.hi + half)

    @staticmethod
    def from_points(points) -> "Box":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InsufficientDataError("need at least one point to build a box")
        return Box(pts.min(axis=0), pts.max(axis=0))


@dataclass(frozen=True)
class Demonstration:
    """One demonstration trajectory: uniformly sampled state vectors.

    points has shape (T, d) with T >= 2; dt is the sampling interval in
    seconds. Instances are immutable (the array is write-locked).
    """

    id: str
    dt: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise DimensionError(f"demo {self.id!r}: points must be 2-D, got {pts.ndim}-D")
        if pts.shape[0] < 2:
            raise InsufficientDataError(f"demo {self.id!r}: needs >= 2 points, got {pts.shape[0]}")
        if pts.shape[1] < 1:
            raise DimensionError(f"demo {self.id!r}: state dimension must be >= 1")
        if not np.all(np.isfinite(pts)):
            raise CorpusFormatError(f"demo {self.id!r}: non-finite point values")
        if not (self.dt > 0):
            raise ValueError(f"demo {self.id!r}: dt must be > 0, got {self.dt}")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class TrainingPair:
    """A consecutive state pair (x_k, x_k1) from one demonstration."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise DimensionError("pair members must be 1-D vectors of equal dimension")


@dataclass(frozen=True)
class DemonstrationSet:
    """A corpus of demonstrations sharing one goal point.

    goal is the final point of the first demonstration; every other
    demonstration must end within eps_goal of it. subsample_stride records
    the cumulative temporal stride applied so far (1 = raw corpus).
    """

    demos: tuple
    goal: np.ndarray
    subsample_stride: int
    domain_box: Box
    eps_goal: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "demos", tuple(self.demos))
        object.__setattr__(self, "goal", _frozen(self.goal))
        if self.subsample_stride < 1:
            raise ValueError("subsample_stride must be >= 1")
        dims = {demo.d for demo in self.demos}
        if len(dims) > 1:
            raise DimensionError(f"demos disagree on dimension: {sorted(dims)}")
        if self.demos and self.goal.shape[0] != self.demos[0].d:
            raise DimensionError("goal dimension does not match demos")

    @property
    def d(self) -> int:
        if self.demos:
            return self.demos[0].d
        return self.goal.shape[0]

    @property
    def n_demos(self) -> int:
        return len(self.demos)

    @property
    def initial_points(self) -> np.ndarray:
        """Start point of every demo, shape (n_demos, d)."""
        if not self.demos:
            return np.zeros((0, self.d))
        return np.stack([demo.points[0] for demo in self.demos])


def _build_set(demos, eps_goal=None) -> DemonstrationSet:
    if not demos:
        raise InsufficientDataError("corpus contains no demonstrations")
    dims = {demo.d for demo in demos}
    if len(dims) > 1:
        raise DimensionError(f"demos disagree on dimension: {sorted(dims)}")
    all_points = np.concatenate([demo.points for demo in demos], axis=0)
    box = Box.from_points(all_points)
    if eps_goal is None:
        eps_goal = DEFAULT_GOAL_TOL_FRACTION * box.diagonal
    goal = demos[0].points[-1]
    for demo in demos[1:]:
        gap = float(np.linalg.norm(demo.points[-1] - goal))
        if gap > eps_goal:
            raise GoalMismatchError(
                f"demo {demo.id!r} ends {gap:g} away from the goal "
                f"(tolerance {eps_goal:g})"
            )
    return DemonstrationSet(
        demos=tuple(demos),
        goal=goal,
        subsample_stride=1,
        domain_box=box,
        eps_goal=float(eps_goal),
    )


def _parse_float(token, path, line_no):
    try:
        value = float(token)
    except ValueError:
        raise CorpusFormatError(f"non-numeric value {token!r}", path, line_no) from None
    if not math.isfinite(value):
        raise CorpusFormatError(f"non-finite value {token!r}", path, line_no)
    return value


def _check_uniform_dt(times, path):
    if len(times) < 2:
        raise InsufficientDataError(f"{path}: demo needs >= 2 rows")
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        raise CorpusFormatError("rows are not sorted by strictly increasing t", path)
    dt = float(diffs[0])
    tol = 1e-6 * max(dt, 1e-300)
    if np.any(np.abs(diffs - dt) > tol):
        raise CorpusFormatError("non-uniform time step", path)
    return dt


def _read_single_demo_csv(path: Path, demo_id: str, dt_override=None) -> Demonstration:
    times, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CorpusFormatError("empty file", path)
        header = [h.strip() for h in header]
        if header[0] != "t" or len(header) < 2:
            raise CorpusFormatError(f"expected header 't,x1,...,xd', got {header}", path, 1)
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CorpusFormatError(
                    f"expected {width} columns, got {len(row)}", path, line_no
                )
            times.append(_parse_float(row[0], path, line_no))
            rows.append([_parse_float(v, path, line_no) for v in row[1:]])
    dt = _check_uniform_dt(np.asarray(times), path)
    if dt_override is not None:
        dt = dt_override
    return Demonstration(id=demo_id, dt=dt, points=np.asarray(rows))


def _read_combined_csv(path: Path, dt_override=None) -> list:
    groups: dict = {}
    order = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CorpusFormatError("empty file", path)
        header = [h.strip() for h in header]
        if header[:2] != ["demo_id", "t"] or len(header) < 3:
            raise CorpusFormatError(
                f"expected header 'demo_id,t,x1,...,xd', got {header}", path, 1
            )
        width = len(header)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CorpusFormatError(
                    f"expected {width} columns, got {len(row)}", path, line_no
                )
            demo_id = row[0].strip()
            if demo_id not in groups:
                groups[demo_id] = ([], [])
                order.append(demo_id)
            t = _parse_float(row[1], path, line_no)
            vals = [_parse_float(v, path, line_no) for v in row[2:]]
            groups[demo_id][0].append(t)
            groups[demo_id][1].append(vals)
    demos = []
    for demo_id in order:
        times, rows = groups[demo_id]
        dt = _check_uniform_dt(np.asarray(times), path)
        if dt_override is not None:
            dt = dt_override
        demos.append(Demonstration(id=demo_id, dt=dt, points=np.asarray(rows)))
    return demos


def load_corpus(path, format: str = "auto", eps_goal=None) -> DemonstrationSet:
    """Load a demonstration corpus from a directory, CSV file, or manifest.

    format: "auto" (default), "per-demo", or "combined". A directory is read
    as per-demo CSV files (sorted by name); a ``.json`` path is read as a
    manifest; a ``.csv`` path is sniffed by its header unless `format` pins
    the layout. Returns a DemonstrationSet with stride 1; the goal is the
    final point of the first demo and other demos must end within eps_goal
    of it (default: 1% of the domain-box diagonal).
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError("corpus path does not exist", path)
    dt_override = None
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".csv")
        if not files:
            raise CorpusFormatError("directory contains no .csv files", path)
        demos = [_read_single_demo_csv(p, demo_id=p.stem) for p in files]
    elif path.suffix.lower() == ".json":
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid manifest JSON: {exc}", path) from None
        if "files" not in manifest or not manifest["files"]:
            raise CorpusFormatError("manifest lists no files", path)
        dt_override = manifest.get("dt")
        demos = [
            _read_single_demo_csv(path.parent / name, demo_id=Path(name).stem, dt_override=dt_override)
            for name in manifest["files"]
        ]
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            first = fh.readline()
        combined = first.strip().startswith("demo_id")
        if format == "combined" or (format == "auto" and combined):
            demos = _read_combined_csv(path)
        else:
            demos = [_read_single_demo_csv(path, demo_id=path.stem)]
    return _build_set(demos, eps_goal=eps_goal)


def _retained_indices(n: int, stride: int) -> list:
    # Strided indices; the true final point is always retained. When the last
    # strided index is not the final one it is replaced (it always lies within
    # one stride of the end), so a 1000-step demo at stride 40 keeps 25 points.
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        if len(idx) == 1:
            idx.append(n - 1)
        else:
            idx[-1] = n - 1
    return idx


def subsample(dset: DemonstrationSet, stride: int) -> DemonstrationSet:
    """Temporally sub-sample every demo, keeping first and final points.

    Retains indices 0, stride, 2*stride, ... with the final point always
    retained (see _retained_indices); dt scales by stride; the domain box is
    recomputed over retained points. stride=1 is the identity.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if stride == 1:
        return dset
    new_demos = []
    for demo in dset.demos:
        idx = _retained_indices(len(demo), stride)
        new_demos.append(
            Demonstration(id=demo.id, dt=demo.dt * stride, points=demo.points[idx])
        )
    all_points = np.concatenate([demo.points for demo in new_demos], axis=0)
    return DemonstrationSet(
        demos=tuple(new_demos),
        goal=dset.goal,
        subsample_stride=dset.subsample_stride * stride,
        domain_box=Box.from_points(all_points),
        eps_goal=dset.eps_goal,
    )


def training_pairs(dset: DemonstrationSet) -> list:
    """Time-shifted consecutive pairs, concatenated over demos.

    Count is sum(len(demo) - 1); pairs never cross demo boundaries.
    """
    pairs = []
    for demo in dset.demos:
        if len(demo) < 2:
            raise InsufficientDataError(f"demo {demo.id!r} has < 2 points")
        pts = demo.points
        for k in range(len(demo) - 1):
            pairs.append(TrainingPair(x=pts[k], y=pts[k + 1]))
    return pairs


def pair_arrays(dset: DemonstrationSet):
    """(X, Y) arrays of all training pairs; rows align with training_pairs."""
    xs, ys = [], []
    for demo in dset.demos:
        if len(demo) < 2:
            raise InsufficientDataError(f"demo {demo.id!r} has < 2 points")
        xs.append(demo.points[:-1])
        ys.append(demo.points[1:])
    if not xs:
        return np.zeros((0, dset.d)), np.zeros((0, dset.d))
    return np.concatenate(xs, axis=0), np.concatenate(ys, axis=0)
