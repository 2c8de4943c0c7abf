"""Spectrum of the learned operator, stability verdict, eigenfunction grids.

The operator K = A B^T has rank at most r, so its nonzero spectrum equals
the spectrum of the r x r matrix B^T A; for an eigenpair (lambda, u) with
lambda != 0 the lifted eigenvector is A u. The zero eigenvalue carries
multiplicity nu + d - r. The learned discrete-time system is asymptotically
stable iff every eigenvalue modulus is below one.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import EigensolverError
from .lifting import lift_batch
from .model import KoopmanModel, predict_state_batch
from .rollout import grid_points

# Eigenvalues below this fraction of the largest modulus are treated as part
# of the zero eigenspace and carry no reported eigenvector; lifting a
# near-null direction through A produces meaningless, residual-heavy vectors.
_NONZERO_REL_TOL = 1e-9


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray  # complex, all r eigenvalues of B^T A, |.|-descending
    eigenvectors: np.ndarray  # complex (k, nu+d); rows align with vector_indices
    vector_indices: np.ndarray  # indices into eigenvalues with a lifted vector
    residuals: np.ndarray  # ||K v - lambda v|| per reported vector (unit v)
    zero_multiplicity: int
    max_modulus: float
    stable: bool
    left: bool = False

    def to_json_dict(self) -> dict:
        return {
            "eigenvalues": [{"re": z.real, "im": z.imag} for z in self.eigenvalues],
            "zero_multiplicity": self.zero_multiplicity,
            "max_modulus": self.max_modulus,
            "stable": self.stable,
            "left_eigenvectors": self.left,
            "residuals": self.residuals.tolist(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def _normalize_vector(v: np.ndarray) -> np.ndarray:
    # Unit 2-norm with the largest-modulus component rotated onto the
    # positive real axis: deterministic across runs and eig backends.
    idx = int(np.argmax(np.abs(v)))
    pivot = v[idx]
    phase = pivot / abs(pivot)
    v = v / phase
    return v / np.linalg.norm(v)


def eigen_decompose(model: KoopmanModel, tol: float = 1e-8, left: bool = False) -> SpectralReport:
    """Spectrum of K = A B^T via the low-rank trick; never densifies K.

    With left=True, left eigenvectors are computed instead (w = B u for
    eigenpairs of A^T B), for callers who want conventional Koopman
    eigenfunction weights.
    """
    # Right vectors: eig of B^T A, lifted by A. Left vectors: w^T K = lam w^T
    # means K^T w = lam w with K^T = B A^T, so eig of A^T B lifted by B.
    small = model.A.T @ model.B if left else model.B.T @ model.A
    try:
        eigvals, eigvecs = np.linalg.eig(small)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed on the rank-space matrix: {exc}") from None
    order = np.lexsort((-eigvals.imag, -eigvals.real, -np.abs(eigvals)))
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    max_mod = float(np.abs(eigvals).max()) if eigvals.size else 0.0
    cutoff = _NONZERO_REL_TOL * max_mod
    lift_factor = model.B if left else model.A
    vectors, indices, residuals = [], [], []
    for i, lam in enumerate(eigvals):
        if abs(lam) <= cutoff:
            continue
        v = lift_factor @ eigvecs[:, i]
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            continue
        v = _normalize_vector(v)
        if left:
            resid = float(np.linalg.norm(model.B @ (model.A.T @ v) - lam * v))
        else:
            resid = float(np.linalg.norm(model.A @ (model.B.T @ v) - lam * v))
        residuals.append(resid)
        vectors.append(v)
        indices.append(i)
    residuals_arr = np.asarray(residuals)
    res_tol = tol * max(1.0, max_mod)
    if residuals_arr.size and residuals_arr.max() > res_tol:
        raise EigensolverError(
            f"eigenpair residual {residuals_arr.max():.3e} exceeds tolerance {res_tol:.3e}"
        )
    if vectors:
        vectors_arr = np.stack(vectors)
    else:
        vectors_arr = np.zeros((0, model.lifted_dim), dtype=complex)
    return SpectralReport(
        eigenvalues=eigvals,
        eigenvectors=vectors_arr,
        vector_indices=np.asarray(indices, dtype=np.int64),
        residuals=residuals_arr,
        zero_multiplicity=model.lifted_dim - model.rank,
        max_modulus=max_mod,
        stable=max_mod < 1.0,
        left=left,
    )


def eigenfunction_grid(
    model: KoopmanModel, report: SpectralReport, eig_index: int, grid=None, resolution=50
) -> tuple:
    """Eigenfunction values phi_i(x) = v_i . lift(y), y = pred(x) - x.

    `eig_index` indexes the reported eigenvalues and must have an associated
    eigenvector (be part of the nonzero spectrum). `grid` is an (n, d) array
    of raw-space positions, defaulting to a regular grid over the domain box.
    Returns (positions, complex values).
    """
    where = np.nonzero(report.vector_indices == eig_index)[0]
    if where.size == 0:
        raise IndexError(
            f"eigenvalue index {eig_index} has no eigenvector "
            f"(nonzero spectrum indices: {report.vector_indices.tolist()})"
        )
    v = report.eigenvectors[int(where[0])]
    positions = grid_points(model.domain_box, resolution) if grid is None else np.asarray(grid)
    pred = predict_state_batch(model, positions)
    y_raw = pred - positions
    # The displacement is lifted in model coordinates, consistent with the
    # space in which the operator acts.
    if model.normalization is not None:
        y_model = y_raw / model.normalization.half_extent
    else:
        y_model = y_raw
    psi = lift_batch(model.lifting, y_model)
    return positions, psi @ v


def write_eigenfunction_csv(path, positions: np.ndarray, values: np.ndarray) -> None:
    d = positions.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i+1}" for i in range(d)] + ["re", "im", "abs"])
        for pos, val in zip(positions, values):
            writer.writerow(list(pos) + [val.real, val.imag, abs(val)])


def write_unit_circle_csv(path, report: SpectralReport, n_circle: int = 256) -> None:
    """Eigenvalues plus sampled unit circle, for spectrum scatter plots."""
    angles = np.linspace(0.0, 2.0 * np.pi, n_circle, endpoint=False)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "re", "im"])
        for z in report.eigenvalues:
            writer.writerow(["eigenvalue", z.real, z.imag])
        for a in angles:
            writer.writerow(["circle", np.cos(a), np.sin(a)])
