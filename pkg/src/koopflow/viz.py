"""Self-contained SVG renderings: streamline plots and spectrum scatter.

Plot data proper is exported as CSV/JSON by the owning modules; these
renderings are a convenience for eyeballing results without a plotting
stack.
"""

from __future__ import annotations

import numpy as np

from .data import Box


def _svg_header(width: int, height: int) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )


def _project(points: np.ndarray, box: Box, width: int, height: int, pad: int = 20):
    span = np.where(box.hi - box.lo > 0, box.hi - box.lo, 1.0)
    scaled = (points - box.lo) / span
    xs = pad + scaled[:, 0] * (width - 2 * pad)
    ys = height - pad - scaled[:, 1] * (height - 2 * pad)
    return xs, ys


def streamlines_svg(
    streamlines, box: Box, demos=None, goal=None, width: int = 640, height: int = 480
) -> str:
    """Streamline polylines (gray), demo polylines (red), goal marker."""
    parts = [_svg_header(width, height)]
    for line in streamlines:
        pts = np.asarray(line)
        if pts.shape[0] < 2:
            continue
        xs, ys = _project(pts[:, :2], box, width, height)
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="#999" stroke-width="1"/>\n'
        )
    if demos is not None:
        for pts in demos:
            xs, ys = _project(np.asarray(pts)[:, :2], box, width, height)
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="#c00" stroke-width="2"/>\n'
            )
    if goal is not None:
        xs, ys = _project(np.asarray(goal).reshape(1, -1)[:, :2], box, width, height)
        parts.append(f'<circle cx="{xs[0]:.2f}" cy="{ys[0]:.2f}" r="6" fill="#fc0"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)


def spectrum_svg(eigenvalues, width: int = 480, height: int = 480) -> str:
    """Eigenvalues scattered against the unit circle."""
    eig = np.asarray(eigenvalues, dtype=complex)
    radius = max(1.05, float(np.abs(eig).max()) * 1.05 if eig.size else 1.05)
    half = min(width, height) / 2 - 20

    def to_px(z):
        return width / 2 + z.real / radius * half, height / 2 - z.imag / radius * half

    parts = [_svg_header(width, height)]
    cx, cy = width / 2, height / 2
    parts.append(
        f'<circle cx="{cx}" cy="{cy}" r="{half / radius:.2f}" fill="none" '
        f'stroke="#333" stroke-dasharray="4 3"/>\n'
    )
    parts.append(f'<line x1="{cx - half}" y1="{cy}" x2="{cx + half}" y2="{cy}" stroke="#ddd"/>\n')
    parts.append(f'<line x1="{cx}" y1="{cy - half}" x2="{cx}" y2="{cy + half}" stroke="#ddd"/>\n')
    for z in eig:
        x, y = to_px(z)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="#06c" opacity="0.8"/>\n')
    parts.append("</svg>\n")
    return "".join(parts)
