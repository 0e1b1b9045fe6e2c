"""Render grid CSVs into contour panels and loss traces into curves.

This package is a pure consumer: it parses the documented artifact formats
(grid CSV ``x,y,value`` row-major, loss CSV ``iteration,loss``) and renders
them; it never recomputes signal values and never imports the producer
package.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


@dataclass(frozen=True)
class GridData:
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # shape (len(xs), len(ys)), row-major in x

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def read_grid_csv(path) -> GridData:
    """Parse a 2D grid CSV with header ``x,y,value``, one row per point."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        if header != ["x", "y", "value"]:
            raise ValueError(f"{path}: expected header x,y,value, got {header}")
        rows = [[float(c) for c in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if xs.size * ys.size != data.shape[0]:
        raise ValueError(f"{path}: rows do not form a full lattice")
    order = np.lexsort((data[:, 1], data[:, 0]))
    values = data[order, 2].reshape(xs.size, ys.size)
    return GridData(xs, ys, values)


def read_loss_csv(path) -> np.ndarray:
    """Parse a loss trace CSV with header ``iteration,loss``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        if header != ["iteration", "loss"]:
            raise ValueError(f"{path}: expected header iteration,loss, got {header}")
        rows = [(int(r[0]), float(r[1])) for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: loss trace is empty")
    rows.sort()
    return np.array([v for _, v in rows])


@dataclass(frozen=True)
class PanelSpec:
    """Three grids rendered side by side into one image."""

    input_grid_csv: Path
    output_grid_csv: Path
    target_grid_csv: Path
    output_image: Path
    titles: Tuple[str, str, str] = ("input", "output", "target")
    cmap: str = "viridis"

    @classmethod
    def from_json(cls, data: dict) -> "PanelSpec":
        titles = tuple(data.get("titles", ("input", "output", "target")))
        if len(titles) != 3:
            raise ValueError(f"need exactly three titles, got {len(titles)}")
        return cls(
            input_grid_csv=Path(data["input_grid_csv"]),
            output_grid_csv=Path(data["output_grid_csv"]),
            target_grid_csv=Path(data["target_grid_csv"]),
            output_image=Path(data["output_image"]),
            titles=titles,
            cmap=data.get("cmap", "viridis"),
        )

    @classmethod
    def load(cls, path) -> "PanelSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def render_panel(spec: PanelSpec) -> Path:
    """Write one image with three contour subplots sharing a color scale."""
    grids = [
        read_grid_csv(p)
        for p in (spec.input_grid_csv, spec.output_grid_csv, spec.target_grid_csv)
    ]
    shapes = [g.shape for g in grids]
    if len(set(shapes)) != 1:
        raise ValueError(f"grid shapes differ: {shapes}")

    vmin = min(g.values.min() for g in grids)
    vmax = max(g.values.max() for g in grids)
    if vmax <= vmin:
        vmax = vmin + 1.0
    levels = np.linspace(vmin, vmax, 21)

    fig = Figure(figsize=(13, 4))
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, 3, sharey=True)
    mappable = None
    for ax, grid, title in zip(axes, grids, spec.titles):
        mappable = ax.contourf(
            grid.xs, grid.ys, grid.values.T, levels=levels, cmap=spec.cmap
        )
        ax.set_title(title)
        ax.set_xlabel("x")
        ax.set_aspect("equal")
    axes[0].set_ylabel("y")
    fig.colorbar(mappable, ax=axes, shrink=0.9)
    spec.output_image.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_image, dpi=120)
    return spec.output_image


def render_loss(trace_csv, output_image) -> Path:
    """Write a log-scale line plot of the loss trace."""
    losses = read_loss_csv(trace_csv)
    fig = Figure(figsize=(6, 4))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    iterations = np.arange(len(losses))
    if len(losses) == 1:
        ax.semilogy(iterations, losses, marker="o")
    else:
        ax.semilogy(iterations, losses)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.grid(True, which="both", alpha=0.3)
    output_image = Path(output_image)
    output_image.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_image, dpi=120)
    return output_image
