"""Rendering of rkhsconv grid CSVs and loss traces into images."""

from .panels import GridData, PanelSpec, read_grid_csv, read_loss_csv, render_loss, render_panel

__version__ = "0.1.0"
