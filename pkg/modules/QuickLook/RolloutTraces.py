"""
End-effector paths of rollouts, coloured by the active skill.
"""

import holoviews as hv
import hvplot.pandas  # noqa: F401
import pandas as pd

from modules.QuickLook.PlotExport import PLOT_HEIGHT, PLOT_WIDTH, save_html


def create_trace_plot(df: pd.DataFrame):
    """
    Top view (x, y) and height over steps of every traced episode.

    Args:
        df (pd.DataFrame): Rollout traces; an ``episode`` column is optional.
    """
    if "episode" not in df:
        df = df.assign(episode=0)
    top = df.hvplot.scatter(
        x="x", y="y", c="skill", cmap="Category10", by=None, hover_cols=["episode", "step"],
        width=PLOT_WIDTH, height=PLOT_HEIGHT, title="Top view", shared_axes=False,
    )
    height = df.hvplot.line(
        x="step", y="z", by="episode", width=PLOT_WIDTH, height=PLOT_HEIGHT,
        title="Height", legend=False, shared_axes=False,
    )
    return hv.Layout([top, height]).cols(1)


def export_trace_plot(df: pd.DataFrame, path: str) -> None:
    save_html(create_trace_plot(df), path)
