"""
Action magnitude profiles with the detected skill boundaries.
"""

import holoviews as hv
import hvplot.pandas  # noqa: F401
import pandas as pd

from modules.QuickLook.PlotExport import PLOT_HEIGHT, PLOT_WIDTH, save_html


def create_magnitudes_plot(df: pd.DataFrame, demo: int = 0):
    """
    Linear and angular magnitudes of one demonstration, cuts as vertical lines.

    Args:
        df (pd.DataFrame): Output of ``magnitudes_frame`` (columns demo, t,
            lin_mag, ang_mag, is_cut).
        demo (int): Demonstration to show.

    Returns:
        hv.Overlay: The magnitude curves and cut markers.
    """
    rows = df[df["demo"] == demo]
    curves = rows.hvplot(
        x="t", y=["lin_mag", "ang_mag"], shared_axes=False, title=f"Action magnitudes (demo {demo})"
    )
    cuts = [hv.VLine(float(t)).opts(color="red", line_dash="dashed") for t in rows.loc[rows["is_cut"], "t"]]
    return hv.Overlay([curves, *cuts]).opts(width=PLOT_WIDTH, height=PLOT_HEIGHT, legend_position="right")


def export_magnitudes_plot(df: pd.DataFrame, path: str) -> None:
    plots = [create_magnitudes_plot(df, int(n)) for n in sorted(df["demo"].unique())]
    save_html(hv.Layout(plots).cols(1), path)
