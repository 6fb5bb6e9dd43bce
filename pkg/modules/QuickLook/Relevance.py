"""
Heat map of the per-component frame relevance shares.
"""

from typing import List

import hvplot.pandas  # noqa: F401
import pandas as pd

from modules.QuickLook.PlotExport import PLOT_HEIGHT, PLOT_WIDTH, save_html


def relevance_frame(reports: List[dict]) -> pd.DataFrame:
    """
    Long-format shares of every report: one row per (skill, component, frame).
    """
    rows = []
    for report in reports:
        for k, shares in enumerate(report["shares"]):
            for frame_id, share in zip(report["candidates"], shares):
                rows.append({"skill": report["skill"], "component": k, "frame": frame_id, "share": share})
    return pd.DataFrame(rows, columns=["skill", "component", "frame", "share"])


def create_relevance_plot(reports: List[dict]):
    df = relevance_frame(reports)
    df["row"] = df["skill"].astype(str) + "/" + df["component"].astype(str)
    return df.hvplot.heatmap(
        x="frame", y="row", C="share", cmap="Viridis", clim=(0.0, 1.0),
        width=PLOT_WIDTH, height=PLOT_HEIGHT, title="Frame relevance (skill/component)",
    )


def export_relevance_plot(reports: List[dict], path: str) -> None:
    save_html(create_relevance_plot(reports), path)
