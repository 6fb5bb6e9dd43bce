import os

import holoviews as hv

hv.extension("bokeh", logo=False)

PLOT_WIDTH = 600
PLOT_HEIGHT = 400


def save_html(plot, path: str) -> None:
    """
    Render a HoloViews object to a standalone HTML file.

    The file is rendered next to its destination and renamed into place, so
    an interrupted export never leaves a partial file behind.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp.html")
    try:
        hv.save(plot, tmp, fmt="html")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
