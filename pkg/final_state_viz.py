# -*- coding: utf-8 -*-
"""Overlay the target final state with the FOM final states at the
recovered parameters, from the plot-data csv files written by the bench

    python final_state_viz.py results/plots
"""

import os
import sys
import glob

import pandas as pd

from bokeh.plotting import figure, save, output_file
from bokeh.palettes import all_palettes
from bokeh.layouts import gridplot


PLOTS_PER_ROW = 2


def chunks(alist, n):
    """Yield successive n-sized chunks from alist."""
    for i in range(0, len(alist), n):
        yield alist[i:i + n]


def create_plot(target, recovered, title):
    palette = all_palettes['Viridis'][11]

    p = figure(title=title)
    p.grid.grid_line_alpha = 0.7
    p.xaxis.axis_label = 'x'
    p.yaxis.axis_label = 'u(x, T)'
    p.line(target["x"], target["u"], line_width=2, color=palette[3],
           legend_label='Target')
    p.line(recovered["x"], recovered["u"], line_width=1.5, color=palette[7],
           line_dash="dashed", legend_label='Recovered')
    p.legend.location = "top_left"
    p.height = 300
    p.width = 500
    return p


def load_plot_data(path):
    """(target frame, [(cell name, frame)]) from a plots directory
    """
    target = pd.read_csv(os.path.join(path, "target.csv"))
    cells = []
    for fname in sorted(glob.glob(os.path.join(path, "final_*.csv"))):
        name = os.path.splitext(os.path.basename(fname))[0][len("final_"):]
        cells.append((name.replace("_", " "), pd.read_csv(fname)))
    return target, cells


def render(path, fname=None):
    target, cells = load_plot_data(path)
    plots = [create_plot(target, frame, name) for name, frame in cells]
    fname = fname or os.path.join(path, "final_states.html")
    output_file(fname)
    save(gridplot(list(chunks(plots, PLOTS_PER_ROW))))
    return fname


if __name__ == "__main__":
    print(render(sys.argv[1] if len(sys.argv) > 1 else "results/plots"))
