"""Static figures for ikrr experiment outputs.

Reads runs.csv / rate.json / counts.csv produced by the ikrr CLI and
renders matplotlib figures.  No science is recomputed here: every
plotted value comes from the input files (risk aggregation follows the
aggregation named in rate.json).
"""

__version__ = "0.1.0"

from .figures import FigureSpec, VizError, plot_counts, plot_rate, plotted_checksum
