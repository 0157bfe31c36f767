import logging
from typing import Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

__all__ = [
    "histogram_table",
    "calibration_table",
    "plot_calibration",
    "plot_error_histograms",
]

logger = logging.getLogger(__name__)


def histogram_table(
    errors: pd.DataFrame,
    bins: int = 40,
    value_range: Tuple[float, float] = (-4.0, 4.0),
    columns: Sequence[str] = None,
) -> pd.DataFrame:
    """
    Histogram bin counts of standardized errors, one block per
    (method, column), with the standard normal density at bin centres.

    Parameters
    ----------
    errors : DataFrame
        Per-trial errors with a ``method`` column, as written by the
        error-distribution experiment.
    bins : int, default=40
    value_range : tuple, default=(-4, 4)
        Fixed range so that tables from different runs align bin by bin.
        Values outside the range are counted in the outer bins.
    columns : list of str, optional
        Error columns to include; all but ``trial`` and ``method`` by default.

    Returns
    -------
    table : DataFrame
        Columns method, column, bin_left, bin_right, count, density, normal_density.
    """
    if bins < 1:
        raise ValueError("bins must be positive. Given {}.".format(bins))
    if columns is None:
        columns = [c for c in errors.columns if c not in ("trial", "method")]
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    centres = 0.5 * (edges[:-1] + edges[1:])
    blocks = []

    for method, group in errors.groupby("method", sort=True):
        for column in columns:
            values = group[column].to_numpy(dtype=float)
            values = np.clip(values[~np.isnan(values)], value_range[0], value_range[1])
            counts, _ = np.histogram(values, bins=edges)
            n = max(counts.sum(), 1)
            blocks.append(
                pd.DataFrame(
                    {
                        "method": method,
                        "column": column,
                        "bin_left": edges[:-1],
                        "bin_right": edges[1:],
                        "count": counts,
                        "density": counts / (n * np.diff(edges)),
                        "normal_density": stats.norm.pdf(centres),
                    }
                )
            )
    if not blocks:
        logger.warning("No errors to bin.")
        return pd.DataFrame(
            columns=["method", "column", "bin_left", "bin_right", "count", "density", "normal_density"]
        )
    return pd.concat(blocks, ignore_index=True)


def calibration_table(report) -> pd.DataFrame:
    """
    Nominal against empirical coverage with exact binomial bands, one row
    per (method, target, level), sorted by nominal level.
    """
    columns = ["method", "target", "nominal", "coverage", "ci_lower", "ci_upper", "trials"]
    table = report.cells[columns].sort_values(["method", "target", "nominal"])
    return table.reset_index(drop=True)


def plot_calibration(table: pd.DataFrame, figsize=(10, 4), **kwargs):
    """
    Coverage curves per target, one panel per method.

    Returns
    -------
    fig : matplotlib Figure instance
    ax : array of matplotlib Axes
    """
    import matplotlib.pyplot as plt

    alpha = kwargs.pop("alpha", 0.2)
    methods = sorted(table.method.unique())
    f, ax = plt.subplots(1, len(methods), figsize=figsize, squeeze=False)
    ax = ax[0]

    for i, method in enumerate(methods):
        sub = table[table.method == method]
        for target, rows in sub.groupby("target", sort=True):
            line = ax[i].plot(rows.nominal, rows.coverage, marker="o", label=target)[0]
            ax[i].fill_between(
                rows.nominal, rows.ci_lower, rows.ci_upper, color=line.get_color(), alpha=alpha
            )
        lims = [table.nominal.min() - 0.05, 1.0]
        ax[i].plot(lims, lims, color="grey", linestyle="--")
        ax[i].set_title(method)
        ax[i].set_xlabel("Nominal coverage")
        ax[i].set_ylabel("Empirical coverage")
        ax[i].legend(fontsize="small")
    return f, ax


def plot_error_histograms(
    errors: pd.DataFrame, columns: Sequence[str] = None, bins: int = 40, figsize=None
):
    """
    Histograms of standardized errors against the standard normal density,
    one row per method and one column per error.

    Returns
    -------
    fig : matplotlib Figure instance
    ax : 2d array of matplotlib Axes
    """
    import matplotlib.pyplot as plt

    table = histogram_table(errors, bins=bins, columns=columns)
    methods = sorted(table.method.unique())
    names = list(dict.fromkeys(table.column))
    figsize = figsize or (3 * len(names), 2.5 * len(methods))
    f, ax = plt.subplots(len(methods), len(names), figsize=figsize, squeeze=False)

    for i, method in enumerate(methods):
        for j, name in enumerate(names):
            rows = table[(table.method == method) & (table.column == name)]
            width = rows.bin_right - rows.bin_left
            ax[i, j].bar(rows.bin_left, rows.density, width=width, align="edge", color="skyblue")
            centres = 0.5 * (rows.bin_left + rows.bin_right)
            ax[i, j].plot(centres, rows.normal_density, color="red")
            ax[i, j].set_title("{} {}".format(method, name), fontsize="small")
    return f, ax
