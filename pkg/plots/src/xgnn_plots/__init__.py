"""Figure rendering for run directories written by the xgnn CLI.

Reads history.csv, mu_trace.csv and field_<name>_iter<i>.csv grids and
renders convergence curves, field heatmaps, streamline plots, and
mu-trace spaghetti. Never modifies the run directory's CSV files;
images go to a figures/ subdirectory (or an explicit --out).
"""

import csv
import glob
import os
import re

import matplotlib
matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("convergence", "field", "streamlines", "mu")

MU_REFERENCE = 2.0 / 3.0


class MissingInput(FileNotFoundError):
    """A required CSV is absent; the message names the file."""


def _require(run_dir, name):
    path = os.path.join(run_dir, name)
    if not os.path.exists(path):
        raise MissingInput(f"{name} not found in {run_dir}")
    return path


def read_history(run_dir):
    """history.csv as a dict of column name -> list (None for blanks)."""
    with open(_require(run_dir, "history.csv")) as f:
        reader = csv.DictReader(f)
        rows = list(reader)
        names = reader.fieldnames or []
    out = {}
    for name in names:
        col = []
        for row in rows:
            cell = row[name]
            col.append(None if cell == "" else float(cell))
        out[name] = col
    return out


def read_mu_traces(run_dir):
    """mu trace arrays (step, term_id, re_mu, im_mu), one per trajectory.

    A plain run contributes one file; a seed sweep directory contributes
    one per seed_<n> subdirectory.
    """
    paths = []
    direct = os.path.join(run_dir, "mu_trace.csv")
    if os.path.exists(direct):
        paths.append(direct)
    paths.extend(sorted(glob.glob(os.path.join(run_dir, "seed_*", "mu_trace.csv"))))
    if not paths:
        raise MissingInput(f"mu_trace.csv not found in {run_dir}")
    traces = []
    for path in paths:
        with open(path) as f:
            lines = f.read().splitlines()[1:]
        if lines:
            data = np.array([[float(c) for c in ln.split(",")] for ln in lines])
        else:
            data = np.zeros((0, 4))
        traces.append(data.reshape(-1, 4))
    return traces


_FIELD_RE = re.compile(r"field_(.+)_iter(\d+)\.csv$")


def field_files(run_dir):
    """{component name: {iteration: path}} for the run's field grids."""
    out = {}
    for path in glob.glob(os.path.join(run_dir, "field_*_iter*.csv")):
        m = _FIELD_RE.search(os.path.basename(path))
        if m:
            out.setdefault(m.group(1), {})[int(m.group(2))] = path
    return out


def read_field_grid(path):
    """(x axis, y axis, value grid) from one field CSV; nan = outside."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    v = data[:, 2].reshape(len(ys), len(xs))
    return xs, ys, v


def _latest(run_dir, name):
    files = field_files(run_dir)
    if name not in files:
        raise MissingInput(f"field_{name}_iter*.csv not found in {run_dir}")
    it = max(files[name])
    return it, files[name][it]


# ---------------------------------------------------------------------------
# figure builders


def convergence_figure(run_dir):
    hist = read_history(run_dir)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    iters = hist["iter"]
    ax.semilogy(iters, hist["eta"], "o-", label="estimator")
    if any(v is not None for v in hist["energy_error"]):
        ax.semilogy(iters, hist["energy_error"], "s--", label="energy error")
    ax.set_xlabel("basis functions")
    ax.set_ylabel("error")
    ax.legend(loc="best")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def field_figures(run_dir):
    """One heatmap per component at its most recent iteration."""
    files = field_files(run_dir)
    if not files:
        raise MissingInput(f"field_*_iter*.csv not found in {run_dir}")
    figs = {}
    for name in sorted(files):
        it, path = _latest(run_dir, name)
        xs, ys, v = read_field_grid(path)
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        pm = ax.pcolormesh(xs, ys, np.ma.masked_invalid(v), shading="auto")
        fig.colorbar(pm, ax=ax)
        ax.set_aspect("equal")
        ax.set_title(f"{name}, iteration {it}")
        fig.tight_layout()
        figs[f"field_{name}_iter{it}"] = fig
    return figs


def _velocity_grids(run_dir):
    files = field_files(run_dir)
    if "u1" in files and "u2" in files:
        it = max(set(files["u1"]) & set(files["u2"]))
        xs, ys, u = read_field_grid(files["u1"][it])
        _, _, v = read_field_grid(files["u2"][it])
        return xs, ys, u, v
    if "u" in files:
        # scalar runs: level lines of u are streamlines of the rotated
        # gradient, so differentiate the grid instead
        it = max(files["u"])
        xs, ys, w = read_field_grid(files["u"][it])
        wy, wx = np.gradient(w, ys, xs)
        return xs, ys, wy, -wx
    raise MissingInput(f"field_u1_iter*.csv not found in {run_dir}")


def streamline_figure(run_dir, density=1.2):
    xs, ys, u, v = _velocity_grids(run_dir)
    inside = np.isfinite(u) & np.isfinite(v)
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    speed = np.hypot(u, v)
    # seed on a uniform grid, keeping only points inside the domain mask
    sx, sy = np.meshgrid(xs[::4], ys[::4])
    keep = inside[::4, ::4] & (speed[::4, ::4] > 0)
    start = np.column_stack([sx[keep], sy[keep]])
    ax.streamplot(
        xs, ys,
        np.where(inside, u, 0.0), np.where(inside, v, 0.0),
        start_points=start if len(start) else None,
        density=density,
        color="tab:blue",
        linewidth=0.7,
    )
    ax.set_aspect("equal")
    ax.set_xlim(xs[0], xs[-1])
    ax.set_ylim(ys[0], ys[-1])
    fig.tight_layout()
    return fig


def mu_figure(run_dir):
    traces = read_mu_traces(run_dir)
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    drawn = 0
    for data in traces:
        if data.size == 0:
            continue
        for term in np.unique(data[:, 1]):
            rows = data[data[:, 1] == term]
            ax.plot(rows[:, 0], rows[:, 2], lw=0.8, alpha=0.8)
            drawn += 1
    ax.axhline(MU_REFERENCE, color="k", ls="--", lw=1.0, label="2/3")
    ax.set_xlabel("gradient step")
    ax.set_ylabel("exponent")
    ax.legend(loc="best")
    if drawn == 0:
        ax.set_title("no trainable exponents in this run")
    fig.tight_layout()
    return fig


# ---------------------------------------------------------------------------
# entry point


def build_figures(run_dir, kind):
    """{figure name: matplotlib Figure} for one kind."""
    if kind == "convergence":
        return {"convergence": convergence_figure(run_dir)}
    if kind == "field":
        return field_figures(run_dir)
    if kind == "streamlines":
        return {"streamlines": streamline_figure(run_dir)}
    if kind == "mu":
        return {"mu_trace": mu_figure(run_dir)}
    raise ValueError(f"unknown figure kind {kind!r}; known: {', '.join(KINDS)}")


def render(run_dir, kind, out_dir=None):
    """Render one figure kind; returns the list of written image paths."""
    figs = build_figures(run_dir, kind)
    out_dir = out_dir or os.path.join(run_dir, "figures")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, fig in figs.items():
        path = os.path.join(out_dir, f"{name}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
