"""The four figure kinds at one pinned style.

render(job) is the public surface: it validates the job description, reads
the referenced CSVs, draws under a fixed rc so identical inputs give
identical image bytes, and writes the output atomically (temp file in the
destination directory, then rename). Input files are never modified.
"""

import os
import tempfile

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .csvio import read_fields, read_huggett, read_turnpike


class JobError(ValueError):
    """The job description itself is malformed."""


KINDS = ("heatmap_sequence", "turnpike", "huggett_dist", "remaining_mass")

RC = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.6,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.axisbelow": True,
    "figure.constrained_layout.use": True,
}

_STYLE_KEYS = {
    "heatmap_sequence": ("title", "dpi", "cmap", "times"),
    "turnpike": ("title", "dpi", "log"),
    "huggett_dist": ("title", "dpi"),
    "remaining_mass": ("title", "dpi"),
}


def _check_style(kind, style):
    if not isinstance(style, dict):
        raise JobError("style must be an object")
    bad = sorted(set(style) - set(_STYLE_KEYS[kind]))
    if bad:
        raise JobError("unknown style keys for %s: %s (allowed: %s)"
                       % (kind, ", ".join(bad),
                          ", ".join(_STYLE_KEYS[kind])))
    if "title" in style and not isinstance(style["title"], str):
        raise JobError("title must be a string")
    if "cmap" in style and not isinstance(style["cmap"], str):
        raise JobError("cmap must be a string")
    if "log" in style and not isinstance(style["log"], bool):
        raise JobError("log must be true or false")
    if "dpi" in style:
        dpi = style["dpi"]
        if not isinstance(dpi, (int, float)) or isinstance(dpi, bool) \
                or dpi <= 0:
            raise JobError("dpi must be a positive number")
    if "times" in style:
        ts = style["times"]
        if (not isinstance(ts, list) or not ts
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in ts)):
            raise JobError("times must be a non-empty list of numbers")


def _check_job(job):
    if not isinstance(job, dict):
        raise JobError("job must be a JSON object")
    unknown = sorted(set(job) - {"kind", "input", "inputs", "out", "style"})
    if unknown:
        raise JobError("unknown job keys: %s" % ", ".join(unknown))
    kind = job.get("kind")
    if kind not in KINDS:
        raise JobError("kind must be one of %s, got %r"
                       % (", ".join(KINDS), kind))
    out = job.get("out")
    if not isinstance(out, str) or not out:
        raise JobError("job needs a non-empty output path 'out'")
    if kind == "remaining_mass":
        if "input" in job:
            raise JobError("remaining_mass takes an 'inputs' list, "
                           "not 'input'")
        entries = job.get("inputs")
        if not isinstance(entries, list) or not entries:
            raise JobError("remaining_mass needs a non-empty 'inputs' list")
        inputs = []
        for k, ent in enumerate(entries):
            if not isinstance(ent, dict):
                raise JobError("inputs[%d] must be an object" % k)
            bad = sorted(set(ent) - {"path", "label"})
            if bad:
                raise JobError("inputs[%d] has unknown keys: %s"
                               % (k, ", ".join(bad)))
            path = ent.get("path")
            if not isinstance(path, str) or not path:
                raise JobError("inputs[%d] needs a non-empty 'path'" % k)
            label = ent.get("label")
            if label is not None and not isinstance(label, str):
                raise JobError("inputs[%d].label must be a string" % k)
            inputs.append((path, label))
    else:
        if "inputs" in job:
            raise JobError("%s takes a single 'input' path" % kind)
        path = job.get("input")
        if not isinstance(path, str) or not path:
            raise JobError("job needs an input CSV path 'input'")
        inputs = [(path, None)]
    style = job.get("style", {})
    _check_style(kind, style)
    return kind, inputs, out, style


def _fig_turnpike(inputs, style):
    t, d = read_turnpike(inputs[0][0])
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    ax.plot(t, d)
    if style.get("log"):
        ax.set_yscale("log")
    if t.size > 1 and t[0] < t[-1]:
        ax.set_xlim(t[0], t[-1])
    ax.set_xlabel("t")
    ax.set_ylabel("distance to stationary profile")
    ax.set_title(style.get("title", "turnpike"))
    return fig


def _fig_heatmap_sequence(inputs, style):
    f = read_fields(inputs[0][0])
    cmap = style.get("cmap", "viridis")
    if "y" not in f:
        if "times" in style:
            raise JobError("times panel selection needs a 2D fields file")
        fig, ax = plt.subplots(figsize=(4.8, 3.6))
        pc = ax.pcolormesh(f["x"], f["t"], f["m"], cmap=cmap,
                           shading="auto", vmin=0.0,
                           vmax=max(float(f["m"].max()), 1e-300))
        fig.colorbar(pc, ax=ax, label="m")
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        ax.set_title(style.get("title", "density over time"))
        return fig
    t = f["t"]
    if "times" in style:
        idx = [int(np.argmin(np.abs(t - float(w)))) for w in style["times"]]
    else:
        idx = sorted(set(np.round(
            np.linspace(0, t.size - 1, min(4, t.size))).astype(int)))
    vmax = max(float(f["m"][idx].max()), 1e-300)
    fig, axes = plt.subplots(1, len(idx),
                             figsize=(2.6 * len(idx) + 1.0, 3.0),
                             sharey=True)
    axes = np.atleast_1d(axes)
    pc = None
    for ax, k in zip(axes, idx):
        pc = ax.pcolormesh(f["x"], f["y"], f["m"][k], cmap=cmap,
                           shading="auto", vmin=0.0, vmax=vmax)
        ax.set_title("t = %g" % t[k])
        ax.set_xlabel("x")
        ax.set_aspect("equal")
    axes[0].set_ylabel("y")
    fig.colorbar(pc, ax=list(axes), label="m", shrink=0.85)
    if "title" in style:
        fig.suptitle(style["title"])
    return fig


def _fig_huggett_dist(inputs, style):
    scalars, d = read_huggett(inputs[0][0])
    x, incomes, m = d["x"], d["incomes"], d["m"]
    h = x[1] - x[0]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.6, 3.2))
    for j in range(incomes.size):
        ax1.plot(x, m[j], label="income %g" % incomes[j])
    ax1.set_xlabel("wealth")
    ax1.set_ylabel("density")
    ax1.legend()
    ax1.set_title("stationary distributions (r = %.4g)" % scalars["r"])
    atoms = (scalars["mu1"], scalars["mu2"])
    total = np.zeros_like(x)
    for j in range(incomes.size):
        cdf = atoms[j] + np.cumsum(m[j]) * h
        ax2.plot(x, cdf, label="income %g" % incomes[j])
        total += cdf
    ax2.plot(x, total, "k--", linewidth=1.0, label="total")
    ax2.set_xlabel("wealth")
    ax2.set_ylabel("cumulative mass")
    ax2.legend()
    ax2.set_title("cumulative distributions")
    if "title" in style:
        fig.suptitle(style["title"])
    return fig


def _fig_remaining_mass(inputs, style):
    fig, ax = plt.subplots(figsize=(4.8, 3.2))
    for path, label in inputs:
        f = read_fields(path)
        cell = (f["x"][1] - f["x"][0]) if f["x"].size > 1 else 1.0
        if "y" in f:
            cell *= (f["y"][1] - f["y"][0]) if f["y"].size > 1 else 1.0
        rem = f["m"].sum(axis=tuple(range(1, f["m"].ndim))) * cell
        name = label or os.path.splitext(os.path.basename(path))[0]
        ax.plot(f["t"], rem, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("remaining mass")
    ax.set_ylim(bottom=0.0)
    ax.legend()
    ax.set_title(style.get("title", "remaining mass"))
    return fig


_BUILDERS = {
    "turnpike": _fig_turnpike,
    "heatmap_sequence": _fig_heatmap_sequence,
    "huggett_dist": _fig_huggett_dist,
    "remaining_mass": _fig_remaining_mass,
}


def _save_atomic(fig, out, dpi):
    out = os.path.abspath(out)
    directory = os.path.dirname(out)
    os.makedirs(directory, exist_ok=True)
    suffix = os.path.splitext(out)[1] or ".png"
    fd, tmp = tempfile.mkstemp(suffix=suffix, dir=directory)
    os.close(fd)
    try:
        kw = {"metadata": {"Software": None}} if suffix == ".png" else {}
        fig.savefig(tmp, dpi=dpi, **kw)
        os.replace(tmp, out)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return out


def render(job):
    """Validate the job, draw the figure, write the image. Returns the
    absolute output path."""
    kind, inputs, out, style = _check_job(job)
    with matplotlib.rc_context(RC):
        fig = _BUILDERS[kind](inputs, style)
        try:
            return _save_atomic(fig, out, float(style.get("dpi", 100)))
        finally:
            plt.close(fig)
