"""Figures for a run directory.

``render_rates`` is also written out verbatim as ``plot_rates.py`` so the
figure can be regenerated from ``functionals.csv`` without this package.
"""
from __future__ import annotations

import inspect
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PNG_METADATA = {"Software": None}


def render_rates(run_dir, out="rates.png"):
    """Plot (T-t)Q, (T-t)P and (T-t)sqrt(OQ) against log(T-t) from functionals.csv."""
    import csv
    import json
    import math
    import os

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(os.path.join(run_dir, "functionals.csv"), newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(os.path.join(run_dir, "gap_report.json")) as fh:
        T_hat = json.load(fh)["T_hat"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if T_hat is None:
        ax.text(0.5, 0.5, "no singular-time estimate", ha="center", transform=ax.transAxes)
    else:
        rows = [r for r in rows if float(r["t"]) < T_hat]
        x = [math.log(T_hat - float(r["t"])) for r in rows]
        for col, label in (("tQ", "(T-t) Q"), ("tP", "(T-t) P"), ("t_sqrt_OQ", "(T-t) sqrt(OQ)")):
            ax.plot(x, [float(r[col]) for r in rows], label=label)
        ax.axhline(0.125, color="0.5", lw=0.8, ls="--", label="1/8")
        ax.invert_xaxis()
        ax.set_xlabel("log(T - t)")
        ax.set_ylabel("rate product")
        ax.set_title(f"blowup rates, T_hat = {T_hat:.8g}")
        ax.legend()
    fig.tight_layout()
    path = os.path.join(run_dir, out)
    tmp = path + ".tmp"
    fig.savefig(tmp, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_script() -> str:
    src = inspect.getsource(render_rates)
    return ("#!/usr/bin/env python3\n"
            '"""Regenerate rates.png from functionals.csv and gap_report.json in this directory."""\n'
            f"{src}\n\n"
            "if __name__ == \"__main__\":\n"
            "    import os\n"
            "    import sys\n"
            "    render_rates(sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__)))\n")


def render_profiles(trace, path, count: int = 6) -> Path:
    """Orbit radius against arclength at a few snapshots spread over the run."""
    from .geometry import arclength

    idx = np.unique(np.round(np.linspace(0, len(trace) - 1, count)).astype(int))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k in idx:
        p = trace.profiles[k]
        ax.plot(arclength(p), p.psi, label=f"t = {p.time:.5g}")
    ax.set_xlabel("arclength s")
    ax.set_ylabel("psi")
    ax.set_title("profile snapshots")
    ax.legend(fontsize=8)
    fig.tight_layout()
    tmp = f"{path}.tmp"
    fig.savefig(tmp, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)
    Path(tmp).replace(path)
    return Path(path)
