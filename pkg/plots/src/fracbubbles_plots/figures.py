"""Figures from fracbubbles CSV artifacts.

Pure rendering: every number shown is either read from the CSV or a
least-squares fit of its columns; nothing is recomputed from the model.
Each entry point takes a positional CSV path and ``--out`` and writes both
PNG and SVG next to each other.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class FigureError(ValueError):
    pass


def read_artifact(path: str):
    """Parse a fracbubbles CSV: provenance spec, header, float-ish rows."""
    with open(path, newline="") as fh:
        first = fh.readline()
        spec = {}
        if first.startswith("# spec "):
            spec = json.loads(first[len("# spec "):])
            rows = list(csv.reader(fh))
        else:
            fh.seek(0)
            rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not r[0].startswith("#")]
    if not rows:
        raise FigureError(f"{path}: no header row")
    header, body = rows[0], rows[1:]
    if not body:
        raise FigureError(f"{path}: no data rows")
    return spec, header, body


def column(header, body, name, kind=float):
    if name not in header:
        raise FigureError(f"missing column {name!r} (have {header})")
    i = header.index(name)
    out = []
    for row in body:
        try:
            out.append(kind(row[i]))
        except ValueError:
            out.append(np.nan)
    return np.asarray(out)


def _save(fig, out_base: str):
    for ext in ("png", "svg"):
        fig.savefig(f"{out_base}.{ext}", bbox_inches="tight", dpi=160)
    plt.close(fig)
    return [f"{out_base}.{ext}" for ext in ("png", "svg")]


def decay_figure(csv_path: str, out_base: str) -> dict:
    """Log-log residual norm vs ring size with the fitted slope and the two
    reference rates -(N/q+2s) and -(N/2+N/q-1-s) from the artifact's spec."""
    spec, header, body = read_artifact(csv_path)
    k = column(header, body, "k")
    norm = column(header, body, "norm_weighted")
    if len(k) < 2:
        raise FigureError("decay figure needs at least two rows")
    slope, intercept = np.polyfit(np.log(k), np.log(norm), 1)
    N = spec.get("N", 3)
    s = spec.get("s", 0.5)
    q = spec.get("q", 4.0)
    rate_strong = -(N / q + 2 * s)
    rate_weak = -(N / 2 + N / q - 1 - s)

    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.loglog(k, norm, "o-", color="tab:blue", label=f"measured, slope {slope:.3f}")
    anchor = norm[0] * 1.6
    for rate, style, name in (
        (rate_weak, "--", f"reference slope {rate_weak:.2f}"),
        (rate_strong, ":", f"reference slope {rate_strong:.2f}"),
    ):
        ax.loglog(k, anchor * (k / k[0]) ** rate, style, color="gray", label=name)
    ax.set_xlabel("ring size k")
    ax.set_ylabel("weighted residual norm")
    ax.legend(fontsize=8)
    ax.set_title("residual decay under ring growth")
    files = _save(fig, out_base)
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "reference_slopes": (rate_weak, rate_strong),
        "files": files,
    }


def bracket_figure(csv_path: str, out_base: str) -> dict:
    """Projection against the scale parameter with its zero crossing."""
    spec, header, body = read_artifact(csv_path)
    kcol = column(header, body, "k")
    delta = column(header, body, "delta")
    proj = column(header, body, "projection")
    k_max = kcol.max()
    sel = kcol == k_max
    d, p = delta[sel], proj[sel]
    order = np.argsort(d)
    d, p = d[order], p[order]
    crossing = None
    for a, b, pa, pb in zip(d, d[1:], p, p[1:]):
        if np.sign(pa) != np.sign(pb):
            crossing = (float(a), float(b))
            break

    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.plot(d, p, "o-", color="tab:red", label=f"k = {int(k_max)}")
    if crossing:
        ax.axvspan(*crossing, color="tab:red", alpha=0.12,
                   label=f"sign change in [{crossing[0]:g}, {crossing[1]:g}]")
    if "leading" in header:
        lead = column(header, body, "leading")[sel][order]
        ax.plot(d, lead, "s--", color="tab:gray", ms=4, label="leading form")
    ax.set_xlabel("scale parameter")
    ax.set_ylabel("dilation projection of the residual")
    ax.legend(fontsize=8)
    ax.set_title("balancing the concentration scale")
    files = _save(fig, out_base)
    return {"crossing": crossing, "k": float(k_max), "files": files}


def residual_figure(csv_path: str, out_base: str) -> dict:
    """Refinement residual history on a log scale."""
    _, header, body = read_artifact(csv_path)
    it = column(header, body, "iter")
    res = column(header, body, "residual_norm")
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.semilogy(it, res, "o-", color="tab:green")
    ax.set_xlabel("iteration")
    ax.set_ylabel("grid residual norm")
    ax.set_title("refinement history")
    files = _save(fig, out_base)
    return {"reduction": float(res[-1] / res[0]), "files": files}


def _main(fn, argv):
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("--out", required=True, help="output basename (PNG and SVG)")
    args = ap.parse_args(argv)
    try:
        meta = fn(args.csv, args.out)
    except (FigureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(meta))
    return 0


def decay_main(argv=None):
    return _main(decay_figure, argv)


def bracket_main(argv=None):
    return _main(bracket_figure, argv)


def residual_main(argv=None):
    return _main(residual_figure, argv)
