"""Static SVG figures with deterministic output."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

_RC = {"svg.hashsalt": "qpurity", "svg.fonttype": "path", "figure.figsize": (6.0, 4.0),
       "figure.dpi": 100, "path.simplify": False}


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return atomic_write(path, buf.getvalue())


def _inf_markers(ax, x, y):
    # infinite entries drawn as open markers pinned to the top of the frame
    y = np.asarray(y, dtype=float)
    fin = np.isfinite(y)
    top = np.max(y[fin]) * 1.05 if fin.any() else 1.0
    if (~fin).any():
        ax.plot(np.asarray(x)[~fin], np.full((~fin).sum(), top), "o", mfc="none", mec="k", ms=4,
                label="+inf", clip_on=False)
    return fin


def entropy_curves(path, curves, xlabel="n", title=""):
    """``curves``: list of ``(label, x, S)``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for label, x, S in curves:
            S = np.asarray(S, dtype=float)
            fin = np.isfinite(S)
            ax.plot(np.asarray(x)[fin], S[fin], ".-", ms=3, label=label)
            if (~fin).any():
                _inf_markers(ax, x, S)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("S2")
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7)
        return _save(fig, path)


def heatmap(path, th, ph, V, title=""):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        im = ax.pcolormesh(ph, th, V, shading="auto", cmap="viridis", rasterized=False)
        fig.colorbar(im, ax=ax, label="L/N")
        ax.set_xlabel("phi")
        ax.set_ylabel("theta")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def gap_scaling(path, Ns, gaps, slope):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.loglog(Ns, gaps, "o-", label=f"slope {slope:.3f}")
        ax.set_xlabel("N")
        ax.set_ylabel("gap")
        ax.legend()
        return _save(fig, path)


def phase_grid(path, a1, a2, classical, quantum, beta, boundary=None):
    u1 = np.asarray(a1) / (1 + np.asarray(a1))
    u2 = np.asarray(a2) / (1 + np.asarray(a2))
    Q = (np.asarray(quantum) == "Scrambled").astype(float)
    C = (np.asarray(classical) == "Scrambled").astype(float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.pcolormesh(u1, u2, Q.T, shading="nearest", cmap="cividis", vmin=0, vmax=1)
        ax.contour(u1, u2, C.T, levels=[0.5], colors="r", linewidths=1.0)
        ax.plot([0.5 / 1.5, 0.5 / 1.5], [0, 1], "g--", lw=0.8)
        ax.plot([0, 1], [0.5 / 1.5, 0.5 / 1.5], "g--", lw=0.8)
        if boundary is not None:
            ax.plot(*boundary, "w:", lw=1.0)
        ax.set_xlabel("alpha1/(1+alpha1)")
        ax.set_ylabel("alpha2/(1+alpha2)")
        ax.set_title(f"beta = {beta}")
        return _save(fig, path)
