"""SVG charts for experiment outputs. CSV files are the contract; these are a convenience."""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "pfc-lab"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _line(ax, data):
    cols = data["columns"]
    xi, yi, gi = cols.index(data["x"]), cols.index(data["y"]), cols.index(data["group"])
    groups = defaultdict(list)
    for r in data["rows"]:
        groups[r[gi]].append((r[xi], r[yi]))
    for g, pts in sorted(groups.items()):
        pts.sort()
        ax.plot(*zip(*pts), label=f"{data['group']}={g:g}")
    ax.set_xlabel(data["x"])
    ax.set_ylabel(data["y"])
    ax.legend(fontsize=7)


def _spectrum(ax, data):
    rows = np.array([r[3:] for r in data["rows"]], float)
    for j in range(1, rows.shape[1]):
        ax.plot(rows[:, 0], rows[:, j], lw=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel("E_j (GHz)")


def _heatmap(ax, data):
    rows = np.array([r[2:] for r in data["rows"]], float)
    d = np.unique(rows[:, 0])
    s = np.unique(rows[:, 1])
    mag = rows[:, 2].reshape(len(d), len(s))
    im = ax.pcolormesh(d, s, mag.T, shading="auto", cmap="RdBu", vmin=-1, vmax=1)
    ax.figure.colorbar(im, ax=ax, label="magnetization")
    g = np.array([(r[2], r[3]) for r in data["gaps"]], float)
    if len(g):
        ax.plot(g[:, 0], g[:, 1], "w--", lw=1)
    ax.set_xlabel("d")
    ax.set_ylabel("s")


def _landscape(fig, data):
    rows = np.array(data["rows"], float)
    s_values = np.unique(rows[:, 0])
    fig.set_size_inches(3 * len(s_values), 5.5)
    hp = np.array(data["hp"], float)
    for i, s in enumerate(s_values):
        sel = rows[rows[:, 0] == s]
        ta = np.unique(sel[:, 1])
        tb = np.unique(sel[:, 2])
        v = sel[:, 3].reshape(len(ta), len(tb))
        ax = fig.add_subplot(2, len(s_values), i + 1)
        ax.pcolormesh(tb, ta, v, shading="auto")
        h = hp[hp[:, 0] == s]
        ax.plot(h[:, 3], h[:, 2], "w--", lw=0.8)
        k = np.unravel_index(np.argmin(v), v.shape)
        ax.plot(tb[k[1]], ta[k[0]], "r+")
        ax.set_title(f"s={s:g}", fontsize=8)
        ax.set_xlabel("theta_b")
        ax.set_ylabel("theta_a")
        ax2 = fig.add_subplot(2, len(s_values), len(s_values) + i + 1)
        ax2.plot(h[:, 1], h[:, 4])
        ax2.set_xlabel("t")
        ax2.set_ylabel(data["value"])


def _svmc(ax, data):
    groups = defaultdict(list)
    for r in data["rows"]:
        groups[(r[0], r[1], r[3])].append((r[4], r[5], r[6], r[7]))
    for (variant, M, d), pts in sorted(groups.items()):
        pts = np.array(sorted(pts), float)
        ax.errorbar(pts[:, 0], pts[:, 1], yerr=np.vstack([pts[:, 1] - pts[:, 2], pts[:, 3] - pts[:, 1]]),
                    label=f"{variant} M={M} d={d:g}", capsize=2, lw=0.8)
    ax.set_xscale("log")
    ax.set_yscale("symlog", linthresh=1e-4)
    ax.set_xlabel("sweeps")
    ax.set_ylabel("P(ground)")
    ax.legend(fontsize=6)


def _quantum(fig, data):
    ax = fig.add_subplot(1, 2, 1)
    groups = defaultdict(list)
    for r in data["rows"]:
        groups[(r[1], r[3])].append((r[4], r[5], r[6]))
    for (M, d), pts in sorted(groups.items()):
        pts = np.array(sorted(pts), float)
        line, = ax.plot(pts[:, 0], pts[:, 1], "-o", ms=3, label=f"M={M} d={d:g}")
        ax.plot(pts[:, 0], pts[:, 2], "--", color=line.get_color())
    ax.set_xscale("log")
    ax.set_xlabel("t_anneal (ns)")
    ax.set_ylabel("P ground (solid) / manifold (dashed)")
    ax.legend(fontsize=6)
    ax = fig.add_subplot(1, 2, 2)
    if data["gibbs"]:
        g = np.array(data["gibbs"], float)
        ax.plot(g[:, 3], g[:, 4], "k-", label="P0 dynamics")
        ax.plot(g[:, 3], g[:, 5], "k:", label="P0 Gibbs")
        ax3 = ax.twinx()
        ax3.plot(g[:, 3], g[:, 6], "b-", lw=0.8)
        ax3.set_ylabel("gamma_10 (1/ns)", color="b")
    else:
        last = [r for r in data["trace"] if r[4] == data["trace"][-1][4] and r[3] == data["trace"][-1][3]]
        tr = np.array([r[5:] for r in last], float)
        for j in range(1, min(tr.shape[1], 4)):
            ax.plot(tr[:, 0], tr[:, j], label=f"E{j - 1}")
    ax.set_xlabel("s")
    ax.legend(fontsize=6)


def _rate(ax, data):
    groups = defaultdict(list)
    for r in data["rows"]:
        groups[(r[0], r[2])].append((r[3], r[5]))
    for (M, d), pts in sorted(groups.items()):
        ax.plot(*zip(*pts), label=f"M={M} d={d:g}")
    ax.set_xlabel("s")
    ax.set_ylabel("gamma_10 (1/ns)")
    ax.legend(fontsize=7)


def render(path, style: str, data: dict):
    fig = plt.figure(figsize=(9, 4.5))
    if style in ("landscape", "quantum"):
        {"landscape": _landscape, "quantum": _quantum}[style](fig, data)
    else:
        ax = fig.add_subplot(1, 1, 1)
        {"line": _line, "spectrum": _spectrum, "heatmap": _heatmap, "svmc": _svmc,
         "rate": _rate}[style](ax, data)
    _save(fig, path)
