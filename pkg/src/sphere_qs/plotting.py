"""SVG figures for the command-line reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed hash salt and no timestamp metadata keep the SVG bytes reproducible.
matplotlib.rcParams["svg.hashsalt"] = "sphere-qs"
_META = {"Date": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_robustness_curve(eps, lower, path, reference=None) -> None:
    """Lower bound on the bracket norm near a pair against the perturbation size."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(eps, lower, "o-", label="computed bound")
    if reference is not None:
        ax.plot(eps, reference, "k--", lw=1, label="reference")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"lower bound on $\|\{F', G'\}\|$")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_measurement(rows, path) -> None:
    """Simulated measurement error and its lower bound against flow time."""
    te = np.array([r["T"] * r["epsilon"] for r in rows])
    order = np.argsort(te)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(te[order], np.array([r["delta"] for r in rows])[order], "o-", label=r"simulated $\Delta$")
    ax.plot(te[order], np.array([r["bound"] for r in rows])[order], "s--", label="lower bound")
    ax.set_xscale("log")
    ax.set_xlabel(r"$T\varepsilon$")
    ax.set_ylabel("error")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_partition_scaling(rows, path) -> None:
    """Max pairwise bracket and proof bound against the number of members."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for N in sorted({r["N"] for r in rows}):
        sel = sorted((r for r in rows if r["N"] == N), key=lambda r: r["N_eff"])
        ax.loglog([r["N_eff"] for r in sel], [r["measured_max_bracket"] for r in sel], "o-", label=f"N = {N}")
    allr = sorted(rows, key=lambda r: r["N_eff"])
    ax.loglog([r["N_eff"] for r in allr], [r["proof_bound"] for r in allr], "k--", lw=1, label="proof bound")
    ax.set_xlabel("members")
    ax.set_ylabel(r"max $\|\{\rho_i, \rho_j\}\|$")
    ax.legend(frameon=False, fontsize="small")
    _save(fig, path)


def plot_sphere_field(mesh, values, path, title="") -> None:
    """Equirectangular scatter of vertex values."""
    x, y, z = mesh.vertices.T
    lon, lat = np.degrees(np.arctan2(y, x)), np.degrees(np.arcsin(np.clip(z, -1, 1)))
    fig, ax = plt.subplots(figsize=(6, 3.2))
    sc = ax.scatter(lon, lat, c=values, s=2, cmap="RdBu_r", rasterized=True, linewidths=0)
    fig.colorbar(sc, ax=ax)
    ax.set_xlim(-180, 180)
    ax.set_ylim(-90, 90)
    ax.set_xlabel("longitude")
    ax.set_ylabel("latitude")
    if title:
        ax.set_title(title)
    _save(fig, path)
