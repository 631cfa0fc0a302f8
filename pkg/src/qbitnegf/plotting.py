"""PNG renderings of the CLI outputs. Only imported when ``--plot`` is given."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def band_profile(path, z, ec, esub, mu_s=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(z, ec, ":", label="E_c")
    ax.plot(z, esub, "-", label="E_sub,1")
    if mu_s is not None:
        ax.axhline(mu_s, color="k", lw=0.8, ls="--", label="mu_S")
    ax.set_xlabel("z (nm)")
    ax.set_ylabel("energy (eV)")
    ax.legend()
    return _save(fig, path)


def residuals(path, res):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(np.arange(1, len(res) + 1), res, ".-")
    ax.set_xlabel("iteration")
    ax.set_ylabel("max |dphi| (V)")
    return _save(fig, path)


def ldos_map(path, z, E, D, esub=None):
    """D has shape (len(z), len(E))."""
    fig, ax = plt.subplots(figsize=(6, 4))
    m = ax.pcolormesh(z, E, np.log10(np.maximum(D.T, 1e-6)), shading="auto", cmap="viridis")
    if esub is not None:
        ax.plot(z, esub, "w:", lw=1)
    fig.colorbar(m, ax=ax, label="log10 D (1/eV nm)")
    ax.set_xlabel("z (nm)")
    ax.set_ylabel("E (eV)")
    return _save(fig, path)


def xy(path, x, y, xlabel, ylabel, *, logy=False, marker="-"):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    (ax.semilogy if logy else ax.plot)(x, y, marker)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return _save(fig, path)


def probability_family(path, z, curves: dict):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, p in curves.items():
        ax.plot(z, p, label=label)
    ax.set_xlabel("z (nm)")
    ax.set_ylabel("p(z) (1/nm)")
    if len(curves) <= 12:
        ax.legend(fontsize=7)
    return _save(fig, path)


def bloch_sphere(path, theta, phi):
    fig = plt.figure(figsize=(4.5, 4.5))
    ax = fig.add_subplot(projection="3d")
    u, v = np.mgrid[0 : 2 * np.pi : 40j, 0 : np.pi : 20j]
    ax.plot_wireframe(np.cos(u) * np.sin(v), np.sin(u) * np.sin(v), np.cos(v), color="0.85", lw=0.5)
    th, ph = np.asarray(theta), np.asarray(phi)
    ax.scatter(np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th), c="C3", s=12)
    ax.set_box_aspect((1, 1, 1))
    ax.set_axis_off()
    return _save(fig, path)


def stability_map(path, vg1, vg2, I, maxima=()):
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    m = ax.pcolormesh(vg1, vg2, np.ma.masked_invalid(I).T * 1e12, shading="auto", cmap="magma")
    for _, a, b in list(maxima)[:2]:
        ax.plot(a, b, "c+", ms=10)
    fig.colorbar(m, ax=ax, label="I0 (pA)")
    ax.set_xlabel("V_G1 (V)")
    ax.set_ylabel("V_G2 (V)")
    return _save(fig, path)


def phonon_scan(path, gap_mev, rel):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(gap_mev, 100 * np.asarray(rel), "o-")
    ax.set_xlabel("sub-band gap (meV)")
    ax.set_ylabel("relative current change (%)")
    return _save(fig, path)
