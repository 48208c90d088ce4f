"""Static figures for the CLI. Uses the non-interactive Agg backend."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def threshold(path, omega, columns: dict, branch: str):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        markers = {"fp_avg": "-", "fp_hbm": "--", "fp_ft": "o"}
        for name, y in columns.items():
            ax.plot(omega, y, markers.get(name, "-"), ms=3, label=name[3:].upper())
        ax.set_xlabel(r"$\omega$")
        ax.set_ylabel(r"$F_p$")
        ax.set_title(f"{branch} threshold")
        ax.legend()
        return _save(fig, path)


def multipliers(path, Fp, mu):
    with plt.rc_context(STYLE):
        fig, (ax, bx) = plt.subplots(1, 2, figsize=(9, 4))
        th = np.linspace(0, 2 * np.pi, 400)
        ax.plot(np.cos(th), np.sin(th), "k-", lw=0.6)
        for j in range(mu.shape[1]):
            ax.plot(mu[:, j].real, mu[:, j].imag, ".", ms=3)
        ax.set_aspect("equal")
        ax.set_xlabel(r"Re $\mu$")
        ax.set_ylabel(r"Im $\mu$")
        bx.plot(Fp, np.abs(mu), ".", ms=3)
        bx.axhline(1.0, color="k", lw=0.6)
        bx.set_xlabel(r"$F_p$")
        bx.set_ylabel(r"$|\mu|$")
        return _save(fig, path)


def transient(path, t, x, nu, amp, peaks):
    with plt.rc_context(STYLE):
        fig, (ax, bx) = plt.subplots(2, 1, figsize=(6.4, 6))
        ax.plot(t, x, lw=0.4)
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        m = (nu > 0.8) & (nu < 1.2)
        bx.semilogy(nu[m], amp[m], lw=0.6)
        for p in peaks:
            bx.axvline(p, color="r", lw=0.5, ls="--")
        bx.set_xlabel(r"$\nu$")
        bx.set_ylabel("|FFT|")
        return _save(fig, path)


def gain(path, phi, curves: dict, td=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, g in curves.items():
            ax.plot(phi, g, label=name)
        if td is not None:
            ax.plot(td[0], td[1], ".", ms=1.5, label="time domain")
        ax.set_xlabel(r"$\varphi_0$")
        ax.set_ylabel("gain (dB)")
        ax.legend()
        return _save(fig, path)


def nsd(path, nu, channels: dict):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, S in channels.items():
            ax.plot(nu, 10 * np.log10(np.maximum(S, 1e-300)), lw=0.7, label=name)
        ax.set_xlabel(r"$\nu$")
        ax.set_ylabel("NSD (dB)")
        ax.legend()
        return _save(fig, path)


def squeeze(path, rows):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for w in sorted({r[0] for r in rows}):
            sel = [r for r in rows if r[0] == w]
            Fp = [r[1] for r in sel]
            ax.plot(Fp, [r[2] for r in sel], "-", label=rf"$\sigma_+$, $\omega$={w:g}")
            ax.plot(Fp, [r[3] for r in sel], "--", label=rf"$\sigma_-$, $\omega$={w:g}")
        ax.set_xlabel(r"$F_p$")
        ax.set_ylabel(r"$10\log_{10}(\sigma^2/\sigma_0^2)$")
        ax.legend()
        return _save(fig, path)
