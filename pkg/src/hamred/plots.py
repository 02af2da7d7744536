"""Figure rendering for the CLI report paths.

Every report CSV gets a companion PNG; the CSV stays the machine-readable
contract and the figures are a reading aid.  Rendering is headless (Agg).
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams["figure.dpi"] = 120
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def _finite(pairs):
    pairs = [(x, y) for x, y in pairs if np.isfinite(y)]
    return zip(*pairs) if pairs else ([], [])


def plot_basis_report(rows, path):
    """Snapshot energy and projection error against basis size, per kind."""
    fig, (ax_e, ax_p) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    kinds = sorted({row["kind"] for row in rows})
    for kind in kinds:
        pts = sorted((int(r["n"]), float(r["snapshot_energy"])) for r in rows
                     if r["kind"] == kind)
        ax_e.plot(*_finite(pts), marker="o", label=kind)
        pts = sorted((int(r["n"]), float(r["projection_error"])) for r in rows
                     if r["kind"] == kind)
        ax_p.semilogy(*_finite(pts), marker="o", label=kind)
    ax_e.set_xlabel("basis size n")
    ax_e.set_ylabel("snapshot energy")
    ax_p.set_xlabel("basis size n")
    ax_p.set_ylabel("projection error")
    ax_e.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_error_sweep(rows, path, value_key="rel_l2", ylabel="relative l2 error"):
    """State error against basis size, one curve per (kind, variant, provenance)."""
    fig, ax = plt.subplots(figsize=(6.8, 4.2))
    ok_rows = [r for r in rows if r.get("status", "ok") == "ok"]
    groups = sorted({(r["basis_kind"], r["variant"], r["provenance"]) for r in ok_rows})
    for kind, variant, prov in groups:
        pts = sorted((int(r["n"]), float(r[value_key])) for r in ok_rows
                     if (r["basis_kind"], r["variant"], r["provenance"]) == (kind, variant, prov))
        xs, ys = _finite(pts)
        if not xs:
            continue
        ax.semilogy(xs, ys, marker="o", label=f"{kind}/{variant}/{prov}")
    ax.set_xlabel("basis size n")
    ax.set_ylabel(ylabel)
    if groups:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_ham_trace(traces, path):
    """Absolute Hamiltonian error over time for one or more labelled traces."""
    fig, ax = plt.subplots(figsize=(6.8, 4.2))
    floor = 1e-17
    for label, trace in traces:
        trace = np.asarray(trace)
        ax.semilogy(trace[:, 0], np.maximum(np.abs(trace[:, 1]), floor), label=label)
    ax.set_xlabel("time")
    ax.set_ylabel("|H error|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
