"""Figure rendering for run and sweep reports.

Uses the non-interactive Agg backend; every function writes a file and
returns the path, nothing is shown on screen.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_FLOOR = 1e-300


def save_convergence_figure(curves, path, title: str | None = None,
                            ylabel: str = "residual") -> str:
    """Semilog residual-vs-round figure.

    ``curves`` is a list of ``(label, ks, values)``; nonpositive values are
    clipped to a tiny floor so the log axis stays usable.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, ks, values in curves:
        vals = [max(v, _FLOOR) for v in values]
        ax.semilogy(ks, vals, label=label, linewidth=1.2)
    ax.set_xlabel("round k")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if len(curves) > 1 or (curves and curves[0][0]):
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def records_curve(records, label: str = ""):
    """Adapt a list of run records to a figure curve."""
    return (label, [r.k for r in records], [r.lambda_norm for r in records])
