"""Figure rendering for report outputs (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_inb_curve", "plot_icer_vs_eta", "plot_study_bias"]


def plot_inb_curve(rows: list[dict], path: str, icer: float | None = None,
                   currency: str = "USD") -> None:
    """Incremental net benefit against willingness to pay, with 95% band."""
    thetas = [r["theta"] for r in rows]
    vals = [r["inb"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thetas, vals, color="tab:blue", label="INB")
    if all(r.get("lo") is not None for r in rows):
        ax.fill_between(thetas, [r["lo"] for r in rows],
                        [r["hi"] for r in rows], alpha=0.2, color="tab:blue",
                        label="95% CI")
    ax.axhline(0.0, color="grey", lw=0.8)
    if icer is not None:
        ax.axvline(icer, color="tab:red", ls="--", lw=0.8,
                   label=f"ICER = {icer:.1f}")
    ax.set_xlabel(f"willingness to pay ({currency}/time unit)")
    ax.set_ylabel(f"incremental net benefit ({currency})")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_icer_vs_eta(rows: list[dict], path: str) -> None:
    """ICER against the analysis horizon eta."""
    etas = [r["eta"] for r in rows]
    vals = [r["icer"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(etas, vals, marker="o", ms=3, color="tab:green")
    if all(r.get("lo") is not None for r in rows):
        ax.fill_between(etas, [r["lo"] for r in rows], [r["hi"] for r in rows],
                        alpha=0.2, color="tab:green")
    ax.set_xlabel("analysis horizon eta")
    ax.set_ylabel("ICER (cost per unit of restricted mean survival)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_study_bias(rows: list[dict], path: str) -> None:
    """Relative bias per scenario/quantity from a Monte Carlo study."""
    labels = [f"{r['scenario']}:{r['quantity']}" for r in rows]
    bias = [r["rel_bias_pct"] for r in rows]
    err = [1.959964 * r["rel_bias_mc_se_pct"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    pos = range(len(rows))
    ax.bar(pos, bias, yerr=err, color="tab:purple", alpha=0.7, capsize=3)
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_xticks(list(pos))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("relative bias (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
