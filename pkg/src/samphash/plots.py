"""Figures for CLI reports, rendered off-screen to PNG files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated runs byte-identical
_META = {"Software": None}


def _save(fig, plot_dir: str, name: str) -> str:
    os.makedirs(plot_dir, exist_ok=True)
    fig.tight_layout()
    fig.savefig(os.path.join(plot_dir, name), dpi=100, metadata=_META)
    plt.close(fig)
    return name


def _num(x):
    if isinstance(x, str):
        return {"inf": np.inf, "-inf": -np.inf}.get(x, np.nan)
    return float(x)


def check_slacks(checks: list, plot_dir: str, name: str) -> str:
    """Horizontal bars of the margin by which each check clears its bound."""
    labels, slack, ok = [], [], []
    for c in checks:
        b, o = _num(c["bound"]), _num(c["observed"])
        s = o - b if c.get("sense", ">=") == ">=" else b - o
        labels.append(c["name"])
        slack.append(s if np.isfinite(s) else np.nan)
        ok.append(c["pass"])
    fig, ax = plt.subplots(figsize=(8, 0.3 * max(len(labels), 3) + 1))
    y = np.arange(len(labels))
    ax.scatter(np.nan_to_num(slack, posinf=1e3), y, c=["tab:green" if k else "tab:red" for k in ok], zorder=3)
    ax.set_yticks(y, labels, fontsize=7)
    ax.set_xscale("symlog", linthresh=1e-12)
    ticks = [10.0 ** k for k in (-12, -9, -6, -3, 0, 3)]
    if np.nanmin(np.asarray(slack + [0.0])) < 0:
        ticks = [-t for t in ticks[::-1]] + ticks
    ax.set_xticks(sorted(ticks + [0.0]))
    ax.tick_params(axis="x", labelsize=7)
    ax.grid(axis="x", alpha=0.3)
    ax.axvline(0, color="k", lw=0.8)
    ax.set_xlabel("margin to bound")
    return _save(fig, plot_dir, name)


def plan_rounds(plan: dict, plot_dir: str, name: str = "plan_rounds.png") -> str:
    lengths = plan["lengths_log2"]
    seeds = [p["seed_bits"] + p["extra_seed_bits"] for p in plan["rounds"]]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.plot(range(len(lengths)), lengths, "o-")
    a1.axhline(4 * np.log2(plan["r"]), ls="--", color="gray", label="log2 r^4")
    a1.set_xlabel("round")
    a1.set_ylabel("log2 length")
    a1.legend()
    a2.bar(range(1, len(seeds) + 1), seeds)
    a2.set_xlabel("round")
    a2.set_ylabel("seed bits")
    a2.set_title(f"total {plan['total_seed_bits']} bits, r^3 = {plan['r'] ** 3}", fontsize=9)
    return _save(fig, plot_dir, name)


def sample_map(interval_starts, interval_lengths, total_bits: int, plot_dir: str,
               name: str = "sample_positions.png") -> str:
    """Where each output bit comes from in the randomizer."""
    starts = np.asarray(interval_starts, dtype=float)
    lens = np.asarray(interval_lengths, dtype=float)
    out_pos = np.concatenate([[0.0], np.cumsum(lens)[:-1]])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(starts, out_pos, where="post")
    ax.set_xlim(0, total_bits)
    ax.set_xlabel("randomizer position (bits)")
    ax.set_ylabel("output position (bits)")
    return _save(fig, plot_dir, name)


def key_pipeline(report: dict, plot_dir: str, name: str = "key_lengths.png") -> str:
    plan = report["plan"]
    stages = ["randomizer", "sampled", "entropy assumed", "key"]
    vals = [2.0 ** plan["lengths_log2"][0], float(report["output_bits"]),
            max(1.0, report["k_assumed"]), float(report["key_bits"])]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(stages, vals)
    ax.set_yscale("log", base=2)
    ax.set_ylabel("bits")
    return _save(fig, plot_dir, name)


def sampler_tails(results: dict, plot_dir: str, name: str = "sampler_tails.png") -> str:
    tails = results["empirical_tail_rows"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(tails))
    ax.plot(x, tails, "o", label="empirical")
    if "exact_tail_rows" in results:
        ax.plot(x, results["exact_tail_rows"], "x", label="exact")
    ax.axhline(results["hoeffding_bound"], ls="--", color="gray", label="Hoeffding bound")
    ax.set_xlabel("row")
    ax.set_ylabel("failure probability")
    ax.legend()
    return _save(fig, plot_dir, name)
