"""Plots derived from a run log (never from re-simulation)."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ScenarioError
from .runlog import RunLog

PLOT_KINDS = ("species", "best-team", "fitness", "traits")


def _species_palette(species_ids: List[int]) -> Dict[int, tuple]:
    cmap = plt.get_cmap("tab20")
    return {sid: cmap(i % 20) for i, sid in enumerate(sorted(species_ids))}


def _stack_series(records, extract) -> tuple:
    """Per-species time series from per-generation {species id: count} dicts."""
    all_ids = sorted({int(sid) for r in records for sid in extract(r)})
    series = {sid: [0] * len(records) for sid in all_ids}
    for t, record in enumerate(records):
        for sid, count in extract(record).items():
            series[int(sid)][t] = count
    return all_ids, series


def _plot_stack(records, extract, title, ylabel, path):
    ids, series = _stack_series(records, extract)
    generations = [r["generation"] for r in records]
    palette = _species_palette(ids)
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.stackplot(
        generations,
        [series[sid] for sid in ids],
        colors=[palette[sid] for sid in ids],
        labels=[f"species {sid}" for sid in ids],
    )
    ax.set_xlabel("generation")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(ids) <= 12:
        ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _plot_fitness(records, path):
    generations = [r["generation"] for r in records]
    fitness = [r["best"]["fitness"] for r in records]
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(generations, fitness, lw=1.2)
    ax.set_xlabel("generation")
    ax.set_ylabel("best-team fitness")
    ax.set_title("Best-team fitness per generation")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _plot_traits(records, path):
    team = records[-1]["best"]["team"]
    traits = team["species_traits"]
    rows = sorted(traits.items(), key=lambda kv: int(kv[0]))
    labels = [f"species {sid}" for sid, _ in rows]
    palette = _species_palette([int(sid) for sid, _ in rows])

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2 + 0.3 * len(rows)))
    for ax, key, title in zip(
        axes, ("radius", "dominance", "selectivity"), ("radius (m)", "dominance", "selectivity")
    ):
        values = [row[key] for _, row in rows]
        ax.barh(labels, values, color=[palette[int(sid)] for sid, _ in rows])
        ax.set_title(title)
        ax.invert_yaxis()
    tail = "\n".join(
        f"species {sid}: tiers c{row['chassis_tier']}/b{row['battery_tier']}/m{row['motor_tier']}"
        f", {row['effector']}, slots {team['species_slots'].get(str(sid), team['species_slots'].get(sid, 0))}"
        for sid, row in rows
    )
    fig.suptitle("Best-team morphology by species", y=1.02)
    fig.text(0.01, -0.02, tail, fontsize=8, va="top")
    fig.tight_layout()
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)


def render(run_dir, kind: str, out_dir=None) -> List[Path]:
    """Render one plot kind (or "all") from a run directory's log."""
    log = RunLog(Path(run_dir))
    records = log.records()
    if not records:
        raise ScenarioError(f"{run_dir}: no generation records found")
    out_dir = Path(out_dir) if out_dir else Path(run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    kinds = PLOT_KINDS if kind == "all" else (kind,)
    written = []
    for k in kinds:
        path = out_dir / f"plot_{k.replace('-', '_')}.png"
        if k == "species":
            _plot_stack(records, lambda r: r["census"], "Population species composition", "members", path)
        elif k == "best-team":
            _plot_stack(
                records,
                lambda r: r["best"]["team"]["species_slots"],
                "Best-team species composition",
                "swarm slots",
                path,
            )
        elif k == "fitness":
            _plot_fitness(records, path)
        elif k == "traits":
            _plot_traits(records, path)
        else:
            raise ScenarioError(f"unknown plot kind {k!r}")
        written.append(path)
    return written
