"""Run directory layout: manifest, generation log, checkpoints, summaries.

A run directory is append-only and self-contained: the manifest carries the
fully resolved configuration, ``generations.jsonl`` holds one record per
generation (no timestamps, so reruns are byte-identical), checkpoints pickle
the full engine state for exact resume, and ``summary.csv`` condenses the
final best team.  Plots are derived from these files alone.
"""

from __future__ import annotations

import csv
import json
import pickle
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import __version__
from .errors import ScenarioError
from .evolution import EngineState, GenerationReport

MANIFEST = "manifest.json"
GENERATIONS = "generations.jsonl"
SUMMARY = "summary.csv"
TIMINGS = "timings.csv"
CHECKPOINT_DIR = "checkpoints"

SUMMARY_COLUMNS = (
    "budget",
    "best_fitness",
    "team_cost",
    "total_deliveries",
    "individual_deliveries",
    "collab_deliveries",
    "avg_energy_used",
    "n_species",
)


def _json_line(payload: Dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def report_to_record(report: GenerationReport) -> Dict:
    """Serializable generation record (wall-clock duration deliberately omitted)."""
    return {
        "generation": report.generation,
        "census": {str(k): v for k, v in sorted(report.census.items())},
        "founded": report.founded,
        "extinct": report.extinct,
        "best": _stringify_keys(report.best),
    }


def _stringify_keys(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify_keys(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_stringify_keys(v) for v in obj]
    return obj


class RunLog:
    """Writer/reader for one run directory."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    # --- writing -----------------------------------------------------------

    def start(self, resolved_config: Dict, scenario_input: Dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / CHECKPOINT_DIR).mkdir(exist_ok=True)
        manifest = {
            "tool": "swarmcodesign",
            "version": __version__,
            "scenario": resolved_config,
            "scenario_input": scenario_input,
        }
        with open(self.directory / MANIFEST, "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
            fh.write("\n")
        # fresh run: truncate any previous log
        open(self.directory / GENERATIONS, "w").close()
        with open(self.directory / TIMINGS, "w", newline="") as fh:
            csv.writer(fh).writerow(["generation", "duration_s"])

    def append(self, report: GenerationReport) -> None:
        with open(self.directory / GENERATIONS, "a") as fh:
            fh.write(_json_line(report_to_record(report)) + "\n")
        with open(self.directory / TIMINGS, "a", newline="") as fh:
            csv.writer(fh).writerow([report.generation, f"{report.duration_s:.3f}"])

    def save_checkpoint(self, state: EngineState) -> Path:
        path = self.directory / CHECKPOINT_DIR / f"ckpt_{state.generation:06d}.pkl"
        with open(path, "wb") as fh:
            pickle.dump(state, fh, protocol=pickle.HIGHEST_PROTOCOL)
        return path

    def write_summary(self, budget_amount: Optional[float]) -> Path:
        records = self.records()
        if not records:
            raise ScenarioError(f"{self.directory}: no generation records to summarize")
        best = records[-1]["best"]
        team = best["team"]
        row = {
            "budget": "" if budget_amount is None else budget_amount,
            "best_fitness": best["fitness"],
            "team_cost": team["cost"],
            "total_deliveries": team["deliveries_total"],
            "individual_deliveries": team["deliveries_individual"],
            "collab_deliveries": team["deliveries_collab"],
            "avg_energy_used": team["energy_used_avg"],
            "n_species": team["n_species"],
        }
        path = self.directory / SUMMARY
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
            writer.writeheader()
            writer.writerow(row)
        return path

    def truncate_after(self, generation: int) -> None:
        """Drop records past ``generation`` (exclusive) before a resume."""
        kept = [r for r in self.records() if r["generation"] < generation]
        with open(self.directory / GENERATIONS, "w") as fh:
            for record in kept:
                fh.write(_json_line(record) + "\n")

    # --- reading -----------------------------------------------------------

    def manifest(self) -> Dict:
        path = self.directory / MANIFEST
        if not path.exists():
            raise ScenarioError(f"{self.directory}: missing {MANIFEST}")
        with open(path) as fh:
            return json.load(fh)

    def records(self) -> List[Dict]:
        path = self.directory / GENERATIONS
        if not path.exists():
            return []
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def checkpoints(self) -> List[Tuple[int, Path]]:
        out = []
        for path in sorted((self.directory / CHECKPOINT_DIR).glob("ckpt_*.pkl")):
            match = re.match(r"ckpt_(\d+)\.pkl", path.name)
            if match:
                out.append((int(match.group(1)), path))
        return out

    def latest_checkpoint(self) -> Tuple[int, EngineState]:
        points = self.checkpoints()
        if not points:
            raise ScenarioError(f"{self.directory}: no checkpoints to resume from")
        generation, path = points[-1]
        with open(path, "rb") as fh:
            return generation, pickle.load(fh)
