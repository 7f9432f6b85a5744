"""Learning-curve files, mean/std summaries, plots, speedup tables and
run manifests."""

from __future__ import annotations

import csv
import json
import math
import platform
import warnings
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .experiment import CurvePoint, RunRecord, StageRecord

CURVE_FIELDS = ["steps", "mean_reward", "success_rate", "stage"]
SUMMARY_FIELDS = ["steps", "success_mean", "success_std", "reward_mean", "reward_std", "n"]
NOT_REACHED = "not reached"


def _fmt(x: float) -> str:
    # repr round-trips exactly, so reruns give identical bytes
    return repr(float(x))


def write_curve_csv(record: RunRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for p in record.curve:
            w.writerow([p.steps, _fmt(p.mean_reward), _fmt(p.success_rate), p.stage])


def read_curve_csv(path) -> list[CurvePoint]:
    with open(path, newline="") as fh:
        return [
            CurvePoint(int(r["steps"]), float(r["mean_reward"]), float(r["success_rate"]), int(r["stage"]))
            for r in csv.DictReader(fh)
        ]


def _step_values(curve: Sequence[CurvePoint], grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous step function of a curve sampled on ``grid``.

    Before the first point the success rate is 0 and the reward undefined.
    """
    steps = np.array([p.steps for p in curve], dtype=float)
    idx = np.searchsorted(steps, grid, side="right") - 1
    succ = np.array([p.success_rate for p in curve] + [0.0])
    rew = np.array([p.mean_reward for p in curve] + [np.nan])
    return succ[idx], rew[idx]  # idx == -1 picks the sentinel


def summarize(records: Sequence[RunRecord]) -> dict[str, np.ndarray]:
    """Mean and std across repetitions on the union of all curve steps."""
    grid = np.unique(np.concatenate([[0]] + [[p.steps for p in r.curve] for r in records])).astype(float)
    succ = np.empty((len(records), len(grid)))
    rew = np.empty_like(succ)
    for i, r in enumerate(records):
        succ[i], rew[i] = _step_values(r.curve, grid)
    with warnings.catch_warnings():  # all-NaN columns before the first point
        warnings.simplefilter("ignore", RuntimeWarning)
        reward_mean = np.nanmean(rew, axis=0)
        reward_std = np.nanstd(rew, axis=0)
    return {
        "steps": grid,
        "success_mean": succ.mean(axis=0),
        "success_std": succ.std(axis=0),
        "reward_mean": reward_mean,
        "reward_std": reward_std,
        "n": np.sum(~np.isnan(rew), axis=0).astype(float),
    }


def write_summary_csv(summary: Mapping[str, np.ndarray], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for i in range(len(summary["steps"])):
            w.writerow([int(summary["steps"][i])] + [_fmt(summary[k][i]) for k in SUMMARY_FIELDS[1:-1]] + [int(summary["n"][i])])


def mean_crossing(records: Sequence[RunRecord], threshold: float = 0.95) -> Optional[int]:
    """First step at which the mean validation success reaches ``threshold``."""
    if not records:
        return None
    s = summarize(records)
    hit = np.flatnonzero(s["success_mean"] >= threshold - 1e-12)
    return int(s["steps"][hit[0]]) if len(hit) else None


def speedup(fast: Optional[float], slow: Optional[float]) -> Optional[float]:
    """How many times fewer steps ``fast`` needed than ``slow``."""
    if fast is None or slow is None or fast <= 0:
        return None
    return float(slow) / float(fast)


def speedup_table(groups: Mapping[str, Sequence[RunRecord]], reference: Optional[str] = None, threshold: float = 0.95) -> list[dict]:
    """One row per group: crossing step and speedup against ``reference``
    (the first group by default)."""
    if not groups:
        return []
    reference = reference or next(iter(groups))
    crossings = {k: mean_crossing(v, threshold) for k, v in groups.items()}
    ref = crossings[reference]
    rows = []
    for k, c in crossings.items():
        s = speedup(c, ref)
        rows.append(
            {
                "label": k,
                "reference": reference,
                "crossing_steps": NOT_REACHED if c is None else c,
                "speedup": NOT_REACHED if s is None else round(s, 3),
            }
        )
    return rows


def format_table(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [keys] + [[str(r[k]) for k in keys] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(keys))]
    return "\n".join("  ".join(c[i].ljust(widths[i]) for i in range(len(keys))).rstrip() for c in cells)


def plot_curves(groups: Mapping[str, Sequence[RunRecord]], path, title: str = "") -> None:
    """Mean validation success with a one-std band, one line per group."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt keeps the SVG bytes stable across runs
    with matplotlib.rc_context({"svg.hashsalt": "bebop", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, records in groups.items():
            s = summarize(records)
            ax.step(s["steps"], s["success_mean"], where="post", label=label)
            ax.fill_between(
                s["steps"],
                np.clip(s["success_mean"] - s["success_std"], 0, 1),
                np.clip(s["success_mean"] + s["success_std"], 0, 1),
                step="post",
                alpha=0.2,
            )
        ax.axhline(0.95, color="grey", lw=0.8, ls="--")
        ax.set_xlabel("training steps")
        ax.set_ylabel("validation success")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def record_to_dict(record: RunRecord) -> dict:
    return asdict(record)


def record_from_dict(d: Mapping) -> RunRecord:
    d = dict(d)
    d["curve"] = [CurvePoint(**p) for p in d.get("curve", [])]
    d["stages"] = [StageRecord(**{**s, "history": [tuple(h) for h in s.get("history", [])]}) for s in d.get("stages", [])]
    return RunRecord(**d)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def versions() -> dict[str, str]:
    import numba
    import scipy
    import yaml

    return {
        "bebop": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "pyyaml": yaml.__version__,
    }


def write_manifest(out_dir, configs: Sequence[ExperimentConfig], extra: Optional[dict] = None) -> Path:
    entries = []
    for c in configs:
        seeds = [dict(zip(("training", "validation"), c.seeds(r))) for r in range(c.repetitions)]
        entries.append({"label": c.label, "config": c.to_dict(), "config_hash": c.digest(), "seeds": seeds})
    doc = {"experiments": entries, "versions": versions(), **(extra or {})}
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def emit_outputs(
    results: Mapping[ExperimentConfig, Sequence[RunRecord]],
    out_dir,
    reference: Optional[str] = None,
    plot: bool = True,
) -> dict:
    """Write everything for a set of experiments into ``out_dir``.

    Layout: ``<label>/rep<k>.csv`` and ``rep<k>.json`` per repetition,
    ``<label>/summary.csv``, ``curves.svg``, ``speedup.csv`` and
    ``manifest.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[str, Sequence[RunRecord]] = {}
    for cfg, records in results.items():
        d = out / cfg.label
        d.mkdir(exist_ok=True)
        for r in records:
            write_curve_csv(r, d / f"rep{r.repetition}.csv")
            (d / f"rep{r.repetition}.json").write_text(json.dumps(_jsonable(record_to_dict(r)), indent=1) + "\n")
        write_summary_csv(summarize(records), d / "summary.csv")
        groups[cfg.label] = records
    rows = speedup_table(groups, reference)
    with open(out / "speedup.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["label", "reference", "crossing_steps", "speedup"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if plot and groups:
        plot_curves(groups, out / "curves.svg")
    write_manifest(out, list(results))
    return {"groups": groups, "speedup": rows}
