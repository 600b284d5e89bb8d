"""Success tables, cycle logs and success-rate charts."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .goals import Strategy
from .harness import CycleReport

log = logging.getLogger(__name__)

STYLE = {"ab": ("Action Babbling", "tab:red", "o"),
         "gb": ("Goal Babbling", "tab:blue", "s"),
         "dgb": ("Distance Goal Babbling", "tab:green", "^")}


def success_percent(matrix) -> np.ndarray:
    """Per-cycle success rate in percent over trials (rows)."""
    M = np.asarray(matrix, dtype=bool)
    if M.ndim != 2 or M.shape[0] == 0:
        return np.zeros(M.shape[1] if M.ndim == 2 else 0)
    return 100.0 * M.mean(axis=0)


def _key(strategy) -> str:
    return strategy.value if isinstance(strategy, Strategy) else Strategy.parse(str(strategy)).value


def write_success_csv(matrices: Mapping, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "strategy", "pct"])
        for strategy, M in matrices.items():
            for c, pct in enumerate(success_percent(M)):
                w.writerow([c, _key(strategy), f"{pct:.1f}"])
    return path


def read_success_csv(path) -> dict[str, np.ndarray]:
    rows: dict[str, list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["strategy"], []).append((int(rec["cycle"]), float(rec["pct"])))
    return {k: np.array([p for _, p in sorted(v)]) for k, v in rows.items()}


def plot_success(curves: Mapping[str, Sequence[float]], path, title: str = "") -> Path:
    """Line chart of cycle vs % success, one line per strategy, as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "dpa", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for strategy, pct in curves.items():
            label, color, marker = STYLE.get(_key(strategy), (str(strategy), None, "o"))
            ax.plot(np.arange(len(pct)), pct, label=label, color=color, marker=marker, markersize=3)
        ax.set_xlabel("cycle")
        ax.set_ylabel("% success")
        ax.set_ylim(-5, 105)
        ax.grid(alpha=0.3)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def emit_report(matrices: Mapping, out_dir, domain: str = "",
                reports: Mapping[str, Sequence[CycleReport]] | None = None) -> list[Path]:
    """Write success.csv, reports.jsonl and one SVG chart for the domain."""
    if not matrices or all(np.asarray(M).size == 0 for M in matrices.values()):
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [write_success_csv(matrices, out / "success.csv")]
    if reports is not None:
        path = out / "reports.jsonl"
        with open(path, "w") as fh:
            for strategy, rows in reports.items():
                for r in rows:
                    rec = {"domain": domain, "strategy": _key(strategy), **asdict(r)}
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        files.append(path)
    curves = {s: success_percent(M) for s, M in matrices.items()}
    files.append(plot_success(curves, out / f"success_{domain or 'domain'}.svg", title=domain))
    log.info("wrote %s", ", ".join(str(f) for f in files))
    return files
