"""Run reports: a delimited metrics table plus rendered figures.

Reads a completed run directory and emits report.csv, a copy-safe gamma
trajectory CSV, and PNG figures (gamma trajectory, loss curves) rendered
with the Agg backend.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .archspace import Genotype, param_count  # noqa: E402
from .dataspace import read_gamma_history  # noqa: E402
from .engine.rundir import (CONFIG_FILE, GAMMA_FILE, GENOTYPE_FILE,  # noqa: E402
                            METRICS_FILE, RunError, SEARCH_ARTIFACTS)

REPORT_CSV = "report.csv"
GAMMA_TRAJECTORY_CSV = "gamma_trajectory.csv"
GAMMA_FIGURE = "gamma_trajectory.png"
LOSS_FIGURE = "loss_curves.png"


def load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    missing = [name for name in SEARCH_ARTIFACTS
               if not (run_dir / name).is_file()]
    if missing:
        raise RunError(
            f"incomplete run directory {run_dir}: missing "
            f"{', '.join(missing)}")
    return {
        "dir": run_dir,
        "config": json.loads((run_dir / CONFIG_FILE).read_text()),
        "metrics": json.loads((run_dir / METRICS_FILE).read_text()),
        "genotype": Genotype.from_json((run_dir / GENOTYPE_FILE).read_text()),
        "gamma": read_gamma_history(run_dir / GAMMA_FILE),
    }


def _table_rows(run: dict) -> list[dict]:
    cfg = run["config"]
    metrics = run["metrics"]
    search = metrics.get("search", {})
    eval_m = metrics.get("eval")
    model_cfg = cfg["model"]
    selected = search.get("selected_config")
    if eval_m is not None:
        params = eval_m["parameter_count"]
        accuracy = f"{eval_m['accuracy']:.4f}"
    else:
        # evaluation phase not run yet; parameter count still derivable
        params = param_count(run["genotype"], model_cfg["channels"],
                             model_cfg["cells"], search["num_classes"],
                             stem_multiplier=model_cfg["stem_multiplier"])
        accuracy = "n/a"
    return [{
        "model": "discovered",
        "parameters": params,
        "accuracy": accuracy,
        "data_aware": str(bool(cfg["data_aware"])).lower(),
        "alignment": cfg["alignment"],
        "selected_window": selected[0] if selected else "",
        "selected_hop": selected[1] if selected else "",
        "selected_mels": selected[2] if selected else "",
        "early_stop_epoch": search.get("early_stop_epoch") or "",
        "seed": cfg["seed"],
    }]


def _plot_gamma(run: dict, path: Path) -> None:
    rows = run["gamma"]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if rows:
        by_config: dict[int, tuple[str, list, list]] = {}
        for r in rows:
            key = r["config_index"]
            label = f"{r['window']}/{r['hop']}/{r['mels']}"
            by_config.setdefault(key, (label, [], []))
            by_config[key][1].append(r["epoch"])
            by_config[key][2].append(r["weight"])
        for _, (label, xs, ys) in sorted(by_config.items()):
            ax.plot(xs, ys, marker="o", markersize=3, label=label)
        ax.legend(title="window/hop/mels", fontsize=8)
    else:
        ax.text(0.5, 0.5, "no gamma trajectory (not data aware)",
                ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("search epoch")
    ax.set_ylabel("softmax weight")
    ax.set_title("data-config mixing weights")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_losses(run: dict, path: Path) -> None:
    search = run["metrics"].get("search", {})
    eval_m = run["metrics"].get("eval")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    warm = search.get("warmup_loss", [])
    train = search.get("train_loss", [])
    arch = search.get("arch_loss", [])
    offset = len(warm)
    if warm:
        ax.plot(range(1, offset + 1), warm, label="warm-up", color="gray")
    if train:
        xs = range(offset + 1, offset + len(train) + 1)
        ax.plot(xs, train, label="search: train w")
    if arch:
        xs = range(offset + 1, offset + len(arch) + 1)
        ax.plot(xs, arch, label="search: arch val")
    if eval_m and eval_m.get("train_loss"):
        ax.plot(range(1, len(eval_m["train_loss"]) + 1),
                eval_m["train_loss"], linestyle="--",
                label="evaluation: train")
    stop = search.get("early_stop_epoch")
    if stop:
        ax.axvline(offset + stop, color="red", alpha=0.5, linestyle=":",
                   label="gamma frozen")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy loss")
    ax.set_title("loss curves")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def generate_report(run_dir, out_dir=None) -> dict:
    """Write report.csv, the gamma CSV and both figures; returns paths."""
    run = load_run(run_dir)
    out = Path(out_dir) if out_dir else run["dir"] / "report"
    out.mkdir(parents=True, exist_ok=True)

    rows = _table_rows(run)
    table_path = out / REPORT_CSV
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    gamma_path = out / GAMMA_TRAJECTORY_CSV
    gamma_path.write_text((run["dir"] / GAMMA_FILE).read_text())

    gamma_fig = out / GAMMA_FIGURE
    loss_fig = out / LOSS_FIGURE
    _plot_gamma(run, gamma_fig)
    _plot_losses(run, loss_fig)

    return {
        "table": table_path,
        "gamma_csv": gamma_path,
        "gamma_figure": gamma_fig,
        "loss_figure": loss_fig,
        "rows": rows,
    }


def format_table(rows: list[dict]) -> str:
    headers = list(rows[0].keys())
    widths = [max(len(str(h)), *(len(str(r[h])) for r in rows))
              for h in headers]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(str(r[h]).ljust(w)
                               for h, w in zip(headers, widths)))
    return "\n".join(lines)
