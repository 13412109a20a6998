"""Score-card files and figures written by ``travelsim score``."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402
from .core import POI, Plan, extract_planned_trajectory  # noqa: E402
from .metrics import DIMENSIONS, ScoreCard  # noqa: E402
from .prompts import template_versions  # noqa: E402
from .sandbox import Trace, extract_simulated_trajectory  # noqa: E402
from .stamina import stamina_state  # noqa: E402

# no timestamps or version strings in the PNG so reruns are byte-identical
_PNG_META = {"Software": None}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def provenance(command: str, config: Mapping, seed: int | None, inputs: Mapping[str, str]) -> dict:
    return {
        "command": command,
        "package_version": __version__,
        "seed": seed,
        "config": dict(config),
        "inputs": {name: sha256_file(path) for name, path in sorted(inputs.items())},
        "prompt_versions": template_versions(),
    }


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def report_csv(rows: Sequence[tuple[str, ScoreCard]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=("run",) + ScoreCard.CSV_FIELDS + ("flags",), lineterminator="\n")
    writer.writeheader()
    for run, card in rows:
        writer.writerow(dict(card.csv_row(), run=run, flags=";".join(card.flags)))
    return buf.getvalue()


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_trajectories(plan: Plan, trace: Trace, pois: Mapping[str, POI] | None, path: Path) -> Path:
    planned = extract_planned_trajectory(plan, pois)
    simulated = {t.day: t for t in extract_simulated_trajectory(trace, pois)}
    places: list[str] = []
    for t in planned + list(simulated.values()):
        for item in t.items:
            if item.location not in places:
                places.append(item.location)
    index = {p: i for i, p in enumerate(places)}
    days = max(len(planned), 1)
    fig, axes = plt.subplots(days, 1, figsize=(9, 2.2 + 1.8 * days), squeeze=False)
    for ax, t in zip(axes[:, 0], planned):
        for label, traj, style in (("plan", t, "o-"), ("simulated", simulated.get(t.day), "s--")):
            if traj is None or not traj.items:
                continue
            ax.step(
                [i.time / 60 for i in traj.items],
                [index[i.location] for i in traj.items],
                style,
                where="post",
                label=label,
                markersize=4,
            )
        ax.set_title(f"Day {t.day}", fontsize=9)
        ax.set_yticks(range(len(places)))
        ax.set_yticklabels(places, fontsize=7)
        ax.set_xlim(6, 24)
        ax.grid(alpha=0.3)
    axes[0, 0].legend(fontsize=7, loc="upper left")
    axes[-1, 0].set_xlabel("hour of day")
    fig.tight_layout()
    return _save(fig, path)


def plot_stamina(trace: Trace, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(9, 3.2))
    # plot each state at its own clock so the overnight reset lands on the next morning
    xs = [s.day * 24 + s.time / 60 for s in trace.states]
    ys = [s.stamina.value for s in trace.states]
    ax.plot(xs, ys, "o-", markersize=3)
    for level in (2.0, 4.0, 6.0):
        ax.axhline(level, color="grey", lw=0.6, ls=":")
    for mid in (1.0, 3.0, 5.0, 6.5):
        ax.text(xs[0] if xs else 0, mid, stamina_state(mid), fontsize=7, color="grey", va="center")
    ticks = sorted({s.day for s in trace.states})
    ax.set_xticks([d * 24 + 12 for d in ticks])
    ax.set_xticklabels([f"day {d} noon" for d in ticks], fontsize=8)
    ax.set_ylabel("stamina")
    ax.set_ylim(0, max(ys + [1.0]) + 0.5)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_dimensions(card: ScoreCard, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    values = [getattr(card.per_dims, d) for d in DIMENSIONS]
    bars = ax.bar(DIMENSIONS, values, color="#4c72b0")
    for bar, v in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, v + 1, f"{v:.1f}", ha="center", fontsize=8)
    ax.axhline(card.per_agg, color="#c44e52", lw=1, ls="--", label=f"aggregate {card.per_agg:.1f}")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def write_report(
    out_dir,
    card: ScoreCard,
    plan: Plan,
    trace: Trace,
    prov: Mapping,
    pois: Mapping[str, POI] | None = None,
    run: str = "run",
) -> dict[str, Path]:
    """Write scorecard.json, report.csv and the three figures into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "scorecard": out / "scorecard.json",
        "report": out / "report.csv",
        "trajectory": out / "trajectory.png",
        "stamina": out / "stamina.png",
        "per_dims": out / "per_dims.png",
    }
    write_json(paths["scorecard"], {"scorecard": card.to_dict(), "provenance": dict(prov)})
    paths["report"].write_text(report_csv([(run, card)]), encoding="utf-8")
    plot_trajectories(plan, trace, pois, paths["trajectory"])
    plot_stamina(trace, paths["stamina"])
    plot_dimensions(card, paths["per_dims"])
    return paths


def summary_line(card: ScoreCard) -> str:
    return (
        f"CPH {card.cph:.1f}  CPL {card.cpl:.0f}  FEA {card.fea:.1f}  PER {card.per_agg:.1f}  "
        f"reward {card.reward:+.3f}" + (f"  flags: {', '.join(card.flags)}" if card.flags else "")
    )
