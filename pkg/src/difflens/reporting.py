"""Campaign report rendering: delimited records, a text summary, and figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

BUG_VERDICTS = ("incorrect-result", "incorrectly-rejected", "crash")
VERDICT_ORDER = ("incorrect-result", "incorrectly-rejected", "crash",
                 "consistent", "filtered", "unsat", "skipped")


def load_summaries(campaign_dir: Path) -> list[dict]:
    summaries = []
    for path in sorted(Path(campaign_dir).glob("*.summary.json")):
        summaries.append(json.loads(path.read_text()))
    return summaries


def write_csv(summaries: list[dict], path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["api", "iterations"] + list(VERDICT_ORDER))
        for s in summaries:
            verdicts = s.get("verdicts", {})
            writer.writerow([s["api"], s.get("iterations", 0)]
                            + [verdicts.get(v, 0) for v in VERDICT_ORDER])


def write_text_summary(summaries: list[dict], path: Path) -> int:
    lines = ["campaign summary", "================", ""]
    total_bugs = 0
    for s in summaries:
        verdicts = s.get("verdicts", {})
        bug_count = sum(verdicts.get(v, 0) for v in BUG_VERDICTS)
        total_bugs += bug_count
        flags = ", ".join(
            f"{v}={verdicts[v]}" for v in VERDICT_ORDER if verdicts.get(v)
        )
        lines.append(f"{s['api']}: {s.get('iterations', 0)} iterations; {flags or 'no records'}")
    lines.append("")
    lines.append(f"APIs with bug verdicts: "
                 f"{sum(1 for s in summaries if any(s.get('verdicts', {}).get(v) for v in BUG_VERDICTS))}"
                 f" of {len(summaries)}")
    Path(path).write_text("\n".join(lines) + "\n")
    return total_bugs


def render_verdict_figure(summaries: list[dict], path: Path):
    apis = [s["api"] for s in summaries]
    fig, ax = plt.subplots(figsize=(max(6, len(apis) * 1.2), 4.5))
    bottom = [0] * len(apis)
    colors = {
        "incorrect-result": "#c0392b",
        "incorrectly-rejected": "#e67e22",
        "crash": "#8e44ad",
        "consistent": "#27ae60",
        "filtered": "#95a5a6",
        "unsat": "#bdc3c7",
        "skipped": "#d5dbdb",
    }
    for verdict in VERDICT_ORDER:
        heights = [s.get("verdicts", {}).get(verdict, 0) for s in summaries]
        ax.bar(apis, heights, bottom=bottom, label=verdict, color=colors[verdict])
        bottom = [b + h for b, h in zip(bottom, heights)]
    ax.set_ylabel("iterations")
    ax.set_title("verdicts per API")
    ax.legend(fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_constraint_figure(constraint_docs: list[dict], path: Path):
    """Unique path constraints and mean constraints-per-path for each API."""
    apis, unique_counts, means = [], [], []
    for doc in constraint_docs:
        apis.append(doc["api"])
        pcs = doc.get("path_constraints", [])
        unique_counts.append(len(pcs))
        sizes = [len(pc.get("constraints", [])) for pc in pcs]
        means.append(sum(sizes) / len(sizes) if sizes else 0.0)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(8, len(apis) * 1.6), 4))
    ax1.bar(apis, unique_counts, color="#2980b9")
    ax1.set_title("unique path constraints")
    ax2.bar(apis, means, color="#16a085")
    ax2.set_title("input constraints per path")
    for ax in (ax1, ax2):
        plt.setp(ax.get_xticklabels(), rotation=30, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def build_report(out_dir: Path) -> int:
    """Aggregate campaign artifacts; returns the number of bug verdicts."""
    out_dir = Path(out_dir)
    campaign_dir = out_dir / "campaign"
    report_dir = out_dir / "report"
    figures_dir = report_dir / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    summaries = load_summaries(campaign_dir)
    write_csv(summaries, report_dir / "report.csv")
    bugs = write_text_summary(summaries, report_dir / "report.txt")
    if summaries:
        render_verdict_figure(summaries, figures_dir / "verdicts.png")
    constraint_docs = []
    for path in sorted((out_dir / "constraints").glob("*.json")):
        constraint_docs.append(json.loads(path.read_text()))
    if constraint_docs:
        render_constraint_figure(constraint_docs, figures_dir / "constraints.png")
    return bugs
