"""Lift reports: JSON schema, delimited output, tables, and figures."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field


@dataclass
class SynthReport:
    ok: bool = False
    formula: str | None = None
    time_s: float = 0.0
    phase: str = "none"
    programs_enumerated: int = 0
    candidates_checked: int = 0
    pruned_type: int = 0
    pruned_value: int = 0
    error: str | None = None


@dataclass
class VerifyReport:
    verdict: str = "skipped"  # verified | refuted | unknown | skipped
    reason: str = ""
    invariant: str | None = None
    pattern: bool = False
    per_vc: list = field(default_factory=list)  # {name, status, time_s}
    time_s: float = 0.0


@dataclass
class DiffReport:
    passed: bool | None = None
    trials: int = 0
    skipped: int = 0
    max_rel_error: float | None = None
    note: str = ""


@dataclass
class LiftReport:
    kernel: str
    source: str = ""
    parse_ok: bool = True
    parse_error: str | None = None
    synthesis: SynthReport = field(default_factory=SynthReport)
    verification: VerifyReport = field(default_factory=VerifyReport)
    simplified: str | None = None
    simplified_latex: str | None = None
    differential: DiffReport = field(default_factory=DiffReport)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "source": self.source,
            "parse": {"ok": self.parse_ok, "error": self.parse_error},
            "synthesis": {
                "ok": self.synthesis.ok,
                "formula": self.synthesis.formula,
                "time_s": round(self.synthesis.time_s, 4),
                "phase": self.synthesis.phase,
                "programs_enumerated": self.synthesis.programs_enumerated,
                "candidates_checked": self.synthesis.candidates_checked,
                "pruned_type": self.synthesis.pruned_type,
                "pruned_value": self.synthesis.pruned_value,
                "error": self.synthesis.error,
            },
            "verification": {
                "verdict": self.verification.verdict,
                "reason": self.verification.reason,
                "invariant": self.verification.invariant,
                "pattern": self.verification.pattern,
                "per_vc": self.verification.per_vc,
                "time_s": round(self.verification.time_s, 4),
            },
            "simplified": self.simplified,
            "simplified_latex": self.simplified_latex,
            "differential": {
                "passed": self.differential.passed,
                "trials": self.differential.trials,
                "skipped": self.differential.skipped,
                "max_rel_error": self.differential.max_rel_error,
                "note": self.differential.note,
            },
        }


def report_json(reports: list[LiftReport]) -> str:
    doc = {
        "kernels": [r.to_dict() for r in reports],
        "summary": summarize(reports),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def summarize(reports: list[LiftReport]) -> dict:
    return {
        "total": len(reports),
        "synthesized": sum(1 for r in reports if r.synthesis.ok),
        "verified": sum(1 for r in reports if r.verification.verdict == "verified"),
        "differential_passed": sum(1 for r in reports if r.differential.passed),
    }


_COLUMNS = ["kernel", "S", "V", "time_s", "programs", "formula"]


def report_rows(reports: list[LiftReport]) -> list[list[str]]:
    rows = []
    for r in reports:
        mark = {"verified": "ok", "refuted": "REFUTED", "unknown": "?", "skipped": "-"}
        formula = r.simplified or r.synthesis.formula or (r.parse_error or r.synthesis.error or "")
        rows.append([
            r.kernel,
            "ok" if r.synthesis.ok else "FAIL",
            mark.get(r.verification.verdict, "?"),
            f"{r.synthesis.time_s + r.verification.time_s:.2f}",
            str(r.synthesis.programs_enumerated),
            formula,
        ])
    return rows


def render_table(reports: list[LiftReport]) -> str:
    rows = [_COLUMNS] + report_rows(reports)
    widths = [max(len(row[i]) for row in rows) for i in range(len(_COLUMNS))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    s = summarize(reports)
    lines.append("")
    lines.append(
        f"synthesized {s['synthesized']}/{s['total']}, verified {s['verified']}, "
        f"differential passed {s['differential_passed']}"
    )
    return "\n".join(lines)


def report_csv(reports: list[LiftReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(_COLUMNS)
    writer.writerows(report_rows(reports))
    return buf.getvalue()


def render_figure(reports: list[LiftReport], path: str) -> None:
    """Outcome/time overview figure rendered alongside the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [r.kernel for r in reports]
    synth_times = [max(r.synthesis.time_s, 1e-3) for r in reports]
    verify_times = [max(r.verification.time_s, 1e-3) for r in reports]
    synth_color = ["#2a9d8f" if r.synthesis.ok else "#e76f51" for r in reports]
    verify_color = [
        {"verified": "#2a9d8f", "refuted": "#e76f51", "unknown": "#e9c46a"}.get(
            r.verification.verdict, "#bdbdbd"
        )
        for r in reports
    ]
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(max(7.0, 0.42 * len(names)), 6.4), sharex=True
    )
    x = range(len(names))
    ax1.bar(x, synth_times, color=synth_color)
    ax1.set_yscale("log")
    ax1.set_ylabel("synthesis time [s]")
    ax1.set_title("corpus lifting results (green ok, yellow unknown, red fail)")
    ax2.bar(x, verify_times, color=verify_color)
    ax2.set_yscale("log")
    ax2.set_ylabel("verification time [s]")
    ax2.set_xticks(list(x))
    ax2.set_xticklabels(names, rotation=60, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
