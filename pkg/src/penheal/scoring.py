"""Benchmark scoring of a run against ground truth.

Detection coverage is 10x the fraction of ground-truth weaknesses matched;
remediation effectiveness and cost are the means over the adopted
recommendation set. The overall score combines them, either divided by
three (the default) or as a plain sum.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    CVE_NA,
    AggregationMode,
    Recommendation,
    ScoreReport,
    Vulnerability,
)


@dataclass(frozen=True)
class MatchReport:
    matched: tuple[tuple[Vulnerability, Vulnerability], ...]
    unmatched_found: tuple[Vulnerability, ...]
    unmatched_truth: tuple[Vulnerability, ...]

    @property
    def matched_count(self) -> int:
        return len(self.matched)

    @property
    def truth_count(self) -> int:
        return len(self.matched) + len(self.unmatched_truth)


def match_findings(found: list[Vulnerability], truth: list[Vulnerability]) -> MatchReport:
    """Greedy matching: exact CVE id first, then (service, port) for CVE-NA rows.

    Each truth entry is consumed at most once, so duplicate claims never
    inflate coverage.
    """
    remaining = list(truth)
    matched: list[tuple[Vulnerability, Vulnerability]] = []
    unmatched_found: list[Vulnerability] = []

    leftover: list[Vulnerability] = []
    for f in found:
        if f.id != CVE_NA:
            hit = next((t for t in remaining if t.id.upper() == f.id.upper()), None)
            if hit is not None:
                matched.append((f, hit))
                remaining.remove(hit)
                continue
        leftover.append(f)

    for f in leftover:
        hit = None
        if f.id == CVE_NA:
            hit = next(
                (
                    t
                    for t in remaining
                    if t.id == CVE_NA
                    and t.service.strip().lower() == f.service.strip().lower()
                    and t.port == f.port
                ),
                None,
            )
        if hit is not None:
            matched.append((f, hit))
            remaining.remove(hit)
        else:
            unmatched_found.append(f)

    return MatchReport(
        matched=tuple(matched),
        unmatched_found=tuple(unmatched_found),
        unmatched_truth=tuple(remaining),
    )


def detection_coverage(match: MatchReport) -> float:
    """10x the matched fraction of ground truth."""
    if match.truth_count < 1:
        raise ValueError("ground truth is empty; coverage undefined")
    return 10.0 * match.matched_count / match.truth_count


def remediation_effectiveness(selected: list[Recommendation]) -> float:
    """Mean value over the adopted set (0 when nothing was adopted)."""
    if not selected:
        return 0.0
    return sum(r.value for r in selected) / len(selected)


def remediation_cost(selected: list[Recommendation]) -> float:
    """Mean cost over the adopted set (0 when nothing was adopted)."""
    if not selected:
        return 0.0
    return sum(r.cost for r in selected) / len(selected)


def overall(
    s_d: float,
    s_r: float,
    c: float,
    mode: AggregationMode = AggregationMode.DIVIDED_BY_THREE,
) -> float:
    total = s_d + s_r - c
    if mode is AggregationMode.SUM:
        return total
    return total / 3.0


def score_run(
    found: list[Vulnerability],
    truth: list[Vulnerability],
    selected: list[Recommendation],
    mode: AggregationMode = AggregationMode.DIVIDED_BY_THREE,
    run_id: str = "",
) -> ScoreReport:
    """Compute the full score report for one run."""
    match = match_findings(found, truth)
    s_d = round(detection_coverage(match), 2)
    s_r = round(remediation_effectiveness(selected), 2)
    c = round(remediation_cost(selected), 2)
    notes: list[str] = []
    if not selected:
        notes.append("no recommendations were adopted; S_R and C default to 0")
    return ScoreReport(
        s_d=s_d,
        s_r=s_r,
        c=c,
        s_overall=overall(s_d, s_r, c, mode),
        found_count=len(found),
        truth_count=match.truth_count,
        run_id=run_id,
        notes=tuple(notes),
    )


def format_score_table(report: ScoreReport, mode: AggregationMode) -> str:
    mode_label = "(S_D + S_R - C) / 3" if mode is AggregationMode.DIVIDED_BY_THREE else "S_D + S_R - C"
    lines = [
        "score          value",
        "-------------  ------",
        f"detection      {report.s_d:6.2f}   ({report.found_count} found, {report.truth_count} ground truth)",
        f"effectiveness  {report.s_r:6.2f}",
        f"cost           {report.c:6.2f}",
        f"overall        {report.s_overall:6.4f}   [{mode_label}]",
    ]
    lines.extend(f"note: {n}" for n in report.notes)
    return "\n".join(lines)
