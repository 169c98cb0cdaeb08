"""Exact group-knapsack selection over scored remediation candidates.

Items are partitioned into groups (one group per vulnerability) and at most
one item per group may be chosen. Costs are scaled by 10 into integer
capacity units so the standard tier costs (2/5/10) and 0.1 budget
granularity survive exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

COST_SCALE = 10


@dataclass(frozen=True)
class KnapsackSolution:
    """Chosen (group, candidate) index pairs plus the achieved totals."""

    picks: tuple[tuple[int, int], ...]
    total_value: float
    total_cost: float


def _better(a: tuple, b: tuple) -> bool:
    """State ordering: value desc, scaled cost asc, pick vector asc."""
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] < b[1]
    return a[2] < b[2]


def solve_group_knapsack(
    groups: list[list[tuple[float, float]]],
    budget: float,
) -> KnapsackSolution:
    """Maximize total value subject to total cost <= budget, one pick per group.

    ``groups`` holds (cost, value) pairs. Candidates with value <= 0 are
    never beneficial and are skipped before the DP. Ties on value are broken
    toward lower total cost, then toward earlier groups and earlier
    candidates within a group, so the result is fully deterministic.
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    capacity = int(round(budget * COST_SCALE))

    # dp[w] = best (value, weight, picks) reachable with total weight <= w.
    dp: list[tuple] = [(0.0, 0, ())] * (capacity + 1)

    for g, candidates in enumerate(groups):
        items = [
            (int(round(cost * COST_SCALE)), value, (g, i))
            for i, (cost, value) in enumerate(candidates)
            if value > 0
        ]
        if not items:
            continue
        new_dp = list(dp)
        for w in range(capacity + 1):
            best = dp[w]
            for weight, value, pick in items:
                if weight <= w:
                    prev = dp[w - weight]
                    cand = (prev[0] + value, prev[1] + weight, prev[2] + (pick,))
                    if _better(cand, best):
                        best = cand
            new_dp[w] = best
        dp = new_dp

    value, weight, picks = dp[capacity]
    return KnapsackSolution(
        picks=picks,
        total_value=value,
        total_cost=weight / COST_SCALE,
    )
