"""Group-knapsack solver against exhaustive enumeration."""

import itertools
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from penheal.knapsack import solve_group_knapsack


def brute_force(groups, budget):
    """Independent oracle: enumerate every choice vector (None = skip group)."""
    best_value = 0.0
    best_cost = 0.0
    choices = [[None] + list(range(len(g))) for g in groups]
    for combo in itertools.product(*choices):
        cost = sum(groups[g][i][0] for g, i in enumerate(combo) if i is not None)
        value = sum(groups[g][i][1] for g, i in enumerate(combo) if i is not None)
        if round(cost * 10) <= round(budget * 10) and (
            value > best_value or (value == best_value and cost < best_cost)
        ):
            best_value, best_cost = value, cost
    return best_value, best_cost


def random_instance(rng):
    groups = [
        [
            (rng.choice([2.0, 5.0, 10.0]), round(rng.uniform(0.0, 18.0), 1))
            for _ in range(rng.randint(1, 4))
        ]
        for _ in range(rng.randint(1, 4))
    ]
    budget = float(rng.randint(0, 40))
    return groups, budget


class TestSolver:
    def test_empty_groups(self):
        solution = solve_group_knapsack([], 10.0)
        assert solution.picks == () and solution.total_value == 0.0

    def test_zero_budget_picks_nothing_costly(self):
        solution = solve_group_knapsack([[(2.0, 9.0)]], 0.0)
        assert solution.picks == ()

    def test_single_group_single_item(self):
        solution = solve_group_knapsack([[(2.0, 9.0)]], 3.0)
        assert solution.picks == ((0, 0),)
        assert solution.total_value == 9.0
        assert solution.total_cost == 2.0

    def test_narrowing_scenario(self):
        # One vulnerability, four candidate fixes, budget 3: the two cheap
        # full fixes tie; candidate order adopts the first, the audit and
        # the shutdown lose.
        groups = [[(2.0, 9.0), (2.0, 3.0), (10.0, 9.0), (2.0, 9.0)]]
        solution = solve_group_knapsack(groups, 3.0)
        assert len(solution.picks) == 1
        assert solution.picks[0] in ((0, 0), (0, 3))
        assert solution.picks[0] == (0, 0)  # deterministic candidate-order tie-break
        assert solution.total_value == 9.0
        assert solution.total_cost == 2.0

    def test_nonpositive_values_excluded(self):
        groups = [[(0.0, 0.0), (0.0, -5.0), (1.0, 1.0)]]
        solution = solve_group_knapsack(groups, 10.0)
        assert solution.picks == ((0, 2),)

    def test_one_pick_per_group(self):
        groups = [[(1.0, 5.0), (1.0, 6.0)], [(1.0, 7.0), (1.0, 1.0)]]
        solution = solve_group_knapsack(groups, 10.0)
        assert sorted(g for g, _ in solution.picks) == [0, 1]
        assert solution.total_value == 13.0

    def test_fractional_costs_survive_scaling(self):
        groups = [[(0.1, 1.0)], [(0.2, 2.0)]]
        solution = solve_group_knapsack(groups, 0.3)
        assert solution.total_cost == 0.3
        assert solution.total_value == 3.0

    def test_matches_brute_force_on_random_instances(self):
        rng = random.Random(42)
        for _ in range(120):
            groups, budget = random_instance(rng)
            solution = solve_group_knapsack(groups, budget)
            expect_value, _ = brute_force(groups, budget)
            assert solution.total_value == expect_value
            assert round(solution.total_cost * 10) <= round(budget * 10)
            picked_groups = [g for g, _ in solution.picks]
            assert len(picked_groups) == len(set(picked_groups))

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_property_matches_brute_force(self, data):
        groups = data.draw(
            st.lists(
                st.lists(
                    st.tuples(
                        st.sampled_from([2.0, 5.0, 10.0]),
                        st.floats(min_value=0.0, max_value=18.0).map(
                            lambda x: round(x, 1)
                        ),
                    ),
                    min_size=1,
                    max_size=4,
                ),
                min_size=0,
                max_size=4,
            )
        )
        budget = float(data.draw(st.integers(min_value=0, max_value=40)))
        solution = solve_group_knapsack(groups, budget)
        expect_value, _ = brute_force(groups, budget)
        assert solution.total_value == expect_value

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_budget_monotonicity(self, data):
        groups = data.draw(
            st.lists(
                st.lists(
                    st.tuples(
                        st.sampled_from([2.0, 5.0, 10.0]),
                        st.floats(min_value=0.0, max_value=18.0).map(
                            lambda x: round(x, 1)
                        ),
                    ),
                    min_size=1,
                    max_size=3,
                ),
                min_size=1,
                max_size=3,
            )
        )
        low = float(data.draw(st.integers(min_value=0, max_value=20)))
        high = low + float(data.draw(st.integers(min_value=0, max_value=20)))
        assert (
            solve_group_knapsack(groups, high).total_value
            >= solve_group_knapsack(groups, low).total_value
        )
