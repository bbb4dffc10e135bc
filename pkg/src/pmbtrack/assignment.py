"""Optimal 2-D assignment and Murty's ranked k-best assignment enumeration.

Cost matrices are real with +inf marking forbidden pairings. Every row must
receive a column; columns may remain free (rectangular problems therefore
need n_rows <= n_cols). Assignments containing a forbidden pairing are never
returned; a problem with no finite completion raises
:class:`InfeasibleAssignmentError`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractViolationError, InfeasibleAssignmentError

__all__ = ["Assignment", "solve_assignment", "murty_kbest"]


@dataclass(frozen=True)
class Assignment:
    """Row-to-column mapping: mapping[i] is the column assigned to row i."""

    mapping: tuple[int, ...]
    cost: float


def _validate(cost: np.ndarray) -> np.ndarray:
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    if cost.ndim != 2:
        raise ContractViolationError("cost matrix must be two-dimensional")
    if np.isnan(cost).any():
        raise ContractViolationError("cost matrix contains NaN entries")
    if cost.shape[0] > cost.shape[1]:
        raise ContractViolationError(
            f"cost matrix has more rows than columns ({cost.shape}); every row must be assignable"
        )
    return cost


def _solve(cost: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Minimum-cost row->column mapping, or None if infeasible."""
    if cost.shape[0] == 0:
        return np.empty(0, dtype=int), 0.0
    try:
        rows, cols = linear_sum_assignment(cost)
    except ValueError:
        return None
    selected = cost[rows, cols]
    if np.isinf(selected).any():
        return None
    mapping = np.empty(cost.shape[0], dtype=int)
    mapping[rows] = cols
    return mapping, float(selected.sum())


def solve_assignment(cost) -> Assignment:
    """Globally optimal minimum-cost assignment of rows to columns."""
    cost = _validate(cost)
    solved = _solve(cost)
    if solved is None:
        raise InfeasibleAssignmentError("no feasible assignment: every completion is forbidden")
    mapping, total = solved
    return Assignment(tuple(int(c) for c in mapping), total)


def murty_kbest(cost, k: int) -> list[Assignment]:
    """The min(k, #feasible) lowest-cost assignments in non-decreasing cost order.

    Implements Murty's partitioning of the solution space: each extracted
    solution spawns subproblems that lock a growing prefix of its pairings
    and forbid the next one. Subproblems are kept as reduced matrices so the
    solves shrink as pairings get locked. Results are duplicate-free by
    construction and the first entry equals ``solve_assignment(cost)``.
    """
    if k < 1:
        raise ContractViolationError(f"k must be at least 1, got {k}")
    cost = _validate(cost)
    root = _solve(cost)
    if root is None:
        raise InfeasibleAssignmentError("no feasible assignment: every completion is forbidden")
    n_rows = cost.shape[0]

    # Heap entries: (total cost, insertion counter, locked pairs, reduced
    # matrix, original row/col ids of the reduced matrix, its solution).
    mapping, total = root
    heap = [(total, 0, (), cost, np.arange(n_rows), np.arange(cost.shape[1]), mapping)]
    counter = 0
    results: list[Assignment] = []

    while heap and len(results) < k:
        total, _, locked, sub, sub_rows, sub_cols, sub_map = heapq.heappop(heap)
        full = np.empty(n_rows, dtype=int)
        for r, c in locked:
            full[r] = c
        full[sub_rows] = sub_cols[sub_map]
        results.append(Assignment(tuple(int(c) for c in full), total))
        if len(results) == k:
            break

        locked_list = list(locked)
        locked_cost = total
        if sub.shape[0]:
            locked_cost -= float(sub[np.arange(sub.shape[0]), sub_map].sum())
        cur, cur_rows, cur_cols, cur_map = sub, sub_rows, sub_cols, sub_map
        while cur.shape[0] > 0:
            child = cur.copy()
            child[0, cur_map[0]] = np.inf
            solved = _solve(child)
            if solved is not None:
                child_map, child_cost = solved
                counter += 1
                heapq.heappush(
                    heap,
                    (
                        locked_cost + child_cost,
                        counter,
                        tuple(locked_list),
                        child,
                        cur_rows,
                        cur_cols,
                        child_map,
                    ),
                )
            # Lock the solution's pairing for this row, then shrink.
            drop = int(cur_map[0])
            locked_list.append((int(cur_rows[0]), int(cur_cols[drop])))
            locked_cost += float(cur[0, drop])
            cur = np.delete(cur[1:], drop, axis=1)
            cur_rows = cur_rows[1:]
            cur_cols = np.delete(cur_cols, drop)
            cur_map = np.where(cur_map[1:] > drop, cur_map[1:] - 1, cur_map[1:])
    return results
