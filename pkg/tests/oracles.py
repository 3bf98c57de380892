"""Independent reference implementations used as test oracles.

Plain Python loops over lists; no numpy and nothing imported from the
package under test, so an agreement check is a genuine second route.
"""

from __future__ import annotations

import itertools


def node_mean_table(utilization, assignment, node_ids):
    """{node: [mean per resource]} with 0 for empty nodes."""
    n_res = len(utilization[0]) if utilization else 5
    table = {}
    for node in node_ids:
        rows = [u for u, a in zip(utilization, assignment) if a == node]
        if rows:
            table[node] = [sum(r[j] for r in rows) / len(rows) for j in range(n_res)]
        else:
            table[node] = [0.0] * n_res
    return table


def stability(utilization, assignment, node_ids):
    table = node_mean_table(utilization, assignment, node_ids)
    n_res = len(next(iter(table.values())))
    total = 0.0
    for j in range(n_res):
        column = [table[n][j] for n in node_ids]
        centre = sum(column) / len(column)
        total += sum((v - centre) ** 2 for v in column)
    return total


def hamming(x, y):
    count = 0
    for i in range(len(x)):
        if x[i] != y[i]:
            count += 1
    return count


def brute_force_minimum(utilization, incumbent, node_ids, stability_weight, s_max, d_max):
    """Lowest fitness over every placement, under a fixed normalization."""
    best = None
    for candidate in itertools.product(node_ids, repeat=len(incumbent)):
        s = stability(utilization, candidate, node_ids)
        s_n = min(s / s_max, 1.0) if s_max > 0 else 0.0
        d_n = hamming(candidate, incumbent) / d_max if d_max > 0 else 0.0
        f = stability_weight * s_n + (1.0 - stability_weight) * d_n
        if best is None or f < best:
            best = f
    return best
