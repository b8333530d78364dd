"""Independent reference implementations that pin expected test values.

Every quantity checked against the package is re-derived here by the most
direct route available: exact rational arithmetic, exhaustive enumeration,
or a textbook algorithm (networkx for graph questions). Nothing here
imports from evoloop, so a defect in the package cannot leak into the
values the tests compare against.
"""

from __future__ import annotations

import math
from fractions import Fraction

import networkx as nx
import numpy as np

# ----------------------------------------------------------------------
# curriculum selector


def score_exact(n_fail: int, k: int, k_last: int, weight: str) -> Fraction:
    return Fraction(n_fail) + Fraction(weight) * (k - k_last)


def select_reference(stats, k: int, weight: str, max_targets: int) -> list:
    """stats: iterable of (task_type_id, n_fail, k_last)."""
    def key(row):
        tid, n_fail, k_last = row
        return (-score_exact(n_fail, k, k_last, weight), -(k - k_last), tid)

    ranked = sorted(stats, key=key)
    return [tid for tid, _, _ in ranked[:max_targets]]


def gap_bound_reference(n_types: int, n_max: int, weight: str, max_targets: int) -> int:
    return math.ceil(Fraction(n_max) / Fraction(weight) + Fraction(n_types, max_targets))


# ----------------------------------------------------------------------
# mastery ratchet


def mastery_reference(mastery, evidence, rise: str, decay: str) -> Fraction:
    m, e = Fraction(str(mastery)), Fraction(str(evidence))
    if e >= m:
        return Fraction(rise) * e + (1 - Fraction(rise)) * m
    return m - Fraction(decay) * (m - e)


def ratchet_violations_bruteforce(trace, rise: float, decay: float, tol: float) -> list:
    """All-pairs window bound plus both per-step bounds, O(len^2)."""
    keep = 1.0 - decay
    out = []
    for i in range(1, len(trace)):
        prev, cur = trace[i - 1], trace[i]
        if cur < keep * prev - tol:
            out.append((i, "step-lower"))
        if cur > prev + rise * (1.0 - prev) + tol:
            out.append((i, "step-upper"))
        for j in range(i):
            if cur < keep ** (i - j) * trace[j] - tol:
                out.append((i, f"window-from-{j}"))
                break
    return out


def ratchet_ok_fast(trace, rise: float, decay: float, tol: float) -> bool:
    """O(len) form of the same three bounds, via the decayed running peak."""
    if len(trace) < 2:
        return True
    keep = 1.0 - decay
    peak = trace[0]
    for i in range(1, len(trace)):
        prev, cur = trace[i - 1], trace[i]
        if cur < keep * prev - tol:
            return False
        if cur > prev + rise * (1.0 - prev) + tol:
            return False
        if cur < keep * peak - tol:
            return False
        peak = max(cur, keep * peak)
    return True


# ----------------------------------------------------------------------
# prerequisite DAG


def frontier_reference(masteries: dict, prereqs: dict, threshold: float) -> set:
    g = nx.DiGraph()
    g.add_nodes_from(masteries)
    for sid, deps in prereqs.items():
        for dep in deps:
            g.add_edge(dep, sid)
    if not nx.is_directed_acyclic_graph(g):
        raise ValueError("cyclic")
    return {
        sid
        for sid, m in masteries.items()
        if m < threshold
        and all(masteries[p] >= threshold for p in prereqs.get(sid, ()))
    }


def ancestors_reference(edges, target) -> set:
    """edges: iterable of (prereq, dependent)."""
    g = nx.DiGraph()
    g.add_node(target)
    g.add_edges_from(edges)
    return set(nx.ancestors(g, target))


def respects_prereq_order(ordered_ids, edges) -> bool:
    """True when every (prereq, dependent) pair present appears prereq-first."""
    position = {nid: i for i, nid in enumerate(ordered_ids)}
    return all(
        position[a] < position[b]
        for a, b in edges
        if a in position and b in position
    )


# ----------------------------------------------------------------------
# retrieval


def tv_reference(ids_a, ids_b) -> float:
    """Total variation between uniform distributions over two id sets."""
    a, b = set(ids_a), set(ids_b)
    if not a and not b:
        return 0.0
    support = a | b
    pa = {x: (1.0 / len(a) if x in a else 0.0) for x in support}
    pb = {x: (1.0 / len(b) if x in b else 0.0) for x in support}
    return 0.5 * sum(abs(pa[x] - pb[x]) for x in support)


def allocation_reference(context_length: int, k: int, threshold: int) -> tuple:
    heavy = math.ceil(Fraction(2 * k, 3))
    if context_length < threshold:
        return (heavy, k - heavy)
    return (k - heavy, heavy)


def cosine_reference(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def topk_reference(scored_ids, k: int) -> list:
    """scored_ids: iterable of (id, score); descending score, id tiebreak."""
    ranked = sorted(scored_ids, key=lambda p: (-p[1], p[0]))
    return [nid for nid, _ in ranked[:k]]


# ----------------------------------------------------------------------
# bandits


def beta_best_share(successes, failures, n_draws: int, seed: int) -> float:
    """Monte-Carlo share of draws won by arm 0 under Beta posteriors."""
    rng = np.random.default_rng(seed)
    samples = np.column_stack(
        [rng.beta(s + 1, f + 1, size=n_draws) for s, f in zip(successes, failures)]
    )
    return float(np.mean(np.argmax(samples, axis=1) == 0))
