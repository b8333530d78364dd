"""Show how the scheduler decides what to practice next.

Two pieces. The mastery ratchet: an asymmetric moving average that climbs
fast on wins and leaks slowly on losses, so one bad day cannot erase a
skill. The round-robin selector: failure counts plus a recency bonus,
which guarantees every task type gets picked within a computable number
of iterations no matter how lopsided the failures are.
"""

from evoloop import (
    RatchetParams,
    SelectorParams,
    coverage_gap_bound,
    learnable_frontier,
    mastery_update,
    round_robin_select,
)


def main():
    ratchet = RatchetParams(rise_rate=0.6, decay_rate=0.1)

    m = 0.0
    print("three wins then three losses:")
    for evidence in (1.0, 1.0, 1.0, 0.0, 0.0, 0.0):
        m = mastery_update(m, evidence, ratchet)
        print(f"  evidence {evidence:.0f} -> mastery {m:.4f}")
    # the climb is steep, the slide is shallow: that asymmetry is the point

    # frontier: skills still below threshold whose prerequisites are done
    masteries = {"count": 0.95, "add": 0.9, "multiply": 0.3, "factor": 0.1}
    prereqs = {"add": ["count"], "multiply": ["add"], "factor": ["multiply"]}
    frontier = learnable_frontier(masteries, prereqs, threshold=0.8)
    print("learnable frontier:", sorted(frontier))
    # factor is excluded: multiply is not mastered yet

    selector = SelectorParams(recency_weight=0.3, max_targets=1)
    bound = coverage_gap_bound(n_types=2, n_max=50, params=selector)

    # one type sits on a huge failure backlog; the starved one still gets
    # a turn, because the recency term grows while the backlog is capped
    n_fail = {"noisy": 50, "quiet": 0}
    k_last = {"noisy": 0, "quiet": 0}
    wait = None
    for k in range(1, bound + 2):
        stats = [(tt, n_fail[tt], k_last[tt]) for tt in sorted(n_fail)]
        chosen = round_robin_select(stats, k, selector)[0]
        k_last[chosen] = k
        if chosen == "quiet":
            wait = k
            break

    print(f"quiet type first selected at iteration {wait}, bound says {bound}")


if __name__ == "__main__":
    main()
