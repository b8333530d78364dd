"""Let a Thompson bandit find the best strategy arm.

Three arms with hidden success rates. The bandit owes every arm a fixed
number of warmup pulls before it starts sampling from the posterior, so
no arm can be written off on one unlucky draw. After warmup the picks
concentrate on the best arm while the others still get occasional
exploration. Same seed, same history, same decisions: the draws are
keyed on a counter, not on global random state.
"""

from collections import Counter

import numpy as np

from evoloop import ThompsonBandit, posterior_mean

TRUE_RATES = {"direct": 0.55, "decompose": 0.82, "verify_twice": 0.35}


def main():
    bandit = ThompsonBandit(sorted(TRUE_RATES), warmup_pulls=10, rng_seed=3)
    world = np.random.default_rng(3)

    picks = []
    for _ in range(1500):
        arm = bandit.select()
        reward = 1 if world.random() < TRUE_RATES[arm] else 0
        bandit.update(arm, reward)
        picks.append(arm)

    warmup = Counter(picks[:30])
    rest = Counter(picks[30:])
    print("warmup pulls per arm:", dict(sorted(warmup.items())))
    for arm in sorted(TRUE_RATES):
        share = rest[arm] / len(picks[30:])
        mean = posterior_mean(bandit.slot, arm)
        print(f"  {arm:13s} true {TRUE_RATES[arm]:.2f}  "
              f"posterior {mean:.3f}  picked {share:.1%} after warmup")

    # replaying the identical reward stream reproduces the identical picks
    twin = ThompsonBandit(sorted(TRUE_RATES), warmup_pulls=10, rng_seed=3)
    world = np.random.default_rng(3)
    replay = []
    for _ in range(1500):
        arm = twin.select()
        twin.update(arm, 1 if world.random() < TRUE_RATES[arm] else 0)
        replay.append(arm)
    print("decision sequence reproducible:", replay == picks)


if __name__ == "__main__":
    main()
