"""Fleet scenarios end to end.

Runs the bundled desk-scale worlds and prints the headline trend tables:
trading beats the no-trade baseline, query traffic under
ALL grows with team size while a bandit stays flat, and wider shopping
lists localise better. Takes around a minute.
"""

import statistics

from expmarket import bundled_scenario, failure_distribution, parse_scenario_config
from expmarket.sim import run_trial

TRIALS = 3
SEED = 2018


def pooled_dropouts(doc, trials=TRIALS, seed=SEED):
    cfg = parse_scenario_config(doc)
    return [d for t in range(trials)
            for d in run_trial(cfg, seed=seed, trial=t).dropout_values()]


print("== robustness: every strategy against the no-trade baseline ==")
doc = bundled_scenario("robustness")
results = {}
for strategy in ("NONE", "ALL", "BANDIT_EXPLORE", "BANDIT_EXPLOIT", "CENTRAL"):
    doc["strategies"]["trading"] = strategy
    values = pooled_dropouts(doc)
    results[strategy] = values
    print(f"  {strategy:16s} total blind travel {sum(values):7.0f} m  "
          f"events {len(values):3d}  max {max(values):5.0f} m")
print("  tail of the baseline CCDF:")
for x, p in failure_distribution(results["NONE"])[-3:]:
    print(f"    P(X >= {x:5.1f} m) = {p:.3f}")

print("\n== scaling: per-robot market query bytes as the team grows ==")
doc = bundled_scenario("scaling")
for strategy in ("ALL", "BANDIT_EXPLORE"):
    row = []
    for robots in (2, 3, 4, 5):
        doc["team"]["robots"] = robots
        doc["strategies"]["trading"] = strategy
        cfg = parse_scenario_config(doc)
        per_robot = statistics.mean(
            run_trial(cfg, seed=SEED, trial=t).bytes_sent(kinds=("query",)) / robots
            for t in range(TRIALS))
        row.append(f"R={robots}: {per_robot:8.0f}")
    print(f"  {strategy:16s} " + "  ".join(row))

print("\n== shopping lists: CURRENT vs WINDOW vs RECOMMEND ==")
doc = bundled_scenario("shopping")
for shopping in ("CURRENT", "WINDOW", "RECOMMEND"):
    doc["strategies"]["shopping"] = shopping
    values = pooled_dropouts(doc)
    print(f"  {shopping:10s} mean dropout {statistics.mean(values):6.1f} m  "
          f"max {max(values):5.0f} m")
