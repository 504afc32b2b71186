"""The integrity battery and the randomized convergence harness.

First the test battery: clean merges answer [1, 1] on every node, injected
faults produce the other vectors, and a corpus is sufficient once all 2^J
vectors have been seen. Then the Monte Carlo harness: a fleet trading
wholesale every foray never deviates from a single shared state, and the
map grows like k * sum(mu) with spread k * sum(sigma^2).
"""

import statistics

from expmarket import (
    Choice,
    ChoicePolicy,
    Commutation,
    CommutationPolicy,
    LocaliserConfig,
    generate_configurations,
    merge_coverage,
    monte_carlo_convergence,
    run_battery_trial,
)

policy = CommutationPolicy(Commutation.MATCH, ChoicePolicy(Choice.INLIERS),
                           LocaliserConfig(tau_m=0.1))

print("== battery coverage ==")
configs = generate_configurations(seed=99, count=60)
trials = [run_battery_trial(c, policy) for c in configs]
fault_modes = [frozenset({"no_reconnect"}), frozenset({"no_delete"}),
               frozenset({"no_reconnect", "no_delete"})]
for faults in fault_modes:
    trials += [run_battery_trial(c, policy, faults) for c in configs[:10]]
cov = merge_coverage(trials)
for vec in sorted(cov.multiset):
    print(f"  vector {list(vec)}: {cov.multiset[vec]:5d} nodes")
print(f"  distinct {cov.distinct} of 4 -> sufficient: {cov.sufficient}")

print("\n== Monte Carlo convergence (R=2, K=9, M=100) ==")
report = monte_carlo_convergence(R=2, K=9, M=100, mu=10, sigma=2, seed=3)
print(f"  divergence events: {report.divergence_events}")
print(f"  mutual history (agreed convergence points per pair): "
      f"{report.mutual_history}")
print("  k   mean nodes   expected 20k   sample var   expected 8k")
for k in (1, 3, 5, 7, 9):
    counts = report.counts_per_trial(k, robot=0)
    print(f"  {k}   {statistics.mean(counts):10.1f}  {20 * k:12d}  "
          f"{statistics.variance(counts):11.1f}  {8 * k:11d}")

print("\n== the same harness exposes a broken policy ==")
lhs = CommutationPolicy(Commutation.MATCH, ChoicePolicy(Choice.LHS),
                        LocaliserConfig(tau_m=0.1), allow_asymmetric=True)
bad = monte_carlo_convergence(R=2, K=5, M=20, mu=8, sigma=1, policy=lhs,
                              seed=3, overlap=0.5)
print(f"  LHS divergence events: {bad.divergence_events} of {20 * 5} points")
