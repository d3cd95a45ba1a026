"""Independent capacities in the large-population limit.

With iid capacities a prosumer hopes rivals' surplus covers their own
shortfall.  As the population grows the pooled-to-individual shortfall
ratio concentrates on a constant, and the game collapses to a scalar
fixed point in that constant and the symmetric offer.
"""

import numpy as np

import deragg as dg

cap = dg.iid_uniform(mu=10.0, sigma=3.3)
sc = dg.GameScenario(8, cap.cbar + 1.0, cap, dg.linear_utility(2.5), 4.0, 4.0)

print("law-of-large-numbers diagnostic at x = mu (ratio -> 0):")
ns = [4, 16, 64, 256, 1024]
ratios = dg.shortfall_ratio_convergence(sc, 10.0, ns, draws=4000, seed=3)
for n, r in zip(ns, ratios):
    print(f"  N={n:5d}  ratio={r:.4f}")

print("\nmean-field fixed point across prices:")
for rho in (2.4, 2.5, 3.0, 4.0, 5.5):
    sol = dg.meanfield_solve(sc, rho)
    print(f"  rho={rho:3.1f}  beta={sol.beta:6.4f}  x*={sol.x_star:8.4f}")
print("at the indifference price the offer equals the mean capacity, and")
print("above it prosumers offer more than they expect to have.\n")

# At finite N the optimism shows up as a correction term inside the
# first-order condition; it vanishes under full dependence.
two = dg.GameScenario(2, cap.cbar + 1.0, cap, dg.linear_utility(2.5), 4.0, 4.0)
print("finite-N coverage correction (N=2):")
for x in (7.0, 9.0, 11.0):
    h = dg.partial_coverage_term(two, x, draws=100_000, seed=5)
    print(f"  x={x:4.1f}  h={h:.4f}")

eq, sol = dg.meanfield_stackelberg(sc)
print(f"\nmean-field pricing game: rho*={eq.rho_star:.4f}  x*={eq.x_star:.4f}"
      f"  beta={sol.beta:.4f}")
print("the leader settles at the indifference price and buys the mean capacity.")
