"""Pricing a 30-year GMWB rider under Black-Scholes.

Run with ``python demos/price_thirty_year_contract.py``.  Takes a few seconds.
"""

# %%
# The contract: one million invested, 30 annual withdrawals of 1/30 of the
# guarantee, a 10% penalty on anything withdrawn above that, no fees.
import numpy as np

from gmwb.contract import ContractSpec
from gmwb.dp_pricer import DYNAMIC, GridSpec, price, static_uniform
from gmwb.market_models import BsmParams

spec = ContractSpec.annual(30, initial_wealth=1e6, penalty=0.1)
model = BsmParams(sigma=0.1441)
grid = GridSpec.default(model, spec)
print(f"lattice: {grid.wealth_nodes.size} wealth x {grid.guarantee_nodes.size} guarantee nodes")

# %%
# A policyholder who sticks to the schedule versus one who withdraws
# whenever it maximizes the value of what they get.
static = price(model, spec, grid, static_uniform(spec), measure="risk-neutral")
dynamic = price(model, spec, grid, DYNAMIC, measure="risk-neutral")
print(f"static  V0 = {static.value:12,.0f}")
print(f"dynamic V0 = {dynamic.value:12,.0f}   (+{dynamic.value / static.value - 1:.1%})")

# %%
# What does the optimal policy look like one year in?  Each row is a wealth
# level, each column a remaining guarantee; entries are the withdrawal in
# multiples of the contractual amount.
pol = dynamic.pre[1].policy[0]
g = spec.contractual(1)
w_idx = [np.searchsorted(grid.wealth_nodes, w) for w in (2e5, 5e5, 1e6, 2e6)]
a_idx = [np.searchsorted(grid.guarantee_nodes, a) for a in (2.5e5, 5e5, 1e6)]
print("wealth \\ guarantee " + "".join(f"{grid.guarantee_nodes[j]:>10,.0f}" for j in a_idx))
for i in w_idx:
    print(f"{grid.wealth_nodes[i]:>18,.0f} " + "".join(f"{pol[i, j] / g:>10.2f}" for j in a_idx))

# %%
# Refining every axis by a factor of two moves the price by a fraction of a
# percent, which is the discretization error of the default lattice.
fine = price(model, spec, grid.refined(2), DYNAMIC, measure="risk-neutral")
print(f"refined dynamic V0 = {fine.value:12,.0f}   ({fine.value / dynamic.value - 1:+.2%})")
