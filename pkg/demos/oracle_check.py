"""Checking the lattice pricer against brute-force Monte Carlo.

Run with ``python demos/oracle_check.py``; about twenty seconds.
"""

# %%
# A two-withdrawal contract under the minimal market model.  The lattice
# value is compared with plain simulation for the fixed schedule and with a
# nested simulation that searches 1,001 withdrawal amounts at the first date.
from gmwb.dp_pricer import DYNAMIC, GridSpec, price, static_uniform
from gmwb.validation import TOY_CORPUS, exhaustive_small_dp, mc_static_price

inst = next(t for t in TOY_CORPUS if t.name == "mmm-base")
grid = GridSpec.default(inst.model, inst.spec, inst.initial_risk, n_wealth=201, n_guarantee=201, n_risk=200,
                        risk_range=(0.05, 10.0))
static = static_uniform(inst.spec)
lattice_static = price(inst.model, inst.spec, grid, static, inst.initial_risk).value
lattice_dynamic = price(inst.model, inst.spec, grid, DYNAMIC, inst.initial_risk).value

# %%
mc = mc_static_price(inst.model, inst.spec, static.gammas, seed=inst.seed, initial_risk=inst.initial_risk)
ex = exhaustive_small_dp(inst.model, inst.spec, seed=inst.seed, initial_risk=inst.initial_risk)
for label, value, est in (("static", lattice_static, mc), ("dynamic", lattice_dynamic, ex)):
    verdict = "agree" if est.within(value) else "DISAGREE"
    print(f"{label:8s} lattice {value:.5f}   simulation {est.mean:.5f} +- {est.stderr:.5f}   {verdict}")
