"""
Consensus error under stale gradients
=====================================

Four data-groups, two modules each, constant step 0.05.  Every step the
consensus error must contract by gamma up to a gradient term, and it stays
under the cumulative geometric bound.
"""

from stalesgd import run_training
from stalesgd.config import parse_config

cfg = parse_config(overrides={"run.s": "4", "run.k": "2", "run.iters": "2000", "run.schedule": "constant:0.05"})
res = run_training(cfg.train_config())
d = res.diagnostics

print(f"gamma={d['gamma']:.4f}  module layers {d['module_bounds']}")
print(" t     delta_norm   bound        delta_max")
for t in (0, 10, 100, 500, 1000, 2000):
    print(f"{t:<5} {res.delta_norm[t]:.3e}    {res.lemma2_bound[t]:.3e}    {res.delta_max[t]:.3e}")

print("contraction failures:", d["contraction_failures"])
print("bound violations:", d["bound_failures"])
print("limit gamma*eta/(1-gamma):", round(d["consensus_limit"], 5))
print(f"loss {d['initial_loss']:.4f} -> {d['final_loss']:.4f}")

# empirical smoothness and gradient-size estimates, then the fixed-step bound constants
for key in ("rho_hat", "sigma_hat", "M1", "M2"):
    print(f"{key:<10}{d[key]:.4g}")
