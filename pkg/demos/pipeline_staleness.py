"""
Who computes what: the staleness schedule
=========================================

With K modules per data-group, agent k forwards mini-batch t-k+1 and
backwards mini-batch t-2K+k+1 at iteration t.  Dashes are warm-up slots.
"""

from stalesgd import staleness_indices
from stalesgd.datasets import gen_synthetic
from stalesgd.nn import NetworkSpec
from stalesgd.pipeline import history_oracle
from stalesgd.trainer import Simulation, StepSchedule, TrainConfig, run_training

K = 3


def show(i):
    return "-" if i is None else str(i)


print("t  " + "  ".join(f"k={k} fwd/bwd" for k in range(1, K + 1)))
for t in range(8):
    cells = []
    for k in range(1, K + 1):
        fwd, bwd = staleness_indices(t, k, K)
        cells.append(f"{show(fwd):>7}/{show(bwd):<4}")
    print(f"{t:<2} " + "  ".join(cells))

# replay a short run and compare every stale gradient with a monolithic backprop
# on the mixed-age weights the pipeline actually used
cfg = TrainConfig(
    NetworkSpec.mlp([5, 6, 5, 3]), gen_synthetic(96, 3, 5, seed=7), S=2, K=K, B=4, T=12,
    edges=[(1, 2)], schedule=StepSchedule.strategy_one(0.1), init_noise=0.1, record_history=True,
    eval_interval=4, eval_size=32, lipschitz_probes=0,
)
res = run_training(cfg)
sim = Simulation(cfg)
worst = 0.0
for (s, k, t), g in res.stale_grads.items():
    ref = history_oracle(res.history, cfg.spec, sim.grouping, s, k, t, sim.partition.weight(s))
    worst = max(worst, abs(g - ref).max())
sim.close()
print("largest difference from the replayed gradient:", worst)
print("traces held per module:", res.diagnostics["max_traces"])
