"""
Centralized, decoupled, data-parallel and distributed
=====================================================

The same network, data, seed and per-group batch size trained four ways,
with a step size that drops at iterations 1500, 3000 and 4000.
"""

import sys
from pathlib import Path

from stalesgd.config import parse_config
from stalesgd.trainer import run_comparison

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out_compare")
cfg = parse_config(overrides={"run.iters": "5000", "run.schedule": "strategy2:1500,3000,4000"})
results = run_comparison(cfg.train_config(), out)

for label, res in results.items():
    d = res.diagnostics
    curve = " ".join(f"{r.loss:.3f}" for r in res.records[:: len(res.records) // 5])
    print(f"{label:<14} S={d['S']} K={d['K']}  {curve}  final {d['final_loss']:.4f}")

print("merged curves in", out / "merged.csv")
