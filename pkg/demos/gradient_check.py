"""
Checking backprop with finite differences
=========================================

The network engine is plain numpy.  Its gradients are compared against
central differences on every parameter.
"""

import numpy as np

from stalesgd import NetworkSpec, finite_diff_check, gen_synthetic, init_params
from stalesgd.nn import Layer

data = gen_synthetic(256, classes=4, dim=20, seed=0)
X, y = data.columns(np.arange(8))

# the default desk-scale network, tanh hidden layers and a softmax head
spec = NetworkSpec.mlp([20, 16, 8, 4], activation="tanh")
print("parameters:", spec.n_params)
for seed in range(3):
    err = finite_diff_check(spec, init_params(spec, seed), X, y)
    print(f"seed {seed}: max relative error {err:.2e}")

# a linear layer with squared error is quadratic, so differences are exact up to rounding
lin = NetworkSpec((Layer(20, 4, "identity"),), "half-squared-error")
targets = np.random.default_rng(1).standard_normal((4, 8))
print(f"linear: {finite_diff_check(lin, init_params(lin, 0), X, targets):.2e}")
