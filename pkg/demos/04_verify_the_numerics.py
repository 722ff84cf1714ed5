#!/usr/bin/env python3
"""The numeric core is hand-written; this demo re-runs its verification
machinery interactively: the propagation gradient check against central
finite differences and the optimizer against its scalar recurrence.
"""

import numpy as np

from beliefcast import HgtConfig, check_gradients
from beliefcast.graph import HeteroGraph
from beliefcast.hgt import compile_graph, init_params
from beliefcast.train import OptimizerState, TrainConfig, lr_schedule, radam_step

# A toy heterogeneous graph: 4 users, 2 media, 2 belief nodes, all relations.
graph = HeteroGraph(
    users=("u0", "u1", "u2", "u3"),
    media=("m0", "m1"),
    beliefs=("care", "power"),
    follow=(("u0", "u1"), ("u2", "u1"), ("u3", "u0")),
    interact=(("u0", "m0"), ("u1", "m1"), ("u2", "m0")),
    belief_edges=(("u0", "care"), ("u1", "power"), ("u2", "care")),
)
config = HgtConfig(layers=2, heads=2, dim=8, dropout=0.0)
cgraph = compile_graph(graph)
rng = np.random.default_rng(0)
H0 = {kind: rng.standard_normal((len(ids), 8)) for kind, ids in cgraph.nodes.items()}
params = init_params(config, cgraph.schema, seed=0)

print(f"checking {sum(p.size for p in params.values())} parameters "
      "against central finite differences (eps=1e-4)...")
err, worst = check_gradients(
    cgraph, H0, params, config, [("u0", "m0"), ("u2", "m1")], eps=1e-4
)
print(f"max relative error: {err:.2e}  (worst: {worst})")

# The optimizer's variance rectifier stays off while the second-moment
# estimate is short: for beta2 = 0.999, rho_t <= 4 through t = 3.
config_opt = TrainConfig(learning_rate=1e-2, weight_decay=0.0)
state = OptimizerState()
theta = {"w": np.array(1.0)}
print("\nfirst optimizer steps on gradient 1.0 (watch the warm start):")
for t in range(1, 6):
    theta = radam_step(state, theta, {"w": np.array(1.0)}, config_opt, lr_t=1e-2)
    print(f"  t={t}: theta = {float(theta['w']):.6f}")

print("\nlinear schedule with warmup over 100 steps:")
sched = TrainConfig(learning_rate=5e-4, warmup_ratio=0.06)
for step in (0, 3, 6, 50, 100):
    print(f"  step {step:3d}: lr = {lr_schedule(step, 100, sched):.2e}")
