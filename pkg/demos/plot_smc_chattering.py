"""
Chattering of the sliding-mode baseline
=======================================

Both controllers track the same step. The sliding-mode law switches between
+K and -K once it reaches the surface, which shows up as a large total
variation of the input.
"""

from ehsstune import ControllerConfig, PlantParams, SimConfig, SmcConfig, objective, simulate
from ehsstune.sim import total_variation

plant = PlantParams()
sim = SimConfig(horizon=5.0)

runs = {
    "backstepping": simulate(plant, ControllerConfig(), sim, diagnostics=False),
    "sliding mode": simulate(plant, SmcConfig(), sim, diagnostics=False),
}

for name, log in runs.items():
    print(f"{name:13s} objective {objective(log):8.4f}   TV(u) {total_variation(log.u):8.4f}")

# the switching input: count sign changes over the last second
u = runs["sliding mode"].u[-100:]
print("sign changes in the last second:", int((u[1:] * u[:-1] < 0).sum()))
