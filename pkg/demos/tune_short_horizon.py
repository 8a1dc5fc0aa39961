"""
Tuning lam and gamma1 on a short horizon
========================================

A reduced campaign (small colony, 2 s horizon) shows the tuning loop end to
end. The objective falls with lam across the search box, so the colony
settles at the upper lam bound.
"""

from ehsstune import SimConfig, TuningObjective
from ehsstune.abc import AbcConfig, campaign_spread, run_campaign

obj = TuningObjective(sim=SimConfig(horizon=2.0))
cfg = AbcConfig(bounds=((9.0, 16.0), (-10.0, -7.0)), colony_size=10, generations=10)
histories = run_campaign(obj, cfg, seeds=[0, 1, 2])

for h in histories:
    lam, log_gamma = h.best_x
    print(f"seed {h.seed}: objective {h.best:.6f}  lam {lam:.4f}  gamma1 {10**log_gamma:.3g}  "
          f"({h.unique_evaluations} simulations)")
print(f"relative spread {campaign_spread(histories):.2e}")

# objective along lam at fixed gamma1
for lam in (9.0, 11.0, 13.5585, 16.0):
    print(f"lam {lam:7.4f}: {obj((lam, -10.0)):.6f}")
