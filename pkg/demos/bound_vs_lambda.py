"""
Guaranteed error ball as a function of lam
==========================================

The ultimate bound d_max**2 / (2 (lam + lam**5) sigma_min) involves the
smallest eigenvalue of phi phi^T, which is tiny (about 1e-10 near the tuned
gain). It is computed from the inverse matrix to keep full precision.
"""

import numpy as np

from ehsstune import ControllerConfig, ultimate_bound
from ehsstune.sim import phi_matrix, sigma_min

for lam in np.linspace(9.0, 16.0, 8):
    bound, smin = ultimate_bound(ControllerConfig(lam=lam))
    alt = sigma_min(phi_matrix(lam, "phi2"))
    print(f"lam {lam:5.2f}  sigma_min {smin:.4e}  bound {bound:9.4f}  (phi2 form {alt:.4e})")

# a naive eigen solve of phi phi^T loses most digits of the small eigenvalue
phi = phi_matrix(13.5585)
print("eigvalsh:", np.linalg.eigvalsh(phi @ phi.T)[0], " inverse form:", sigma_min(phi))
