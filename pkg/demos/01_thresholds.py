"""How strict can the jamming be before the primary user notices?

Builds the desk scenario, computes per-subcarrier jamming and interference
thresholds, and shows how both move with rho.
"""

import numpy as np

from rsmajam import channel_set_for
from rsmajam.harness import desk_scenario
from rsmajam.thresholds import assemble_thresholds, witness_precoders
from rsmajam.metrics import interference_matrix

cfg = desk_scenario(seed=0)
cs = channel_set_for(cfg)
print(f"SU CSIT error variance {cs.sigma_ie2:.4f}, PU CSIT error variance {cs.sigma_pe2:.4f}")

# pilots of the AU sit on subcarriers 1 and 5; only those carry a jamming target
th = assemble_thresholds(cfg, cs)
print("pilot mask       ", th.jam_mask[0].astype(int))
print("J_thr per n      ", np.round(th.J_thr[0], 3))
print("I_thr per n      ", np.round(th.I_thr[0], 3))
print("data subcarriers are capped at mu * L =", cfg.mu * cfg.L)

# the witness precoder meets every jamming target with equality
F = witness_precoders(cfg, cs, th)
for n in np.flatnonzero(th.jam_mask[0]):
    f = F[0, n]
    lam = np.real(f.conj() @ cs.R[0, n] @ f)
    Phi = interference_matrix(cs.M_hat[0][n], cs.sigma_pe2, cfg.Nr[0])
    psi = np.real(f.conj() @ Phi @ f)
    print(f"n={n + 1}: jamming {lam:.3f} (target {th.J_thr[0, n]:.3f}), "
          f"interference {psi:.3f} (cap {th.I_thr[0, n]:.3f})")

# stricter jamming pushes more power into the AU direction and raises the PU cap with it
for rho in (0.1, 0.45, 0.9):
    t = assemble_thresholds(cfg.replace(rho=rho), cs)
    print(f"rho={rho:.2f}: J_thr {t.J_thr[0, 0]:7.3f}   I_thr {t.I_thr[0, 0]:7.3f}")
