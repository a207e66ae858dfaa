"""Uncoded QPSK error rates at the adversarial and primary receivers.

The AU curve is worst under pilot jamming: corrupting the channel estimate
hurts every data subcarrier.  At the PU, precoders designed with interference
caps stay close to the interference-free curve.  Takes about a minute.
"""

import numpy as np

from rsmajam.harness import BerSpec, au_ber_experiment, desk_scenario, pu_ber_experiment

Es = np.logspace(1, 4, 7)
cfg = desk_scenario(seed=0, Pt_bar=10 ** 0.5, rho=0.9)
au, _ = au_ber_experiment(cfg, BerSpec(Es, 100_000, "AU"))
print("AU BER")
print("Es       " + " ".join(f"{e:9.1f}" for e in Es))
for mode, c in au.items():
    print(f"{mode:8s} " + " ".join(f"{b:9.2e}" for b in c.ber))

Es = np.logspace(0, 3, 7)
cfg = desk_scenario(seed=0, Pt_bar=10 ** 0.5, rho=0.45)
pu, _ = pu_ber_experiment(cfg, BerSpec(Es, 100_000, "PU"))
print("\nPU BER")
print("Es            " + " ".join(f"{e:9.1f}" for e in Es))
for label, c in pu.items():
    print(f"{label:13s} " + " ".join(f"{b:9.2e}" for b in c.ber))
