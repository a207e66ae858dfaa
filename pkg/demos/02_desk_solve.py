"""One desk-scale channel realization solved with SDMA, NOMA and RSMA.

RSMA is seeded with the two baseline solutions, so the printout should show it
on top.  Takes around half a minute on one core.
"""

import logging

import numpy as np

from rsmajam import assemble_thresholds, channel_set_for
from rsmajam.harness import desk_scenario, solve_schemes
from rsmajam.metrics import jamming_power

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = desk_scenario(seed=0)
cs = channel_set_for(cfg)
th = assemble_thresholds(cfg, cs)

res = solve_schemes(cfg, cs, th)
for scheme, item in res.items():
    rep, audit, trace = item["rep"], item["audit"], item["trace"]
    print(f"{scheme:5s} sum-rate {rep.R_sum:6.3f}  common {rep.R_common:5.3f}  "
          f"users {np.round(rep.R_user, 3)}  power {audit['power']:6.2f}/{cfg.Pt_bar:.0f}  "
          f"audit {'ok' if audit['ok'] else 'FAILED'}  outer iters {len(trace.rows) - 1}")

# where does RSMA put its power?
pre = res["RSMA"]["pre"]
Q = pre.stacked()
per_stream = np.sum(np.abs(Q) ** 2, axis=(0, 2))
print("RSMA power split (common, private 1, private 2, jamming):", np.round(per_stream, 2))

# the AU sees the whole transmit signal, so the data streams can meet the jamming
# targets on their own and the dedicated jamming precoder may stay silent
lam = [jamming_power(cs.R[0, n], pre.at(n)) for n in range(cfg.N)]
print("power at the AU by subcarrier:", np.round(lam, 2))
print("jamming targets              :", np.round(th.J_thr[0], 2))
