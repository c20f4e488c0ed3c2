"""
Scoring sellers from ratings and burned tokens
==============================================
"""

import numpy as np

from trident.trust import Evidence, TrustConfig, certainty, evidence_threshold, pob_prior, pob_prior_alt, score

# How many ratings make the estimate trustworthy?  The answer depends on how
# split the ratings are: unanimous evidence settles quickly.
for t in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(f"t={t:<5} N={evidence_threshold(z=0.2, c=0.8, t=t)}")

# Certainty grows with each rating and reaches 1 at N.
cfg = TrustConfig(N=40)
print([round(certainty(n, cfg), 3) for n in (0, 1, 5, 14, 39, 40)])

# %%
# A newcomer has no ratings, so its score is the prior bought by burning
# tokens at registration.  Burning the baseline amount gives one half.
r = np.array([0, 0.5, 1, 2, 5, 20])
print("log prior   ", np.round([pob_prior(x, 1) for x in r], 3))
print("linear prior", np.round([pob_prior_alt(x, 1) for x in r], 3))

# %%
# Evidence then takes over as certainty rises.
for ev in (Evidence(0, 0), Evidence(3, 0), Evidence(12, 2), Evidence(30, 10)):
    s = score(ev, burned=5.0, cfg=TrustConfig())
    print(f"{ev.positive:>2}+ {ev.negative:>2}-  t={s.t:.3f} c_e={s.c_e:.3f} f={s.f:.3f} E={s.E:.3f}")
