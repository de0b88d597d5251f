"""The ATE hard-instance family: indistinguishable yet separated.

Starting from an anchor with propensity m_hat and outcome regressions
g_hat, the construction moves the propensity by eps_m * Delta and co-moves
the outcome regressions so that three things hold simultaneously:

* the average of the 2^M alternatives is the anchor, atom for atom (no
  test can tell the mixture from the anchor at n = 1);
* every alternative's nuisances sit within (eps_m, eps_g) of the anchor's,
  with the propensity shift of *exactly* eps_m in L2;
* every alternative's ATE sits exactly 2 eps_m eps_g below the anchor's.

Estimation error of order eps_m * eps_g is therefore unavoidable for any
estimator that only knows the nuisances up to those tolerances.
"""

import numpy as np

from debias_lab import adversary as adv, estimands as est
from debias_lab.estimands import EstimandSpec
from debias_lab.partition import all_sign_vectors, iterated_partition
from debias_lab.presets import preset

eps_m, eps_g = 0.1, 0.2
space = est.make_space(est.ATE, x_cells=256)
m_hat = np.full(256, 0.5)
g_hat = np.full((256, 2), 0.5)
part = iterated_partition([np.ones(256), 2 * m_hat - 1.0], 4, space.axes[0])
family = adv.AteLocalFamily(space, m_hat, g_hat, eps_m, eps_g, part)
spec = EstimandSpec(est.ATE, overlap=0.25)

mix = adv.mixture_density(family)
print("max |mixture - anchor| over atoms:",
      np.max(np.abs(mix.values - family.anchor.values)))

chi0 = est.functional_value(family.anchor, spec)
gaps, mshifts = [], []
for lam in all_sign_vectors(4):
    member = family.member(lam)
    gaps.append(est.functional_value(member, spec) - chi0)
    mshifts.append(family.nuisance_shift_norms(lam)[0])
print("ATE gap across all 16 alternatives:",
      (min(gaps), max(gaps)), " target:", -2 * eps_m * eps_g)
print("propensity shift across alternatives:",
      (min(mshifts), max(mshifts)), " target:", eps_m)

member = family.member(all_sign_vectors(4)[6])
ok, dists = adv.uncertainty_membership(member, family.anchor, spec,
                                       eps_gamma=eps_g, eps_alpha=1.0)
print("uncertainty-set membership:", ok, " (gamma, alpha) distances:",
      tuple(round(d, 4) for d in dists))

# The same two-step trick works for every estimand with an invariant
# direction; here is the log-odds-difference version with its curvature.
pre = preset(est.LOD, x_cells=128)
pair = adv.direction_pair(pre.spec, pre.anchor, "alpha")
print("\nlod: alpha-invariance along H0:",
      adv.verify_invariance(pre.anchor, pair.first, pre.spec, "alpha"))
print("lod: chi''[H0,H0] (closed form):",
      adv.closed_form_chi2_H0(pre.anchor, pair.first, pre.spec))
