"""Bound widths under Markov regressors shrink geometrically in T.

When neither regressor value is absorbing, the mass of histories missing one
of the two values decays like (1 - e)^T and the bound width follows, always
below the envelope 2 (B_u - B_l) (1 - e)^(T - order). When some units never
leave zero the width stalls at a positive level.
"""

import numpy as np

from panelbounds import MarkovDgp, MixingDistribution, markov_bound_decay, normal_threshold_mass

two_types = MixingDistribution(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))

mixing = MarkovDgp(two_types, stay_zero=[0.7, 0.6], stay_one=[0.6, 0.8])
absorbing = MarkovDgp(two_types, stay_zero=[1.0, 0.5], stay_one=[0.5, 0.5])

print(" T  width(mixing)  envelope   width(absorbing)")
for a, b in zip(markov_bound_decay(mixing, range(2, 11)), markov_bound_decay(absorbing, range(2, 11))):
    print(f"{a['T']:>2}  {a['width']:>13.5f}  {a['envelope']:>8.5f}   {b['width']:>16.5f}")

# With a normal threshold regressor the always-treated mass is 1/(T+1): it
# vanishes only at rate 1/T, so bounds can shrink slowly.
print("all-ones mass:", [round(normal_threshold_mass(T), 6) for T in (1, 2, 5, 10)])
