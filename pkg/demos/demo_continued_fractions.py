"""Continued fractions and the resonant-denominator search.

Walks through the arithmetic layer: expanding a frequency, checking the
best-approximation inequalities, verifying a Diophantine budget, and finding
the near-resonant multiples that seed the label set.
"""

from fractions import Fraction

from qpsl.diophantine import (
    cf_expand,
    dc_check,
    dist_to_integers,
    frequency_vector,
    golden_mean,
    resonant_denominator,
)

alpha_str = golden_mean(60)
print(f"alpha = {alpha_str[:40]}... (golden mean, 60 declared digits)\n")

cf = cf_expand(alpha_str, depth=12)
print("partial quotients:", cf.partial_quotients)
print("denominators     :", cf.q)
print()

print("two-sided approximation inequality 1/(q_k+q_{k+1}) < |q_k a - p_k| <= 1/q_{k+1}:")
for k in range(6):
    err = cf.approx_error(k)
    lo, hi = Fraction(1, cf.q[k] + cf.q[k + 1]), Fraction(1, cf.q[k + 1])
    print(f"  k={k}: {float(lo):.6f} < {float(err):.6f} <= {float(hi):.6f}")
print()

freq = frequency_vector(alpha_str, gamma=0.2, tau=2.0)
rep = dc_check(freq, max_norm=50)
print(f"Diophantine check gamma=0.2 tau=2 up to |n|=50: holds={rep.holds}, "
      f"tightest site n={rep.worst_n} with ||<n,a>|| = {rep.worst_value:.6f}\n")

for ell in (10, 100, 1000):
    res = resonant_denominator(cf_expand(alpha_str, depth=40), ell)
    print(f"ell={ell:5d}: q = {res.q:6d} = m * {res.q_nj} in [21 ell/20, 41 ell/20], "
          f"||q a|| = {res.dist:.6f} < 3/q_nj = {res.bound:.6f}")
