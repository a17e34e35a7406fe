"""Building and verifying the sparse label set.

The set pairs each vector of a fixed enumeration of Z^d with a near-resonant
shift at a doubly exponentially growing scale; the result is sparse (at most
one point per pair of consecutive scales) yet its half-pairings <n, alpha>/2
fill the circle.
"""

from qpsl.diophantine import frequency_vector, golden_mean, sqrt2_minus_1
from qpsl.label_set import build_schedule, construct_label_set, ell_star, verify_label_set

freq = frequency_vector(golden_mean(900), gamma=0.2, tau=2.0)
sched = build_schedule(100, 0.9, depth=10)
print("schedule levels ell_j = 100^(1.9^j):")
for j in range(5):
    print(f"  ell_{j} = {sched.level_float(j):.6g}")
print("  (relaxations recorded:", ", ".join(sched.relaxations) or "none", ")\n")

print("strict-regime floor for k=10, gamma=1, tau=1, s=0.9, ||A||=0.5:",
      f"{ell_star(10, 1.0, 1.0, 0.9, 0.5):.6g}  (the e^k term dominates)\n")

ks = construct_label_set(freq, sched, j1=0, spacing=2, count=5)
print("d=1 entries (base + shift = label at level j):")
for e in ks.entries:
    lab = e.label[0]
    digits = len(str(abs(lab)))
    shown = lab if digits <= 12 else f"~10^{digits - 1}"
    print(f"  m={e.m}: base {e.base[0]:+d}, level {e.level}, label {shown}")
print()

rep = verify_label_set(ks, sched, density_targets=[i / 10 for i in range(10)],
                       density_tol=0.3)
print(f"verification: sparsity={rep.sparsity_ok} annulus={rep.annulus_ok} "
      f"windows={rep.window_ok} spacing={rep.spacing_ok}")
print("density report (target -> best ||<n,a>/2 - t||):")
for t, best, ok in rep.density:
    print(f"  {t:.2f} -> {best:.4f} {'(within tol)' if ok else ''}")

freq2 = frequency_vector((golden_mean(900), sqrt2_minus_1(900)), gamma=0.1, tau=2.0)
ks2 = construct_label_set(freq2, sched, j1=0, spacing=2, count=4)
print("\nd=2 bases are enumerated axis-first:", [e.base for e in ks2.entries])
print("d=2 verification passed:", verify_label_set(ks2, sched).passed)
