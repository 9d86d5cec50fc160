"""Stand-in for an 8-joist floor deflection model (external line protocol).

Reads eight joist stiffnesses (10^6 psi) and prints a midspan deflection
in inches.  Load sharing is mimicked by a weighted harmonic mean, so one
soft joist raises the deflection but its neighbours carry part of the load.
"""
import sys

E = [float(v) for v in sys.stdin.readline().strip().split(",")]
if len(E) != 8 or min(E) <= 0:
    sys.exit("expected eight positive stiffness values")
w = [0.6, 0.9, 1.2, 1.3, 1.3, 1.2, 0.9, 0.6]
shared = sum(w) / sum(wi * e for wi, e in zip(w, E))
local = max(w[j] / E[j] for j in range(8)) / max(w)
print(repr(1.6 * shared + 0.9 * local))
