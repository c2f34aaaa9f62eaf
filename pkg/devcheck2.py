"""Dev harness 2: pin the ghost-term factor via the so(3) CME."""
import sys
sys.path.insert(0, "src")
from fractions import Fraction
from itertools import permutations

from bvcalc import *
from bvcalc.algebra import Generator
from bvcalc.chart import poisson_bracket as pb, bv_laplacian as lap
import bvcalc.master as master
from bvcalc.master import SymmetryData, check_symmetry, check_cme, check_qme

# so(3) chart
coords = [("x1", 0), ("x2", 0), ("x3", 0), ("b1", 1), ("b2", 1), ("b3", 1)]
chart = Chart.build(coords)
sig = chart.signature
P = lambda s: parse_polynomial(s, sig)

eps = {}
for p in permutations((0, 1, 2)):
    s = 1
    arr = list(p)
    for i in range(3):
        for j in range(i + 1, 3):
            if arr[i] > arr[j]:
                s = -s
    eps[p] = s

def epsv(a, i, j):
    return eps.get((a, i, j), 0)

xs = [P("x1"), P("x2"), P("x3")]
zero = GradedPolynomial.zero(sig)

# rho^i_alpha = eps_{alpha i j} x_j
rho = [[sum((epsv(a, i, j) * xs[j] for j in range(3)), zero) for i in range(3)]
       for a in range(3)]
# T^gamma_{alpha beta} = eps_{alpha beta gamma}
T = [[[GradedPolynomial.constant(sig, epsv(a, b, g)) for b in range(3)]
      for a in range(3)] for g in range(3)]

sym = SymmetryData(field_names=["x1", "x2", "x3"], ghost_names=["b1", "b2", "b3"],
                   rho=rho, T=T)
s0 = P("(x1^2 + x2^2 + x3^2)^2 / 8")
rep = check_symmetry(s0, sym, chart)
print("so(3) symmetry residuals clean:", rep.is_clean())
if not rep.is_clean():
    print(rep)

for factor in (Fraction(1, 2), Fraction(-1, 2), Fraction(1), Fraction(-1)):
    master.GHOST_TERM_FACTOR = factor
    s1 = master.build_s1_closed(sym, chart)
    s = s0 + s1
    res = pb(s, s, chart)
    print(f"factor {factor}: CME residual zero = {res.is_zero()}")
    if res.is_zero():
        print("  S1 =", s1)
        print("  Delta S1 =", lap(s1, chart))

# 2-dim nonabelian upper-triangular algebra on (x,u): X1 = u d_u, X2 = d_u
coords2 = [("x", 0), ("u", 0), ("b1", 1), ("b2", 1)]
chart2 = Chart.build(coords2)
sig2 = chart2.signature
P2 = lambda s: parse_polynomial(s, sig2)
zero2 = GradedPolynomial.zero(sig2)
one2 = GradedPolynomial.constant(sig2, 1)
rho2 = [[zero2, P2("u")], [zero2, one2]]
# [X1,X2] = -X2: T^2_{12} = -1
T2 = [[[zero2, zero2], [zero2, zero2]],
      [[zero2, -one2], [one2, zero2]]]
sym2 = SymmetryData(["x", "u"], ["b1", "b2"], rho2, T2)
s0_2 = P2("x^2/2")
rep2 = check_symmetry(s0_2, sym2, chart2)
print("2d nonabelian residuals clean:", rep2.is_clean())
for factor in (Fraction(1, 2), Fraction(-1, 2)):
    master.GHOST_TERM_FACTOR = factor
    s1 = master.build_s1_closed(sym2, chart2)
    res = pb(s0_2 + s1, s0_2 + s1, chart2)
    print(f"factor {factor}: 2d CME residual zero = {res.is_zero()}", "S1 =", s1)
