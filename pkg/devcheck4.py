"""Dev harness 4: gauge integration on the toy model."""
import sys
sys.path.insert(0, "src")
import cmath, math
from fractions import Fraction

from bvcalc import *
from bvcalc.integration import (GaugeFermion, LagrangianSpec, IntegralResult,
                                restrict_to_lagrangian, berezin_integrate,
                                integrate_even, bv_expectation, check_involution,
                                InadmissibleGauge)
from bvcalc.master import MasterAction

# toy gauge model: S = x^2/2 + y_a*b + bb_a*lam
# coords: x(0), y(0), b(+1 ghost), bb(-1 antighost), lam(0 multiplier)
coords = [("x", 0), ("y", 0), ("b", 1), ("bb", -1), ("lam", 0)]
chart = Chart.build(coords)
sig = chart.signature
P = lambda s: parse_polynomial(s, sig)

S = P("x^2/2 + y_a*b + bb_a*lam")
action = MasterAction(S, chart)
from bvcalc.master import check_cme, check_qme
print("toy CME:", check_cme(action).is_zero(), " QME:", check_qme(action).is_zero())

psi1 = GaugeFermion(P("bb*y"), chart)
S_r = restrict_to_lagrangian(S, psi1, chart)
print("S|_L(psi1) =", S_r)   # expect x^2/2 + bb*b + y*lam

f = P("x^2")
for hb in (1.0, 0.5, 2.0):
    r = bv_expectation(f, action, LagrangianSpec(fermion=psi1), chart, hb)
    print(f"hbar={hb}: <x^2> = {r.value} expected {1j*hb}  method={r.method}")

for c in (1, 2):
    psi2 = GaugeFermion(parse_polynomial(f"bb*(y + {c}*x)", sig), chart)
    r2 = bv_expectation(f, action, LagrangianSpec(fermion=psi2), chart, 1.0)
    print(f"psi2 c={c}: <x^2> = {r2.value}")

r1 = bv_expectation(P("1"), action, LagrangianSpec(fermion=psi1), chart, 1.0)
print("<1> =", r1.value)

# inadmissible: psi = 0
try:
    bv_expectation(f, action, LagrangianSpec(fermion=GaugeFermion(P("0"), chart)), chart, 1.0)
    print("ERROR: no admissibility failure")
except InadmissibleGauge as e:
    print("inadmissible gauge detected ok")

# involution checks
rep = check_involution(LagrangianSpec(fermion=psi1), chart)
print("fermion-induced constraints in involution:", rep.is_clean())
body = LagrangianSpec(constraints=[GradedPolynomial.var(sig, a) for a in chart.anti_coordinates()], chart=chart)
print("body constraints in involution:", check_involution(body, chart).is_clean())
bad = LagrangianSpec(constraints=[P("x"), P("x_a"), P("y_a"), P("b_a"), P("bb_a")], chart=chart)
badrep = check_involution(bad, chart)
print("bad constraints clean (expect False):", badrep.is_clean())

# standalone integrate_even checks
print("\n-- integrate_even --")
# damped gaussian: exp(-x^2/2) => phase = i*hbar*x^2/2
r = integrate_even(P("1"), P("i*hbar*x^2/2"), ["x"], 1.0)
print("damped:", r.value, "expected", math.sqrt(2*math.pi), r.method)
# Fresnel: exp(i x^2/(2 hbar))
r = integrate_even(P("1"), P("x^2/2"), ["x"], 1.0)
print("fresnel:", r.value, "expected", cmath.sqrt(2*math.pi)*cmath.exp(1j*math.pi/4), r.method)
# delta reduction: int dlam dy e^{i y lam/hbar} g(y) = 2 pi hbar g(0)
r = integrate_even(P("y^2 + 1"), P("y*lam"), ["y", "lam"], 1.0)
print("delta:", r.value, "expected", 2*math.pi, r.method)
# quadrature cross-check of the same (damped mollification)
r = integrate_even(P("y^2 + 1"), P("y*lam + i*hbar*(y^2 + lam^2)/200"), ["y", "lam"], 1.0,
                   domain={"y": (-60.0, 60.0), "lam": (-60.0, 60.0)}, nodes=220)
print("quad mollified:", r.value, "err_est", r.error_estimate)
# second moment oracle via gaussian-exact with linear shift
r = integrate_even(P("x"), P("x^2/2 + 3*x"), ["x"], 1.0)
base = cmath.sqrt(2*math.pi)*cmath.exp(1j*math.pi/4)
print("shifted first moment:", r.value, "expected", -3*base*cmath.exp(-1j*9/2))
