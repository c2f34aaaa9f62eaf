"""Dev harness 3: HPT machinery on the toy corpus."""
import sys
sys.path.insert(0, "src")
from fractions import Fraction

from bvcalc import *
from bvcalc.chart import poisson_bracket as pb, bv_laplacian as lap
from bvcalc.hpt import (Contraction, TruncatedBasis, koszul_contraction,
                        validate_contraction, perturb_contraction,
                        cohomology_contraction, solve_open_cme, brst_operator,
                        solve_qme_counterterms, ObstructionReport, transform_inclusion)
from bvcalc.linalg import Matrix
from bvcalc.master import MasterAction, check_cme, check_qme, first_order_action, SymmetryData

# ---- Koszul contraction on the open-toy chart --------------------------------
coords = [("x", 0), ("u1", 0), ("u2", 0), ("b1", 1), ("b2", 1)]
chart = Chart.build(coords)
sig = chart.signature
P = lambda s: parse_polynomial(s, sig)
s0 = P("x^2/2")

c = koszul_contraction(s0, chart, n_poly=4)
print("koszul M dim:", c.basis_m.size, "N dim:", c.basis_n.size)
rep = validate_contraction(c)
print("koszul axioms clean:", rep.is_clean())
if not rep.is_clean():
    print(rep)

# ---- open toy ------------------------------------------------------------------
# X1 = d_u1 + x*u2*d_u2, X2 = d_u2; T = 0; E^{x,u2}_{12} = -1
zero = GradedPolynomial.zero(sig)
one = GradedPolynomial.constant(sig, 1)
rho = [[zero, one, P("x*u2")], [zero, zero, one]]
emat = [[zero, zero, zero], [zero, zero, zero], [zero, P("0-1"), zero]]
# E antisym in field indices: E[0][2] should be +1?? indices (i,j): E^{x u2} = -1 -> E[0][2] = -1, E[2][0] = +1
emat = [[zero, zero, P("0-1")], [zero, zero, zero], [P("1"), zero, zero]]
sym = SymmetryData(["x", "u1", "u2"], ["b1", "b2"], rho, None, {(0, 1): emat})
from bvcalc.master import check_symmetry
srep = check_symmetry(s0, sym, chart)
print("open toy symmetry clean:", srep.is_clean())
if not srep.is_clean():
    print(srep)

s1 = first_order_action(sym, chart)
print("S1 =", s1)
print("{S0,S1} =", pb(s0, s1, chart))
t2 = pb(s1, s1, chart)
print("{S1,S1} =", t2)

res = solve_open_cme(s0, s1, c, chart, max_order=6)
if isinstance(res, ObstructionReport):
    print("OBSTRUCTION:", res)
else:
    print("solved; adapted contraction:", res.adapted_contraction, "orders:", res.orders_used)
    for k, layer in enumerate(res.action.layers):
        print(f"  layer {k}: {layer}")
    print("check_cme:", check_cme(res.action))
    s2 = res.action.layers[2]
    print("S2 nonzero:", not s2.is_zero())

# ---- closed input through the solver -----------------------------------------
rho_c = [[zero, one, zero], [zero, zero, one]]
sym_c = SymmetryData(["x", "u1", "u2"], ["b1", "b2"], rho_c, None, {})
s1_c = first_order_action(sym_c, chart)
res_c = solve_open_cme(s0, s1_c, c, chart)
print("closed path: layers", len(res_c.action.layers), "T terms:", res_c.t_terms,
      "cme:", check_cme(res_c.action).is_zero())

# ---- perturbation lemma --------------------------------------------------------
# identity contraction
bm = TruncatedBasis(sig, 2)
idm = Matrix.identity(bm.size)
zm = Matrix.zeros(bm.size, bm.size)
c_id = Contraction.from_matrices(bm, bm, zm, zm, idm, idm, zm)
print("identity contraction clean:", validate_contraction(c_id).is_clean())

# delta = -i*hbar*Delta_Omega on degree-2 basis, perturbing the identity contraction
cols = []
mih = Scalar.from_rational(0, -1) * Scalar.hbar()
for e in bm.elements():
    cols.append(bm.vector(lap(e, chart) * mih))
delta = Matrix.from_columns(bm.size, cols)
cp = perturb_contraction(c_id, delta)
print("perturbed identity clean:", validate_contraction(cp).is_clean())

# perturb the koszul contraction matrices by -i*hbar*Delta
mats = c.matrices()
cols = [c.basis_m.vector(lap(e, chart) * mih) for e in c.basis_m.elements()]
delta_k = Matrix.from_columns(c.basis_m.size, cols)
cpk = perturb_contraction(c, delta_k)
print("perturbed koszul clean:", validate_contraction(cpk).is_clean())
# compare htilde against direct series summation
h_direct = mats["h"].copy()
term = mats["h"]
hd = mats["h"] @ delta_k
k = 0
while True:
    term = hd @ term
    if term.is_zero():
        break
    h_direct = h_direct + term
    k += 1
    assert k < 50
print("htilde equals direct sum:", (cpk.matrices()["h"] - h_direct).is_zero())

# ---- anomaly detection ----------------------------------------------------------
coords2 = [("x", 0), ("y", 0), ("b", 1)]
chart2 = Chart.build(coords2)
sig2 = chart2.signature
P2 = lambda s: parse_polynomial(s, sig2)
s_scaling = P2("x^2/2") + P2("y_a*y*b")
print("scaling cme:", check_cme(MasterAction(s_scaling, chart2)).is_zero())
print("scaling Delta S:", lap(s_scaling, chart2))
res_q = solve_qme_counterterms(MasterAction(s_scaling, chart2), max_degree=6)
if isinstance(res_q, ObstructionReport):
    print("anomaly found:", res_q)
else:
    print("unexpected: solved", res_q.counterterms)

# volume preserving: so(3)-like shift model
s_shift = P2("x^2/2") + P2("y_a*b")
res_v = solve_qme_counterterms(MasterAction(s_shift, chart2), max_degree=6)
print("volume-preserving counterterms:", res_v.counterterms, "orders:", res_v.orders_used)

# planted counterterm: Delta S~ = {S~, q} for chosen q
# try S~ = x^2/2 + y_a*b + x*y_a*b: Delta = d/dy d/dy_a... compute
s_planted = P2("x^2/2 + y_a*b + x^2*y_a*b")
print("planted cme:", check_cme(MasterAction(s_planted, chart2)))
print("planted Delta:", lap(s_planted, chart2))
res_p = solve_qme_counterterms(MasterAction(s_planted, chart2), max_degree=6)
if isinstance(res_p, ObstructionReport):
    print("planted: obstruction", res_p)
else:
    print("planted solved, T1 =", res_p.counterterms, "qme:", check_qme(res_p.action).is_zero())
