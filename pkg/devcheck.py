"""Dev harness: validate the sign conventions against the exact identity suite."""
import random
import sys
sys.path.insert(0, "src")

from fractions import Fraction
from bvcalc import *
from bvcalc.algebra import Generator
from bvcalc.chart import poisson_bracket as pb, bv_laplacian as lap

gens = [Generator("x", 0), Generator("y", 0), Generator("b", 1), Generator("c", -1),
        Generator("xa", -1), Generator("ya", -1), Generator("ba", -2), Generator("ca", 0)]
sig = Signature(gens)
chart = Chart(sig, [("x", "xa"), ("y", "ya"), ("b", "ba"), ("c", "ca")])

rng = random.Random(42)

def rand_poly(max_terms=3, max_deg=4, homogeneous=True):
    names = [g.name for g in gens]
    while True:
        target = None
        terms = GradedPolynomial.zero(sig)
        for _ in range(rng.randint(1, max_terms)):
            deg_budget = rng.randint(0, max_deg)
            mono = GradedPolynomial.constant(sig, Fraction(rng.randint(-4, 4), rng.randint(1, 3)))
            used_odd = set()
            for _ in range(deg_budget):
                nm = rng.choice(names)
                g = sig.generator(nm)
                if g.parity and nm in used_odd:
                    continue
                used_odd.add(nm)
                mono = mono * GradedPolynomial.var(sig, nm)
            if mono.is_zero():
                continue
            d = mono.ghost_degree()
            if homogeneous:
                if target is None:
                    target = d
                    terms = terms + mono
                elif d == target:
                    terms = terms + mono
            else:
                terms = terms + mono
        if not terms.is_zero() or rng.random() < 0.05:
            return terms

def sgn(k):
    return -1 if (k % 2) else 1

fails = {}
def check(name, poly):
    if not poly.is_zero():
        fails.setdefault(name, 0)
        fails[name] += 1

N = 60
for trial in range(N):
    f, g, h = rand_poly(), rand_poly(), rand_poly()
    pf, pg, ph = f.parity(), g.parity(), h.parity()
    # graded commutativity
    check("commut", f * g - sgn(pf * pg) * (g * f))
    # Leibniz for each generator, left
    for gen in gens:
        v = gen.name
        lhs = (f * g).derive(v, "left")
        rhs = f.derive(v, "left") * g + sgn(gen.parity * pf) * (f * g.derive(v, "left"))
        check(f"leibniz-left", lhs - rhs)
        # right-derivative relation: (f)X<- = (-1)^{|v|(|f|+1)} X->(f)
        check("left-right", f.derive(v, "right") - sgn(gen.parity * (pf + 1)) * f.derive(v, "left"))
        # right Leibniz: (fg)X<- = f*(g)X<- + (-1)^{|v||g|}(f)X<- * g
        lhs2 = (f * g).derive(v, "right")
        rhs2 = f * g.derive(v, "right") + sgn(gen.parity * pg) * (f.derive(v, "right") * g)
        check("leibniz-right", lhs2 - rhs2)
    # mixed derivatives graded-commute
    for g1 in gens[:4]:
        for g2 in gens[4:]:
            d12 = f.derive(g1.name, "left").derive(g2.name, "left")
            d21 = f.derive(g2.name, "left").derive(g1.name, "left")
            check("dd-commute", d21 - sgn(g1.parity * g2.parity) * d12)
    # Poisson lemma
    check("antisym", pb(f, g, chart) + sgn((pf + 1) * (pg + 1)) * pb(g, f, chart))
    jac = (sgn((ph + 1) * (pg + 1)) * pb(h, pb(f, g, chart), chart)
           + sgn((pf + 1) * (ph + 1)) * pb(f, pb(g, h, chart), chart)
           + sgn((pg + 1) * (pf + 1)) * pb(g, pb(h, f, chart), chart))
    check("jacobi", jac)
    check("leibniz-poisson",
          pb(f, g * h, chart) - pb(f, g, chart) * h - sgn(pg * (pf + 1)) * (g * pb(f, h, chart)))
    # BV laplacian identities
    check("delta1", lap(f * g, chart) - lap(f, chart) * g - sgn(pf) * pb(f, g, chart)
          - sgn(pf) * (f * lap(g, chart)))
    check("delta2", lap(pb(f, g, chart), chart) - pb(lap(f, chart), g, chart)
          - sgn(pf + 1) * pb(f, lap(g, chart), chart))
    check("delta-sq", lap(lap(f, chart), chart))

# basics
x = GradedPolynomial.var(sig, "x"); xa = GradedPolynomial.var(sig, "xa")
b = GradedPolynomial.var(sig, "b"); ba = GradedPolynomial.var(sig, "ba")
print("{x,xa} =", pb(x, xa, chart))
print("{xa,x} =", pb(xa, x, chart))
print("{b,ba} =", pb(b, ba, chart))
print("Delta(x*xa) =", lap(x * xa, chart))
print("Delta(b*ba) =", lap(b * ba, chart))

# Proposition identities on semidensities (operators)
def L(q):
    def op(s):
        return lie_derivative(q, s)
    return op

for trial in range(40):
    q1, q2 = rand_poly(), rand_poly()
    s = Semidensity(rand_poly(homogeneous=True), chart)
    p1, p2 = q1.parity(), q2.parity()
    if p1 is None or p2 is None:
        continue
    # identity 3: [[L1,L2]] = -L_{q1,q2}; |L_q| = p+1
    lhs = lie_derivative(q1, lie_derivative(q2, s)).payload \
        - sgn((p1 + 1) * (p2 + 1)) * lie_derivative(q2, lie_derivative(q1, s)).payload
    rhs = -lie_derivative(pb(q1, q2, chart), s).payload
    check("prop3", lhs - rhs)
    # identity 4: [[L1, q2*]] = -{q1,q2}*
    lhs = lie_derivative(q1, Semidensity(q2 * s.payload, chart)).payload \
        - sgn((p1 + 1) * p2) * (q2 * lie_derivative(q1, s).payload)
    rhs = -(pb(q1, q2, chart) * s.payload)
    check("prop4", lhs - rhs)
    # identity 5: [[Delta, L_q]] = 0; |Delta| = 1
    lhs = lap(lie_derivative(q1, s).payload, chart) \
        - sgn(1 * (p1 + 1)) * lie_derivative(q1, Semidensity(lap(s.payload, chart), chart)).payload
    check("prop5", lhs)
    # identity 2: multiplication operators graded commute
    check("prop2", q1 * (q2 * s.payload) - sgn(p1 * p2) * (q2 * (q1 * s.payload)))

if fails:
    print("FAILURES:", fails)
else:
    print("ALL IDENTITIES PASS")
