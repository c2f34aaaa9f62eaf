"""BV integrals over Lagrangian submanifolds.

Restriction by gauge-fixing fermions, exact Berezin integration, and a
three-tier even-variable integrator: exact Gaussian/Fresnel moments,
delta-reduction of Lagrange multipliers, and deterministic quadrature as
the fallback.  Exact arithmetic is kept as long as possible; complex
doubles appear only in the final value.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import GradedPolynomial, Monomial
from .chart import Chart, poisson_bracket
from .linalg import Matrix, invert
from .master import MasterAction
from .scalars import Scalar


class IntegrationError(ValueError):
    pass


class InadmissibleGauge(IntegrationError):
    """The chosen gauge does not fix the symmetry (or yields no finite measure)."""


@dataclass
class GaugeFermion:
    """Odd ghost-degree -1 function of the coordinates only."""

    psi: GradedPolynomial
    chart: Chart

    def __post_init__(self):
        self.chart._check(self.psi)
        for anti in self.chart.anti_coordinates():
            if self.psi.depends_on(anti):
                raise IntegrationError(
                    f"gauge fermion depends on anti-coordinate {anti!r}")
        if not self.psi.is_zero():
            if self.psi.ghost_degree() != -1:
                raise IntegrationError(
                    f"gauge fermion must have ghost degree -1, "
                    f"found {self.psi.ghost_degree()}")
            if self.psi.parity() != 1:
                raise IntegrationError("gauge fermion must be odd")


@dataclass
class LagrangianSpec:
    """Integration cycle: a gauge fermion or a list of constraints in involution."""

    fermion: GaugeFermion | None = None
    constraints: list[GradedPolynomial] | None = None
    chart: Chart | None = None

    def __post_init__(self):
        if (self.fermion is None) == (self.constraints is None):
            raise IntegrationError(
                "specify exactly one of fermion or constraints")
        if self.fermion is not None:
            self.chart = self.fermion.chart
        else:
            if self.chart is None:
                raise IntegrationError("constraint form needs an explicit chart")
            expected = len(self.chart.pairs)
            if len(self.constraints) != expected:
                raise IntegrationError(
                    f"need {expected} constraints (half the chart dimension), "
                    f"got {len(self.constraints)}")
            for f in self.constraints:
                self.chart._check(f)
                if not f.is_homogeneous():
                    raise IntegrationError("constraints must be homogeneous")


@dataclass
class IntegralResult:
    value: complex
    method: str                      # gaussian-exact | delta-reduced | quadrature
    error_estimate: float | None = None

    def __str__(self) -> str:
        err = "" if self.error_estimate is None else f" (err<={self.error_estimate:.2e})"
        return f"{self.value!r} [{self.method}]{err}"


@dataclass
class InvolutionReport:
    brackets: dict[tuple[int, int], GradedPolynomial]

    def is_clean(self) -> bool:
        return all(b.is_zero() for b in self.brackets.values())

    def __str__(self) -> str:
        if self.is_clean():
            return "involution check: all constraint brackets vanish"
        bad = [f"{{f_{i},f_{j}}} = {b}" for (i, j), b in sorted(self.brackets.items())
               if not b.is_zero()]
        return "involution residuals:\n  " + "\n  ".join(bad)


def lagrangian_bindings(psi: GaugeFermion, chart: Chart) -> dict[str, GradedPolynomial]:
    """Graph of the gauge fermion: z+_i -> (-1)^{|z^i|} dPsi/dz^i.

    The parity sign makes the graph an involutive (Lagrangian) cycle for
    this module's bracket convention; it is what the vanishing of Delta-exact
    integrals and the gauge-independence theorem rely on.
    """
    bindings = {}
    for coord, anti in chart.pairs:
        g = psi.psi.derive(coord, "left")
        if chart.signature.generator(coord).parity == 1:
            g = -g
        bindings[anti] = g
    return bindings


def restrict_to_lagrangian(f: GradedPolynomial, psi: GaugeFermion,
                           chart: Chart) -> GradedPolynomial:
    """Substitute the fermion graph; the result has no anti-coordinates."""
    chart._check(f)
    return f.substitute(lagrangian_bindings(psi, chart))


def berezin_integrate(f: GradedPolynomial, odd_vars: list[str]) -> GradedPolynomial:
    """Coefficient of the top monomial beta^n...beta^1 in the declared order."""
    sig = f.signature
    seen = set()
    for v in odd_vars:
        g = sig.generator(v)
        if g.parity != 1:
            raise IntegrationError(f"Berezin variable {v!r} is even")
        if v in seen:
            raise IntegrationError(f"Berezin variable {v!r} repeated")
        seen.add(v)
    out = f
    for v in reversed(odd_vars):
        out = out.derive(v, "left")
    return out


def check_involution(lag: LagrangianSpec, chart: Chart) -> InvolutionReport:
    """All pairwise odd Poisson brackets of the constraints, exactly."""
    if lag.constraints is None:
        bindings = lagrangian_bindings(lag.fermion, chart)
        constraints = [GradedPolynomial.var(chart.signature, anti) - g
                       for anti, g in bindings.items()]
    else:
        constraints = lag.constraints
    brackets = {}
    for i in range(len(constraints)):
        for j in range(i, len(constraints)):
            brackets[(i, j)] = poisson_bracket(constraints[i], constraints[j], chart)
    return InvolutionReport(brackets)


# ---------------------------------------------------------------------------
# even integration


def _exact_signature(q: list[list[Fraction]]) -> int:
    """Signature (n_plus - n_minus) of a rational symmetric matrix, exactly."""
    a = [row[:] for row in q]
    sigma = 0
    idx = list(range(len(q)))
    while idx:
        pivot = next((i for i in idx if a[i][i] != 0), None)
        if pivot is not None:
            d = a[pivot][pivot]
            sigma += 1 if d > 0 else -1
            rest = [i for i in idx if i != pivot]
            for r in rest:
                for s in rest:
                    a[r][s] -= a[r][pivot] * a[pivot][s] / d
            idx = rest
            continue
        off = None
        for i in idx:
            for j in idx:
                if i < j and a[i][j] != 0:
                    off = (i, j)
                    break
            if off:
                break
        if off is None:
            break  # zero block: degenerate directions, caller rejects via det
        i, j = off
        # diagonal vanishes here, so the block is [[0,b],[b,0]]: one plus, one
        # minus (net 0); Schur-complement the pair away with its inverse
        b = a[i][j]
        rest = [k for k in idx if k not in (i, j)]
        for r in rest:
            ri, rj = a[r][i], a[r][j]
            for s in rest:
                a[r][s] -= (ri * a[j][s] + rj * a[i][s]) / b
        idx = rest
    return sigma


def _exact_det(q: list[list[Fraction]]) -> Fraction:
    n = len(q)
    a = [row[:] for row in q]
    det = Fraction(1)
    for col in range(n):
        pivot = None
        for i in range(col, n):
            if a[i][col] != 0:
                pivot = i
                break
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        det *= a[col][col]
        for i in range(col + 1, n):
            factor = a[i][col] / a[col][col]
            for j in range(col, n):
                a[i][j] -= factor * a[col][j]
    return det


def _wick_moment(exponents: list[int], cov) -> object:
    """Sum over pairings of products of covariances (indices with repetition)."""
    idxs: list[int] = []
    for k, e in enumerate(exponents):
        idxs.extend([k] * e)
    if len(idxs) % 2:
        return None

    def rec(rest: tuple[int, ...]):
        if not rest:
            return Fraction(1)
        first, tail = rest[0], rest[1:]
        total = None
        for t in range(len(tail)):
            term = cov(first, tail[t]) * rec(tail[:t] + tail[t + 1:])
            total = term if total is None else total + term
        return total

    return rec(tuple(idxs))


def integrate_even(prefactor: GradedPolynomial, phase: GradedPolynomial,
                   even_vars: list[str], hbar: float,
                   scheme: str = "auto",
                   domain: dict[str, tuple[float, float]] | None = None,
                   nodes: int = 96) -> IntegralResult:
    """Integral of prefactor * exp(i*phase/hbar) over the listed even variables.

    Tiers: Lagrange multipliers appearing linearly in the phase are
    delta-reduced first; a quadratic phase is then evaluated in closed form
    (Fresnel signature phases e^{i pi sigma/4} included); anything else
    needs an explicit quadrature domain.
    """
    if hbar <= 0:
        raise IntegrationError("hbar must be positive")
    sig = prefactor.signature
    for v in even_vars:
        if sig.generator(v).parity != 0:
            raise IntegrationError(f"integration variable {v!r} is odd")
    hbar_frac = Fraction(hbar)
    variables = list(even_vars)
    value_factor = 1.0 + 0.0j
    method = []

    # --- tier 2 first: delta-reduce multipliers -----------------------------
    if scheme in ("auto", "delta"):
        changed = True
        while changed:
            changed = False
            for lam in list(variables):
                if not phase.depends_on(lam):
                    continue
                g = phase.derive(lam, "left")
                if g.depends_on(lam):
                    continue
                rest = phase - GradedPolynomial.var(sig, lam) * g
                if rest.depends_on(lam) or prefactor.depends_on(lam):
                    continue
                # choose the eliminated conjugate variable: constant coefficient
                target = None
                for y in variables:
                    if y == lam or not g.depends_on(y):
                        continue
                    coeff = g.derive(y, "left")
                    if coeff.depends_on(y):
                        continue
                    cval = coeff.constant_term()
                    if coeff == GradedPolynomial.constant(sig, cval) \
                            and not cval.is_zero() and cval.is_hbar_free():
                        target = (y, cval)
                        break
                if target is None:
                    continue
                y, a = target
                re, im = a.as_gauss()
                if im != 0:
                    continue
                shift = g - GradedPolynomial.var(sig, y) * a
                solved = shift * Scalar.from_rational(Fraction(-1) / re)
                bindings = {y: solved}
                phase = rest.substitute(bindings)
                prefactor = prefactor.substitute(bindings)
                variables.remove(lam)
                variables.remove(y)
                value_factor *= (2 * math.pi * hbar) / abs(float(re))
                method.append("delta-reduced")
                changed = True
                break

    if not variables:
        const = phase.constant_term()
        if phase != GradedPolynomial.constant(sig, const):
            raise IntegrationError("free variables remain in the phase")
        pconst = prefactor.constant_term()
        if prefactor != GradedPolynomial.constant(sig, pconst):
            raise IntegrationError("free variables remain in the prefactor")
        cval = const.evaluate(hbar_frac)
        total = pconst.evaluate(hbar_frac)
        value = value_factor * total * cmath.exp(1j * cval / hbar)
        return IntegralResult(value, "+".join(method) or "gaussian-exact", 0.0)

    # --- tier 1: exact Gaussian / Fresnel ------------------------------------
    if scheme in ("auto", "gaussian"):
        result = _try_gaussian(prefactor, phase, variables, hbar_frac, hbar)
        if result is not None:
            value, exact_err = result
            return IntegralResult(value_factor * value,
                                  "+".join(method + ["gaussian-exact"]), exact_err)
        if scheme == "gaussian":
            raise IntegrationError("phase is not an integrable quadratic form")

    # --- tier 3: quadrature -----------------------------------------------------
    if domain is None:
        raise IntegrationError(
            "non-quadratic phase without a quadrature domain")
    value, err = _quadrature(prefactor, phase, variables, hbar, domain, nodes)
    return IntegralResult(value_factor * value, "+".join(method + ["quadrature"]),
                          err)


def _try_gaussian(prefactor, phase, variables, hbar_frac, hbar):
    """Closed form for quadratic phases; None when the phase is not quadratic."""
    sig = phase.signature
    n = len(variables)
    for m in phase.terms:
        deg = sum(e for i, e in m
                  if sig.generators[i].name in variables)
        total = sum(e for _, e in m)
        if deg != total:
            raise IntegrationError("phase contains non-integration variables")
        if deg > 2:
            return None
    for m in prefactor.terms:
        if any(sig.generators[i].name not in variables for i, _ in m):
            raise IntegrationError("prefactor contains non-integration variables")

    # decompose phase = 1/2 z^T Q z + b^T z + c
    q_scalar = [[phase.derive(vi, "left").derive(vj, "left").constant_term()
                 for vj in variables] for vi in variables]
    qc = [[q_scalar[i][j].evaluate_exact(hbar_frac) for j in range(n)]
          for i in range(n)]
    b = []
    for i, vi in enumerate(variables):
        lin = phase.derive(vi, "left")
        for j, vj in enumerate(variables):
            lin = lin - GradedPolynomial.var(sig, vj) * q_scalar[i][j]
        b.append(lin.constant_term().evaluate_exact(hbar_frac))
    c0 = phase.constant_term().evaluate_exact(hbar_frac)

    real_q = all(im == 0 for row in qc for (_re, im) in row)
    q_frac = [[row[j][0] for j in range(n)] for row in qc]
    det = _exact_det(q_frac) if real_q else None
    if real_q and det == 0:
        raise IntegrationError("singular quadratic form in the phase")

    # covariance C = i hbar Q^{-1}, exact over Q(i)
    qmat = Matrix.from_rows([[Scalar.from_rational(re, im) for (re, im) in row]
                             for row in qc])
    try:
        qinv = invert(qmat)
    except ValueError:
        raise IntegrationError("singular quadratic form in the phase")
    ihbar = Scalar.from_rational(0, hbar_frac)

    def cov(i: int, j: int) -> Scalar:
        return qinv.entry(i, j) * ihbar

    # stationary point z0 = -Q^{-1} b
    bvec = {k: Scalar.from_rational(re, im) for k, (re, im) in enumerate(b)
            if re or im}
    z0 = {}
    if bvec:
        minus_qinv_b = qinv.apply(bvec)
        z0 = {k: -v for k, v in minus_qinv_b.items()}
    # c_eff = c0 + (1/2) b^T z0 = c0 - (1/2) b^T Q^{-1} b
    c_eff = Scalar.from_rational(*c0)
    if bvec:
        acc = Scalar.zero()
        for k, v in z0.items():
            acc = acc + bvec.get(k, Scalar.zero()) * v
        c_eff = c_eff + acc * Scalar.from_rational(Fraction(1, 2))

    # shift the prefactor to the stationary point
    shifted = prefactor
    if z0:
        bindings = {}
        for k, v in z0.items():
            name = variables[k]
            bindings[name] = GradedPolynomial.var(sig, name) + \
                GradedPolynomial.constant(sig, v)
        shifted = prefactor.substitute(bindings)

    # moments: sum over monomials of the shifted prefactor
    total = Scalar.zero()
    for m, coeff in shifted.terms.items():
        exps = [0] * n
        for i, e in m:
            exps[variables.index(sig.generators[i].name)] = e
        if sum(exps) % 2:
            continue
        moment = _wick_moment(exps, cov)
        if moment is None:
            continue
        total = total + coeff * moment
    total_c = total.evaluate(hbar_frac)

    # base integral (2 pi hbar)^{n/2} |det Q|^{-1/2} e^{i pi sigma/4}
    if real_q:
        sigma = _exact_signature(q_frac)
        base = (2 * math.pi * hbar) ** (n / 2) / math.sqrt(abs(float(det)))
        base *= cmath.exp(1j * math.pi * sigma / 4)
        err = 0.0
    else:
        mnum = np.array([[complex(*qc[i][j]) for j in range(n)] for i in range(n)],
                        dtype=complex)
        mnum = -1j * mnum / hbar
        eigvals = np.linalg.eigvals(mnum)
        if np.any(np.abs(eigvals) < 1e-14):
            raise IntegrationError("singular quadratic form in the phase")
        if np.any(eigvals.real < -1e-12):
            raise IntegrationError(
                "quadratic phase grows at infinity (no damping); "
                "provide a quadrature domain")
        base = (2 * math.pi) ** (n / 2) * np.prod(eigvals ** -0.5)
        err = abs(base) * 1e-14
    phase_const = cmath.exp(1j * c_eff.evaluate(hbar) / hbar)
    return base * phase_const * total_c, err


def _quadrature(prefactor, phase, variables, hbar, domain, nodes):
    sig = phase.signature
    missing = [v for v in variables if v not in domain]
    if missing:
        raise IntegrationError(f"quadrature domain missing variables {missing}")

    def evaluate(nn: int) -> complex:
        grids = []
        weights = []
        for v in variables:
            a, bnd = domain[v]
            x, w = np.polynomial.legendre.leggauss(nn)
            grids.append(0.5 * (bnd - a) * x + 0.5 * (bnd + a))
            weights.append(0.5 * (bnd - a) * w)
        mesh = np.meshgrid(*grids, indexing="ij")
        wmesh = np.meshgrid(*weights, indexing="ij")
        wtot = np.ones_like(wmesh[0])
        for w in wmesh:
            wtot = wtot * w

        def poly_eval(poly):
            out = np.zeros(mesh[0].shape, dtype=complex)
            for m, c in poly.terms.items():
                term = np.full(mesh[0].shape, c.evaluate(hbar), dtype=complex)
                for i, e in m:
                    name = sig.generators[i].name
                    term = term * mesh[variables.index(name)] ** e
                out = out + term
            return out

        integrand = poly_eval(prefactor) * np.exp(1j * poly_eval(phase) / hbar)
        return complex(np.sum(integrand * wtot))

    coarse = evaluate(nodes)
    fine = evaluate(2 * nodes)
    err = abs(fine - coarse)
    return fine, err


# ---------------------------------------------------------------------------
# expectation values


def _graph_bindings(lag: LagrangianSpec, chart: Chart) -> dict[str, GradedPolynomial]:
    """Anti-coordinate bindings for a fermion or graph-form constraint cycle."""
    if lag.fermion is not None:
        return lagrangian_bindings(lag.fermion, chart)
    sig = chart.signature
    bindings: dict[str, GradedPolynomial] = {}
    for f in lag.constraints:
        anti_linear = [a for a in chart.anti_coordinates() if f.depends_on(a)]
        if len(anti_linear) != 1:
            raise IntegrationError(
                "constraint-form integration supports graphs z+ - g(z) only; "
                f"constraint {f} is not of that form")
        anti = anti_linear[0]
        var = GradedPolynomial.var(sig, anti)
        rest = f - var
        if rest.depends_on(anti):
            raise IntegrationError(f"constraint {f} is not linear in {anti}")
        bindings[anti] = -rest
    missing = set(chart.anti_coordinates()) - set(bindings)
    if missing:
        raise IntegrationError(
            f"constraints do not determine anti-coordinates {sorted(missing)}")
    return bindings


def _split_even_odd(f: GradedPolynomial) -> tuple[GradedPolynomial, GradedPolynomial]:
    sig = f.signature
    even_terms = {}
    odd_terms = {}
    for m, c in f.terms.items():
        if any(sig.parities[i] for i, _ in m):
            odd_terms[m] = c
        else:
            even_terms[m] = c
    return (GradedPolynomial(sig, even_terms), GradedPolynomial(sig, odd_terms))


def _nilpotent_exp(s_nil: GradedPolynomial, hbar_unused=None) -> GradedPolynomial:
    """exp((i/hbar) * s_nil) expanded; terminates because s_nil is nilpotent."""
    sig = s_nil.signature
    out = GradedPolynomial.constant(sig, 1)
    term = GradedPolynomial.constant(sig, 1)
    k = 0
    i_over_h = Scalar.from_rational(0, 1) * Scalar.hbar(-1)
    while True:
        k += 1
        term = term * s_nil * i_over_h * Scalar.from_rational(Fraction(1, k))
        if term.is_zero():
            break
        out = out + term
        if k > 64:
            raise IntegrationError("odd part of the action is not nilpotent")
    return out


def bv_expectation(f: GradedPolynomial, action: MasterAction,
                   lag: LagrangianSpec, chart: Chart, hbar: float,
                   scheme: str = "auto",
                   domain: dict[str, tuple[float, float]] | None = None,
                   nodes: int = 96) -> IntegralResult:
    """Normalized expectation <f> = (int_L f e^{iS/hbar}) / (int_L e^{iS/hbar}).

    Pipeline: restrict to the cycle, Berezin-integrate the odd coordinates,
    then integrate the even remainder.  The Berezin output of the
    denominator must be nonzero, otherwise the gauge is inadmissible.
    """
    chart._check(f)
    bindings = _graph_bindings(lag, chart)
    s_r = action.total.substitute(bindings)
    f_r = f.substitute(bindings)
    s_even, s_nil = _split_even_odd(s_r)
    exp_nil = _nilpotent_exp(s_nil)

    odd_coords = [cname for cname in chart.coordinates()
                  if chart.signature.generator(cname).parity == 1]
    even_coords = [cname for cname in chart.coordinates()
                   if chart.signature.generator(cname).parity == 0]

    den_odd = berezin_integrate(exp_nil, odd_coords)
    if den_odd.is_zero():
        raise InadmissibleGauge(
            "Berezin integral vanishes identically: gauge does not fix the symmetry")
    num_odd = berezin_integrate(f_r * exp_nil, odd_coords)

    active = [v for v in even_coords
              if s_even.depends_on(v) or num_odd.depends_on(v)
              or den_odd.depends_on(v)]
    num = integrate_even(num_odd, s_even, active, hbar, scheme, domain, nodes)
    den = integrate_even(den_odd, s_even, active, hbar, scheme, domain, nodes)
    if den.value == 0:
        raise IntegrationError("vanishing partition function")
    err = None
    if num.error_estimate is not None or den.error_estimate is not None:
        base = abs(num.value / den.value)
        rel = 0.0
        if den.error_estimate:
            rel += den.error_estimate / abs(den.value)
        if num.error_estimate and abs(num.value) > 0:
            rel += num.error_estimate / abs(num.value)
        err = base * rel
    method = num.method if num.method == den.method else f"{num.method}/{den.method}"
    return IntegralResult(num.value / den.value, method, err)
