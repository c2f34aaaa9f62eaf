"""Extended actions from symmetry data; classical and quantum master equations.

Symmetry data is the triple (rho, T, E): generator coefficients
X_alpha = rho^i_alpha(x) d/dx^i, structure functions T^alpha_{beta gamma}(x)
and open terms E^{ij}_{alpha beta}(x).  The closure requirement reads

    [X_a, X_b]^i  =  T^c_{ab} rho^i_c  +  dS0 . E(X_a, X_b)^i,

with the contraction convention (dS0 . E)^i = S0_{,j} E^{ji}_{ab}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .algebra import GradedPolynomial
from .chart import Chart, bv_laplacian, poisson_bracket
from .scalars import Scalar


class SymmetryShapeError(ValueError):
    pass


# Factor on the beta+ T beta beta term of the first-order action.  The
# paper-level normalization is convention-dependent; this value is pinned
# by requiring check_cme to vanish for Lie-algebra symmetries (validated
# for so(3), abelian shifts and the 2-dim nonabelian algebra in the tests).
GHOST_TERM_FACTOR = Fraction(-1, 2)


@dataclass
class SymmetryData:
    """Generators, structure functions and open terms of a gauge symmetry."""

    field_names: list[str]          # even body coordinates the symmetry acts on
    ghost_names: list[str]          # one ghost per generator, ghost degree +1
    rho: list[list[GradedPolynomial]]   # rho[alpha][i]
    T: list[list[list[GradedPolynomial]]] | None = None   # T[gamma][alpha][beta]
    E: dict[tuple[int, int], list[list[GradedPolynomial]]] = field(default_factory=dict)
    # E[(alpha, beta)][i][j] with alpha < beta; antisymmetry in both pairs enforced

    def __post_init__(self):
        n_gen = len(self.ghost_names)
        n_dim = len(self.field_names)
        if len(self.rho) != n_gen or any(len(row) != n_dim for row in self.rho):
            raise SymmetryShapeError(
                f"rho must be {n_gen} x {n_dim} (generators x fields)")
        if self.T is not None:
            if len(self.T) != n_gen:
                raise SymmetryShapeError("T must have one sheet per generator")
            for sheet in self.T:
                if len(sheet) != n_gen or any(len(row) != n_gen for row in sheet):
                    raise SymmetryShapeError("each T sheet must be n_gen x n_gen")
                for a in range(n_gen):
                    for b in range(n_gen):
                        if not (sheet[a][b] + sheet[b][a]).is_zero():
                            raise SymmetryShapeError(
                                "T must be antisymmetric in its lower indices")
        for (a, b), mat in self.E.items():
            if not (0 <= a < b < n_gen):
                raise SymmetryShapeError("E keys must be generator pairs a < b")
            if len(mat) != n_dim or any(len(row) != n_dim for row in mat):
                raise SymmetryShapeError("each E block must be n_dim x n_dim")
            for i in range(n_dim):
                for j in range(n_dim):
                    if not (mat[i][j] + mat[j][i]).is_zero():
                        raise SymmetryShapeError(
                            "E blocks must be antisymmetric in the field indices")

    def n_generators(self) -> int:
        return len(self.ghost_names)

    def t_entry(self, gamma: int, alpha: int, beta: int) -> GradedPolynomial | None:
        if self.T is None:
            return None
        return self.T[gamma][alpha][beta]

    def e_entry(self, alpha: int, beta: int, i: int, j: int) -> GradedPolynomial | None:
        if alpha == beta:
            return None
        if alpha < beta:
            block = self.E.get((alpha, beta))
            return block[i][j] if block is not None else None
        block = self.E.get((beta, alpha))
        return -block[i][j] if block is not None else None


@dataclass
class MasterAction:
    """Extended action with its decomposition by anti-field order."""

    total: GradedPolynomial
    chart: Chart
    layers: list[GradedPolynomial] = field(default_factory=list)

    def __post_init__(self):
        self.chart._check(self.total)
        if not self.layers:
            self.layers = [self.total]

    def s0(self) -> GradedPolynomial:
        """Restriction to vanishing anti-fields at hbar = 0."""
        zero = GradedPolynomial.zero(self.total.signature)
        bindings = {a: zero for a in self.chart.anti_coordinates()}
        restricted = self.total.substitute(bindings)
        return GradedPolynomial(self.total.signature, {
            m: _hbar_part(c, 0) for m, c in restricted.terms.items()
            if not _hbar_part(c, 0).is_zero()})


def _hbar_part(c: Scalar, k: int) -> Scalar:
    re, im = c.coefficient(k)
    return Scalar.from_rational(re, im, hbar_power=k)


@dataclass
class SymmetryReport:
    invariance: list[GradedPolynomial]                 # per generator
    closure: dict[tuple[int, int], list[GradedPolynomial]]   # (a,b) -> per field index

    def is_clean(self) -> bool:
        return (all(r.is_zero() for r in self.invariance)
                and all(r.is_zero() for rs in self.closure.values() for r in rs))

    def __str__(self) -> str:
        if self.is_clean():
            return "symmetry check: all residuals vanish"
        lines = []
        for a, r in enumerate(self.invariance):
            if not r.is_zero():
                lines.append(f"X_{a}(S0) = {r}")
        for (a, b), rs in sorted(self.closure.items()):
            for i, r in enumerate(rs):
                if not r.is_zero():
                    lines.append(f"closure residual ({a},{b}) component {i}: {r}")
        return "symmetry check residuals:\n  " + "\n  ".join(lines)


def check_symmetry(s0: GradedPolynomial, sym: SymmetryData,
                   chart: Chart) -> SymmetryReport:
    """Exact residuals of invariance and of on-shell closure."""
    chart._check(s0)
    if s0.parity() not in (0,):
        raise SymmetryShapeError("S0 must be even")
    if s0.ghost_degree() not in (0,):
        raise SymmetryShapeError("S0 must have ghost degree 0")
    fields = sym.field_names
    n_gen = sym.n_generators()
    n_dim = len(fields)
    ds0 = [s0.derive(x, "left") for x in fields]

    invariance = []
    for a in range(n_gen):
        res = GradedPolynomial.zero(s0.signature)
        for i in range(n_dim):
            res = res + sym.rho[a][i] * ds0[i]
        invariance.append(res)

    closure: dict[tuple[int, int], list[GradedPolynomial]] = {}
    for a in range(n_gen):
        for b in range(a + 1, n_gen):
            rs = []
            for i in range(n_dim):
                commutator = GradedPolynomial.zero(s0.signature)
                for j in range(n_dim):
                    commutator = commutator + (
                        sym.rho[a][j] * sym.rho[b][i].derive(fields[j], "left")
                        - sym.rho[b][j] * sym.rho[a][i].derive(fields[j], "left"))
                res = commutator
                if sym.T is not None:
                    for c in range(n_gen):
                        res = res - sym.T[c][a][b] * sym.rho[c][i]
                for j in range(n_dim):
                    e = sym.e_entry(a, b, j, i)
                    if e is not None:
                        res = res - ds0[j] * e
                rs.append(res)
            closure[(a, b)] = rs
    return SymmetryReport(invariance, closure)


def first_order_action(sym: SymmetryData, chart: Chart) -> GradedPolynomial:
    """x+_i rho^i_a beta^a - 1/2 beta+_a T^a_{bc} beta^b beta^c.

    For closed symmetries this already solves the CME; for open ones it is
    the candidate handed to hpt.solve_open_cme.
    """
    sig = chart.signature
    s1 = GradedPolynomial.zero(sig)
    for a, ghost in enumerate(sym.ghost_names):
        beta = GradedPolynomial.var(sig, ghost)
        for i, x in enumerate(sym.field_names):
            anti = GradedPolynomial.var(sig, chart.anti_of(x))
            s1 = s1 + anti * sym.rho[a][i] * beta
    if sym.T is not None:
        factor = Scalar.from_rational(GHOST_TERM_FACTOR)
        for c, ghost_c in enumerate(sym.ghost_names):
            anti_c = GradedPolynomial.var(sig, chart.anti_of(ghost_c))
            for a, ga in enumerate(sym.ghost_names):
                for b, gb in enumerate(sym.ghost_names):
                    t = sym.T[c][a][b]
                    if t.is_zero():
                        continue
                    s1 = s1 + factor * anti_c * t \
                        * GradedPolynomial.var(sig, ga) * GradedPolynomial.var(sig, gb)
    return s1


def build_s1_closed(sym: SymmetryData, chart: Chart) -> GradedPolynomial:
    """First-order extension for a closed symmetry (E = 0).

    Open terms require the homological solver in `hpt`.
    """
    if sym.E:
        raise SymmetryShapeError(
            "symmetry has open terms (E != 0); use hpt.solve_open_cme")
    return first_order_action(sym, chart)

# Spec-facing alias.
build_S1_closed = build_s1_closed


def check_cme(action: MasterAction | GradedPolynomial,
              chart: Chart | None = None) -> GradedPolynomial:
    """Exact {S,S}; zero iff the classical master equation holds."""
    if isinstance(action, MasterAction):
        s, chart = action.total, action.chart
    else:
        if chart is None:
            raise ValueError("check_cme needs a chart for a bare polynomial")
        s = action
    return poisson_bracket(s, s, chart)


def check_qme(action: MasterAction | GradedPolynomial,
              chart: Chart | None = None) -> GradedPolynomial:
    """Exact residual (1/2){S,S} - i*hbar*Delta S of the quantum master equation."""
    if isinstance(action, MasterAction):
        s, chart = action.total, action.chart
    else:
        if chart is None:
            raise ValueError("check_qme needs a chart for a bare polynomial")
        s = action
    half = Scalar.from_rational(Fraction(1, 2))
    ihbar = Scalar.i() * Scalar.hbar()
    return half * poisson_bracket(s, s, chart) - ihbar * bv_laplacian(s, chart)


def delta_bv(action: MasterAction | GradedPolynomial, f: GradedPolynomial,
             chart: Chart | None = None) -> GradedPolynomial:
    """Gauge-fixed coboundary operator {S, f} - i*hbar*Delta f."""
    if isinstance(action, MasterAction):
        s, chart = action.total, action.chart
    else:
        if chart is None:
            raise ValueError("delta_bv needs a chart for a bare polynomial")
        s = action
    ihbar = Scalar.i() * Scalar.hbar()
    return poisson_bracket(s, f, chart) - ihbar * bv_laplacian(f, chart)
