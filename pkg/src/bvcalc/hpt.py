"""Finite-basis homological perturbation theory.

Contractions, the Perturbation Lemma, the Koszul contraction for regular
quadratic actions, the open-symmetry CME solver and QME counterterm
solving with anomaly detection.  Everything runs in exact arithmetic on
polynomial-degree-truncated bases; series convergence becomes nilpotence
on the basis or an explicit reported cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .algebra import (GradedPolynomial, Monomial, Signature,
                      _mono_ghost_degree)
from .chart import Chart, bv_laplacian, poisson_bracket
from .linalg import Matrix, Vec, invert, solve_linear, vec_add, vec_scale
from .master import MasterAction, check_qme
from .scalars import Scalar


class HPTError(ValueError):
    pass


class PreconditionError(HPTError):
    """Input violates a stated precondition; carries the exact residual."""

    def __init__(self, message: str, residual: GradedPolynomial | None = None):
        if residual is not None:
            message = f"{message}: {residual}"
        super().__init__(message)
        self.residual = residual


class NonTerminatingSeries(HPTError):
    def __init__(self, order: int, residual_norm: Fraction):
        super().__init__(
            f"series did not terminate within order {order} "
            f"(truncation residual norm {residual_norm})")
        self.order = order
        self.residual_norm = residual_norm


# ---------------------------------------------------------------------------
# bases


class TruncatedBasis:
    """Deterministically ordered monomial basis with bounded weighted degree.

    `weights` assigns a nonnegative degree weight per generator (default 1);
    weight-zero even generators need an explicit cap.  `predicate` filters
    admissible monomials (e.g. a ghost-sector restriction).
    """

    def __init__(self, signature: Signature, max_degree: int,
                 weights: dict[str, int] | None = None,
                 caps: dict[str, int] | None = None,
                 predicate: Callable[[Monomial], bool] | None = None):
        self.signature = signature
        self.max_degree = max_degree
        w = [1] * len(signature)
        for name, value in (weights or {}).items():
            w[signature.index[name]] = value
        cap = [None] * len(signature)
        for name, value in (caps or {}).items():
            cap[signature.index[name]] = value
        self.weights = tuple(w)
        monos: list[Monomial] = []

        def emax(idx: int, budget: int) -> int:
            if signature.parities[idx]:
                top = 1
            elif w[idx] > 0:
                top = budget // w[idx]
            elif cap[idx] is not None:
                top = cap[idx]
            else:
                raise HPTError(
                    f"generator {signature.generators[idx].name!r} has weight 0 "
                    f"and no cap; the basis would be infinite")
            if w[idx] > 0:
                top = min(top, budget // w[idx])
            if cap[idx] is not None:
                top = min(top, cap[idx])
            return top

        def rec(idx: int, budget: int, acc: list[tuple[int, int]]):
            if idx == len(signature):
                m = tuple(acc)
                if predicate is None or predicate(m):
                    monos.append(m)
                return
            rec(idx + 1, budget, acc)
            for e in range(1, emax(idx, budget) + 1):
                acc.append((idx, e))
                rec(idx + 1, budget - w[idx] * e, acc)
                acc.pop()

        rec(0, max_degree, [])
        monos.sort(key=lambda m: (sum(e for _, e in m), m))
        self.monomials = monos
        self.index = {m: k for k, m in enumerate(monos)}

    @property
    def size(self) -> int:
        return len(self.monomials)

    def weighted_degree(self, m: Monomial) -> int:
        return sum(self.weights[i] * e for i, e in m)

    def contains(self, poly: GradedPolynomial) -> bool:
        return all(m in self.index for m in poly.terms)

    def vector(self, poly: GradedPolynomial) -> Vec:
        out: Vec = {}
        for m, c in poly.terms.items():
            k = self.index.get(m)
            if k is None:
                raise HPTError(
                    f"polynomial leaves the truncated basis at monomial "
                    f"{GradedPolynomial(self.signature, {m: Scalar.one()})}")
            out[k] = c
        return out

    def polynomial(self, vec: Vec) -> GradedPolynomial:
        return GradedPolynomial(self.signature,
                                {self.monomials[k]: c for k, c in vec.items()})

    def element(self, k: int) -> GradedPolynomial:
        return GradedPolynomial(self.signature, {self.monomials[k]: Scalar.one()})

    def elements(self) -> Iterable[GradedPolynomial]:
        for k in range(self.size):
            yield self.element(k)

    def ghost_degree(self, k: int) -> int:
        return _mono_ghost_degree(self.monomials[k], self.signature.degrees)

    def sector_indices(self, ghost_degree: int) -> list[int]:
        return [k for k in range(self.size) if self.ghost_degree(k) == ghost_degree]


class RepBasis:
    """Basis of echelonized representative polynomials (cohomology side).

    Each representative has a pivot monomial appearing in no other
    representative, so coordinates are extracted by pivot coefficients.
    """

    def __init__(self, signature: Signature, reps: list[GradedPolynomial],
                 pivots: list[Monomial]):
        self.signature = signature
        self.reps = reps
        self.pivots = pivots

    @property
    def size(self) -> int:
        return len(self.reps)

    def contains(self, poly: GradedPolynomial) -> bool:
        try:
            self.vector(poly)
            return True
        except HPTError:
            return False

    def vector(self, poly: GradedPolynomial) -> Vec:
        out: Vec = {}
        rest = poly
        for k, (rep, piv) in enumerate(zip(self.reps, self.pivots)):
            c = rest.coefficient(piv)
            if not c.is_zero():
                out[k] = c
                rest = rest - rep * c
        if not rest.is_zero():
            raise HPTError(f"polynomial is not in the representative span: {rest}")
        return out

    def polynomial(self, vec: Vec) -> GradedPolynomial:
        out = GradedPolynomial.zero(self.signature)
        for k, c in vec.items():
            out = out + self.reps[k] * c
        return out

    def element(self, k: int) -> GradedPolynomial:
        return self.reps[k]

    def elements(self) -> Iterable[GradedPolynomial]:
        return iter(self.reps)

    def ghost_degree(self, k: int) -> int:
        d = self.reps[k].ghost_degree()
        if d is None:
            raise HPTError("inhomogeneous representative")
        return d

    def sector_indices(self, ghost_degree: int) -> list[int]:
        return [k for k in range(self.size) if self.ghost_degree(k) == ghost_degree]


# ---------------------------------------------------------------------------
# contractions


PolyOp = Callable[[GradedPolynomial], GradedPolynomial]


class Contraction:
    """Contraction data (d_M, d_N, p, iota, h) over explicit bases.

    Maps are held as polynomial operators, as matrices over the bases, or
    both; matrices are materialized lazily from the operators.  Operator
    form is preferred by the solvers because it is not degree-bounded.
    """

    def __init__(self, basis_m, basis_n, *,
                 d_op: PolyOp | None = None, d_n_op: PolyOp | None = None,
                 p_op: PolyOp | None = None, iota_op: PolyOp | None = None,
                 h_op: PolyOp | None = None,
                 matrices: dict[str, Matrix] | None = None,
                 chart: Chart | None = None, description: str = ""):
        self.basis_m = basis_m
        self.basis_n = basis_n
        self.chart = chart
        self.description = description
        self._ops = {"d_m": d_op, "d_n": d_n_op, "p": p_op,
                     "iota": iota_op, "h": h_op}
        self._mats: dict[str, Matrix] = dict(matrices or {})

    @classmethod
    def from_operators(cls, basis_m, basis_n, d_op, p_op, iota_op, h_op,
                       d_n_op=None, chart=None, description="") -> "Contraction":
        if d_n_op is None:
            d_n_op = lambda f: GradedPolynomial.zero(f.signature)
        return cls(basis_m, basis_n, d_op=d_op, d_n_op=d_n_op, p_op=p_op,
                   iota_op=iota_op, h_op=h_op, chart=chart, description=description)

    @classmethod
    def from_matrices(cls, basis_m, basis_n, d_m, d_n, p, iota, h,
                      chart=None, description="") -> "Contraction":
        mats = {"d_m": d_m, "d_n": d_n, "p": p, "iota": iota, "h": h}
        return cls(basis_m, basis_n, matrices=mats, chart=chart,
                   description=description)

    # -- applying maps to polynomials ---------------------------------------

    def _apply(self, name: str, f: GradedPolynomial) -> GradedPolynomial:
        op = self._ops.get(name)
        if op is not None:
            return op(f)
        mat = self._mats[name]
        src = self.basis_n if name in ("iota", "d_n") else self.basis_m
        dst = self.basis_m if name in ("iota", "d_m", "h") else \
            (self.basis_n if name in ("p", "d_n") else self.basis_m)
        return dst.polynomial(mat.apply(src.vector(f)))

    def apply_d(self, f: GradedPolynomial) -> GradedPolynomial:
        return self._apply("d_m", f)

    def apply_d_n(self, f: GradedPolynomial) -> GradedPolynomial:
        return self._apply("d_n", f)

    def apply_p(self, f: GradedPolynomial) -> GradedPolynomial:
        return self._apply("p", f)

    def apply_iota(self, f: GradedPolynomial) -> GradedPolynomial:
        return self._apply("iota", f)

    def apply_h(self, f: GradedPolynomial) -> GradedPolynomial:
        return self._apply("h", f)

    # -- matrices --------------------------------------------------------------

    def _materialize(self, name: str) -> Matrix:
        if name in self._mats:
            return self._mats[name]
        op = self._ops[name]
        if op is None:
            raise HPTError(f"contraction lacks both operator and matrix for {name}")
        src = self.basis_n if name in ("iota", "d_n") else self.basis_m
        dst = self.basis_m if name in ("iota", "d_m", "h") else \
            (self.basis_n if name in ("p", "d_n") else self.basis_m)
        cols = [dst.vector(op(e)) for e in src.elements()]
        mat = Matrix.from_columns(dst.size, cols)
        self._mats[name] = mat
        return mat

    def matrices(self) -> dict[str, Matrix]:
        return {name: self._materialize(name)
                for name in ("d_m", "d_n", "p", "iota", "h")}

    def __repr__(self) -> str:
        tag = f" ({self.description})" if self.description else ""
        return (f"Contraction[M dim {self.basis_m.size}, "
                f"N dim {self.basis_n.size}]{tag}")


@dataclass
class ContractionReport:
    residuals: dict[str, Matrix]

    def is_clean(self) -> bool:
        return all(m.is_zero() for m in self.residuals.values())

    def norms(self) -> dict[str, Fraction]:
        return {k: m.abs_norm() for k, m in self.residuals.items()}

    def __str__(self) -> str:
        if self.is_clean():
            return "contraction axioms: all residuals vanish"
        bad = {k: str(n) for k, n in self.norms().items() if n != 0}
        return f"contraction axiom residual norms: {bad}"


def validate_contraction(c: Contraction) -> ContractionReport:
    """Exact residual matrices for the contraction axioms and side conditions."""
    m = c.matrices()
    d, dn, p, iota, h = m["d_m"], m["d_n"], m["p"], m["iota"], m["h"]
    id_m = Matrix.identity(c.basis_m.size)
    id_n = Matrix.identity(c.basis_n.size)
    residuals = {
        "d_m_squared": d @ d,
        "d_n_squared": dn @ dn,
        "iota_chain_map": d @ iota - iota @ dn,
        "p_chain_map": dn @ p - p @ d,
        "p_iota_identity": p @ iota - id_n,
        "homotopy": iota @ p - id_m - (h @ d + d @ h),
        "h_squared": h @ h,
        "h_iota": h @ iota,
        "p_h": p @ h,
    }
    return ContractionReport(residuals)


def perturb_contraction(c: Contraction, delta: Matrix, order: int = 64) -> Contraction:
    """Perturbation Lemma: transfer d_M + delta across the contraction.

    The geometric series must vanish by nilpotence within `order` steps;
    otherwise the truncation is an error carrying the residual norm.
    """
    m = c.matrices()
    d, dn, p, iota, h = m["d_m"], m["d_n"], m["p"], m["iota"], m["h"]
    d_pert = d + delta
    if not (d_pert @ d_pert).is_zero():
        raise PreconditionError("perturbed differential does not square to zero")

    hd = h @ delta
    # iota~ = sum (h delta)^n iota
    iota_t = iota
    term = iota
    n = 0
    while True:
        term = hd @ term
        if term.is_zero():
            break
        n += 1
        if n > order:
            raise NonTerminatingSeries(order, term.abs_norm())
        iota_t = iota_t + term
    # p~ = sum p (delta h)^n
    p_t = p
    term_p = p
    n = 0
    while True:
        term_p = term_p @ (delta @ h)
        if term_p.is_zero():
            break
        n += 1
        if n > order:
            raise NonTerminatingSeries(order, term_p.abs_norm())
        p_t = p_t + term_p
    # h~ = sum (h delta)^n h
    h_t = h
    term_h = h
    n = 0
    while True:
        term_h = hd @ term_h
        if term_h.is_zero():
            break
        n += 1
        if n > order:
            raise NonTerminatingSeries(order, term_h.abs_norm())
        h_t = h_t + term_h
    # delta~ = sum p delta (h delta)^n iota = p delta iota~
    delta_t = p @ (delta @ iota_t)
    return Contraction.from_matrices(
        c.basis_m, c.basis_n, d_pert, dn + delta_t, p_t, iota_t, h_t,
        chart=c.chart, description=f"perturbed({c.description})")


def transform_inclusion(c: Contraction, b: Matrix) -> Contraction:
    """Gauge-transform a contraction by B: N -> M with pB = 0 and hB = 0.

    Produces iota' = iota + d_M B and h' = h + B p; all axioms survive
    exactly (verified cheaply here).
    """
    m = c.matrices()
    if not (m["p"] @ b).is_zero():
        raise PreconditionError("transform_inclusion needs p o B = 0")
    if not (m["h"] @ b).is_zero():
        raise PreconditionError("transform_inclusion needs h o B = 0")
    iota2 = m["iota"] + m["d_m"] @ b
    h2 = m["h"] + b @ m["p"]
    return Contraction.from_matrices(
        c.basis_m, c.basis_n, m["d_m"], m["d_n"], m["p"], iota2, h2,
        chart=c.chart, description=f"inclusion-shifted({c.description})")


# ---------------------------------------------------------------------------
# Koszul contraction for regular quadratic actions


def _quadratic_form(s0: GradedPolynomial, chart: Chart) -> tuple[list[str], list[list[Fraction]]]:
    sig = s0.signature
    names: list[str] = []
    for m in s0.terms:
        if sum(e for _, e in m) != 2:
            raise PreconditionError(
                "koszul_contraction supports exactly quadratic actions; "
                f"found monomial of degree {sum(e for _, e in m)}")
        for i, _ in m:
            g = sig.generators[i]
            if g.ghost_degree != 0 or chart.is_anti(g.name):
                raise PreconditionError(
                    f"quadratic action must live on degree-0 body coordinates, "
                    f"found {g.name}")
            if g.name not in names:
                names.append(g.name)
    names.sort(key=lambda n: sig.index[n])
    n = len(names)
    if n == 0:
        raise PreconditionError("action is identically zero; no Koszul directions")
    a = [[Fraction(0)] * n for _ in range(n)]
    for r, ni in enumerate(names):
        for s, nj in enumerate(names):
            d2 = s0.derive(ni, "left").derive(nj, "left")
            c = d2.constant_term()
            re, im = c.as_gauss()
            if im != 0:
                raise PreconditionError("quadratic form must be real rational")
            a[s][r] = re
    return names, a


def _fraction_inverse(a: list[list[Fraction]]) -> list[list[Fraction]]:
    n = len(a)
    mat = Matrix.from_rows([[Scalar.from_rational(v) for v in row] for row in a])
    try:
        inv = invert(mat)
    except ValueError:
        raise PreconditionError("degenerate Hessian: quadratic form not invertible")
    out = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            re, im = inv.entry(i, j).as_gauss()
            out[i][j] = re
    return out


def koszul_contraction(s0: GradedPolynomial, chart: Chart,
                       n_poly: int) -> Contraction:
    """Contraction of (C^inf truncated, {S0,.}) onto its cohomology.

    Requires S0 = (1/2) A_ij x^i x^j with invertible A over the coordinates
    it touches; the projection evaluates those coordinates and their
    anti-coordinates at zero, and the homotopy is the weight-normalized
    Koszul operator -(1/w) x+_i (A^-1)^{ij} d/dx^j.
    """
    chart._check(s0)
    names, a = _quadratic_form(s0, chart)
    a_inv = _fraction_inverse(a)
    sig = chart.signature
    anti_names = [chart.anti_of(x) for x in names]
    koszul_idx = {sig.index[x] for x in names} | {sig.index[x] for x in anti_names}
    anti_vars = [GradedPolynomial.var(sig, x) for x in anti_names]
    zero_bindings = {x: GradedPolynomial.zero(sig) for x in names + anti_names}

    def weight(m: Monomial) -> int:
        return sum(e for i, e in m if i in koszul_idx)

    def d_op(f: GradedPolynomial) -> GradedPolynomial:
        return poisson_bracket(s0, f, chart)

    def h_op(f: GradedPolynomial) -> GradedPolynomial:
        out = GradedPolynomial.zero(sig)
        by_weight: dict[int, GradedPolynomial] = {}
        for m, c in f.terms.items():
            w = weight(m)
            if w == 0:
                continue
            part = by_weight.setdefault(w, GradedPolynomial.zero(sig))
            by_weight[w] = part + GradedPolynomial(sig, {m: c})
        for w, part in by_weight.items():
            acc = GradedPolynomial.zero(sig)
            for j, xj in enumerate(names):
                dpart = part.derive(xj, "left")
                if dpart.is_zero():
                    continue
                for i in range(len(names)):
                    if a_inv[i][j] == 0:
                        continue
                    acc = acc + anti_vars[i] * dpart * Scalar.from_rational(a_inv[i][j])
            out = out + acc * Scalar.from_rational(Fraction(-1, w))
        return out

    def p_op(f: GradedPolynomial) -> GradedPolynomial:
        return f.substitute(zero_bindings)

    def iota_op(f: GradedPolynomial) -> GradedPolynomial:
        return f

    basis_m = TruncatedBasis(sig, n_poly)
    basis_n = TruncatedBasis(sig, n_poly,
                             predicate=lambda m: all(i not in koszul_idx for i, _ in m))
    return Contraction.from_operators(basis_m, basis_n, d_op, p_op, iota_op, h_op,
                                      chart=chart, description="koszul")


# ---------------------------------------------------------------------------
# generic contraction of a finite graded complex


def cohomology_contraction(basis: TruncatedBasis, d_op: PolyOp,
                           sector_key: Callable[[Monomial], object] | None = None,
                           chart: Chart | None = None) -> Contraction:
    """Split a finite complex (basis, d) into H + im(d) + complement.

    `sector_key` names a d-invariant grading (besides ghost degree) used to
    block the exact linear algebra; pivoting is deterministic in basis
    order.  Returns a contraction onto echelonized representatives.
    """
    sig = basis.signature
    d_mat = Matrix.from_columns(
        basis.size, [basis.vector(d_op(e)) for e in basis.elements()])
    if not (d_mat @ d_mat).is_zero():
        raise PreconditionError("differential does not square to zero on the basis")

    def key(k: int):
        m = basis.monomials[k]
        base = sector_key(m) if sector_key is not None else 0
        return (base, _mono_ghost_degree(m, sig.degrees))

    sectors: dict[object, dict[int, list[int]]] = {}
    for k in range(basis.size):
        base, g = key(k)
        sectors.setdefault(base, {}).setdefault(g, []).append(k)

    # verify d respects the block structure
    for j, col in enumerate(d_mat.cols):
        bj, gj = key(j)
        for i in col:
            bi, gi = key(i)
            if bi != bj or gi != gj + 1:
                raise PreconditionError(
                    "sector_key is not invariant under the differential")

    p_cols: dict[int, Vec] = {}
    h_cols: dict[int, Vec] = {}
    reps: list[GradedPolynomial] = []
    pivots: list[Monomial] = []
    iota_cols: list[Vec] = []

    def local(vec: Vec, idxs: list[int]) -> Vec:
        pos = {g: t for t, g in enumerate(idxs)}
        return {pos[i]: v for i, v in vec.items() if i in pos}

    def unlocal(vec: Vec, idxs: list[int]) -> Vec:
        return {idxs[t]: v for t, v in vec.items()}

    for base in sorted(sectors, key=repr):
        levels = sectors[base]
        gs = sorted(levels)
        # per level: echelon image data coming from below, with preimages
        im_below: dict[int, list[tuple[Vec, Vec, int]]] = {}  # g -> [(img, pre, pivot)]
        for g in gs + [gs[-1] + 1]:
            idxs = levels.get(g, [])
            img_data = im_below.get(g, [])
            # reduce d on this level: images live in level g+1
            next_imgs: list[tuple[Vec, Vec, int]] = []
            kernel: list[Vec] = []
            for t, k in enumerate(idxs):
                v = d_mat.cols[k]
                pre: Vec = {k: Scalar.one()}
                for img, ipre, piv in next_imgs:
                    cpiv = v.get(piv)
                    if cpiv is not None:
                        v = vec_add(v, vec_scale(img, -cpiv))
                        pre = vec_add(pre, vec_scale(ipre, -cpiv))
                if v:
                    piv = min(v)
                    inv = v[piv].inverse()
                    next_imgs.append((vec_scale(v, inv), vec_scale(pre, inv), piv))
                else:
                    kernel.append(pre)
            if idxs:
                im_below[g + 1] = next_imgs
                # representatives: kernel vectors reduced against the image from below
                local_reps: list[tuple[Vec, int]] = []
                for kv in kernel:
                    v = kv
                    for img, _pre, piv in img_data:
                        cpiv = v.get(piv)
                        if cpiv is not None:
                            v = vec_add(v, vec_scale(img, -cpiv))
                    for rv, piv in local_reps:
                        cpiv = v.get(piv)
                        if cpiv is not None:
                            v = vec_add(v, vec_scale(rv, -cpiv))
                    if v:
                        piv = min(v)
                        local_reps.append((vec_scale(v, v[piv].inverse()), piv))
                # assemble the local decomposition: columns [imgs | reps | pres]
                img_vecs = [img for img, _p, _v in img_data]
                pre_vecs = [pre for _i, pre, _v in next_imgs]
                cols = img_vecs + [rv for rv, _ in local_reps] + pre_vecs
                if len(cols) != len(idxs):
                    raise HPTError("internal decomposition dimension mismatch")
                if cols:
                    t_mat = Matrix.from_columns(basis.size, cols)
                    t_local = Matrix.from_columns(
                        len(idxs), [local(c, idxs) for c in t_mat.cols])
                    t_inv = invert(t_local)
                    n_img = len(img_vecs)
                    n_rep = len(local_reps)
                    rep_offset = len(reps)
                    for rv, piv in local_reps:
                        reps.append(basis.polynomial(rv))
                        pivots.append(basis.monomials[piv])
                        iota_cols.append(rv)
                    pre_of_img = [_pre for _img, _pre, _v in img_data]
                    for t, k in enumerate(idxs):
                        coords = t_inv.apply({t: Scalar.one()})
                        pvec: Vec = {}
                        hvec: Vec = {}
                        for r, cval in coords.items():
                            if r < n_img:
                                # h = -(preimage of the image component)
                                hvec = vec_add(hvec, vec_scale(pre_of_img[r], -cval))
                            elif r < n_img + n_rep:
                                pvec[rep_offset + (r - n_img)] = cval
                        if pvec:
                            p_cols[k] = pvec
                        if hvec:
                            h_cols[k] = hvec

    n_basis = RepBasis(sig, reps, pivots)
    p_mat = Matrix(n_basis.size, basis.size,
                   [p_cols.get(k, {}) for k in range(basis.size)])
    h_mat = Matrix(basis.size, basis.size,
                   [h_cols.get(k, {}) for k in range(basis.size)])
    iota_mat = Matrix.from_columns(basis.size, iota_cols)
    d_n = Matrix.zeros(n_basis.size, n_basis.size)
    return Contraction.from_matrices(basis, n_basis, d_mat, d_n, p_mat,
                                     iota_mat, h_mat, chart=chart,
                                     description="cohomology-split")


# ---------------------------------------------------------------------------
# BRST operator and the open-symmetry CME solver


@dataclass
class ObstructionReport:
    """A cohomology class blocking a solver, with the order where it appears."""

    order: int
    representative: GradedPolynomial
    solvable: bool = False
    context: str = ""

    def __str__(self) -> str:
        return (f"obstruction at order {self.order} ({self.context}): "
                f"class representative {self.representative}")


def brst_operator(c: Contraction, s1: GradedPolynomial) -> Matrix:
    """Matrix of p {S1, .} iota on the cohomology basis."""
    if c.chart is None:
        raise HPTError("contraction carries no chart; cannot form brackets")
    cols = []
    for n in c.basis_n.elements():
        image = poisson_bracket(s1, c.apply_iota(n), c.chart)
        cols.append(c.basis_n.vector(c.apply_p(image)))
    return Matrix.from_columns(c.basis_n.size, cols)


def _adapt_contraction_for(c: Contraction, s1: GradedPolynomial,
                           hs1: GradedPolynomial,
                           ps1: GradedPolynomial) -> Contraction:
    """Shift the inclusion so that h(S1) = 0 while keeping all axioms.

    Uses B(n) = -lambda(n) h(S1) with lambda the pivot-coefficient
    functional normalized on p(S1); pB = hB = 0 hold automatically from
    the side conditions p h = 0 and h^2 = 0.
    """
    vec = c.basis_n.vector(ps1)
    pivot_index = min(vec)
    pivot_coeff = vec[pivot_index]
    scale = pivot_coeff.inverse()

    def b_op(n: GradedPolynomial) -> GradedPolynomial:
        lam = c.basis_n.vector(n).get(pivot_index, Scalar.zero()) * scale
        return -(hs1 * lam)

    base_iota, base_h, base_p, base_d = (c.apply_iota, c.apply_h,
                                         c.apply_p, c.apply_d)

    def iota_op(n: GradedPolynomial) -> GradedPolynomial:
        return base_iota(n) + base_d(b_op(n))

    def h_op(f: GradedPolynomial) -> GradedPolynomial:
        return base_h(f) + b_op(base_p(f))

    d_n_op = (lambda f: c.apply_d_n(f))
    return Contraction.from_operators(
        c.basis_m, c.basis_n, base_d, base_p, iota_op, h_op, d_n_op=d_n_op,
        chart=c.chart, description=f"adapted({c.description})")


@dataclass
class OpenCMEResult:
    action: MasterAction
    adapted_contraction: bool
    orders_used: int
    t_terms: dict[int, GradedPolynomial] = field(default_factory=dict)


def solve_open_cme(s0: GradedPolynomial, s1_candidate: GradedPolynomial,
                   c: Contraction | None, chart: Chart,
                   max_order: int = 8) -> OpenCMEResult | ObstructionReport:
    """Extend S0 + S1 to an exact CME solution order by order in anti-fields.

    S_k = (1/k!) h(T_k) with T_k = (k!/2) sum_{i+j=k} {S_i, S_j}; each order
    enforces p(T_k) = 0, spending the freedom of adding d0-closed terms by
    solving the linear BRST equation at ghost degree one.  The returned
    action satisfies {S,S} = 0 as an exact polynomial identity, verified
    against the independent check_cme oracle.
    """
    residual = poisson_bracket(s0, s1_candidate, chart)
    if not residual.is_zero():
        raise PreconditionError("delta0(S1) != 0", residual)
    s1 = s1_candidate
    layers: dict[int, GradedPolynomial] = {1: s1}
    t_terms: dict[int, GradedPolynomial] = {}
    adapted = False

    def total() -> GradedPolynomial:
        out = s0
        for v in layers.values():
            out = out + v
        return out

    t2 = poisson_bracket(s1, s1, chart)
    if t2.is_zero():
        action = MasterAction(total(), chart, [s0] + [layers[k] for k in sorted(layers)])
        return OpenCMEResult(action, False, 1, {})

    if c is None:
        raise PreconditionError(
            "{S1,S1} != 0: a contraction over delta0 is required")

    # enforce h(S1) = 0
    hs1 = c.apply_h(s1)
    if not hs1.is_zero():
        ps1 = c.apply_p(s1)
        if ps1.is_zero():
            # S1 is delta0-exact: the canonical replacement strips it
            s1 = s1 + c.apply_d(hs1)
            layers[1] = s1
            t2 = poisson_bracket(s1, s1, chart)
            if t2.is_zero():
                action = MasterAction(total(), chart,
                                      [s0] + [layers[k] for k in sorted(layers)])
                return OpenCMEResult(action, False, 1, {})
            hs1 = c.apply_h(s1)
            if not hs1.is_zero():
                raise PreconditionError("h(S1) = 0 could not be enforced", hs1)
        else:
            c = _adapt_contraction_for(c, s1, hs1, ps1)
            adapted = True
            check = c.apply_h(s1)
            if not check.is_zero():
                raise PreconditionError("h(S1) = 0 could not be enforced", check)

    # BRST solve data, assembled lazily
    brst_mat: Matrix | None = None
    ghost0: list[int] = []

    def brst_solve(rhs: GradedPolynomial) -> GradedPolynomial | None:
        nonlocal brst_mat, ghost0
        if brst_mat is None:
            ghost0 = c.basis_n.sector_indices(0)
            cols = []
            for k in ghost0:
                n = c.basis_n.element(k)
                cols.append(c.basis_n.vector(
                    c.apply_p(poisson_bracket(s1, c.apply_iota(n), chart))))
            brst_mat = Matrix.from_columns(c.basis_n.size, cols)
        try:
            rhs_vec = c.basis_n.vector(rhs)
        except HPTError:
            return None
        sol = solve_linear(brst_mat, rhs_vec)
        if sol is None:
            return None
        out = GradedPolynomial.zero(s0.signature)
        for j, v in sol.items():
            out = out + c.basis_n.element(ghost0[j]) * v
        return out

    for k in range(2, max_order + 1):
        fact = Scalar.from_rational(Fraction(math.factorial(k), 2))
        u_k = GradedPolynomial.zero(s0.signature)
        for i in range(1, k):
            j = k - i
            if i in layers and j in layers:
                u_k = u_k + poisson_bracket(layers[i], layers[j], chart)
        t_k = fact * u_k
        t_terms[k] = t_k
        if t_k.is_zero():
            layers[k] = GradedPolynomial.zero(s0.signature)
        else:
            p_tk = c.apply_p(t_k)
            if not p_tk.is_zero():
                if k == 2:
                    raise PreconditionError(
                        "{S1,S1} is not delta0-exact; its shell class is", p_tk)
                # adjust S_{k-1} by an iota-lifted solution of the BRST equation
                target = -(p_tk * Scalar.from_rational(
                    Fraction(1, math.factorial(k))))
                g = brst_solve(target)
                if g is None:
                    return ObstructionReport(k, p_tk, solvable=False,
                                             context="open-cme")
                layers[k - 1] = layers[k - 1] + c.apply_iota(g)
                u_k = GradedPolynomial.zero(s0.signature)
                for i in range(1, k):
                    j = k - i
                    u_k = u_k + poisson_bracket(layers[i], layers[j], chart)
                t_k = fact * u_k
                t_terms[k] = t_k
                if not c.apply_p(t_k).is_zero():
                    return ObstructionReport(k, c.apply_p(t_k), solvable=False,
                                             context="open-cme")
            s_k = c.apply_h(t_k) * Scalar.from_rational(
                Fraction(1, math.factorial(k)))
            # exactness guard: h must invert delta0 on this input
            back = poisson_bracket(s0, s_k, chart) + t_k * Scalar.from_rational(
                Fraction(1, math.factorial(k)))
            if not back.is_zero():
                raise HPTError(
                    f"homotopy failed to invert delta0 at order {k}; "
                    f"residual {back}")
            layers[k] = s_k
        cme = poisson_bracket(total(), total(), chart)
        if cme.is_zero():
            ordered = [s0] + [layers[j] for j in sorted(layers)]
            action = MasterAction(total(), chart, ordered)
            return OpenCMEResult(action, adapted, k, t_terms)
    raise NonTerminatingSeries(max_order,
                               poisson_bracket(total(), total(), chart).abs_norm())


# ---------------------------------------------------------------------------
# QME counterterms and anomalies


@dataclass
class QMEResult:
    action: MasterAction
    counterterms: list[GradedPolynomial]
    orders_used: int


def solve_qme_counterterms(action: MasterAction, chart: Chart | None = None,
                           c: Contraction | None = None, max_order: int = 4,
                           max_degree: int | None = None
                           ) -> QMEResult | ObstructionReport:
    """Add hbar-counterterms S = S~ + sum (i hbar)^n T_n solving the QME.

    Each order is an exact linear solve of {S~, T_n} = Delta T_{n-1}
    - (1/2) sum {T_i, T_j} over the degree-truncated basis; an unsolvable
    order returns the obstruction class (the anomaly).
    """
    chart = chart or action.chart
    s_tilde = action.total
    cme = poisson_bracket(s_tilde, s_tilde, chart)
    if not cme.is_zero():
        raise PreconditionError("CME violated; solve the CME first", cme)
    if max_degree is None:
        max_degree = c.basis_m.max_degree if c is not None else 6
    sig = s_tilde.signature

    r1 = bv_laplacian(s_tilde, chart)
    if r1.is_zero():
        return QMEResult(action, [], 0)

    candidates = TruncatedBasis(sig, max_degree) if c is None else c.basis_m
    ghost0 = candidates.sector_indices(0)

    # matrix of {S~, .} on ghost-degree-0 candidates, with a dynamic codomain
    codomain_index: dict[Monomial, int] = {}

    def codomain_vector(poly: GradedPolynomial) -> Vec:
        out: Vec = {}
        for m, coeff in poly.terms.items():
            idx = codomain_index.setdefault(m, len(codomain_index))
            out[idx] = coeff
        return out

    images = []
    for k in ghost0:
        images.append(poisson_bracket(s_tilde, candidates.element(k), chart))
    image_vecs = [codomain_vector(f) for f in images]

    t_terms: dict[int, GradedPolynomial] = {0: s_tilde}
    half = Scalar.from_rational(Fraction(1, 2))
    for n in range(1, max_order + 1):
        rhs = bv_laplacian(t_terms[n - 1], chart)
        for i in range(1, n):
            j = n - i
            if i in t_terms and j in t_terms:
                rhs = rhs - half * poisson_bracket(t_terms[i], t_terms[j], chart)
        closed = poisson_bracket(s_tilde, rhs, chart)
        if not closed.is_zero():
            raise HPTError(f"order-{n} right-hand side is not closed: {closed}")
        if rhs.is_zero():
            t_terms[n] = GradedPolynomial.zero(sig)
        else:
            rhs_vec = {}
            unknown = False
            for m, coeff in rhs.terms.items():
                idx = codomain_index.get(m)
                if idx is None:
                    unknown = True
                    break
                rhs_vec[idx] = coeff
            sol = None
            if not unknown:
                mat = Matrix(len(codomain_index), len(ghost0),
                             [dict(v) for v in image_vecs])
                sol = solve_linear(mat, rhs_vec)
            if sol is None:
                return ObstructionReport(n, rhs, solvable=False, context="qme")
            t_n = GradedPolynomial.zero(sig)
            for j, v in sol.items():
                t_n = t_n + candidates.element(ghost0[j]) * v
            t_terms[n] = t_n
        # assemble and test for early exact termination
        s_total = s_tilde
        ihbar = Scalar.i() * Scalar.hbar()
        for m_ord in range(1, n + 1):
            s_total = s_total + (ihbar ** m_ord) * t_terms[m_ord]
        qme = check_qme(s_total, chart)
        if qme.is_zero():
            counterterms = [t_terms[m_ord] for m_ord in range(1, n + 1)]
            return QMEResult(MasterAction(s_total, chart), counterterms, n)
    # verified only modulo hbar^{max_order+1}
    s_total = s_tilde
    ihbar = Scalar.i() * Scalar.hbar()
    for m_ord in range(1, max_order + 1):
        s_total = s_total + (ihbar ** m_ord) * t_terms[m_ord]
    counterterms = [t_terms[m_ord] for m_ord in range(1, max_order + 1)]
    return QMEResult(MasterAction(s_total, chart), counterterms, max_order)
