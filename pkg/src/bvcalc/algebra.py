"""Sparse exact graded-commutative polynomial algebra on named generators.

Generators carry an integer ghost degree; parity (= ghost degree mod 2)
drives all Koszul signs.  Monomials are kept in a canonical order (the
signature declaration order) with the reordering sign absorbed into the
coefficient at normalization time, so equality of polynomials is plain
dict equality.

Odd generators square to zero and never carry an exponent above one.
Coefficients live in the exact ring of `scalars.Scalar`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Union

from .scalars import Scalar

# A monomial is a sorted tuple of (generator index, exponent >= 1) pairs.
Monomial = tuple[tuple[int, int], ...]

EMPTY_MONOMIAL: Monomial = ()

RESERVED_NAMES = frozenset({"i", "hbar"})

CoefficientLike = Union[Scalar, int, Fraction]


class SignatureMismatch(ValueError):
    """Raised when operands belong to different algebra signatures."""


@dataclass(frozen=True)
class Generator:
    name: str
    ghost_degree: int

    @property
    def parity(self) -> int:
        return self.ghost_degree & 1

    def __str__(self) -> str:
        return self.name


class Signature:
    """Ordered set of generators fixing the canonical monomial order."""

    def __init__(self, generators: Iterable[Generator]):
        gens = tuple(generators)
        names = [g.name for g in gens]
        if len(set(names)) != len(names):
            raise ValueError("generator names must be unique within a signature")
        bad = RESERVED_NAMES.intersection(names)
        if bad:
            raise ValueError(f"generator names {sorted(bad)} are reserved")
        self.generators = gens
        self.index = {g.name: k for k, g in enumerate(gens)}
        self.degrees = tuple(g.ghost_degree for g in gens)
        self.parities = tuple(g.parity for g in gens)

    def __len__(self) -> int:
        return len(self.generators)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Signature):
            return NotImplemented
        return self is other or self.generators == other.generators

    def __hash__(self) -> int:
        return hash(self.generators)

    def __repr__(self) -> str:
        gens = ", ".join(f"{g.name}:{g.ghost_degree}" for g in self.generators)
        return f"Signature({gens})"

    def generator(self, name: str) -> Generator:
        try:
            return self.generators[self.index[name]]
        except KeyError:
            raise KeyError(f"unknown generator {name!r}") from None


def _mono_mul(m1: Monomial, m2: Monomial, parities: tuple[int, ...]):
    """Merge two canonical monomials; returns (monomial, sign) or (None, 0)."""
    if not m1:
        return m2, 1
    if not m2:
        return m1, 1
    odd1 = [i for i, _ in m1 if parities[i]]
    sign = 1
    merged = dict(m1)
    for i, e in m2:
        if parities[i]:
            if i in merged:
                return None, 0  # odd generator squared
            # Koszul sign: move past the odd factors of m1 with larger index
            passed = sum(1 for j in odd1 if j > i)
            if passed & 1:
                sign = -sign
        merged[i] = merged.get(i, 0) + e
    mono = tuple(sorted(merged.items()))
    return mono, sign


def _mono_ghost_degree(m: Monomial, degrees: tuple[int, ...]) -> int:
    return sum(degrees[i] * e for i, e in m)


def _mono_parity(m: Monomial, parities: tuple[int, ...]) -> int:
    return sum(parities[i] * e for i, e in m) & 1


def _mono_poly_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


class GradedPolynomial:
    """Finite map monomial -> Scalar over a fixed signature."""

    __slots__ = ("signature", "terms")

    def __init__(self, signature: Signature, terms: Mapping[Monomial, Scalar] | None = None):
        self.signature = signature
        t: dict[Monomial, Scalar] = {}
        if terms:
            for m, c in terms.items():
                if not c.is_zero():
                    t[m] = c
        self.terms = t

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, signature: Signature) -> "GradedPolynomial":
        return cls(signature)

    @classmethod
    def constant(cls, signature: Signature, value: CoefficientLike) -> "GradedPolynomial":
        return cls(signature, {EMPTY_MONOMIAL: Scalar.coerce(value)})

    @classmethod
    def var(cls, signature: Signature, name: str) -> "GradedPolynomial":
        idx = signature.index[name]
        return cls(signature, {((idx, 1),): Scalar.one()})

    # -- basic queries -------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def ghost_degree(self) -> int | None:
        """Common ghost degree, or None if inhomogeneous (zero counts as any)."""
        degs = {_mono_ghost_degree(m, self.signature.degrees) for m in self.terms}
        if not degs:
            return 0
        if len(degs) > 1:
            return None
        return degs.pop()

    def is_homogeneous(self) -> bool:
        return len({_mono_ghost_degree(m, self.signature.degrees) for m in self.terms}) <= 1

    def parity(self) -> int | None:
        pars = {_mono_parity(m, self.signature.parities) for m in self.terms}
        if not pars:
            return 0
        if len(pars) > 1:
            return None
        return pars.pop()

    def poly_degree(self) -> int:
        return max((_mono_poly_degree(m) for m in self.terms), default=0)

    def coefficient(self, mono: Monomial) -> Scalar:
        return self.terms.get(mono, Scalar.zero())

    def constant_term(self) -> Scalar:
        return self.terms.get(EMPTY_MONOMIAL, Scalar.zero())

    def depends_on(self, name: str) -> bool:
        idx = self.signature.index[name]
        return any(i == idx for m in self.terms for i, _ in m)

    def ghost_component(self, degree: int) -> "GradedPolynomial":
        degs = self.signature.degrees
        return GradedPolynomial(self.signature, {
            m: c for m, c in self.terms.items()
            if _mono_ghost_degree(m, degs) == degree})

    def abs_norm(self) -> Fraction:
        return sum((c.abs_norm() for c in self.terms.values()), Fraction(0))

    def _check_same_signature(self, other: "GradedPolynomial") -> None:
        if self.signature != other.signature:
            raise SignatureMismatch(
                f"operands live on different signatures: "
                f"{self.signature!r} vs {other.signature!r}")

    # -- ring operations -------------------------------------------------------

    def _coerce(self, other) -> "GradedPolynomial | None":
        if isinstance(other, GradedPolynomial):
            self._check_same_signature(other)
            return other
        if isinstance(other, (int, Fraction, Scalar)):
            return GradedPolynomial.constant(self.signature, other)
        return None

    def __add__(self, other) -> "GradedPolynomial":
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        t = dict(self.terms)
        for m, c in other.terms.items():
            t[m] = t.get(m, Scalar.zero()) + c
        return GradedPolynomial(self.signature, t)

    __radd__ = __add__

    def __neg__(self) -> "GradedPolynomial":
        return GradedPolynomial(self.signature, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "GradedPolynomial":
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "GradedPolynomial":
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other) -> "GradedPolynomial":
        if isinstance(other, (int, Fraction, Scalar)):
            s = Scalar.coerce(other)
            return GradedPolynomial(self.signature,
                                    {m: c * s for m, c in self.terms.items()})
        if not isinstance(other, GradedPolynomial):
            return NotImplemented
        self._check_same_signature(other)
        parities = self.signature.parities
        t: dict[Monomial, Scalar] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono, sign = _mono_mul(m1, m2, parities)
                if mono is None:
                    continue
                c = c1 * c2
                if sign < 0:
                    c = -c
                if mono in t:
                    t[mono] = t[mono] + c
                else:
                    t[mono] = c
        return GradedPolynomial(self.signature, t)

    def __rmul__(self, other) -> "GradedPolynomial":
        if isinstance(other, (int, Fraction, Scalar)):
            return self.__mul__(other)
        return NotImplemented

    def __pow__(self, n: int) -> "GradedPolynomial":
        if n < 0:
            raise ValueError("negative polynomial powers are not defined")
        out = GradedPolynomial.constant(self.signature, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction, Scalar)):
            other = GradedPolynomial.constant(self.signature, other)
        if not isinstance(other, GradedPolynomial):
            return NotImplemented
        return self.signature == other.signature and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.signature, frozenset(self.terms.items())))

    # -- calculus ------------------------------------------------------------

    def derive(self, name: str, side: str = "left") -> "GradedPolynomial":
        """Graded derivative with respect to a generator.

        The left derivative obeys the graded Leibniz rule with the sign
        (-1)^{|v||f|} for passing a prefix f; the right derivative differs
        by (-1)^{|v|(|m|+1)} on a monomial of parity |m|.
        """
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        sig = self.signature
        if name not in sig.index:
            raise KeyError(f"unknown generator {name!r}")
        v = sig.index[name]
        v_par = sig.parities[v]
        parities = sig.parities
        t: dict[Monomial, Scalar] = {}
        for m, c in self.terms.items():
            prefix_par = 0
            for pos, (g, e) in enumerate(m):
                if g == v:
                    if v_par:
                        sign = -1 if (prefix_par & 1) else 1
                        new_c = -c if sign < 0 else c
                        new_m = m[:pos] + m[pos + 1:]
                    else:
                        new_c = c * e
                        new_m = m[:pos] + (((g, e - 1),) if e > 1 else ()) + m[pos + 1:]
                    if side == "right":
                        m_par = _mono_parity(m, parities)
                        if v_par and not (m_par & 1):  # (-1)^{|v|(|m|+1)}
                            new_c = -new_c
                    if new_m in t:
                        t[new_m] = t[new_m] + new_c
                    else:
                        t[new_m] = new_c
                    break  # each generator appears in one factor
                prefix_par += parities[g] * e
        return GradedPolynomial(sig, t)

    def substitute(self, bindings: Mapping[str, "GradedPolynomial"]) -> "GradedPolynomial":
        """Graded algebra homomorphism sending each bound generator to its value.

        Every binding value must be homogeneous of the generator's ghost
        degree (zero is allowed), which keeps all Koszul signs consistent.
        """
        sig = self.signature
        images: dict[int, GradedPolynomial] = {}
        for name, value in bindings.items():
            idx = sig.index[name]
            if value.signature != sig:
                raise SignatureMismatch("binding value on a different signature")
            vdeg = value.ghost_degree()
            if not value.is_zero() and vdeg != sig.degrees[idx]:
                raise ValueError(
                    f"binding for {name!r} has ghost degree {vdeg}, "
                    f"expected {sig.degrees[idx]}")
            images[idx] = value
        if not images:
            return self
        out = GradedPolynomial.zero(sig)
        for m, c in self.terms.items():
            term = GradedPolynomial.constant(sig, c)
            for g, e in m:
                if g in images:
                    factor = images[g] ** e
                else:
                    factor = GradedPolynomial(sig, {((g, e),): Scalar.one()})
                term = term * factor
                if term.is_zero():
                    break
            out = out + term
        return out

    def evaluate(self, point: Mapping[str, Scalar], hbar=None):
        """Evaluate at a purely even, numeric-coefficient point (all odd -> 0)."""
        total = Scalar.zero()
        sig = self.signature
        for m, c in self.terms.items():
            val = c
            ok = True
            for g, e in m:
                name = sig.generators[g].name
                if name not in point:
                    ok = False
                    break
                val = val * (point[name] ** e)
            if ok:
                total = total + val
        return total if hbar is None else total.evaluate(hbar)

    # -- rendering --------------------------------------------------------------

    def _sorted_monomials(self) -> list[Monomial]:
        # graded then lexicographic: deterministic, stable across runs
        def key(m: Monomial):
            return (_mono_ghost_degree(m, self.signature.degrees),
                    _mono_poly_degree(m), m)
        return sorted(self.terms, key=key)

    def monomial_string(self, m: Monomial) -> str:
        if not m:
            return "1"
        parts = []
        for i, e in m:
            name = self.signature.generators[i].name
            parts.append(name if e == 1 else f"{name}^{e}")
        return "*".join(parts)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for m in self._sorted_monomials():
            c = self.terms[m]
            cs = str(c)
            ms = self.monomial_string(m)
            if m == EMPTY_MONOMIAL:
                chunk = cs if ("+" not in cs[1:] and "-" not in cs[1:]) else f"({cs})"
            elif cs == "1":
                chunk = ms
            elif cs == "-1":
                chunk = f"-{ms}"
            elif ("+" in cs[1:]) or ("-" in cs[1:]) or ("*" in cs):
                chunk = f"({cs})*{ms}"
            else:
                chunk = f"{cs}*{ms}"
            chunks.append(chunk)
        out = chunks[0]
        for ch in chunks[1:]:
            out += f" - {ch[1:]}" if ch.startswith("-") else f" + {ch}"
        return out

    def __repr__(self) -> str:
        return f"GradedPolynomial({self})"


def ghost_degree(f: GradedPolynomial) -> int | None:
    """Common ghost degree of f, or None when inhomogeneous."""
    return f.ghost_degree()
