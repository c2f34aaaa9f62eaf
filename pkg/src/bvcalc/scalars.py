"""Exact coefficient arithmetic: Gaussian rationals with Laurent hbar powers.

A Scalar is a finite sum  sum_k (a_k + b_k*i) * hbar^k  with a_k, b_k
rational and k any integer.  This is the coefficient ring of the whole
symbolic layer: everything stays exact, floats never enter here.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

# A Gaussian rational is stored as a (real, imag) pair of Fractions.
_Gauss = tuple[Fraction, Fraction]

_ZERO = Fraction(0)
_ONE = Fraction(1)

RationalLike = Union[int, Fraction]


def _gauss_mul(a: _Gauss, b: _Gauss) -> _Gauss:
    ar, ai = a
    br, bi = b
    return (ar * br - ai * bi, ar * bi + ai * br)


def _gauss_inv(a: _Gauss) -> _Gauss:
    ar, ai = a
    n = ar * ar + ai * ai
    if n == 0:
        raise ZeroDivisionError("inverse of zero Gaussian rational")
    return (ar / n, -ai / n)


class Scalar:
    """Immutable element of Q(i)[hbar, hbar^-1]."""

    __slots__ = ("_c",)

    def __init__(self, coeffs: dict[int, _Gauss] | None = None):
        # internal: hbar power -> (re, im), zero entries dropped
        c = {}
        if coeffs:
            for k, (re, im) in coeffs.items():
                if re or im:
                    c[k] = (re, im)
        self._c = c

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_rational(cls, value: RationalLike, imag: RationalLike = 0,
                      hbar_power: int = 0) -> "Scalar":
        re, im = Fraction(value), Fraction(imag)
        return cls({hbar_power: (re, im)})

    @classmethod
    def zero(cls) -> "Scalar":
        return _SCALAR_ZERO

    @classmethod
    def one(cls) -> "Scalar":
        return _SCALAR_ONE

    @classmethod
    def i(cls) -> "Scalar":
        return _SCALAR_I

    @classmethod
    def hbar(cls, power: int = 1) -> "Scalar":
        return cls({power: (_ONE, _ZERO)})

    @classmethod
    def coerce(cls, value: "Scalar | RationalLike") -> "Scalar":
        if isinstance(value, Scalar):
            return value
        return cls.from_rational(value)

    # -- queries ---------------------------------------------------------

    def is_zero(self) -> bool:
        return not self._c

    def is_hbar_free(self) -> bool:
        return all(k == 0 for k in self._c)

    def hbar_powers(self) -> list[int]:
        return sorted(self._c)

    def coefficient(self, hbar_power: int) -> _Gauss:
        return self._c.get(hbar_power, (_ZERO, _ZERO))

    def as_gauss(self) -> _Gauss:
        """The (re, im) pair of an hbar-free scalar."""
        if not self._c:
            return (_ZERO, _ZERO)
        if not self.is_hbar_free():
            raise ValueError(f"scalar {self} depends on hbar")
        return self._c[0]

    def is_monomial(self) -> bool:
        return len(self._c) == 1

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other: "Scalar") -> "Scalar":
        if not isinstance(other, Scalar):
            return NotImplemented
        c = dict(self._c)
        for k, (re, im) in other._c.items():
            sre, sim = c.get(k, (_ZERO, _ZERO))
            c[k] = (sre + re, sim + im)
        return Scalar(c)

    def __neg__(self) -> "Scalar":
        return Scalar({k: (-re, -im) for k, (re, im) in self._c.items()})

    def __sub__(self, other: "Scalar") -> "Scalar":
        return self + (-other)

    def __mul__(self, other: "Scalar | RationalLike") -> "Scalar":
        if not isinstance(other, Scalar):
            if isinstance(other, (int, Fraction)):
                other = Scalar.from_rational(other)
            else:
                return NotImplemented
        c: dict[int, _Gauss] = {}
        for k1, g1 in self._c.items():
            for k2, g2 in other._c.items():
                k = k1 + k2
                pre, pim = _gauss_mul(g1, g2)
                sre, sim = c.get(k, (_ZERO, _ZERO))
                c[k] = (sre + pre, sim + pim)
        return Scalar(c)

    __rmul__ = __mul__

    def inverse(self) -> "Scalar":
        """Inverse of a monomial scalar c*hbar^k; general Laurent sums have none."""
        if len(self._c) != 1:
            raise ValueError(f"scalar {self} is not invertible in the coefficient ring")
        ((k, g),) = self._c.items()
        return Scalar({-k: _gauss_inv(g)})

    def __pow__(self, n: int) -> "Scalar":
        if n < 0:
            return self.inverse() ** (-n)
        out = _SCALAR_ONE
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scalar):
            return NotImplemented
        return self._c == other._c

    def __hash__(self) -> int:
        return hash(frozenset(self._c.items()))

    # -- numerics ----------------------------------------------------------

    def evaluate(self, hbar: "float | Fraction") -> complex:
        """Evaluate at a numeric hbar.  The one exit from exact arithmetic."""
        out = 0j
        for k, (re, im) in self._c.items():
            out += complex(re, im) * float(hbar) ** k if not isinstance(hbar, Fraction) \
                else complex(Fraction(re) * hbar ** k, Fraction(im) * hbar ** k)
        return out

    def evaluate_exact(self, hbar: Fraction) -> _Gauss:
        """Evaluate at a rational hbar, staying in Q(i)."""
        re_t, im_t = _ZERO, _ZERO
        for k, (re, im) in self._c.items():
            f = hbar ** k
            re_t += re * f
            im_t += im * f
        return (re_t, im_t)

    def abs_norm(self) -> Fraction:
        """Sum of |re| + |im| over all hbar coefficients (exact L1 surrogate)."""
        total = _ZERO
        for re, im in self._c.values():
            total += abs(re) + abs(im)
        return total

    # -- rendering ----------------------------------------------------------

    def __repr__(self) -> str:
        return f"Scalar({self})"

    def __str__(self) -> str:
        if not self._c:
            return "0"
        parts = []
        for k in sorted(self._c):
            re, im = self._c[k]
            atom = _format_gauss(re, im)
            if k == 0:
                parts.append(atom)
            else:
                hb = "hbar" if k == 1 else f"hbar^{k}"
                if atom == "1":
                    parts.append(hb)
                elif atom == "-1":
                    parts.append(f"-{hb}")
                else:
                    parts.append(f"{_wrap_sum(atom)}*{hb}")
        out = parts[0]
        for p in parts[1:]:
            out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
        return out


def _format_gauss(re: Fraction, im: Fraction) -> str:
    if im == 0:
        return str(re)
    if re == 0:
        if im == 1:
            return "i"
        if im == -1:
            return "-i"
        return f"{im}*i"
    ims = "i" if im == 1 else ("-i" if im == -1 else f"{im}*i")
    return f"{re} + {ims}" if not ims.startswith("-") else f"{re} - {ims[1:]}"


def _wrap_sum(s: str) -> str:
    return f"({s})" if (" + " in s or " - " in s) else s


_SCALAR_ZERO = Scalar()
_SCALAR_ONE = Scalar({0: (_ONE, _ZERO)})
_SCALAR_I = Scalar({0: (_ZERO, _ONE)})
