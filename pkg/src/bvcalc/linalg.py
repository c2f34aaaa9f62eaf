"""Sparse exact matrices and vectors over the Scalar ring.

Column-major sparse storage; solving requires hbar-free entries so that
pivots stay invertible in Q(i).  Pivoting is deterministic: first usable
row/column in basis order.
"""

from __future__ import annotations

from fractions import Fraction

from .scalars import Scalar

# Sparse vector: index -> nonzero Scalar.
Vec = dict[int, Scalar]


def vec_add(a: Vec, b: Vec) -> Vec:
    out = dict(a)
    for k, v in b.items():
        s = out.get(k)
        s = v if s is None else s + v
        if s.is_zero():
            out.pop(k, None)
        else:
            out[k] = s
    return out


def vec_scale(a: Vec, c: Scalar) -> Vec:
    if c.is_zero():
        return {}
    return {k: v * c for k, v in a.items()}


def vec_neg(a: Vec) -> Vec:
    return {k: -v for k, v in a.items()}


def vec_is_zero(a: Vec) -> bool:
    return not a


class Matrix:
    """Sparse matrix over Scalar, stored by columns."""

    def __init__(self, nrows: int, ncols: int,
                 cols: list[Vec] | None = None):
        self.nrows = nrows
        self.ncols = ncols
        self.cols: list[Vec] = cols if cols is not None else [{} for _ in range(ncols)]
        if len(self.cols) != ncols:
            raise ValueError("column count mismatch")

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        return cls(n, n, [{k: Scalar.one()} for k in range(n)])

    @classmethod
    def zeros(cls, nrows: int, ncols: int) -> "Matrix":
        return cls(nrows, ncols)

    @classmethod
    def from_columns(cls, nrows: int, columns: list[Vec]) -> "Matrix":
        return cls(nrows, len(columns), [dict(c) for c in columns])

    @classmethod
    def from_rows(cls, rows: list[list]) -> "Matrix":
        nrows = len(rows)
        ncols = len(rows[0]) if rows else 0
        m = cls.zeros(nrows, ncols)
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                s = v if isinstance(v, Scalar) else Scalar.from_rational(Fraction(v))
                if not s.is_zero():
                    m.cols[j][i] = s
        return m

    # -- queries ---------------------------------------------------------------

    def is_zero(self) -> bool:
        return all(not c for c in self.cols)

    def entry(self, i: int, j: int) -> Scalar:
        return self.cols[j].get(i, Scalar.zero())

    def nonzero_count(self) -> int:
        return sum(len(c) for c in self.cols)

    def abs_norm(self) -> Fraction:
        total = Fraction(0)
        for c in self.cols:
            for v in c.values():
                total += v.abs_norm()
        return total

    def copy(self) -> "Matrix":
        return Matrix(self.nrows, self.ncols, [dict(c) for c in self.cols])

    # -- algebra -----------------------------------------------------------------

    def apply(self, vec: Vec) -> Vec:
        out: Vec = {}
        for j, c in vec.items():
            col = self.cols[j]
            for i, a in col.items():
                v = a * c
                s = out.get(i)
                s = v if s is None else s + v
                if s.is_zero():
                    out.pop(i, None)
                else:
                    out[i] = s
        return out

    def __matmul__(self, other: "Matrix") -> "Matrix":
        if self.ncols != other.nrows:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        return Matrix(self.nrows, other.ncols,
                      [self.apply(c) for c in other.cols])

    def __add__(self, other: "Matrix") -> "Matrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        return Matrix(self.nrows, self.ncols,
                      [vec_add(a, b) for a, b in zip(self.cols, other.cols)])

    def __sub__(self, other: "Matrix") -> "Matrix":
        return self + (-other)

    def __neg__(self) -> "Matrix":
        return Matrix(self.nrows, self.ncols, [vec_neg(c) for c in self.cols])

    def scale(self, c: Scalar) -> "Matrix":
        return Matrix(self.nrows, self.ncols, [vec_scale(col, c) for col in self.cols])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    def __repr__(self) -> str:
        return f"Matrix({self.nrows}x{self.ncols}, {self.nonzero_count()} nonzero)"


def invert(matrix: Matrix) -> Matrix:
    """Exact inverse of a square matrix with hbar-free entries."""
    if matrix.nrows != matrix.ncols:
        raise ValueError("only square matrices can be inverted")
    n = matrix.nrows
    # Gauss-Jordan on row dicts carrying the augmented identity
    rows: list[tuple[Vec, Vec]] = []
    row_data: dict[int, Vec] = {}
    for j, col in enumerate(matrix.cols):
        for i, v in col.items():
            row_data.setdefault(i, {})[j] = v
    for i in range(n):
        rows.append((row_data.get(i, {}), {i: Scalar.one()}))
    for j in range(n):
        pivot = None
        for i in range(j, n):
            if j in rows[i][0]:
                pivot = i
                break
        if pivot is None:
            raise ValueError("matrix is singular")
        rows[j], rows[pivot] = rows[pivot], rows[j]
        a, b = rows[j]
        inv = a[j].inverse()
        a, b = vec_scale(a, inv), vec_scale(b, inv)
        rows[j] = (a, b)
        for i in range(n):
            if i == j:
                continue
            fa, fb = rows[i]
            factor = fa.get(j)
            if factor is None:
                continue
            rows[i] = (vec_add(fa, vec_scale(a, -factor)),
                       vec_add(fb, vec_scale(b, -factor)))
    out = Matrix.zeros(n, n)
    for i in range(n):
        for j, v in rows[i][1].items():
            out.cols[j][i] = v
    return out


def solve_linear(matrix: Matrix, rhs: Vec) -> Vec | None:
    """One exact solution of matrix @ x = rhs, or None when inconsistent.

    Free variables are set to zero (the least-constrained deterministic
    choice); entries must be hbar-free so every pivot is invertible.
    """
    rows: dict[int, Vec] = {}
    for j, col in enumerate(matrix.cols):
        for i, v in col.items():
            if not v.is_hbar_free():
                raise ValueError("solve_linear requires hbar-free matrices")
            rows.setdefault(i, {})[j] = v
    b = {i: v for i, v in rhs.items() if not v.is_zero()}
    for v in b.values():
        if not v.is_hbar_free():
            raise ValueError("solve_linear requires an hbar-free right-hand side")

    pivots: list[tuple[int, int]] = []  # (row, col) in elimination order
    used_rows: set[int] = set()
    for j in range(matrix.ncols):
        pivot_row = None
        for i in sorted(rows):
            if i in used_rows:
                continue
            if j in rows[i]:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        used_rows.add(pivot_row)
        pivots.append((pivot_row, j))
        inv = rows[pivot_row][j].inverse()
        rows[pivot_row] = vec_scale(rows[pivot_row], inv)
        if pivot_row in b:
            b[pivot_row] = b[pivot_row] * inv
        prow = rows[pivot_row]
        pb = b.get(pivot_row)
        for i in list(rows):
            if i == pivot_row:
                continue
            factor = rows[i].get(j)
            if factor is None:
                continue
            rows[i] = vec_add(rows[i], vec_scale(prow, -factor))
            if pb is not None:
                delta = pb * (-factor)
                s = b.get(i)
                s = delta if s is None else s + delta
                if s.is_zero():
                    b.pop(i, None)
                else:
                    b[i] = s

    # inconsistency: a leftover rhs entry on a zero row
    for i, v in b.items():
        if i not in used_rows and not v.is_zero():
            return None

    x: Vec = {}
    for i, j in pivots:
        v = b.get(i)
        if v is not None and not v.is_zero():
            x[j] = v
    return x
