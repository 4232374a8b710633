"""Exact dense linear algebra over a field.

Matrices are thin wrappers around a list-of-rows of canonical field
values.  Everything here is Gaussian elimination at heart; exactness is
the point, speed is secondary (sizes stay small throughout the pipeline).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError
from .unipoly import UniPoly


class Matrix:
    __slots__ = ("field", "rows", "cols", "entries")

    def __init__(self, field, entries):
        self.field = field
        self.entries = [list(row) for row in entries]
        self.rows = len(self.entries)
        self.cols = len(self.entries[0]) if self.entries else 0
        if any(len(row) != self.cols for row in self.entries):
            raise InputError("ragged matrix rows")

    @classmethod
    def identity(cls, field, n):
        return cls(
            field,
            [[field.one if i == j else field.zero for j in range(n)] for i in range(n)],
        )

    @classmethod
    def zero(cls, field, rows, cols):
        return cls(field, [[field.zero] * cols for _ in range(rows)])

    @classmethod
    def from_columns(cls, field, columns):
        if not columns:
            return cls(field, [])
        return cls(field, [[col[i] for col in columns] for i in range(len(columns[0]))])

    def column(self, j):
        return [row[j] for row in self.entries]

    def is_square(self):
        return self.rows == self.cols

    def __eq__(self, other):
        return (
            isinstance(other, Matrix)
            and self.field == other.field
            and self.entries == other.entries
        )

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"

    def transpose(self):
        return Matrix(self.field, [self.column(j) for j in range(self.cols)])

    def add(self, other):
        f = self.field
        return Matrix(
            f,
            [
                [f.add(a, b) for a, b in zip(r1, r2)]
                for r1, r2 in zip(self.entries, other.entries)
            ],
        )

    def sub(self, other):
        f = self.field
        return Matrix(
            f,
            [
                [f.sub(a, b) for a, b in zip(r1, r2)]
                for r1, r2 in zip(self.entries, other.entries)
            ],
        )

    def scale(self, c):
        f = self.field
        return Matrix(f, [[f.mul(c, a) for a in row] for row in self.entries])

    def mul(self, other):
        if self.cols != other.rows:
            raise InputError("dimension mismatch in matrix product")
        f = self.field
        bt = other.transpose().entries
        out = []
        for row in self.entries:
            out_row = []
            for col in bt:
                acc = f.zero
                for a, b in zip(row, col):
                    acc = f.add(acc, f.mul(a, b))
                out_row.append(acc)
            out.append(out_row)
        return Matrix(f, out)

    def mul_vector(self, vec):
        f = self.field
        out = []
        for row in self.entries:
            acc = f.zero
            for a, b in zip(row, vec):
                acc = f.add(acc, f.mul(a, b))
            out.append(acc)
        return out

    def trace(self):
        f = self.field
        acc = f.zero
        for i in range(min(self.rows, self.cols)):
            acc = f.add(acc, self.entries[i][i])
        return acc


@dataclass
class LinSolveResult:
    rank: int
    consistent: bool
    particular: list | None  # solution columns (one list per target column)
    kernel: list  # kernel basis vectors of the coefficient matrix
    pivot_cols: list


def _echelon(field, rows, ncols):
    """Row-reduce in place; returns pivot column indices."""
    pivots = []
    r = 0
    for c in range(ncols):
        pivot = None
        for i in range(r, len(rows)):
            if not field.is_zero(rows[i][c]):
                pivot = i
                break
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = field.inv(rows[r][c])
        rows[r] = [field.mul(inv, v) for v in rows[r]]
        for i in range(len(rows)):
            if i != r and not field.is_zero(rows[i][c]):
                factor = rows[i][c]
                prow = rows[r]
                rows[i] = [field.sub(v, field.mul(factor, w)) for v, w in zip(rows[i], prow)]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return pivots


def mat_solve(a: Matrix, targets: Matrix | None = None) -> LinSolveResult:
    """Solve a x = targets exactly: rank, a particular solution per target
    column (free variables set to zero), and a kernel basis of a.

    Inconsistent systems are reported, not raised.
    """
    field = a.field
    n_t = targets.cols if targets is not None else 0
    if targets is not None and targets.rows != a.rows:
        raise InputError("target row count mismatch")
    aug = []
    for i in range(a.rows):
        row = list(a.entries[i])
        if targets is not None:
            row.extend(targets.entries[i])
        aug.append(row)
    pivots = _echelon(field, aug, a.cols)
    rank = len(pivots)

    consistent = True
    for i in range(rank, len(aug)):
        if any(not field.is_zero(v) for v in aug[i][a.cols :]):
            consistent = False
            break

    particular = None
    if targets is not None and consistent:
        particular = []
        for t in range(n_t):
            sol = [field.zero] * a.cols
            for r, c in enumerate(pivots):
                sol[c] = aug[r][a.cols + t]
            particular.append(sol)

    pivot_set = set(pivots)
    kernel = []
    for free in range(a.cols):
        if free in pivot_set:
            continue
        vec = [field.zero] * a.cols
        vec[free] = field.one
        for r, c in enumerate(pivots):
            vec[c] = field.neg(aug[r][free])
        kernel.append(vec)
    return LinSolveResult(rank, consistent, particular, kernel, pivots)


def rank_of_rows(field, rows) -> int:
    if not rows:
        return 0
    work = [list(r) for r in rows]
    return len(_echelon(field, work, len(work[0])))


def independent_rows(field, rows):
    """Indices of a maximal independent subset of the given row vectors."""
    if not rows:
        return []
    # eliminate on the transpose so pivots select original rows
    ncols = len(rows[0])
    work = [[rows[i][j] for i in range(len(rows))] for j in range(ncols)]
    pivots = _echelon(field, work, len(rows))
    return pivots


def reduce_span(field, rows):
    """A row-echelon basis of the span of the given row vectors."""
    if not rows:
        return []
    work = [list(r) for r in rows]
    pivots = _echelon(field, work, len(work[0]))
    return work[: len(pivots)]


def invert(a: Matrix) -> Matrix:
    if not a.is_square():
        raise InputError("only square matrices invert")
    res = mat_solve(a, Matrix.identity(a.field, a.rows))
    if res.rank < a.rows:
        raise InputError("matrix is singular")
    return Matrix.from_columns(a.field, res.particular)


def determinant(a: Matrix):
    """Cofactor-free determinant via elimination (fraction-free not needed)."""
    if not a.is_square():
        raise InputError("determinant of a non-square matrix")
    field = a.field
    m = [list(row) for row in a.entries]
    n = a.rows
    det = field.one
    for c in range(n):
        pivot = None
        for i in range(c, n):
            if not field.is_zero(m[i][c]):
                pivot = i
                break
        if pivot is None:
            return field.zero
        if pivot != c:
            m[c], m[pivot] = m[pivot], m[c]
            det = field.neg(det)
        det = field.mul(det, m[c][c])
        inv = field.inv(m[c][c])
        for i in range(c + 1, n):
            if field.is_zero(m[i][c]):
                continue
            factor = field.mul(m[i][c], inv)
            m[i] = [field.sub(v, field.mul(factor, w)) for v, w in zip(m[i], m[c])]
    return det


def char_poly(a: Matrix) -> UniPoly:
    """Monic characteristic polynomial det(xI - A), Faddeev-LeVerrier.

    Divides only by 1..n, which the field characteristic (0 or a large
    prime) always supports here.
    """
    if not a.is_square():
        raise InputError("characteristic polynomial of a non-square matrix")
    field = a.field
    n = a.rows
    char = field.characteristic()
    if char != 0 and char <= n:
        raise InputError("field characteristic too small for Faddeev-LeVerrier")
    coeffs = [field.zero] * (n + 1)
    coeffs[n] = field.one
    m = Matrix.identity(field, n)
    for k in range(1, n + 1):
        am = a.mul(m)
        c = field.neg(field.div(am.trace(), field.from_int(k)))
        coeffs[n - k] = c
        if k < n:
            m = am.add(Matrix.identity(field, n).scale(c))
    return UniPoly(field, coeffs)


def eval_poly_at_matrix(poly: UniPoly, a: Matrix) -> Matrix:
    field = a.field
    acc = Matrix.zero(field, a.rows, a.cols)
    for c in reversed(poly.coeffs):
        acc = a.mul(acc).add(Matrix.identity(field, a.rows).scale(c))
    return acc
