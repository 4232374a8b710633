"""Evaluation oracles and the span calculus built on them.

A BlackBox answers point queries for an unknown polynomial of known
variable count and degree bound.  Derived oracles (derivatives, affine
projections, linear combinations) are built without ever looking past
the query interface.  Every box memoizes point queries, and boxes that
can restrict themselves to a line exactly expose that through
``restrict_to_line`` -- derived oracles route through it, which is what
keeps derivative towers affordable.
"""

from __future__ import annotations

import random

from .errors import InputError, RetryExhaustedError
from .linalg import Matrix, _echelon, mat_solve
from .multipoly import LinearTuple, SparsePoly
from .unipoly import UniPoly, uni_interpolate


class BlackBox:
    """Evaluation oracle: n variables, degree bound d, deterministic query."""

    def __init__(self, field, n, d, provenance="derived"):
        self.field = field
        self.n = n
        self.d = d
        self.provenance = provenance
        self._memo = {}

    def eval(self, point):
        point = tuple(point)
        if len(point) != self.n:
            raise InputError("query point has wrong dimension")
        hit = self._memo.get(point)
        if hit is None and point not in self._memo:
            hit = self._query(point)
            self._memo[point] = hit
        return hit

    def _query(self, point):
        raise NotImplementedError

    def restrict_to_line(self, base, direction) -> UniPoly:
        """Exact univariate f(base + tau*direction) from d+1 queries."""
        field = self.field
        base = tuple(base)
        direction = tuple(direction)
        if all(field.is_zero(c) for c in direction):
            return UniPoly.const(field, self.eval(base))
        pts = []
        for tau in range(self.d + 1):
            t = field.from_int(tau)
            pt = tuple(field.add(b, field.mul(t, dd)) for b, dd in zip(base, direction))
            pts.append((t, self.eval(pt)))
        return uni_interpolate(pts, field)


class CallableBox(BlackBox):
    def __init__(self, field, n, d, fn, provenance="external"):
        super().__init__(field, n, d, provenance)
        self._fn = fn

    def _query(self, point):
        return self._fn(point)


class PolyBox(BlackBox):
    """White-box-backed oracle over an explicit sparse polynomial."""

    def __init__(self, poly: SparsePoly):
        super().__init__(poly.field, poly.n, max(poly.total_degree(), 0), "white-box-backed")
        self.poly = poly

    def _query(self, point):
        return self.poly.evaluate(point)

    def restrict_to_line(self, base, direction):
        return self.poly.restrict_to_line(tuple(base), tuple(direction))


class LinearComboBox(BlackBox):
    """Sum of c_i * box_i over boxes sharing arity and field."""

    def __init__(self, boxes, coeffs):
        if not boxes or len(boxes) != len(coeffs):
            raise InputError("combo needs matching boxes and coefficients")
        b0 = boxes[0]
        if any(b.n != b0.n or b.field != b0.field for b in boxes):
            raise InputError("combo boxes disagree on arity or field")
        super().__init__(b0.field, b0.n, max(b.d for b in boxes))
        self.boxes = list(boxes)
        self.coeffs = list(coeffs)

    def _query(self, point):
        f = self.field
        acc = f.zero
        for c, box in zip(self.coeffs, self.boxes):
            if not f.is_zero(c):
                acc = f.add(acc, f.mul(c, box.eval(point)))
        return acc

    def restrict_to_line(self, base, direction):
        f = self.field
        acc = UniPoly.zero(f)
        for c, box in zip(self.coeffs, self.boxes):
            if not f.is_zero(c):
                acc = acc.add(box.restrict_to_line(base, direction).scale(c))
        return acc


class FirstDerivativeBox(BlackBox):
    """d/dx_v of the parent oracle, evaluated via one line restriction."""

    def __init__(self, parent: BlackBox, var: int):
        super().__init__(parent.field, parent.n, max(parent.d - 1, 0))
        self.parent = parent
        self.var = var
        self._axis = tuple(
            parent.field.one if i == var else parent.field.zero for i in range(parent.n)
        )

    def _query(self, point):
        return self.parent.restrict_to_line(point, self._axis).coeff(1)

    def restrict_to_line(self, base, direction):
        field = self.field
        if all(field.is_zero(c) for c in direction):
            return UniPoly.const(field, self.eval(base))
        pts = []
        for tau in range(self.d + 1):
            t = field.from_int(tau)
            pt = tuple(field.add(b, field.mul(t, dd)) for b, dd in zip(base, direction))
            pts.append((t, self.eval(pt)))
        return uni_interpolate(pts, field)


def derivative_box(f: BlackBox, alpha) -> BlackBox:
    """Oracle for d^alpha f, built from iterated first-order steps.

    Order exceeding the degree bound legitimately yields the zero oracle.
    """
    if len(alpha) != f.n:
        raise InputError("derivative multi-index arity mismatch")
    box = f
    for var, reps in enumerate(alpha):
        for _ in range(reps):
            box = FirstDerivativeBox(box, var)
    return box


class ProjectedBox(BlackBox):
    """pi_L(f): queries over the target variables route through L."""

    def __init__(self, parent: BlackBox, lt: LinearTuple):
        if lt.m != parent.n:
            raise InputError("projection arity mismatch")
        super().__init__(parent.field, lt.n_out, parent.d)
        self.parent = parent
        self.lt = lt

    def _query(self, point):
        return self.parent.eval(self.lt.apply(point))

    def restrict_to_line(self, base, direction):
        # L is linear, so the image of a line is a line
        return self.parent.restrict_to_line(self.lt.apply(base), self.lt.apply(direction))


def project_box(f: BlackBox, lt: LinearTuple) -> BlackBox:
    return ProjectedBox(f, lt)


def restrict_to_line(f: BlackBox, base, direction) -> UniPoly:
    return f.restrict_to_line(base, direction)


class SpanBasis:
    """An independent subset of oracles spanning the same space as the
    generators, certified by a full-rank evaluation matrix at recorded
    witness points."""

    def __init__(self, elements, witness_points, witness_matrix: Matrix, coeff_matrix,
                 check_points=()):
        self.elements = list(elements)
        self.witness_points = list(witness_points)
        self.witness_matrix = witness_matrix  # [i][j] = elements[j] at point i
        self.coeff_matrix = coeff_matrix  # original generator -> basis coords
        self.check_points = list(check_points)  # shared certification points

    @property
    def dim(self):
        return len(self.elements)


def _random_point(field, n, rng):
    return tuple(field.sample(rng) for _ in range(n))


def span_basis(gens, rng: random.Random, expected_dim=None, max_retries=6) -> SpanBasis:
    """Basis of <gens> from evaluations at random points.

    Default uses as many points as generators (one per generator); with an
    expected dimension hint it starts from slightly more points than that
    and only adds points while the measured rank keeps saturating them.
    """
    if not gens:
        raise InputError("span_basis needs at least one generator")
    field = gens[0].field
    n = gens[0].n
    if any(g.n != n or g.field != field for g in gens):
        raise InputError("generators disagree on arity or field")

    r = len(gens)
    for attempt in range(max_retries):
        count = (expected_dim + 4) if expected_dim is not None else r
        count = min(max(count, 1), 4 * r + 8)
        points = [_random_point(field, n, rng) for _ in range(count)]
        while True:
            rows = [[g.eval(pt) for pt in points] for g in gens]
            work = [[rows[i][j] for i in range(r)] for j in range(len(points))]
            pivots = _echelon(field, work, r)
            rank = len(pivots)
            if rank < len(points) or rank == r:
                break
            # every point consumed: the rank may be truncated, add points
            points.extend(_random_point(field, n, rng) for _ in range(rank + 4 - len(points) + 1))

        if rank == 0:
            return SpanBasis([], [], Matrix(field, []), [[field.zero] * 0 for _ in gens])

        basis_idx = pivots
        # choose witness points: columns making the basis submatrix invertible
        basis_rows = [rows[i] for i in basis_idx]
        col_pivots = _echelon(field, [list(row) for row in basis_rows], len(points))
        if len(col_pivots) < rank:
            continue  # degenerate point draw, retry wholesale
        witness_points = [points[j] for j in col_pivots]
        witness_matrix = Matrix(
            field, [[basis_rows[b][j] for b in range(rank)] for j in col_pivots]
        )
        # express every generator over the basis at the witness points
        targets = Matrix(field, [[rows[g][j] for g in range(r)] for j in col_pivots])
        sol = mat_solve(witness_matrix, targets)
        if not sol.consistent or sol.rank < rank:
            continue
        coeff_matrix = [list(c) for c in sol.particular]
        check_points = [_random_point(field, n, rng) for _ in range(4)]
        return SpanBasis(
            [gens[i] for i in basis_idx], witness_points, witness_matrix,
            coeff_matrix, check_points,
        )
    raise RetryExhaustedError("span_basis failed to stabilize a witness matrix")


def express_in_basis(target: BlackBox, basis: SpanBasis, rng: random.Random, certify=4):
    """Coefficients of target over the basis, certified at random points.

    Certification reuses the basis's shared check points when present (so
    repeated expressions over one basis amortize their evaluations) and
    draws fresh ones otherwise.  Returns the coefficient list, or None when
    certification shows the target is not in the span.
    """
    field = target.field
    check_pts = basis.check_points[:certify] if basis.check_points else [
        _random_point(field, target.n, rng) for _ in range(certify)
    ]
    if basis.dim == 0:
        zero_everywhere = all(field.is_zero(target.eval(pt)) for pt in check_pts)
        return [] if zero_everywhere else None
    vals = Matrix(field, [[target.eval(pt)] for pt in basis.witness_points])
    sol = mat_solve(basis.witness_matrix, vals)
    if not sol.consistent:
        return None
    coeffs = sol.particular[0]
    combo = LinearComboBox(basis.elements, coeffs)
    for pt in check_pts:
        if target.eval(pt) != combo.eval(pt):
            return None
    return coeffs


def check_homogeneous(box: BlackBox, degree: int, rng: random.Random, trials=2) -> bool:
    """Spot-check f(lam*a) = lam^degree * f(a) at random (lam, a)."""
    field = box.field
    for _ in range(trials):
        a = _random_point(field, box.n, rng)
        lam = field.sample_nonzero(rng)
        scaled = tuple(field.mul(lam, x) for x in a)
        if box.eval(scaled) != field.mul(field.pow(lam, degree), box.eval(a)):
            return False
    return True
