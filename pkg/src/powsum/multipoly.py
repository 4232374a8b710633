"""Sparse multivariate polynomials and tuples of linear forms.

A polynomial is a dict from exponent tuples (dense, length n) to nonzero
field values.  Term order everywhere is graded lexicographic with
x1 > x2 > ... so homogeneous slices are contiguous.
"""

from __future__ import annotations

import itertools
import random

from .errors import InputError
from .unipoly import UniPoly


def monomial_degree(exps) -> int:
    return sum(exps)


def grlex_key(exps):
    # graded, then lexicographic with x1 biggest
    return (sum(exps), tuple(-e for e in exps))


class SparsePoly:
    __slots__ = ("field", "n", "terms")

    def __init__(self, field, n, terms=None):
        self.field = field
        self.n = n
        self.terms = {}
        if terms:
            for exps, c in terms.items() if isinstance(terms, dict) else terms:
                if len(exps) != n:
                    raise InputError("exponent vector length mismatch")
                if not field.is_zero(c):
                    key = tuple(exps)
                    acc = field.add(self.terms.get(key, field.zero), c)
                    if field.is_zero(acc):
                        self.terms.pop(key, None)
                    else:
                        self.terms[key] = acc

    @classmethod
    def zero(cls, field, n):
        return cls(field, n)

    @classmethod
    def constant(cls, field, n, c):
        return cls(field, n, {(0,) * n: c})

    @classmethod
    def variable(cls, field, n, idx):
        if not 0 <= idx < n:
            raise InputError(f"variable index {idx} out of range for n={n}")
        exps = [0] * n
        exps[idx] = 1
        return cls(field, n, {tuple(exps): field.one})

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        return (
            isinstance(other, SparsePoly)
            and self.field == other.field
            and self.n == other.n
            and self.terms == other.terms
        )

    def __repr__(self):
        return f"SparsePoly(n={self.n}, {len(self.terms)} terms)"

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))

    def total_degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_homogeneous(self) -> bool:
        degs = {sum(e) for e in self.terms}
        return len(degs) <= 1

    def add(self, other: "SparsePoly") -> "SparsePoly":
        self._check_compatible(other)
        f = self.field
        out = dict(self.terms)
        for exps, c in other.terms.items():
            acc = f.add(out.get(exps, f.zero), c)
            if f.is_zero(acc):
                out.pop(exps, None)
            else:
                out[exps] = acc
        return self._wrap(out)

    def sub(self, other: "SparsePoly") -> "SparsePoly":
        return self.add(other.neg())

    def neg(self) -> "SparsePoly":
        f = self.field
        return self._wrap({e: f.neg(c) for e, c in self.terms.items()})

    def scale(self, c) -> "SparsePoly":
        f = self.field
        if f.is_zero(c):
            return SparsePoly.zero(f, self.n)
        return self._wrap({e: f.mul(c, v) for e, v in self.terms.items()})

    def mul(self, other: "SparsePoly") -> "SparsePoly":
        self._check_compatible(other)
        f = self.field
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                acc = f.add(out.get(key, f.zero), f.mul(c1, c2))
                if f.is_zero(acc):
                    out.pop(key, None)
                else:
                    out[key] = acc
        return self._wrap(out)

    def pow(self, e: int) -> "SparsePoly":
        result = SparsePoly.constant(self.field, self.n, self.field.one)
        base = self
        while e:
            if e & 1:
                result = result.mul(base)
            e >>= 1
            if e:
                base = base.mul(base)
        return result

    def evaluate(self, point):
        if len(point) != self.n:
            raise InputError("evaluation point has wrong dimension")
        f = self.field
        acc = f.zero
        for exps, c in self.terms.items():
            term = c
            for x, e in zip(point, exps):
                if e:
                    term = f.mul(term, f.pow(x, e))
            acc = f.add(acc, term)
        return acc

    def partial_derivative(self, alpha) -> "SparsePoly":
        """Exact d^alpha with falling-factorial coefficients."""
        if len(alpha) != self.n:
            raise InputError("derivative multi-index has wrong dimension")
        f = self.field
        out: dict = {}
        for exps, c in self.terms.items():
            coeff = c
            new = list(exps)
            ok = True
            for i, a in enumerate(alpha):
                if a == 0:
                    continue
                if exps[i] < a:
                    ok = False
                    break
                fall = 1
                for j in range(a):
                    fall *= exps[i] - j
                coeff = f.mul(coeff, f.from_int(fall))
                new[i] = exps[i] - a
            if not ok or f.is_zero(coeff):
                continue
            key = tuple(new)
            acc = f.add(out.get(key, f.zero), coeff)
            if f.is_zero(acc):
                out.pop(key, None)
            else:
                out[key] = acc
        return self._wrap(out)

    def compose_affine(self, lt: "LinearTuple") -> "SparsePoly":
        """Substitute x_l -> lt.forms[l], landing in lt.n_out variables."""
        if lt.m != self.n:
            raise InputError("linear tuple arity does not match polynomial")
        f = self.field
        n_out = lt.n_out
        form_polys = [
            SparsePoly(
                f,
                n_out,
                {
                    tuple(1 if j == i else 0 for i in range(n_out)): c
                    for j, c in enumerate(coeffs)
                    if not f.is_zero(c)
                },
            )
            for coeffs in lt.forms
        ]
        acc = SparsePoly.zero(f, n_out)
        # cache powers of each form as needed
        pow_cache: dict = {}
        for exps, c in self.terms.items():
            term = SparsePoly.constant(f, n_out, c)
            for i, e in enumerate(exps):
                if e == 0:
                    continue
                key = (i, e)
                if key not in pow_cache:
                    pow_cache[key] = form_polys[i].pow(e)
                term = term.mul(pow_cache[key])
            acc = acc.add(term)
        return acc

    def restrict_to_line(self, base, direction) -> UniPoly:
        """The univariate f(base + tau * direction), computed per term."""
        f = self.field
        if len(base) != self.n or len(direction) != self.n:
            raise InputError("line point dimension mismatch")
        deg = self.total_degree()
        if deg < 0:
            return UniPoly.zero(f)
        out = [f.zero] * (deg + 1)
        # per variable, (b + tau*d)^e expanded once per needed exponent
        var_pows: dict = {}
        for exps, c in self.terms.items():
            conv = [c]
            for i, e in enumerate(exps):
                if e == 0:
                    continue
                key = (i, e)
                if key not in var_pows:
                    b, d = base[i], direction[i]
                    cur = [f.one]
                    for _ in range(e):
                        nxt = [f.zero] * (len(cur) + 1)
                        for j, v in enumerate(cur):
                            nxt[j] = f.add(nxt[j], f.mul(v, b))
                            nxt[j + 1] = f.add(nxt[j + 1], f.mul(v, d))
                        cur = nxt
                    var_pows[key] = cur
                pv = var_pows[key]
                nxt = [f.zero] * (len(conv) + len(pv) - 1)
                for j, v in enumerate(conv):
                    if f.is_zero(v):
                        continue
                    for k, w in enumerate(pv):
                        nxt[j + k] = f.add(nxt[j + k], f.mul(v, w))
                conv = nxt
            for j, v in enumerate(conv):
                out[j] = f.add(out[j], v)
        return UniPoly(f, out)

    def coefficient_vector(self, monomials):
        f = self.field
        return [self.terms.get(m, f.zero) for m in monomials]

    def substitute_zero(self, var_idx: int) -> "SparsePoly":
        """Set one variable to zero (the result keeps the same arity)."""
        out = {e: c for e, c in self.terms.items() if e[var_idx] == 0}
        return self._wrap(out)

    def _wrap(self, terms_dict) -> "SparsePoly":
        p = SparsePoly(self.field, self.n)
        p.terms = terms_dict
        return p

    def _check_compatible(self, other):
        if self.n != other.n or self.field != other.field:
            raise InputError("polynomials live in different rings")


def random_homogeneous(field, n, degree, rng: random.Random) -> SparsePoly:
    """Dense random homogeneous polynomial of the given degree."""
    terms = {}
    for mono in monomial_enumeration(n, degree, "all"):
        terms[mono] = field.sample(rng)
    return SparsePoly(field, n, terms)


class LinearTuple:
    """m linear forms over n_out fresh variables (a substitution x -> z)."""

    __slots__ = ("field", "forms", "n_out", "m", "_apply_memo")

    def __init__(self, field, forms, n_out):
        self.field = field
        self.forms = [list(row) for row in forms]
        self.n_out = n_out
        self.m = len(self.forms)
        self._apply_memo = {}
        if any(len(row) != n_out for row in self.forms):
            raise InputError("linear form coefficient length mismatch")

    @classmethod
    def random(cls, field, m, n_out, rng: random.Random):
        return cls(field, [[field.sample(rng) for _ in range(n_out)] for _ in range(m)], n_out)

    @classmethod
    def identity(cls, field, n):
        return cls(
            field,
            [[field.one if i == j else field.zero for j in range(n)] for i in range(n)],
            n,
        )

    @classmethod
    def zero(cls, field, m, n_out):
        return cls(field, [[field.zero] * n_out for _ in range(m)], n_out)

    def apply(self, point):
        """Image of a point of the target space: z -> (l_1(z), ..., l_m(z))."""
        point = tuple(point)
        hit = self._apply_memo.get(point)
        if hit is not None:
            return hit
        if len(point) != self.n_out:
            raise InputError("point dimension mismatch for linear tuple")
        f = self.field
        if f.kind == "prime":
            p = f.p
            out = tuple(
                sum(c * z for c, z in zip(row, point) if c) % p for row in self.forms
            )
        else:
            vals = []
            for row in self.forms:
                acc = f.zero
                for c, z in zip(row, point):
                    if not f.is_zero(c):
                        acc = f.add(acc, f.mul(c, z))
                vals.append(acc)
            out = tuple(vals)
        self._apply_memo[point] = out
        return out

    def column(self, j):
        """The n-dim coefficient vector attached to target variable z_j."""
        return [row[j] for row in self.forms]

    def replace_column(self, j, new_col) -> "LinearTuple":
        if len(new_col) != self.m:
            raise InputError("column length mismatch")
        forms = [list(row) for row in self.forms]
        for i in range(self.m):
            forms[i][j] = new_col[i]
        return LinearTuple(self.field, forms, self.n_out)

    def __eq__(self, other):
        return (
            isinstance(other, LinearTuple)
            and self.field == other.field
            and self.forms == other.forms
        )

    def __repr__(self):
        return f"LinearTuple({self.m} forms over {self.n_out} vars)"


def monomial_enumeration(n: int, d: int, kind: str = "all"):
    """Complete, duplicate-free monomial lists in graded-lex order.

    kind="all": every degree-d monomial in n variables.
    kind="multilinear": squarefree degree-d monomials.
    kind="set_multilinear_nondecreasing": products u_{1,j1}...u_{d,jd}
    with j1 <= ... <= jd over d blocks of n variables each (the returned
    exponent tuples have length n*d, blocks laid out consecutively).
    """
    if n < 0 or d < 0:
        raise InputError("negative enumeration parameters")
    if kind == "all":
        out = []
        if n == 0:
            return [()] if d == 0 else []
        for combo in itertools.combinations_with_replacement(range(n), d):
            exps = [0] * n
            for i in combo:
                exps[i] += 1
            out.append(tuple(exps))
        return sorted(out, key=grlex_key)
    if kind == "multilinear":
        out = []
        for combo in itertools.combinations(range(n), d):
            exps = [0] * n
            for i in combo:
                exps[i] = 1
            out.append(tuple(exps))
        return sorted(out, key=grlex_key)
    if kind == "set_multilinear_nondecreasing":
        out = []
        for combo in itertools.combinations_with_replacement(range(n), d):
            # combo is the non-decreasing index map block -> variable
            exps = [0] * (n * d)
            for block, j in enumerate(combo):
                exps[block * n + j] = 1
            out.append(tuple(exps))
        return sorted(out, key=grlex_key)
    raise InputError(f"unknown enumeration kind {kind!r}")
