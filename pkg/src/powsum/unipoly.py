"""Dense univariate polynomials over a field, plus the root/series tools.

Coefficients are stored ascending by degree with trailing zeros trimmed;
the zero polynomial has an empty coefficient list.
"""

from __future__ import annotations

import random

from .errors import InputError, RetryExhaustedError


class UniPoly:
    __slots__ = ("field", "coeffs")

    def __init__(self, field, coeffs):
        while coeffs and field.is_zero(coeffs[-1]):
            coeffs = coeffs[:-1]
        self.field = field
        self.coeffs = list(coeffs)

    @classmethod
    def zero(cls, field):
        return cls(field, [])

    @classmethod
    def const(cls, field, c):
        return cls(field, [c])

    @classmethod
    def x(cls, field):
        return cls(field, [field.zero, field.one])

    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, i: int):
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else self.field.zero

    def leading(self):
        if not self.coeffs:
            raise InputError("zero polynomial has no leading coefficient")
        return self.coeffs[-1]

    def __eq__(self, other):
        return (
            isinstance(other, UniPoly)
            and self.field == other.field
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        return hash((self.field, tuple(self.coeffs)))

    def __repr__(self):
        return f"UniPoly({self.coeffs})"

    def add(self, other: "UniPoly") -> "UniPoly":
        f = self.field
        n = max(len(self.coeffs), len(other.coeffs))
        return UniPoly(f, [f.add(self.coeff(i), other.coeff(i)) for i in range(n)])

    def sub(self, other: "UniPoly") -> "UniPoly":
        f = self.field
        n = max(len(self.coeffs), len(other.coeffs))
        return UniPoly(f, [f.sub(self.coeff(i), other.coeff(i)) for i in range(n)])

    def neg(self) -> "UniPoly":
        f = self.field
        return UniPoly(f, [f.neg(c) for c in self.coeffs])

    def mul(self, other: "UniPoly") -> "UniPoly":
        f = self.field
        if self.is_zero() or other.is_zero():
            return UniPoly.zero(f)
        out = [f.zero] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if f.is_zero(a):
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] = f.add(out[i + j], f.mul(a, b))
        return UniPoly(f, out)

    def scale(self, c) -> "UniPoly":
        f = self.field
        return UniPoly(f, [f.mul(c, a) for a in self.coeffs])

    def pow(self, e: int) -> "UniPoly":
        result = UniPoly.const(self.field, self.field.one)
        base = self
        while e:
            if e & 1:
                result = result.mul(base)
            e >>= 1
            if e:
                base = base.mul(base)
        return result

    def mul_trunc(self, other: "UniPoly", n: int) -> "UniPoly":
        """Product modulo y^n."""
        f = self.field
        out = [f.zero] * n
        for i, a in enumerate(self.coeffs):
            if i >= n or f.is_zero(a):
                continue
            for j, b in enumerate(other.coeffs):
                if i + j >= n:
                    break
                out[i + j] = f.add(out[i + j], f.mul(a, b))
        return UniPoly(f, out)

    def truncate(self, n: int) -> "UniPoly":
        return UniPoly(self.field, self.coeffs[:n])

    def evaluate(self, x):
        f = self.field
        acc = f.zero
        for c in reversed(self.coeffs):
            acc = f.add(f.mul(acc, x), c)
        return acc

    def derivative(self) -> "UniPoly":
        f = self.field
        return UniPoly(
            f, [f.mul(f.from_int(i), c) for i, c in enumerate(self.coeffs)][1:]
        )

    def monic(self) -> "UniPoly":
        if self.is_zero():
            return self
        return self.scale(self.field.inv(self.leading()))

    def divmod(self, other: "UniPoly") -> tuple["UniPoly", "UniPoly"]:
        f = self.field
        if other.is_zero():
            raise InputError("division by the zero polynomial")
        rem = list(self.coeffs)
        dq = len(rem) - len(other.coeffs)
        if dq < 0:
            return UniPoly.zero(f), UniPoly(f, rem)
        quo = [f.zero] * (dq + 1)
        inv_lead = f.inv(other.leading())
        for i in range(dq, -1, -1):
            if len(rem) != i + len(other.coeffs):
                continue
            c = f.mul(rem[-1], inv_lead)
            quo[i] = c
            for j, b in enumerate(other.coeffs):
                rem[i + j] = f.sub(rem[i + j], f.mul(c, b))
            while rem and f.is_zero(rem[-1]):
                rem.pop()
        return UniPoly(f, quo), UniPoly(f, rem)


def poly_gcd(a: UniPoly, b: UniPoly) -> UniPoly:
    while not b.is_zero():
        a, b = b, a.divmod(b)[1]
    return a.monic() if not a.is_zero() else a


def poly_powmod(base: UniPoly, e: int, mod: UniPoly) -> UniPoly:
    result = UniPoly.const(base.field, base.field.one)
    base = base.divmod(mod)[1]
    while e:
        if e & 1:
            result = result.mul(base).divmod(mod)[1]
        e >>= 1
        if e:
            base = base.mul(base).divmod(mod)[1]
    return result


def uni_interpolate(points, field) -> UniPoly:
    """Unique polynomial of degree < len(points) through the given (x, y) pairs.

    Newton's divided differences; raises on duplicate abscissae.
    """
    xs = [p[0] for p in points]
    if len(set(xs)) != len(xs):
        raise InputError("duplicate abscissa in interpolation points")
    n = len(points)
    if n == 0:
        return UniPoly.zero(field)
    # divided-difference table, in place
    coef = [p[1] for p in points]
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            num = field.sub(coef[i], coef[i - 1])
            den = field.sub(xs[i], xs[i - j])
            coef[i] = field.div(num, den)
    # expand Newton form into the monomial basis
    poly = UniPoly.zero(field)
    for i in range(n - 1, -1, -1):
        poly = poly.mul(UniPoly(field, [field.neg(xs[i]), field.one]))
        poly = poly.add(UniPoly.const(field, coef[i]))
    return poly


def series_inverse(h: UniPoly, trunc: int) -> UniPoly:
    """1/h mod y^trunc by Newton iteration; h(0) must be invertible."""
    field = h.field
    if h.is_zero() or field.is_zero(h.coeff(0)):
        raise InputError("series has no inverse: constant term is zero")
    g = UniPoly.const(field, field.inv(h.coeff(0)))
    prec = 1
    two = UniPoly.const(field, field.from_int(2))
    while prec < trunc:
        prec = min(2 * prec, trunc)
        g = g.mul_trunc(two.sub(h.mul_trunc(g, prec)), prec)
    return g.truncate(trunc)


def series_eth_root(h: UniPoly, e: int, trunc: int) -> UniPoly:
    """g with g(0) = 1 and g^e = h mod y^(trunc+1), by Newton iteration.

    Requires h(0) = 1 and field characteristic 0 or > e*trunc so the
    iteration's divisions by e stay valid.
    """
    field = h.field
    if e < 1:
        raise InputError("exponent must be positive")
    if h.is_zero() or h.coeff(0) != field.one:
        raise InputError("series e-th root needs constant term 1")
    char = field.characteristic()
    if char != 0 and char <= e * trunc:
        raise InputError("field characteristic too small for e-th root")
    n = trunc + 1
    g = UniPoly.const(field, field.one)
    prec = 1
    inv_e = field.inv(field.from_int(e))
    while prec < n:
        prec = min(2 * prec, n)
        # g <- g - (g^e - h) / (e * g^(e-1))
        ge1 = UniPoly.const(field, field.one)
        for _ in range(e - 1):
            ge1 = ge1.mul_trunc(g, prec)
        ge = ge1.mul_trunc(g, prec)
        delta = ge.sub(h.truncate(prec))
        corr = delta.mul_trunc(series_inverse(ge1, prec), prec).scale(inv_e)
        g = g.sub(corr).truncate(prec)
    return g.truncate(n)


def roots_in_field(fpoly: UniPoly, rng: random.Random | None = None) -> list:
    """All roots of fpoly lying in F_p, with multiplicity.

    gcd with x^p - x isolates the split part, then randomized equal-degree
    splitting peels off linear factors.  Irreducible factors of higher
    degree are silently ignored.
    """
    field = fpoly.field
    if field.kind != "prime":
        raise InputError("roots_in_field requires a prime field")
    if fpoly.is_zero():
        raise InputError("zero polynomial has every element as a root")
    rng = rng or random.Random(0x5EED)
    p = field.p
    f = fpoly.monic()
    if f.degree() == 0:
        return []

    x = UniPoly.x(field)
    xp = poly_powmod(x, p, f)
    split = poly_gcd(xp.sub(x), f)

    roots: list = []

    def peel(g: UniPoly, budget: int = 400):
        if g.degree() <= 0:
            return
        if g.degree() == 1:
            roots.append(field.neg(field.div(g.coeff(0), g.coeff(1))))
            return
        for _ in range(budget):
            a = field.sample(rng)
            shifted = UniPoly(field, [a, field.one])
            trial = poly_powmod(shifted, (p - 1) // 2, g).sub(
                UniPoly.const(field, field.one)
            )
            h = poly_gcd(trial, g)
            if 0 < h.degree() < g.degree():
                peel(h)
                peel(g.divmod(h)[0])
                return
        raise RetryExhaustedError("equal-degree splitting failed to progress")

    peel(split)

    out = []
    for r in sorted(set(roots)):
        rem = f
        linear = UniPoly(field, [field.neg(r), field.one])
        while True:
            q, rr = rem.divmod(linear)
            if not rr.is_zero():
                break
            out.append(r)
            rem = q
    return out
