"""Exact scalars: prime fields F_p and the rationals Q.

Field objects operate on plain canonical values -- ints in [0, p) for a
prime field, reduced ``Fraction`` for the rationals -- so hot loops stay
close to native big-integer speed.  All values are immutable; every
operation is pure, and randomized helpers take an explicit generator.
"""

from __future__ import annotations

import random
from fractions import Fraction
from math import gcd, isqrt

from .errors import FieldDivisionError, InputError

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def is_probable_prime(n: int, rounds: int = 40, rng: random.Random | None = None) -> bool:
    """Miller-Rabin primality test."""
    if n < 2:
        return False
    for q in _SMALL_PRIMES:
        if n == q:
            return True
        if n % q == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    rng = rng or random.Random(0xC0FFEE ^ n)
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = (x * x) % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: random.Random) -> int:
    """Random probable prime with exactly `bits` bits."""
    if bits < 3:
        raise InputError("need at least 3 bits for a prime")
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(cand):
            return cand


class PrimeField:
    """Arithmetic mod a prime p on canonical residues in [0, p)."""

    kind = "prime"

    def __init__(self, p: int):
        if not is_probable_prime(p):
            raise InputError(f"{p} is not prime")
        self.p = p
        self.zero = 0
        self.one = 1

    def __repr__(self):
        return f"PrimeField({self.p})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self):
        return hash(("prime", self.p))

    def characteristic(self) -> int:
        return self.p

    def canon(self, x: int) -> int:
        return x % self.p

    def add(self, a, b):
        return (a + b) % self.p

    def sub(self, a, b):
        return (a - b) % self.p

    def mul(self, a, b):
        return (a * b) % self.p

    def neg(self, a):
        return (-a) % self.p

    def inv(self, a):
        a %= self.p
        if a == 0:
            raise FieldDivisionError("division by zero in F_p")
        return pow(a, self.p - 2, self.p)

    def div(self, a, b):
        return (a * self.inv(b)) % self.p

    def pow(self, a, e: int):
        if e < 0:
            return pow(self.inv(a), -e, self.p)
        return pow(a, e, self.p)

    def from_int(self, n: int):
        return n % self.p

    def from_fraction(self, fr: Fraction):
        den = fr.denominator % self.p
        if den == 0:
            raise FieldDivisionError("denominator vanishes mod p")
        return (fr.numerator % self.p) * self.inv(den) % self.p

    def is_zero(self, a) -> bool:
        return a % self.p == 0

    def sample(self, rng: random.Random):
        return rng.randrange(self.p)

    def sample_nonzero(self, rng: random.Random):
        return rng.randrange(1, self.p)

    def to_str(self, a) -> str:
        return str(a % self.p)

    def parse(self, s: str):
        s = s.strip()
        if "/" in s:
            num, den = s.split("/")
            return self.from_fraction(Fraction(int(num), int(den)))
        return int(s) % self.p


class RationalField:
    """Exact rationals; canonical form is a reduced Fraction."""

    kind = "rational"

    zero = Fraction(0)
    one = Fraction(1)

    def __repr__(self):
        return "RationalField()"

    def __eq__(self, other):
        return isinstance(other, RationalField)

    def __hash__(self):
        return hash("rational")

    def characteristic(self) -> int:
        return 0

    def canon(self, x):
        return Fraction(x)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def mul(self, a, b):
        return a * b

    def neg(self, a):
        return -a

    def inv(self, a):
        if a == 0:
            raise FieldDivisionError("division by zero in Q")
        return 1 / Fraction(a)

    def div(self, a, b):
        if b == 0:
            raise FieldDivisionError("division by zero in Q")
        return Fraction(a) / b

    def pow(self, a, e: int):
        return Fraction(a) ** e

    def from_int(self, n: int):
        return Fraction(n)

    def from_fraction(self, fr: Fraction):
        return Fraction(fr)

    def is_zero(self, a) -> bool:
        return a == 0

    def sample(self, rng: random.Random, bound: int = 10**6):
        return Fraction(rng.randrange(-bound, bound + 1), rng.randrange(1, 64))

    def sample_nonzero(self, rng: random.Random, bound: int = 10**6):
        while True:
            v = self.sample(rng, bound)
            if v != 0:
                return v

    def to_str(self, a) -> str:
        fr = Fraction(a)
        return f"{fr.numerator}/{fr.denominator}"

    def parse(self, s: str):
        s = s.strip()
        if "/" in s:
            num, den = s.split("/")
            return Fraction(int(num), int(den))
        return Fraction(int(s))


RATIONALS = RationalField()

DEFAULT_PRIME_BITS = 128


def field_from_spec(spec: dict):
    """Deserialize {"prime": "<decimal>"} or {"rational": true}."""
    if "prime" in spec:
        return PrimeField(int(spec["prime"]))
    if spec.get("rational"):
        return RATIONALS
    raise InputError(f"unrecognized field spec: {spec!r}")


def field_to_spec(field) -> dict:
    if field.kind == "prime":
        return {"prime": str(field.p)}
    return {"rational": True}


def default_prime_field(rng: random.Random, bits: int = DEFAULT_PRIME_BITS) -> PrimeField:
    return PrimeField(random_prime(bits, rng))


def field_arith(field, a, b, op: str):
    """Single-dispatch arithmetic entry point: op in {add, sub, mul, div}."""
    if op == "add":
        return field.add(a, b)
    if op == "sub":
        return field.sub(a, b)
    if op == "mul":
        return field.mul(a, b)
    if op == "div":
        return field.div(a, b)
    raise InputError(f"unknown op {op!r}")


def rational_reconstruct(r: int, p: int) -> Fraction | None:
    """Recover a/b from its residue r mod p.

    Returns the unique fraction with |a|, b <= floor(sqrt((p-1)/2)),
    gcd(b, p) = 1 and a = r*b (mod p), or None when no such pair exists.
    """
    if not 0 <= r < p:
        raise InputError("residue out of range")
    bound = isqrt((p - 1) // 2)
    if r == 0:
        return Fraction(0, 1)
    r0, r1 = p, r
    t0, t1 = 0, 1
    while r1 > bound:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        t0, t1 = t1, t0 - q * t1
    a, b = r1, t1
    if b < 0:
        a, b = -a, -b
    if b == 0 or b > bound or abs(a) > bound:
        return None
    g = gcd(abs(a), b)
    if g > 1:
        a //= g
        b //= g
    if gcd(b, p) != 1 or (a - r * b) % p != 0:
        return None
    return Fraction(a, b)
