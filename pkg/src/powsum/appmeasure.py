"""The affine-projections-of-partials measure, the multilinear polynomial
that maximizes it, and the fan-in bound calculators for both parameter
regimes.

The measure of f at order k with n0 target variables is the best dimension
of span{pi_L(d^alpha f) : |alpha| = k} over substitutions L; a random L
already achieves the maximum with probability at least 0.9, so a handful
of trials is taken and the maximum reported.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .blackbox import BlackBox, derivative_box, project_box, span_basis
from .errors import InputError
from .linalg import rank_of_rows
from .multipoly import LinearTuple, SparsePoly, monomial_enumeration


def _measure_once(f: SparsePoly, k: int, L: LinearTuple):
    field = f.field
    n = f.n
    deg = f.total_degree()
    monos = monomial_enumeration(L.n_out, max(deg - k, 0), "all")
    rows = []
    for alpha in monomial_enumeration(n, k, "all"):
        img = f.partial_derivative(alpha)
        if img.is_zero():
            continue
        rows.append(img.compose_affine(L).coefficient_vector(monos))
    return rank_of_rows(field, rows)


def app_measure(f, k: int, n0: int, rng: random.Random, trials: int = 5) -> int:
    """max over `trials` random L of dim<pi_L(d^k f)>, an exact lower
    estimate of the measure that equals it with high probability.

    Accepts a SparsePoly (symbolic ranks) or a BlackBox (evaluation ranks).
    """
    if trials < 1:
        raise InputError("need at least one trial")
    best = 0
    if isinstance(f, SparsePoly):
        if f.is_zero():
            return 0
        if k > f.total_degree():
            return 0
        for _ in range(trials):
            L = LinearTuple.random(f.field, f.n, n0, rng)
            best = max(best, _measure_once(f, k, L))
        return best
    if isinstance(f, BlackBox):
        if k > f.d:
            return 0
        for _ in range(trials):
            L = LinearTuple.random(f.field, f.n, n0, rng)
            gens = [
                project_box(derivative_box(f, alpha), L)
                for alpha in monomial_enumeration(f.n, k, "all")
            ]
            best = max(best, span_basis(gens, rng).dim)
        return best
    raise InputError("app_measure expects a SparsePoly or BlackBox")


@dataclass
class HardPolySpec:
    n: int
    d: int
    t: int
    k: int
    n0: int

    @property
    def n2(self) -> int:
        return self.n0 * (self.d - self.k)

    @property
    def n1(self) -> int:
        return self.n - self.n2

    @property
    def b_count(self) -> int:
        return comb(self.d - self.k + self.n0 - 1, self.n0 - 1)

    def validate(self):
        if not (1 <= self.k < self.d and self.n0 >= 1):
            raise InputError("need 1 <= k < d and n0 >= 1")
        if self.n1 < self.k:
            raise InputError("not enough y-variables for degree-k monomials")
        if comb(self.n1, self.k) < self.b_count:
            raise InputError(
                f"infeasible: C({self.n1},{self.k}) < {self.b_count} pairing monomials"
            )


def hard_polynomial(spec: HardPolySpec, field) -> SparsePoly:
    """The multilinear pairing polynomial: the first |B| lex degree-k
    y-monomials, each multiplied by one non-decreasing set-multilinear
    u-monomial (u has d-k blocks of n0 variables).

    Variable layout: y_1..y_{n1} then u_{1,1}..u_{d-k,n0}.
    """
    spec.validate()
    n1, n0, d, k = spec.n1, spec.n0, spec.d, spec.k
    y_monos = monomial_enumeration(n1, k, "multilinear")[: spec.b_count]
    u_monos = monomial_enumeration(n0, d - k, "set_multilinear_nondecreasing")
    assert len(u_monos) == spec.b_count
    terms = {}
    for ym, um in zip(y_monos, u_monos):
        terms[tuple(ym) + tuple(um)] = field.one
    return SparsePoly(field, spec.n, terms)


def verify_hard_poly(spec: HardPolySpec, field, rng: random.Random,
                     trials: int = 3):
    """Measured APP of the hard polynomial, together with the verdict that
    it equals C(d-k+n0-1, n0-1) exactly.

    Also drives the witness projection u_{i,j} -> z_j, y -> 0 through the
    y-monomial derivatives, which must achieve the bound on its own.
    """
    spec.validate()
    f = hard_polynomial(spec, field)
    bound = spec.b_count

    # witness projection: derivatives by the paired y-monomials then u -> z
    forms = []
    for _ in range(spec.n1):
        forms.append([field.zero] * spec.n0)
    for _block in range(spec.d - spec.k):
        for j in range(spec.n0):
            row = [field.zero] * spec.n0
            row[j] = field.one
            forms.append(row)
    L_pi = LinearTuple(field, forms, spec.n0)
    witness_dim = _measure_once(f, spec.k, L_pi)

    measured = max(witness_dim, app_measure(f, spec.k, spec.n0, rng, trials))
    if measured > bound:
        raise InputError("measured dimension exceeded the counting bound")
    return measured == bound and witness_dim == bound, measured


# --------------------------------------------------------------------------
# parameter regimes and fan-in bounds

# e to 30 digits, kept as an exact rational approximant; only the integers
# floor/ceil(k), n0 derived from it matter downstream
_E_APPROX = Fraction(271828182845904523536028747135, 10**29)


@dataclass
class RegimeParams:
    regime: str
    delta: Fraction
    c: Fraction | None
    k: int
    n0: int

    def to_json(self):
        return {
            "regime": self.regime,
            "delta": f"{self.delta.numerator}/{self.delta.denominator}",
            "c": None if self.c is None else f"{self.c.numerator}/{self.c.denominator}",
            "k": self.k,
            "n0": self.n0,
        }


def _ceil_root_power(n: int, k: int, d: int) -> int:
    """ceil(n^(k/d)) by exact integer comparison."""
    lo, hi = 1, max(2, n)
    while lo < hi:
        mid = (lo + hi) // 2
        if mid**d >= n**k:
            hi = mid
        else:
            lo = mid + 1
    return lo


def regime_params(regime: str, n: int, d: int, t: int) -> RegimeParams:
    """Derivative order and projection width for the two bound regimes."""
    if regime == "high_t":
        delta = 1 / (4 * _E_APPROX**10)
        k = int(delta * d / t)
        k = max(k, 1)
        ln_ratio = Fraction(
            math.log(max(n, 2) / max(k, 1))
        ).limit_denominator(10**12)
        ln_dk = Fraction(math.log(max(d, 2) / max(k, 1))).limit_denominator(10**12)
        if ln_dk <= 0:
            ln_dk = Fraction(1)
        c = Fraction(3, 4) * ln_ratio / ln_dk
        n0 = max(int(c * k), 1)
        return RegimeParams("high_t", delta, c, k, n0)
    if regime == "low_t":
        delta = 1 / (3 * _E_APPROX)
        num = delta * d / t
        k = int(num)
        if k < num:
            k += 1  # ceiling
        k = max(k, 1)
        n0 = _ceil_root_power(n, k, d)
        return RegimeParams("low_t", delta, None, k, min(n0, n))
    raise InputError(f"unknown regime {regime!r}")


def bound_report(n: int, d: int, t: int, s_hypothesis: int | None = None) -> dict:
    """Exact big-integer fan-in bounds for both regimes.

    Reports, per regime: the per-term measure bound s*C(m,k)*C(n0+2kt,n0),
    the hard polynomial's measure C(d-k+n0-1,n0-1), and the implied lower
    bound on the top fan-in.  Regime preconditions are evaluated and
    reported, not enforced.
    """
    if t < 1 or d < 2 or n < 1:
        raise InputError("need n >= 1, d >= 2, t >= 1")
    m = d // t + 1
    out = {"n": n, "d": d, "t": t}
    for regime in ("high_t", "low_t"):
        params = regime_params(regime, n, d, t)
        k, n0 = params.k, params.n0
        k = min(k, d - 1)
        hard_value = comb(d - k + n0 - 1, n0 - 1)
        term_bound = comb(m, k) * comb(n0 + 2 * k * t, n0)
        fanin_num = hard_value
        fanin_den = term_bound
        fanin_floor = fanin_num // fanin_den
        constraints = {
            "n >= d^2": n >= d * d,
            "n >= d^20": n >= d**20,
        }
        out[regime] = {
            "params": params.to_json() | {"k": k},
            "hard_poly_measure": str(hard_value),
            "per_term_bound": str(term_bound),
            "fanin_lower_bound": f"{fanin_num}/{fanin_den}",
            "fanin_lower_bound_floor": str(fanin_floor),
            "regime_constraints": constraints,
        }
        if s_hypothesis is not None:
            out[regime]["s_hypothesis_admissible"] = (
                s_hypothesis * term_bound >= hard_value
            )
    return out
