"""Constructions that certify learnability: combinatorial designs, explicit
non-degenerate circuits, random circuits, and the white-box checker for the
four non-degeneracy conditions.

The checker works symbolically: derivatives of c*Q^m stay in the closed
form sum of coef * Q^e * (small cofactor), so projected spans live in tiny
rings no matter how large the ambient variable count is.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field
from math import comb, isqrt

from .errors import DegeneracyError, InputError, RetryExhaustedError
from .fields import is_probable_prime
from .learner import PowerSumCircuit
from .linalg import rank_of_rows
from .multipoly import LinearTuple, SparsePoly, monomial_enumeration, random_homogeneous


@dataclass
class CombinatorialDesign:
    universe: int
    sets: list  # sorted index lists
    set_size: int
    intersection_bound: int

    def verify(self) -> bool:
        for s_i in self.sets:
            if len(s_i) != self.set_size or len(set(s_i)) != self.set_size:
                return False
            if any(not 0 <= x < self.universe for x in s_i):
                return False
        for i in range(len(self.sets)):
            for j in range(i + 1, len(self.sets)):
                inter = len(set(self.sets[i]) & set(self.sets[j]))
                if inter > self.intersection_bound:
                    return False
        return True

    def to_json(self) -> dict:
        return {"N": self.universe, "sets": [list(s) for s in self.sets]}


def _smallest_usable_prime(set_size: int, universe: int, count: int, bound: int):
    q = max(set_size, 2)
    while q * q <= universe:
        if is_probable_prime(q) and count <= q ** (bound + 1):
            return q
        q += 1
    return None


def nw_design(universe: int, set_size: int, count: int, intersection_bound: int,
              rng: random.Random | None = None) -> CombinatorialDesign:
    """A family of `count` size-`set_size` subsets of [universe] with all
    pairwise intersections <= intersection_bound.

    Uses the polynomial-graph construction over a prime q (sets are graphs
    of degree-<=bound univariate maps on a q x q grid) when the parameters
    allow it, otherwise a seeded randomized greedy search.  The returned
    design is always re-verified exhaustively.
    """
    if set_size < 1 or count < 1 or universe < set_size:
        raise InputError("degenerate design parameters")
    rng = rng or random.Random(0xD351)
    design = None
    if count == 1:
        design = CombinatorialDesign(universe, [list(range(set_size))], set_size,
                                     intersection_bound)
    if design is None:
        q = _smallest_usable_prime(set_size, universe, count, intersection_bound)
        if q is not None:
            sets = []
            degree = intersection_bound + 1  # number of free coefficients
            for idx in range(count):
                coeffs = []
                rem = idx
                for _ in range(degree):
                    coeffs.append(rem % q)
                    rem //= q
                members = []
                for x in range(set_size):
                    acc = 0
                    for c in reversed(coeffs):
                        acc = (acc * x + c) % q
                    members.append(x * q + acc)
                sets.append(sorted(members))
            design = CombinatorialDesign(universe, sets, set_size, intersection_bound)
            if not design.verify():
                design = None
    if design is None:
        # randomized greedy fallback
        sets = []
        for _ in range(count):
            placed = False
            for _attempt in range(10**4):
                cand = sorted(rng.sample(range(universe), set_size))
                cand_set = set(cand)
                if all(
                    len(cand_set & set(prev)) <= intersection_bound for prev in sets
                ):
                    sets.append(cand)
                    placed = True
                    break
            if not placed:
                raise InputError(
                    "design infeasible: greedy search exhausted its attempts"
                )
        design = CombinatorialDesign(universe, sets, set_size, intersection_bound)
    if not design.verify():
        raise RetryExhaustedError("constructed design failed verification")
    return design


def random_circuit(field, n: int, d: int, t: int, s: int,
                   rng: random.Random) -> PowerSumCircuit:
    """Uniform dense coefficients for every Q_i; unit top coefficients."""
    if t < 1 or d % t != 0:
        raise InputError("t must divide d")
    return PowerSumCircuit(
        field, n, t, d // t,
        [(field.one, random_homogeneous(field, n, t, rng)) for _ in range(s)],
    )


def build_explicit_witness(field, n: int, d: int, t: int, s: int, k: int, n0: int,
                           rng: random.Random | None = None):
    """The design-based circuit Q_i = R_i + G_i with the projection that
    kills every y-variable, guaranteed non-degenerate in conditions 1, 3, 4.

    Variables are laid out z-first: x_1..x_{n0} are the surviving z's and
    the remaining n - n0 are the y's feeding the first design.
    """
    if t < 1 or d % t != 0:
        raise InputError("t must divide d")
    m = d // t
    if not 1 <= k < m:
        raise InputError("k outside 1 <= k < m")
    if n0 < 2 or n0 >= n:
        raise InputError("need 2 <= n0 < n")
    rng = rng or random.Random(0x217)
    b = comb(n0 + t - 2, t - 1)
    n_y = n - n0
    if n_y < s * k * b:  # quick necessary bound before the greedy runs
        raise InputError(
            f"infeasible witness: need n - n0 >= s*k*b = {s * k * b}, have {n_y}"
        )
    y_design = nw_design(n_y, k * b, s, k - 1, rng)

    p1 = max(isqrt(n0) // 2, 1)
    z_bound = min(t * (m - k), isqrt(n0)) // 10
    # keep z1 out of the z-design so condition 4 survives the z1 = 0 cut
    if n0 - 1 < s * p1 and z_bound == 0:
        raise InputError(
            f"infeasible witness: disjoint z-design needs n0 - 1 >= s*p1 = {s * p1}"
        )
    raw = nw_design(n0 - 1, p1, s, z_bound, rng)
    z_sets = [[idx + 1 for idx in st] for st in raw.sets]  # shift past z1

    gammas = monomial_enumeration(n0, t - 1, "all")
    terms = []
    for i in range(s):
        members = y_design.sets[i]
        r_terms = {}
        for j in range(k):
            for l in range(b):
                y_idx = n0 + members[j * b + l]
                exps = [0] * n
                exps[y_idx] += 1
                for v, e in enumerate(gammas[l]):
                    exps[v] += e
                r_terms[tuple(exps)] = field.one
        r_i = SparsePoly(field, n, r_terms)
        ell = SparsePoly(field, n)
        for z_idx in z_sets[i]:
            ell = ell.add(SparsePoly.variable(field, n, z_idx))
        g_i = ell.pow(t)
        terms.append((field.one, r_i.add(g_i)))
    circuit = PowerSumCircuit(field, n, t, m, terms)

    forms = []
    for l in range(n):
        row = [field.zero] * n0
        if l < n0:
            row[l] = field.one
        forms.append(row)
    return circuit, LinearTuple(field, forms, n0)


@dataclass
class NonDegeneracyReport:
    verdicts: dict  # condition number -> bool
    measured: dict  # condition number -> dict of measured/expected dims
    L: LinearTuple
    P: LinearTuple
    seed: int | None = None

    def all_pass(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> dict:
        return {
            "conditions": {str(c): bool(v) for c, v in self.verdicts.items()},
            "measured": {str(c): v for c, v in self.measured.items()},
            "seed": self.seed,
        }


def _power_derivative_span(field, base: SparsePoly, exponent: int, n_ambient: int,
                           alphas, project: LinearTuple, out_monos):
    """Coefficient rows of pi(d^alpha base^exponent) for each alpha, computed
    through the chain-rule form sum coef * base^e * cofactor."""
    rows = []
    proj_base = base.compose_affine(project)
    pow_cache = {exponent: None}
    for alpha in alphas:
        # pieces: list of (coefficient, exponent of base, cofactor poly)
        pieces = [(field.one, exponent, SparsePoly.constant(field, n_ambient, field.one))]
        for var, reps in enumerate(alpha):
            for _ in range(reps):
                nxt = []
                dbase = base.partial_derivative(
                    tuple(1 if i == var else 0 for i in range(n_ambient))
                )
                for coef, e, cof in pieces:
                    if e > 0 and not dbase.is_zero():
                        nxt.append(
                            (field.mul(coef, field.from_int(e)), e - 1, cof.mul(dbase))
                        )
                    dcof = cof.partial_derivative(
                        tuple(1 if i == var else 0 for i in range(n_ambient))
                    )
                    if not dcof.is_zero():
                        nxt.append((coef, e, dcof))
                pieces = nxt
        acc = SparsePoly.zero(field, project.n_out)
        for coef, e, cof in pieces:
            if e not in pow_cache or pow_cache[e] is None:
                pow_cache[e] = proj_base.pow(e)
            acc = acc.add(pow_cache[e].scale(coef).mul(cof.compose_affine(project)))
        rows.append(acc.coefficient_vector(out_monos))
    return rows


def check_nondegeneracy(circuit: PowerSumCircuit, k: int, n0: int, m0: int,
                        rng: random.Random, L: LinearTuple | None = None,
                        P: LinearTuple | None = None,
                        seed: int | None = None) -> NonDegeneracyReport:
    """Exact white-box verdicts for the four non-degeneracy conditions under
    a random (or supplied) pair of projections."""
    field = circuit.field
    n, t, m, s = circuit.n, circuit.t, circuit.m, circuit.s
    d = circuit.d
    if not 1 <= k < m:
        raise InputError("k outside 1 <= k < m")
    char = field.characteristic()
    if char != 0 and char <= 2 * d:
        raise InputError("field characteristic must exceed 2d")
    e = m - k
    kt1 = k * (t - 1)
    L = L or LinearTuple.random(field, n, n0, rng)
    P = P or LinearTuple.random(field, n0, m0, rng)

    alphas = monomial_enumeration(n, k, "all")
    u_monos = monomial_enumeration(n0, d - k, "all")
    term_rows = [
        _power_derivative_span(field, q, m, n, alphas, L, u_monos)
        for _, q in circuit.terms
    ]
    dims_U_i = [rank_of_rows(field, rows) for rows in term_rows]
    f_rows = []
    for a_idx in range(len(alphas)):
        acc = [field.zero] * len(u_monos)
        for (c, _), rows in zip(circuit.terms, term_rows):
            for col, v in enumerate(rows[a_idx]):
                if not field.is_zero(v):
                    acc[col] = field.add(acc[col], field.mul(c, v))
        f_rows.append(acc)
    dim_U = rank_of_rows(field, f_rows)
    r_expected = comb(n0 + kt1 - 1, kt1)
    cond1 = dim_U == s * r_expected and all(x == r_expected for x in dims_U_i)

    g_list = [q.compose_affine(L) for _, q in circuit.terms]
    ge_list = [g.pow(e) for g in g_list]

    # condition 3: the 2k(t-1)-shifted spans of the G_i^e sum directly
    shift_monos = monomial_enumeration(n0, 2 * kt1, "all")
    tilde_monos = monomial_enumeration(n0, t * e + 2 * kt1, "all")
    tilde_rows_per_term = []
    for ge in ge_list:
        rows = []
        for mu in shift_monos:
            shifted = ge.mul(SparsePoly(field, n0, {mu: field.one}))
            rows.append(shifted.coefficient_vector(tilde_monos))
        tilde_rows_per_term.append(rows)
    dims_tilde = [rank_of_rows(field, rows) for rows in tilde_rows_per_term]
    all_tilde = [row for rows in tilde_rows_per_term for row in rows]
    cond3 = rank_of_rows(field, all_tilde) == sum(dims_tilde)

    # condition 4: z1 = 0 restrictions stay independent
    cut_monos = [mn for mn in monomial_enumeration(n0, t * e, "all") if mn[0] == 0]
    cut_rows = [ge.substitute_zero(0).coefficient_vector(cut_monos) for ge in ge_list]
    cond4 = rank_of_rows(field, cut_rows) == s

    # condition 2: spans of pi_P(d^k G_i^e) in the w-ring
    betas = monomial_enumeration(n0, k, "all")
    w_monos = monomial_enumeration(m0, t * e - k, "all")
    w_rows_per_term = [
        _power_derivative_span(field, g, e, n0, betas, P, w_monos) for g in g_list
    ]
    dims_W_i = [rank_of_rows(field, rows) for rows in w_rows_per_term]
    g0_rows = []
    for b_idx in range(len(betas)):
        acc = [field.zero] * len(w_monos)
        for rows in w_rows_per_term:
            for col, v in enumerate(rows[b_idx]):
                if not field.is_zero(v):
                    acc[col] = field.add(acc[col], v)
        g0_rows.append(acc)
    dim_W = rank_of_rows(field, g0_rows)
    q_expected = comb(m0 + kt1 - 1, kt1)
    cond2 = dim_W == s * q_expected and all(x == q_expected for x in dims_W_i)

    return NonDegeneracyReport(
        verdicts={1: cond1, 2: cond2, 3: cond3, 4: cond4},
        measured={
            1: {"dim_U": dim_U, "dims_U_i": dims_U_i, "expected_each": r_expected},
            2: {"dim_W": dim_W, "dims_W_i": dims_W_i, "expected_each": q_expected},
            3: {"dims_tilde": dims_tilde, "dim_sum": rank_of_rows(field, all_tilde)},
            4: {"rank": rank_of_rows(field, cut_rows), "expected": s},
        },
        L=L,
        P=P,
        seed=seed,
    )
