"""End-to-end reconstruction of f = c_1 Q_1^m + ... + c_s Q_s^m from a
black box, when the representation is non-degenerate.

Pipeline per run:
  1. project the k-th order derivative span of f through a random linear
     substitution L into n0 variables and compute a basis of U,
  2. the multi-gcd kernel turns U into a basis of V = <G_1^e, ..., G_s^e>
     (G_i the projected Q_i, e = m - k),
  3. a second projection P into m0 variables gives W and the operators
     g -> pi_P(d^a g); decomposing (V, W) under them isolates each G_i^e,
  4. reruns with a perturbed first L-column extend the recovered G_i^e
     values from n0 variables back to all of x-space, where an e-th root
     along lines and one dense linear solve produce each Q_i up to scale,
  5. the s coefficients come from one more small linear solve, and a
     randomized identity test certifies the model.

All randomness flows through explicit generators; every checked dimension
is compared against the closed-form binomial it must equal, and failures
surface as DegeneracyError naming the condition (1-4) with measurements.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field
from math import comb

from .blackbox import (
    BlackBox,
    LinearComboBox,
    PolyBox,
    SpanBasis,
    check_homogeneous,
    derivative_box,
    project_box,
    span_basis,
)
from .decomp import Decomposition, OperatorBuildError, decompose, operator_matrices
from .errors import DegeneracyError, InputError, RetryExhaustedError
from .fields import field_to_spec
from .linalg import Matrix, _echelon, invert, mat_solve
from .multipoly import LinearTuple, SparsePoly, monomial_enumeration
from .serialize import poly_from_json, poly_to_json
from .unipoly import UniPoly, series_eth_root, uni_interpolate


# --------------------------------------------------------------------------
# circuit representation


@dataclass
class PowerSumCircuit:
    """f = sum of c_i * Q_i^m with homogeneous degree-t quadrics Q_i."""

    field: object
    n: int
    t: int
    m: int
    terms: list  # (coefficient, SparsePoly)

    def __post_init__(self):
        for c, q in self.terms:
            if self.field.is_zero(c):
                raise InputError("zero coefficient in power-sum circuit")
            if q.n != self.n or q.field != self.field:
                raise InputError("term polynomial has wrong arity or field")
            if q.is_zero() or not q.is_homogeneous() or q.total_degree() != self.t:
                raise InputError("terms must be homogeneous of the declared degree")

    @property
    def d(self) -> int:
        return self.t * self.m

    @property
    def s(self) -> int:
        return len(self.terms)

    def evaluate(self, point):
        f = self.field
        acc = f.zero
        for c, q in self.terms:
            acc = f.add(acc, f.mul(c, f.pow(q.evaluate(point), self.m)))
        return acc

    def to_box(self) -> "PowerSumBox":
        return PowerSumBox(self)

    def to_json(self) -> dict:
        return {
            "field": field_to_spec(self.field),
            "n": self.n,
            "t": self.t,
            "m": self.m,
            "terms": [
                {"coeff": self.field.to_str(c), "Q": poly_to_json(q)}
                for c, q in self.terms
            ],
        }

    @classmethod
    def from_json(cls, data: dict, field) -> "PowerSumCircuit":
        try:
            terms = [
                (field.parse(item["coeff"]), poly_from_json(item["Q"], field))
                for item in data["terms"]
            ]
            return cls(field, int(data["n"]), int(data["t"]), int(data["m"]), terms)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed circuit JSON: {exc}") from exc


class PowerSumBox(BlackBox):
    """White-box-backed oracle for a power-sum circuit.

    Point queries and line restrictions go through the circuit's structure
    (restrict each Q_i, then power and sum), which is what keeps the
    learner's many derivative queries affordable.  For quadratic Q_i the
    restriction uses cached matrix-vector products.
    """

    def __init__(self, circuit: PowerSumCircuit):
        super().__init__(circuit.field, circuit.n, circuit.d, "white-box-backed")
        self.circuit = circuit
        self._quad = None
        self._side_cache = {}
        if circuit.t == 2:
            self._quad = [self._to_matrix(q) for _, q in circuit.terms]

    def _to_matrix(self, q: SparsePoly):
        f = self.field
        n = self.n
        mat = [[f.zero] * n for _ in range(n)]
        for exps, c in q.terms.items():
            idx = [i for i, e in enumerate(exps) if e]
            if len(idx) == 1:
                i = idx[0]
                if exps[i] == 2:
                    mat[i][i] = c
                else:
                    raise InputError("non-quadratic term")
            else:
                i, j = idx
                half = f.div(c, f.from_int(2))
                mat[i][j] = f.add(mat[i][j], half)
                mat[j][i] = f.add(mat[j][i], half)
        return mat

    def _side(self, vec):
        """Per-Q (M_i . vec, vec^T M_i vec) with memoization."""
        hit = self._side_cache.get(vec)
        if hit is not None:
            return hit
        f = self.field
        out = []
        if f.kind == "prime":
            p = f.p
            for mat in self._quad:
                mv = [sum(a * b for a, b in zip(row, vec) if a) % p for row in mat]
                val = sum(a * b for a, b in zip(vec, mv) if a) % p
                out.append((mv, val))
        else:
            for mat in self._quad:
                mv = []
                for row in mat:
                    acc = f.zero
                    for a, b in zip(row, vec):
                        if not f.is_zero(a):
                            acc = f.add(acc, f.mul(a, b))
                    mv.append(acc)
                val = f.zero
                for a, b in zip(vec, mv):
                    val = f.add(val, f.mul(a, b))
                out.append((mv, val))
        self._side_cache[vec] = out
        return out

    def _query(self, point):
        f = self.field
        acc = f.zero
        if self._quad is not None:
            for (_, val), (c, _) in zip(self._side(point), self.circuit.terms):
                acc = f.add(acc, f.mul(c, f.pow(val, self.circuit.m)))
            return acc
        for c, q in self.circuit.terms:
            acc = f.add(acc, f.mul(c, f.pow(q.evaluate(point), self.circuit.m)))
        return acc

    def restrict_to_line(self, base, direction):
        f = self.field
        base = tuple(base)
        direction = tuple(direction)
        if self._quad is not None and f.kind == "prime":
            # raw-integer path: convolve the restricted quadratic up to Q^m
            p = f.p
            m_exp = self.circuit.m
            base_sides = self._side(base)
            dir_sides = self._side(direction)
            total = [0] * (2 * m_exp + 1)
            for term_idx, (c, _) in enumerate(self.circuit.terms):
                mv_base, q_base = base_sides[term_idx]
                _, q_dir = dir_sides[term_idx]
                cross = sum(a * b for a, b in zip(direction, mv_base) if a) % p
                tri = (q_base, (2 * cross) % p, q_dir)
                cur = [1]
                for _ in range(m_exp):
                    nxt = [0] * (len(cur) + 2)
                    for i2, v in enumerate(cur):
                        if v:
                            nxt[i2] += v * tri[0]
                            nxt[i2 + 1] += v * tri[1]
                            nxt[i2 + 2] += v * tri[2]
                    cur = [x % p for x in nxt]
                for i2, v in enumerate(cur):
                    if v:
                        total[i2] += c * v
            return UniPoly(f, [v % p for v in total])
        acc = UniPoly.zero(f)
        if self._quad is not None:
            base_sides = self._side(base)
            dir_sides = self._side(direction)
            for term_idx, (c, _) in enumerate(self.circuit.terms):
                mv_base, q_base = base_sides[term_idx]
                _, q_dir = dir_sides[term_idx]
                cross = f.zero
                for a, b in zip(direction, mv_base):
                    if not f.is_zero(a):
                        cross = f.add(cross, f.mul(a, b))
                uni = UniPoly(f, [q_base, f.add(cross, cross), q_dir])
                acc = acc.add(uni.pow(self.circuit.m).scale(c))
            return acc
        for c, q in self.circuit.terms:
            uni = q.restrict_to_line(base, direction)
            acc = acc.add(uni.pow(self.circuit.m).scale(c))
        return acc


# --------------------------------------------------------------------------
# parameters


@dataclass
class ParamSelection:
    n0: int
    m0: int
    k: int
    clamped: list


def _ceil_log_ratio(s: int, n: int, factor: int) -> int:
    """Smallest k with n^k >= s^factor (exact integer comparison)."""
    if s <= 1:
        return 0
    target = s**factor
    k = 0
    power = 1
    while power < target:
        power *= n
        k += 1
    return k


def _iroot(x: int, r: int) -> int:
    """Integer floor of x^(1/r)."""
    if x < 0 or r < 1:
        raise InputError("bad integer root arguments")
    if x in (0, 1):
        return x
    lo, hi = 1, x
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid**r <= x:
            lo = mid
        else:
            hi = mid - 1
    return lo


def select_parameters(n: int, d: int, t: int, s: int) -> ParamSelection:
    """The closed-form projection/derivative parameters, clamped into the
    feasible box 1 <= k < m, 2 <= n0, 1 <= m0 <= n0.

    Raw values: n0 = floor(n^(1/3t)), m0 = floor(n^(1/15t^2)),
    k = ceil(130 t log s / log n).
    """
    if t < 1 or d % t != 0:
        raise InputError("degree must be a multiple of the term degree")
    m = d // t
    if m < 2:
        raise InputError("no feasible derivative order: d too small relative to t")
    clamped = []
    n0 = _iroot(n, 3 * t)
    m0 = _iroot(n, 15 * t * t)
    k = _ceil_log_ratio(s, n, 130 * t)
    if k < 1:
        k = 1
        clamped.append("k_low")
    if k >= m:
        k = m - 1
        clamped.append("k_high")
    if n0 < 2:
        n0 = 2
        clamped.append("n0_low")
    if m0 < 1:
        m0 = 1
        clamped.append("m0_low")
    if m0 > n0:
        m0 = n0
        clamped.append("m0_high")
    return ParamSelection(n0, m0, k, clamped)


def _comb0(a, b):
    return comb(a, b) if a >= 0 and b >= 0 else 0


def _params_feasible(n, d, t, s, k, n0, m0) -> bool:
    """Counting constraints every successful run must satisfy."""
    m = d // t
    if not (1 <= k < m and 2 <= n0 <= n and 1 <= m0 <= n0):
        return False
    kt1 = k * (t - 1)
    te = t * (m - k)
    if te - k < 0:
        return False
    q = comb(m0 + kt1 - 1, kt1)
    r = comb(n0 + kt1 - 1, kt1)
    return (
        s * q <= _comb0(te - k + m0 - 1, m0 - 1)
        and comb(n0 + k - 1, k) >= s * q
        and s * r <= comb(n + k - 1, k)
        and s * r <= _comb0(d - k + n0 - 1, n0 - 1)
        and s * comb(n0 + 2 * kt1 - 1, 2 * kt1)
        <= comb(te + 2 * kt1 + n0 - 1, n0 - 1)
        and _comb0(te + n0 - 2, n0 - 2) >= s  # z1 = 0 slice carries s forms
    )


def _auto_candidates(n, d, t, s):
    """Feasibility-filtered (k, n0, m0) attempts, cheapest first.

    Starts from the closed-form selection when it is feasible, then walks
    minimal feasible parameters per k with one escalated variant each.
    """
    m = d // t
    kt1 = lambda k: k * (t - 1)  # noqa: E731
    cands = []
    sel = select_parameters(n, d, t, s)
    if _params_feasible(n, d, t, s, sel.k, sel.n0, sel.m0):
        cands.append((sel.k, sel.n0, sel.m0))
    for k in range(1, m):
        m0 = next(
            (
                c
                for c in range(1, n + 1)
                if s * comb(c + kt1(k) - 1, kt1(k))
                <= _comb0(t * (m - k) - k + c - 1, c - 1)
            ),
            None,
        )
        if m0 is None:
            continue
        n0 = next(
            (
                c
                for c in range(max(2, m0), n + 1)
                if _params_feasible(n, d, t, s, k, c, m0)
            ),
            None,
        )
        if n0 is None:
            continue
        cands.append((k, n0, m0))
        n0_big = min(2 * n0, n)
        m0_big = min(2 * m0, n0_big)
        if _params_feasible(n, d, t, s, k, n0_big, m0_big):
            cands.append((k, n0_big, m0_big))
    seen = set()
    uniq = []
    for c in cands:
        if c not in seen:
            seen.add(c)
            uniq.append(c)
    uniq.sort(key=lambda c: (s * comb(c[1] + kt1(c[0]) - 1, kt1(c[0])), c[0]))
    return uniq


@dataclass
class LearnerConfig:
    field: object
    seed: int = 0
    n0: int | None = None
    m0: int | None = None
    k: int | None = None
    mode: str = "auto"  # auto_params | explicit
    ratio_test_points: int | None = None
    retry_cap: int = 8
    checked: bool = True
    identity_points: int = 50


# --------------------------------------------------------------------------
# pipeline steps


def compute_U(f: BlackBox, L: LinearTuple, k: int, rng: random.Random,
              expected_dim=None, checked=False, gen_cap=None) -> SpanBasis:
    """Basis of <pi_L(d^k f)> from all order-k derivative oracles.

    With gen_cap the span starts from a random generator subset and only
    escalates to the full set when that subset comes up short.
    """
    alphas = monomial_enumeration(f.n, k, "all")
    boxes = {}

    def box_for(alpha):
        if alpha not in boxes:
            boxes[alpha] = project_box(derivative_box(f, alpha), L)
        return boxes[alpha]

    if gen_cap is not None and gen_cap < len(alphas):
        order = list(range(len(alphas)))
        rng.shuffle(order)
        chosen = [alphas[i] for i in sorted(order[:gen_cap])]
    else:
        chosen = alphas
    while True:
        basis = span_basis([box_for(a) for a in chosen], rng, expected_dim=expected_dim)
        if expected_dim is None or basis.dim == expected_dim or len(chosen) == len(alphas):
            break
        chosen = alphas
    if checked and expected_dim is not None and basis.dim != expected_dim:
        raise DegeneracyError(
            "derivative span dimension mismatch",
            condition=1,
            expected=expected_dim,
            measured=basis.dim,
        )
    return basis


class NumeratorBox(BlackBox):
    """A multi-gcd solution: (sum a_i f_i) / z1^(k(t-1)), with the matching
    z2-side numerator as the fallback on the z1 = 0 hyperplane."""

    def __init__(self, u_elements, a_coeffs, b_coeffs, kt1, degree):
        el = u_elements[0]
        super().__init__(el.field, el.n, degree)
        self.u_elements = list(u_elements)
        self.a_coeffs = list(a_coeffs)
        self.b_coeffs = list(b_coeffs)
        self.kt1 = kt1

    def _numerator(self, point, coeffs):
        f = self.field
        if f.kind == "prime":
            return sum(
                c * el.eval(point) for c, el in zip(coeffs, self.u_elements) if c
            ) % f.p
        acc = f.zero
        for c, el in zip(coeffs, self.u_elements):
            if not f.is_zero(c):
                acc = f.add(acc, f.mul(c, el.eval(point)))
        return acc

    def _query(self, point):
        f = self.field
        if self.kt1 == 0:
            return self._numerator(point, self.a_coeffs)
        if not f.is_zero(point[0]):
            num = self._numerator(point, self.a_coeffs)
            return f.div(num, f.pow(point[0], self.kt1))
        if not f.is_zero(point[1]):
            num = self._numerator(point, self.b_coeffs)
            return f.div(num, f.pow(point[1], self.kt1))
        # both divisor variables vanish: take the value along the z1 axis line
        axis = tuple(
            f.one if i == 0 else f.zero for i in range(self.n)
        )
        return self.restrict_to_line(point, axis).coeff(0)

    def restrict_to_line(self, base, direction):
        f = self.field
        base = tuple(base)
        direction = tuple(direction)
        if self.kt1 == 0:
            coeffs, var = self.a_coeffs, None
        elif not (f.is_zero(base[0]) and f.is_zero(direction[0])):
            coeffs, var = self.a_coeffs, 0
        elif not (f.is_zero(base[1]) and f.is_zero(direction[1])):
            coeffs, var = self.b_coeffs, 1
        else:
            raise InputError("line lies inside z1 = z2 = 0; cannot divide")
        num_degree = self.d + self.kt1
        pts = []
        for tau in range(num_degree + 1):
            tt = f.from_int(tau)
            pt = tuple(f.add(b, f.mul(tt, dd)) for b, dd in zip(base, direction))
            pts.append((tt, self._numerator(pt, coeffs)))
        numer = uni_interpolate(pts, f)
        if var is None:
            return numer
        divisor = UniPoly(f, [base[var], direction[var]]).pow(self.kt1)
        quo, rem = numer.divmod(divisor)
        if not rem.is_zero():
            raise DegeneracyError(
                "multi-gcd numerator is not divisible by the shift power",
                condition=3,
            )
        return quo


def multi_gcd(U_basis: SpanBasis, k: int, t: int, rng: random.Random,
              expected_s=None) -> list:
    """Kernel of the two-shift system, returned as V-basis oracles.

    Instantiates a1 z2^(k(t-1)) f_1 + ... - b1 z1^(k(t-1)) f_1 - ... = 0 at
    random points; each kernel vector is one numerator pair.  A kernel
    bigger than expected gets more points; smaller means the Q_i's shifted
    spans genuinely overlap (condition 3).
    """
    els = U_basis.elements
    sr = len(els)
    if sr == 0:
        raise InputError("empty U basis")
    field = els[0].field
    n0 = els[0].n
    if n0 < 2:
        raise InputError("multi-gcd needs at least two projected variables")
    kt1 = k * (t - 1)
    n_points = 2 * sr + 8
    points = [tuple(field.sample(rng) for _ in range(n0)) for _ in range(n_points)]
    for _ in range(4):
        rows = []
        for pt in points:
            z1p = field.pow(pt[0], kt1)
            z2p = field.pow(pt[1], kt1)
            vals = [el.eval(pt) for el in els]
            rows.append(
                [field.mul(z2p, v) for v in vals]
                + [field.neg(field.mul(z1p, v)) for v in vals]
            )
        kernel = mat_solve(Matrix(field, rows)).kernel
        if expected_s is None or len(kernel) <= expected_s:
            break
        points.extend(
            tuple(field.sample(rng) for _ in range(n0)) for _ in range(sr)
        )
    if expected_s is not None and len(kernel) != expected_s:
        raise DegeneracyError(
            "multi-gcd kernel dimension mismatch",
            condition=3,
            expected=expected_s,
            measured=len(kernel),
        )
    degree = els[0].d - kt1
    return [
        NumeratorBox(els, vec[:sr], vec[sr:], kt1, degree) for vec in kernel
    ]


def compute_W(v_boxes, P: LinearTuple, k: int, rng: random.Random,
              expected_dim=None, checked=False):
    """Random g in V, and a basis of W = <pi_P(d^k g)>."""
    field = v_boxes[0].field
    n0 = v_boxes[0].n
    coeffs = [field.sample_nonzero(rng) for _ in v_boxes]
    g = LinearComboBox(v_boxes, coeffs)
    gens = [
        project_box(derivative_box(g, alpha), P)
        for alpha in monomial_enumeration(n0, k, "all")
    ]
    basis = span_basis(gens, rng, expected_dim=expected_dim)
    if checked and expected_dim is not None and basis.dim != expected_dim:
        raise DegeneracyError(
            "projected-derivative span of g has wrong dimension",
            condition=2,
            expected=expected_dim,
            measured=basis.dim,
        )
    return g, basis, coeffs


def recover_components(state, rng: random.Random) -> Decomposition:
    """Step-6 delegation: split (V, W) under the operator set."""
    return decompose(state.V_basis, state.W_basis, state.ops, rng)


@dataclass
class PipelineState:
    L: LinearTuple
    P: LinearTuple | None
    U_basis: SpanBasis
    V_basis: SpanBasis | None
    W_basis: SpanBasis | None
    ops: object | None
    components: list | None
    e: int
    k: int
    n0: int
    m0: int | None
    decomposition: Decomposition | None = None


def _wrap_span(boxes, rng):
    span = span_basis(boxes, rng, expected_dim=len(boxes))
    if span.dim != len(boxes):
        raise RetryExhaustedError("kernel oracles evaluated as dependent")
    return span


def _run_reference(f, n, d, t, s, k, n0, m0, rng, checked, retry_cap):
    """Steps 1-6 with fully checked dimensions; returns the pipeline state
    with decomposed components c_i' G_i^e."""
    field = f.field
    m = d // t
    kt1 = k * (t - 1)
    r = comb(n0 + kt1 - 1, kt1)
    q = comb(m0 + kt1 - 1, kt1)
    L = LinearTuple.random(field, n, n0, rng)
    U = compute_U(f, L, k, rng, expected_dim=s * r, checked=checked)
    v_boxes = multi_gcd(U, k, t, rng, expected_s=s)
    last_exc = None
    for _ in range(retry_cap):
        P = LinearTuple.random(field, n0, m0, rng)
        try:
            g, W, _ = compute_W(v_boxes, P, k, rng, expected_dim=s * q, checked=checked)
            V_span = _wrap_span(v_boxes, rng)
            ops = operator_matrices(V_span, W, P, k, rng)
            dec = decompose(V_span, W, ops, rng)
        except (OperatorBuildError, RetryExhaustedError) as exc:
            last_exc = exc
            continue
        state = PipelineState(L, P, U, V_span, W, ops, None, m - k, k, n0, m0)
        state.components = [boxes[0] for boxes, _ in dec.components]
        state.decomposition = dec
        return state
    raise last_exc if last_exc else RetryExhaustedError("reference run failed")


# --------------------------------------------------------------------------
# step 7-8 infrastructure


@dataclass
class LearnerInfra:
    """Everything the recovery phase needs from a completed reference run.

    Reruns keep only the L-columns indexed by shared_cols (plus the slice
    geometry on them); all other columns are redrawn per rerun so every
    rerun contributes a fresh subspace of coefficient constraints.
    """

    f: BlackBox
    n: int
    d: int
    t: int
    s: int
    m: int
    k: int
    n0: int
    m0: int
    e: int
    state: PipelineState
    shared_cols: list  # z-variable indices (>= 1) whose L-columns stay fixed
    slice_points: list  # supported on the shared columns, z1 = 0, z2 != 0
    ref_slice_values: list  # [i][l] = component_i at slice point l
    ref_square: Matrix  # first s slice points, invertible
    anchor_vals: list  # component_i at slice point 0
    rng: random.Random
    power_memo: dict = dc_field(default_factory=dict)

    @property
    def field(self):
        return self.f.field

    @property
    def components(self):
        return self.state.components


def _slice_point(field, n0, rng):
    """Random z with z1 = 0 and z2 != 0 (so both numerator sides work)."""
    pt = [field.zero, field.sample_nonzero(rng)]
    pt.extend(field.sample(rng) for _ in range(n0 - 2))
    return tuple(pt)


def _sub_slice_point(field, n0, shared_cols, rng):
    """Like _slice_point but supported only on the shared z-variables."""
    pt = [field.zero] * n0
    pt[shared_cols[0]] = field.sample_nonzero(rng)
    for j in shared_cols[1:]:
        pt[j] = field.sample(rng)
    return tuple(pt)


def _min_shared_cols(n0, te, s):
    """Fewest shared slice variables on which s degree-te forms can stay
    independent (a slice-local analogue of condition 4)."""
    for c in range(1 if s == 1 else 2, n0):
        if comb(te + c - 1, c - 1) >= s:
            return c
    return n0 - 1


def _build_infra(f, n, d, t, s, k, n0, m0, state, config, rng) -> LearnerInfra:
    field = f.field
    te = t * (d // t - k)
    T = config.ratio_test_points or (2 * d + 1)
    T = max(T, s + 4)
    n_shared = _min_shared_cols(n0, te, s)
    while n_shared <= n0 - 1:
        shared_cols = list(range(1, 1 + n_shared))
        for _ in range(config.retry_cap):
            slice_pts = [
                _sub_slice_point(field, n0, shared_cols, rng) for _ in range(T)
            ]
            vals = [[comp.eval(pt) for pt in slice_pts] for comp in state.components]
            anchor_vals = [row[0] for row in vals]
            if any(field.is_zero(v) for v in anchor_vals):
                continue
            square = Matrix(field, [[vals[i][l] for i in range(s)] for l in range(s)])
            if mat_solve(square).rank < s:
                break  # components dependent on this slice; widen it
            return LearnerInfra(
                f, n, d, t, s, d // t, k, n0, m0, d // t - k,
                state, shared_cols, slice_pts, vals, square, anchor_vals, rng,
            )
        n_shared += 1
    raise DegeneracyError(
        "projected components stay dependent on the z1 = 0 slice",
        condition=4,
    )


class _MatchFailure(Exception):
    pass


def _lite_rerun(infra: LearnerInfra, rng):
    """Steps 1-3 under a fresh L agreeing with the reference only on the
    shared slice columns, un-mixed against the reference restriction there.
    Returns the matched, scaled component oracles c_i' * pi_L~(Q_i)^e."""
    field = infra.field
    s = infra.s
    kt1 = infra.k * (infra.t - 1)
    r = comb(infra.n0 + kt1 - 1, kt1)
    L_new = infra.state.L
    for j in range(infra.n0):
        if j not in infra.shared_cols:
            L_new = L_new.replace_column(j, [field.sample(rng) for _ in range(infra.n)])
    gen_total = comb(infra.n + infra.k - 1, infra.k)
    cap = min(gen_total, max(2 * s * r, s * r + 8))
    U = compute_U(infra.f, L_new, infra.k, rng, expected_dim=s * r,
                  checked=True, gen_cap=cap)
    v_boxes = multi_gcd(U, infra.k, infra.t, rng, expected_s=s)
    # express each mixture's slice restriction over the reference components
    rows = []
    for box in v_boxes:
        vals = [box.eval(pt) for pt in infra.slice_points]
        sol = mat_solve(infra.ref_square, Matrix(field, [[v] for v in vals[:s]]))
        if not sol.consistent or sol.rank < s:
            raise _MatchFailure("slice system singular")
        x = sol.particular[0]
        for l in range(s, len(infra.slice_points)):
            acc = field.zero
            for i in range(s):
                acc = field.add(acc, field.mul(x[i], infra.ref_slice_values[i][l]))
            if acc != vals[l]:
                raise _MatchFailure("slice expression fails verification")
        rows.append(x)
    try:
        m_inv = invert(Matrix(field, rows))
    except InputError as exc:
        raise _MatchFailure("mixing matrix singular") from exc
    return [LinearComboBox(v_boxes, m_inv.entries[i]) for i in range(s)], L_new


def _monomial_row(field, monos, point):
    row = []
    for exps in monos:
        acc = field.one
        for i, e in enumerate(exps):
            if e == 1:
                acc = field.mul(acc, point[i])
            elif e:
                acc = field.mul(acc, field.pow(point[i], e))
        row.append(acc)
    return row


def _harvest_lines(infra, comps, L_cur, lines, rng, rows, rhs):
    """Root-normalized component values along lines from the slice anchor,
    appended as dense interpolation constraints."""
    field = infra.field
    t, e = infra.t, infra.e
    te = t * e
    anchor_z = infra.slice_points[0]
    monos = monomial_enumeration(infra.n, t, "all")
    for zg in lines:
        taus = list(range(1, te + 1))
        z_pts = [
            tuple(
                field.add(a, field.mul(field.from_int(tau), field.sub(g, a)))
                for a, g in zip(anchor_z, zg)
            )
            for tau in taus
        ]
        per_comp_vals = [[comp.eval(pt) for pt in z_pts] for comp in comps]
        roots = []
        ok = True
        for i in range(infra.s):
            inv_anchor = field.inv(infra.anchor_vals[i])
            samples = [(field.zero, field.one)] + [
                (field.from_int(tau), field.mul(v, inv_anchor))
                for tau, v in zip(taus, per_comp_vals[i])
            ]
            h = uni_interpolate(samples, field)
            if h.coeff(0) != field.one:
                ok = False
                break
            root = series_eth_root(h, e, t)
            if root.pow(e).truncate(te + 1) != h:
                ok = False
                break
            roots.append(root)
        if not ok:
            continue
        for tau in range(1, t + 1):
            z_tau = z_pts[tau - 1]
            x_pt = L_cur.apply(z_tau)
            rows.append(_monomial_row(field, monos, x_pt))
            for i in range(infra.s):
                rhs[i].append(roots[i].evaluate(field.from_int(tau)))


class _IncrementalSolver:
    """Row-echelon accumulator over the monomial coefficients, with the s
    right-hand sides carried along.  Redundant rows double as consistency
    checks: a dependent row whose reduced right-hand side is nonzero means
    some harvested value was wrong."""

    def __init__(self, field, n_cols, n_rhs):
        self.field = field
        self.n_cols = n_cols
        self.n_rhs = n_rhs
        self.pivot_rows = {}  # pivot column -> normalized augmented row

    @property
    def rank(self):
        return len(self.pivot_rows)

    def add(self, row, rhs_vals):
        field = self.field
        work = list(row) + list(rhs_vals)
        is_prime = field.kind == "prime"
        p = field.p if is_prime else None
        nc = self.n_cols
        for c in sorted(self.pivot_rows):
            f = work[c]
            if not field.is_zero(f):
                prow = self.pivot_rows[c]
                # pivot rows are zero before their pivot, so reduce the tail only
                if is_prime:
                    work[c:nc] = [
                        (a - f * b) % p for a, b in zip(work[c:nc], prow[c:nc])
                    ]
                    work[nc:] = [
                        (a - f * b) % p for a, b in zip(work[nc:], prow[nc:])
                    ]
                else:
                    work[c:nc] = [
                        field.sub(a, field.mul(f, b))
                        for a, b in zip(work[c:nc], prow[c:nc])
                    ]
                    work[nc:] = [
                        field.sub(a, field.mul(f, b))
                        for a, b in zip(work[nc:], prow[nc:])
                    ]
        pivot = next(
            (c for c in range(self.n_cols) if not field.is_zero(work[c])), None
        )
        if pivot is None:
            if any(not field.is_zero(v) for v in work[self.n_cols :]):
                raise RetryExhaustedError(
                    "inconsistent coefficient constraint (harvest mismatch)"
                )
            return False
        inv = field.inv(work[pivot])
        work = [field.mul(inv, v) for v in work]
        self.pivot_rows[pivot] = work
        return True

    def solutions(self):
        field = self.field
        if self.rank < self.n_cols:
            raise RetryExhaustedError(
                f"coefficient system rank {self.rank} of {self.n_cols}"
            )
        # back-substitute to full reduced form
        cols = sorted(self.pivot_rows)
        for idx in range(len(cols) - 1, -1, -1):
            c = cols[idx]
            row = self.pivot_rows[c]
            for c2 in cols[idx + 1 :]:
                f = row[c2]
                if not field.is_zero(f):
                    prow = self.pivot_rows[c2]
                    if field.kind == "prime":
                        p = field.p
                        row = [(a - f * b) % p for a, b in zip(row, prow)]
                    else:
                        row = [field.sub(a, field.mul(f, b)) for a, b in zip(row, prow)]
            self.pivot_rows[c] = row
        out = []
        for i in range(self.n_rhs):
            out.append([self.pivot_rows[c][self.n_cols + i] for c in range(self.n_cols)])
        return out


def _recover_all_q(infra: LearnerInfra, rng, retry_cap=8):
    """Dense recovery of every Q_i (up to a shared per-term scale).

    Each rerun redraws every non-shared L-column, so its harvest pins the
    restriction of Q_i to a fresh n0-dimensional subspace; enough reruns
    make the stacked constraints full rank over all degree-t monomials."""
    field = infra.field
    n, t, s, n0 = infra.n, infra.t, infra.s, infra.n0
    monos = monomial_enumeration(n, t, "all")
    total = len(monos)
    shared_block = comb(len(infra.shared_cols) + t - 1, t)
    per_rerun = comb(n0 + t - 1, t) - shared_block
    solver = _IncrementalSolver(field, total, s)

    # scale pin: Q_i = 1 at the anchor's image
    anchor_x = infra.state.L.apply(infra.slice_points[0])
    solver.add(_monomial_row(field, monos, anchor_x), [field.one] * s)

    def feed(rows, rhs):
        for j, row in enumerate(rows):
            if solver.rank >= total:
                break
            solver.add(row, [rhs[i][j] for i in range(s)])

    # shared block: lines staying inside the matching slice, via the reference
    rows: list = []
    rhs: list = [[] for _ in range(s)]
    slice_lines = [
        _sub_slice_point(field, n0, infra.shared_cols, rng)
        for _ in range((shared_block + t - 1) // t + 2)
    ]
    _harvest_lines(infra, infra.components, infra.state.L, slice_lines, rng, rows, rhs)
    feed(rows, rhs)

    def fresh_lines():
        out = []
        for _ in range((per_rerun + t - 1) // t + 1):
            pt = [field.sample_nonzero(rng)]
            pt.extend(field.sample(rng) for _ in range(n0 - 1))
            out.append(tuple(pt))
        return out

    # the reference run doubles as the first rerun
    rows, rhs = [], [[] for _ in range(s)]
    _harvest_lines(infra, infra.components, infra.state.L, fresh_lines(), rng, rows, rhs)
    feed(rows, rhs)

    est_reruns = max(1, (total - solver.rank + per_rerun - 1) // max(per_rerun, 1))
    failures = 0
    reruns = 0
    while solver.rank < total:
        if reruns > 2 * est_reruns + retry_cap:
            raise RetryExhaustedError(
                f"coefficient system rank {solver.rank} of {total} "
                f"after {reruns} reruns"
            )
        try:
            comps, L_new = _lite_rerun(infra, rng)
        except (_MatchFailure, DegeneracyError, RetryExhaustedError):
            failures += 1
            if failures > retry_cap:
                raise RetryExhaustedError("too many rerun failures during recovery")
            continue
        reruns += 1
        rows, rhs = [], [[] for _ in range(s)]
        _harvest_lines(infra, comps, L_new, fresh_lines(), rng, rows, rhs)
        feed(rows, rhs)

    sols = solver.solutions()
    polys = []
    for i in range(s):
        terms = {m: v for m, v in zip(monos, sols[i]) if not field.is_zero(v)}
        poly = SparsePoly(field, n, terms)
        if poly.is_zero():
            raise RetryExhaustedError("recovered a zero term polynomial")
        polys.append(poly)
    # post-solve validation on a few fresh harvested lines
    rows, rhs = [], [[] for _ in range(s)]
    _harvest_lines(
        infra, infra.components, infra.state.L,
        [tuple([field.sample_nonzero(rng)] + [field.sample(rng) for _ in range(n0 - 1)])],
        rng, rows, rhs,
    )
    for j, row in enumerate(rows):
        for i in range(s):
            acc = field.zero
            for c, v in zip(sols[i], row):
                acc = field.add(acc, field.mul(c, v))
            if acc != rhs[i][j]:
                raise RetryExhaustedError("post-solve residual check failed")
    return polys


# --------------------------------------------------------------------------
# spec-level step 7-8 operations (literal per-point protocol)


def match_runs(reference_components, rerun_components, infra, rng, T=None):
    """Pair each rerun component with its reference original by testing the
    constancy of their ratio on the z1 = 0 slice; returns (rho, ratios)
    with rho[i] = rerun index matching reference i and ratios[i] = c_i'/c~."""
    field = infra.field
    s = len(reference_components)
    if len(rerun_components) != s:
        raise _MatchFailure("component count mismatch")
    T = T or len(infra.slice_points)
    for _ in range(4):
        pts = [_slice_point(field, infra.n0, rng) for _ in range(T)]
        ref_vals = [[c.eval(p) for p in pts] for c in reference_components]
        new_vals = [[c.eval(p) for p in pts] for c in rerun_components]
        rho = {}
        ratios = {}
        used = set()
        good = True
        for i in range(s):
            match = None
            for j in range(s):
                if j in used or field.is_zero(new_vals[j][0]):
                    continue
                ratio = field.div(ref_vals[i][0], new_vals[j][0])
                if all(
                    ref_vals[i][l] == field.mul(ratio, new_vals[j][l])
                    for l in range(1, T)
                ):
                    match = (j, ratio)
                    break
            if match is None:
                good = False
                break
            rho[i] = match[0]
            ratios[i] = match[1]
            used.add(match[0])
        if good:
            return rho, ratios
    raise _MatchFailure("no bijective constant-ratio matching (condition 4)")


def _full_rerun(infra: LearnerInfra, first_col, rng):
    """Steps 1-6 under an altered first L-column (the literal per-point
    protocol): multi-gcd then a fresh decomposition."""
    field = infra.field
    s = infra.s
    kt1 = infra.k * (infra.t - 1)
    r = comb(infra.n0 + kt1 - 1, kt1)
    q = comb(infra.m0 + kt1 - 1, kt1)
    L_new = infra.state.L.replace_column(0, first_col)
    U = compute_U(infra.f, L_new, infra.k, rng, expected_dim=s * r, checked=True)
    v_boxes = multi_gcd(U, infra.k, infra.t, rng, expected_s=s)
    for _ in range(4):
        P = LinearTuple.random(field, infra.n0, infra.m0, rng)
        try:
            g, W, _ = compute_W(v_boxes, P, infra.k, rng, expected_dim=s * q, checked=True)
            span = _wrap_span(v_boxes, rng)
            ops = operator_matrices(span, W, P, infra.k, rng)
            dec = decompose(span, W, ops, rng)
            return [boxes[0] for boxes, _ in dec.components], L_new
        except (OperatorBuildError, RetryExhaustedError):
            continue
    raise RetryExhaustedError("rerun decomposition failed repeatedly")


def query_power(infra: LearnerInfra, i: int, point, rng=None):
    """c_i' * Q_i(point)^e, via d reruns along the y-line protocol.

    Each y in 1..d reruns the pipeline with the first L-column moved to
    y*r + (1-y)*point for a fresh random r, matches components against the
    reference on the z1 = 0 slice, and reads the matched value at
    z = (1, 0, ..., 0); interpolating in y and evaluating at 0 removes the
    non-random y = 0 case.  Values are memoized per (i, point).
    """
    point = tuple(point)
    key = (i, point)
    if key in infra.power_memo:
        return infra.power_memo[key]
    field = infra.field
    rng = rng or infra.rng
    d, s, e, t = infra.d, infra.s, infra.e, infra.t
    z_star = tuple(
        field.one if j == 0 else field.zero for j in range(infra.n0)
    )
    for _ in range(6):
        r_vec = [field.sample(rng) for _ in range(infra.n)]
        try:
            vals = [[] for _ in range(s)]
            for y in range(1, d + 1):
                yf = field.from_int(y)
                one_minus = field.sub(field.one, yf)
                col = [
                    field.add(field.mul(yf, rv), field.mul(one_minus, field.canon(av)))
                    for rv, av in zip(r_vec, point)
                ]
                comps, _ = _full_rerun(infra, col, rng)
                rho, ratios = match_runs(infra.components, comps, infra, rng)
                for idx in range(s):
                    scaled = field.mul(ratios[idx], comps[rho[idx]].eval(z_star))
                    vals[idx].append((yf, scaled))
            for idx in range(s):
                p_i = uni_interpolate(vals[idx], field)
                if p_i.degree() > t * e:
                    raise _MatchFailure("p_i degree exceeded t*(m-k)")
                infra.power_memo[(idx, point)] = p_i.evaluate(field.zero)
            return infra.power_memo[key]
        except (_MatchFailure, DegeneracyError, RetryExhaustedError):
            continue
    raise RetryExhaustedError("query_power exhausted its rerun retries")


def extract_Q(infra: LearnerInfra, i: int, rng=None) -> SparsePoly:
    """Dense Q_i (up to scale) via anchored lines and e-th roots of
    query_power values, one linear solve over all degree-t monomials."""
    field = infra.field
    rng = rng or infra.rng
    n, t, e = infra.n, infra.t, infra.e
    te = t * e
    anchor = None
    for _ in range(8):
        cand = tuple(field.sample(rng) for _ in range(n))
        if not field.is_zero(query_power(infra, i, cand, rng)):
            anchor = cand
            break
    if anchor is None:
        raise RetryExhaustedError("could not anchor away from Q_i's zero set")
    va = query_power(infra, i, anchor, rng)
    inv_va = field.inv(va)
    monos = monomial_enumeration(n, t, "all")
    rows = []
    rhs = []
    attempts = 0
    while len(rows) < len(monos) + 3 and attempts < 4 * (len(monos) + 3):
        attempts += 1
        x = tuple(field.sample(rng) for _ in range(n))
        samples = [(field.zero, field.one)]
        bad = False
        for tau in range(1, te + 1):
            tf = field.from_int(tau)
            pt = tuple(
                field.add(a, field.mul(tf, field.sub(b, a)))
                for a, b in zip(anchor, x)
            )
            samples.append((tf, field.mul(query_power(infra, i, pt, rng), inv_va)))
        h = uni_interpolate(samples, field)
        root = series_eth_root(h, e, t)
        if root.pow(e).truncate(te + 1) != h:
            continue
        rows.append(_monomial_row(field, monos, x))
        rhs.append(root.evaluate(field.one))
    aug = [row + [v] for row, v in zip(rows, rhs)]
    pivots = _echelon(field, aug, len(monos))
    if len(pivots) < len(monos):
        raise RetryExhaustedError("interpolation system stayed singular")
    for extra in aug[len(pivots) :]:
        if not field.is_zero(extra[-1]):
            raise RetryExhaustedError("extract_Q validation points disagree")
    vec = [field.zero] * len(monos)
    for r_idx, c in enumerate(pivots):
        vec[c] = aug[r_idx][-1]
    return SparsePoly(field, n, {m: v for m, v in zip(monos, vec) if not field.is_zero(v)})


# --------------------------------------------------------------------------
# final assembly


def final_coefficients(f: BlackBox, q_list, m: int, rng: random.Random, retry_cap=8):
    """Solve f = sum u_i Q_i^m from s random points, verified on s more."""
    field = f.field
    s = len(q_list)
    for _ in range(retry_cap):
        pts = [tuple(field.sample(rng) for _ in range(f.n)) for _ in range(2 * s)]
        a_rows = [
            [field.pow(q.evaluate(pt), m) for q in q_list] for pt in pts[:s]
        ]
        rhs = Matrix(field, [[f.eval(pt)] for pt in pts[:s]])
        sol = mat_solve(Matrix(field, a_rows), rhs)
        if sol.rank < s or not sol.consistent:
            continue
        u = sol.particular[0]
        ok = True
        for pt in pts[s:]:
            acc = field.zero
            for ui, q in zip(u, q_list):
                acc = field.add(acc, field.mul(ui, field.pow(q.evaluate(pt), m)))
            if acc != f.eval(pt):
                ok = False
                break
        if ok:
            return u
    raise DegeneracyError(
        "power terms stayed linearly dependent while solving for coefficients"
    )


@dataclass
class LearnedModel:
    circuit: PowerSumCircuit
    report: dict


def _identity_test(f: BlackBox, circuit: PowerSumCircuit, rng, points):
    field = f.field
    for _ in range(points):
        pt = tuple(field.sample(rng) for _ in range(f.n))
        if f.eval(pt) != circuit.evaluate(pt):
            return False
    return True


def learn(f, n: int, d: int, t: int, s: int, config: LearnerConfig) -> LearnedModel:
    """Full reconstruction; returns the learned circuit and a run report.

    On non-degeneracy failure raises DegeneracyError naming the failed
    condition with the measured dimensions -- never a silently wrong model.
    """
    if isinstance(f, PowerSumCircuit):
        f = f.to_box()
    field = config.field
    if f.field != field:
        raise InputError("oracle field does not match configuration")
    if t < 1 or d % t != 0:
        raise InputError("t must divide d")
    m = d // t
    if m < 2:
        raise InputError("exponent m = d/t must be at least 2")
    char = field.characteristic()
    if char != 0 and char <= 2 * d:
        raise InputError("field characteristic must exceed 2d")
    rng = random.Random(config.seed)
    if not check_homogeneous(f, d, rng):
        raise InputError("oracle fails the degree-d homogeneity spot check")

    if config.mode == "explicit" or (
        config.k is not None and config.n0 is not None and config.m0 is not None
    ):
        k, n0, m0 = config.k, config.n0, config.m0
        if not (1 <= k < m and 2 <= n0 and 1 <= m0 <= n0):
            raise InputError("explicit parameters violate 1<=k<m, 2<=n0, 1<=m0<=n0")
        candidates = [(k, n0, m0)]
    else:
        candidates = _auto_candidates(n, d, t, s)
        if not candidates:
            raise InputError("no feasible (k, n0, m0) for this instance shape")

    failures = []
    infra = None
    chosen = None
    for cand in candidates:
        k, n0, m0 = cand
        try:
            state = _run_reference(
                f, n, d, t, s, k, n0, m0, rng, config.checked, config.retry_cap
            )
            infra = _build_infra(f, n, d, t, s, k, n0, m0, state, config, rng)
            chosen = cand
            break
        except DegeneracyError as exc:
            failures.append((cand, exc))
        except (RetryExhaustedError, OperatorBuildError) as exc:
            failures.append((cand, DegeneracyError(str(exc))))
    if infra is None:
        first_cond = next(
            (e.condition for _, e in failures if e.condition is not None), None
        )
        detail = "; ".join(
            f"(k={c[0]},n0={c[1]},m0={c[2]}): {e}" for c, e in failures
        )
        raise DegeneracyError(
            f"all parameter candidates failed non-degeneracy checks: {detail}",
            condition=first_cond,
            expected=failures[0][1].expected if failures else None,
            measured=failures[0][1].measured if failures else None,
        )

    q_list = _recover_all_q(infra, rng)
    u = final_coefficients(f, q_list, m, rng)
    circuit = PowerSumCircuit(field, n, t, m, list(zip(u, q_list)))
    if not _identity_test(f, circuit, rng, config.identity_points):
        raise RetryExhaustedError("final identity test failed at a fresh point")

    k, n0, m0 = chosen
    kt1 = k * (t - 1)
    report = {
        "parameters": {"k": k, "n0": n0, "m0": m0, "candidates_tried": len(failures) + 1},
        "conditions": {
            "1": {"expected": s * comb(n0 + kt1 - 1, kt1), "measured": infra.state.U_basis.dim},
            "2": {"expected": s * comb(m0 + kt1 - 1, kt1), "measured": infra.state.W_basis.dim},
            "3": {"expected": s, "measured": len(infra.state.V_basis.elements)},
        },
        "seed": config.seed,
        "verification_points": config.identity_points,
        "identity_ok": True,
    }
    return LearnedModel(circuit, report)
