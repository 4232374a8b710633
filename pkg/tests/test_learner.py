import random
from math import comb

import pytest

from powsum.blackbox import PolyBox
from powsum.errors import DegeneracyError, InputError
from powsum.fields import PrimeField, random_prime
from powsum.learner import (
    LearnerConfig,
    PowerSumCircuit,
    _build_infra,
    _run_reference,
    compute_U,
    compute_W,
    extract_Q,
    final_coefficients,
    learn,
    multi_gcd,
    query_power,
    recover_components,
    select_parameters,
)
from powsum.linalg import rank_of_rows
from powsum.multipoly import (
    LinearTuple,
    SparsePoly,
    monomial_enumeration,
    random_homogeneous,
)


def _fp(seed, bits=128):
    return PrimeField(random_prime(bits, random.Random(seed)))


def _random_circuit(fp, n, t, m, s, rng):
    return PowerSumCircuit(
        fp, n, t, m, [(fp.one, random_homogeneous(fp, n, t, rng)) for _ in range(s)]
    )


def _proportional(a, b, fp):
    if set(a.terms) != set(b.terms):
        return False
    key = next(iter(a.terms))
    ratio = fp.div(b.terms[key], a.terms[key])
    return b == a.scale(ratio)


def _match_up_to_scale(true_polys, got_polys, fp):
    matched = set()
    for qt in true_polys:
        hit = None
        for j, qg in enumerate(got_polys):
            if j not in matched and _proportional(qt, qg, fp):
                hit = j
                break
        if hit is None:
            return False
        matched.add(hit)
    return True


def _infra_for(circ, seed=5, k=None, n0=None, m0=None):
    fp = circ.field
    rng = random.Random(seed)
    cfg = LearnerConfig(field=fp, seed=seed)
    s, n, d, t = circ.s, circ.n, circ.d, circ.t
    if k is None:
        from powsum.learner import _auto_candidates

        k, n0, m0 = _auto_candidates(n, d, t, s)[0]
    f = circ.to_box()
    state = _run_reference(f, n, d, t, s, k, n0, m0, rng, True, 8)
    return _build_infra(f, n, d, t, s, k, n0, m0, state, cfg, rng), rng


def test_select_parameters_formula_values():
    # n = 4096, t = 2, s = 4: raw n0 = 4, m0 = 1, k = ceil(260*2/12) = 44
    sel = select_parameters(4096, 2 * 100, 2, 4)
    assert (sel.n0, sel.m0, sel.k) == (4, 1, 44)
    assert sel.clamped == []


def test_select_parameters_s1_clamps_k():
    sel = select_parameters(100, 8, 2, 1)
    assert sel.k == 1
    assert "k_low" in sel.clamped


def test_select_parameters_infeasible_degree():
    with pytest.raises(InputError):
        select_parameters(10, 2, 2, 2)  # m = 1: no room for 1 <= k < m
    with pytest.raises(InputError):
        select_parameters(10, 7, 2, 2)  # t does not divide d


def test_compute_U_linear_power_has_dim_one():
    # f = l^d with t = 1: every projected derivative is a multiple of
    # pi_L(l)^(d-k), so dim U = 1
    fp = _fp(1)
    rng = random.Random(2)
    n, d = 5, 4
    ell = SparsePoly(
        fp,
        n,
        {
            tuple(1 if i == j else 0 for i in range(n)): fp.sample_nonzero(rng)
            for j in range(n)
        },
    )
    f = PolyBox(ell.pow(d))
    L = LinearTuple.random(fp, n, 3, rng)
    basis = compute_U(f, L, 2, rng)
    assert basis.dim == 1


def test_compute_U_order_zero():
    fp = _fp(3)
    rng = random.Random(4)
    f = PolyBox(random_homogeneous(fp, 4, 4, rng))
    L = LinearTuple.random(fp, 4, 2, rng)
    basis = compute_U(f, L, 0, rng)
    assert basis.dim == 1


def test_compute_U_matches_symbolic_rank():
    fp = _fp(5)
    rng = random.Random(6)
    n, t, m, s = 8, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    n0, k = 4, 1
    L = LinearTuple.random(fp, n, n0, rng)
    basis = compute_U(circ.to_box(), L, k, rng)
    # symbolic: rank of the projected derivative coefficient vectors
    fsym = SparsePoly.zero(fp, n)
    for c, q in circ.terms:
        fsym = fsym.add(q.pow(m).scale(c))
    monos = monomial_enumeration(n0, circ.d - k, "all")
    rows = []
    for alpha in monomial_enumeration(n, k, "all"):
        img = fsym.partial_derivative(alpha).compose_affine(L)
        rows.append(img.coefficient_vector(monos))
    assert basis.dim == rank_of_rows(fp, rows)
    assert basis.dim == s * comb(n0 + k * (t - 1) - 1, k * (t - 1))


def test_compute_U_checked_flags_condition1():
    fp = _fp(7)
    rng = random.Random(8)
    n, t, m = 8, 2, 3
    q = random_homogeneous(fp, n, t, rng)
    circ = PowerSumCircuit(fp, n, t, m, [(fp.one, q), (fp.from_int(2), q)])
    L = LinearTuple.random(fp, n, 4, rng)
    with pytest.raises(DegeneracyError) as err:
        compute_U(circ.to_box(), L, 1, rng, expected_dim=2 * 4, checked=True)
    assert err.value.condition == 1
    assert err.value.measured < err.value.expected


def test_multi_gcd_single_term():
    fp = _fp(9)
    rng = random.Random(10)
    n, t, m, s = 6, 2, 3, 1
    circ = _random_circuit(fp, n, t, m, s, rng)
    k, n0 = 1, 3
    L = LinearTuple.random(fp, n, n0, rng)
    U = compute_U(circ.to_box(), L, k, rng, expected_dim=n0, checked=True)
    v = multi_gcd(U, k, t, rng, expected_s=1)
    assert len(v) == 1
    # V element is proportional to G^e with G = pi_L(Q), e = m - k
    G = circ.terms[0][1].compose_affine(L)
    ge = G.pow(m - k)
    pt = tuple(fp.sample(rng) for _ in range(n0))
    pt2 = tuple(fp.sample(rng) for _ in range(n0))
    lhs = fp.mul(v[0].eval(pt), ge.evaluate(pt2))
    rhs = fp.mul(v[0].eval(pt2), ge.evaluate(pt))
    assert lhs == rhs


def test_multi_gcd_kernel_dimension_is_s():
    fp = _fp(11)
    rng = random.Random(12)
    n, t, m, s = 10, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    k, n0 = 1, 4
    L = LinearTuple.random(fp, n, n0, rng)
    U = compute_U(circ.to_box(), L, k, rng, expected_dim=s * n0, checked=True)
    v = multi_gcd(U, k, t, rng, expected_s=s)
    assert len(v) == s


def test_multi_gcd_products_reexpress_over_U():
    # each V-basis element times z1^(k(t-1)) and times z2^(k(t-1)) lies in <U>
    from powsum.blackbox import CallableBox, express_in_basis

    fp = _fp(13)
    rng = random.Random(14)
    n, t, m, s = 10, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    k, n0 = 1, 4
    kt1 = k * (t - 1)
    L = LinearTuple.random(fp, n, n0, rng)
    U = compute_U(circ.to_box(), L, k, rng, expected_dim=s * n0, checked=True)
    v = multi_gcd(U, k, t, rng, expected_s=s)
    for box in v:
        for var in (0, 1):
            prod = CallableBox(
                fp,
                n0,
                box.d + kt1,
                lambda pt, b=box, vv=var: fp.mul(b.eval(pt), fp.pow(pt[vv], kt1)),
            )
            assert express_in_basis(prod, U, rng) is not None


def test_compute_W_dimensions():
    fp = _fp(15)
    rng = random.Random(16)
    n, t, m, s = 10, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    k, n0, m0 = 1, 4, 2
    L = LinearTuple.random(fp, n, n0, rng)
    U = compute_U(circ.to_box(), L, k, rng, expected_dim=s * n0, checked=True)
    v = multi_gcd(U, k, t, rng, expected_s=s)
    P = LinearTuple.random(fp, n0, m0, rng)
    g, W, _ = compute_W(v, P, k, rng, expected_dim=s * m0, checked=True)
    assert W.dim == s * comb(m0 + k * (t - 1) - 1, k * (t - 1))


def test_compute_W_order_zero():
    fp = _fp(17)
    rng = random.Random(18)
    n, t, m, s = 6, 2, 3, 1
    circ = _random_circuit(fp, n, t, m, s, rng)
    L = LinearTuple.random(fp, n, 3, rng)
    U = compute_U(circ.to_box(), L, 1, rng, expected_dim=3, checked=True)
    v = multi_gcd(U, 1, t, rng, expected_s=1)
    P = LinearTuple.random(fp, 3, 2, rng)
    g, W, _ = compute_W(v, P, 0, rng)
    assert W.dim == 1


def test_recover_components_through_learner_path():
    fp = _fp(19)
    rng = random.Random(20)
    n, t, m, s = 10, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    infra, _ = _infra_for(circ, seed=21)
    # components are scalar multiples of G_i^e: verify against white-box
    e = infra.e
    gs = [q.compose_affine(infra.state.L).pow(e) for _, q in circ.terms]
    matched = set()
    for comp in infra.components:
        pt1 = tuple(fp.sample(rng) for _ in range(infra.n0))
        pt2 = tuple(fp.sample(rng) for _ in range(infra.n0))
        for j, gsym in enumerate(gs):
            if j in matched:
                continue
            lhs = fp.mul(comp.eval(pt1), gsym.evaluate(pt2))
            rhs = fp.mul(comp.eval(pt2), gsym.evaluate(pt1))
            if lhs == rhs:
                matched.add(j)
                break
    assert len(matched) == s


def test_query_power_at_zero_is_zero():
    fp = _fp(23)
    rng = random.Random(24)
    circ = _random_circuit(fp, 6, 2, 3, 1, rng)
    infra, rng2 = _infra_for(circ, seed=25)
    zero = tuple(fp.zero for _ in range(6))
    assert fp.is_zero(query_power(infra, 0, zero, rng2))


def test_query_power_single_term_values():
    fp = _fp(26)
    rng = random.Random(27)
    n, t, m = 6, 2, 3
    circ = _random_circuit(fp, n, t, m, 1, rng)
    infra, rng2 = _infra_for(circ, seed=28)
    q = circ.terms[0][1]
    e = infra.e
    # query_power = c' * Q(a)^e for one fixed unknown c'
    a0 = tuple(fp.sample(rng2) for _ in range(n))
    base = query_power(infra, 0, a0, rng2)
    qa0 = fp.pow(q.evaluate(a0), e)
    assert not fp.is_zero(qa0)
    c_prime = fp.div(base, qa0)
    for _ in range(9):
        a = tuple(fp.sample(rng2) for _ in range(n))
        assert query_power(infra, 0, a, rng2) == fp.mul(c_prime, fp.pow(q.evaluate(a), e))


def test_query_power_deterministic_across_rerun_randomness():
    fp = _fp(29)
    rng = random.Random(30)
    circ = _random_circuit(fp, 6, 2, 3, 1, rng)
    infra, _ = _infra_for(circ, seed=31)
    a = tuple(fp.sample(rng) for _ in range(6))
    v1 = query_power(infra, 0, a, random.Random(1001))
    infra.power_memo.clear()
    v2 = query_power(infra, 0, a, random.Random(2002))
    assert v1 == v2


def test_extract_Q_recovers_single_term():
    fp = _fp(32)
    rng = random.Random(33)
    n, t, m = 5, 2, 3
    circ = _random_circuit(fp, n, t, m, 1, rng)
    infra, rng2 = _infra_for(circ, seed=34)
    got = extract_Q(infra, 0, rng2)
    assert got.is_homogeneous() and got.total_degree() == t
    assert _proportional(circ.terms[0][1], got, fp)


def test_final_coefficients_examples():
    fp = _fp(35)
    rng = random.Random(36)
    n, t, m = 6, 2, 3
    q = random_homogeneous(fp, n, t, rng)
    circ = PowerSumCircuit(fp, n, t, m, [(fp.from_int(5), q)])
    u = final_coefficients(circ.to_box(), [q], m, rng)
    assert u == [fp.from_int(5)]


def test_final_coefficients_permutation_equivariant():
    fp = _fp(37)
    rng = random.Random(38)
    n, t, m, s = 6, 2, 3, 3
    circ = _random_circuit(fp, n, t, m, s, rng)
    qs = [q for _, q in circ.terms]
    f = circ.to_box()
    u = final_coefficients(f, qs, m, random.Random(1))
    perm = [2, 0, 1]
    u_perm = final_coefficients(f, [qs[i] for i in perm], m, random.Random(2))
    assert u_perm == [u[i] for i in perm]


def test_final_coefficients_round_trip():
    fp = _fp(39)
    rng = random.Random(40)
    n, t, m, s = 8, 2, 3, 3
    circ = PowerSumCircuit(
        fp,
        n,
        t,
        m,
        [(fp.sample_nonzero(rng), random_homogeneous(fp, n, t, rng)) for _ in range(s)],
    )
    f = circ.to_box()
    # scaled copies of the true terms
    scaled = [q.scale(fp.sample_nonzero(rng)) for _, q in circ.terms]
    u = final_coefficients(f, scaled, m, rng)
    for _ in range(50):
        pt = tuple(fp.sample(rng) for _ in range(n))
        acc = fp.zero
        for ui, q in zip(u, scaled):
            acc = fp.add(acc, fp.mul(ui, fp.pow(q.evaluate(pt), m)))
        assert acc == f.eval(pt)


def test_learn_single_term():
    fp = _fp(41)
    rng = random.Random(42)
    n, t, m = 8, 2, 3
    circ = PowerSumCircuit(
        fp, n, t, m, [(fp.from_int(7), random_homogeneous(fp, n, t, rng))]
    )
    model = learn(circ.to_box(), n, t * m, t, 1, LearnerConfig(field=fp, seed=43))
    assert _match_up_to_scale([circ.terms[0][1]], [model.circuit.terms[0][1]], fp)
    assert model.report["identity_ok"]


def test_learn_two_terms_recovers_up_to_scale():
    fp = _fp(44)
    rng = random.Random(45)
    n, t, m, s = 12, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    model = learn(circ.to_box(), n, t * m, t, s, LearnerConfig(field=fp, seed=46))
    assert _match_up_to_scale(
        [q for _, q in circ.terms], [q for _, q in model.circuit.terms], fp
    )
    # dimension formulas from the run report
    k = model.report["parameters"]["k"]
    n0 = model.report["parameters"]["n0"]
    m0 = model.report["parameters"]["m0"]
    kt1 = k * (t - 1)
    assert model.report["conditions"]["1"]["measured"] == s * comb(n0 + kt1 - 1, kt1)
    assert model.report["conditions"]["2"]["measured"] == s * comb(m0 + kt1 - 1, kt1)


def test_learn_t1_tensor_case():
    fp = _fp(47)
    rng = random.Random(48)
    n, t, m, s = 10, 1, 5, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    model = learn(circ.to_box(), n, t * m, t, s, LearnerConfig(field=fp, seed=49))
    assert _match_up_to_scale(
        [q for _, q in circ.terms], [q for _, q in model.circuit.terms], fp
    )


def test_learn_duplicate_terms_reports_condition1():
    fp = _fp(50)
    rng = random.Random(51)
    n, t, m = 10, 2, 4
    q = random_homogeneous(fp, n, t, rng)
    circ = PowerSumCircuit(fp, n, t, m, [(fp.one, q), (fp.from_int(3), q)])
    with pytest.raises(DegeneracyError) as err:
        learn(circ.to_box(), n, t * m, t, 2, LearnerConfig(field=fp, seed=52))
    assert err.value.condition == 1


def test_learn_explicit_parameters():
    fp = _fp(53)
    rng = random.Random(54)
    n, t, m, s = 12, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    cfg = LearnerConfig(field=fp, seed=55, k=1, n0=4, m0=2, mode="explicit")
    model = learn(circ.to_box(), n, t * m, t, s, cfg)
    assert model.report["parameters"] == {"k": 1, "n0": 4, "m0": 2, "candidates_tried": 1}


def test_learn_rejects_inhomogeneous_oracle():
    fp = _fp(56)
    rng = random.Random(57)
    poly = random_homogeneous(fp, 6, 4, rng).add(SparsePoly.constant(fp, 6, fp.one))
    with pytest.raises(InputError):
        learn(PolyBox(poly), 6, 4, 2, 1, LearnerConfig(field=fp, seed=58))


def test_learn_identity_holds_at_fresh_points():
    fp = _fp(59)
    rng = random.Random(60)
    n, t, m, s = 10, 2, 3, 2
    circ = _random_circuit(fp, n, t, m, s, rng)
    model = learn(circ.to_box(), n, t * m, t, s, LearnerConfig(field=fp, seed=61))
    check = random.Random(999)
    for _ in range(50):
        pt = tuple(fp.sample(check) for _ in range(n))
        assert circ.evaluate(pt) == model.circuit.evaluate(pt)


def test_p_i_interpolation_degree_bound():
    # query_power interpolates p_i of degree t*e < d; the spare y-points
    # double as the degree check, which a successful call has passed
    fp = _fp(62)
    rng = random.Random(63)
    circ = _random_circuit(fp, 6, 2, 4, 1, rng)
    infra, rng2 = _infra_for(circ, seed=64)
    assert infra.e * infra.t < infra.d
    a = tuple(fp.sample(rng2) for _ in range(6))
    val = query_power(infra, 0, a, rng2)
    q = circ.terms[0][1]
    ratio_pt = tuple(fp.sample(rng2) for _ in range(6))
    base = query_power(infra, 0, ratio_pt, rng2)
    cprime = fp.div(base, fp.pow(q.evaluate(ratio_pt), infra.e))
    assert val == fp.mul(cprime, fp.pow(q.evaluate(a), infra.e))
