"""Vector space decomposition under a set of linear operators.

Given bases of V (dim s) and W (dim sq) and the operators g -> pi_P(d^a g)
expressed as sq x s matrices, the adjoint algebra of intertwining pairs
(D, E) with K D = E K drives the split: in the non-degenerate case its
first component is conjugate to the diagonal matrices, so one random
element has s distinct eigenvalues and its eigenbasis separates the
one-dimensional components of V.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field

from .blackbox import LinearComboBox, SpanBasis, derivative_box, express_in_basis, project_box
from .errors import DegeneracyError, InputError, RetryExhaustedError
from .linalg import Matrix, char_poly, invert, mat_solve, reduce_span
from .multipoly import LinearTuple, monomial_enumeration
from .unipoly import roots_in_field


@dataclass
class OperatorSet:
    """Matrices (each codomain_dim x domain_dim) of a family of maps V -> W."""

    ops: list
    domain_dim: int
    codomain_dim: int
    tags: list = dc_field(default_factory=list)

    def __post_init__(self):
        for m in self.ops:
            if m.rows != self.codomain_dim or m.cols != self.domain_dim:
                raise InputError("operator matrix has inconsistent dimensions")


@dataclass
class AdjointAlgebra:
    pair_basis: list  # (D: s x s, E: sq x sq) pairs
    first_component_basis: list  # independent D parts

    @property
    def first_dim(self):
        return len(self.first_component_basis)


@dataclass
class Decomposition:
    """V split into one-dimensional components, up to permutation/scaling."""

    components: list  # (V_i basis: list of BlackBox, W_i basis: coefficient rows)
    eigenvalues: list
    basis_change: Matrix  # A~ with A~ D A~^{-1} diagonal
    defined_up_to_permutation_and_scaling: bool = True


class OperatorBuildError(RetryExhaustedError):
    """The W basis failed to absorb an operator image; re-randomize upstream."""


def operator_matrices(V_basis: SpanBasis, W_basis: SpanBasis, P: LinearTuple, k: int,
                      rng: random.Random) -> OperatorSet:
    """Matrix of g -> pi_P(d^alpha g) for every |alpha| = k, in the given bases."""
    s = V_basis.dim
    sq = W_basis.dim
    if s == 0:
        raise InputError("empty V basis")
    n0 = V_basis.elements[0].n
    ops = []
    tags = []
    for alpha in monomial_enumeration(n0, k, "all"):
        columns = []
        for g in V_basis.elements:
            image = project_box(derivative_box(g, alpha), P)
            coeffs = express_in_basis(image, W_basis, rng)
            if coeffs is None:
                raise OperatorBuildError(
                    "operator image escapes the W basis (bad basis draw)"
                )
            columns.append(coeffs if coeffs else [])
        entries = [[columns[j][i] for j in range(s)] for i in range(sq)]
        ops.append(Matrix(V_basis.elements[0].field, entries) if sq else Matrix(V_basis.elements[0].field, []))
        tags.append(alpha)
    return OperatorSet(ops, s, sq, tags)


def adjoint_basis(opset: OperatorSet) -> AdjointAlgebra:
    """Basis of {(D, E) : K D = E K for all K}, solved over s^2 + (sq)^2 unknowns."""
    if not opset.ops:
        raise InputError("adjoint of an empty operator set")
    field = opset.ops[0].field
    s = opset.domain_dim
    sq = opset.codomain_dim
    nd = s * s
    ne = sq * sq
    rows = []
    for K in opset.ops:
        ke = K.entries
        for a in range(sq):
            for b in range(s):
                row = [field.zero] * (nd + ne)
                # (K D)_{ab} = sum_c K[a][c] D[c][b]
                for c in range(s):
                    row[c * s + b] = field.add(row[c * s + b], ke[a][c])
                # -(E K)_{ab} = -sum_c E[a][c] K[c][b]
                for c in range(sq):
                    row[nd + a * sq + c] = field.sub(row[nd + a * sq + c], ke[c][b])
                rows.append(row)
    res = mat_solve(Matrix(field, rows))
    pairs = []
    for vec in res.kernel:
        D = Matrix(field, [vec[i * s : (i + 1) * s] for i in range(s)])
        E = Matrix(field, [vec[nd + i * sq : nd + (i + 1) * sq] for i in range(sq)])
        pairs.append((D, E))
    d_rows = [[v for row in D.entries for v in row] for D, _ in pairs]
    first = [
        Matrix(field, [r[i * s : (i + 1) * s] for i in range(s)])
        for r in reduce_span(field, d_rows)
    ]
    return AdjointAlgebra(pairs, first)


def split_simultaneous(adj: AdjointAlgebra, rng: random.Random, retry_cap: int = 8):
    """Random first-component element D, its s distinct eigenvalues, and an
    invertible A~ with A~ D A~^{-1} diagonal."""
    if not adj.first_component_basis:
        raise DegeneracyError("adjoint first component is empty", measured=0)
    field = adj.first_component_basis[0].field
    s = adj.first_component_basis[0].rows
    if adj.first_dim != s:
        raise DegeneracyError(
            "adjoint first component dimension differs from the term count",
            expected=s,
            measured=adj.first_dim,
        )
    last_roots = None
    for _ in range(retry_cap):
        D = Matrix.zero(field, s, s)
        for B in adj.first_component_basis:
            D = D.add(B.scale(field.sample(rng)))
        cp = char_poly(D)
        roots = roots_in_field(cp, rng)
        last_roots = roots
        if len(roots) != s or len(set(roots)) != s:
            continue
        # left eigenvectors: kernel of (D^T - a I) per eigenvalue
        rows = []
        ok = True
        dt = D.transpose()
        for a in roots:
            shifted = dt.sub(Matrix.identity(field, s).scale(a))
            kern = mat_solve(shifted).kernel
            if len(kern) != 1:
                ok = False
                break
            rows.append(kern[0])
        if not ok:
            continue
        a_tilde = Matrix(field, rows)
        # sanity: conjugation really is diagonal with the computed eigenvalues
        check = a_tilde.mul(D).mul(invert(a_tilde))
        for i in range(s):
            for j in range(s):
                want = roots[i] if i == j else field.zero
                if check.entries[i][j] != want:
                    raise RetryExhaustedError("eigen decomposition lost exactness")
        return roots, a_tilde
    raise RetryExhaustedError(
        f"no split with distinct in-field eigenvalues after {retry_cap} draws "
        f"(last spectrum size {len(set(last_roots or []))}); field may be too small"
    )


def decompose(V_basis: SpanBasis, W_basis: SpanBasis, opset: OperatorSet,
              rng: random.Random) -> Decomposition:
    """One-dimensional components of V under the operator set.

    Component i is the black box (g_1 ... g_s) . A~^{-1} column i; each is a
    nonzero scalar multiple of one indecomposable direction, so the result
    is canonical only up to permutation and scaling.
    """
    field = V_basis.elements[0].field
    s = V_basis.dim
    if s == 1:
        w_rows = reduce_span(field, [K.column(0) for K in opset.ops]) if opset.ops else []
        return Decomposition(
            components=[([V_basis.elements[0]], w_rows)],
            eigenvalues=[field.one],
            basis_change=Matrix.identity(field, 1),
        )
    adj = adjoint_basis(opset)
    eigs, a_tilde = split_simultaneous(adj, rng)
    a_inv = invert(a_tilde)
    components = []
    for i in range(s):
        coeffs = a_inv.column(i)
        box = LinearComboBox(V_basis.elements, coeffs)
        images = [K.mul_vector(coeffs) for K in opset.ops]
        w_rows = reduce_span(field, images)
        components.append(([box], w_rows))
    return Decomposition(components, eigs, a_tilde)


# --- reduction of (generalized) vector space decomposition to module form ---


@dataclass
class VsdGraph:
    """Vertices carry dimensions; each edge (u, v) carries matrices dim_v x dim_u."""

    vertex_dims: dict
    edges: list  # (u, v, [Matrix, ...])


@dataclass
class ModuleInstance:
    operators: OperatorSet  # square, acting on the direct sum
    projectors: list  # one idempotent per vertex, summing to identity
    offsets: dict  # vertex -> (start, dim) inside the direct sum
    total_dim: int


def generalized_vsd_reduce(graph: VsdGraph, field) -> ModuleInstance:
    """Embed all vertex spaces into U = direct sum and extend every edge map
    by zero; together with the vertex projectors (and identity) this is a
    module-decomposition instance whose invariant subspaces are exactly the
    per-vertex compatible decompositions."""
    order = list(graph.vertex_dims)
    offsets = {}
    pos = 0
    for v in order:
        d = graph.vertex_dims[v]
        if d < 0:
            raise InputError("negative vertex dimension")
        offsets[v] = (pos, d)
        pos += d
    total = pos
    if total == 0:
        raise InputError("empty graph")

    def embed(mat: Matrix, u, v) -> Matrix:
        su, du = offsets[u]
        sv, dv = offsets[v]
        if mat.rows != dv or mat.cols != du:
            raise InputError("edge operator dimensions disagree with vertices")
        out = [[field.zero] * total for _ in range(total)]
        for i in range(dv):
            for j in range(du):
                out[sv + i][su + j] = mat.entries[i][j]
        return Matrix(field, out)

    projectors = []
    for v in order:
        sv, dv = offsets[v]
        out = [[field.zero] * total for _ in range(total)]
        for i in range(dv):
            out[sv + i][sv + i] = field.one
        projectors.append(Matrix(field, out))

    ops = [Matrix.identity(field, total)] + list(projectors)
    tags = ["identity"] + [("projector", v) for v in order]
    for u, v, mats in graph.edges:
        for m in mats:
            ops.append(embed(m, u, v))
            tags.append(("edge", u, v))
    return ModuleInstance(OperatorSet(ops, total, total, tags), projectors, offsets, total)


def module_decompose(instance: ModuleInstance, rng: random.Random, retry_cap: int = 8):
    """Decompose the direct-sum module into indecomposable invariant subspaces.

    Returns a list of components, each a list of coordinate vectors (a basis
    of that invariant subspace).  Components may have dimension > 1; the
    eigenspaces of a random adjoint element separate them.
    """
    opset = instance.operators
    field = opset.ops[0].field
    m = instance.total_dim
    # adjoint with D = E (identity is among the operators, forcing equality)
    adj = adjoint_basis(opset)
    d_basis = adj.first_component_basis
    for _ in range(retry_cap):
        D = Matrix.zero(field, m, m)
        for B in d_basis:
            D = D.add(B.scale(field.sample(rng)))
        cp = char_poly(D)
        roots = roots_in_field(cp, rng)
        if len(roots) != m:
            continue  # some eigenvalue escaped the field; redraw
        distinct = sorted(set(roots))
        groups = []
        covered = 0
        good = True
        for a in distinct:
            shifted = D.sub(Matrix.identity(field, m).scale(a))
            kern = mat_solve(shifted).kernel
            mult = roots.count(a)
            if len(kern) != mult:
                good = False  # not diagonalizable along this draw
                break
            groups.append(kern)
            covered += len(kern)
        if good and covered == m:
            return groups
    raise RetryExhaustedError("module decomposition failed to diagonalize the adjoint")


def project_component(instance: ModuleInstance, component_vectors, vertex):
    """Restrict a direct-sum component basis back to one vertex's coordinates."""
    start, dim = instance.offsets[vertex]
    field = instance.operators.ops[0].field
    rows = [vec[start : start + dim] for vec in component_vectors]
    return reduce_span(field, rows)
