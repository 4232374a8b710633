"""JSON forms for scalars, polynomials, and linear tuples.

Scalars travel as strings ("123" in a prime field, "num/den" over Q) so
exactness survives serialization.  Term lists are emitted in graded-lex
order, which keeps output bytes deterministic.
"""

from __future__ import annotations

from .errors import InputError
from .fields import field_from_spec, field_to_spec
from .multipoly import LinearTuple, SparsePoly, grlex_key


def scalar_to_str(field, v) -> str:
    return field.to_str(v)


def scalar_from_str(field, s: str):
    return field.parse(s)


def poly_to_json(poly: SparsePoly) -> dict:
    return {
        "n": poly.n,
        "terms": [
            {"exps": list(exps), "coeff": poly.field.to_str(c)}
            for exps, c in poly.sorted_terms()
        ],
    }


def poly_from_json(data: dict, field) -> SparsePoly:
    try:
        n = int(data["n"])
        terms = {}
        for item in data["terms"]:
            exps = tuple(int(e) for e in item["exps"])
            terms[exps] = field.parse(item["coeff"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed polynomial JSON: {exc}") from exc
    return SparsePoly(field, n, terms)


def linear_tuple_to_json(lt: LinearTuple) -> dict:
    return {
        "n_out": lt.n_out,
        "forms": [[lt.field.to_str(c) for c in row] for row in lt.forms],
    }


def linear_tuple_from_json(data: dict, field) -> LinearTuple:
    try:
        n_out = int(data["n_out"])
        forms = [[field.parse(c) for c in row] for row in data["forms"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed linear tuple JSON: {exc}") from exc
    return LinearTuple(field, forms, n_out)


__all__ = [
    "field_from_spec",
    "field_to_spec",
    "scalar_to_str",
    "scalar_from_str",
    "poly_to_json",
    "poly_from_json",
    "linear_tuple_to_json",
    "linear_tuple_from_json",
]
