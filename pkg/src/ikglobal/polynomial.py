"""Sparse multivariate polynomials over integer-indexed variables.

A monomial is stored as a sorted tuple of variable ids with repetition, so
``x0**2 * x3`` is ``(0, 0, 3)`` and the constant monomial is ``()``. Terms are
kept in graded-lexicographic order on these tuples: lower degree first, then
lexicographically smaller id tuples first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

DROP_TOL = 1e-14

Key = tuple[int, ...]


def _order(key: Key):
    return (len(key), key)


@dataclass(frozen=True)
class Monomial:
    coefficient: float
    variables: Key

    @property
    def exponents(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for v in self.variables:
            out[v] = out.get(v, 0) + 1
        return out

    @property
    def degree(self) -> int:
        return len(self.variables)


class Polynomial:
    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Key, float] | None = None):
        cleaned = {}
        if terms:
            for key, coef in terms.items():
                if abs(coef) > DROP_TOL:
                    cleaned[tuple(sorted(key))] = float(coef)
        self._terms = dict(sorted(cleaned.items(), key=lambda kv: _order(kv[0])))

    @classmethod
    def constant(cls, value: float) -> "Polynomial":
        return cls({(): value})

    @classmethod
    def variable(cls, index: int, coefficient: float = 1.0) -> "Polynomial":
        return cls({(index,): coefficient})

    @classmethod
    def linear(cls, coeffs: Mapping[int, float], constant: float = 0.0) -> "Polynomial":
        terms = {(i,): c for i, c in coeffs.items()}
        terms[()] = constant
        return cls(terms)

    @property
    def terms(self) -> list[Monomial]:
        return [Monomial(c, k) for k, c in self._terms.items()]

    def items(self):
        return self._terms.items()

    def coefficient(self, key: Iterable[int]) -> float:
        return self._terms.get(tuple(sorted(key)), 0.0)

    @property
    def degree(self) -> int:
        return max((len(k) for k in self._terms), default=0)

    @property
    def variables(self) -> set[int]:
        return {v for k in self._terms for v in k}

    def is_zero(self) -> bool:
        return not self._terms

    def __add__(self, other) -> "Polynomial":
        other = _coerce(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "Polynomial":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Polynomial":
        return _coerce(other) - self

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial({k: c * other for k, c in self._terms.items()})
        out: dict[Key, float] = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                key = tuple(sorted(k1 + k2))
                out[key] = out.get(key, 0.0) + c1 * c2
        return Polynomial(out)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return list(self._terms.items()) == list(other._terms.items())

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    def evaluate(self, point: Sequence[float]) -> float:
        total = 0.0
        for key, coef in self._terms.items():
            value = coef
            for v in key:
                value *= point[v]
            total += value
        return total

    def __repr__(self):
        if not self._terms:
            return "Polynomial(0)"
        parts = []
        for key, coef in self._terms.items():
            mono = "*".join(f"x{v}" for v in key)
            parts.append(f"{coef:+g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " ".join(parts) + ")"


def _coerce(value) -> Polynomial:
    if isinstance(value, Polynomial):
        return value
    return Polynomial.constant(float(value))


PolyMatrix = list[list[Polynomial]]


def matmul(a: PolyMatrix, b: PolyMatrix) -> PolyMatrix:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = Polynomial()
            for k in range(inner):
                if a[i][k].is_zero() or b[k][j].is_zero():
                    continue
                acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(row)
    return out


def constant_matrix(values) -> PolyMatrix:
    return [[Polynomial.constant(float(v)) for v in row] for row in values]
