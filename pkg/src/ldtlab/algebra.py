"""Exact arithmetic over prime fields and polynomial rings on top of them.

Representation conventions used throughout the package:

* A field element is a plain Python int in ``range(p)``.  The field itself is
  a small context object (:class:`PrimeField`) that validates the modulus and
  provides inverses; keeping elements unboxed keeps the hot paths cheap and
  matches how the numpy layers store tables of values.
* A univariate polynomial (:class:`Poly`) is a dense tuple of coefficients,
  constant term first, with no trailing zeros.  The zero polynomial is the
  empty tuple and reports degree -1.
* A multivariate polynomial (:class:`MultiPoly`) is a sparse dict mapping
  exponent tuples to nonzero coefficients.  The number of variables is fixed
  per instance; variable i refers to position i of the exponent tuple.

Everything in this module is exact: no floats, no probabilistic shortcuts.
Determinants over polynomial rings use fraction-free (Bareiss) elimination so
that all intermediate divisions are exact ring divisions.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

# ---------------------------------------------------------------------------
# prime fields


def is_prime(n: int) -> bool:
    """Deterministic primality test for moduli up to 2**31."""
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


class PrimeField:
    """Context object for F_p; elements are ints reduced into range(p)."""

    __slots__ = ("p",)

    def __init__(self, p: int):
        if not is_prime(p):
            raise ValueError(f"modulus {p} is not prime")
        if p >= 2**31:
            raise ValueError(f"modulus {p} too large (need p < 2**31)")
        self.p = p

    def __eq__(self, other) -> bool:
        return isinstance(other, PrimeField) and other.p == self.p

    def __hash__(self) -> int:
        return hash(("PrimeField", self.p))

    def __repr__(self) -> str:
        return f"PrimeField({self.p})"

    def element(self, v: int) -> int:
        return v % self.p

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def neg(self, a: int) -> int:
        return (-a) % self.p

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def inv(self, a: int) -> int:
        if a % self.p == 0:
            raise ZeroDivisionError("inverse of zero in prime field")
        return pow(a, self.p - 2, self.p)

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        return pow(a, e, self.p)

    def elements(self) -> range:
        return range(self.p)


def binom_mod(n: int, k: int, p: int) -> int:
    """Binomial coefficient C(n, k) reduced mod p (0 when k < 0 or k > n)."""
    if k < 0 or k > n:
        return 0
    return math.comb(n, k) % p


# ---------------------------------------------------------------------------
# univariate polynomials


def _trim(coeffs: Sequence[int]) -> tuple[int, ...]:
    i = len(coeffs)
    while i > 0 and coeffs[i - 1] == 0:
        i -= 1
    return tuple(coeffs[:i])


class Poly:
    """Dense univariate polynomial over a prime field."""

    __slots__ = ("field", "coeffs")

    def __init__(self, field: PrimeField, coeffs: Sequence[int]):
        self.field = field
        self.coeffs = _trim([c % field.p for c in coeffs])

    # -- constructors

    @classmethod
    def zero(cls, field: PrimeField) -> "Poly":
        return cls(field, ())

    @classmethod
    def constant(cls, field: PrimeField, c: int) -> "Poly":
        return cls(field, (c,))

    @classmethod
    def x(cls, field: PrimeField) -> "Poly":
        return cls(field, (0, 1))

    @classmethod
    def interpolate(cls, field: PrimeField, xs: Sequence[int], ys: Sequence[int]) -> "Poly":
        """Unique polynomial of degree < len(xs) through the given points."""
        if len(xs) != len(ys):
            raise ValueError("point/value length mismatch")
        if len(set(x % field.p for x in xs)) != len(xs):
            raise ValueError("interpolation nodes must be distinct")
        # Newton's divided differences, exact over F_p.
        p = field.p
        n = len(xs)
        xs = [x % p for x in xs]
        coef = [y % p for y in ys]
        for j in range(1, n):
            for i in range(n - 1, j - 1, -1):
                coef[i] = (coef[i] - coef[i - 1]) * field.inv((xs[i] - xs[i - j]) % p) % p
        # expand the Newton form back to monomial coefficients
        out = [0] * n
        for i in range(n - 1, -1, -1):
            nxt = [0] * n
            for k in range(n - 1):
                nxt[k + 1] = out[k]
            for k in range(n):
                nxt[k] = (nxt[k] - out[k] * xs[i]) % p
            nxt[0] = (nxt[0] + coef[i]) % p
            out = nxt
        return cls(field, out)

    # -- basic structure

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Poly)
            and other.field == self.field
            and other.coeffs == self.coeffs
        )

    def __hash__(self) -> int:
        return hash((self.field.p, self.coeffs))

    def __repr__(self) -> str:
        return f"Poly(p={self.field.p}, coeffs={list(self.coeffs)})"

    def coeff(self, i: int) -> int:
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else 0

    # -- arithmetic

    def __add__(self, other: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(self.field, [self.coeff(i) + other.coeff(i) for i in range(n)])

    def __sub__(self, other: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(self.field, [self.coeff(i) - other.coeff(i) for i in range(n)])

    def __neg__(self) -> "Poly":
        return Poly(self.field, [-c for c in self.coeffs])

    def __mul__(self, other: "Poly") -> "Poly":
        if self.is_zero() or other.is_zero():
            return Poly.zero(self.field)
        p = self.field.p
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                out[i + j] = (out[i + j] + a * b) % p
        return Poly(self.field, out)

    def scale(self, c: int) -> "Poly":
        c %= self.field.p
        return Poly(self.field, [a * c for a in self.coeffs])

    def evaluate(self, a: int) -> int:
        p = self.field.p
        a %= p
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * a + c) % p
        return acc

    def shift_argument(self, c: int) -> "Poly":
        """Return P(x + c)."""
        return self.compose(Poly(self.field, (c, 1)))

    def scale_argument(self, s: int) -> "Poly":
        """Return P(s * x)."""
        p = self.field.p
        s %= p
        return Poly(self.field, [a * pow(s, i, p) for i, a in enumerate(self.coeffs)])

    def compose(self, inner: "Poly") -> "Poly":
        """Return P(inner(x)) by Horner's rule."""
        acc = Poly.zero(self.field)
        for c in reversed(self.coeffs):
            acc = acc * inner + Poly.constant(self.field, c)
        return acc

    def divmod(self, other: "Poly") -> tuple["Poly", "Poly"]:
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        p = self.field.p
        rem = list(self.coeffs)
        dq = len(self.coeffs) - len(other.coeffs)
        if dq < 0:
            return Poly.zero(self.field), self
        quo = [0] * (dq + 1)
        lead_inv = self.field.inv(other.coeffs[-1])
        for i in range(dq, -1, -1):
            c = rem[i + len(other.coeffs) - 1] * lead_inv % p
            quo[i] = c
            if c:
                for j, b in enumerate(other.coeffs):
                    rem[i + j] = (rem[i + j] - c * b) % p
        return Poly(self.field, quo), Poly(self.field, rem)

    def monic(self) -> "Poly":
        if self.is_zero():
            return self
        return self.scale(self.field.inv(self.coeffs[-1]))

    def derivative(self) -> "Poly":
        p = self.field.p
        return Poly(self.field, [(i * c) % p for i, c in enumerate(self.coeffs)][1:])

    def gcd(self, other: "Poly") -> "Poly":
        """Monic greatest common divisor."""
        a, b = self, other
        while not b.is_zero():
            a, b = b, a.divmod(b)[1]
        return a.monic() if not a.is_zero() else a

    def to_multi(self, nvars: int, var: int) -> "MultiPoly":
        """Embed into a multivariate ring as a polynomial in variable ``var``."""
        terms = {}
        for i, c in enumerate(self.coeffs):
            if c:
                e = [0] * nvars
                e[var] = i
                terms[tuple(e)] = c
        return MultiPoly(self.field, nvars, terms)


# ---------------------------------------------------------------------------
# multivariate polynomials


class MultiPoly:
    """Sparse multivariate polynomial over a prime field."""

    __slots__ = ("field", "nvars", "terms")

    def __init__(self, field: PrimeField, nvars: int, terms: Mapping[tuple[int, ...], int]):
        self.field = field
        self.nvars = nvars
        clean: dict[tuple[int, ...], int] = {}
        for e, c in terms.items():
            if len(e) != nvars:
                raise ValueError("exponent tuple has wrong arity")
            c %= field.p
            if c:
                clean[tuple(e)] = c
        self.terms = clean

    # -- constructors

    @classmethod
    def zero(cls, field: PrimeField, nvars: int) -> "MultiPoly":
        return cls(field, nvars, {})

    @classmethod
    def constant(cls, field: PrimeField, nvars: int, c: int) -> "MultiPoly":
        return cls(field, nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, field: PrimeField, nvars: int, var: int) -> "MultiPoly":
        e = [0] * nvars
        e[var] = 1
        return cls(field, nvars, {tuple(e): 1})

    # -- structure

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MultiPoly)
            and other.field == self.field
            and other.nvars == self.nvars
            and other.terms == self.terms
        )

    def __hash__(self) -> int:
        return hash((self.field.p, self.nvars, self.key()))

    def key(self) -> tuple:
        """Canonical sorted-term tuple, usable for ordering and dedup."""
        return tuple(sorted(self.terms.items()))

    def __repr__(self) -> str:
        items = ", ".join(f"{e}:{c}" for e, c in sorted(self.terms.items()))
        return f"MultiPoly(p={self.field.p}, nvars={self.nvars}, {{{items}}})"

    def total_degree(self) -> int:
        if not self.terms:
            return -1
        return max(sum(e) for e in self.terms)

    def weighted_degree(self, weights: Sequence[int]) -> int:
        """Max over terms of the weight-weighted exponent sum (-1 for zero)."""
        if len(weights) != self.nvars:
            raise ValueError("weight vector has wrong arity")
        if not self.terms:
            return -1
        return max(sum(w * x for w, x in zip(weights, e)) for e in self.terms)

    def degree_in(self, var: int) -> int:
        if not self.terms:
            return -1
        return max(e[var] for e in self.terms)

    def support(self) -> frozenset[tuple[int, ...]]:
        return frozenset(self.terms)

    # -- arithmetic

    def __add__(self, other: "MultiPoly") -> "MultiPoly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return MultiPoly(self.field, self.nvars, out)

    def __sub__(self, other: "MultiPoly") -> "MultiPoly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) - c
        return MultiPoly(self.field, self.nvars, out)

    def __neg__(self) -> "MultiPoly":
        return MultiPoly(self.field, self.nvars, {e: -c for e, c in self.terms.items()})

    def __mul__(self, other: "MultiPoly") -> "MultiPoly":
        p = self.field.p
        out: dict[tuple[int, ...], int] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = (out.get(e, 0) + c1 * c2) % p
        return MultiPoly(self.field, self.nvars, out)

    def scale(self, c: int) -> "MultiPoly":
        return MultiPoly(self.field, self.nvars, {e: v * c for e, v in self.terms.items()})

    def pow(self, k: int) -> "MultiPoly":
        if k < 0:
            raise ValueError("negative power")
        acc = MultiPoly.constant(self.field, self.nvars, 1)
        base = self
        while k:
            if k & 1:
                acc = acc * base
            base = base * base
            k >>= 1
        return acc

    def evaluate(self, point: Sequence[int]) -> int:
        if len(point) != self.nvars:
            raise ValueError("evaluation point has wrong arity")
        p = self.field.p
        pt = [v % p for v in point]
        # cache powers per variable up to the needed exponent
        maxdeg = [0] * self.nvars
        for e in self.terms:
            for i, x in enumerate(e):
                if x > maxdeg[i]:
                    maxdeg[i] = x
        pows = []
        for i in range(self.nvars):
            row = [1] * (maxdeg[i] + 1)
            for j in range(1, maxdeg[i] + 1):
                row[j] = row[j - 1] * pt[i] % p
            pows.append(row)
        acc = 0
        for e, c in self.terms.items():
            t = c
            for i, x in enumerate(e):
                if x:
                    t = t * pows[i][x] % p
            acc = (acc + t) % p
        return acc

    def partial_evaluate(self, assignments: Mapping[int, int]) -> "MultiPoly":
        """Substitute constants for some variables; arity is unchanged."""
        p = self.field.p
        out: dict[tuple[int, ...], int] = {}
        for e, c in self.terms.items():
            t = c
            ne = list(e)
            for var, val in assignments.items():
                if e[var]:
                    t = t * pow(val % p, e[var], p) % p
                ne[var] = 0
            if t:
                ne_t = tuple(ne)
                out[ne_t] = (out.get(ne_t, 0) + t) % p
        return MultiPoly(self.field, self.nvars, out)

    def substitute(self, mapping: Mapping[int, "MultiPoly"]) -> "MultiPoly":
        """Substitute polynomials for variables (variables absent stay fixed)."""
        # cache powers of each substituted image
        pow_cache: dict[int, list[MultiPoly]] = {}
        for var, img in mapping.items():
            if img.nvars != self.nvars:
                raise ValueError("substitution image has wrong arity")
            pow_cache[var] = [MultiPoly.constant(self.field, self.nvars, 1)]
        out = MultiPoly.zero(self.field, self.nvars)
        for e, c in self.terms.items():
            term = MultiPoly.constant(self.field, self.nvars, c)
            ne = [0] * self.nvars
            for i, x in enumerate(e):
                if i in pow_cache:
                    cache = pow_cache[i]
                    while len(cache) <= x:
                        cache.append(cache[-1] * mapping[i])
                    if x:
                        term = term * cache[x]
                else:
                    ne[i] = x
            mono = MultiPoly(self.field, self.nvars, {tuple(ne): 1})
            out = out + term * mono
        return out

    # -- calculus and truncation

    def hasse_derivative(self, orders: Sequence[int]) -> "MultiPoly":
        """Hasse derivative: coefficient of z^orders in the shift expansion.

        On monomials this sends x^n to C(n, e) x^(n-e) coordinatewise, which
        for first-order derivatives agrees with the formal partial derivative.
        """
        if len(orders) != self.nvars:
            raise ValueError("order tuple has wrong arity")
        p = self.field.p
        out: dict[tuple[int, ...], int] = {}
        for e, c in self.terms.items():
            coef = c
            ne = []
            for n, k in zip(e, orders):
                if n < k:
                    coef = 0
                    break
                coef = coef * binom_mod(n, k, p) % p
                ne.append(n - k)
            if coef:
                ne_t = tuple(ne)
                out[ne_t] = (out.get(ne_t, 0) + coef) % p
        return MultiPoly(self.field, self.nvars, out)

    def truncate_total_degree(self, vars_subset: Sequence[int], maxdeg: int) -> "MultiPoly":
        """Drop terms whose exponent sum over ``vars_subset`` exceeds maxdeg."""
        vs = tuple(vars_subset)
        keep = {
            e: c for e, c in self.terms.items() if sum(e[i] for i in vs) <= maxdeg
        }
        return MultiPoly(self.field, self.nvars, keep)

    def coeffs_in_var(self, var: int) -> list["MultiPoly"]:
        """Coefficient polynomials of var^0, var^1, ... (arity preserved)."""
        d = self.degree_in(var)
        if d < 0:
            return []
        buckets: list[dict[tuple[int, ...], int]] = [dict() for _ in range(d + 1)]
        for e, c in self.terms.items():
            ne = list(e)
            k = ne[var]
            ne[var] = 0
            buckets[k][tuple(ne)] = c
        return [MultiPoly(self.field, self.nvars, b) for b in buckets]

    def to_poly(self, var: int) -> Poly:
        """View as a univariate polynomial in ``var`` (others must be absent)."""
        coeffs = [0] * (self.degree_in(var) + 1)
        for e, c in self.terms.items():
            if any(x and i != var for i, x in enumerate(e)):
                raise ValueError("polynomial is not univariate in the given variable")
            coeffs[e[var]] = c
        return Poly(self.field, coeffs)

    def exact_div(self, divisor: "MultiPoly") -> "MultiPoly":
        """Exact ring division (raises if the divisor does not divide evenly)."""
        if divisor.is_zero():
            raise ZeroDivisionError("exact division by zero polynomial")
        if len(divisor.terms) == 1:
            (de, dc), = divisor.terms.items()
            dc_inv = self.field.inv(dc)
            out = {}
            for e, c in self.terms.items():
                ne = tuple(a - b for a, b in zip(e, de))
                if any(x < 0 for x in ne):
                    raise ArithmeticError("division is not exact")
                out[ne] = c * dc_inv
            return MultiPoly(self.field, self.nvars, out)
        p = self.field.p
        rem = dict(self.terms)
        out: dict[tuple[int, ...], int] = {}
        dlead = max(divisor.terms)  # lex-largest exponent
        dlead_c_inv = self.field.inv(divisor.terms[dlead])
        while rem:
            rlead = max(rem)
            q = tuple(a - b for a, b in zip(rlead, dlead))
            if any(x < 0 for x in q):
                raise ArithmeticError("division is not exact")
            qc = rem[rlead] * dlead_c_inv % p
            out[q] = qc
            for e, c in divisor.terms.items():
                ne = tuple(a + b for a, b in zip(e, q))
                nc = (rem.get(ne, 0) - qc * c) % p
                if nc:
                    rem[ne] = nc
                else:
                    rem.pop(ne, None)
        return MultiPoly(self.field, self.nvars, out)


# ---------------------------------------------------------------------------
# resultants and discriminants


def sylvester_matrix(A: MultiPoly, B: MultiPoly, var: int) -> list[list[MultiPoly]]:
    """Sylvester matrix of A and B with respect to ``var``.

    Rows list ascending coefficients: deg(B) shifted rows of A's coefficients
    followed by deg(A) shifted rows of B's coefficients.
    """
    if A.field != B.field or A.nvars != B.nvars:
        raise ValueError("operands live in different rings")
    a = A.degree_in(var)
    b = B.degree_in(var)
    if a < 0 or b < 0:
        raise ValueError("resultant of the zero polynomial is undefined here")
    ac = A.coeffs_in_var(var)
    bc = B.coeffs_in_var(var)
    n = a + b
    zero = MultiPoly.zero(A.field, A.nvars)
    M = [[zero for _ in range(n)] for _ in range(n)]
    for r in range(b):
        for i, c in enumerate(ac):
            M[r][r + i] = c
    for r in range(a):
        for i, c in enumerate(bc):
            M[b + r][r + i] = c
    return M


def det_bareiss(M: list[list[MultiPoly]], field: PrimeField, nvars: int) -> MultiPoly:
    """Determinant over the polynomial ring by fraction-free elimination."""
    n = len(M)
    if n == 0:
        return MultiPoly.constant(field, nvars, 1)
    M = [row[:] for row in M]
    sign = 1
    prev = MultiPoly.constant(field, nvars, 1)
    for k in range(n - 1):
        if M[k][k].is_zero():
            pivot = next((r for r in range(k + 1, n) if not M[r][k].is_zero()), None)
            if pivot is None:
                return MultiPoly.zero(field, nvars)
            M[k], M[pivot] = M[pivot], M[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = M[i][j] * M[k][k] - M[i][k] * M[k][j]
                M[i][j] = num.exact_div(prev)
            M[i][k] = MultiPoly.zero(field, nvars)
        prev = M[k][k]
    det = M[n - 1][n - 1]
    return det if sign == 1 else -det


def resultant(A: MultiPoly, B: MultiPoly, var: int) -> MultiPoly:
    """Resultant of A and B with respect to ``var`` (as a poly in the rest)."""
    if A.is_zero() or B.is_zero():
        return MultiPoly.zero(A.field, A.nvars)
    a = A.degree_in(var)
    b = B.degree_in(var)
    if a == 0 and b == 0:
        return MultiPoly.constant(A.field, A.nvars, 1)
    if a == 0:
        return A.pow(b)
    if b == 0:
        return B.pow(a)
    return det_bareiss(sylvester_matrix(A, B, var), A.field, A.nvars)


def discriminant(A: MultiPoly, var: int) -> MultiPoly:
    """Resultant of A with its first derivative in ``var``."""
    orders = [0] * A.nvars
    orders[var] = 1
    dA = A.hasse_derivative(orders)
    if dA.is_zero():
        # constant in var, or a p-th power in var; square-freeness in var is
        # not decidable from the discriminant, so the caller must restructure
        raise ValueError("discriminant needs a nonzero derivative in var")
    return resultant(A, dA, var)


def is_squarefree(A: MultiPoly, var: int) -> bool:
    """Whether A has no repeated factor involving ``var``."""
    return not discriminant(A, var).is_zero()


def poly_is_squarefree(f: Poly) -> bool:
    """Univariate square-freeness via gcd with the derivative."""
    if f.is_zero():
        return False
    df = f.derivative()
    if df.is_zero():
        return f.degree == 0
    return f.gcd(df).degree == 0


# free-function forms of the MultiPoly methods, for symmetry with the
# resultant family


def weighted_degree(f: MultiPoly, weights: Sequence[int]) -> int:
    return f.weighted_degree(weights)


def hasse_derivative(f: MultiPoly, orders: Sequence[int]) -> MultiPoly:
    return f.hasse_derivative(orders)


def truncate_mod_ideal(f: MultiPoly, vars_subset: Sequence[int], k: int) -> MultiPoly:
    """Drop terms of total degree >= k+1 in the subset variables."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return f.truncate_total_degree(vars_subset, k)


# ---------------------------------------------------------------------------
# truncated power series helpers


def truncated_inverse(
    f: MultiPoly, vars_subset: Sequence[int], maxdeg: int
) -> MultiPoly:
    """Multiplicative inverse of f as a power series in ``vars_subset``.

    The image of f with the subset variables set to 0 must be a nonzero
    constant; the result u satisfies f*u = 1 up to total degree maxdeg in the
    subset variables.
    """
    vs = tuple(vars_subset)
    c0 = f.partial_evaluate({v: 0 for v in vs})
    if set(c0.support()) - {(0,) * f.nvars}:
        raise ValueError("series inverse needs a constant leading term")
    c = c0.terms.get((0,) * f.nvars, 0)
    if c == 0:
        raise ZeroDivisionError("series inverse of a polynomial vanishing at 0")
    one = MultiPoly.constant(f.field, f.nvars, 1)
    two = MultiPoly.constant(f.field, f.nvars, 2)
    u = MultiPoly.constant(f.field, f.nvars, f.field.inv(c))
    prec = 0
    while prec < maxdeg:
        prec = min(2 * prec + 1, maxdeg)
        u = (u * (two - f * u)).truncate_total_degree(vs, prec)
    # final check at the requested precision
    if not ((f * u - one).truncate_total_degree(vs, maxdeg)).is_zero():
        raise ArithmeticError("series inversion failed")
    return u


# ---------------------------------------------------------------------------
# monomial supports for weighted-degree interpolation


class MonomialSupport:
    """Set of exponent triples (i, j, k) with i + j + d*k <= D.

    With ``p`` set and ``restricted=True``, triples keep only k = 0 or k not
    divisible by p, so that any member polynomial that involves the third
    variable has a nonzero first derivative in it.
    """

    __slots__ = ("d", "D", "p", "restricted", "members")

    def __init__(self, d: int, D: int, p: int | None, restricted: bool,
                 members: frozenset[tuple[int, int, int]]):
        self.d = d
        self.D = D
        self.p = p
        self.restricted = restricted
        self.members = members

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))

    def __contains__(self, e) -> bool:
        return tuple(e) in self.members

    def __repr__(self) -> str:
        tag = "restricted" if self.restricted else "full"
        return f"MonomialSupport(d={self.d}, D={self.D}, {tag}, size={len(self.members)})"


def enumerate_support(d: int, D: int, p: int | None = None,
                      restricted: bool = False) -> MonomialSupport:
    """Enumerate exponent triples of (1, 1, d)-weighted degree at most D."""
    if d < 1 or D < 0:
        raise ValueError("need d >= 1 and D >= 0")
    if restricted and (p is None or p < 2):
        raise ValueError("restricted supports need the field characteristic")
    members = set()
    for k in range(D // d + 1):
        if restricted and k != 0 and k % p == 0:
            continue
        rest = D - d * k
        for i in range(rest + 1):
            for j in range(rest - i + 1):
                members.add((i, j, k))
    return MonomialSupport(d, D, p, restricted, frozenset(members))


# ---------------------------------------------------------------------------
# counting and averaging utilities


def count_zeros_product_set(P: MultiPoly, S: Sequence[int]) -> int:
    """Number of zeros of P on the grid S^nvars (exhaustive)."""
    vals = [s % P.field.p for s in S]
    if len(set(vals)) != len(vals):
        raise ValueError("grid set has repeated elements")
    count = 0
    point = [0] * P.nvars
    n = len(vals)
    total = n ** P.nvars
    for idx in range(total):
        t = idx
        for i in range(P.nvars - 1, -1, -1):
            point[i] = vals[t % n]
            t //= n
        if P.evaluate(point) == 0:
            count += 1
    return count


def averaging_split(xs: Sequence[Fraction | float | int], mu) -> list[int]:
    """Indices i with xs[i] >= mu/2; the heavy half of an averaging argument.

    When sum(xs) >= mu * len(xs), the returned index set S satisfies both
    |S| >= mu * len(xs) / 2 and sum over S >= mu * len(xs) / 2.
    """
    mu = Fraction(mu)
    vals = [Fraction(x) for x in xs]
    if sum(vals) < mu * len(vals):
        raise ValueError("mean of xs falls below mu")
    half = mu / 2
    return [i for i, x in enumerate(vals) if x >= half]


# ---------------------------------------------------------------------------
# dense linear algebra mod p (numpy int64 rows, exact arithmetic)


def _as_matrix(M: np.ndarray, p: int) -> np.ndarray:
    A = np.array(M, dtype=np.int64) % p
    if A.ndim != 2:
        raise ValueError("need a 2-d matrix")
    return A


def rref_mod_p(M: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form mod p; returns (R, pivot column list).

    Row i of the result is the pivot row for pivots[i].  Elimination runs in
    column panels: reduction inside the panel is element-wise, and the
    accumulated row operations hit the columns outside the panel as a single
    matrix product per panel.  Every value stays below p, so float64 products
    of a panel's worth of terms are exact and the result, reduced mod p, is
    the same matrix the one-column-at-a-time algorithm produces.
    """
    A0 = _as_matrix(M, p)
    rows, cols = A0.shape
    if rows == 0 or cols == 0:
        return A0, []
    panel = 128
    if float(p) * p * panel >= 2.0**53:
        raise ValueError("modulus too large for exact float64 panel updates")
    A = A0.astype(np.float64)
    pivots: list[int] = []
    npiv = 0
    for c0 in range(0, cols, panel):
        c1 = min(cols, c0 + panel)
        w = c1 - c0
        # contiguous working copies (never views of A; the row swaps below
        # touch A too); values in P stay below panel * p^2, so reduction
        # mod p can wait until the panel is done
        P = A[:, c0:c1].copy()
        P0 = P.copy()  # pre-panel values, for the update matrix
        panel_rows: list[int] = []
        panel_cols: list[int] = []
        for c in range(w):
            col = P[:, c] % p
            fill = npiv + len(panel_rows)
            avail = np.nonzero(col[fill:])[0]
            # rows above the fill line already host pivots
            if avail.size == 0:
                continue
            r = fill + int(avail[0])
            if r != fill:
                P[[r, fill]] = P[[fill, r]]
                P0[[r, fill]] = P0[[fill, r]]
                A[[r, fill]] = A[[fill, r]]
                col[[r, fill]] = col[[fill, r]]
                r = fill
            inv = float(pow(int(col[r]), p - 2, p))
            P[r] = P[r] % p * inv % p
            f = col
            f[r] = 0.0
            P -= f[:, None] * P[r]
            panel_rows.append(r)
            panel_cols.append(c0 + c)
        k = len(panel_rows)
        P %= p
        if k:
            # net effect on all other columns: T -> T + Mu @ T[panel_rows],
            # with Mu = (U - B) B[panel_rows]^{-1}, B the pre-panel columns
            B = P0[:, [c - c0 for c in panel_cols]] % p
            U = np.zeros((rows, k))
            for i, r in enumerate(panel_rows):
                U[r, i] = 1.0
            Bpp = B[panel_rows].astype(np.int64)
            aug, piv = _rref_small(np.hstack([Bpp, np.eye(k, dtype=np.int64)]), p)
            if piv != list(range(k)):
                raise ArithmeticError("panel pivot block must be invertible")
            invB = aug[:, k:].astype(np.float64)
            Mu = (U - B) @ invB % p
            A += Mu @ A[panel_rows, :]
            A %= p
        A[:, c0:c1] = P  # the panel itself is final; the update skips it
        pivots.extend(panel_cols)
        npiv += k
        if npiv == rows:
            break
    return A.astype(np.int64), pivots


def _rref_small(M: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    """Element-wise reduced row echelon form, for small exact solves."""
    A = _as_matrix(M, p)
    rows, cols = A.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        nz = np.nonzero(A[r:, c])[0]
        if nz.size == 0:
            continue
        pr = r + int(nz[0])
        if pr != r:
            A[[r, pr]] = A[[pr, r]]
        A[r] = A[r] * pow(int(A[r, c]), p - 2, p) % p
        col = A[:, c].copy()
        col[r] = 0
        mask = col != 0
        if mask.any():
            A[mask] = (A[mask] - col[mask, None] * A[r][None, :]) % p
        pivots.append(c)
        r += 1
    return A, pivots


def kernel_basis_mod_p(M: np.ndarray, p: int) -> np.ndarray:
    """Deterministic kernel basis (one row per free column, ascending)."""
    A, pivots = rref_mod_p(M, p)
    cols = A.shape[1]
    pivset = set(pivots)
    free = [c for c in range(cols) if c not in pivset]
    basis = np.zeros((len(free), cols), dtype=np.int64)
    basis[np.arange(len(free)), free] = 1
    if pivots:
        basis[:, pivots] = -A[: len(pivots)][:, free].T % p
    return basis


def solve_mod_p(M: np.ndarray, b: np.ndarray, p: int) -> np.ndarray | None:
    """One solution of M x = b mod p, or None when inconsistent."""
    A = _as_matrix(M, p)
    rhs = np.array(b, dtype=np.int64).reshape(-1, 1) % p
    aug, pivots = rref_mod_p(np.hstack([A, rhs]), p)
    if A.shape[1] in pivots:
        return None
    x = np.zeros(A.shape[1], dtype=np.int64)
    for ri, pc in enumerate(pivots):
        x[pc] = aug[ri, -1]
    return x
