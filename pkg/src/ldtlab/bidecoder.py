"""Bivariate decoding through trivariate explainer surfaces.

The pipeline recovers degree-d bivariate polynomials that agree with a noisy
table on a small fraction of the plane.  It proceeds in stages: find two
directions whose line polynomials agree with the table on a large common set,
transform so those directions become the coordinate axes, interpolate a
trivariate polynomial A(x, y, z) vanishing on column graphs, propagate the
vanishing to full grid rows, re-derive a minimal square-free explainer from
the verified vanishing set, and finally lift per-line roots of A through a
pencil of lines at a good center to a global bivariate root.

Every stage ends in an exact verification, so the output never depends on the
probabilistic arguments that motivate the stage parameters.  Variables are
ordered (x, y, z) = (0, 1, 2) in all trivariate polynomials; lifted and
recovered bivariate polynomials use (x, y) = (0, 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .algebra import (
    MonomialSupport,
    MultiPoly,
    Poly,
    PrimeField,
    discriminant,
    enumerate_support,
    kernel_basis_mod_p,
    poly_is_squarefree,
    truncated_inverse,
)
from . import geometry
from .geometry import Point, all_directions, canonical_line, line_index, point_from_index
from . import ldt
from . import rsline

log = logging.getLogger(__name__)

_GRID_STREAM = 0x6B1D

__all__ = [
    "Explainer",
    "StructuredGrid",
    "PencilInstance",
    "find_good_directions",
    "structured_grid",
    "interpolate_explainer",
    "minimal_explainer",
    "vanish_propagate",
    "newton_lift",
    "pencil_decode",
    "decode_bivariate",
    "list_and_highagreement_forms",
]


# ---------------------------------------------------------------------------
# explainer surfaces


@dataclass(frozen=True)
class Explainer:
    """A trivariate certificate A(x, y, z) for a set of (point, value) data.

    Invariants are enforced on construction: A is supported on the admissible
    monomial set, its (1, 1, d)-weighted degree is at most D, it depends on z
    with a nonzero first z-derivative, and its z-discriminant is nonzero (so
    A is square-free as a polynomial in z).
    """

    A: MultiPoly
    D: int
    support: MonomialSupport
    d_z: int
    disc_z: MultiPoly = dc_field(compare=False)

    def __post_init__(self) -> None:
        d = self.support.d
        if self.A.nvars != 3:
            raise ValueError("explainer polynomial must have three variables")
        if self.A.weighted_degree((1, 1, d)) > self.D:
            raise ValueError("weighted degree exceeds the declared bound")
        if not set(self.A.support()) <= self.support.members:
            raise ValueError("polynomial leaves the admissible support")
        if self.A.hasse_derivative((0, 0, 1)).is_zero():
            raise ValueError("explainer must have a nonzero z-derivative")
        if self.d_z != self.A.degree_in(2) or self.d_z * d > self.D:
            raise ValueError("z-degree bound violated")
        if self.disc_z.is_zero():
            raise ValueError("explainer must be square-free in z")

    @property
    def d(self) -> int:
        return self.support.d

    @classmethod
    def build(cls, A: MultiPoly, d: int, D: int) -> "Explainer":
        support = enumerate_support(d, D, A.field.p, restricted=True)
        disc = discriminant(A, 2)
        return cls(A=A, D=D, support=support, d_z=A.degree_in(2), disc_z=disc)


def _embed_xy(P: MultiPoly) -> MultiPoly:
    """Lift a bivariate polynomial into the (x, y, z) ring with z absent."""
    return MultiPoly(P.field, 3, {(e[0], e[1], 0): c for e, c in P.terms.items()})


def _drop_z(P: MultiPoly) -> MultiPoly:
    if P.degree_in(2) > 0:
        raise ValueError("polynomial still involves z")
    return MultiPoly(P.field, 2, {(e[0], e[1]): c for e, c in P.terms.items()})


def _poly_in_t(field: PrimeField, const: int, slope: int) -> MultiPoly:
    """const + slope*t as a trivariate polynomial in the variable t = x."""
    return MultiPoly(field, 3, {(0, 0, 0): const, (1, 0, 0): slope})


def _line_composition(A: MultiPoly, base: Point, dirv: Point, root: Poly) -> MultiPoly:
    """A(base + t*dir, root(t)) as a trivariate polynomial in t = var 0."""
    field = A.field
    z_img = MultiPoly(field, 3, {(k, 0, 0): c for k, c in enumerate(root.coeffs)})
    return A.substitute({
        0: _poly_in_t(field, base[0], dirv[0]),
        1: _poly_in_t(field, base[1], dirv[1]),
        2: z_img,
    })


def _line_identity_zero(A: MultiPoly, D: int, q: int,
                        base: Point, dirv: Point, root: Poly) -> bool:
    """Exact check that A vanishes along a line with the given z-section.

    When D < q the composed polynomial has degree below q, so vanishing at
    every parameter value certifies the identity; otherwise fall back to the
    symbolic composition.
    """
    p = A.field.p
    if D < q:
        for t in range(q):
            x = (base[0] + t * dirv[0]) % p
            y = (base[1] + t * dirv[1]) % p
            z = root.evaluate(t)
            if A.evaluate((x, y, z)) != 0:
                return False
        return True
    return _line_composition(A, base, dirv, root).is_zero()


# ---------------------------------------------------------------------------
# direction search


def _direction_match_matrix(table: ldt.PointsTable, oracle: ldt.LinesOracle) -> np.ndarray:
    """Boolean (n_directions, n_points): line through x in direction u matches f at x."""
    q, m = table.q, table.m
    n_dirs = (q ** m - 1) // (q - 1)
    out = np.zeros((n_dirs, q ** m), dtype=bool)
    _, vf = rsline._vander(q, oracle.d)
    per_dir = q ** (m - 1)
    for di, vals, pts in ldt.direction_sweep(table):
        rows = slice(di * per_dir, (di + 1) * per_dir)
        ev = oracle.coeffs[rows].astype(np.float32) @ vf
        ev -= np.floor(ev / q) * q
        match = ev.astype(np.int64) == vals
        match[oracle.bot[rows]] = False
        out[di][pts] = match
    return out


def find_good_directions(
    table: ldt.PointsTable, oracle: ldt.LinesOracle, eps: Fraction
) -> tuple[Point, Point, set[Point]] | None:
    """Two distinct directions with a large common agreement set.

    A point qualifies when at least an eps/2-fraction of all lines through it
    match the table there and both candidate direction-lines match as well.
    The pair maximizing the qualifying count wins (lexicographically first on
    ties); returns None when no pair reaches eps^2 * q^2 / 8 points.
    """
    if table.m != 2:
        raise ValueError("direction search runs on bivariate tables")
    eps = Fraction(eps)
    q = table.q
    counts = ldt.point_agreement_counts(table, oracle)
    # eps_x >= eps / 2, exactly: 2 * count * den >= num * (q + 1)
    good = 2 * counts * eps.denominator >= eps.numerator * (q + 1)
    M = _direction_match_matrix(table, oracle)
    G = (M & good[None, :]).astype(np.float32)
    C = (G @ G.T).astype(np.int64)
    n_dirs = C.shape[0]
    C[np.tril_indices(n_dirs)] = -1
    flat = int(np.argmax(C))
    i, j = divmod(flat, n_dirs)
    best = int(C[i, j])
    if best < 0:
        return None
    # |H| >= eps^2 q^2 / 8, exactly
    if 8 * best * eps.denominator ** 2 < eps.numerator ** 2 * q ** 2:
        return None
    dirs = all_directions(q, 2)
    members = np.nonzero(G[i].astype(bool) & G[j].astype(bool))[0]
    H = {point_from_index(q, 2, int(t)) for t in members}
    return dirs[i], dirs[j], H


# ---------------------------------------------------------------------------
# structured grids


@dataclass(frozen=True)
class StructuredGrid:
    """Row/column scaffold inside a good set H.

    S2 holds the dense rows (second coordinate), S1 the chosen column values
    (first coordinate); every row in S2 is verified to meet H in at least
    (gamma/2)*|S1| of the S1 columns.  window_ok records whether the size of
    S1 fell inside the advisory window [2 ln(q)/gamma^2, gamma*q].
    """

    H: frozenset[Point]
    dir1: Point | None
    dir2: Point | None
    S1: tuple[int, ...]
    S2: tuple[int, ...]
    gamma: Fraction
    window_ok: bool


def structured_grid(
    q: int,
    H: Iterable[Point],
    gamma: Fraction,
    r: int,
    seed: int,
    dir1: Point | None = None,
    dir2: Point | None = None,
    max_tries: int = 64,
    stream: int = _GRID_STREAM,
) -> StructuredGrid | None:
    gamma = Fraction(gamma)
    Hset = frozenset(tuple(x) for x in H)
    if r < 1 or r > q:
        raise ValueError("column count must lie in [1, q]")
    window_ok = True
    gf = float(gamma)
    if gf > 0 and not (2.0 * math.log(q) / gf ** 2 <= r <= gf * q):
        window_ok = False
        log.warning("grid size r=%d outside advisory window for gamma=%s, q=%d", r, gamma, q)
    row_hits: dict[int, int] = {}
    for (_, b) in Hset:
        row_hits[b] = row_hits.get(b, 0) + 1
    # dense rows: at least gamma*q hits, compared exactly
    S2 = tuple(sorted(b for b, h in row_hits.items()
                      if h * gamma.denominator >= gamma.numerator * q))
    if not S2:
        return None
    rng = np.random.Generator(np.random.Philox(key=[seed, stream]))
    num, den = gamma.numerator, gamma.denominator
    for _ in range(max_tries):
        S1 = tuple(sorted(int(a) for a in rng.choice(q, size=r, replace=False)))
        ok = True
        for b in S2:
            hits = sum(1 for a in S1 if (a, b) in Hset)
            # hits >= (gamma/2) * r, exactly
            if 2 * hits * den < num * r:
                ok = False
                break
        if ok:
            return StructuredGrid(H=Hset, dir1=dir1, dir2=dir2, S1=S1, S2=S2,
                                  gamma=gamma, window_ok=window_ok)
    return None


# ---------------------------------------------------------------------------
# interpolation


def _column_poly(oracle: ldt.LinesOracle, q: int, a: int) -> Poly:
    """Oracle polynomial of the vertical line x = a, parameterized by y."""
    line = canonical_line(q, (a, 0), (0, 1))
    entry = oracle.entry(line)
    if entry is None:
        raise ValueError(f"column line x={a} has no oracle polynomial")
    # canonical base (a, 0) and direction (0, 1): parameter equals y
    return entry


def _row_poly(oracle: ldt.LinesOracle, q: int, b: int) -> Poly:
    line = canonical_line(q, (0, b), (1, 0))
    entry = oracle.entry(line)
    if entry is None:
        raise ValueError(f"row line y={b} has no oracle polynomial")
    return entry


def interpolate_explainer(
    table: ldt.PointsTable,
    oracle: ldt.LinesOracle,
    S1: Sequence[int],
    d: int,
    D: int,
) -> MultiPoly | None:
    """Nonzero A on the admissible support vanishing on |S1| column graphs.

    For each a in S1 the substitution A(a, y, P_a(y)) is expanded in powers
    of y; requiring every coefficient to vanish gives (D+1) linear conditions
    per column.  The admissible support must exceed |S1|*(D+1) so the kernel
    is provably nonzero; the first reduced-echelon kernel vector is returned.
    """
    q = table.q
    p = table.field.p
    support = enumerate_support(d, D, p, restricted=True)
    monos = sorted(support)
    cols = np.array(monos, dtype=np.int64)
    S1 = sorted(set(int(a) % q for a in S1))
    if len(support) <= len(S1) * (D + 1):
        raise ValueError("admissible support too small for the column count")
    I, J, K = cols[:, 0], cols[:, 1], cols[:, 2]
    kmax = int(K.max())
    blocks = []
    for a in S1:
        ca = _column_poly(oracle, q, a)
        # PK[k] = coefficients of P_a(y)^k, degree k*d <= D
        PK = np.zeros((kmax + 1, D + 1), dtype=np.int64)
        PK[0, 0] = 1
        acc = Poly.constant(table.field, 1)
        for k in range(1, kmax + 1):
            acc = acc * ca
            cf = acc.coeffs
            PK[k, : len(cf)] = cf
        apow = np.array([pow(a, int(i), p) for i in I], dtype=np.int64)
        LL = np.arange(D + 1)[:, None] - J[None, :]
        valid = LL >= 0
        gathered = PK[K[None, :].repeat(D + 1, axis=0), np.clip(LL, 0, D)]
        block = np.where(valid, gathered, 0) * apow[None, :] % p
        blocks.append(block)
    Mtx = np.vstack(blocks)
    basis = kernel_basis_mod_p(Mtx, p)
    if basis.shape[0] == 0:
        return None
    vec = basis[0]
    terms = {tuple(monos[t]): int(vec[t]) for t in range(len(monos)) if vec[t]}
    return MultiPoly(table.field, 3, terms)


def minimal_explainer(
    S: Iterable[tuple[Point, int]],
    d: int,
    D_max: int,
    p: int,
) -> Explainer | None:
    """Least-weighted-degree square-free certificate vanishing on S.

    Searches D = d, d+1, ..., D_max; at each level the kernel of the
    evaluation matrix over the admissible support is scanned in order for a
    vector that depends on z and has a nonzero z-discriminant.  The lowest
    level admitting one wins.
    """
    field = PrimeField(p)
    pts = sorted((tuple(int(c) % p for c in pt), int(v) % p) for pt, v in S)
    if not pts:
        raise ValueError("need a nonempty vanishing set")
    A_arr = np.array([pt[0] for pt, _ in pts], dtype=np.int64)
    B_arr = np.array([pt[1] for pt, _ in pts], dtype=np.int64)
    V_arr = np.array([v for _, v in pts], dtype=np.int64)
    for D in range(d, D_max + 1):
        support = enumerate_support(d, D, p, restricted=True)
        monos = sorted(support)
        cols = np.array(monos, dtype=np.int64)
        I, J, K = cols[:, 0], cols[:, 1], cols[:, 2]
        imax, jmax, kmax = int(I.max()), int(J.max()), int(K.max())
        AP = _pow_table(A_arr, imax, p)
        BP = _pow_table(B_arr, jmax, p)
        VP = _pow_table(V_arr, kmax, p)
        Mtx = AP[I] * BP[J] % p * VP[K] % p  # (n_monos, n_pts)
        basis = kernel_basis_mod_p(Mtx.T, p)
        for vec in basis:
            terms = {tuple(monos[t]): int(vec[t]) for t in range(len(monos)) if vec[t]}
            A = MultiPoly(field, 3, terms)
            if A.hasse_derivative((0, 0, 1)).is_zero():
                continue
            disc = discriminant(A, 2)
            if disc.is_zero():
                # square-free candidates may appear later in the same kernel
                continue
            return Explainer(A=A, D=D, support=support, d_z=A.degree_in(2), disc_z=disc)
    return None


def _pow_table(values: np.ndarray, emax: int, p: int) -> np.ndarray:
    """Rows 0..emax of values**e mod p, shape (emax + 1, len(values))."""
    out = np.ones((emax + 1, values.size), dtype=np.int64)
    for e in range(1, emax + 1):
        out[e] = out[e - 1] * values % p
    return out


# ---------------------------------------------------------------------------
# propagation


def vanish_propagate(
    A: Explainer | MultiPoly,
    table: ldt.PointsTable,
    oracle: ldt.LinesOracle,
    S2: Sequence[int],
    grid: StructuredGrid,
) -> set[Point]:
    """Rows of the grid on which A provably vanishes against the table.

    For each row b the composite G_b(x) = A(x, b, R_b(x)) is computed exactly
    from the row oracle polynomial R_b.  A zero G_b certifies vanishing at
    every H-point of the row.  When the degree precondition D < (gamma/2)*|S1|
    holds, a nonzero G_b with more roots than its degree is an internal
    inconsistency; without the precondition, failing rows are dropped.
    """
    q = table.q
    if isinstance(A, Explainer):
        poly, D = A.A, A.D
    else:
        poly, D = A, A.weighted_degree((1, 1, table.d))
    precondition = 2 * D * grid.gamma.denominator < grid.gamma.numerator * len(grid.S1)
    out: set[Point] = set()
    zero_dir = (1, 0)
    for b in sorted(set(int(b) % q for b in S2)):
        rb = _row_poly(oracle, q, b)
        G = _line_composition(poly, (0, b), zero_dir, rb)
        if G.is_zero():
            out |= {pt for pt in grid.H if pt[1] == b}
            continue
        gply = G.to_poly(0)
        roots = sum(1 for t in range(q) if gply.evaluate(t) == 0)
        if roots > gply.degree:
            raise ArithmeticError(
                f"row y={b}: nonzero composite with {roots} roots exceeds degree {gply.degree}"
            )
        if precondition:
            raise ArithmeticError(
                f"row y={b}: composite fails to vanish despite the degree precondition"
            )
        log.warning("vanish_propagate: dropping row y=%d (degree precondition not met)", b)
    return out


# ---------------------------------------------------------------------------
# Newton lifting


def newton_lift(A: MultiPoly, alpha: int, k: int) -> MultiPoly:
    """Unique degree-<=k series root of A(x, z) through (0, alpha).

    The last variable of A is the solved one; the remaining variables are the
    series variables.  Requires a simple root: A(0, alpha) = 0 and the first
    derivative in the solved variable nonzero there.  Iterates the Newton
    step, truncating to total degree j+1 after step j.
    """
    if k < 0:
        raise ValueError("lift order must be nonnegative")
    field = A.field
    n = A.nvars - 1
    if n < 1:
        raise ValueError("need at least one series variable")
    alpha %= field.p
    xvars = tuple(range(n))
    zv = n
    origin = {v: 0 for v in xvars}
    origin[zv] = alpha
    if not A.partial_evaluate(origin).is_zero():
        raise ValueError("alpha is not a root at the origin")
    dA = A.hasse_derivative(tuple(0 for _ in xvars) + (1,))
    if dA.partial_evaluate(origin).is_zero():
        raise ValueError("root is not simple")
    phi = MultiPoly.constant(field, A.nvars, alpha)
    for j in range(k):
        Aj = A.substitute({zv: phi})
        dAj = dA.substitute({zv: phi})
        u = truncated_inverse(dAj, xvars, j + 1)
        phi = (phi - Aj * u).truncate_total_degree(xvars, j + 1)
    residue = A.substitute({zv: phi}).truncate_total_degree(xvars, k)
    if not residue.is_zero():
        raise ArithmeticError("lift failed its own ideal-membership check")
    out_terms = {e[:-1]: c for e, c in phi.terms.items() if e[-1] == 0}
    if any(e[-1] for e in phi.terms):
        raise ArithmeticError("lift produced a term in the solved variable")
    return MultiPoly(field, n, out_terms)


# ---------------------------------------------------------------------------
# pencils


@dataclass(frozen=True)
class PencilInstance:
    """Per-direction local roots of an explainer along lines through a center.

    Every stored root is verified on construction to satisfy the line
    identity A(center + t*u, P_u(t)) = 0, and A(center, z) must be
    square-free.  size_bound_met records whether the pencil is large enough
    for the quantitative recovery guarantee (it rarely is at desk scale).
    """

    center: Point
    local_roots: Mapping[Point, Poly]
    size_bound_met: bool

    @classmethod
    def build(
        cls,
        A: Explainer,
        center: Point,
        local_roots: Mapping[Point, Poly],
        q: int,
    ) -> "PencilInstance":
        Ab = A.A.partial_evaluate({0: center[0], 1: center[1]}).to_poly(2)
        if Ab.is_zero() or not poly_is_squarefree(Ab):
            raise ValueError("explainer is not square-free at the center")
        for u, root in local_roots.items():
            if root.degree > A.d:
                raise ValueError("local root degree exceeds d")
            if not _line_identity_zero(A.A, A.D, q, center, u, root):
                raise ValueError(f"stored root fails the line identity in direction {u}")
        bound = A.d_z * A.D * q  # pencil-size floor for the quantitative guarantee at m = 2
        return cls(center=tuple(center), local_roots=dict(local_roots),
                   size_bound_met=len(local_roots) > bound)


def _lift_at_center(A: Explainer, center: Point, alpha: int) -> MultiPoly | None:
    """Newton-lift A at the center from root alpha; bivariate result or None."""
    field = A.A.field
    b1, b2 = center
    shifted = A.A.substitute({
        0: MultiPoly(field, 3, {(1, 0, 0): 1, (0, 0, 0): b1}),
        1: MultiPoly(field, 3, {(0, 1, 0): 1, (0, 0, 0): b2}),
    })
    try:
        phi = newton_lift(shifted, alpha, A.d)
    except ValueError:
        return None
    # translate back: P(x, y) = phi(x - b1, y - b2)
    return phi.substitute({
        0: MultiPoly(field, 2, {(1, 0): 1, (0, 0): -b1 % field.p}),
        1: MultiPoly(field, 2, {(0, 1): 1, (0, 0): -b2 % field.p}),
    })


def _verify_global_root(A: Explainer, P: MultiPoly) -> bool:
    return A.A.substitute({2: _embed_xy(P)}).is_zero()


def _root_directions(
    A: Explainer, P: MultiPoly, pencil: PencilInstance, q: int
) -> set[Point]:
    field = P.field
    out = set()
    b1, b2 = pencil.center
    for u, root in pencil.local_roots.items():
        restr = P.substitute({
            0: MultiPoly(field, 2, {(1, 0): u[0], (0, 0): b1}),
            1: MultiPoly(field, 2, {(1, 0): u[1], (0, 0): b2}),
        })
        if restr.to_poly(0) == root:
            out.add(u)
    return out


def pencil_decode(
    A: Explainer, b: Point, pencil: PencilInstance
) -> tuple[MultiPoly, set[Point]] | None:
    """Lift the most popular local root value at the center to a global root.

    Takes the plurality of the stored roots' values at t = 0 (ties toward the
    smaller field element), Newton-lifts it to degree d, and keeps the result
    only if A(x, y, P(x, y)) vanishes identically.
    """
    if not pencil.local_roots:
        return None
    q = A.A.field.p
    votes: dict[int, int] = {}
    for root in pencil.local_roots.values():
        v = root.evaluate(0)
        votes[v] = votes.get(v, 0) + 1
    alpha = min(votes, key=lambda v: (-votes[v], v))
    P = _lift_at_center(A, tuple(b), alpha)
    if P is None or not _verify_global_root(A, P):
        return None
    return P, _root_directions(A, P, pencil, q)


def _pencil_decode_all(
    A: Explainer, pencil: PencilInstance
) -> list[tuple[MultiPoly, set[Point]]]:
    """Every verified global root reachable from some local root value."""
    q = A.A.field.p
    alphas = sorted({root.evaluate(0) for root in pencil.local_roots.values()})
    out = []
    seen = set()
    for alpha in alphas:
        P = _lift_at_center(A, pencil.center, alpha)
        if P is None or not _verify_global_root(A, P):
            continue
        key = P.key()
        if key in seen:
            continue
        seen.add(key)
        out.append((P, _root_directions(A, P, pencil, q)))
    return out


# ---------------------------------------------------------------------------
# full pipeline


def _pullback_oracle(
    oracle: ldt.LinesOracle, M: np.ndarray, q: int, d: int
) -> ldt.LinesOracle:
    """Reparameterize a bivariate oracle through the substitution x -> Mx.

    The pulled-back entry of a line is the source entry of its image line
    composed with the affine parameter map, so the agreement multiset of each
    line is preserved exactly.
    """
    p = q
    field = PrimeField(p)
    n = geometry.n_lines(q, 2)
    coeffs = np.zeros((n, d + 1), dtype=np.int64)
    bot = np.zeros(n, dtype=bool)
    agree = np.zeros(n, dtype=np.int64) if oracle.agreements is not None else None
    dirs = all_directions(q, 2)
    for di, delta in enumerate(dirs):
        img_dir = (int(M[0, 0]) * delta[0] + int(M[0, 1]) * delta[1]) % p, \
                  (int(M[1, 0]) * delta[0] + int(M[1, 1]) * delta[1]) % p
        pivot = geometry._pivot(img_dir)
        c = img_dir[pivot]
        for rank in range(q):
            # base-rank order matches the canonical line indexing
            beta = _base_for_rank(q, delta, rank)
            img_pt = ((int(M[0, 0]) * beta[0] + int(M[0, 1]) * beta[1]) % p,
                      (int(M[1, 0]) * beta[0] + int(M[1, 1]) * beta[1]) % p)
            src = canonical_line(q, img_pt, img_dir)
            si = line_index(q, 2, src)
            gi = di * q + rank
            if oracle.bot[si]:
                bot[gi] = True
            else:
                # image point at parameter t is base + (s + c*t) * dir
                s = (img_pt[pivot] - src.base[pivot]) % p
                ply = Poly(field, [int(v) for v in oracle.coeffs[si, : d + 1]])
                ply = ply.shift_argument(s).scale_argument(c)
                cf = ply.coeffs
                coeffs[gi, : len(cf)] = cf
            if agree is not None:
                agree[gi] = oracle.agreements[si]
    return ldt.LinesOracle(q=q, m=2, d=d, coeffs=coeffs, bot=bot,
                           framing="pullback", agreements=agree)


def _base_for_rank(q: int, direction: Point, rank: int) -> Point:
    """Canonical base of the line with the given rank in direction order."""
    base = [0, 0]
    base[1 - geometry._pivot(direction)] = rank
    return tuple(base)


def _grid_evaluate(P: MultiPoly, q: int) -> np.ndarray:
    """Evaluate a bivariate polynomial on all of F_q^2 in point-index order."""
    p = P.field.p
    idx = np.arange(q * q)
    X = idx // q
    Y = idx % q
    out = np.zeros(q * q, dtype=np.int64)
    for (i, j), c in P.terms.items():
        out += c * ldt.pow_mod_array(X, i, p) % p * ldt.pow_mod_array(Y, j, p) % p
        out %= p
    return out


def _verified_line_flags(A: Explainer, table: ldt.PointsTable,
                         oracle: ldt.LinesOracle) -> np.ndarray:
    """Which lines' oracle entries are exact roots of A along the line."""
    q = table.q
    if A.D >= q:
        flags = np.zeros(geometry.n_lines(q, 2), dtype=bool)
        for li, (line, entry) in enumerate(oracle.items()):
            if entry is None:
                continue
            flags[li] = _line_composition(A.A, line.base, line.direction, entry).is_zero()
        return flags
    p = table.field.p
    ck_grid = [
        _grid_evaluate(_drop_z(cc), q)
        for cc in A.A.coeffs_in_var(2)
    ]
    _, vf = rsline._vander(q, oracle.d)
    flags = np.zeros(geometry.n_lines(q, 2), dtype=bool)
    for di, vals, pts in ldt.direction_sweep(table):
        rows = slice(di * q, (di + 1) * q)
        Z = oracle.coeffs[rows].astype(np.float32) @ vf
        Z -= np.floor(Z / q) * q
        Z = Z.astype(np.int64)
        G = np.full(Z.shape, 0, dtype=np.int64)
        for cg in reversed(ck_grid):
            G = (G * Z + cg[pts]) % p
        ok = (G == 0).all(axis=1)
        ok &= ~oracle.bot[rows]
        flags[di * q : (di + 1) * q] = ok
    return flags


def _default_schedule(q: int, d: int, p: int) -> list[int]:
    """Weighted-degree stages whose column counts force full propagation."""
    base = None
    for D in range(max(d, 2), q):
        n = len(enumerate_support(d, D, p, restricted=True))
        r = min(q, (n - 1) // (D + 1))
        if r >= D + 1:
            base = D
            break
    if base is None:
        return [d]
    out = []
    for mult in (1, 2, 3):
        D = base * mult
        if D >= q:
            break
        n = len(enumerate_support(d, D, p, restricted=True))
        if n > 4000:
            break
        out.append(D)
    return out or [base]


def decode_bivariate(
    table: ldt.PointsTable,
    eps: Fraction,
    params: Mapping | None = None,
    trace: list | None = None,
) -> list[tuple[MultiPoly, Fraction]]:
    """Recover degree-d bivariate polynomials with eps-agreement, exactly verified.

    Stages: good-direction search, coordinate change onto the directions,
    structured grid, column interpolation, row propagation, minimal explainer
    on the verified vanishing set, good-center pencil decoding.  The first
    weighted-degree stage of the schedule whose final verification reports a
    polynomial wins.  Every reported agreement is an exact count against the
    input table; the list is empty when any stage fails for every stage of
    the schedule.
    """
    eps = Fraction(eps)
    params = dict(params or {})
    q, d = table.q, table.d
    p = table.field.p
    field = table.field
    seed = int(params.get("seed", 0))
    max_centers = int(params.get("max_centers", 8))
    grid_tries = int(params.get("grid_tries", 64))
    floor = Fraction(params.get("agreement_floor", eps))

    def stage(name: str, status: str, **metrics) -> None:
        if trace is not None:
            trace.append({"name": name, "status": status, "metrics": metrics})
        log.debug("decode2 stage %s: %s %s", name, status, metrics)

    oracle = ldt.canonical_oracle(table)
    fgd = find_good_directions(table, oracle, eps)
    if fgd is None:
        stage("good_directions", "fail")
        return []
    dir1, dir2, H = fgd
    stage("good_directions", "ok", dir1=dir1, dir2=dir2, H_size=len(H))

    M = np.array([[dir1[0], dir2[0]], [dir1[1], dir2[1]]], dtype=np.int64)
    det = (int(M[0, 0]) * int(M[1, 1]) - int(M[0, 1]) * int(M[1, 0])) % p
    inv_det = field.inv(det)
    Minv = np.array([
        [int(M[1, 1]) * inv_det % p, (-int(M[0, 1])) * inv_det % p],
        [(-int(M[1, 0])) * inv_det % p, int(M[0, 0]) * inv_det % p],
    ], dtype=np.int64)
    g = ldt.affine_pullback(table, M, (0, 0))
    oracle_g = _pullback_oracle(oracle, M, q, d)
    Hg = {
        (int(Minv[0, 0] * x + Minv[0, 1] * y) % p, int(Minv[1, 0] * x + Minv[1, 1] * y) % p)
        for (x, y) in H
    }
    gamma = Fraction(len(H), 2 * q * q)
    schedule = list(params.get("schedule") or _default_schedule(q, d, p))

    results: dict[tuple, tuple[MultiPoly, Fraction]] = {}
    for si, D in enumerate(schedule):
        n_support = len(enumerate_support(d, D, p, restricted=True))
        r = min(q, (n_support - 1) // (D + 1))
        if r < 1:
            stage(f"grid[D={D}]", "skip", reason="no columns available")
            continue
        grid = structured_grid(q, Hg, gamma, r, seed, dir1=dir1, dir2=dir2,
                               max_tries=grid_tries, stream=_GRID_STREAM + si)
        if grid is None:
            stage(f"grid[D={D}]", "fail")
            continue
        stage(f"grid[D={D}]", "ok", r=r, rows=len(grid.S2), window_ok=grid.window_ok)
        try:
            A0 = interpolate_explainer(g, oracle_g, grid.S1, d, D)
        except ValueError as exc:
            stage(f"interpolate[D={D}]", "fail", error=str(exc))
            continue
        if A0 is None:
            stage(f"interpolate[D={D}]", "fail", error="trivial kernel")
            continue
        stage(f"interpolate[D={D}]", "ok", terms=len(A0.terms))
        S = vanish_propagate(A0, g, oracle_g, grid.S2, grid)
        if not S:
            stage(f"propagate[D={D}]", "fail")
            continue
        stage(f"propagate[D={D}]", "ok", points=len(S))
        Sv = {(pt, g.value_at(pt)) for pt in S}
        expl = minimal_explainer(Sv, d, D, p)
        if expl is None:
            stage(f"explainer[D={D}]", "fail")
            continue
        stage(f"explainer[D={D}]", "ok", D=expl.D, d_z=expl.d_z, terms=len(expl.A.terms))

        flags = _verified_line_flags(expl, g, oracle_g)
        disc_vals = _grid_evaluate(_drop_z(expl.disc_z), q)
        line_counts = np.zeros(q * q, dtype=np.int64)
        for di, _, pts in ldt.direction_sweep(g):
            block = flags[di * q : (di + 1) * q]
            np.add.at(line_counts, pts.reshape(-1), np.repeat(block, q))
        order = sorted(
            range(q * q),
            key=lambda t: (disc_vals[t] == 0, -int(line_counts[t]), t),
        )
        found_here = False
        tried = 0
        for t in order[: max(4 * max_centers, max_centers)]:
            if tried >= max_centers:
                break
            center = point_from_index(q, 2, t)
            roots: dict[Point, Poly] = {}
            for di, u in enumerate(all_directions(q, 2)):
                line = canonical_line(q, center, u)
                li = line_index(q, 2, line)
                if not flags[li]:
                    continue
                entry = oracle_g.entry_by_index(li)
                s = (center[geometry._pivot(u)] - line.base[geometry._pivot(u)]) % p
                roots[u] = entry.shift_argument(s)
            if not roots:
                continue
            try:
                pencil = PencilInstance.build(expl, center, roots, q)
            except ValueError:
                continue
            tried += 1
            for P, _dirs in _pencil_decode_all(expl, pencil):
                # back to the original frame: Q(v) = P(Minv v)
                Q = P.substitute({
                    0: MultiPoly(field, 2, {(1, 0): int(Minv[0, 0]), (0, 1): int(Minv[0, 1])}),
                    1: MultiPoly(field, 2, {(1, 0): int(Minv[1, 0]), (0, 1): int(Minv[1, 1])}),
                })
                if Q.total_degree() > d:
                    continue
                agree = int(np.count_nonzero(_grid_evaluate(Q, q) == table.values))
                frac = Fraction(agree, q * q)
                if frac >= floor:
                    results.setdefault(Q.key(), (Q, frac))
                    found_here = True
        stage(f"pencil[D={D}]", "ok" if found_here else "fail",
              centers_tried=tried, results=len(results))
        if found_here:
            break

    out = sorted(results.values(), key=lambda t: (-t[1], t[0].key()))
    stage("done", "ok", results=len(out))
    return out


# ---------------------------------------------------------------------------
# ground-truth forms


def list_and_highagreement_forms(
    table: ldt.PointsTable,
    eps0: Fraction,
    eps: Fraction,
    budget: int = 10 ** 7,
    low_error_threshold: Fraction = Fraction(1, 10),
    max_iters: int = 8,
) -> dict:
    """Desk-scale ground truth: the full agreement list and its gaps.

    Brute-forces every degree-d bivariate polynomial with agreement >= eps,
    measures how many eps0-good points no list member explains, and in the
    low-error regime additionally reports the iterated-correction witness
    with its 1 - 2*delta agreement bound.
    """
    eps0 = Fraction(eps0)
    eps = Fraction(eps)
    q = table.q
    n = q * q
    cand = ldt.bivariate_candidates(table, eps, budget=budget)
    counts = ldt.point_agreement_counts(table, ldt.canonical_oracle(table))
    good = counts * eps0.denominator >= eps0.numerator * (q + 1)
    explained = np.zeros(n, dtype=bool)
    for P, _ in cand:
        explained |= _grid_evaluate(P, q) == table.values
    unexplained = int(np.count_nonzero(good & ~explained))
    record = {
        "list": cand,
        "good_count": int(np.count_nonzero(good)),
        "unexplained_count": unexplained,
        "unexplained_fraction": Fraction(unexplained, n),
        "low_error": None,
    }
    delta = ldt.delta_profile(table).global_delta
    record["delta"] = delta
    if delta <= low_error_threshold:
        from . import corrector

        got = corrector.iterate_correct(table, max_iters)
        if got is not None:
            Qpoly, iters = got
            agree = int(np.count_nonzero(_grid_evaluate(Qpoly, q) == table.values))
            frac = Fraction(agree, n)
            record["low_error"] = {
                "witness": Qpoly,
                "iterations": iters,
                "agreement": frac,
                "bound": 1 - 2 * delta,
                "meets_bound": frac >= 1 - 2 * delta,
            }
    return record
