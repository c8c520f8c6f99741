"""The line-point test: oracles over full tables and its acceptance metrics.

A points table assigns a field element to every point of F_q^m; a lines
oracle assigns to every canonical line either a degree <= d polynomial in
the line's parameter or the absent marker.  The test draws a uniform point
x, a uniform line through x, and accepts when the oracle's polynomial
matches the table at x; an absent entry always rejects.

All probabilities at enumeration scale are exact rationals.  Monte Carlo
estimation exists alongside as a cross-check, never as a silent fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import geometry, rsline
from .algebra import MultiPoly, Poly, PrimeField
from .geometry import Line, Plane

_ENUM_LIMIT_M2 = 101
_ENUM_LIMIT_M3 = 31


def _check_enum_size(q: int, m: int) -> None:
    if m == 2 and q <= _ENUM_LIMIT_M2:
        return
    if m == 3 and q <= _ENUM_LIMIT_M3:
        return
    if m == 1:
        return
    raise ValueError(
        f"full enumeration supports m=2 with q<=101 or m=3 with q<=31, got q={q} m={m}"
    )


def _radix(q: int, m: int) -> np.ndarray:
    return q ** np.arange(m - 1, -1, -1, dtype=np.int64)


# ---------------------------------------------------------------------------
# points tables


@dataclass(frozen=True)
class PointsTable:
    """Dense table of values on F_q^m, lexicographic order, last coord fastest.

    With ``allow_missing`` the sentinel value q marks an absent entry; it
    compares unequal to every polynomial evaluation, so derived quantities
    treat missing points as disagreements.
    """

    q: int
    m: int
    d: int
    values: np.ndarray
    allow_missing: bool = False

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.int64))
        if vals.shape != (self.q**self.m,):
            raise ValueError("values must have length q^m")
        top = self.q + 1 if self.allow_missing else self.q
        if vals.size and (vals.min() < 0 or vals.max() >= top):
            raise ValueError("table values must lie in range(q)")
        if not 1 <= self.d < self.q:
            raise ValueError("need 1 <= d < q")
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)

    @property
    def field(self) -> PrimeField:
        return PrimeField(self.q)

    @property
    def n_points(self) -> int:
        return self.q**self.m

    def value_at(self, point: tuple[int, ...]) -> int:
        return int(self.values[geometry.point_index(self.q, point)])

    @classmethod
    def from_function(
        cls, q: int, m: int, d: int, fn: Callable[[tuple[int, ...]], int]
    ) -> "PointsTable":
        vals = np.empty(q**m, dtype=np.int64)
        for i in range(q**m):
            pt = geometry.point_from_index(q, m, i)
            vals[i] = fn(pt) % q
        return cls(q, m, d, vals)

    @classmethod
    def from_polynomial(cls, q: int, m: int, d: int, poly: MultiPoly) -> "PointsTable":
        if poly.nvars != m:
            raise ValueError("polynomial arity must match m")
        radix = _radix(q, m)
        idx = np.arange(q**m, dtype=np.int64)
        coords = [(idx // radix[j]) % q for j in range(m)]
        vals = np.zeros(q**m, dtype=np.int64)
        for exps, c in poly.terms.items():
            term = np.full(q**m, c, dtype=np.int64)
            for j, e in enumerate(exps):
                if e:
                    term = term * pow_mod_array(coords[j], e, q) % q
            vals = (vals + term) % q
        return cls(q, m, d, vals)

    def restrict_line(self, line: Line) -> np.ndarray:
        """Values along the line, indexed by the canonical parameter."""
        pts = geometry.points_on(self.q, line)
        return np.array(
            [self.values[geometry.point_index(self.q, p)] for p in pts],
            dtype=np.int64,
        )

    def save(self, path: str | Path) -> None:
        save_table(self, path)


def pow_mod_array(base: np.ndarray, e: int, q: int) -> np.ndarray:
    out = np.ones_like(base)
    b = base % q
    while e:
        if e & 1:
            out = out * b % q
        b = b * b % q
        e >>= 1
    return out


def affine_pullback(
    table: PointsTable, matrix: list[list[int]], shift: list[int]
) -> PointsTable:
    """Table of x -> f(Mx + b) for an invertible matrix M (columns as listed)."""
    q, m = table.q, table.m
    M = np.array(matrix, dtype=np.int64) % q
    b = np.array(shift, dtype=np.int64) % q
    if M.shape != (m, m) or b.shape != (m,):
        raise ValueError("matrix must be m x m and shift length m")
    from .algebra import rref_mod_p

    _, piv = rref_mod_p(M.copy(), q)
    if len(piv) != m:
        raise ValueError("matrix is singular")
    radix = _radix(q, m)
    idx = np.arange(q**m, dtype=np.int64)
    coords = np.stack([(idx // radix[j]) % q for j in range(m)], axis=1)
    new_coords = (coords @ M.T + b) % q
    return PointsTable(q, m, table.d, table.values[new_coords @ radix],
                       allow_missing=table.allow_missing)


# ---------------------------------------------------------------------------
# lines oracles


@dataclass(frozen=True)
class LinesOracle:
    """Total map from canonical lines to degree <= d fits or the absent marker.

    coeffs[i] holds the coefficients (constant first) for the line with
    canonical index i; bot[i] marks absent entries.  agreements[i] caches the
    match count against the table the oracle was built from, when known.
    """

    q: int
    m: int
    d: int
    coeffs: np.ndarray
    bot: np.ndarray
    framing: str = "supplied"
    agreements: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        n = geometry.n_lines(self.q, self.m)
        coeffs = np.ascontiguousarray(np.asarray(self.coeffs, dtype=np.int64))
        bot = np.ascontiguousarray(np.asarray(self.bot, dtype=bool))
        if coeffs.shape != (n, self.d + 1):
            raise ValueError("coeffs must have shape (n_lines, d+1)")
        if bot.shape != (n,):
            raise ValueError("bot must have shape (n_lines,)")
        live = ~bot
        if coeffs[live].size and (
            coeffs[live].min() < 0 or coeffs[live].max() >= self.q
        ):
            raise ValueError("coefficients must lie in range(q)")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "bot", bot)
        coeffs.setflags(write=False)
        bot.setflags(write=False)

    @property
    def n_lines(self) -> int:
        return self.bot.shape[0]

    def entry(self, line: Line) -> Poly | None:
        i = geometry.line_index(self.q, self.m, line)
        if self.bot[i]:
            return None
        return Poly(PrimeField(self.q), [int(c) for c in self.coeffs[i]])

    __getitem__ = entry

    def entry_by_index(self, i: int) -> Poly | None:
        if self.bot[i]:
            return None
        return Poly(PrimeField(self.q), [int(c) for c in self.coeffs[i]])

    def items(self) -> Iterator[tuple[Line, Poly | None]]:
        for i, line in enumerate(geometry.all_lines(self.q, self.m)):
            yield line, self.entry_by_index(i)

    @classmethod
    def from_entries(
        cls, q: int, m: int, d: int, entries: dict[Line, Poly | None], framing: str = "supplied"
    ) -> "LinesOracle":
        n = geometry.n_lines(q, m)
        coeffs = np.zeros((n, d + 1), dtype=np.int64)
        bot = np.ones(n, dtype=bool)
        for line, p in entries.items():
            i = geometry.line_index(q, m, line)
            bot[i] = p is None
            if p is not None:
                if p.degree > d:
                    raise ValueError("entry degree exceeds d")
                for j, c in enumerate(p.coeffs):
                    coeffs[i, j] = c
        return cls(q, m, d, coeffs, bot, framing)

    def save(self, path: str | Path) -> None:
        save_oracle(self, path)


# ---------------------------------------------------------------------------
# vectorized traversal by direction


def bases_for_pivot(q: int, m: int, i0: int) -> np.ndarray:
    """Canonical line bases for a direction with pivot i0, in base-rank order."""
    n = q ** (m - 1)
    out = np.zeros((n, m), dtype=np.int64)
    r = np.arange(n, dtype=np.int64)
    js = [j for j in range(m) if j != i0]
    for pos, j in enumerate(js):
        power = q ** (len(js) - 1 - pos)
        out[:, j] = (r // power) % q
    return out


def direction_sweep(
    table: PointsTable,
) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield (dir_index, line values (L, q), point indices (L, q)) per direction.

    Line rows are ordered by base rank, so row r of direction D is the line
    with canonical index D * q^(m-1) + r.
    """
    q, m = table.q, table.m
    radix = _radix(q, m)
    for di, dvec in enumerate(geometry.all_directions(q, m)):
        i0 = geometry._pivot(dvec)
        bases = bases_for_pivot(q, m, i0)
        dv = np.array(dvec, dtype=np.int64)
        L = bases.shape[0]
        vals = np.empty((L, q), dtype=np.int64)
        idxs = np.empty((L, q), dtype=np.int64)
        for t in range(q):
            coords = (bases + t * dv) % q
            flat = coords @ radix
            idxs[:, t] = flat
            vals[:, t] = table.values[flat]
        yield di, vals, idxs


def canonical_oracle(table: PointsTable) -> LinesOracle:
    """Best-fit entry for every line; deterministic by the lex tie rule."""
    q, m, d = table.q, table.m, table.d
    _check_enum_size(q, m)
    n = geometry.n_lines(q, m)
    per_dir = q ** (m - 1)
    coeffs = np.zeros((n, d + 1), dtype=np.int64)
    agreements = np.zeros(n, dtype=np.int64)
    for di, vals, _ in direction_sweep(table):
        c, a = rsline.batch_best_fit(vals, q, d)
        coeffs[di * per_dir : (di + 1) * per_dir] = c
        agreements[di * per_dir : (di + 1) * per_dir] = a
    bot = np.zeros(n, dtype=bool)
    return LinesOracle(q, m, d, coeffs, bot, "canonical-best-fit", agreements)


def _match_counts(
    table: PointsTable, oracle: LinesOracle
) -> tuple[np.ndarray, np.ndarray]:
    """Per-line match counts and per-point counts of agreeing incident lines."""
    q, m = table.q, table.m
    _, vf = rsline._vander(q, oracle.d)
    per_dir = q ** (m - 1)
    line_matches = np.zeros(oracle.n_lines, dtype=np.int64)
    point_hits = np.zeros(table.n_points, dtype=np.int64)
    for di, vals, idxs in direction_sweep(table):
        sl = slice(di * per_dir, (di + 1) * per_dir)
        ev = oracle.coeffs[sl].astype(np.float32) @ vf
        ev -= np.floor(ev / q) * q
        match = ev.astype(np.int64) == vals
        match[oracle.bot[sl]] = False
        line_matches[sl] = match.sum(axis=1)
        np.add.at(point_hits, idxs.ravel(), match.ravel().astype(np.int64))
    return line_matches, point_hits


def lines_through_count(q: int, m: int) -> int:
    return (q**m - 1) // (q - 1)


def accept_prob_exact(table: PointsTable, oracle: LinesOracle) -> Fraction:
    """Exact acceptance probability of the line-point test."""
    if (oracle.q, oracle.m) != (table.q, table.m):
        raise ValueError("table and oracle shapes disagree")
    _check_enum_size(table.q, table.m)
    line_matches, _ = _match_counts(table, oracle)
    total = int(line_matches.sum())
    denom = table.n_points * lines_through_count(table.q, table.m)
    return Fraction(total, denom)


def accept_prob_sampled(
    table: PointsTable, oracle: LinesOracle, n: int, seed: int
) -> tuple[float, float]:
    """Monte Carlo estimate with a 95% normal-approximation half-width."""
    if n < 1:
        raise ValueError("need at least one trial")
    q, m = table.q, table.m
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x1D7]))
    dirs = list(geometry.all_directions(q, m))
    hits = 0
    pts = rng.integers(0, q**m, size=n)
    dchoice = rng.integers(0, len(dirs), size=n)
    for i in range(n):
        x = geometry.point_from_index(q, m, int(pts[i]))
        dvec = dirs[int(dchoice[i])]
        line = geometry.canonical_line(q, x, dvec)
        t = x[geometry._pivot(dvec)]
        p = oracle.entry(line)
        if p is not None and p.evaluate(t) == table.value_at(x):
            hits += 1
    est = hits / n
    half = 1.96 * (est * (1.0 - est) / n) ** 0.5
    return est, half


# ---------------------------------------------------------------------------
# the delta hierarchy


@dataclass
class DeltaProfile:
    """Disagreement fractions of the canonical oracle at line, plane, and
    global level.  Stored as mismatch counts; accessors return exact
    rationals.  The plane map materializes lazily (it is the expensive one)."""

    q: int
    m: int
    d: int
    line_mismatch: np.ndarray  # per canonical line index, 0..q

    _plane_cache: dict[Plane, Fraction] | None = field(default=None, repr=False)

    def line_delta(self, line: Line) -> Fraction:
        i = geometry.line_index(self.q, self.m, line)
        return Fraction(int(self.line_mismatch[i]), self.q)

    @property
    def per_line(self) -> dict[Line, Fraction]:
        return {
            line: Fraction(int(self.line_mismatch[i]), self.q)
            for i, line in enumerate(geometry.all_lines(self.q, self.m))
        }

    def plane_delta(self, plane: Plane) -> Fraction:
        q, m = self.q, self.m
        total = 0
        count = 0
        for line in geometry.lines_in_plane(q, plane):
            i = geometry.line_index(q, m, line)
            total += int(self.line_mismatch[i])
            count += 1
        return Fraction(total, count * q)

    @property
    def per_plane(self) -> dict[Plane, Fraction]:
        if self._plane_cache is None:
            self._plane_cache = {
                pl: self.plane_delta(pl) for pl in geometry.all_planes(self.q, self.m)
            }
        return self._plane_cache

    @property
    def global_delta(self) -> Fraction:
        n = self.line_mismatch.shape[0]
        return Fraction(int(self.line_mismatch.sum()), n * self.q)


def delta_profile(table: PointsTable) -> DeltaProfile:
    """Exact disagreement profile of the canonical best-fit oracle."""
    _check_enum_size(table.q, table.m)
    oracle = canonical_oracle(table)
    mism = table.q - oracle.agreements
    return DeltaProfile(table.q, table.m, table.d, mism)


# ---------------------------------------------------------------------------
# pointwise goodness and the well-behaved transform


def point_agreement_counts(table: PointsTable, oracle: LinesOracle) -> np.ndarray:
    """For each point, how many incident lines' entries match the table there."""
    if (oracle.q, oracle.m) != (table.q, table.m):
        raise ValueError("table and oracle shapes disagree")
    _, point_hits = _match_counts(table, oracle)
    return point_hits


def epsilon_point(
    table: PointsTable, oracle: LinesOracle, x: tuple[int, ...]
) -> Fraction:
    """Fraction of lines through x whose entry matches the table at x."""
    q, m = table.q, table.m
    fx = table.value_at(x)
    hits = 0
    lines = geometry.lines_through(q, x)
    for line in lines:
        p = oracle.entry(line)
        if p is None:
            continue
        t = geometry.point_on_line(q, line, x)
        if p.evaluate(t) == fx:
            hits += 1
    return Fraction(hits, len(lines))


def epsilon_good(
    table: PointsTable, oracle: LinesOracle, eps: Fraction | float | str
) -> set[tuple[int, ...]]:
    """Points where at least an eps fraction of incident lines agree."""
    e = Fraction(eps)
    hits = point_agreement_counts(table, oracle)
    nthru = lines_through_count(table.q, table.m)
    good = np.nonzero(hits * e.denominator >= e.numerator * nthru)[0]
    return {geometry.point_from_index(table.q, table.m, int(i)) for i in good}


def make_well_behaved(
    table: PointsTable, oracle: LinesOracle, eps: Fraction | float | str
) -> LinesOracle:
    """Replace entries whose agreement with the table falls below eps by the
    absent marker.  Idempotent; never changes a surviving entry."""
    e = Fraction(eps)
    q = table.q
    line_matches, _ = _match_counts(table, oracle)
    keep = line_matches * e.denominator >= e.numerator * q
    bot = oracle.bot | ~keep
    return LinesOracle(
        oracle.q,
        oracle.m,
        oracle.d,
        oracle.coeffs,
        bot,
        f"well-behaved({e})",
        None,
    )


# ---------------------------------------------------------------------------
# plane diagnostics


@dataclass
class PlaneDiagnostics:
    plane: Plane
    eps: Fraction
    delta: Fraction
    locally_good_count: int
    candidates: list[tuple[MultiPoly, Fraction]]
    explained: np.ndarray  # bool per point of the plane, (u,v) lex order

    @property
    def explained_count(self) -> int:
        return int(self.explained.sum())


def restrict_to_plane(table: PointsTable, plane: Plane) -> PointsTable:
    """The table pulled back to plane coordinates (u, v)."""
    q = table.q
    vals = np.empty(q * q, dtype=np.int64)
    for i, pt in enumerate(geometry.points_on_plane(q, plane)):
        vals[i] = table.values[geometry.point_index(q, pt)]
    return PointsTable(q, 2, table.d, vals, allow_missing=table.allow_missing)


def bivariate_candidates(
    table2: PointsTable, eps: Fraction, budget: int = 10**7
) -> list[tuple[MultiPoly, Fraction]]:
    """All bivariate total-degree <= d polynomials with agreement >= eps,
    by exhaustive enumeration over coefficient vectors."""
    q, d = table2.q, table2.d
    monos = [(a, b) for a in range(d + 1) for b in range(d + 1 - a)]
    k = len(monos)
    total = q**k
    if total > budget:
        raise ValueError(f"enumeration of {total} bivariate candidates exceeds budget {budget}")
    idx = np.arange(q * q, dtype=np.int64)
    us, vs = idx // q, idx % q
    mv = np.empty((k, q * q), dtype=np.int64)
    for j, (a, b) in enumerate(monos):
        mv[j] = pow_mod_array(us, a, q) * pow_mod_array(vs, b, q) % q
    mvf = mv.astype(np.float32)
    vals16 = table2.values.astype(np.int16)
    min_count = -(-(eps.numerator * q * q) // eps.denominator)
    found: list[tuple[tuple[int, ...], int]] = []
    chunk = 1 << 14
    for c0 in range(0, total, chunk):
        ids = np.arange(c0, min(total, c0 + chunk), dtype=np.int64)
        coefs = np.empty((ids.size, k), dtype=np.int64)
        rest = ids.copy()
        for j in range(k - 1, -1, -1):
            coefs[:, j] = rest % q
            rest //= q
        ev = coefs.astype(np.float32) @ mvf
        ev -= np.floor(ev / q) * q
        agree = (ev.astype(np.int16) == vals16[None, :]).sum(axis=1)
        for h in np.nonzero(agree >= max(min_count, 0))[0]:
            found.append((tuple(int(c) for c in coefs[h]), int(agree[h])))
    found.sort(key=lambda t: (-t[1], t[0]))
    out = []
    for coefv, cnt in found:
        terms = {
            (a, b): c for (a, b), c in zip(monos, coefv) if c
        }
        out.append((MultiPoly(PrimeField(q), 2, terms), Fraction(cnt, q * q)))
    return out


def plane_diagnostics(
    table: PointsTable,
    plane: Plane,
    eps: Fraction | float | str,
    budget: int = 10**7,
) -> PlaneDiagnostics:
    """Restriction diagnostics: plane-level disagreement, locally good points,
    and the plane's brute-force list with per-point explained flags."""
    if table.m < 3:
        raise ValueError("plane diagnostics need m >= 3")
    e = Fraction(eps)
    sub = restrict_to_plane(table, plane)
    oracle2 = canonical_oracle(sub)
    mism = sub.q - oracle2.agreements
    delta = Fraction(int(mism.sum()), mism.size * sub.q)
    hits = point_agreement_counts(sub, oracle2)
    nthru = lines_through_count(sub.q, 2)
    locally_good = int((hits * e.denominator >= e.numerator * nthru).sum())
    cands = bivariate_candidates(sub, e, budget)
    explained = np.zeros(sub.n_points, dtype=bool)
    if cands:
        q = sub.q
        idx = np.arange(q * q, dtype=np.int64)
        us, vs = idx // q, idx % q
        for poly, _ in cands:
            pv = np.zeros(q * q, dtype=np.int64)
            for (a, b), c in poly.terms.items():
                pv = (pv + c * pow_mod_array(us, a, q) * pow_mod_array(vs, b, q)) % q
            explained |= pv == sub.values
    return PlaneDiagnostics(plane, e, delta, locally_good, cands, explained)


# ---------------------------------------------------------------------------
# file formats


def save_table(table: PointsTable, path: str | Path) -> None:
    q, m = table.q, table.m
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{q} {m} {table.d}\n")
        vals = table.values
        for r0 in range(0, vals.size, q):
            fh.write(" ".join(str(int(v)) for v in vals[r0 : r0 + q]))
            fh.write("\n")


def load_table(path: str | Path) -> PointsTable:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("table header must be 'q m d'")
        q, m, d = (int(t) for t in header)
        vals = np.array(fh.read().split(), dtype=np.int64)
    # the sentinel q is its own marker; files never carry a separate flag
    missing = bool(vals.size) and int(vals.max()) >= q
    return PointsTable(q, m, d, vals, allow_missing=missing)


def _coords_str(t: tuple[int, ...]) -> str:
    return ",".join(str(c) for c in t)


def save_oracle(oracle: LinesOracle, path: str | Path) -> None:
    q, m = oracle.q, oracle.m
    with open(path, "w", encoding="ascii") as fh:
        for i, line in enumerate(geometry.all_lines(q, m)):
            base = _coords_str(line.base)
            dv = _coords_str(line.direction)
            if oracle.bot[i]:
                fh.write(f"{base};{dv};BOT\n")
            else:
                cs = ",".join(str(int(c)) for c in oracle.coeffs[i])
                fh.write(f"{base};{dv};{cs}\n")


def load_oracle(path: str | Path, q: int, m: int, d: int) -> LinesOracle:
    n = geometry.n_lines(q, m)
    coeffs = np.zeros((n, d + 1), dtype=np.int64)
    bot = np.ones(n, dtype=bool)
    seen = np.zeros(n, dtype=bool)
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(";")
            if len(parts) != 3:
                raise ValueError(f"bad oracle line: {raw!r}")
            base = tuple(int(t) % q for t in parts[0].split(","))
            dv = tuple(int(t) % q for t in parts[1].split(","))
            line = Line(base, dv)
            i = geometry.line_index(q, m, line)
            if seen[i]:
                raise ValueError(f"duplicate oracle entry for line index {i}")
            seen[i] = True
            if parts[2] == "BOT":
                continue
            cs = [int(t) % q for t in parts[2].split(",")]
            if len(cs) != d + 1:
                raise ValueError("coefficient count must be d+1")
            coeffs[i] = cs
            bot[i] = False
    if not seen.all():
        raise ValueError("oracle file must cover every canonical line")
    return LinesOracle(q, m, d, coeffs, bot, "supplied")
