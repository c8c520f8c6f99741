"""Affine geometry of F_q^m: canonical lines, planes, and incidence graphs.

Conventions:

* A point is a tuple of ints in range(q); its table index orders coordinates
  lexicographically with the last coordinate fastest.
* A line is stored in canonical form: the direction's first nonzero
  coordinate equals 1 (say at position i0) and the base point has coordinate
  0 at i0.  This makes the (base, direction) pair unique per point set, and
  the parameter of a point x on the line is simply x[i0].
* A plane is stored with its two spanning directions in reduced row echelon
  form and the base point zeroed at both pivot coordinates.  Again unique.

Canonical lines admit a pure-arithmetic index (no dict lookups), which the
table-scanning layers rely on; the batch helpers mirror the scalar ones.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .algebra import PrimeField

Point = tuple[int, ...]


# ---------------------------------------------------------------------------
# lines


@dataclass(frozen=True)
class Line:
    base: Point
    direction: Point

    def __repr__(self) -> str:
        return f"Line(base={self.base}, dir={self.direction})"


def _pivot(direction: Sequence[int]) -> int:
    for i, c in enumerate(direction):
        if c:
            return i
    raise ValueError("zero direction vector")


def canonical_line(q: int, point: Sequence[int], direction: Sequence[int]) -> Line:
    """Canonical representative of the line through ``point`` along ``direction``."""
    field = PrimeField(q)
    d = [c % q for c in direction]
    i0 = _pivot(d)
    scale = field.inv(d[i0])
    d = [c * scale % q for c in d]
    t = point[i0] % q
    b = [(x - t * dc) % q for x, dc in zip(point, d)]
    return Line(tuple(b), tuple(d))


def all_directions(q: int, m: int) -> list[Point]:
    """Canonical directions, ordered by pivot position then lexicographically."""
    out: list[Point] = []
    for i0 in range(m):
        free = m - 1 - i0
        for suffix in itertools.product(range(q), repeat=free):
            out.append((0,) * i0 + (1,) + suffix)
    return out


def n_lines(q: int, m: int) -> int:
    return q ** (m - 1) * (q**m - 1) // (q - 1)


def all_lines(q: int, m: int) -> Iterator[Line]:
    """All canonical lines, in direction-major order matching line_index."""
    for d in all_directions(q, m):
        i0 = _pivot(d)
        coords = [range(q)] * m
        coords[i0] = range(1)
        for b in itertools.product(*coords):
            yield Line(tuple(b), d)


def lines_through(q: int, x: Sequence[int]) -> list[Line]:
    """The (q^m - 1)/(q - 1) canonical lines through x, in direction order."""
    m = len(x)
    return [canonical_line(q, x, d) for d in all_directions(q, m)]


def points_on(q: int, line: Line) -> list[Point]:
    """Points of the line for parameter t = 0, 1, ..., q-1."""
    return [
        tuple((b + t * d) % q for b, d in zip(line.base, line.direction))
        for t in range(q)
    ]


def point_on_line(q: int, line: Line, x: Sequence[int]) -> int | None:
    """Parameter of x on the line, or None when x is not on it."""
    i0 = _pivot(line.direction)
    t = x[i0] % q
    for b, d, xi in zip(line.base, line.direction, x):
        if (b + t * d) % q != xi % q:
            return None
    return t


def point_index(q: int, x: Sequence[int]) -> int:
    idx = 0
    for c in x:
        idx = idx * q + (c % q)
    return idx


def point_from_index(q: int, m: int, idx: int) -> Point:
    out = []
    for _ in range(m):
        out.append(idx % q)
        idx //= q
    return tuple(reversed(out))


def direction_index(q: int, m: int, direction: Sequence[int]) -> int:
    i0 = _pivot(direction)
    if direction[i0] != 1:
        raise ValueError("direction is not canonical")
    offset = sum(q ** (m - 1 - k) for k in range(i0))
    rank = 0
    for c in direction[i0 + 1 :]:
        rank = rank * q + c
    return offset + rank


def line_index(q: int, m: int, line: Line) -> int:
    """Position of a canonical line in the all_lines enumeration."""
    di = direction_index(q, m, line.direction)
    i0 = _pivot(line.direction)
    rank = 0
    for j, c in enumerate(line.base):
        if j == i0:
            continue
        rank = rank * q + c
    return di * q ** (m - 1) + rank


def line_from_index(q: int, m: int, idx: int) -> Line:
    """Inverse of line_index."""
    di, rank = divmod(idx, q ** (m - 1))
    # recover the direction from its rank
    offset = 0
    for i0 in range(m):
        block = q ** (m - 1 - i0)
        if di < offset + block:
            r = di - offset
            suffix = []
            for _ in range(m - 1 - i0):
                suffix.append(r % q)
                r //= q
            d = (0,) * i0 + (1,) + tuple(reversed(suffix))
            break
        offset += block
    else:
        raise ValueError("line index out of range")
    base = []
    coords = []
    for _ in range(m - 1):
        coords.append(rank % q)
        rank //= q
    coords = list(reversed(coords))
    ci = 0
    for j in range(m):
        if j == i0:
            base.append(0)
        else:
            base.append(coords[ci])
            ci += 1
    return Line(tuple(base), d)


# ---------------------------------------------------------------------------
# planes


@dataclass(frozen=True)
class Plane:
    base: Point
    dir1: Point
    dir2: Point

    def __repr__(self) -> str:
        return f"Plane(base={self.base}, dirs=({self.dir1}, {self.dir2}))"


def _rref_two_rows(q: int, r1: Sequence[int], r2: Sequence[int]) -> tuple[Point, Point] | None:
    """RREF of a 2 x m matrix over F_q; None when the rank is below 2."""
    field = PrimeField(q)
    a = [c % q for c in r1]
    b = [c % q for c in r2]
    m = len(a)
    # first pivot
    p1 = next((i for i in range(m) if a[i] or b[i]), None)
    if p1 is None:
        return None
    if a[p1] == 0:
        a, b = b, a
    inv = field.inv(a[p1])
    a = [c * inv % q for c in a]
    b = [(bc - b[p1] * ac) % q for bc, ac in zip(b, a)]
    p2 = next((i for i in range(m) if b[i]), None)
    if p2 is None:
        return None
    inv = field.inv(b[p2])
    b = [c * inv % q for c in b]
    a = [(ac - a[p2] * bc) % q for ac, bc in zip(a, b)]
    return tuple(a), tuple(b)


def canonical_plane(
    q: int, point: Sequence[int], d1: Sequence[int], d2: Sequence[int]
) -> Plane | None:
    """Canonical plane through ``point`` spanned by two directions.

    Returns None when the directions are linearly dependent.
    """
    rr = _rref_two_rows(q, d1, d2)
    if rr is None:
        return None
    r1, r2 = rr
    p1 = _pivot(r1)
    p2 = _pivot(r2)
    b = [c % q for c in point]
    t = b[p1]
    b = [(c - t * rc) % q for c, rc in zip(b, r1)]
    t = b[p2]
    b = [(c - t * rc) % q for c, rc in zip(b, r2)]
    return Plane(tuple(b), r1, r2)


def plane_through(q: int, x: Sequence[int], line: Line) -> Plane | None:
    """The plane spanned by a line and an off-line point (None when x is on it)."""
    if point_on_line(q, line, x) is not None:
        return None
    diff = tuple((a - b) % q for a, b in zip(x, line.base))
    plane = canonical_plane(q, line.base, line.direction, diff)
    assert plane is not None  # x off the line makes the span 2-dimensional
    return plane


def n_planes(q: int, m: int) -> int:
    if m < 2:
        return 0
    gauss = (q**m - 1) * (q ** (m - 1) - 1) // ((q**2 - 1) * (q - 1))
    return q ** (m - 2) * gauss


def all_planes(q: int, m: int) -> list[Plane]:
    """All canonical planes (RREF direction pairs x bases zeroed at pivots)."""
    planes: list[Plane] = []
    for p1 in range(m):
        for p2 in range(p1 + 1, m):
            # RREF rows: r1 has pivot p1, r2 has pivot p2; free entries occupy
            # columns past the pivot that are not themselves pivot columns.
            free1 = [j for j in range(p1 + 1, m) if j != p2]
            free2 = [j for j in range(p2 + 1, m)]
            for vals1 in itertools.product(range(q), repeat=len(free1)):
                r1 = [0] * m
                r1[p1] = 1
                for j, v in zip(free1, vals1):
                    r1[j] = v
                for vals2 in itertools.product(range(q), repeat=len(free2)):
                    r2 = [0] * m
                    r2[p2] = 1
                    for j, v in zip(free2, vals2):
                        r2[j] = v
                    coords = [range(q)] * m
                    coords[p1] = range(1)
                    coords[p2] = range(1)
                    for b in itertools.product(*coords):
                        planes.append(Plane(tuple(b), tuple(r1), tuple(r2)))
    return planes


def points_on_plane(q: int, plane: Plane) -> list[Point]:
    """Points plane(u, v) in (u, v)-lexicographic order, v fastest."""
    out = []
    for u in range(q):
        for v in range(q):
            out.append(
                tuple(
                    (b + u * c1 + v * c2) % q
                    for b, c1, c2 in zip(plane.base, plane.dir1, plane.dir2)
                )
            )
    return out


def point_on_plane(q: int, plane: Plane, x: Sequence[int]) -> tuple[int, int] | None:
    """Plane coordinates (u, v) of x, or None when x is off the plane."""
    p1 = _pivot(plane.dir1)
    p2 = _pivot(plane.dir2)
    u = (x[p1] - plane.base[p1]) % q
    v = (x[p2] - plane.base[p2]) % q
    for b, c1, c2, xi in zip(plane.base, plane.dir1, plane.dir2, x):
        if (b + u * c1 + v * c2) % q != xi % q:
            return None
    return u, v


def line_in_plane(q: int, line: Line, plane: Plane) -> bool:
    if point_on_plane(q, plane, line.base) is None:
        return False
    d = line.direction
    a = d[_pivot(plane.dir1)]
    b = d[_pivot(plane.dir2)]
    return all(
        (a * c1 + b * c2) % q == dc
        for c1, c2, dc in zip(plane.dir1, plane.dir2, d)
    )


def lines_in_plane(q: int, plane: Plane) -> list[Line]:
    """The q(q+1) ambient lines lying inside the plane."""
    m = len(plane.base)
    out = []
    dirs2d = [(1, c) for c in range(q)] + [(0, 1)]
    for w1, w2 in dirs2d:
        d = tuple((w1 * c1 + w2 * c2) % q for c1, c2 in zip(plane.dir1, plane.dir2))
        # bases: 2d lines (w1,w2) have q parallel copies
        if w1 == 1:
            bases2d = [(0, t) for t in range(q)]
        else:
            bases2d = [(t, 0) for t in range(q)]
        for u, v in bases2d:
            pt = tuple(
                (b + u * c1 + v * c2) % q
                for b, c1, c2 in zip(plane.base, plane.dir1, plane.dir2)
            )
            out.append(canonical_line(q, pt, d))
    return out


def planes_containing(q: int, line: Line) -> list[Plane]:
    """All planes containing the line, deduplicated, in canonical key order."""
    m = len(line.base)
    seen = {}
    for w in all_directions(q, m):
        plane = canonical_plane(q, line.base, line.direction, w)
        if plane is not None:
            seen[(plane.base, plane.dir1, plane.dir2)] = plane
    return [seen[k] for k in sorted(seen)]


# ---------------------------------------------------------------------------
# incidence graphs and their spectra

GRAPH_KINDS = (
    "points-lines",
    "points-planes",
    "lines-planes",
    "lines-planes-through-x",
)


@dataclass
class IncidenceGraph:
    kind: str
    q: int
    m: int
    left_labels: list
    right_labels: list
    biadjacency: np.ndarray  # shape (n_left, n_right), entries 0/1
    left_degree: int
    right_degree: int


def _check_biregular(B: np.ndarray) -> tuple[int, int]:
    row = B.sum(axis=1)
    col = B.sum(axis=0)
    if not (row == row[0]).all() or not (col == col[0]).all():
        raise ValueError("incidence graph is not biregular")
    return int(row[0]), int(col[0])


def incidence_graph(q: int, m: int, kind: str, x: Sequence[int] | None = None) -> IncidenceGraph:
    """Build one of the four point/line/plane incidence graphs.

    points-lines is defined for m >= 2; the plane-based kinds need m >= 3.
    ``x`` (default the origin) only applies to lines-planes-through-x.
    """
    if kind not in GRAPH_KINDS:
        raise ValueError(f"unknown graph kind {kind!r}")
    if kind == "points-lines":
        if m < 2:
            raise ValueError("points-lines needs m >= 2")
        points = list(itertools.product(range(q), repeat=m))
        lines = list(all_lines(q, m))
        B = np.zeros((len(points), len(lines)), dtype=np.int64)
        for j, line in enumerate(lines):
            for pt in points_on(q, line):
                B[point_index(q, pt), j] = 1
        left, right = points, lines
    elif kind == "points-planes":
        if m < 3:
            raise ValueError("points-planes needs m >= 3")
        points = list(itertools.product(range(q), repeat=m))
        planes = all_planes(q, m)
        B = np.zeros((len(points), len(planes)), dtype=np.int64)
        for j, plane in enumerate(planes):
            for pt in points_on_plane(q, plane):
                B[point_index(q, pt), j] = 1
        left, right = points, planes
    elif kind == "lines-planes":
        if m < 3:
            raise ValueError("lines-planes needs m >= 3")
        lines = list(all_lines(q, m))
        planes = all_planes(q, m)
        B = np.zeros((len(lines), len(planes)), dtype=np.int64)
        for j, plane in enumerate(planes):
            for line in lines_in_plane(q, plane):
                B[line_index(q, m, line), j] = 1
        left, right = lines, planes
    else:
        if m < 3:
            raise ValueError("lines-planes-through-x needs m >= 3")
        base = tuple(x) if x is not None else (0,) * m
        lines = lines_through(q, base)
        planes = [pl for pl in all_planes(q, m) if point_on_plane(q, pl, base) is not None]
        B = np.zeros((len(lines), len(planes)), dtype=np.int64)
        for i, line in enumerate(lines):
            for j, plane in enumerate(planes):
                if line_in_plane(q, line, plane):
                    B[i, j] = 1
        left, right = lines, planes
    dl, dr = _check_biregular(B)
    return IncidenceGraph(kind, q, m, left, right, B, dl, dr)


def second_eigenvalue(graph: IncidenceGraph, method: str = "auto") -> float:
    """Second singular value of the biadjacency, normalized so the top is 1."""
    B = graph.biadjacency.astype(np.float64)
    n, r = B.shape
    if method == "auto":
        method = "dense" if min(n, r) <= 20000 else "power"
    if method == "dense":
        s = np.linalg.svd(B, compute_uv=False)
        return float(s[1] / s[0])
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    # Power iteration on B^T B with exact deflation of the top pair.  For a
    # biregular graph the top right-singular vector is the all-ones vector.
    sigma1_sq = graph.left_degree * graph.right_degree
    ones = np.full(r, 1.0 / np.sqrt(r))
    v = np.cos(np.arange(r) * 1.0)  # fixed deterministic start
    v -= ones * (ones @ v)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(10000):
        w = B.T @ (B @ v)
        w -= ones * (ones @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - prev) <= 1e-13 * max(1.0, nrm):
            prev = nrm
            break
        prev = nrm
    return float(np.sqrt(prev / sigma1_sq))


def mixing_defect(graph: IncidenceGraph, g: Sequence[float], h: Sequence[float]) -> float:
    """|E_edge[g(a)h(b)] - mean(g) mean(h)| for the uniform edge distribution."""
    B = graph.biadjacency.astype(np.float64)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.shape != (B.shape[0],) or h.shape != (B.shape[1],):
        raise ValueError("function arity does not match the graph sides")
    edges = B.sum()
    edge_mean = float(g @ B @ h) / edges
    return abs(edge_mean - float(g.mean()) * float(h.mean()))
