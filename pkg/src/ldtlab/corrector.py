"""Self-correction of noisy evaluation tables.

The low-error route replaces each value by the plurality vote of the line
polynomials through the point and iterates until the line-point test passes
exactly, at which point the table is interpolated and verified.  The
high-error route anchors list decoding at an advice point: every line through
the advice is list-decoded, and positions whose line has a unique list entry
through the advice value inherit that entry's value.  ``decode_multivariate``
chains the two, picking advice from the points whose incident lines agree
with the table most often.

Absent values use the sentinel q (see PointsTable.allow_missing); the
sentinel never equals a polynomial evaluation, so every agreement and
distance computed here counts an absent position as a disagreement.

Plane-based correction variants are out of scope; only lines are consulted.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import isqrt
from typing import Any

import numpy as np

from . import geometry, ldt, rsline
from .algebra import MultiPoly, Poly, PrimeField, rref_mod_p


# ---------------------------------------------------------------------------
# distance helpers


def pointwise_delta(a: np.ndarray, b: np.ndarray, q: int) -> Fraction:
    """Fraction of positions where the two tables disagree.

    The sentinel q disagrees with everything, itself included.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError("tables must have equal length")
    bad = (a != b) | (a >= q) | (b >= q)
    return Fraction(int(bad.sum()), a.size)


def delta_f(table: ldt.PointsTable, oracle: ldt.LinesOracle | None = None) -> Fraction:
    """Exact rejection probability of the line-point test on the table.

    Equals the mean over lines of the per-line disagreement with the oracle
    entry.  Builds the canonical oracle when none is given.
    """
    if oracle is None:
        oracle = ldt.canonical_oracle(table)
    L = oracle.n_lines
    if oracle.agreements is not None and not oracle.bot.any():
        return Fraction(L * table.q - int(oracle.agreements.sum()), L * table.q)
    return 1 - ldt.accept_prob_exact(table, oracle)


def johnson_floor_count(q: int, d: int) -> int:
    """Smallest agreement count c with c*c >= 4*d*q (the list-size radius)."""
    c = isqrt(4 * d * q)
    if c * c < 4 * d * q:
        c += 1
    return c


# ---------------------------------------------------------------------------
# corrected tables


@dataclass(frozen=True)
class CorrectedTable:
    """A table produced by a correction pass, with its provenance.

    values holds entries in range(q) plus the sentinel q for positions the
    pass could not disambiguate.  provenance records mode ("plurality" or
    "advice"), the advice point and value when applicable, and the relevant
    rational: the change fraction for plurality, the list threshold for
    advice.
    """

    q: int
    m: int
    d: int
    values: np.ndarray
    provenance: dict[str, Any]

    def __post_init__(self) -> None:
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=np.int64))
        if vals.shape != (self.q**self.m,):
            raise ValueError("values must have length q^m")
        if vals.size and (vals.min() < 0 or vals.max() > self.q):
            raise ValueError("entries must lie in range(q) or be the sentinel q")
        mode = self.provenance.get("mode")
        if mode not in ("plurality", "advice"):
            raise ValueError("provenance mode must be plurality or advice")
        if mode == "advice":
            pt = self.provenance.get("advice_point")
            sv = self.provenance.get("advice_value")
            if pt is None or sv is None:
                raise ValueError("advice provenance needs point and value")
            if int(vals[geometry.point_index(self.q, tuple(pt))]) != int(sv):
                raise ValueError("advice table must take the advice value at the advice point")
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)

    @property
    def n_points(self) -> int:
        return self.q**self.m

    @property
    def bot_mask(self) -> np.ndarray:
        return self.values == self.q

    @property
    def bot_fraction(self) -> Fraction:
        return Fraction(int((self.values == self.q).sum()), self.n_points)

    def as_table(self) -> ldt.PointsTable:
        return ldt.PointsTable(self.q, self.m, self.d, self.values, allow_missing=True)


def _as_points_table(f: ldt.PointsTable | CorrectedTable) -> ldt.PointsTable:
    return f.as_table() if isinstance(f, CorrectedTable) else f


# ---------------------------------------------------------------------------
# plurality correction


def plurality_correct(
    f: ldt.PointsTable | CorrectedTable, oracle: ldt.LinesOracle | None = None
) -> CorrectedTable:
    """Pointwise most-popular value of the line entries through each point.

    Uses the canonical best-fit oracle unless one is supplied (it must belong
    to the same table).  Ties break toward the smallest field element.  The
    output never contains the sentinel.
    """
    table = _as_points_table(f)
    q, m = table.q, table.m
    n = table.n_points
    if oracle is None:
        oracle = ldt.canonical_oracle(table)
    if (oracle.q, oracle.m) != (q, m):
        raise ValueError("table and oracle shapes disagree")
    per_dir = q ** (m - 1)
    _, vf = rsline._vander(q, oracle.d)
    votes = np.zeros(n * q, dtype=np.int64)
    # fused (point, value) codes accumulated in batches; bincount beats
    # scattered adds by a wide margin at m = 3
    pending: list[np.ndarray] = []
    pend = 0
    for di, _, idxs in ldt.direction_sweep(table):
        sl = slice(di * per_dir, (di + 1) * per_dir)
        ev = oracle.coeffs[sl].astype(np.float32) @ vf
        ev -= np.floor(ev / q) * q
        codes = idxs * np.int64(q) + ev.astype(np.int64)
        keep = ~oracle.bot[sl]
        if not keep.all():
            codes = codes[keep]
        pending.append(codes.ravel())
        pend += codes.size
        if pend >= 1 << 21:
            votes += np.bincount(np.concatenate(pending), minlength=n * q)
            pending, pend = [], 0
    if pending:
        votes += np.bincount(np.concatenate(pending), minlength=n * q)
    out = np.argmax(votes.reshape(n, q), axis=1).astype(np.int64)
    changed = Fraction(int((out != table.values).sum()), n)
    prov = {
        "mode": "plurality",
        "advice_point": None,
        "advice_value": None,
        "delta": changed,
    }
    return CorrectedTable(q, m, table.d, out, prov)


# ---------------------------------------------------------------------------
# iteration to an exact polynomial


def _interpolate_box(table: ldt.PointsTable) -> MultiPoly | None:
    """Interpolate from the grid {0..d}^m, one variable at a time.

    Returns the polynomial with per-variable degree <= d through the grid
    values, or None when the table carries sentinels.  The caller still has
    to check the total degree and verify against the full table.
    """
    q, m, d = table.q, table.m, table.d
    if bool((table.values >= q).any()):
        return None
    k = d + 1
    nodes = np.arange(k, dtype=np.int64)
    W = nodes[:, None] ** np.arange(k, dtype=np.int64)[None, :] % q
    aug = np.hstack([W, np.eye(k, dtype=np.int64)])
    R, piv = rref_mod_p(aug, q)
    if piv != list(range(k)):
        return None
    Winv = R[:k, k:]
    radix = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
    grids = np.meshgrid(*([nodes] * m), indexing="ij")
    flat = sum(g * r for g, r in zip(grids, radix))
    C = table.values[flat]
    for ax in range(m):
        C = np.moveaxis(np.tensordot(Winv, C, axes=([1], [ax])) % q, 0, ax)
    terms = {}
    for exps in np.ndindex(*([k] * m)):
        c = int(C[exps])
        if c:
            terms[tuple(int(e) for e in exps)] = c
    return MultiPoly(PrimeField(q), m, terms)


def iterate_correct(
    f: ldt.PointsTable | CorrectedTable,
    max_iters: int = 16,
    delta0: Fraction | float | str = Fraction(1, 4),
    first_oracle: ldt.LinesOracle | None = None,
) -> tuple[MultiPoly, int] | None:
    """Apply plurality correction until the line-point test passes exactly.

    On success returns (Q, iterations), where Q is interpolated from the
    final table and verified against it everywhere.  Returns None when
    max_iters passes do not reach rejection probability zero, or when the
    iteration stalls at a fixed point that still fails.

    When the input's rejection probability is at most delta0/2, the distance
    from the input to Q is checked against four times that probability;
    a violation raises ArithmeticError, since the correction then moved the
    table further than the plurality analysis allows.
    """
    start = _as_points_table(f)
    q, m, d = start.q, start.m, start.d
    d0 = Fraction(delta0)
    cur = start
    oracle = first_oracle
    delta_init: Fraction | None = None
    for iters in range(max_iters + 1):
        if oracle is None:
            oracle = ldt.canonical_oracle(cur)
        dcur = delta_f(cur, oracle)
        if delta_init is None:
            delta_init = dcur
        if dcur == 0:
            poly = _interpolate_box(cur)
            if poly is None or poly.total_degree() > d:
                return None
            evals = ldt.PointsTable.from_polynomial(q, m, d, poly).values
            if not np.array_equal(evals, cur.values):
                return None
            if 2 * delta_init <= d0:
                drift = pointwise_delta(start.values, evals, q)
                if drift > 4 * delta_init:
                    raise ArithmeticError(
                        f"correction drifted to {drift} from rejection "
                        f"probability {delta_init}; the 4x bound failed"
                    )
            return poly, iters
        if iters == max_iters:
            break
        nxt = plurality_correct(cur, oracle)
        if np.array_equal(nxt.values, cur.values):
            return None
        cur = nxt.as_table()
        oracle = None
    return None


# ---------------------------------------------------------------------------
# advice correction


def advice_correct(
    f: ldt.PointsTable,
    x: tuple[int, ...],
    sigma: int,
    delta: Fraction | float | str,
    budget: int = 10**7,
) -> CorrectedTable:
    """List-decode every line through x, keeping values the advice pins down.

    The output takes the value sigma at x.  Any other point y lies on exactly
    one line through x; if the list of polynomials agreeing with the table on
    at least a delta fraction of that line has exactly one entry P with
    P(t_x) = sigma, the output at y is P(t_y), and the sentinel otherwise.
    """
    table = _as_points_table(f)
    q, m, d = table.q, table.m, table.d
    x = tuple(int(c) for c in x)
    if len(x) != m or any(not 0 <= c < q for c in x):
        raise ValueError("advice point must lie in the table's domain")
    sigma = int(sigma)
    if not 0 <= sigma < q:
        raise ValueError("advice value must lie in range(q)")
    thr = Fraction(delta)
    if not 0 < thr <= 1:
        raise ValueError("list threshold must lie in (0, 1]")
    min_count = -(-thr.numerator * q // thr.denominator)
    lines = geometry.lines_through(q, x)
    base = np.array([ln.base for ln in lines], dtype=np.int64)
    dirv = np.array([ln.direction for ln in lines], dtype=np.int64)
    T = np.arange(q, dtype=np.int64)
    coords = (base[:, None, :] + T[None, :, None] * dirv[:, None, :]) % q
    radix = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
    idxs = coords @ radix
    vals = table.values[idxs]
    tx = np.array([x[geometry._pivot(ln.direction)] for ln in lines], dtype=np.int64)

    if min_count >= d + 1:
        rows = rsline.batch_list_decode(vals, q, d, min_count)
        entries_per_line = [[ck for ck, _ in row] for row in rows]
    else:
        # threshold under the pigeonhole floor: exhaust the candidate space
        if q ** (d + 1) > budget:
            raise ValueError("per-line list-decode budget exceeded at this threshold")
        entries_per_line = []
        for li in range(len(lines)):
            dl = rsline.list_decode([int(v) for v in vals[li]], q, d, thr, budget)
            entries_per_line.append([p.coeffs for p in dl.polynomials()])

    out = np.full(table.n_points, q, dtype=np.int64)
    powers = T[None, :] ** np.arange(d + 1, dtype=np.int64)[:, None] % q
    for li, entries in enumerate(entries_per_line):
        t0 = int(tx[li])
        matching = []
        for ck in entries:
            v = 0
            for c in reversed(ck):
                v = (v * t0 + c) % q
            if v == sigma:
                matching.append(ck)
                if len(matching) > 1:
                    break
        if len(matching) != 1:
            continue
        ck = np.zeros(d + 1, dtype=np.int64)
        ck[: len(matching[0])] = matching[0]
        out[idxs[li]] = ck @ powers % q
    out[geometry.point_index(q, x)] = sigma
    prov = {
        "mode": "advice",
        "advice_point": x,
        "advice_value": sigma,
        "delta": thr,
    }
    return CorrectedTable(q, m, d, out, prov)


# ---------------------------------------------------------------------------
# the m-variate high-error decoder


def decode_multivariate(
    f: ldt.PointsTable,
    eps: Fraction | float | str,
    params: dict[str, Any] | None = None,
    trace: list[dict] | None = None,
) -> list[tuple[MultiPoly, Fraction]]:
    """All degree <= d polynomials the advice pipeline can pin down.

    Requires the measured acceptance probability of the canonical test to be
    at least 5*eps unless best_effort is set.  Advice candidates are the
    points whose incident lines match the table at the point at least a mu
    fraction of the time, not counting lines where the point sits under two
    or more list entries; they are tried in order of that count (ties toward
    the lexicographically smallest point) up to max_advice.  Each advice
    yields a corrected table; tables whose sentinel share or rejection
    probability exceed profile_threshold are dropped, the rest are iterated
    to an exact polynomial.  Agreements in the result are exact fractions
    against the input table.

    params keys (all optional): max_advice (32), delta_list (list threshold;
    default max(eps**nonunique_exponent / 2, johnson floor)),
    nonunique_exponent (8), mu (eps), gamma (eps^2/12, recorded only),
    profile_threshold (1/10), delta0 (1/4), max_iters (8), best_effort
    (False), budget (10**7).  The asymptotic analysis ties the list radius
    to gamma, far below the pigeonhole floor at this scale, so the radius is
    its own knob here and gamma is only carried through to the trace.
    """
    pr = dict(params or {})
    eps = Fraction(eps)
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    q, m, d = f.q, f.m, f.d
    n = f.n_points
    field = PrimeField(q)

    def stage(name: str, status: str, **metrics: Any) -> None:
        if trace is not None:
            trace.append({"name": name, "status": status, "metrics": metrics})

    mu = Fraction(pr["mu"]) if pr.get("mu") is not None else eps
    gamma = Fraction(pr["gamma"]) if pr.get("gamma") is not None else eps * eps / 12
    exponent = int(pr.get("nonunique_exponent", 8))
    floor = Fraction(johnson_floor_count(q, d), q)
    if pr.get("delta_list") is not None:
        dlist = Fraction(pr["delta_list"])
    else:
        dlist = max(eps**exponent / 2, floor)
    prof_thr = Fraction(pr.get("profile_threshold", Fraction(1, 10)))
    delta0 = Fraction(pr.get("delta0", Fraction(1, 4)))
    max_iters = int(pr.get("max_iters", 8))
    max_advice = int(pr.get("max_advice", 32))
    budget = int(pr.get("budget", 10**7))
    best_effort = bool(pr.get("best_effort", False))

    oracle = ldt.canonical_oracle(f)
    accept = 1 - delta_f(f, oracle)
    if accept < 5 * eps and not best_effort:
        raise ValueError(
            f"acceptance probability {accept} is below 5*eps = {5 * eps}; "
            "set best_effort to decode anyway"
        )
    stage(
        "acceptance",
        "ok" if accept >= 5 * eps else "below-threshold",
        accept_num=accept.numerator,
        accept_den=accept.denominator,
        gamma_num=gamma.numerator,
        gamma_den=gamma.denominator,
        list_threshold_num=dlist.numerator,
        list_threshold_den=dlist.denominator,
    )
    wb = ldt.make_well_behaved(f, oracle, eps)

    min_count = -(-dlist.numerator * q // dlist.denominator)
    if min_count < d + 1:
        raise ValueError("list threshold too low for the per-line sweep")

    # advice candidates: count, per point, incident lines whose surviving
    # entry matches the table there and does not collide with a second list
    # entry at that position
    per_dir = q ** (m - 1)
    _, vf = rsline._vander(q, d)
    counts = np.zeros(n, dtype=np.int64)
    pending: list[np.ndarray] = []
    pend = 0
    for di, vals, idxs in ldt.direction_sweep(f):
        sl = slice(di * per_dir, (di + 1) * per_dir)
        ev = wb.coeffs[sl].astype(np.float32) @ vf
        ev -= np.floor(ev / q) * q
        match = ev.astype(np.int64) == vals
        match[wb.bot[sl]] = False
        rows = rsline.batch_list_decode(vals, q, d, min_count)
        for li, row in enumerate(rows):
            if len(row) < 2:
                continue
            entries = [Poly(field, ck) for ck, _ in row]
            for t in rsline.non_unique_points([int(v) for v in vals[li]], entries, q):
                match[li, t] = False
        pending.append(idxs[match])
        pend += pending[-1].size
        if pend >= 1 << 21:
            counts += np.bincount(np.concatenate(pending), minlength=n)
            pending, pend = [], 0
    if pending:
        counts += np.bincount(np.concatenate(pending), minlength=n)

    nthr = ldt.lines_through_count(q, m)
    good = np.nonzero(counts * mu.denominator >= mu.numerator * nthr)[0]
    ranked = sorted((int(i) for i in good), key=lambda i: (-int(counts[i]), i))
    stage("advice-set", "ok", size=len(ranked), tried=min(len(ranked), max_advice))

    found: list[tuple[MultiPoly, Fraction, np.ndarray]] = []
    for pi in ranked[:max_advice]:
        pt = geometry.point_from_index(q, m, pi)
        sigma = int(f.values[pi])
        g = advice_correct(f, pt, sigma, dlist, budget)
        nb = g.values != q
        dup = next(
            (Qf for Qf, _, evf in found if np.array_equal(g.values[nb], evf[nb])),
            None,
        )
        if dup is not None:
            stage("advice", "duplicate", point=list(pt))
            continue
        beta = g.bot_fraction
        if beta > prof_thr:
            # rejection probability is at least the sentinel share
            stage(
                "advice",
                "profile-exceeded",
                point=list(pt),
                bot_num=beta.numerator,
                bot_den=beta.denominator,
            )
            continue
        gt = g.as_table()
        goracle = ldt.canonical_oracle(gt)
        dg = delta_f(gt, goracle)
        if dg > prof_thr:
            stage(
                "advice",
                "profile-exceeded",
                point=list(pt),
                delta_num=dg.numerator,
                delta_den=dg.denominator,
            )
            continue
        res = iterate_correct(g, max_iters, delta0, first_oracle=goracle)
        if res is None:
            stage("advice", "no-convergence", point=list(pt))
            continue
        poly, iters = res
        if any(poly.key() == Qf.key() for Qf, _, _ in found):
            stage("advice", "duplicate", point=list(pt), iters=iters)
            continue
        evals = ldt.PointsTable.from_polynomial(q, m, d, poly).values
        agree = Fraction(int((evals == f.values).sum()), n)
        found.append((poly, agree, evals))
        stage(
            "advice",
            "decoded",
            point=list(pt),
            iters=iters,
            agreement_num=agree.numerator,
            agreement_den=agree.denominator,
        )
    found.sort(key=lambda t: (-t[1], t[0].key()))
    return [(poly, agree) for poly, agree, _ in found]
