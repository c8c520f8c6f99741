"""Decoding noisy evaluations of univariate polynomials on a full line.

A received word is an array of length q holding values in range(q), plus the
sentinel value q for an absent entry; absent entries never match any
candidate polynomial, so they count as disagreements everywhere.

best_fit is exact: it returns a degree <= d polynomial with the maximum
number of matches, breaking ties toward the lexicographically smallest
coefficient vector (constant term first).  Exactness at scale comes from a
pigeonhole argument rather than full enumeration: partition the q positions
into b blocks and interpolate every (d+1)-subset inside each block; any
polynomial matching at least b*d + 1 positions must place d+1 matches in a
single block, so it gets enumerated.  Running the block sizes from fine to
coarse finalizes easy lines (high agreement) at tiny cost and spends larger
enumerations only on lines that need them, ending at the full C(q, d+1)
enumeration which is complete down to agreement d+1.

unique_decode is the classical rational-interpolation decoder; list_decode
is exhaustive enumeration over all q^(d+1) candidates under a budget.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .algebra import Poly, PrimeField, kernel_basis_mod_p, rref_mod_p

# Batch kernels accumulate (d+1) products of residues in float32; exactness
# of the accumulation needs (d+1) * p^2 below 2^24.
_BATCH_P_LIMIT = 1500


# ---------------------------------------------------------------------------
# caches


_SUBSET_CACHE: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}
_VANDER_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
_INV_TABLE_CACHE: dict[int, np.ndarray] = {}


def _inv_table(p: int) -> np.ndarray:
    tab = _INV_TABLE_CACHE.get(p)
    if tab is None:
        tab = np.zeros(p, dtype=np.int64)
        for a in range(1, p):
            tab[a] = pow(a, p - 2, p)
        _INV_TABLE_CACHE[p] = tab
    return tab


def _vander(q: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Powers matrix V[j, x] = x^j mod q for j = 0..d, as int64 and float32."""
    key = (q, d)
    got = _VANDER_CACHE.get(key)
    if got is None:
        xs = np.arange(q, dtype=np.int64)
        V = np.ones((d + 1, q), dtype=np.int64)
        for j in range(1, d + 1):
            V[j] = V[j - 1] * xs % q
        got = (V, V.astype(np.float32))
        _VANDER_CACHE[key] = got
    return got


def _batch_inverse_vandermonde(nodes: np.ndarray, p: int) -> np.ndarray:
    """Invert many (k x k) Vandermonde matrices mod p at once.

    The nodes in each row are distinct, so every leading principal minor is a
    nonzero Vandermonde determinant and elimination needs no pivoting.
    """
    n, k = nodes.shape
    inv = _inv_table(p)
    A = np.ones((n, k, 2 * k), dtype=np.int64)
    for j in range(1, k):
        A[:, :, j] = A[:, :, j - 1] * nodes % p
    A[:, :, k:] = np.eye(k, dtype=np.int64)[None, :, :]
    for c in range(k):
        piv = inv[A[:, c, c]]
        A[:, c, :] = A[:, c, :] * piv[:, None] % p
        for r in range(k):
            if r == c:
                continue
            f = A[:, r, c]
            A[:, r, :] = (A[:, r, :] - f[:, None] * A[:, c, :]) % p
    return A[:, :, k:]


def _blocks_subsets(q: int, d: int, b: int) -> tuple[np.ndarray, np.ndarray]:
    """All (d+1)-subsets inside each of b contiguous blocks, plus inverses."""
    key = (q, d, b)
    got = _SUBSET_CACHE.get(key)
    if got is not None:
        return got
    k = d + 1
    bounds = [round(i * q / b) for i in range(b + 1)]
    subs: list[tuple[int, ...]] = []
    for i in range(b):
        lo, hi = bounds[i], bounds[i + 1]
        if hi - lo >= k:
            subs.extend(itertools.combinations(range(lo, hi), k))
    subsets = np.array(subs, dtype=np.int64).reshape(len(subs), k)
    invV = _batch_inverse_vandermonde(subsets % q, q)
    _SUBSET_CACHE[key] = (subsets, invV)
    return subsets, invV


def _coeff_keys(coeffs: np.ndarray, q: int, d: int) -> np.ndarray:
    """Radix encoding of coefficient vectors; lex order on (c0, c1, ...)."""
    key = np.zeros(coeffs.shape[:-1], dtype=np.int64)
    for j in range(d + 1):
        key = key * q + coeffs[..., j]
    return key


def _key_to_coeffs(key: int, q: int, d: int) -> tuple[int, ...]:
    out = []
    for _ in range(d + 1):
        out.append(int(key % q))
        key //= q
    return tuple(reversed(out))


# ---------------------------------------------------------------------------
# exact maximum-agreement fitting


def _lex_min_through(points: list[tuple[int, int]], q: int, d: int) -> tuple[int, ...]:
    """Lex-smallest coefficient vector of a degree <= d poly through all points.

    Used only when fewer than d+1 positions carry values, so the family of
    maximizers is the affine solution set of an underdetermined system; fix
    coefficients greedily from the constant term up, testing feasibility.
    """
    k = d + 1
    rows = [[pow(x, j, q) for j in range(k)] for x, _ in points]
    rhs = [v for _, v in points]
    fixed: list[int] = []
    for i in range(k):
        for c in range(q):
            trial = fixed + [c]
            # feasible iff the system on the remaining coefficients is solvable
            M = np.array([r[len(trial):] for r in rows], dtype=np.int64)
            t = np.array(
                [(v - sum(r[j] * trial[j] for j in range(len(trial)))) % q
                 for r, v in zip(rows, rhs)],
                dtype=np.int64,
            )
            if M.shape[1] == 0:
                ok = bool((t % q == 0).all())
            else:
                aug = np.hstack([M, t[:, None]])
                _, piv = rref_mod_p(aug, q)
                ok = M.shape[1] not in piv
            if ok:
                fixed.append(c)
                break
        else:
            raise ArithmeticError("no polynomial through the given points")
    return tuple(fixed)


def _level_schedule(q: int, d: int) -> list[int]:
    b = q // (d + 1)
    out = []
    while b > 1:
        out.append(b)
        b //= 2
    out.append(1)
    return out


def batch_best_fit(values: np.ndarray, q: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact best fits for many lines at once.

    values: (n_lines, q) ints in range(q), or q for an absent entry.
    Returns (coeffs (n_lines, d+1), agreements (n_lines,)).
    """
    if d < 1 or d >= q:
        raise ValueError("need 1 <= d < q")
    if q > _BATCH_P_LIMIT:
        raise ValueError("batch decoding supports moduli up to 1500")
    values = np.asarray(values, dtype=np.int64)
    if values.ndim != 2 or values.shape[1] != q:
        raise ValueError("values must have shape (n_lines, q)")
    L = values.shape[0]
    k = d + 1
    qk = q**k
    if qk > (2**62) // (q + 1):
        raise ValueError("q^(d+1) too large for exact scoring keys")
    _, vf = _vander(q, d)
    vals16 = values.astype(np.int16)
    clean = np.where(values >= q, 0, values)  # interpolation inputs

    best_score = np.full(L, -1, dtype=np.int64)
    active = np.arange(L)

    # pre-pass: a single interpolation catches agreement-q lines immediately
    levels = [(None, q)] + [(b, b * d + 1) for b in _level_schedule(q, d)]
    for b, thr in levels:
        if active.size == 0:
            break
        if b is None:
            subsets = np.arange(k, dtype=np.int64)[None, :]
            invV = _batch_inverse_vandermonde(subsets % q, q)
        else:
            subsets, invV = _blocks_subsets(q, d, b)
        n_sub = subsets.shape[0]
        if n_sub == 0:
            continue
        la = active.size
        line_chunk = max(1, int(2e7 // max(1, n_sub * q)))
        for s0 in range(0, la, line_chunk):
            s1 = min(la, s0 + line_chunk)
            idx = active[s0:s1]
            ysub = clean[idx][:, subsets]  # (chunk, n_sub, k)
            coef = np.einsum("skj,lsj->lsk", invV, ysub, dtype=np.int64) % q
            keys = _coeff_keys(coef, q, d)
            ev = coef.astype(np.float32) @ vf
            ev -= np.floor(ev / q) * q
            agree = (ev.astype(np.int16) == vals16[idx, None, :]).sum(
                axis=2, dtype=np.int64
            )
            score = agree * qk + (qk - 1 - keys)
            best_score[idx] = np.maximum(best_score[idx], score.max(axis=1))
        agreements = best_score[active] // qk
        done = agreements >= thr
        active = active[~done]

    coeffs = np.zeros((L, k), dtype=np.int64)
    agreements = np.zeros(L, dtype=np.int64)
    have = best_score >= 0
    agreements[have] = best_score[have] // qk
    key_part = (qk - 1) - best_score[have] % qk
    for i, key in zip(np.nonzero(have)[0], key_part):
        coeffs[i] = _key_to_coeffs(int(key), q, d)

    # lines with fewer than d+1 present values never reach threshold d+1;
    # their maximizers run through every present value
    for i in np.nonzero(agreements < k)[0]:
        pts = [(int(x), int(v)) for x, v in enumerate(values[i]) if v < q]
        if len(pts) >= k:
            continue  # the b=1 level already found a true maximizer
        if not pts:
            coeffs[i] = 0  # everything ties at zero agreement
            agreements[i] = 0
            continue
        c = _lex_min_through(pts, q, d)
        coeffs[i] = c
        agreements[i] = len(pts)
    return coeffs, agreements


def best_fit(values: Sequence[int], q: int, d: int) -> Poly:
    """Exact maximum-agreement fit for one line (ties: lex-min coefficients)."""
    arr = np.array([list(values)], dtype=np.int64)
    coeffs, _ = batch_best_fit(arr, q, d)
    return Poly(PrimeField(q), [int(c) for c in coeffs[0]])


def agreement_count(values: Sequence[int], poly: Poly, q: int) -> int:
    """Number of positions where the polynomial matches the received word."""
    return sum(1 for x, v in enumerate(values) if v < q and poly.evaluate(x) == v)


def agreement_fraction(values: Sequence[int], poly: Poly, q: int) -> Fraction:
    return Fraction(agreement_count(values, poly, q), q)


# ---------------------------------------------------------------------------
# unique decoding (rational interpolation)


def unique_decode(values: Sequence[int], q: int, d: int) -> Poly | None:
    """The unique degree <= d polynomial within distance < (n - d)/2, if any.

    n counts the present (non-absent) positions; equations are restricted to
    them, so absent entries behave as erasures.
    """
    field = PrimeField(q)
    pts = [(x, v) for x, v in enumerate(values) if v < q]
    n = len(pts)
    e = (n - d - 1) // 2
    if e < 0:
        return None
    # E(x) of degree <= e, N(x) of degree <= e + d, with N(x) = v E(x) at all
    # present positions; any nonzero kernel vector works or nothing does.
    ne, nn = e + 1, e + d + 1
    M = np.zeros((n, ne + nn), dtype=np.int64)
    for r, (x, v) in enumerate(pts):
        xp = 1
        for j in range(nn):
            M[r, ne + j] = xp
            if j < ne:
                M[r, j] = (-v * xp) % q
            xp = xp * x % q
    basis = kernel_basis_mod_p(M, q)
    for vec in basis:
        E = Poly(field, [int(c) for c in vec[:ne]])
        N = Poly(field, [int(c) for c in vec[ne:]])
        if E.is_zero():
            continue
        P, rem = N.divmod(E)
        if not rem.is_zero() or P.degree > d:
            continue
        dist = sum(1 for x, v in pts if P.evaluate(x) != v)
        if dist <= e:
            return P
    return None


# ---------------------------------------------------------------------------
# list decoding


@dataclass
class DecodeList:
    """Result of threshold decoding: entries sorted by falling agreement."""

    q: int
    d: int
    threshold: Fraction
    entries: list[tuple[Poly, Fraction]]

    def polynomials(self) -> list[Poly]:
        return [p for p, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def list_decode(
    values: Sequence[int],
    q: int,
    d: int,
    threshold: Fraction | float | str,
    budget: int = 10**7,
) -> DecodeList:
    """All degree <= d polynomials with agreement fraction >= threshold.

    Exhaustive over the q^(d+1) candidates; refuses to start past the budget.
    """
    thr = Fraction(threshold)
    total = q ** (d + 1)
    if total > budget:
        raise ValueError(f"enumeration of {total} candidates exceeds budget {budget}")
    vals = np.asarray(list(values), dtype=np.int16)
    V, vf = _vander(q, d)
    k = d + 1
    min_count = -(-(thr.numerator * q) // thr.denominator)  # ceil(thr * q)
    found: list[tuple[tuple[int, ...], int]] = []
    chunk = 1 << 14
    for c0 in range(0, total, chunk):
        idx = np.arange(c0, min(total, c0 + chunk), dtype=np.int64)
        coefs = np.empty((idx.size, k), dtype=np.int64)
        rest = idx.copy()
        for j in range(k - 1, -1, -1):
            coefs[:, j] = rest % q
            rest //= q
        ev = coefs.astype(np.float32) @ vf
        ev -= np.floor(ev / q) * q
        agree = (ev.astype(np.int16) == vals[None, :]).sum(axis=1)
        hits = np.nonzero(agree >= max(min_count, 0))[0]
        for h in hits:
            found.append((tuple(int(c) for c in coefs[h]), int(agree[h])))
    found.sort(key=lambda t: (-t[1], t[0]))
    field = PrimeField(q)
    entries = [(Poly(field, c), Fraction(cnt, q)) for c, cnt in found]
    return DecodeList(q, d, thr, entries)


def batch_list_decode(
    values: np.ndarray, q: int, d: int, min_count: int
) -> list[list[tuple[tuple[int, ...], int]]]:
    """Per-line lists of all polynomials with at least min_count matches.

    Complete by the block pigeonhole argument; intended for thresholds well
    above d+1 where the enumeration stays small.
    """
    if min_count < d + 1:
        raise ValueError("threshold below d+1 needs exhaustive list_decode")
    values = np.asarray(values, dtype=np.int64)
    L = values.shape[0]
    b = max(1, min((min_count - 1) // d, q // (d + 1)))
    subsets, invV = _blocks_subsets(q, d, b)
    _, vf = _vander(q, d)
    vals16 = values.astype(np.int16)
    clean = np.where(values >= q, 0, values)
    out: list[list[tuple[tuple[int, ...], int]]] = []
    line_chunk = max(1, int(4e7 // max(1, subsets.shape[0] * q)))
    for s0 in range(0, L, line_chunk):
        s1 = min(L, s0 + line_chunk)
        ysub = clean[s0:s1][:, subsets]
        coef = np.einsum("skj,lsj->lsk", invV, ysub, dtype=np.int64) % q
        ev = coef.astype(np.float32) @ vf
        ev -= np.floor(ev / q) * q
        agree = (ev.astype(np.int16) == vals16[s0:s1, None, :]).sum(axis=2)
        for li in range(s1 - s0):
            hits = np.nonzero(agree[li] >= min_count)[0]
            seen: dict[tuple[int, ...], int] = {}
            for h in hits:
                ckey = tuple(int(c) for c in coef[li, h])
                seen[ckey] = int(agree[li, h])
            out.append(sorted(seen.items(), key=lambda t: (-t[1], t[0])))
    return out


def non_unique_points(
    values: Sequence[int], entries: Sequence[Poly], q: int
) -> set[int]:
    """Parameters where two or more list entries agree with the received word."""
    out = set()
    for x, v in enumerate(values):
        if v >= q:
            continue
        hits = 0
        for p in entries:
            if p.evaluate(x) == v:
                hits += 1
                if hits >= 2:
                    out.add(x)
                    break
    return out
