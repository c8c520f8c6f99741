"""Per-line decoding against exhaustive enumeration oracles.

The reference decoder below scores every coefficient vector and applies the
same tie rule the production code promises (maximum agreement, then smallest
coefficient tuple), so any divergence is a real bug and not a tie artifact.
"""

import random
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from ldtlab import rsline
from ldtlab.algebra import Poly, PrimeField


def oracle_best_fit(values, q, d):
    best = None
    for coeffs in product(range(q), repeat=d + 1):
        agree = 0
        for x, v in enumerate(values):
            if v >= q:
                continue
            acc = 0
            for c in reversed(coeffs):
                acc = (acc * x + c) % q
            agree += acc == v
        key = (-agree, coeffs)
        if best is None or key < best:
            best = key
    return -best[0], best[1]


def oracle_list(values, q, d, min_count):
    out = []
    for coeffs in product(range(q), repeat=d + 1):
        agree = 0
        for x, v in enumerate(values):
            if v >= q:
                continue
            acc = 0
            for c in reversed(coeffs):
                acc = (acc * x + c) % q
            agree += acc == v
        if agree >= min_count:
            out.append((coeffs, agree))
    out.sort(key=lambda t: (-t[1], t[0]))
    return out


def test_best_fit_matches_exhaustive_on_random_words():
    rng = random.Random(31)
    for q, d in ((5, 1), (5, 2), (7, 1), (7, 2), (13, 1), (13, 2)):
        for _ in range(25):
            w = [rng.randrange(q) for _ in range(q)]
            agree, coeffs = oracle_best_fit(w, q, d)
            got = rsline.best_fit(w, q, d)
            assert tuple(got.coeffs) + (0,) * (d + 1 - len(got.coeffs)) == coeffs
            assert rsline.agreement_count(w, got, q) == agree


def test_best_fit_on_every_exact_word():
    # every degree <= d word decodes to itself with full agreement; this is
    # the line-level half of the plurality fixed-point argument
    for q, d in ((5, 1), (5, 2), (5, 3), (7, 1), (7, 2)):
        field = PrimeField(q)
        words = []
        polys = []
        for coeffs in product(range(q), repeat=d + 1):
            p = Poly(field, list(coeffs))
            polys.append(p)
            words.append([p.evaluate(t) for t in range(q)])
        cf, ag = rsline.batch_best_fit(np.array(words), q, d)
        assert (ag == q).all()
        for row, p in zip(cf, polys):
            assert Poly(field, [int(c) for c in row]) == p


def test_best_fit_ties_prefer_small_coefficients():
    # tie-heavy words; the exhaustive oracle settles every tie the same way
    q, d = 5, 1
    w = [0, 0, 2, 3, 4]
    agree, coeffs = oracle_best_fit(w, q, d)
    got = rsline.best_fit(w, q, d)
    assert rsline.agreement_count(w, got, q) == agree
    assert tuple(got.coeffs) + (0,) * (d + 1 - len(got.coeffs)) == coeffs
    rng = random.Random(32)
    for _ in range(40):
        w = [rng.randrange(2) for _ in range(q)]  # heavy collisions
        agree, coeffs = oracle_best_fit(w, q, d)
        got = rsline.best_fit(w, q, d)
        assert tuple(got.coeffs) + (0,) * (d + 1 - len(got.coeffs)) == coeffs


def test_best_fit_with_absent_positions():
    rng = random.Random(33)
    q, d = 7, 2
    for _ in range(25):
        w = [rng.randrange(q) for _ in range(q)]
        for _ in range(rng.randrange(1, 4)):
            w[rng.randrange(q)] = q  # erase
        agree, coeffs = oracle_best_fit(w, q, d)
        got = rsline.best_fit(w, q, d)
        got_c = tuple(got.coeffs) + (0,) * (d + 1 - len(got.coeffs))
        assert got_c == coeffs, (w, got_c, coeffs)


def test_batch_matches_scalar():
    rng = random.Random(34)
    q, d = 11, 2
    words = np.array([[rng.randrange(q) for _ in range(q)] for _ in range(60)])
    cf, ag = rsline.batch_best_fit(words, q, d)
    for i in range(60):
        p = rsline.best_fit([int(v) for v in words[i]], q, d)
        assert [int(c) for c in cf[i][: p.degree + 1]] == list(p.coeffs) or p.is_zero()
        assert int(ag[i]) == rsline.agreement_count([int(v) for v in words[i]], p, q)


def test_unique_decode_within_radius():
    rng = random.Random(35)
    for q, d in ((7, 1), (13, 2), (13, 3)):
        field = PrimeField(q)
        emax = (q - d - 1) // 2
        for _ in range(25):
            p = Poly(field, [rng.randrange(q) for _ in range(d + 1)])
            w = [p.evaluate(t) for t in range(q)]
            for pos in rng.sample(range(q), rng.randrange(emax + 1)):
                w[pos] = (w[pos] + rng.randrange(1, q)) % q
            got = rsline.unique_decode(w, q, d)
            assert got == p
        # erasures count against n, not against the error budget
        w = [p.evaluate(t) for t in range(q)]
        w[0] = q
        assert rsline.unique_decode(w, q, d) == p


def test_list_decode_complete_and_sorted():
    rng = random.Random(36)
    q, d = 7, 1
    field = PrimeField(q)
    for _ in range(20):
        w = [rng.randrange(q) for _ in range(q)]
        for thr in (Fraction(2, 7), Fraction(3, 7), Fraction(5, 7)):
            dl = rsline.list_decode(w, q, d, thr)
            want = oracle_list(w, q, d, -(-thr.numerator * q // thr.denominator))
            got = [
                (tuple(p.coeffs) + (0,) * (d + 1 - len(p.coeffs)), int(a * q))
                for p, a in dl
            ]
            assert got == want
    planted = Poly(field, [3, 2])
    w = [planted.evaluate(t) for t in range(q)]
    dl = rsline.list_decode(w, q, d, Fraction(1, 2))
    assert dl.polynomials()[0] == planted
    assert dl.entries[0][1] == 1


def test_list_decode_budget():
    with pytest.raises(ValueError, match="budget"):
        rsline.list_decode([0] * 13, 13, 4, Fraction(1, 2), budget=100)


def test_batch_list_decode_matches_exhaustive():
    rng = random.Random(37)
    q, d = 13, 1
    words = []
    field = PrimeField(q)
    for _ in range(30):
        w = [rng.randrange(q) for _ in range(q)]
        words.append(w)
    for _ in range(10):  # planted halves so the lists are nonempty
        p1 = Poly(field, [rng.randrange(q), rng.randrange(q)])
        p2 = Poly(field, [rng.randrange(q), rng.randrange(q)])
        words.append([(p1 if t < 7 else p2).evaluate(t) for t in range(q)])
    for min_count in (d + 1, 5, 7):
        got = rsline.batch_list_decode(np.array(words), q, d, min_count)
        for w, row in zip(words, got):
            assert row == oracle_list(w, q, d, min_count)
    with pytest.raises(ValueError):
        rsline.batch_list_decode(np.array(words), q, d, d)


def test_batch_list_decode_with_absent_positions():
    q, d = 7, 1
    field = PrimeField(q)
    p = Poly(field, [1, 1])
    w = [p.evaluate(t) for t in range(q)]
    w[2] = q
    w[5] = q
    rows = rsline.batch_list_decode(np.array([w]), q, d, 5)
    assert ((1, 1), 5) in rows[0]
    assert rows[0] == oracle_list(w, q, d, 5)


def test_non_unique_points_brute():
    rng = random.Random(38)
    q = 11
    field = PrimeField(q)
    for _ in range(20):
        w = [rng.randrange(q) for _ in range(q)]
        w[3] = q
        entries = [
            Poly(field, [rng.randrange(q), rng.randrange(q)]) for _ in range(4)
        ]
        want = set()
        for x in range(q):
            if w[x] >= q:
                continue
            if sum(1 for p in entries if p.evaluate(x) == w[x]) >= 2:
                want.add(x)
        assert rsline.non_unique_points(w, entries, q) == want
