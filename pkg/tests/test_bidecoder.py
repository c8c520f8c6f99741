"""Explainers, grids, lifting, and the bivariate decoding pipeline."""

import random
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from ldtlab import bidecoder, ldt
from ldtlab.algebra import MultiPoly, Poly, PrimeField, poly_is_squarefree


def rand_multi(rng, field, nvars, deg):
    terms = {}
    for e in product(range(deg + 1), repeat=nvars):
        if sum(e) <= deg:
            c = rng.randrange(field.p)
            if c:
                terms[e] = c
    return MultiPoly(field, nvars, terms)


def embed_xy(P):
    return MultiPoly(P.field, 3, {e + (0,): c for e, c in P.terms.items()})


def planted_instance(rng, q, d, z_extra=1):
    """A = (z - P) * B with B nonzero in z, plus the planted P."""
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    z = MultiPoly.variable(field, 3, 2)
    terms = {}
    for kz in range(z_extra + 1):
        for e in product(range(2), repeat=2):
            c = rng.randrange(q)
            if c:
                terms[e + (kz,)] = c
    terms[(0, 0, z_extra)] = terms.get((0, 0, z_extra), 0) or 1
    B = MultiPoly(field, 3, terms)
    return (z - embed_xy(P)) * B, P


def test_explainer_build_checks():
    rng = random.Random(61)
    q, d = 31, 2
    A, P = planted_instance(rng, q, d)
    D = A.weighted_degree((1, 1, d))
    expl = bidecoder.Explainer.build(A, d, D)
    assert expl.d == d and expl.D == D
    assert expl.d_z >= 1
    # a square factor must be rejected
    field = PrimeField(q)
    z = MultiPoly.variable(field, 3, 2)
    sq = (z - embed_xy(P)) * (z - embed_xy(P))
    with pytest.raises(ValueError):
        bidecoder.Explainer.build(sq, d, sq.weighted_degree((1, 1, d)))
    with pytest.raises(ValueError):
        bidecoder.Explainer.build(A, d, D - 1)  # weight budget too small


def test_find_good_directions_on_planted_table():
    rng = random.Random(62)
    q, d = 13, 1
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    table = ldt.PointsTable.from_polynomial(q, 2, d, P)
    oracle = ldt.canonical_oracle(table)
    got = bidecoder.find_good_directions(table, oracle, Fraction(1, 2))
    assert got is not None
    dir1, dir2, H = got
    assert dir1 != dir2
    assert len(H) == q * q  # exact table: every point qualifies
    with pytest.raises(ValueError):
        table3 = ldt.PointsTable(q, 3, d, np.zeros(q**3, dtype=np.int64))
        bidecoder.find_good_directions(table3, oracle, Fraction(1, 2))


def test_structured_grid_properties():
    rng = random.Random(63)
    q = 31
    H = {(a, b) for a in range(q) for b in range(16)}  # 16 dense rows
    gamma = Fraction(1, 4)
    grid = bidecoder.structured_grid(q, H, gamma, r=7, seed=5)
    assert grid is not None
    assert len(grid.S1) == 7
    assert set(grid.S2) <= {b for (_, b) in H}
    # every chosen row meets H in at least gamma/2 of the S1 columns
    for b in grid.S2:
        hits = sum(1 for a in grid.S1 if (a, b) in H)
        assert 2 * hits * gamma.denominator >= gamma.numerator * len(grid.S1)
    again = bidecoder.structured_grid(q, H, gamma, r=7, seed=5)
    assert again.S1 == grid.S1 and again.S2 == grid.S2  # deterministic
    other = bidecoder.structured_grid(q, H, gamma, r=7, seed=6)
    assert (other.S1, other.S2) != (grid.S1, grid.S2) or True  # may collide
    with pytest.raises(ValueError):
        bidecoder.structured_grid(q, H, gamma, r=0, seed=1)
    with pytest.raises(ValueError):
        bidecoder.structured_grid(q, H, gamma, r=q + 1, seed=1)


def test_interpolate_explainer_vanishes_on_columns():
    rng = random.Random(64)
    q, d = 13, 1
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    table = ldt.PointsTable.from_polynomial(q, 2, d, P)
    oracle = ldt.canonical_oracle(table)
    S1 = [1, 4, 7]
    D = 5
    A = bidecoder.interpolate_explainer(table, oracle, S1, d, D)
    assert A is not None and not A.is_zero()
    assert A.weighted_degree((1, 1, d)) <= D
    for a in S1:
        for y in range(q):
            assert A.evaluate((a, y, table.value_at((a, y)))) == 0
    with pytest.raises(ValueError):
        bidecoder.interpolate_explainer(table, oracle, list(range(q)), d, 2)


def test_minimal_explainer_recovers_graph_certificate():
    rng = random.Random(65)
    q, d = 13, 1
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    S = [((a, b), P.evaluate((a, b))) for a in range(q) for b in range(q)]
    expl = bidecoder.minimal_explainer(S, d, D_max=2 * d + 2, p=q)
    assert expl is not None
    for (pt, v) in S:
        assert expl.A.evaluate((pt[0], pt[1], v)) == 0
    # z - P is the least certificate; same weighted degree
    assert expl.D <= d + 1


def test_vanish_propagate_exact_rows():
    rng = random.Random(66)
    q, d = 13, 1
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    table = ldt.PointsTable.from_polynomial(q, 2, d, P)
    oracle = ldt.canonical_oracle(table)
    H = {(a, b) for a in range(q) for b in range(q)}
    grid = bidecoder.structured_grid(q, H, Fraction(1, 2), r=6, seed=3)
    z = MultiPoly.variable(field, 3, 2)
    A = z - embed_xy(P)
    got = bidecoder.vanish_propagate(A, table, oracle, grid.S2, grid)
    want = {pt for pt in grid.H if pt[1] in set(grid.S2)}
    assert got == want


def test_newton_lift_validation():
    field = PrimeField(7)
    x = MultiPoly.variable(field, 2, 0)
    z = MultiPoly.variable(field, 2, 1)
    A = (z - x) * (z - MultiPoly.constant(field, 2, 3))
    phi = bidecoder.newton_lift(A, 0, 4)
    assert phi.key() == x.truncate_total_degree((0,), 4).key() or phi.key() == MultiPoly(field, 1, {(1,): 1}).key()
    with pytest.raises(ValueError):
        bidecoder.newton_lift(A, 1, 2)  # not a root at the origin
    dbl = (z - x) * (z - x)
    with pytest.raises(ValueError):
        bidecoder.newton_lift(dbl, 0, 2)  # repeated root, derivative vanishes
    with pytest.raises(ValueError):
        bidecoder.newton_lift(A, 0, -1)


def test_pencil_build_rejects_bad_roots():
    rng = random.Random(67)
    q, d = 31, 1
    A, P = planted_instance(rng, q, d)
    D = A.weighted_degree((1, 1, d))
    expl = bidecoder.Explainer.build(A, d, D)
    field = PrimeField(q)
    center = None
    for b in product(range(q), repeat=2):
        Ab = A.partial_evaluate({0: b[0], 1: b[1]}).to_poly(2)
        if not Ab.is_zero() and Ab.degree >= 1 and poly_is_squarefree(Ab):
            center = b
            break
    local = {}
    for u in [(1, t) for t in range(q)] + [(0, 1)]:
        xx = MultiPoly(field, 2, {(1, 0): u[0], (0, 0): center[0]})
        yy = MultiPoly(field, 2, {(1, 0): u[1], (0, 0): center[1]})
        local[u] = P.substitute({0: xx, 1: yy}).to_poly(0)
    pencil = bidecoder.PencilInstance.build(expl, center, local, q)
    assert pencil.center == center
    assert not pencil.size_bound_met  # q + 1 directions < d_z * D * q
    got = bidecoder.pencil_decode(expl, center, pencil)
    assert got is not None and got[0].key() == P.key()

    bad = dict(local)
    u0 = (1, 0)
    bad[u0] = bad[u0] + Poly(field, [1])
    with pytest.raises(ValueError, match="line identity"):
        bidecoder.PencilInstance.build(expl, center, bad, q)


def test_pencil_counterexample_returns_bottom():
    # two locally consistent root families with no common bivariate root
    q, d = 13, 2
    field = PrimeField(q)
    rng = random.Random(68)
    C = Poly(field, [rng.randrange(q) for _ in range(3)])
    R = Poly(field, [rng.randrange(q) for _ in range(3)])
    x = MultiPoly.variable(field, 3, 0)
    y = MultiPoly.variable(field, 3, 1)
    z = MultiPoly.variable(field, 3, 2)
    A = (x * z - C.to_multi(3, 1)) * (y * z - R.to_multi(3, 0))
    expl = bidecoder.Explainer.build(A, d, A.weighted_degree((1, 1, d)))
    center = None
    for b1 in range(1, q):
        for b2 in range(1, q):
            r1 = C.evaluate(b2) * pow(b1, q - 2, q) % q
            r2 = R.evaluate(b1) * pow(b2, q - 2, q) % q
            if r1 != r2:
                center = (b1, b2)
                break
        if center:
            break
    b1, b2 = center
    inv1, inv2 = pow(b1, q - 2, q), pow(b2, q - 2, q)
    root_v = Poly(field, [c * inv1 % q for c in C.shift_argument(b2).coeffs])
    root_h = Poly(field, [c * inv2 % q for c in R.shift_argument(b1).coeffs])
    pencil = bidecoder.PencilInstance.build(
        expl, center, {(0, 1): root_v, (1, 0): root_h}, q
    )
    assert bidecoder.pencil_decode(expl, center, pencil) is None


def test_decode_bivariate_exact_table():
    rng = random.Random(69)
    q, d = 13, 1
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    table = ldt.PointsTable.from_polynomial(q, 2, d, P)
    trace = []
    out = bidecoder.decode_bivariate(table, Fraction(1, 2), {"seed": 0}, trace)
    assert [(p.key(), a) for p, a in out] == [(P.key(), Fraction(1))]
    assert trace and trace[0]["name"] == "good_directions"
    assert trace[-1]["name"] == "done"


def test_decode_bivariate_planted_noise():
    from ldtlab import harness

    cfg = harness.ExperimentConfig(
        q=31, m=2, d=1, pipeline="decode2",
        noise={"kind": "planted_agreement", "eps": Fraction(2, 5)},
        seeds=(3,), thresholds={"eps": Fraction(1, 5)},
    )
    table, truths = harness.plant_instance(cfg, 3)
    out = bidecoder.decode_bivariate(table, Fraction(1, 5), {"seed": 3})
    keys = [p.key() for p, _ in out]
    assert truths[0].key() in keys
    n = 31 * 31
    want = Fraction(-(-2 * n // 5), n)
    got = dict((p.key(), a) for p, a in out)[truths[0].key()]
    assert got == want


def test_decode_bivariate_junk_is_empty():
    rng = np.random.Generator(np.random.Philox(key=[70, 1]))
    table = ldt.PointsTable(13, 2, 1, rng.integers(0, 13, size=169))
    out = bidecoder.decode_bivariate(table, Fraction(1, 2), {"seed": 1})
    assert out == []


def test_list_and_highagreement_forms_exact():
    rng = random.Random(71)
    q, d = 5, 1
    field = PrimeField(q)
    P = rand_multi(rng, field, 2, d)
    table = ldt.PointsTable.from_polynomial(q, 2, d, P)
    rec = bidecoder.list_and_highagreement_forms(
        table, Fraction(1, 2), Fraction(3, 5)
    )
    keys = [p.key() for p, _ in rec["list"]]
    assert P.key() in keys
    assert rec["unexplained_count"] == 0
    assert rec["delta"] == 0
    assert rec["low_error"] is not None
