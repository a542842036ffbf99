import itertools

import numpy as np
import pytest

from poolpricer.errors import InfeasibleAssignmentError
from poolpricer.matching import solve_assignment
from poolpricer.pricing import PricedRide

from conftest import make_ride


def priced(ride_id, members, value):
    k = len(members)
    if k == 1:
        ride = make_ride(ride_id, d=(2.0,), t=(0.1,), shared=(0.1,), wait=(0.0,), distance=2.0, ids=tuple(members))
    else:
        ride = make_ride(ride_id, d=(2.0,) * k, ids=tuple(members))
    return PricedRide(ride, (0.05,) * k, value, 0.0, value, (1.0,) * k)


def brute_force(rides, travellers):
    """All exact covers; best value, ties to the lexicographically smallest sorted id list."""
    best = None
    by_first = {}
    for r in rides:
        by_first.setdefault(min(r.ride.traveller_ids), []).append(r)

    def rec(left, chosen, value):
        nonlocal best
        if not left:
            key = sorted(r.ride_id for r in chosen)
            if best is None or value > best[0] + 1e-9 or (abs(value - best[0]) <= 1e-9 and key < best[1]):
                best = (value, key)
            return
        i = min(left)
        for r in by_first.get(i, []):
            if set(r.ride.traveller_ids) <= left:
                rec(left - set(r.ride.traveller_ids), chosen + [r], value + r.max_value)

    rec(frozenset(travellers), [], 0.0)
    return best


def random_instance(rng, n, ties=False):
    rides, rid = [], 0
    for t in range(n):
        rides.append(priced(rid, (t,), float(rng.choice([1.0, 2.0])) if ties else rng.uniform(-1, 3)))
        rid += 1
    for k in (2, 3):
        for mem in itertools.combinations(range(n), k):
            if rng.random() < 0.5:
                val = float(rng.choice([2.0, 3.0, 4.0])) if ties else rng.uniform(-1, 2.5 * k)
                rides.append(priced(rid, mem, val))
                rid += 1
    order = rng.permutation(len(rides))
    return [rides[i] for i in order]


def test_single_private():
    a = solve_assignment([priced(0, (5,), 0.85)], [5])
    assert a.ride_ids == (0,) and a.objective == pytest.approx(0.85)


def test_pooled_beats_privates():
    rides = [priced(0, (0,), 2.0), priced(1, (1,), 2.0), priced(2, (0, 1), 5.0)]
    a = solve_assignment(rides, [0, 1])
    assert a.ride_ids == (2,) and a.objective == 5.0
    rides[2] = priced(2, (0, 1), 3.0)
    assert solve_assignment(rides, [0, 1]).ride_ids == (0, 1)


def test_missing_private():
    with pytest.raises(InfeasibleAssignmentError) as err:
        solve_assignment([priced(0, (0,), 1.0), priced(1, (0, 1), 3.0)], [0, 1])
    assert "1" in str(err.value)


@pytest.mark.parametrize("ties", [False, True])
def test_brute_force(ties):
    rng = np.random.default_rng(int(ties))
    for _ in range(60):
        n = int(rng.integers(1, 9))
        rides = random_instance(rng, n, ties)
        a = solve_assignment(rides, range(n))
        value, ids = brute_force(rides, range(n))
        assert a.objective == pytest.approx(value, abs=1e-9)
        assert list(a.ride_ids) == ids


def milp_value(rides, n) -> float:
    """Optimal exact-cover value from HiGHS, as an independent oracle."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    A = np.zeros((n, len(rides)))
    for j, r in enumerate(rides):
        A[list(r.ride.traveller_ids), j] = 1
    c = np.array([r.max_value for r in rides])
    res = milp(-c, constraints=LinearConstraint(A, 1, 1), integrality=np.ones(len(rides)), bounds=Bounds(0, 1))
    return -res.fun


def additive_instance(rng, n, density):
    """Pooled gains add up over members, so every packing of the same
    travellers ties: the structure refused offers produce."""
    w = rng.choice([1.0, 1.5, 2.0], n)
    c = rng.choice([0.25, 0.5], n)
    rides, rid = [priced(t, (t,), float(w[t])) for t in range(n)], n
    for k in (2, 3):
        for mem in itertools.combinations(range(n), k):
            if rng.random() < density:
                extra = float(c[list(mem)].sum()) if rng.random() < 0.8 else -0.25
                rides.append(priced(rid, mem, float(w[list(mem)].sum()) + extra))
                rid += 1
    return rides


def test_additive_ties_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(40):
        n = int(rng.integers(2, 9))
        rides = additive_instance(rng, n, 0.6)
        a = solve_assignment(rides, range(n))
        value, ids = brute_force(rides, range(n))
        assert a.objective == pytest.approx(value, abs=1e-9)
        assert list(a.ride_ids) == ids


def test_additive_ties_dense():
    """Many optimal packings on 30 travellers: still exact and quick."""
    rng = np.random.default_rng(13)
    rides = additive_instance(rng, 30, 0.08)
    a = solve_assignment(rides, range(30))
    by_id = {r.ride_id: r for r in rides}
    assert a.objective == pytest.approx(milp_value(rides, 30), abs=1e-7)
    assert a.seconds < 20
    # lexicographic optimality: swapping in any smaller-id ride never keeps the value
    chosen = set(a.ride_ids)
    for r in rides:
        if r.ride_id in chosen or r.ride.is_private:
            continue
        clash = {q for q in chosen if set(by_id[q].ride.traveller_ids) & set(r.ride.traveller_ids)}
        if min(clash) < r.ride_id:
            continue
        freed = {t for q in clash for t in by_id[q].ride.traveller_ids} - set(r.ride.traveller_ids)
        swap = r.max_value + sum(by_id[t].max_value for t in freed) - sum(by_id[q].max_value for q in clash)
        assert swap < -1e-9


def test_exact_cover_and_baseline():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        rides = random_instance(rng, n)
        a = solve_assignment(rides, range(n))
        by_id = {r.ride_id: r for r in rides}
        covered = sorted(t for rid in a.ride_ids for t in by_id[rid].ride.traveller_ids)
        assert covered == list(range(n))
        assert a.objective == pytest.approx(sum(by_id[rid].max_value for rid in a.ride_ids))
        baseline = sum(r.max_value for r in rides if r.ride.is_private)
        assert a.objective >= baseline - 1e-9


def test_deterministic_and_order_free():
    rng = np.random.default_rng(6)
    rides = random_instance(rng, 8, ties=True)
    a = solve_assignment(rides, range(8))
    b = solve_assignment(list(reversed(rides)), range(8))
    assert a.ride_ids == b.ride_ids and a.objective == b.objective


def test_subset_of_travellers():
    rides = [priced(0, (0,), 1.0), priced(1, (1,), 1.0), priced(2, (2,), 1.0), priced(3, (0, 2), 5.0),
             priced(4, (0, 1), 9.0)]
    # traveller 1 absent: ride 4 must be ignored
    a = solve_assignment(rides, [0, 2])
    assert a.ride_ids == (3,)


def test_larger_instance_against_highs():
    """Dense 40-traveller instance checked against an independent MILP solve."""
    rng = np.random.default_rng(11)
    n = 40
    rides, rid = [], 0
    for t in range(n):
        rides.append(priced(rid, (t,), rng.uniform(0.5, 2.0)))
        rid += 1
    pos = rng.uniform(0, 1, n)
    for k in (2, 3):
        for mem in itertools.combinations(range(n), k):
            spread = np.ptp(pos[list(mem)])
            if spread < 0.12 and rng.random() < 0.6:
                base = sum(rides[t].max_value for t in mem)
                rides.append(priced(rid, mem, base + rng.uniform(-0.5, 1.5) * (k - 1)))
                rid += 1
    a = solve_assignment(rides, range(n))
    assert a.objective == pytest.approx(milp_value(rides, n), abs=1e-7)
