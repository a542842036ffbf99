"""Traveller utilities and the shareability set of pooled rides.

Every subset of up to ``max_degree`` travellers is tried with every
pickup/dropoff order in which each origin precedes its own destination. A
ride is kept when some order makes it attractive to all its members at the
optimistic settings (maximal discount, the lowest class value-of-time);
among such orders the one with the largest utility gain sum wins. The
pooled route may then exceed the solo trips in length; the mileage term
of the expected profit prices that in.

Feasibility is closed under removing a traveller (times only shrink by the
triangle inequality and the sharing penalty is non-decreasing in the degree),
so candidate ``k``-subsets are built from feasible ``(k-1)``-subsets only.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .population import NetworkModel, TripRequest


@dataclass(frozen=True)
class SharingParams:
    rho: float = 1.5  # $/km
    beta_s: Mapping[int, float] = field(default_factory=lambda: {2: 1.148, 3: 1.4, 4: 2.0})
    guaranteed_discount: float = 0.05
    max_discount: float = 0.40
    max_degree: int = 3

    def __post_init__(self):
        object.__setattr__(self, "beta_s", {int(k): float(v) for k, v in dict(self.beta_s).items()})
        if not 0 <= self.guaranteed_discount <= self.max_discount < 1:
            raise InvalidInputError("need 0 <= guaranteed_discount <= max_discount < 1")
        if not 1 <= self.max_degree <= 4:
            raise InvalidInputError("max_degree must be in 1..4")
        for k in range(2, self.max_degree + 1):
            if k not in self.beta_s:
                raise InvalidInputError(f"missing sharing penalty for degree {k}")
        if any(v < 1 for v in self.beta_s.values()):
            raise InvalidInputError("sharing penalties must be >= 1")
        if self.rho < 0:
            raise InvalidInputError("rho must be >= 0")

    def penalty(self, k: int) -> float:
        return 1.0 if k == 1 else self.beta_s[k]


@dataclass(frozen=True)
class CandidateRide:
    ride_id: int
    traveller_ids: tuple[int, ...]     # members, ascending id
    sequence: tuple[int, ...]          # traveller id per event; first occurrence is the pickup
    shared_time: tuple[float, ...]     # in-vehicle time per member (h)
    pickup_delay: tuple[float, ...]    # wait from batch start to pickup (h)
    private_time: tuple[float, ...]
    private_distance: tuple[float, ...]
    distance: float                    # vehicle km of the pooled route

    @property
    def degree(self) -> int:
        return len(self.traveller_ids)

    @property
    def kind(self) -> str:
        return "private" if self.degree == 1 else "pooled"

    @property
    def is_private(self) -> bool:
        return self.degree == 1

    def index(self, traveller_id: int) -> int:
        try:
            return self.traveller_ids.index(traveller_id)
        except ValueError:
            raise InvalidInputError(f"traveller {traveller_id} not in ride {self.ride_id}") from None

    def time_penalty(self, p: SharingParams) -> np.ndarray:
        """Perceived extra time per member, beta_s*(shared + wait) - private (h)."""
        return (p.penalty(self.degree) * (np.asarray(self.shared_time) + np.asarray(self.pickup_delay))
                - np.asarray(self.private_time))


def private_ride(ride_id: int, req: TripRequest) -> CandidateRide:
    return CandidateRide(ride_id, (req.traveller_id,), (req.traveller_id, req.traveller_id),
                         (req.t,), (0.0,), (req.t,), (req.d,), req.d)


def utility_private(req: TripRequest, vot: float, p: SharingParams) -> float:
    return -p.rho * req.d - vot * req.t


def utility_shared(ride: CandidateRide, i: int, vot: float, lam: float, p: SharingParams) -> float:
    j = ride.index(i)
    return (-(1 - lam) * p.rho * ride.private_distance[j]
            - vot * p.penalty(ride.degree) * (ride.shared_time[j] + ride.pickup_delay[j]))


def delta_utility(ride: CandidateRide, i: int, vot, lam, p: SharingParams):
    """Utility gain of the pooled ride over the private one for traveller ``i``.

    Written as ``lam*rho*d - vot*penalty`` so decisions and acceptance
    probabilities use identical arithmetic. Broadcasts over ``vot``/``lam``.
    """
    j = ride.index(i)
    pen = ride.time_penalty(p)[j]
    return np.asarray(lam) * p.rho * ride.private_distance[j] - np.asarray(vot) * pen


def vot_threshold(ride: CandidateRide, i: int, lam: float, p: SharingParams) -> float:
    """Largest value-of-time that still finds the ride attractive."""
    j = ride.index(i)
    pen = ride.time_penalty(p)[j]
    if pen <= 0:
        return math.inf
    return lam * p.rho * ride.private_distance[j] / pen


@lru_cache(maxsize=None)
def sequence_templates(k: int) -> np.ndarray:
    """All event orders for ``k`` slots, each origin before its destination.

    Returns an int array (T, 2k) of slot indices; the first occurrence of a
    slot is its pickup. Rows are in lexicographic order.
    """
    events = [s for s in range(k) for _ in range(2)]
    seqs = sorted(set(itertools.permutations(events)))
    return np.array(seqs, dtype=np.int64)


def _evaluate_subsets(members: np.ndarray, O: np.ndarray, Dst: np.ndarray, t: np.ndarray,
                      d: np.ndarray, net: NetworkModel, p: SharingParams, vot: float):
    """Best feasible order for each subset row of ``members`` (m, k).

    Returns (feasible mask, template index, shared times, pickup delays, route km).
    """
    m, k = members.shape
    templates = sequence_templates(k)
    beta = p.penalty(k)
    lam = p.max_discount
    best_sum = np.full(m, -np.inf)
    best_tpl = np.full(m, -1)
    best_shared = np.zeros((m, k))
    best_wait = np.zeros((m, k))
    best_dist = np.zeros(m)
    d_mem = d[members]
    t_mem = t[members]
    gain_money = lam * p.rho * d_mem
    for ti, tpl in enumerate(templates):
        seen = np.zeros(k, bool)
        coords = []
        is_pickup = []
        for s in tpl:
            if not seen[s]:
                coords.append(O[members[:, s]])
                is_pickup.append(True)
                seen[s] = True
            else:
                coords.append(Dst[members[:, s]])
                is_pickup.append(False)
        pts = np.stack(coords, axis=1)  # (m, 2k, 2)
        legs = net.distance_array(pts[:, :-1], pts[:, 1:])
        cum = np.concatenate([np.zeros((m, 1)), np.cumsum(legs, axis=1)], axis=1)
        pick_km = np.empty((m, k))
        drop_km = np.empty((m, k))
        for e, (s, pu) in enumerate(zip(tpl, is_pickup)):
            if pu:
                pick_km[:, s] = cum[:, e]
            else:
                drop_km[:, s] = cum[:, e]
        wait = pick_km / net.speed
        shared = (drop_km - pick_km) / net.speed
        du = gain_money - vot * (beta * (shared + wait) - t_mem)
        ok = np.all(du >= 0, axis=1)
        total = du.sum(axis=1)
        better = ok & (total > best_sum)
        best_sum[better] = total[better]
        best_tpl[better] = ti
        best_shared[better] = shared[better]
        best_wait[better] = wait[better]
        best_dist[better] = cum[better, -1]
    return best_tpl >= 0, best_tpl, best_shared, best_wait, best_dist


def enumerate_shareability(requests: Sequence[TripRequest], p: SharingParams,
                           optimistic_vot: float, net: NetworkModel) -> list[CandidateRide]:
    """Private ride per traveller plus every attractive pooled ride.

    Ride ids: private rides first in request order, then pooled rides by
    degree and member ids.
    """
    if optimistic_vot < 0:
        raise InvalidInputError("optimistic_vot must be >= 0")
    reqs = sorted(requests, key=lambda r: r.traveller_id)
    ids = np.array([r.traveller_id for r in reqs])
    if len(set(ids.tolist())) != len(ids):
        raise InvalidInputError("duplicate traveller ids")
    O = np.array([r.origin for r in reqs], float).reshape(-1, 2)
    Dst = np.array([r.destination for r in reqs], float).reshape(-1, 2)
    t = np.array([r.t for r in reqs], float)
    d = np.array([r.d for r in reqs], float)
    n = len(reqs)

    rides = [private_ride(i, r) for i, r in enumerate(reqs)]
    penalties = [p.penalty(k) for k in range(1, p.max_degree + 1)]
    prune = all(a <= b for a, b in zip(penalties, penalties[1:]))
    feasible_prev: set[tuple[int, ...]] = {(i,) for i in range(n)}
    for k in range(2, p.max_degree + 1):
        if prune:
            cands = _candidate_subsets(feasible_prev, n, k)
        else:
            cands = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64).reshape(-1, k)
        if len(cands) == 0:
            if prune:
                break
            continue
        ok, tpl_idx, shared, wait, dist = _evaluate_subsets(cands, O, Dst, t, d, net, p, optimistic_vot)
        templates = sequence_templates(k)
        feasible_prev = set()
        for row in np.flatnonzero(ok):
            mem = cands[row]
            feasible_prev.add(tuple(int(x) for x in mem))
            seq = tuple(int(ids[mem[s]]) for s in templates[tpl_idx[row]])
            rides.append(CandidateRide(
                ride_id=len(rides),
                traveller_ids=tuple(int(ids[x]) for x in mem),
                sequence=seq,
                shared_time=tuple(float(v) for v in shared[row]),
                pickup_delay=tuple(float(v) for v in wait[row]),
                private_time=tuple(float(t[x]) for x in mem),
                private_distance=tuple(float(d[x]) for x in mem),
                distance=float(dist[row]),
            ))
    return rides


def _candidate_subsets(feasible_prev: set[tuple[int, ...]], n: int, k: int) -> np.ndarray:
    """Sorted k-subsets all of whose (k-1)-subsets are in ``feasible_prev``."""
    if k == 2:
        cands = list(itertools.combinations(range(n), 2))
    else:
        cands = []
        by_prefix: dict[tuple[int, ...], list[int]] = {}
        for s in sorted(feasible_prev):
            by_prefix.setdefault(s[:-1], []).append(s[-1])
        for prefix, lasts in by_prefix.items():
            for a, b in itertools.combinations(lasts, 2):
                cand = prefix + (a, b)
                if all(cand[:j] + cand[j + 1:] in feasible_prev for j in range(k - 2)):
                    cands.append(cand)
        cands.sort()
    return np.array(cands, dtype=np.int64).reshape(-1, k)
