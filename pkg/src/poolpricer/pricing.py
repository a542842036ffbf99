"""Acceptance probabilities, expected profit, attraction value and the
per-ride discount search."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .population import DiscreteVotDistribution, TripRequest, support_grid
from .shareability import CandidateRide, SharingParams


@dataclass(frozen=True)
class ProfitParams:
    zeta: float = 0.5     # $/km
    upkeep: float = 1.0   # $/vehicle
    beta_f: float = 1.0

    def __post_init__(self):
        if self.zeta < 0 or self.upkeep < 0 or self.beta_f < 0:
            raise InvalidInputError("zeta, upkeep and beta_f must be >= 0")


@dataclass(frozen=True)
class ClassBelief:
    traveller_id: int
    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(v) for v in self.probs)
        object.__setattr__(self, "probs", probs)
        if any(v < 0 for v in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise InvalidInputError(f"belief of traveller {self.traveller_id} is not a probability vector")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs)


@dataclass(frozen=True)
class PricedRide:
    ride: CandidateRide
    discounts: tuple[float, ...]
    expected_profit: float
    attraction: float
    objective: float
    acceptance: tuple[float, ...]
    negative_increment: bool = False  # some member's participation is expected to drop

    @property
    def ride_id(self) -> int:
        return self.ride.ride_id

    @property
    def max_value(self) -> float:
        return self.objective


def as_probs(belief) -> np.ndarray:
    if isinstance(belief, ClassBelief):
        return belief.as_array()
    return np.asarray(belief, float)


def _dists(dists) -> tuple[DiscreteVotDistribution, ...]:
    return tuple(dists)


def acceptance_curve(lams, rho_d: float, penalty: float, probs, dists) -> np.ndarray:
    """Mixture probability that ``lam*rho*d - vot*penalty >= 0`` for each lam."""
    grid = support_grid(_dists(dists))
    w = grid.point_weights(as_probs(probs))
    lams = np.asarray(lams, float)
    ok = (lams[..., None] * rho_d - grid.points * penalty) >= 0
    return np.clip(ok @ w, 0.0, 1.0)


def acceptance_probability(ride: CandidateRide, i: int, lam: float, belief, dists,
                           p: SharingParams) -> float:
    j = ride.index(i)
    pen = float(ride.time_penalty(p)[j])
    return float(acceptance_curve(lam, p.rho * ride.private_distance[j], pen, belief, dists))


def private_expected_profit(req: TripRequest | CandidateRide, p: SharingParams, pp: ProfitParams) -> float:
    d = req.d if isinstance(req, TripRequest) else req.private_distance[0]
    return p.rho * (1 - p.guaranteed_discount) * d - pp.zeta * d - pp.upkeep


def _check_dims(ride: CandidateRide, *vectors) -> None:
    for v in vectors:
        if len(v) != ride.degree:
            raise InvalidInputError(f"expected {ride.degree} entries, got {len(v)}")


def expected_revenue(ride: CandidateRide, lam, acc, p: SharingParams) -> float:
    """Unanimous acceptance pays the offered discounts; otherwise acceptors
    get the guaranteed discount and rejectors pay the full fare."""
    _check_dims(ride, lam, acc)
    d = np.asarray(ride.private_distance)
    lam = np.asarray(lam, float)
    acc = np.asarray(acc, float)
    p_all = np.prod(acc)
    shared = p_all * np.sum(p.rho * (1 - lam) * d)
    # sum over every outcome of the private-fallback payments, minus the unanimous one
    fallback = np.sum(p.rho * d * (1 - acc * p.guaranteed_discount))
    fallback -= p_all * p.rho * (1 - p.guaranteed_discount) * d.sum()
    return float(shared + fallback)


def expected_mileage(ride: CandidateRide, lam, acc) -> float:
    _check_dims(ride, acc)
    p_all = float(np.prod(acc))
    return p_all * ride.distance + (1 - p_all) * sum(ride.private_distance)


def expected_vehicles(ride: CandidateRide, lam, acc) -> float:
    _check_dims(ride, acc)
    p_all = float(np.prod(acc))
    return p_all + ride.degree * (1 - p_all)


def profit_from_probabilities(ride: CandidateRide, lam, acc, p: SharingParams, pp: ProfitParams) -> float:
    return (expected_revenue(ride, lam, acc, p) - pp.zeta * expected_mileage(ride, lam, acc)
            - pp.upkeep * expected_vehicles(ride, lam, acc))


def ride_acceptance(ride: CandidateRide, lam, beliefs, dists, p: SharingParams) -> np.ndarray:
    _check_dims(ride, lam, beliefs)
    if ride.is_private:
        return np.ones(1)
    pen = ride.time_penalty(p)
    return np.array([
        float(acceptance_curve(lam[j], p.rho * ride.private_distance[j], pen[j], beliefs[j], dists))
        for j in range(ride.degree)
    ])


def expected_profit(ride: CandidateRide, lam, beliefs, dists, p: SharingParams, pp: ProfitParams) -> float:
    acc = ride_acceptance(ride, lam, beliefs, dists, p)
    return profit_from_probabilities(ride, lam, acc, p, pp)


def outcome_profit(ride: CandidateRide, lam, decisions, p: SharingParams, pp: ProfitParams) -> float:
    """Realised profit of one accept/reject vector."""
    d = np.asarray(ride.private_distance)
    x = np.asarray(decisions, bool)
    if ride.is_private:
        return private_expected_profit(ride, p, pp)
    if x.all():
        rev = np.sum(p.rho * (1 - np.asarray(lam, float)) * d)
        return float(rev - pp.zeta * ride.distance - pp.upkeep)
    rev = np.sum(np.where(x, p.rho * (1 - p.guaranteed_discount) * d, p.rho * d))
    return float(rev - pp.zeta * d.sum() - pp.upkeep * ride.degree)


def sigmoid(s):
    return 1.0 / (1.0 + np.exp(-np.asarray(s, float)))


def participation_probability(s: float) -> float:
    return float(sigmoid(s))


def probability_increment(s_now, expected_du):
    """Change in participation probability when satisfaction moves by the
    expected utility gain."""
    out = sigmoid(np.asarray(s_now) + np.asarray(expected_du)) - sigmoid(s_now)
    return float(out) if np.ndim(out) == 0 else out


def expected_delta_curve(lams, rho_d: float, penalty: float, probs, dists) -> np.ndarray:
    grid = support_grid(_dists(dists))
    mean_vot = float(np.dot(as_probs(probs), grid.class_means))
    return np.asarray(lams, float) * rho_d - mean_vot * penalty


def _attraction_terms(gamma, acc, dps, g_priv):
    """F = (prod dp) * Gamma + sum_i dp_i * Gamma_i * (1 - prod_{j != i} p_j)."""
    k = len(acc)
    f_shared = np.prod(np.broadcast_arrays(*dps), axis=0) * gamma if k else 0.0
    f_priv = 0.0
    for i in range(k):
        others = [acc[j] for j in range(k) if j != i]
        rest = np.prod(np.broadcast_arrays(*others), axis=0) if others else 1.0
        f_priv = f_priv + dps[i] * g_priv[i] * (1 - rest)
    return f_shared + f_priv


def _objective(ride: CandidateRide, lams, accs, dps, p: SharingParams, pp: ProfitParams):
    """Vectorised (Gamma, F, Upsilon) over broadcastable per-member arrays."""
    d = ride.private_distance
    k = ride.degree
    lh = p.guaranteed_discount
    p_all = np.prod(np.broadcast_arrays(*accs), axis=0)
    shared_rev = sum(p.rho * (1 - lams[i]) * d[i] for i in range(k))
    fallback = sum(p.rho * d[i] * (1 - accs[i] * lh) for i in range(k))
    fallback = fallback - p_all * p.rho * (1 - lh) * sum(d)
    revenue = p_all * shared_rev + fallback
    mileage = p_all * ride.distance + (1 - p_all) * sum(d)
    vehicles = p_all + k * (1 - p_all)
    gamma = revenue - pp.zeta * mileage - pp.upkeep * vehicles
    g_priv = [p.rho * (1 - lh) * d[i] - pp.zeta * d[i] - pp.upkeep for i in range(k)]
    f = _attraction_terms(gamma, accs, dps, g_priv)
    return gamma, f, gamma + pp.beta_f * f


def _member_curves(ride: CandidateRide, j: int, lams, belief, s_est, dists, p: SharingParams):
    rho_d = p.rho * ride.private_distance[j]
    pen = float(ride.time_penalty(p)[j])
    acc = acceptance_curve(lams, rho_d, pen, belief, dists)
    edu = expected_delta_curve(lams, rho_d, pen, belief, dists)
    dp = sigmoid(s_est + edu) - sigmoid(s_est)
    return acc, dp


def attraction_value(ride: CandidateRide, lam, beliefs, satisfactions, dists,
                     p: SharingParams, pp: ProfitParams) -> float:
    _check_dims(ride, lam, beliefs, satisfactions)
    if ride.is_private:
        return 0.0
    curves = [_member_curves(ride, j, lam[j], beliefs[j], satisfactions[j], dists, p) for j in range(ride.degree)]
    gamma, f, _ = _objective(ride, list(map(float, lam)), [c[0] for c in curves], [c[1] for c in curves], p, pp)
    return float(f)


def local_objective(ride: CandidateRide, lam, beliefs, satisfactions, dists,
                    p: SharingParams, pp: ProfitParams) -> float:
    _check_dims(ride, lam, beliefs, satisfactions)
    if ride.is_private:
        return private_expected_profit(ride, p, pp)
    curves = [_member_curves(ride, j, lam[j], beliefs[j], satisfactions[j], dists, p) for j in range(ride.degree)]
    _, _, ups = _objective(ride, list(map(float, lam)), [c[0] for c in curves], [c[1] for c in curves], p, pp)
    return float(ups)


def candidate_discounts(ride: CandidateRide, j: int, belief, dists, p: SharingParams,
                        epsilon: float = 1e-9) -> np.ndarray:
    """Discounts at which member ``j``'s acceptance probability can change,
    shifted by ``epsilon`` past the jump, plus both interval endpoints."""
    lo, hi = p.guaranteed_discount, p.max_discount
    pen = float(ride.time_penalty(p)[j])
    rho_d = p.rho * ride.private_distance[j]
    cands = [lo, hi]
    if pen > 0 and rho_d > 0:
        grid = support_grid(_dists(dists))
        w = grid.point_weights(as_probs(belief))
        pts = grid.points[w > 0]
        cands.extend(np.clip(pts * pen / rho_d + epsilon, lo, hi).tolist())
    return np.unique(np.asarray(cands, float))


def _price(ride, lam, acc, gamma, f, ups, dps) -> PricedRide:
    return PricedRide(ride, tuple(float(v) for v in lam), float(gamma), float(f), float(ups),
                      tuple(float(v) for v in acc), bool(np.any(np.asarray(dps) < 0)))


def price_private(ride: CandidateRide, p: SharingParams, pp: ProfitParams) -> PricedRide:
    g = private_expected_profit(ride, p, pp)
    return PricedRide(ride, (p.guaranteed_discount,), g, 0.0, g, (1.0,))


def price_at(ride: CandidateRide, lam, beliefs, satisfactions, dists,
             p: SharingParams, pp: ProfitParams) -> PricedRide:
    """Evaluate a ride at a fixed discount vector."""
    if ride.is_private:
        return price_private(ride, p, pp)
    curves = [_member_curves(ride, j, lam[j], beliefs[j], satisfactions[j], dists, p) for j in range(ride.degree)]
    accs = [float(c[0]) for c in curves]
    dps = [float(c[1]) for c in curves]
    gamma, f, ups = _objective(ride, [float(v) for v in lam], accs, dps, p, pp)
    return _price(ride, lam, accs, gamma, f, ups, dps)


def optimize_discounts(ride: CandidateRide, beliefs, satisfactions, dists, p: SharingParams,
                       pp: ProfitParams, epsilon: float = 1e-9) -> PricedRide:
    """Best discount vector over the per-member candidate sets.

    Degree <= 2 is searched exhaustively; larger rides use coordinate ascent
    from the all-minimum, all-maximum and per-member median starts.
    Ties go to the lexicographically smallest discount vector.
    """
    if ride.is_private:
        return price_private(ride, p, pp)
    _check_dims(ride, beliefs, satisfactions)
    k = ride.degree
    cands, accs, dps = [], [], []
    for j in range(k):
        c = candidate_discounts(ride, j, beliefs[j], dists, p, epsilon)
        a, dp = _member_curves(ride, j, c, beliefs[j], satisfactions[j], dists, p)
        cands.append(c)
        accs.append(a)
        dps.append(dp)

    if k <= 2:
        shape = [1] * k
        lams_b, accs_b, dps_b = [], [], []
        for j in range(k):
            sh = list(shape)
            sh[j] = len(cands[j])
            lams_b.append(cands[j].reshape(sh))
            accs_b.append(accs[j].reshape(sh))
            dps_b.append(dps[j].reshape(sh))
        _, _, ups = _objective(ride, lams_b, accs_b, dps_b, p, pp)
        ups = np.broadcast_to(ups, [len(c) for c in cands])
        best = np.unravel_index(int(np.argmax(ups)), ups.shape)
    else:
        best = _coordinate_ascent(ride, cands, accs, dps, p, pp)

    lam = [cands[j][best[j]] for j in range(k)]
    acc = [accs[j][best[j]] for j in range(k)]
    dp = [dps[j][best[j]] for j in range(k)]
    gamma, f, ups = _objective(ride, lam, acc, dp, p, pp)
    return _price(ride, lam, acc, gamma, f, ups, dp)


def _coordinate_ascent(ride, cands, accs, dps, p, pp, tol: float = 1e-12):
    k = len(cands)

    def value(idx):
        return float(_objective(ride, [cands[j][idx[j]] for j in range(k)],
                                [accs[j][idx[j]] for j in range(k)],
                                [dps[j][idx[j]] for j in range(k)], p, pp)[2])

    starts = [
        [0] * k,
        [len(c) - 1 for c in cands],
        [len(c) // 2 for c in cands],
    ]
    best_idx, best_val = None, -np.inf
    for start in starts:
        idx = list(start)
        cur = value(idx)
        improved = True
        while improved:
            improved = False
            for j in range(k):
                lams = [cands[m][idx[m]] for m in range(k)]
                acc = [accs[m][idx[m]] for m in range(k)]
                dp = [dps[m][idx[m]] for m in range(k)]
                lams[j], acc[j], dp[j] = cands[j], accs[j], dps[j]
                line = np.broadcast_to(_objective(ride, lams, acc, dp, p, pp)[2], cands[j].shape)
                a = int(np.argmax(line))
                if line[a] > cur + tol:
                    idx[j] = a
                    cur = float(line[a])
                    improved = True
        if cur > best_val + tol:
            best_idx, best_val = list(idx), cur
    return best_idx
