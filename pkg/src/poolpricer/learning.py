"""Operator-side learning: class posteriors from accept/reject decisions,
estimated satisfaction and the class estimation error."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ImpossibleObservationWarning
from .pricing import ClassBelief, acceptance_curve, expected_delta_curve, as_probs
from .shareability import CandidateRide, SharingParams


def class_likelihoods(ride: CandidateRide, i: int, lam: float, dists, p: SharingParams) -> np.ndarray:
    """P(accept | class j) for every class."""
    j = ride.index(i)
    pen = float(ride.time_penalty(p)[j])
    rho_d = p.rho * ride.private_distance[j]
    return np.array([float(acceptance_curve(lam, rho_d, pen, np.eye(len(dists))[c], dists))
                     for c in range(len(dists))])


def posterior_update(belief, ride: CandidateRide, i: int, lam: float, accepted: bool,
                     dists, p: SharingParams):
    """Bayes update of the class probabilities after one decision.

    An observation with zero probability under the current belief leaves the
    belief unchanged and emits :class:`ImpossibleObservationWarning`.
    Returns the same type as ``belief`` (ClassBelief or array).
    """
    prior = as_probs(belief)
    like = class_likelihoods(ride, i, lam, dists, p)
    if not accepted:
        like = 1.0 - like
    joint = like * prior
    evidence = joint.sum()
    if evidence <= 0:
        warnings.warn(f"traveller {i}: decision impossible under every class; belief kept",
                      ImpossibleObservationWarning, stacklevel=2)
        post = prior.copy()
    else:
        post = joint / evidence
    if isinstance(belief, ClassBelief):
        return ClassBelief(belief.traveller_id, tuple(post / post.sum()))
    return post


def expected_delta_utility(ride: CandidateRide, i: int, lam: float, belief, dists, p: SharingParams) -> float:
    j = ride.index(i)
    pen = float(ride.time_penalty(p)[j])
    return float(expected_delta_curve(lam, p.rho * ride.private_distance[j], pen, belief, dists))


def class_error(belief, true_class: int) -> float:
    return float(1.0 - as_probs(belief)[true_class])


@dataclass
class Offer:
    day: int
    ride_id: int
    discount: float
    accepted: bool
    realised: bool


@dataclass
class OperatorKnowledge:
    """Beliefs (n, J), estimated satisfactions and pooled-offer history,
    indexed by traveller position."""
    traveller_ids: list[int]
    beliefs: np.ndarray
    satisfaction: np.ndarray
    history: list[list[Offer]] = field(default_factory=list)

    @classmethod
    def initial(cls, traveller_ids, shares, s0: float = 0.0) -> "OperatorKnowledge":
        n = len(traveller_ids)
        shares = np.asarray(shares, float)
        return cls(list(traveller_ids), np.tile(shares / shares.sum(), (n, 1)),
                   np.full(n, float(s0)), [[] for _ in range(n)])

    def copy(self) -> "OperatorKnowledge":
        return OperatorKnowledge(list(self.traveller_ids), self.beliefs.copy(), self.satisfaction.copy(),
                                 [list(h) for h in self.history])

    def offers(self, idx: int) -> int:
        return len(self.history[idx])

    def to_dict(self) -> dict:
        return {
            "traveller_ids": list(self.traveller_ids),
            "beliefs": self.beliefs.tolist(),
            "satisfaction": self.satisfaction.tolist(),
            "history": [[[o.day, o.ride_id, o.discount, o.accepted, o.realised] for o in h]
                        for h in self.history],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OperatorKnowledge":
        return cls(
            [int(t) for t in data["traveller_ids"]],
            np.asarray(data["beliefs"], float),
            np.asarray(data["satisfaction"], float),
            [[Offer(int(o[0]), int(o[1]), float(o[2]), bool(o[3]), bool(o[4])) for o in h]
             for h in data["history"]],
        )

    def __eq__(self, other):
        if not isinstance(other, OperatorKnowledge):
            return NotImplemented
        return (self.traveller_ids == other.traveller_ids
                and np.array_equal(self.beliefs, other.beliefs)
                and np.array_equal(self.satisfaction, other.satisfaction)
                and self.history == other.history)


def update_estimated_satisfaction(knowledge: OperatorKnowledge, idx: int, ride: CandidateRide,
                                  lam: float, dists, p: SharingParams) -> float:
    """Add the posterior-weighted expected utility gain of the offer."""
    tid = knowledge.traveller_ids[idx]
    edu = expected_delta_utility(ride, tid, lam, knowledge.beliefs[idx], dists, p)
    knowledge.satisfaction[idx] += edu
    return float(knowledge.satisfaction[idx])
