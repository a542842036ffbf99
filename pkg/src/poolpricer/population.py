"""Trip requests, the synthetic network and behavioural (value-of-time) classes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import InvalidInputError, ParseError

Point = tuple[float, float]


@dataclass(frozen=True)
class NetworkModel:
    metric: str = "rectilinear"
    speed: float = 20.0  # km/h

    def __post_init__(self):
        if self.metric not in ("rectilinear", "euclidean"):
            raise InvalidInputError(f"unknown metric {self.metric!r}")
        if not (self.speed > 0 and math.isfinite(self.speed)):
            raise InvalidInputError("speed must be positive")

    def distance(self, a: Point, b: Point) -> float:
        if not all(math.isfinite(v) for v in (*a, *b)):
            raise InvalidInputError(f"non-finite coordinates {a} -> {b}")
        dx, dy = abs(b[0] - a[0]), abs(b[1] - a[1])
        if self.metric == "rectilinear":
            return dx + dy
        return math.hypot(dx, dy)

    def distance_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorised distance between point arrays of shape (..., 2)."""
        delta = np.abs(np.asarray(b, float) - np.asarray(a, float))
        if self.metric == "rectilinear":
            return delta[..., 0] + delta[..., 1]
        return np.hypot(delta[..., 0], delta[..., 1])


def travel_time(a: Point, b: Point, net: NetworkModel) -> float:
    """Travel time in hours between two planar points (km)."""
    return net.distance(a, b) / net.speed


@dataclass(frozen=True)
class TripRequest:
    traveller_id: int
    origin: Point
    destination: Point
    d: float  # km
    t: float  # h


def make_request(traveller_id: int, origin: Point, destination: Point,
                 net: NetworkModel) -> TripRequest:
    origin = (float(origin[0]), float(origin[1]))
    destination = (float(destination[0]), float(destination[1]))
    d = net.distance(origin, destination)
    if d <= 0:
        raise InvalidInputError(f"traveller {traveller_id}: zero-length trip")
    return TripRequest(int(traveller_id), origin, destination, d, d / net.speed)


def generate_demand(n: int, area: Sequence[float], net: NetworkModel,
                    rng: np.random.Generator) -> list[TripRequest]:
    """Sample ``n`` requests with origins and destinations uniform in
    ``area = (x0, y0, x1, y1)``. Traveller ids are ``0..n-1``."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    x0, y0, x1, y1 = map(float, area)
    if not (x1 > x0 and y1 > y0):
        raise InvalidInputError(f"degenerate area {tuple(area)}")
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    requests = []
    for i in range(n):
        while True:
            o = rng.uniform(lo, hi)
            dst = rng.uniform(lo, hi)
            if net.distance(tuple(o), tuple(dst)) > 0:
                break
        requests.append(make_request(i, tuple(o), tuple(dst), net))
    return requests


CSV_HEADER = ["traveller_id", "ox", "oy", "dx", "dy"]


def load_requests(path: str | Path, net: NetworkModel) -> list[TripRequest]:
    """Read requests from a CSV with header ``traveller_id,ox,oy,dx,dy``."""
    path = Path(path)
    requests: list[TripRequest] = []
    seen: set[int] = set()
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", line=line)
            try:
                tid = int(row[0])
                ox, oy, dx, dy = (float(c) for c in row[1:])
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            if not all(math.isfinite(v) for v in (ox, oy, dx, dy)):
                raise ParseError("non-finite coordinate", line=line)
            if tid in seen:
                raise InvalidInputError(f"duplicate traveller_id {tid} (line {line})")
            seen.add(tid)
            try:
                requests.append(make_request(tid, (ox, oy), (dx, dy), net))
            except InvalidInputError as exc:
                raise ParseError(str(exc), line=line) from None
    if not requests:
        raise ParseError("no requests in file", line=1)
    return requests


def save_requests(path: str | Path, requests: Sequence[TripRequest]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in requests:
            w.writerow([r.traveller_id, repr(r.origin[0]), repr(r.origin[1]),
                        repr(r.destination[0]), repr(r.destination[1])])


@dataclass(frozen=True)
class BehaviouralClass:
    class_id: int
    vot_mean: float  # $/h
    vot_std: float
    share: float

    def __post_init__(self):
        if self.vot_std < 0 or not math.isfinite(self.vot_std):
            raise InvalidInputError("vot_std must be >= 0")
        if not 0 <= self.share <= 1:
            raise InvalidInputError("share must be a probability")


# mean, std, share of the four value-of-time classes used in the experiments
DEFAULT_CLASSES = (
    BehaviouralClass(0, 16.98, 0.318, 0.29),
    BehaviouralClass(1, 14.02, 0.201, 0.28),
    BehaviouralClass(2, 26.25, 5.777, 0.24),
    BehaviouralClass(3, 7.78, 1.0, 0.19),
)


def check_shares(classes: Sequence[BehaviouralClass]) -> None:
    total = math.fsum(c.share for c in classes)
    if not classes or abs(total - 1.0) > 1e-12:
        raise InvalidInputError(f"class shares sum to {total}, expected 1")


@dataclass(frozen=True)
class DiscreteVotDistribution:
    support: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        s = np.asarray(self.support)
        w = np.asarray(self.weights)
        if len(s) == 0 or len(s) != len(w):
            raise InvalidInputError("support and weights must be non-empty and aligned")
        if np.any(np.diff(s) <= 0) or np.any(s < 0):
            raise InvalidInputError("support must be strictly ascending and non-negative")
        if np.any(w < 0) or abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise InvalidInputError("weights must be a probability vector")

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.weights))

    def cdf(self, x: float) -> float:
        return float(np.sum(np.asarray(self.weights)[np.asarray(self.support) <= x]))


def truncated_mean(c: BehaviouralClass) -> float:
    """Mean of normal(vot_mean, vot_std) truncated to [0, inf)."""
    if c.vot_std == 0:
        return c.vot_mean
    alpha = -c.vot_mean / c.vot_std
    return c.vot_mean + c.vot_std * norm.pdf(alpha) / norm.sf(alpha)


def discretize_class(c: BehaviouralClass, K: int = 20) -> DiscreteVotDistribution:
    """Represent the class by ``K`` equal-probability quantile bins of the
    zero-truncated normal, each collapsed to its conditional mean."""
    if K < 2:
        raise InvalidInputError("K must be >= 2")
    if c.vot_std == 0:
        if c.vot_mean < 0:
            raise InvalidInputError("degenerate class with negative value-of-time")
        return DiscreteVotDistribution((float(c.vot_mean),), (1.0,))
    mu, sigma = c.vot_mean, c.vot_std
    # work in survival space on the upper tail for accuracy
    a = norm.cdf(-mu / sigma)
    probs = a + (1 - a) * np.arange(K + 1) / K
    z = norm.ppf(probs)
    z[0] = -mu / sigma
    z[-1] = np.inf
    pdf = norm.pdf(z)
    mass = (1 - a) / K
    support = mu + sigma * (pdf[:-1] - pdf[1:]) / mass
    support = np.maximum(support, 0.0)
    return DiscreteVotDistribution(tuple(float(v) for v in support), (1.0 / K,) * K)


@dataclass(frozen=True)
class SupportGrid:
    """All class support points stacked into flat arrays."""
    points: np.ndarray
    class_index: np.ndarray
    weights: np.ndarray
    n_classes: int
    class_means: np.ndarray = field(repr=False)

    def point_weights(self, probs: np.ndarray) -> np.ndarray:
        """Mixture weight of every support point for class probabilities
        ``probs`` (shape (J,) or (n, J))."""
        probs = np.asarray(probs, float)
        return probs[..., self.class_index] * self.weights


@lru_cache(maxsize=64)
def support_grid(dists: tuple[DiscreteVotDistribution, ...]) -> SupportGrid:
    points = np.concatenate([np.asarray(d.support, float) for d in dists])
    cls = np.concatenate([np.full(len(d.support), j) for j, d in enumerate(dists)])
    weights = np.concatenate([np.asarray(d.weights, float) for d in dists])
    means = np.array([d.mean for d in dists])
    for arr in (points, cls, weights, means):
        arr.setflags(write=False)
    return SupportGrid(points, cls, weights, len(dists), means)


@dataclass
class TravellerGroundTruth:
    traveller_id: int
    true_class: int
    satisfaction: float = 0.0


def sample_population(classes: Sequence[BehaviouralClass],
                      requests: Sequence[TripRequest], rng: np.random.Generator,
                      initial_satisfaction: float = 0.0) -> list[TravellerGroundTruth]:
    """Draw each traveller's latent class with probability equal to its share."""
    check_shares(classes)
    shares = np.array([c.share for c in classes], float)
    idx = rng.choice(len(classes), size=len(requests), p=shares / shares.sum())
    return [TravellerGroundTruth(r.traveller_id, classes[j].class_id, float(initial_satisfaction))
            for r, j in zip(requests, idx)]


def sample_vot(c: BehaviouralClass, rng: np.random.Generator) -> float:
    """One value-of-time draw from the zero-truncated class normal."""
    if c.vot_std == 0:
        return float(c.vot_mean)
    while True:
        v = rng.normal(c.vot_mean, c.vot_std)
        if v >= 0:
            return float(v)


def sample_vot_discrete(dist: DiscreteVotDistribution, u: float) -> float:
    """Inverse-CDF draw from a discretised class for a uniform ``u`` in [0, 1)."""
    cum = np.cumsum(dist.weights)
    k = int(np.searchsorted(cum, u, side="right"))
    return float(dist.support[min(k, len(dist.support) - 1)])
