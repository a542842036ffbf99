"""Multi-day simulation of the adaptive pricing policy.

The framework side holds latent classes, actual satisfaction and sampled
decisions; the operator side only sees decisions and updates its
:class:`~poolpricer.learning.OperatorKnowledge`.

Randomness comes from one master seed split into per-purpose, per-day
streams, so scenarios run on the same seed see the same ground truth.
"""
from __future__ import annotations

import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig
from .learning import OperatorKnowledge, Offer, class_error, posterior_update, update_estimated_satisfaction
from .matching import Assignment, solve_assignment
from .population import (DiscreteVotDistribution, TravellerGroundTruth, TripRequest, discretize_class,
                         generate_demand, load_requests, sample_population, sample_vot, sample_vot_discrete)
from .pricing import (PricedRide, optimize_discounts, outcome_profit, price_at, price_private,
                      ride_acceptance, sigmoid)
from .shareability import CandidateRide, delta_utility, enumerate_shareability

POPULATION, DEMAND, PARTICIPATION, VOT = range(4)

HIST_EDGES = np.round(np.arange(0.0, 1.0001, 0.05), 10)


def stream(seed: int, purpose: int, day: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(purpose, day)))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "adaptive"
    policy: str = "adaptive"          # adaptive | flat
    flat_discount: float = 0.20
    beta_f: float | None = None       # None: take the run config value
    belief_source: str = "population_prior"   # population_prior | snapshot
    demand_source: str = "day1"               # day1 | snapshot

    def __post_init__(self):
        if self.policy == "flat" and not 0 <= self.flat_discount < 1:
            raise ValueError("flat_discount must be in [0, 1)")


@dataclass
class DayMetrics:
    day: int
    joined: int = 0
    offered_pooled_fraction: float = 0.0
    pooled_rides_offered: int = 0
    ride_acceptance_rate: float = 0.0
    traveller_acceptance_rate: float = 0.0
    expected_profit: float = 0.0
    profit_variance: float = 0.0
    realised_profit: float = 0.0
    operator_expected_profit: float = 0.0
    objective: float = 0.0
    realised_occupancy: float = 0.0
    distance_saved: float = 0.0
    vehicle_km: float = 0.0
    mean_satisfaction: float = 0.0
    mean_estimated_satisfaction: float = 0.0
    mean_participation: float = 0.0
    mean_estimated_participation: float = 0.0
    participation_gain: float = 0.0
    mean_class_error: float = 0.0
    shareability_size: int = 0
    negative_increment_rides: int = 0
    solver_nodes: int = 0
    hist_shareability: list[int] = field(default_factory=lambda: [0] * (len(HIST_EDGES) - 1))
    hist_offered: list[int] = field(default_factory=lambda: [0] * (len(HIST_EDGES) - 1))

    @property
    def profit_std(self) -> float:
        return float(np.sqrt(max(self.profit_variance, 0.0)))

    @property
    def profit_cv(self) -> float:
        return self.profit_std / self.expected_profit if self.expected_profit else 0.0

    def row(self) -> dict:
        d = asdict(self)
        d.pop("hist_shareability")
        d.pop("hist_offered")
        return d


@dataclass
class World:
    """Immutable ground truth shared by every scenario of one seed."""
    config: RunConfig
    requests: list[TripRequest]
    truth: list[TravellerGroundTruth]
    dists: tuple[DiscreteVotDistribution, ...]
    rides: list[CandidateRide]

    def __post_init__(self):
        self.ids = [r.traveller_id for r in self.requests]
        self.index = {t: i for i, t in enumerate(self.ids)}
        pos = {c.class_id: j for j, c in enumerate(self.config.classes)}
        self.true_class = np.array([pos[g.true_class] for g in self.truth])
        self.member_idx = [np.array([self.index[t] for t in r.traveller_ids]) for r in self.rides]

    @property
    def n(self) -> int:
        return len(self.requests)

    @property
    def shares(self) -> np.ndarray:
        return np.array([c.share for c in self.config.classes])


def build_world(cfg: RunConfig) -> World:
    if cfg.demand_csv:
        requests = load_requests(cfg.demand_csv, cfg.network)
    else:
        requests = generate_demand(cfg.demand_n, cfg.demand_area, cfg.network, stream(cfg.demand_seed, DEMAND))
    requests = sorted(requests, key=lambda r: r.traveller_id)
    truth = sample_population(cfg.classes, requests, stream(cfg.seed, POPULATION), cfg.initial_satisfaction)
    dists = tuple(discretize_class(c, cfg.support_points) for c in cfg.classes)
    rides = enumerate_shareability(requests, cfg.sharing, cfg.optimistic_vot, cfg.network)
    return World(cfg, requests, truth, dists, rides)


@dataclass
class SimState:
    satisfaction: np.ndarray          # actual, latent to the operator
    knowledge: OperatorKnowledge
    day: int = 0

    def copy(self) -> "SimState":
        return SimState(self.satisfaction.copy(), self.knowledge.copy(), self.day)


def initial_state(world: World) -> SimState:
    s0 = world.config.initial_satisfaction
    return SimState(np.full(world.n, s0), OperatorKnowledge.initial(world.ids, world.shares, s0))


def realisation_uniforms(world: World, day: int) -> np.ndarray:
    return stream(world.config.seed, VOT, day).random(world.n)


def draw_vot(world: World, idx: int, u: float, rng: np.random.Generator | None = None) -> float:
    cls = world.true_class[idx]
    if world.config.vot_realisation == "discrete":
        return sample_vot_discrete(world.dists[cls], u)
    return sample_vot(world.config.classes[cls], rng)


def update_actual_satisfaction(s: float, accepted: bool, realised: bool, du: float) -> float:
    """Experienced pooled ride or rejection moves satisfaction by the utility
    gain; an accepted ride that fell through leaves it unchanged."""
    if accepted and realised:
        return s + du
    if not accepted:
        return s + du
    return s


def profit_moments(offered: Sequence[PricedRide], world: World) -> tuple[float, float]:
    """Mean and variance of the day's profit under the actual classes.

    Each pooled ride's 2^k decision vectors are enumerated; rides are independent.
    """
    cfg = world.config
    mean = var = 0.0
    eye = np.eye(len(world.dists))
    for pr in offered:
        ride = pr.ride
        if ride.is_private:
            mean += outcome_profit(ride, pr.discounts, [True], cfg.sharing, cfg.profit)
            continue
        cls = [world.true_class[world.index[t]] for t in ride.traveller_ids]
        acc = ride_acceptance(ride, pr.discounts, [eye[c] for c in cls], world.dists, cfg.sharing)
        m1 = m2 = 0.0
        for x in itertools.product((True, False), repeat=ride.degree):
            prob = float(np.prod(np.where(x, acc, 1 - acc)))
            if prob == 0:
                continue
            v = outcome_profit(ride, pr.discounts, x, cfg.sharing, cfg.profit)
            m1 += prob * v
            m2 += prob * v * v
        mean += m1
        var += max(m2 - m1 * m1, 0.0)
    return mean, var


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("POOLPRICER_THREADS", "1")))
    except ValueError:
        return 1


def price_rides(world: World, rides: Sequence[CandidateRide], beliefs: np.ndarray, est_sat: np.ndarray,
                scenario: ScenarioConfig) -> list[PricedRide]:
    cfg = world.config
    pp = cfg.profit
    if scenario.beta_f is not None:
        pp = type(pp)(pp.zeta, pp.upkeep, scenario.beta_f)
    prior = world.shares

    def one(ride: CandidateRide) -> PricedRide:
        if ride.is_private:
            return price_private(ride, cfg.sharing, pp)
        idx = world.member_idx[ride.ride_id]
        if scenario.policy == "flat":
            flat_pp = type(pp)(pp.zeta, pp.upkeep, 0.0)
            lam = [scenario.flat_discount] * ride.degree
            return price_at(ride, lam, [prior] * ride.degree, [0.0] * ride.degree, world.dists,
                            cfg.sharing, flat_pp)
        return optimize_discounts(ride, list(beliefs[idx]), list(est_sat[idx]), world.dists,
                                  cfg.sharing, pp, cfg.epsilon)

    threads = _threads()
    if threads > 1 and len(rides) > 64:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, rides))
    return [one(r) for r in rides]


def _hist(values) -> list[int]:
    if len(values) == 0:
        return [0] * (len(HIST_EDGES) - 1)
    counts, _ = np.histogram(np.clip(values, 0, 1), bins=HIST_EDGES)
    return counts.astype(int).tolist()


def run_day(world: World, state: SimState, scenario: ScenarioConfig, day: int | None = None,
            joined: np.ndarray | None = None, vot_day: int | None = None,
            learn: bool = True) -> tuple[DayMetrics, Assignment | None]:
    """Advance ``state`` by one day in place and return the day's metrics.

    ``joined`` overrides participation sampling (matched-demand scenarios);
    ``vot_day`` selects which day's value-of-time realisations are used.
    """
    cfg = world.config
    p, pp = cfg.sharing, cfg.profit
    day = state.day if day is None else day
    vot_day = day if vot_day is None else vot_day
    kn = state.knowledge
    n = world.n

    if joined is None:
        u = stream(cfg.seed, PARTICIPATION, day).random(n)
        joined = u < sigmoid(state.satisfaction)
    joined = np.asarray(joined, bool)
    metrics = DayMetrics(day=day)
    if not joined.any():
        _fill_population_metrics(metrics, world, state)
        state.day = day + 1
        return metrics, None

    beliefs = kn.beliefs.copy() if scenario.policy == "adaptive" else np.tile(world.shares, (n, 1))
    est_sat = kn.satisfaction.copy()
    rides = [r for r, idx in zip(world.rides, world.member_idx) if joined[idx].all()]
    priced = price_rides(world, rides, beliefs, est_sat, scenario)
    joined_ids = [world.ids[i] for i in np.flatnonzero(joined)]
    assignment = solve_assignment(priced, joined_ids)
    by_id = {pr.ride_id: pr for pr in priced}
    offered = [by_id[r] for r in assignment.ride_ids]

    exp_mean, exp_var = profit_moments(offered, world)
    uvot = realisation_uniforms(world, vot_day)
    vot_rng = stream(cfg.seed, VOT + 100, vot_day)
    s_before = state.satisfaction.copy()

    realised_profit = 0.0
    vehicle_km = 0.0
    served_km = 0.0
    vehicles = 0
    served = 0
    pooled_offered = pooled_realised = 0
    trav_offered = trav_accepted = 0
    updates = []
    for pr in offered:
        ride = pr.ride
        idx = world.member_idx[ride.ride_id]
        served += ride.degree
        served_km += sum(ride.private_distance)
        if ride.is_private:
            realised_profit += outcome_profit(ride, pr.discounts, [True], p, pp)
            vehicle_km += ride.distance
            vehicles += 1
            continue
        pooled_offered += 1
        b = np.array([draw_vot(world, i, uvot[i], vot_rng) for i in idx])
        du = np.array([float(delta_utility(ride, t, b[j], pr.discounts[j], p))
                       for j, t in enumerate(ride.traveller_ids)])
        accepted = du >= 0
        realised = bool(accepted.all())
        trav_offered += ride.degree
        trav_accepted += int(accepted.sum())
        pooled_realised += realised
        realised_profit += outcome_profit(ride, pr.discounts, accepted, p, pp)
        if realised:
            vehicle_km += ride.distance
            vehicles += 1
        else:
            vehicle_km += sum(ride.private_distance)
            vehicles += ride.degree
        for j, i in enumerate(idx):
            state.satisfaction[i] = update_actual_satisfaction(state.satisfaction[i], bool(accepted[j]),
                                                               realised, float(du[j]))
            updates.append((i, ride, j, bool(accepted[j]), realised))

    # operator learning, committed after all decisions are known
    if learn:
        for i, ride, j, acc, realised in updates:
            lam = by_id[ride.ride_id].discounts[j]
            kn.beliefs[i] = posterior_update(kn.beliefs[i], ride, world.ids[i], lam, acc, world.dists, p)
            if cfg.update_on_failed_ride or not (acc and not realised):
                update_estimated_satisfaction(kn, i, ride, lam, world.dists, p)
            kn.history[i].append(Offer(day, ride.ride_id, float(lam), acc, realised))

    metrics.joined = int(joined.sum())
    metrics.pooled_rides_offered = pooled_offered
    metrics.offered_pooled_fraction = trav_offered / metrics.joined
    metrics.ride_acceptance_rate = pooled_realised / pooled_offered if pooled_offered else 0.0
    metrics.traveller_acceptance_rate = trav_accepted / trav_offered if trav_offered else 0.0
    metrics.expected_profit = exp_mean
    metrics.profit_variance = exp_var
    metrics.realised_profit = realised_profit
    metrics.operator_expected_profit = float(sum(pr.expected_profit for pr in offered))
    metrics.objective = assignment.objective
    metrics.vehicle_km = vehicle_km
    metrics.distance_saved = served_km - vehicle_km
    metrics.realised_occupancy = served_km / vehicle_km if vehicle_km > 0 else 0.0
    jidx = np.flatnonzero(joined)
    s0 = cfg.initial_satisfaction
    metrics.participation_gain = float(np.mean(sigmoid(state.satisfaction[jidx]) - sigmoid(s0)))
    metrics.shareability_size = sum(1 for r in rides if not r.is_private)
    metrics.negative_increment_rides = sum(1 for pr in priced if pr.negative_increment)
    metrics.solver_nodes = assignment.nodes
    metrics.hist_shareability = _hist([lam for pr in priced if not pr.ride.is_private for lam in pr.discounts])
    metrics.hist_offered = _hist([lam for pr in offered if not pr.ride.is_private for lam in pr.discounts])
    _fill_population_metrics(metrics, world, state)
    state.day = day + 1
    return metrics, assignment


def _fill_population_metrics(m: DayMetrics, world: World, state: SimState) -> None:
    kn = state.knowledge
    m.mean_satisfaction = float(state.satisfaction.mean())
    m.mean_estimated_satisfaction = float(kn.satisfaction.mean())
    m.mean_participation = float(sigmoid(state.satisfaction).mean())
    m.mean_estimated_participation = float(sigmoid(kn.satisfaction).mean())
    m.mean_class_error = float(np.mean(class_errors(world, kn)))


def class_errors(world: World, kn: OperatorKnowledge) -> np.ndarray:
    return np.array([class_error(kn.beliefs[i], world.true_class[i]) for i in range(world.n)])


@dataclass
class HorizonResult:
    world: World
    metrics: list[DayMetrics]
    state: SimState
    joined: list[np.ndarray]                 # participation mask per day
    satisfaction_at_start: list[np.ndarray]  # actual satisfaction before each day
    class_error_by_day: list[np.ndarray]     # per-traveller error after each day
    offers_by_day: list[np.ndarray]          # cumulative pooled offers per traveller after each day


def run_horizon(cfg: RunConfig, world: World | None = None,
                scenario: ScenarioConfig | None = None) -> HorizonResult:
    world = world or build_world(cfg)
    scenario = scenario or ScenarioConfig(policy=cfg.policy, flat_discount=cfg.flat_discount)
    state = initial_state(world)
    res = HorizonResult(world, [], state, [], [], [], [])
    for day in range(cfg.days):
        res.satisfaction_at_start.append(state.satisfaction.copy())
        joined = stream(cfg.seed, PARTICIPATION, day).random(world.n) < sigmoid(state.satisfaction)
        m, _ = run_day(world, state, scenario, day=day, joined=joined)
        res.metrics.append(m)
        res.joined.append(joined)
        res.class_error_by_day.append(class_errors(world, state.knowledge))
        res.offers_by_day.append(np.array([state.knowledge.offers(i) for i in range(world.n)]))
    return res


# ablation scenarios on matched ground truth
SCENARIOS = {
    "flat": ScenarioConfig("flat", policy="flat", flat_discount=0.20),
    "adaptive_day1": ScenarioConfig("adaptive_day1", beta_f=None),
    "knowledgeable": ScenarioConfig("knowledgeable", belief_source="snapshot"),
    "knowledgeable_no_attraction": ScenarioConfig("knowledgeable_no_attraction", beta_f=0.0,
                                                  belief_source="snapshot"),
    "acquired_demand": ScenarioConfig("acquired_demand", belief_source="snapshot", demand_source="snapshot"),
}

SCENARIO_LABELS = {
    "flat": "Flat pricing",
    "adaptive_day1": "Adaptive, 1st day",
    "knowledgeable": "Adaptive, knowledgeable",
    "knowledgeable_no_attraction": "Adaptive, knowledgeable, no attraction",
    "acquired_demand": "Adaptive, acquired demand",
}


@dataclass
class Snapshot:
    """End-of-horizon state consumed by knowledgeable/acquired-demand scenarios."""
    day: int
    knowledge: OperatorKnowledge
    satisfaction: np.ndarray           # actual, at the start of the last simulated day
    joined: np.ndarray                 # participation on the last simulated day
    final_satisfaction: np.ndarray

    def to_dict(self) -> dict:
        return {
            "day": self.day,
            "knowledge": self.knowledge.to_dict(),
            "satisfaction": self.satisfaction.tolist(),
            "joined": [bool(v) for v in self.joined],
            "final_satisfaction": self.final_satisfaction.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Snapshot":
        return cls(int(data["day"]), OperatorKnowledge.from_dict(data["knowledge"]),
                   np.asarray(data["satisfaction"], float), np.asarray(data["joined"], bool),
                   np.asarray(data["final_satisfaction"], float))

    def __eq__(self, other):
        if not isinstance(other, Snapshot):
            return NotImplemented
        return (self.day == other.day and self.knowledge == other.knowledge
                and np.array_equal(self.satisfaction, other.satisfaction)
                and np.array_equal(self.joined, other.joined)
                and np.array_equal(self.final_satisfaction, other.final_satisfaction))

    @classmethod
    def from_horizon(cls, res: HorizonResult) -> "Snapshot":
        if not res.metrics:
            n = res.world.n
            return cls(0, res.state.knowledge.copy(), res.state.satisfaction.copy(), np.ones(n, bool),
                       res.state.satisfaction.copy())
        return cls(len(res.metrics), res.state.knowledge.copy(), res.satisfaction_at_start[-1].copy(),
                   res.joined[-1].copy(), res.state.satisfaction.copy())

    def save(self, path: str | Path) -> None:
        atomic_write(path, json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "Snapshot":
        return cls.from_dict(json.loads(Path(path).read_text()))


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_scenario(world: World, scenario: ScenarioConfig, snapshot: Snapshot | None,
                 day1_joined: np.ndarray) -> DayMetrics:
    """Evaluate one day of ``scenario`` on day-1 value-of-time realisations."""
    state = initial_state(world)
    if scenario.belief_source == "snapshot" or scenario.demand_source == "snapshot":
        if snapshot is None:
            raise ValueError(f"scenario {scenario.name!r} needs a knowledge snapshot")
    if scenario.belief_source == "snapshot":
        state.knowledge = snapshot.knowledge.copy()
    joined = day1_joined
    if scenario.demand_source == "snapshot":
        joined = snapshot.joined
        state.satisfaction = snapshot.satisfaction.copy()
    m, _ = run_day(world, state, scenario, day=0, joined=joined, vot_day=0, learn=False)
    return m


ABLATION_ROWS = [
    ("Expected Profit", "expected_profit"),
    ("Realised Profit", "realised_profit"),
    ("Realised Occupancy", "realised_occupancy"),
    ("Distance Saved", "distance_saved"),
    ("Acceptance Rate (traveller level)", "traveller_acceptance_rate"),
    ("Improved Participation Probability (mean)", "participation_gain"),
]


def run_ablation(cfg: RunConfig, names: Sequence[str] | None = None,
                 snapshot: Snapshot | None = None) -> tuple[dict[str, DayMetrics], HorizonResult | None]:
    names = list(names or SCENARIOS)
    unknown = [s for s in names if s not in SCENARIOS]
    if unknown:
        raise KeyError(", ".join(unknown))
    world = build_world(cfg)
    day1_joined = stream(cfg.seed, PARTICIPATION, 0).random(world.n) < sigmoid(initial_state(world).satisfaction)
    horizon = None
    needs_snapshot = any(SCENARIOS[s].belief_source == "snapshot" or SCENARIOS[s].demand_source == "snapshot"
                         for s in names)
    if needs_snapshot and snapshot is None:
        if cfg.knowledge_snapshot:
            snapshot = Snapshot.load(cfg.knowledge_snapshot)
        else:
            horizon = run_horizon(cfg, world)
            snapshot = Snapshot.from_horizon(horizon)
    return {s: run_scenario(world, SCENARIOS[s], snapshot, day1_joined) for s in names}, horizon
