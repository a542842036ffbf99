"""Adaptive personalised pricing for ride-pooling with day-to-day Bayesian
learning of travellers' value-of-time classes."""
from .config import RunConfig, load_config, resolve
from .errors import ImpossibleObservationWarning, InfeasibleAssignmentError, InvalidInputError, ParseError
from .learning import OperatorKnowledge, class_error, posterior_update
from .matching import Assignment, solve_assignment
from .population import (DEFAULT_CLASSES, BehaviouralClass, DiscreteVotDistribution, NetworkModel, TripRequest,
                         discretize_class, generate_demand, load_requests)
from .pricing import (ClassBelief, PricedRide, ProfitParams, acceptance_probability, expected_profit,
                      optimize_discounts, participation_probability)
from .shareability import CandidateRide, SharingParams, enumerate_shareability
from .simulation import run_ablation, run_day, run_horizon

__version__ = "0.1.0"
