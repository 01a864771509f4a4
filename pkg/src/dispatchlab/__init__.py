"""Desk-scale ride-sourcing dispatch laboratory.

Optimal driver-passenger bipartite matching, a match-interval simulator with
delayed-matching actions, spatio-temporal state featurization, and centralized
multi-agent reinforcement learners (deep Q-learning and actor-critic) built on
a small hand-rolled MLP.
"""

from dispatchlab.geometry import AreaConfig, GaussianArrivalSpec, Location, pickup_time, zone_of
from dispatchlab.matching import CostMatrix, MatchPlan, brute_force_assignment, solve_assignment
from dispatchlab.rewards import RewardConfig

__version__ = "0.1.0"
