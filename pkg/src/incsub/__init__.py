"""Incremental stochastic subgradient methods over agent networks.

Two engines minimize a sum of per-agent convex functions over a closed
convex set using noisy subgradient oracles: a ring-order engine where the
iterate passes through all agents in fixed sequence each cycle, and a
randomized-order engine where the updating agent evolves as a Markov chain
over a (possibly time-varying) neighbor structure.  The analysis module
provides the matching geometric mixing constants and closed-form
constant-step error bounds, and the harness verifies those bounds against
seeded simulations.
"""

from .version import __version__

from .errors import (CertificateError, ConfigError, DimensionMismatchError,
                     IncsubError, NonFiniteError, ProjectionConvergenceError,
                     SchemeViolationError, TopologyError)
from .sets import Ball, Box, Halfspaces, Simplex, project
from .schedules import Constant, PowerLaw, step_size
from .noise import (BiasedGaussianNoise, BoundedUniformNoise, GaussianNoise,
                    NoNoise, NoiseStream, noisy_subgradient)
from .objectives import (ComponentObjective, LinearUtility, LogUtility,
                         SqrtUtility, absolute_value, quadratic_distance,
                         regression_component, utility_component)
from .problems import (OptimumCertificate, ProblemInstance, grid_search,
                       make_allocation, make_quadratic_suite, make_regression)
from .cyclic import CyclicState, cyclic_cycle, run_cyclic, run_cyclic_batch
from .markov import (EqualProbability, MarkovState, MinEqualNeighbor,
                     PeriodicTopology, RandomEdgeTopology, StaticTopology,
                     TransitionMatrix, WeightedMetropolisHastings,
                     build_transition, make_scheme, make_topology, markov_step,
                     run_markov, run_markov_batch, sample_next_agent,
                     validate_transition)
from .analysis import (BoundReport, BoundVerdict, OptimalWindow, RateConstants,
                       aggregate_verdicts, cyclic_bound, delta_window,
                       markov_bound, max_uniform_deviation, optimal_T,
                       optimal_window, phi_product, rate_constants,
                       simple_delta_bound, verify_bound_empirically)
from .trace import RunTrace, record_indices
from .config import ExperimentConfig, canonical_config_text, parse_config_text
from .harness import compare_bounds, run_experiment

__all__ = [name for name in dir() if not name.startswith("_")]
