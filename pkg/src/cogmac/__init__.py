"""Dynamic spectrum access MAC analysis for cognitive radio networks.

Slotted-ALOHA and CSMA/CA throughput models, sensing-scheme optimization
with and without detection errors, a stochastic-geometry cell model and a
Monte Carlo simulator that cross-checks all of them.
"""
from .aloha import AlohaParams, brute_force_throughput, closed_form_throughput, network_throughput
from .channels import ChannelSet, ValidationError, channels_for_rho, new_channel_set, summarize
from .csma import (DetectorModel, SolverReport, collision_probability_any_access,
                   collision_probability_exact, csma_throughput, loss_percentage, optimal_multi,
                   optimal_single, optimal_with_errors, unutilized_capacity)
from .sensing import (GroupCatalog, NoOpportunityError, SensingScheme, channel_coverage,
                      enumerate_groups, heuristic_multi, heuristic_single, make_scheme)
from .spatial import NumericalError, SpatialConfig, spatial_config

__version__ = "0.1.0"
