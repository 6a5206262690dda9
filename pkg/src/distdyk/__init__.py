"""Simulator for the distributed Dykstra projection algorithm on graphs."""
from ._backend import available as available_backends, default_backend
from .convex_sets import (Ball, Box, DegenerateActiveSet, Halfspace, Polyhedron,
                          ProjectionResult, WholeSpace, normal_residual, project, support)
from .diagnostics import RateFit, Trace, audit, dual_value, fit_rate, gap_bound
from .engine import (DualState, StepReport, StopRule, anchor_warm_start, edge_step,
                     init_state, run, run_block, vertex_step)
from .instances import Certificate, Instance, generate, normalize, reduce_anchors
from .oracle import OracleResult, centralized_dykstra, certify
from .topology import (Block, Edge, Graph, Schedule, Vertex, build_graph, graph_from_spec,
                       make_schedule, validate_cycle, validate_schedule)

__version__ = "0.1.0"
