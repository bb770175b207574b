"""Simulated social-distancing monitor: a patrolling robot with an RGB-D camera working with a fixed CCTV camera."""

from .geometry import ConvexPolygon, Frame2, Homography, Point2, convex_hull, solve_homography
from .monitor import Monitor, MonitorConfig, classify_groups, update_pair_timers
from .navigation import PlannerConfig, baseline_plan, build_pfz, lawnmower_waypoints, pursue
from .runner import RunReport, emit_trajectories, replay, run_scenario, summarize
from .scenario import ParseError, Scenario, ValidationError, bundled, load_scenario

__version__ = "0.1.0"
