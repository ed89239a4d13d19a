"""Capacity planning for hybrid heat sources in electric-heat coupled systems.

The package finds Pareto-optimal sizings of electric boilers, heat pumps,
thermal storage tanks and storage heaters against two objectives, annual
total cost and consumed renewable energy, by driving a convex dispatch
simulation over clustered typical-day scenarios with a noise-aware
multi-objective Bayesian optimizer. NSGA-II and random search baselines and
a sample-average benchmark are included for validation.
"""

__version__ = "0.1.0"
