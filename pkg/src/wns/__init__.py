"""Discrete Brownian web and net: lattice systems, couplings, random-environment
kernels, sticky SDEs and the true self-avoiding walk, with Monte Carlo checks."""
from .lattice import (BOTH, LEFT, NONE, RIGHT, ArrowField, Environment, LatticeWindow,
                      dual_field, gen_environment, gen_kill_field, gen_net_field, gen_web_field,
                      rotate_dual)
from .mu import FiniteMeasure, MuSpec, beta_plus, check_mucon, mu_eps_beta, mu_eps_net
from .rng import SeedSpec
from .stats import EstimateCI, ks_test, loglog_slope, mean_ci

__version__ = "0.1.0"
