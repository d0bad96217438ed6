"""Dynamic additive and multiplicative effects models for symmetric
relational data observed over time: simulation, fully Bayesian estimation
by Gibbs sampling, and posterior analysis."""

__version__ = "0.1.0"
