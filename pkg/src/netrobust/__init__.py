"""Robustness workbench for neural-assisted mobile-network configuration.

Train a performance-efficiency predictor and a search-based configuration
policy, attack its state observations with GP-UCB Bayesian optimization
under an l-infinity budget, and defend via retraining plus probabilistic
action selection -- all scored against a built-in discrete-event network
simulator.
"""

__version__ = "0.1.0"
