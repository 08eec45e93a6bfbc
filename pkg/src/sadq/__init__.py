"""Successor-state aggregation DQN in pure NumPy.

A small value-based RL library: classic-control and scheduling
environments, a learned Gaussian one-step dynamics model, Q-learning
variants that fold predicted successor states into their targets and
action choices, and a tabular harness that checks the estimator's bias
and variance properties exactly.
"""

__version__ = "0.1.0"
