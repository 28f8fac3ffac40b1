"""replaylab: score-prioritized level sampling for procedurally generated RL.

The package bundles four pieces that talk to each other through small,
explicit data types:

* :mod:`replaylab.sampler` -- replay distributions over visited levels
  (score-, staleness-, and mixture-based) plus the score table they read.
* :mod:`replaylab.scoring` -- per-trajectory learning-potential metrics,
  generalized advantage estimation, and partial-score merging.
* :mod:`replaylab.env` -- ChainMaze, a deterministic multi-room gridworld
  with discrete difficulty tiers.
* :mod:`replaylab.learner` -- a compact actor-critic (numpy MLP) trained
  with a clipped-surrogate policy-gradient update.
* :mod:`replaylab.rollout` / :mod:`replaylab.harness` -- experience
  collection and the experiment driver / CLI.
"""

from replaylab.errors import ContractViolation, NonFiniteLossError

__all__ = ["ContractViolation", "NonFiniteLossError"]

__version__ = "0.1.0"
