"""Environment interface shared by all built-in tasks.

Environments are single-owner objects holding their own RNG.  `reset`
with an explicit seed makes the whole trajectory reproducible; `reset`
without one continues the internal stream, so successive episodes differ
but the sequence of episodes is still deterministic given the generator
handed in at construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EnvSpec", "StepResult", "StepAfterDone", "InvalidAction", "Environment"]


class StepAfterDone(RuntimeError):
    """step() was called on an episode that already ended."""


class InvalidAction(ValueError):
    """Action index outside [0, action_count)."""


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    action_count: int
    max_steps: int
    reward_range: tuple

    def __post_init__(self):
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be positive")
        if self.action_count < 2:
            raise ValueError("action_count must be >= 2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class StepResult:
    next_obs: np.ndarray
    reward: float
    done: bool
    truncated: bool

    @property
    def ended(self) -> bool:
        return self.done or self.truncated


class Environment:
    """Template base: subclasses implement _reset_impl and _step_impl."""

    spec: EnvSpec

    def __init__(self, rng: np.random.Generator | None = None):
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._steps = 0
        self._needs_reset = True

    # -- subclass hooks -------------------------------------------------
    def _reset_impl(self) -> np.ndarray:
        raise NotImplementedError

    def _step_impl(self, action: int):
        """Return (next_obs, reward, terminal)."""
        raise NotImplementedError

    # -- public API -----------------------------------------------------
    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(np.random.SeedSequence(seed))
        self._steps = 0
        self._needs_reset = False
        obs = self._reset_impl()
        return np.asarray(obs, dtype=np.float64)

    def step(self, action) -> StepResult:
        if self._needs_reset:
            raise StepAfterDone("episode is over; call reset() first")
        idx = int(action)
        if not (0 <= idx < self.spec.action_count):
            raise InvalidAction(
                f"action {idx} outside [0, {self.spec.action_count})"
            )
        obs, reward, done = self._step_impl(idx)
        self._steps += 1
        truncated = (not done) and self._steps >= self.spec.max_steps
        if done or truncated:
            self._needs_reset = True
        return StepResult(np.asarray(obs, dtype=np.float64), float(reward),
                          bool(done), bool(truncated))

    @property
    def steps_taken(self) -> int:
        return self._steps

    # -- checkpoint support ----------------------------------------------
    def _state_extra(self) -> dict:
        return {}

    def _load_extra(self, extra: dict) -> None:
        pass

    def state_dict(self) -> dict:
        return {
            "steps": self._steps,
            "needs_reset": self._needs_reset,
            "rng": self._rng.bit_generator.state,
            "extra": self._state_extra(),
        }

    def load_state_dict(self, state: dict) -> None:
        self._steps = int(state["steps"])
        self._needs_reset = bool(state["needs_reset"])
        self._rng.bit_generator.state = state["rng"]
        self._load_extra(state["extra"])
