"""Bit-flipping goal task.

Observation is current bits followed by goal bits (2n entries in
{0, 1}); action i toggles bit i; reward is -1 per step and 0 with
termination once the bits match; horizon is n steps.  Reset guarantees
start != goal.
"""

from __future__ import annotations

import numpy as np

from .base import Environment, EnvSpec


class BitFlip(Environment):
    def __init__(self, rng=None, n_bits: int = 8):
        super().__init__(rng)
        if n_bits < 2:
            raise ValueError("n_bits must be >= 2")
        self.n_bits = int(n_bits)
        self.spec = EnvSpec(obs_dim=2 * self.n_bits, action_count=self.n_bits,
                            max_steps=self.n_bits, reward_range=(-1.0, 0.0))
        self._bits = np.zeros(self.n_bits, dtype=np.int64)
        self._goal = np.zeros(self.n_bits, dtype=np.int64)

    def _obs(self) -> np.ndarray:
        return np.concatenate([self._bits, self._goal]).astype(np.float64)

    def _reset_impl(self) -> np.ndarray:
        self._bits = self._rng.integers(0, 2, size=self.n_bits)
        self._goal = self._rng.integers(0, 2, size=self.n_bits)
        while np.array_equal(self._bits, self._goal):
            self._goal = self._rng.integers(0, 2, size=self.n_bits)
        return self._obs()

    def _step_impl(self, action: int):
        if np.array_equal(self._bits, self._goal):
            # already solved (only reachable via hand-loaded state)
            return self._obs(), 0.0, True
        self._bits[action] ^= 1
        solved = np.array_equal(self._bits, self._goal)
        return self._obs(), 0.0 if solved else -1.0, solved

    def _state_extra(self) -> dict:
        return {"bits": self._bits.copy(), "goal": self._goal.copy()}

    def _load_extra(self, extra: dict) -> None:
        self._bits = np.asarray(extra["bits"], dtype=np.int64).copy()
        self._goal = np.asarray(extra["goal"], dtype=np.int64).copy()
