"""Cart-pole balancing with the classic constants and Euler integration.

Observation [x, x_dot, theta, theta_dot]; actions {push left, push
right} with +-10 N; +1 reward per step; episode ends when |x| > 2.4,
|theta| > 12 degrees, or after 200 steps (horizon truncation, which
still bootstraps).
"""

from __future__ import annotations

import numpy as np

from .base import Environment, EnvSpec

GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
TOTAL_MASS = MASS_CART + MASS_POLE
HALF_POLE = 0.5  # half the pole length
POLEMASS_LENGTH = MASS_POLE * HALF_POLE
FORCE_MAG = 10.0
TAU = 0.02
THETA_LIMIT = 12.0 * 2.0 * np.pi / 360.0
X_LIMIT = 2.4


class CartPole(Environment):
    spec = EnvSpec(obs_dim=4, action_count=2, max_steps=200,
                   reward_range=(1.0, 1.0))

    def __init__(self, rng=None):
        super().__init__(rng)
        self._state = np.zeros(4)

    def _reset_impl(self) -> np.ndarray:
        self._state = self._rng.uniform(-0.05, 0.05, size=4)
        return self._state.copy()

    def _step_impl(self, action: int):
        x, x_dot, theta, theta_dot = self._state
        force = FORCE_MAG if action == 1 else -FORCE_MAG
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        temp = (force + POLEMASS_LENGTH * theta_dot ** 2 * sin_t) / TOTAL_MASS
        theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
            HALF_POLE * (4.0 / 3.0 - MASS_POLE * cos_t ** 2 / TOTAL_MASS)
        )
        x_acc = temp - POLEMASS_LENGTH * theta_acc * cos_t / TOTAL_MASS
        x = x + TAU * x_dot
        x_dot = x_dot + TAU * x_acc
        theta = theta + TAU * theta_dot
        theta_dot = theta_dot + TAU * theta_acc
        self._state = np.array([x, x_dot, theta, theta_dot])
        done = bool(abs(x) > X_LIMIT or abs(theta) > THETA_LIMIT)
        return self._state.copy(), 1.0, done

    def _state_extra(self) -> dict:
        return {"state": self._state.copy()}

    def _load_extra(self, extra: dict) -> None:
        self._state = np.asarray(extra["state"], dtype=np.float64).copy()
