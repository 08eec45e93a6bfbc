"""Two-link underactuated swing-up (acrobot).

Torque in {-1, 0, +1} N*m on the second joint, one RK4 step of dt=0.2 s
per env step, -1 reward per step (0 on the terminating step), episode
ends when the tip height -cos(t1) - cos(t1 + t2) exceeds 1 or after 500
steps.  Observation is [cos t1, sin t1, cos t2, sin t2, dt1, dt2].
"""

from __future__ import annotations

import numpy as np

from .base import Environment, EnvSpec

DT = 0.2
LINK_LENGTH_1 = 1.0
LINK_MASS_1 = 1.0
LINK_MASS_2 = 1.0
LINK_COM_1 = 0.5
LINK_COM_2 = 0.5
LINK_MOI = 1.0
GRAVITY = 9.8
MAX_VEL_1 = 4.0 * np.pi
MAX_VEL_2 = 9.0 * np.pi
TORQUES = (-1.0, 0.0, 1.0)


def _wrap_angle(x: float) -> float:
    return (x + np.pi) % (2.0 * np.pi) - np.pi


def _dynamics(state: np.ndarray, torque: float) -> np.ndarray:
    """Time derivative of [t1, t2, dt1, dt2] under the book equations."""
    m1, m2 = LINK_MASS_1, LINK_MASS_2
    l1 = LINK_LENGTH_1
    lc1, lc2 = LINK_COM_1, LINK_COM_2
    i1 = i2 = LINK_MOI
    g = GRAVITY
    t1, t2, dt1, dt2 = state
    d1 = (m1 * lc1 ** 2
          + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * np.cos(t2))
          + i1 + i2)
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * np.cos(t2)) + i2
    phi2 = m2 * lc2 * g * np.cos(t1 + t2 - np.pi / 2.0)
    phi1 = (-m2 * l1 * lc2 * dt2 ** 2 * np.sin(t2)
            - 2 * m2 * l1 * lc2 * dt2 * dt1 * np.sin(t2)
            + (m1 * lc1 + m2 * l1) * g * np.cos(t1 - np.pi / 2.0)
            + phi2)
    ddt2 = ((torque + d2 / d1 * phi1
             - m2 * l1 * lc2 * dt1 ** 2 * np.sin(t2) - phi2)
            / (m2 * lc2 ** 2 + i2 - d2 ** 2 / d1))
    ddt1 = -(d2 * ddt2 + phi1) / d1
    return np.array([dt1, dt2, ddt1, ddt2])


def _rk4_step(state: np.ndarray, torque: float, dt: float) -> np.ndarray:
    k1 = _dynamics(state, torque)
    k2 = _dynamics(state + dt / 2.0 * k1, torque)
    k3 = _dynamics(state + dt / 2.0 * k2, torque)
    k4 = _dynamics(state + dt * k3, torque)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def mechanical_energy(state: np.ndarray) -> float:
    """Kinetic plus gravitational energy (zero potential at the pivot)."""
    t1, t2, dt1, dt2 = state
    m1, m2 = LINK_MASS_1, LINK_MASS_2
    l1, lc1, lc2 = LINK_LENGTH_1, LINK_COM_1, LINK_COM_2
    i2 = LINK_MOI
    d1 = (m1 * lc1 ** 2
          + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * np.cos(t2))
          + LINK_MOI + i2)
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * np.cos(t2)) + i2
    kinetic = 0.5 * d1 * dt1 ** 2 + d2 * dt1 * dt2 \
            + 0.5 * (m2 * lc2 ** 2 + i2) * dt2 ** 2
    potential = (-(m1 * lc1 + m2 * l1) * GRAVITY * np.cos(t1)
                 - m2 * lc2 * GRAVITY * np.cos(t1 + t2))
    return float(kinetic + potential)


class Acrobot(Environment):
    spec = EnvSpec(obs_dim=6, action_count=3, max_steps=500,
                   reward_range=(-1.0, 0.0))

    def __init__(self, rng=None):
        super().__init__(rng)
        self._state = np.zeros(4)

    def _obs(self) -> np.ndarray:
        t1, t2, dt1, dt2 = self._state
        return np.array([np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2),
                         dt1, dt2])

    def _reset_impl(self) -> np.ndarray:
        self._state = self._rng.uniform(-0.1, 0.1, size=4)
        return self._obs()

    def _step_impl(self, action: int):
        ns = _rk4_step(self._state, TORQUES[action], DT)
        ns[0] = _wrap_angle(ns[0])
        ns[1] = _wrap_angle(ns[1])
        ns[2] = np.clip(ns[2], -MAX_VEL_1, MAX_VEL_1)
        ns[3] = np.clip(ns[3], -MAX_VEL_2, MAX_VEL_2)
        self._state = ns
        done = bool(-np.cos(ns[0]) - np.cos(ns[1] + ns[0]) > 1.0)
        reward = 0.0 if done else -1.0
        return self._obs(), reward, done

    def _state_extra(self) -> dict:
        return {"state": self._state.copy()}

    def _load_extra(self, extra: dict) -> None:
        self._state = np.asarray(extra["state"], dtype=np.float64).copy()
