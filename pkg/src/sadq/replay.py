"""Uniform experience replay over a preallocated ring buffer."""

from dataclasses import dataclass

import numpy as np


class EmptyBuffer(RuntimeError):
    """Raised when sampling from a buffer that holds no transitions."""


@dataclass
class Transition:
    """One environment step as stored for replay.

    ``done`` marks a true terminal state (no bootstrapping); ``truncated``
    marks a horizon cut where the value of the successor still counts.
    """

    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool
    truncated: bool


@dataclass
class Batch:
    """Column-wise view of sampled transitions."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray
    truncated: np.ndarray

    def __len__(self):
        return len(self.a)


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling.

    Parameters
    ----------
    capacity : int
        Maximum number of transitions retained; the oldest transition is
        overwritten first once full.
    obs_dim : int
        Flat observation length, fixed for the lifetime of the buffer.
    """

    def __init__(self, capacity, obs_dim):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self._s = np.zeros((capacity, obs_dim))
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._s_next = np.zeros((capacity, obs_dim))
        self._done = np.zeros(capacity, dtype=bool)
        self._truncated = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def push(self, t):
        """Store one transition, overwriting the oldest at capacity."""
        s = np.asarray(t.s, dtype=np.float64)
        s_next = np.asarray(t.s_next, dtype=np.float64)
        if s.shape != (self.obs_dim,) or s_next.shape != (self.obs_dim,):
            raise ValueError(
                f"observation shape {s.shape} does not match ({self.obs_dim},)")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(s_next))
                and np.isfinite(t.r)):
            raise ValueError("non-finite transition rejected")
        i = self.cursor
        self._s[i] = s
        self._a[i] = t.a
        self._r[i] = t.r
        self._s_next[i] = s_next
        self._done[i] = t.done
        self._truncated[i] = t.truncated
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n, rng):
        """Draw ``n`` transitions uniformly with replacement.

        ``n`` may exceed the current size. Raises EmptyBuffer when no
        transition has been stored yet.
        """
        if self.size == 0:
            raise EmptyBuffer("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=int(n))
        return Batch(self._s[idx].copy(), self._a[idx].copy(),
                     self._r[idx].copy(), self._s_next[idx].copy(),
                     self._done[idx].copy(), self._truncated[idx].copy())

    def transitions(self):
        """All stored transitions in insertion order (oldest first)."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = np.concatenate([np.arange(self.cursor, self.capacity),
                                    np.arange(self.cursor)])
        return [Transition(self._s[i].copy(), int(self._a[i]),
                           float(self._r[i]), self._s_next[i].copy(),
                           bool(self._done[i]), bool(self._truncated[i]))
                for i in order]

    def state_dict(self):
        n = self.size
        return {
            "capacity": self.capacity,
            "obs_dim": self.obs_dim,
            "size": n,
            "cursor": self.cursor,
            "s": self._s[:n].copy(),
            "a": self._a[:n].copy(),
            "r": self._r[:n].copy(),
            "s_next": self._s_next[:n].copy(),
            "done": self._done[:n].copy(),
            "truncated": self._truncated[:n].copy(),
        }

    def load_state_dict(self, state):
        if state["capacity"] != self.capacity or state["obs_dim"] != self.obs_dim:
            raise ValueError("buffer geometry mismatch")
        n = int(state["size"])
        self.size = n
        self.cursor = int(state["cursor"])
        self._s[:n] = state["s"]
        self._a[:n] = state["a"]
        self._r[:n] = state["r"]
        self._s_next[:n] = state["s_next"]
        self._done[:n] = state["done"]
        self._truncated[:n] = state["truncated"]
