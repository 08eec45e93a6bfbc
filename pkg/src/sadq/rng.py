"""Named, independent random streams derived from a single master seed.

Every source of randomness in a run (environment dynamics, exploration
coin flips, replay sampling for the Q-network and for the dynamics model,
reparameterization noise, weight init, evaluation episodes) draws from its
own PCG64 generator.  Streams are derived deterministically from the master
seed and a stream name, so adding or removing consumers of one stream never
perturbs the others.  This is what makes differential tests possible: a
variant that never touches the model streams produces bit-identical
Q-network trajectories to one that does.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["RngStreams", "stream_from"]


def _name_key(name: str) -> int:
    # Stable 64-bit key for a stream name, independent of PYTHONHASHSEED.
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream_from(seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream `name` under master `seed`."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_name_key(name),))
    return np.random.Generator(np.random.PCG64(ss))


class RngStreams:
    """Lazy registry of named generators for one run.

    State of all streams created so far can be captured and restored,
    which checkpointing uses to make resumed runs bit-identical.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            gen = stream_from(self.seed, name)
            self._streams[name] = gen
        return gen

    def state_dict(self) -> dict:
        return {
            "seed": self.seed,
            "streams": {
                name: gen.bit_generator.state for name, gen in self._streams.items()
            },
        }

    def load_state_dict(self, state: dict) -> None:
        self.seed = int(state["seed"])
        self._streams.clear()
        for name, bg_state in state["streams"].items():
            gen = stream_from(self.seed, name)
            gen.bit_generator.state = bg_state
            self._streams[name] = gen
