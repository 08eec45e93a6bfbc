"""Built-in environments, selectable by string id."""

from .acrobot import Acrobot
from .base import Environment, EnvSpec, InvalidAction, StepAfterDone, StepResult
from .bitflip import BitFlip
from .cartpole import CartPole
from .ocloud import OCloud, OCloudConfig

ENV_IDS = ("cartpole", "acrobot", "bitflip", "ocloud")


def make_env(env_id: str, rng=None, **kwargs) -> Environment:
    """Instantiate a built-in environment by id.

    kwargs: `n_bits` for bitflip; `config` (OCloudConfig) for ocloud.
    """
    if env_id == "cartpole":
        return CartPole(rng=rng, **kwargs)
    if env_id == "acrobot":
        return Acrobot(rng=rng, **kwargs)
    if env_id == "bitflip":
        return BitFlip(rng=rng, **kwargs)
    if env_id == "ocloud":
        return OCloud(rng=rng, **kwargs)
    raise ValueError(f"unknown env id {env_id!r}; known: {', '.join(ENV_IDS)}")


__all__ = [
    "Acrobot", "BitFlip", "CartPole", "OCloud", "OCloudConfig",
    "Environment", "EnvSpec", "StepResult", "StepAfterDone", "InvalidAction",
    "ENV_IDS", "make_env",
]
