"""Run configuration: TOML schema, presets, validation, CLI overrides."""

import dataclasses
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 fallback
    import tomli as tomllib

from sadq.agent import AGENT_IDS
from sadq.envs import ENV_IDS


class ConfigInvalid(ValueError):
    """Bad run config; the message names the offending section.key."""


@dataclass
class TrainConfig:
    """Everything a run needs, grouped as in the config file sections."""

    # [env]
    env_id: str = "cartpole"
    env_params: dict = field(default_factory=dict)
    # [q]
    q_hidden_sizes: tuple = (128, 128, 64)
    q_batch_size: int = 64
    q_lr: float = 1e-3
    update_per_collect: int = 1
    target_update_interval: int = 8000
    q_loss: str = "mse"
    n_quantiles: int = 32
    # [model]
    m_hidden_sizes: tuple = (256, 256)
    m_batch_size: int = 128
    m_lr: float = 4e-5
    k: int = 1
    m_loss: str = "mse"
    # [agent]
    variant: str = "sadq"
    alpha: float = 0.7
    beta: float = 0.5
    gamma: float = 0.97
    state_norm: float = 1.0
    # [schedule]
    total_steps: int = 160000
    buffer_size: int = 100000
    replay_frequency: int = 80
    eps_start: float = 0.95
    eps_end: float = 0.1
    eps_decay: int = 10000
    eval_interval: int = 2000
    eval_episodes: int = 20
    stop_return: float = None
    seeds: tuple = (0,)

    def validate(self):
        def bad(key, why):
            raise ConfigInvalid(f"{key}: {why}")

        if self.env_id not in ENV_IDS:
            bad("env.id", f"unknown env {self.env_id!r}")
        if self.variant not in AGENT_IDS:
            bad("agent.variant", f"unknown variant {self.variant!r}")
        for key, sizes in (("q.hidden_sizes", self.q_hidden_sizes),
                           ("model.hidden_sizes", self.m_hidden_sizes)):
            if len(sizes) == 0 or any(int(h) != h or h < 1 for h in sizes):
                bad(key, f"need positive integers, got {sizes!r}")
        for key, v in (("q.batch_size", self.q_batch_size),
                       ("model.batch_size", self.m_batch_size),
                       ("q.update_per_collect", self.update_per_collect),
                       ("model.k", self.k),
                       ("q.target_update_interval",
                        self.target_update_interval),
                       ("q.n_quantiles", self.n_quantiles),
                       ("schedule.total_steps", self.total_steps),
                       ("schedule.buffer_size", self.buffer_size),
                       ("schedule.replay_frequency", self.replay_frequency),
                       ("schedule.eps_decay", self.eps_decay),
                       ("schedule.eval_interval", self.eval_interval),
                       ("schedule.eval_episodes", self.eval_episodes)):
            if int(v) != v or v < 1:
                bad(key, f"need a positive integer, got {v!r}")
        for key, v in (("q.lr", self.q_lr), ("model.lr", self.m_lr),
                       ("agent.state_norm", self.state_norm)):
            if not v > 0:
                bad(key, f"need a positive number, got {v!r}")
        for key, v in (("schedule.eps_start", self.eps_start),
                       ("schedule.eps_end", self.eps_end),
                       ("agent.alpha", self.alpha)):
            if not 0.0 <= v <= 1.0:
                bad(key, f"need a value in [0,1], got {v!r}")
        if self.beta < 0:
            bad("agent.beta", f"need beta >= 0, got {self.beta!r}")
        if not 0.0 <= self.gamma < 1.0:
            bad("agent.gamma", f"need gamma in [0,1), got {self.gamma!r}")
        if self.q_loss not in ("mse", "huber"):
            bad("q.loss", f"expected 'mse' or 'huber', got {self.q_loss!r}")
        if self.m_loss not in ("mse", "nll"):
            bad("model.loss", f"expected 'mse' or 'nll', got {self.m_loss!r}")
        if self.stop_return is not None and not np_isreal(self.stop_return):
            bad("schedule.stop_return", f"need a number, got {self.stop_return!r}")
        if len(self.seeds) == 0 or any(int(s) != s for s in self.seeds):
            bad("schedule.seeds", f"need integers, got {self.seeds!r}")
        allowed = ENV_PARAM_KEYS[self.env_id]
        for key in self.env_params:
            if key not in allowed:
                bad(f"env.{key}", f"unknown key for env {self.env_id!r}")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        """Nested section dict mirroring the config file layout."""
        return {
            "env": {"id": self.env_id, **self.env_params},
            "q": {"hidden_sizes": list(self.q_hidden_sizes),
                  "batch_size": self.q_batch_size, "lr": self.q_lr,
                  "update_per_collect": self.update_per_collect,
                  "target_update_interval": self.target_update_interval,
                  "loss": self.q_loss, "n_quantiles": self.n_quantiles},
            "model": {"hidden_sizes": list(self.m_hidden_sizes),
                      "batch_size": self.m_batch_size, "lr": self.m_lr,
                      "k": self.k, "loss": self.m_loss},
            "agent": {"variant": self.variant, "alpha": self.alpha,
                      "beta": self.beta, "gamma": self.gamma,
                      "state_norm": self.state_norm},
            "schedule": {"total_steps": self.total_steps,
                         "buffer_size": self.buffer_size,
                         "replay_frequency": self.replay_frequency,
                         "eps_start": self.eps_start,
                         "eps_end": self.eps_end,
                         "eps_decay": self.eps_decay,
                         "eval_interval": self.eval_interval,
                         "eval_episodes": self.eval_episodes,
                         **({"stop_return": self.stop_return}
                            if self.stop_return is not None else {}),
                         "seeds": list(self.seeds)},
        }


def np_isreal(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


# section.key -> TrainConfig attribute
_FIELD_MAP = {
    ("q", "hidden_sizes"): "q_hidden_sizes",
    ("q", "batch_size"): "q_batch_size",
    ("q", "lr"): "q_lr",
    ("q", "update_per_collect"): "update_per_collect",
    ("q", "target_update_interval"): "target_update_interval",
    ("q", "loss"): "q_loss",
    ("q", "n_quantiles"): "n_quantiles",
    ("model", "hidden_sizes"): "m_hidden_sizes",
    ("model", "batch_size"): "m_batch_size",
    ("model", "lr"): "m_lr",
    ("model", "k"): "k",
    ("model", "loss"): "m_loss",
    ("agent", "variant"): "variant",
    ("agent", "alpha"): "alpha",
    ("agent", "beta"): "beta",
    ("agent", "gamma"): "gamma",
    ("agent", "state_norm"): "state_norm",
    ("schedule", "total_steps"): "total_steps",
    ("schedule", "buffer_size"): "buffer_size",
    ("schedule", "replay_frequency"): "replay_frequency",
    ("schedule", "eps_start"): "eps_start",
    ("schedule", "eps_end"): "eps_end",
    ("schedule", "eps_decay"): "eps_decay",
    ("schedule", "eval_interval"): "eval_interval",
    ("schedule", "eval_episodes"): "eval_episodes",
    ("schedule", "stop_return"): "stop_return",
    ("schedule", "seeds"): "seeds",
}

ENV_PARAM_KEYS = {
    "cartpole": frozenset(),
    "acrobot": frozenset(),
    "bitflip": frozenset({"n_bits"}),
    "ocloud": frozenset({"server_count", "w1", "w2", "p0", "p1",
                         "warmup_tasks", "episode_tasks", "trace_path"}),
}

_TUPLE_FIELDS = {"q_hidden_sizes", "m_hidden_sizes", "seeds"}


def config_from_dict(data):
    """Build a validated TrainConfig from a nested section dict."""
    if not isinstance(data, dict):
        raise ConfigInvalid(f"config root: expected a table, got {type(data).__name__}")
    kwargs = {}
    env_params = {}
    for section, table in data.items():
        if section not in ("env", "q", "model", "agent", "schedule"):
            raise ConfigInvalid(f"{section}: unknown section")
        if not isinstance(table, dict):
            raise ConfigInvalid(f"{section}: expected a table")
        for key, value in table.items():
            if section == "env":
                if key == "id":
                    kwargs["env_id"] = value
                else:
                    env_params[key] = value
                continue
            attr = _FIELD_MAP.get((section, key))
            if attr is None:
                raise ConfigInvalid(f"{section}.{key}: unknown key")
            if attr in _TUPLE_FIELDS:
                if not isinstance(value, (list, tuple)):
                    raise ConfigInvalid(f"{section}.{key}: expected a list")
                value = tuple(value)
            kwargs[attr] = value
    cfg = TrainConfig(env_params=env_params, **kwargs)
    return cfg.validate()


def parse_override(text):
    """Split one ``section.key=value`` override into (section, key, value).

    The value is parsed with TOML literal rules (so lists, numbers, and
    booleans come through typed); anything unparseable stays a string.
    """
    head, sep, raw = text.partition("=")
    if not sep:
        raise ConfigInvalid(f"override {text!r}: expected section.key=value")
    section, dot, key = head.strip().partition(".")
    if not dot or not section or not key:
        raise ConfigInvalid(f"override {text!r}: expected section.key=value")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


def apply_overrides(data, overrides):
    for text in overrides:
        section, key, value = parse_override(text)
        data.setdefault(section, {})[key] = value
    return data


def load_config(path, overrides=(), seeds=None):
    """Read a TOML run config, apply overrides, and validate.

    A relative ocloud trace_path is resolved against the config file's
    directory. ``seeds`` (from repeated --seed flags) wins over the file.
    """
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from exc
    apply_overrides(data, overrides)
    if seeds:
        data.setdefault("schedule", {})["seeds"] = list(seeds)
    trace = data.get("env", {}).get("trace_path")
    if trace and not os.path.isabs(trace):
        data["env"]["trace_path"] = os.path.join(
            os.path.dirname(os.path.abspath(path)), trace)
    return config_from_dict(data)


# per-task training configurations; the k values under "model" are the
# defaults, the sweep command varies them
PRESETS = {
    "cartpole": dict(
        env_id="cartpole",
        q_hidden_sizes=(128, 128, 64), q_batch_size=64, q_lr=1e-3,
        update_per_collect=1, target_update_interval=8000,
        m_hidden_sizes=(256, 256), m_batch_size=128, m_lr=4e-5, k=1,
        variant="sadq", alpha=0.7, beta=0.5, gamma=0.97, state_norm=1.0,
        total_steps=160000, buffer_size=100000, replay_frequency=80,
        eps_start=0.95, eps_end=0.1, eps_decay=10000,
    ),
    "acrobot": dict(
        env_id="acrobot",
        q_hidden_sizes=(256, 256), q_batch_size=128, q_lr=1e-4,
        update_per_collect=10, target_update_interval=2400,
        m_hidden_sizes=(256, 256), m_batch_size=256, m_lr=4e-5, k=1,
        variant="sadq", alpha=0.8, beta=0.5, gamma=0.99, state_norm=1.0,
        total_steps=960000, buffer_size=100000, replay_frequency=96,
        eps_start=1.0, eps_end=0.05, eps_decay=250000,
    ),
    "bitflip": dict(
        env_id="bitflip", env_params={"n_bits": 8},
        q_hidden_sizes=(128, 128, 64), q_batch_size=128, q_lr=5e-4,
        update_per_collect=10, target_update_interval=4800,
        m_hidden_sizes=(256, 256), m_batch_size=256, m_lr=4e-4, k=1,
        variant="sadq", alpha=0.6, beta=0.5, gamma=0.99, state_norm=1.0,
        total_steps=960000, buffer_size=4000, replay_frequency=96,
        eps_start=0.2, eps_end=0.2, eps_decay=100,
    ),
    "ocloud": dict(
        env_id="ocloud",
        q_hidden_sizes=(64, 64), q_batch_size=32, q_lr=5e-5,
        update_per_collect=1, target_update_interval=2000,
        m_hidden_sizes=(64, 64), m_batch_size=64, m_lr=5e-4, k=1,
        variant="sadq", alpha=0.5, beta=0.5, gamma=0.8, state_norm=50.0,
        total_steps=500000, buffer_size=100000, replay_frequency=100,
        eps_start=0.05, eps_end=0.05, eps_decay=1,
    ),
}


def preset(env_id, **changes):
    """The per-task default TrainConfig, optionally with field overrides."""
    if env_id not in PRESETS:
        raise ConfigInvalid(f"env.id: no preset for {env_id!r}")
    return TrainConfig(**PRESETS[env_id]).replace(**changes).validate()
