"""Dense networks and their optimizer.

Plain, dueling and quantile Q-networks over the autodiff substrate, plus
seeded initialization, hard target sync, and Adam.  Everything here is
batch-first: observations are (B, obs_dim), Q outputs (B, n_actions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeMismatch

ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh}
ACTIVATIONS_INFER = {"relu": lambda x: np.maximum(x, 0.0), "tanh": np.tanh}


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes for one MLP: input -> hidden... -> output."""

    input_dim: int
    hidden_sizes: tuple
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        dims = (self.input_dim, *self.hidden_sizes, self.output_dim)
        if any(int(d) < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def n_layers(self):
        return len(self.hidden_sizes) + 1


class ParamSet:
    """Named parameter arrays with fixed shapes.

    Values may be updated in place by the optimizer; the set of names and
    their shapes is frozen at construction.
    """

    def __init__(self, arrays: dict):
        for name, arr in arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in parameter {name!r}")
        self._arrays = dict(arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def names(self):
        return list(self._arrays.keys())

    def items(self):
        return self._arrays.items()

    @property
    def total_count(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self._arrays.items()})

    def load_from(self, other: "ParamSet") -> None:
        """Overwrite values in place from a ParamSet with the same shapes."""
        for name, arr in self._arrays.items():
            src = other[name]
            if src.shape != arr.shape:
                raise ShapeMismatch(
                    f"param {name!r}: {src.shape} into {arr.shape}"
                )
            arr[...] = src

    def nodes(self) -> dict:
        """Fresh leaf Nodes wrapping the current values (no copy)."""
        return {k: Node(v) for k, v in self._arrays.items()}


def init_mlp(spec: MlpSpec, rng: np.random.Generator, prefix: str = "",
             dtype=np.float32) -> dict:
    """Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    arrays = {}
    dims = spec.dims
    for i in range(spec.n_layers):
        fan_in = dims[i]
        bound = 1.0 / np.sqrt(fan_in)
        arrays[f"{prefix}w{i}"] = rng.uniform(
            -bound, bound, size=(dims[i], dims[i + 1])
        ).astype(dtype)
        arrays[f"{prefix}b{i}"] = rng.uniform(
            -bound, bound, size=(dims[i + 1],)
        ).astype(dtype)
    return arrays


def mlp_forward(spec: MlpSpec, params, x: np.ndarray, prefix: str = "",
                activate_final: bool = False) -> np.ndarray:
    """Inference-mode forward pass (no graph), batch or single row."""
    act = ACTIVATIONS_INFER[spec.activation]
    h = np.asarray(x)
    if h.shape[-1] != spec.input_dim:
        raise ShapeMismatch(f"input dim {h.shape[-1]} != {spec.input_dim}")
    last = spec.n_layers - 1
    for i in range(spec.n_layers):
        h = h @ params[f"{prefix}w{i}"] + params[f"{prefix}b{i}"]
        if i < last or activate_final:
            h = act(h)
    return h


def mlp_graph(spec: MlpSpec, nodes: dict, x, prefix: str = "",
              activate_final: bool = False) -> Node:
    """Graph-building forward pass for training."""
    act = ACTIVATIONS[spec.activation]
    h = x if isinstance(x, Node) else Node(np.asarray(x))
    if h.value.shape[-1] != spec.input_dim:
        raise ShapeMismatch(f"input dim {h.value.shape[-1]} != {spec.input_dim}")
    last = spec.n_layers - 1
    for i in range(spec.n_layers):
        h = ad.affine(h, nodes[f"{prefix}w{i}"], nodes[f"{prefix}b{i}"])
        if i < last or activate_final:
            h = act(h)
    return h


def dueling_combine(v: np.ndarray, a: np.ndarray, mean_subtract: bool = True):
    """Q = V + A - mean_a A (identifiable dueling composition).

    With mean_subtract off the raw sum V + A is returned.
    """
    if mean_subtract:
        return v + a - a.mean(axis=-1, keepdims=True)
    return v + a


class PlainQNet:
    """Single MLP mapping observation to one Q-value per action."""

    kind = "plain"

    def __init__(self, obs_dim: int, n_actions: int, hidden_sizes,
                 rng: np.random.Generator, activation: str = "relu",
                 dtype=np.float32):
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.spec = MlpSpec(obs_dim, tuple(hidden_sizes), n_actions, activation)
        self.params = ParamSet(init_mlp(self.spec, rng, dtype=dtype))

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.spec, self.params, obs)

    def q_graph(self, nodes: dict, obs: np.ndarray) -> Node:
        return mlp_graph(self.spec, nodes, obs)


class DuelingQNet:
    """Shared trunk with scalar value and per-action advantage heads."""

    kind = "dueling"

    def __init__(self, obs_dim: int, n_actions: int, hidden_sizes,
                 rng: np.random.Generator, activation: str = "relu",
                 mean_subtract: bool = True, dtype=np.float32):
        hidden_sizes = tuple(hidden_sizes)
        if not hidden_sizes:
            raise ValueError("dueling net needs at least one hidden layer")
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.mean_subtract = bool(mean_subtract)
        self.trunk = MlpSpec(obs_dim, hidden_sizes[:-1], hidden_sizes[-1], activation)
        feat = hidden_sizes[-1]
        self.v_head = MlpSpec(feat, (), 1, activation)
        self.a_head = MlpSpec(feat, (), n_actions, activation)
        arrays = init_mlp(self.trunk, rng, prefix="t.", dtype=dtype)
        arrays.update(init_mlp(self.v_head, rng, prefix="v.", dtype=dtype))
        arrays.update(init_mlp(self.a_head, rng, prefix="a.", dtype=dtype))
        self.params = ParamSet(arrays)

    def _features(self, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.trunk, self.params, obs, prefix="t.",
                           activate_final=True)

    def heads(self, obs: np.ndarray):
        """Return (V, A, Q) for a batch: shapes (B,1), (B,|A|), (B,|A|)."""
        feat = self._features(obs)
        v = mlp_forward(self.v_head, self.params, feat, prefix="v.")
        a = mlp_forward(self.a_head, self.params, feat, prefix="a.")
        return v, a, dueling_combine(v, a, self.mean_subtract)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return self.heads(obs)[2]

    def state_value(self, obs: np.ndarray) -> np.ndarray:
        """V(s) head only, shape (B,)."""
        feat = self._features(obs)
        return mlp_forward(self.v_head, self.params, feat, prefix="v.")[..., 0]

    def q_graph(self, nodes: dict, obs: np.ndarray) -> Node:
        feat = mlp_graph(self.trunk, nodes, obs, prefix="t.", activate_final=True)
        v = mlp_graph(self.v_head, nodes, feat, prefix="v.")
        a = mlp_graph(self.a_head, nodes, feat, prefix="a.")
        if not self.mean_subtract:
            return ad.add(v, a)
        amean = ad.reshape(ad.mean(a, axis=1), (a.value.shape[0], 1))
        return ad.add(v, ad.sub(a, amean))


def quantile_fractions(n_quantiles: int) -> np.ndarray:
    """Fixed midpoint fractions (2i+1)/(2N), i = 0..N-1."""
    i = np.arange(n_quantiles)
    return ((2 * i + 1) / (2.0 * n_quantiles)).astype(np.float64)


class QuantileQNet:
    """MLP emitting N quantile atoms per action; Q(s,a) = mean of atoms."""

    kind = "quantile"

    def __init__(self, obs_dim: int, n_actions: int, hidden_sizes,
                 rng: np.random.Generator, n_quantiles: int = 32,
                 activation: str = "relu", dtype=np.float32):
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.n_quantiles = int(n_quantiles)
        self.fractions = quantile_fractions(self.n_quantiles)
        self.spec = MlpSpec(obs_dim, tuple(hidden_sizes),
                            n_actions * n_quantiles, activation)
        self.params = ParamSet(init_mlp(self.spec, rng, dtype=dtype))

    def atoms(self, obs: np.ndarray) -> np.ndarray:
        """Quantile atoms, shape (B, n_actions, N)."""
        flat = mlp_forward(self.spec, self.params, obs)
        return flat.reshape(flat.shape[0], self.n_actions, self.n_quantiles)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return self.atoms(obs).mean(axis=-1)

    def atoms_graph(self, nodes: dict, obs: np.ndarray) -> Node:
        flat = mlp_graph(self.spec, nodes, obs)
        b = flat.value.shape[0]
        return ad.reshape(flat, (b, self.n_actions, self.n_quantiles))


class AdamState:
    """Adam moments and step counter for one ParamSet."""

    def __init__(self, params: ParamSet, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        for k in self.m:
            self.m[k][...] = state["m"][k]
            self.v[k][...] = state["v"][k]


def adam_step(params: ParamSet, grads: dict, state: AdamState) -> ParamSet:
    """One bias-corrected Adam update, in place; returns the same ParamSet."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    scale = state.lr / bc1
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"grad {name!r}: {g.shape} vs {p.shape}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= scale * m / (np.sqrt(v / bc2) + state.eps)
    return params


def sync_target(online: ParamSet, target: ParamSet) -> None:
    """Hard copy of online parameters into the target ParamSet."""
    target.load_from(online)
