"""Learned one-step dynamics model.

Two MLPs over (normalized state, one-hot action): one emits the
predicted next-state mean, the other a log-variance, giving a diagonal
Gaussian over the normalized successor.  Successors are drawn with the
reparameterization trick (mu + sigma * eps), and training minimizes the
squared error between one such draw and the observed (normalized) next
state, so gradients reach the variance net only through the noise term.

All public methods accept raw observations and divide by `state_norm`
internally; predictions are returned in the same normalized space the
value networks consume.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .nets import AdamState, MlpSpec, ParamSet, adam_step, init_mlp, mlp_forward, mlp_graph

LOGVAR_MIN = -10.0
LOGVAR_MAX = 4.0


class EmptyBatch(ValueError):
    """model_loss called with no transitions."""


class DynModel:
    """Gaussian next-state predictor with per-action sampling."""

    def __init__(self, obs_dim: int, n_actions: int, hidden_sizes,
                 rng: np.random.Generator, state_norm: float = 1.0,
                 activation: str = "relu", loss_kind: str = "mse",
                 dtype=np.float32):
        if state_norm <= 0:
            raise ValueError("state_norm must be positive")
        if loss_kind not in ("mse", "nll"):
            raise ValueError(f"unknown loss_kind {loss_kind!r}")
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.state_norm = float(state_norm)
        self.loss_kind = loss_kind
        self.dtype = dtype
        in_dim = self.obs_dim + self.n_actions
        self.mu_spec = MlpSpec(in_dim, tuple(hidden_sizes), obs_dim, activation)
        self.sigma_spec = MlpSpec(in_dim, tuple(hidden_sizes), obs_dim, activation)
        arrays = init_mlp(self.mu_spec, rng, prefix="mu.", dtype=dtype)
        arrays.update(init_mlp(self.sigma_spec, rng, prefix="sg.", dtype=dtype))
        self.params = ParamSet(arrays)
        self._eye = np.eye(self.n_actions, dtype=dtype)

    # -- encoding ---------------------------------------------------------
    def _encode(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=self.dtype)
        scaled = obs / self.state_norm if self.state_norm != 1.0 else obs
        onehot = self._eye[np.asarray(actions, dtype=np.intp)]
        return np.concatenate([scaled, onehot], axis=-1)

    # -- prediction ---------------------------------------------------------
    def predict_distribution(self, s, a):
        """Mean and variance of the normalized successor for one (s, a)."""
        x = self._encode(np.asarray(s), np.asarray(a))
        mu = mlp_forward(self.mu_spec, self.params, x, prefix="mu.")
        logvar = mlp_forward(self.sigma_spec, self.params, x, prefix="sg.")
        var = np.exp(np.clip(logvar, LOGVAR_MIN, LOGVAR_MAX))
        return mu, var

    def sample_successor(self, s, a, noise=None, rng=None):
        """One reparameterized draw mu + sigma * eps (normalized space)."""
        mu, var = self.predict_distribution(s, a)
        if noise is None:
            if rng is None:
                raise ValueError("provide either noise or rng")
            noise = rng.standard_normal(mu.shape)
        noise = np.asarray(noise, dtype=mu.dtype)
        return mu + np.sqrt(var) * noise

    def predict_all_successors(self, s, rng=None, noise=None) -> np.ndarray:
        """Sampled successor per action for a batch, shape (B, |A|, obs_dim).

        A 1-D observation is treated as a batch of one (returns
        (|A|, obs_dim)).  Each (sample, action) pair uses an independent
        noise draw.
        """
        s = np.asarray(s)
        single = s.ndim == 1
        obs = s[None, :] if single else s
        b = obs.shape[0]
        rep = np.repeat(obs, self.n_actions, axis=0)
        acts = np.tile(np.arange(self.n_actions), b)
        mu, var = self.predict_distribution(rep, acts)
        if noise is None:
            if rng is None:
                raise ValueError("provide either noise or rng")
            noise = rng.standard_normal((b * self.n_actions, self.obs_dim))
        noise = np.asarray(noise, dtype=mu.dtype).reshape(b * self.n_actions,
                                                          self.obs_dim)
        out = (mu + np.sqrt(var) * noise).reshape(b, self.n_actions,
                                                  self.obs_dim)
        return out[0] if single else out

    # -- training -------------------------------------------------------------
    def _loss_graph(self, nodes: dict, s, a, s_next, noise):
        x = self._encode(np.asarray(s), np.asarray(a))
        target = np.asarray(s_next, dtype=self.dtype) / self.state_norm
        mu = mlp_graph(self.mu_spec, nodes, x, prefix="mu.")
        logvar = ad.clip(
            mlp_graph(self.sigma_spec, nodes, x, prefix="sg."),
            LOGVAR_MIN, LOGVAR_MAX,
        )
        if self.loss_kind == "nll":
            # 0.5 * (logvar + (target - mu)^2 / var), up to a constant
            sq = ad.square(ad.sub(Node(target), mu))
            inv_var = ad.exp(ad.mul(logvar, -1.0))
            return ad.mul(ad.mean(ad.add(logvar, ad.mul(sq, inv_var))), 0.5)
        sigma = ad.exp(ad.mul(logvar, 0.5))
        pred = ad.add(mu, ad.mul(sigma, noise.astype(self.dtype)))
        return ad.mean(ad.square(ad.sub(pred, target)))

    def model_loss(self, s, a, s_next, noise=None, rng=None) -> float:
        """Scalar training loss on a batch of transitions."""
        s = np.atleast_2d(np.asarray(s))
        if s.shape[0] == 0:
            raise EmptyBatch("model_loss needs at least one transition")
        a = np.atleast_1d(np.asarray(a))
        s_next = np.atleast_2d(np.asarray(s_next))
        if noise is None:
            if rng is None:
                raise ValueError("provide either noise or rng")
            noise = rng.standard_normal(s.shape)
        loss = self._loss_graph(self.params.nodes(), s, a, s_next,
                                np.asarray(noise))
        return float(loss.value)

    def loss_and_grads(self, s, a, s_next, noise=None, rng=None):
        """Loss value plus gradients for every model parameter."""
        s = np.atleast_2d(np.asarray(s))
        if s.shape[0] == 0:
            raise EmptyBatch("model update needs at least one transition")
        a = np.atleast_1d(np.asarray(a))
        s_next = np.atleast_2d(np.asarray(s_next))
        if noise is None:
            if rng is None:
                raise ValueError("provide either noise or rng")
            noise = rng.standard_normal(s.shape)
        nodes = self.params.nodes()
        loss = self._loss_graph(nodes, s, a, s_next, np.asarray(noise))
        names = self.params.names()
        grads = ad.grad(loss, [nodes[k] for k in names])
        return float(loss.value), dict(zip(names, grads))

    def train_step(self, opt: AdamState, s, a, s_next, rng) -> float:
        loss, grads = self.loss_and_grads(s, a, s_next, rng=rng)
        adam_step(self.params, grads, opt)
        return loss
