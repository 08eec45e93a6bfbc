"""Decision core: targets, action selection, and the agent wrapper.

Five variants share one training interface:

- "dqn":       plain MLP Q-network, max-bootstrap target
- "dueling":   value/advantage decomposition, max-bootstrap target
- "sadq":      dueling net plus a dynamics model; the bootstrap blends
               the target V of the best imagined successor of s with the
               usual max Q' at the observed s', and action selection can
               add a bonus for each action's imagined successor
- "qr-dqn":    quantile atoms, distributional max-bootstrap target
- "sadq-dist": quantile atoms with the blended successor target

Imagined successors always come from the current state of the replayed
transition, one per action; the observed next state is treated as one
realization among them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ShapeMismatch
from .dynamics import DynModel
from .nets import (
    AdamState,
    DuelingQNet,
    PlainQNet,
    QuantileQNet,
    adam_step,
    sync_target,
)

AGENT_IDS = ("dqn", "dueling", "sadq", "sadq-dist", "qr-dqn")


class EmptyCandidates(ValueError):
    """Successor selection got an empty candidate set."""


@dataclass(frozen=True)
class TargetMix:
    """Blend factors: alpha for the target, beta for action scores."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        if self.beta < 0.0:
            raise ValueError(f"beta {self.beta} must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma {self.gamma} outside [0, 1)")


def select_promising_successor(value_fn, candidates):
    """Candidate with the highest value; ties go to the lowest index.

    Returns (index, candidate, value).  `value_fn` maps a (n, obs_dim)
    batch to n values and is expected to be the target-network V head.
    """
    candidates = np.asarray(candidates)
    if candidates.ndim != 2 or candidates.shape[0] == 0:
        raise EmptyCandidates("need a nonempty (n, obs_dim) candidate array")
    values = np.asarray(value_fn(candidates))
    idx = int(np.argmax(values))
    return idx, candidates[idx], float(values[idx])


def sadq_target(r, mix: TargetMix, v_hat, max_q_next, done):
    """Blended bootstrap: r + gamma*((1-alpha)*v_hat + alpha*max_q_next).

    Terminal transitions return r alone.  Elementwise over arrays.
    """
    r = np.asarray(r)
    boot = (1.0 - mix.alpha) * np.asarray(v_hat) + mix.alpha * np.asarray(max_q_next)
    return np.where(done, r, r + mix.gamma * boot)


def dqn_target(r, gamma, max_q_next, done):
    """Standard max-bootstrap target, r on terminals."""
    r = np.asarray(r)
    return np.where(done, r, r + gamma * np.asarray(max_q_next))


def sadq_action(q_values, successor_values, beta: float) -> int:
    """argmax_a of Q(s,a) + beta * V(successor of (s,a)); lowest-index ties."""
    q_values = np.asarray(q_values)
    if beta == 0.0:
        return int(np.argmax(q_values))
    successor_values = np.asarray(successor_values)
    if successor_values.shape != q_values.shape:
        raise ShapeMismatch(
            f"scores {q_values.shape} vs successor values {successor_values.shape}"
        )
    return int(np.argmax(q_values + beta * successor_values))


def dist_expectation(atoms, fractions=None):
    """Expected return of a quantile vector.

    With midpoint fractions the quantile weights are uniform and this is
    the plain mean; an explicit `fractions` vector switches to weights
    reconstructed from the midpoint boundaries.
    """
    atoms = np.asarray(atoms)
    if fractions is None:
        return atoms.mean(axis=-1)
    fractions = np.asarray(fractions, dtype=np.float64)
    inner = 0.5 * (fractions[1:] + fractions[:-1])
    bounds = np.concatenate([[0.0], inner, [1.0]])
    weights = np.diff(bounds)
    return atoms @ weights


def select_promising_successor_dist(atoms_fn, candidates):
    """Best (candidate, action) by expected return; lowest-index ties.

    Returns (candidate_index, action_index).  `atoms_fn` maps a
    (n, obs_dim) batch to (n, n_actions, n_quantiles) target-net atoms.
    """
    candidates = np.asarray(candidates)
    if candidates.ndim != 2 or candidates.shape[0] == 0:
        raise EmptyCandidates("need a nonempty (n, obs_dim) candidate array")
    means = np.asarray(atoms_fn(candidates)).mean(axis=-1)
    flat = int(np.argmax(means))
    n_actions = means.shape[1]
    return flat // n_actions, flat % n_actions


def sadq_dist_target(r, mix: TargetMix, z_hat, z_next, done):
    """Atomwise blended quantile target; all atoms collapse to r on done."""
    z_hat = np.asarray(z_hat)
    z_next = np.asarray(z_next)
    if z_hat.shape != z_next.shape:
        raise ShapeMismatch(f"quantile shapes {z_hat.shape} vs {z_next.shape}")
    r = np.asarray(r, dtype=z_next.dtype)
    single = z_next.ndim == 1
    if single:
        z_hat, z_next = z_hat[None], z_next[None]
        r = np.atleast_1d(r)
        done = np.atleast_1d(done)
    blend = (1.0 - mix.alpha) * z_hat + mix.alpha * z_next
    out = np.where(np.asarray(done)[:, None], r[:, None],
                   r[:, None] + mix.gamma * blend)
    return out[0] if single else out


def epsilon_greedy(greedy_action: int, epsilon: float,
                   rng: np.random.Generator, n_actions: int) -> int:
    """Uniform random action with probability epsilon, else greedy."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(greedy_action)


def quantile_huber_loss(pred: Node, target: np.ndarray,
                        fractions: np.ndarray, kappa: float = 1.0) -> Node:
    """Quantile-regression Huber loss.

    pred: (B, N) predicted atoms (graph node); target: (B, N') constant
    atoms.  Pairwise errors u = target_j - pred_i weighted by
    |tau_i - 1{u<0}| (indicator detached), Huber with threshold kappa;
    summed over the predicted-quantile axis, averaged over target atoms
    and batch.
    """
    b, n = pred.value.shape
    n_t = target.shape[1]
    pred3 = ad.reshape(pred, (b, n, 1))
    u = ad.sub(Node(target[:, None, :].astype(pred.value.dtype)), pred3)
    au = np.abs(u.value)
    small = au <= kappa
    huber = ad.where(small, ad.mul(ad.square(u), 0.5),
                     ad.mul(ad.sub(ad.absolute(u), 0.5 * kappa), kappa))
    factor = np.abs(
        fractions.astype(pred.value.dtype)[None, :, None]
        - (u.value < 0.0)
    )
    return ad.mul(ad.total(ad.mul(huber, factor)), 1.0 / (b * n_t))


def td_loss(pred: Node, targets: np.ndarray, kind: str = "mse") -> Node:
    """Scalar TD loss over a batch: squared error or unit-threshold Huber."""
    diff = ad.sub(pred, targets.astype(pred.value.dtype))
    if kind == "mse":
        return ad.mean(ad.square(diff))
    if kind == "huber":
        small = np.abs(diff.value) <= 1.0
        return ad.mean(ad.where(small, ad.mul(ad.square(diff), 0.5),
                                ad.sub(ad.absolute(diff), 0.5)))
    raise ValueError(f"unknown td loss kind {kind!r}")


class ValueAgent:
    """One Q-learner: networks, optimizer, targets, and action choice."""

    def __init__(self, variant: str, obs_dim: int, n_actions: int, *,
                 hidden_sizes, mix: TargetMix, init_rng: np.random.Generator,
                 lr: float, model: DynModel | None = None,
                 state_norm: float = 1.0, n_quantiles: int = 32,
                 mean_subtract: bool = True, q_loss_kind: str = "mse",
                 model_lr: float | None = None, dtype=np.float32):
        if variant not in AGENT_IDS:
            raise ValueError(f"unknown agent variant {variant!r}")
        if variant in ("sadq", "sadq-dist") and model is None:
            raise ValueError(f"variant {variant!r} needs a dynamics model")
        self.variant = variant
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.mix = mix
        self.state_norm = float(state_norm)
        self.q_loss_kind = q_loss_kind
        self.dtype = dtype
        self.model = model if variant in ("sadq", "sadq-dist") else None

        if variant == "dqn":
            self.online = PlainQNet(obs_dim, n_actions, hidden_sizes,
                                    init_rng, dtype=dtype)
        elif variant in ("dueling", "sadq"):
            self.online = DuelingQNet(obs_dim, n_actions, hidden_sizes,
                                      init_rng, mean_subtract=mean_subtract,
                                      dtype=dtype)
        else:
            self.online = QuantileQNet(obs_dim, n_actions, hidden_sizes,
                                       init_rng, n_quantiles=n_quantiles,
                                       dtype=dtype)
        self.target = self._clone_net(init_rng)
        sync_target(self.online.params, self.target.params)
        self.q_opt = AdamState(self.online.params, lr=lr)
        self.model_opt = None
        if self.model is not None:
            self.model_opt = AdamState(
                self.model.params,
                lr=model_lr if model_lr is not None else lr,
            )

    def _clone_net(self, rng):
        if self.online.kind == "plain":
            return PlainQNet(self.obs_dim, self.n_actions,
                             self.online.spec.hidden_sizes, rng,
                             dtype=self.dtype)
        if self.online.kind == "dueling":
            hidden = (*self.online.trunk.hidden_sizes,
                      self.online.trunk.output_dim)
            return DuelingQNet(self.obs_dim, self.n_actions, hidden, rng,
                               mean_subtract=self.online.mean_subtract,
                               dtype=self.dtype)
        return QuantileQNet(self.obs_dim, self.n_actions,
                            self.online.spec.hidden_sizes, rng,
                            n_quantiles=self.online.n_quantiles,
                            dtype=self.dtype)

    @property
    def distributional(self) -> bool:
        return self.online.kind == "quantile"

    # -- observation handling ------------------------------------------------
    def _norm(self, obs) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if self.state_norm != 1.0:
            obs = obs / self.state_norm
        return obs.astype(self.dtype)

    # -- acting ----------------------------------------------------------------
    def _successor_values_online(self, obs, model_rng) -> np.ndarray:
        """V (online) of each action's imagined successor, shape (|A|,)."""
        succ = self.model.predict_all_successors(np.asarray(obs),
                                                 rng=model_rng)
        succ = succ.astype(self.dtype)
        if self.distributional:
            return self.online.atoms(succ).mean(axis=-1).max(axis=-1)
        return self.online.state_value(succ)

    def greedy_action(self, obs, model_rng=None) -> int:
        """Best action at one raw observation (the beta bonus included)."""
        q = self.online.q_values(self._norm(obs)[None])[0]
        if self.model is not None and self.mix.beta != 0.0:
            v_succ = self._successor_values_online(obs, model_rng)
            return sadq_action(q, v_succ, self.mix.beta)
        return sadq_action(q, None, 0.0)

    def act(self, obs, epsilon: float, explore_rng, model_rng=None) -> int:
        return epsilon_greedy(self.greedy_action(obs, model_rng=model_rng),
                              epsilon, explore_rng, self.n_actions)

    # -- targets ------------------------------------------------------------------
    def _scalar_targets(self, s, r, s2, done, target_model_rng):
        q_next = self.target.q_values(self._norm(s2))
        max_q = q_next.max(axis=1)
        if self.model is None:
            return dqn_target(r, self.mix.gamma, max_q, done)
        succ = self.model.predict_all_successors(np.asarray(s),
                                                 rng=target_model_rng)
        b = succ.shape[0]
        flat = succ.reshape(b * self.n_actions, self.obs_dim).astype(self.dtype)
        v_all = self.target.state_value(flat).reshape(b, self.n_actions)
        v_hat = v_all.max(axis=1)
        return sadq_target(r, self.mix, v_hat, max_q, done)

    def _dist_targets(self, s, r, s2, done, target_model_rng):
        atoms_next = self.target.atoms(self._norm(s2))
        b = atoms_next.shape[0]
        a_star = atoms_next.mean(axis=-1).argmax(axis=-1)
        z_next = atoms_next[np.arange(b), a_star]
        if self.model is None:
            return np.where(np.asarray(done)[:, None],
                            np.asarray(r, dtype=z_next.dtype)[:, None],
                            np.asarray(r, dtype=z_next.dtype)[:, None]
                            + self.mix.gamma * z_next)
        succ = self.model.predict_all_successors(np.asarray(s),
                                                 rng=target_model_rng)
        flat = succ.reshape(b * self.n_actions, self.obs_dim).astype(self.dtype)
        atoms_succ = self.target.atoms(flat).reshape(
            b, self.n_actions, self.n_actions, self.online.n_quantiles)
        means = atoms_succ.mean(axis=-1).reshape(b, -1)
        best = means.argmax(axis=1)
        cand, act = best // self.n_actions, best % self.n_actions
        z_hat = atoms_succ[np.arange(b), cand, act]
        return sadq_dist_target(r, self.mix, z_hat, z_next, done)

    def compute_targets(self, s, r, s2, done, target_model_rng=None):
        """Training targets for a batch: (B,) scalars or (B, N) atoms."""
        if self.distributional:
            return self._dist_targets(s, r, s2, done, target_model_rng)
        return self._scalar_targets(s, r, s2, done, target_model_rng)

    # -- updates --------------------------------------------------------------------
    def q_update(self, s, a, r, s2, done, target_model_rng=None):
        """One gradient step on the Q-network.

        Returns (loss, target_variance): the loss value and the
        population variance of the scalar targets in this batch.
        """
        targets = self.compute_targets(s, r, s2, done, target_model_rng)
        a = np.asarray(a, dtype=np.intp)
        nodes = self.online.params.nodes()
        x = self._norm(s)
        if self.distributional:
            atoms = self.online.atoms_graph(nodes, x)
            b = atoms.value.shape[0]
            flat = ad.reshape(atoms, (b * self.n_actions,
                                      self.online.n_quantiles))
            pred = ad.take_rows(flat, np.arange(b) * self.n_actions + a)
            loss = quantile_huber_loss(pred, targets, self.online.fractions)
            scalar_targets = targets.mean(axis=1)
        else:
            q_all = self.online.q_graph(nodes, x)
            pred = ad.gather_rows(q_all, a)
            loss = td_loss(pred, targets, self.q_loss_kind)
            scalar_targets = targets
        names = self.online.params.names()
        grads = ad.grad(loss, [nodes[k] for k in names])
        adam_step(self.online.params, dict(zip(names, grads)), self.q_opt)
        return float(loss.value), float(np.var(scalar_targets))

    def model_update(self, s, a, s2, noise_rng) -> float:
        return self.model.train_step(self.model_opt, s, a, s2, rng=noise_rng)

    def sync_target(self) -> None:
        sync_target(self.online.params, self.target.params)

    # -- diagnostics --------------------------------------------------------------------
    def q_discrepancy(self, obs_batch) -> float:
        """Mean over states of max_a Q - min_a Q (online network)."""
        q = self.online.q_values(self._norm(obs_batch))
        if self.distributional:
            q = q.reshape(q.shape[0], self.n_actions, -1).mean(axis=-1)
        return float(np.mean(q.max(axis=1) - q.min(axis=1)))

    # -- checkpointing --------------------------------------------------------------------
    def state_dict(self) -> dict:
        out = {
            "online": {k: v.copy() for k, v in self.online.params.items()},
            "target": {k: v.copy() for k, v in self.target.params.items()},
            "q_opt": self.q_opt.state_dict(),
        }
        if self.model is not None:
            out["model"] = {k: v.copy() for k, v in self.model.params.items()}
            out["model_opt"] = self.model_opt.state_dict()
        return out

    def load_state_dict(self, state: dict) -> None:
        for k, v in state["online"].items():
            self.online.params[k][...] = v
        for k, v in state["target"].items():
            self.target.params[k][...] = v
        self.q_opt.load_state_dict(state["q_opt"])
        if self.model is not None:
            for k, v in state["model"].items():
                self.model.params[k][...] = v
            self.model_opt.load_state_dict(state["model_opt"])
