"""End-to-end training: collect, model and Q updates, eval, checkpoints.

The loop alternates a collect block (``replay_frequency`` env steps with
epsilon-greedy over the lookahead action rule) with a train block
(``update_per_collect`` Q updates, each preceded by ``k`` dynamics-model
updates). Target syncs and evaluations trigger on env-step boundaries.
Every random draw comes from a named stream derived from the run seed, so
runs are bit-reproducible and checkpoint resume is exact.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from sadq import checkpoint as ckpt
from sadq.agent import TargetMix, ValueAgent
from sadq.config import TrainConfig, config_from_dict
from sadq.dynamics import DynModel
from sadq.envs import make_env
from sadq.envs.ocloud import OCloudConfig
from sadq.metrics import MetricsRow, MetricsWriter
from sadq.replay import ReplayBuffer, Transition
from sadq.rng import RngStreams


class NonFiniteLoss(RuntimeError):
    """A loss went NaN/inf; training aborts with a diagnostic dump."""


@dataclass
class EpsilonSchedule:
    """Linear exploration decay, clamped at ``end`` after ``decay_steps``."""

    start: float
    end: float
    decay_steps: int

    def __post_init__(self):
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.end <= 1.0):
            raise ValueError("epsilon bounds must lie in [0,1]")
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")


def epsilon_at(schedule: EpsilonSchedule, step: int) -> float:
    """Exploration rate after ``step`` environment steps."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if step >= schedule.decay_steps:
        return schedule.end
    frac = step / schedule.decay_steps
    return schedule.start + (schedule.end - schedule.start) * frac


@dataclass
class EvalReport:
    returns: np.ndarray
    solved: np.ndarray          # reached a true terminal (not horizon cut)
    visited: np.ndarray         # all observations seen, stacked

    @property
    def mean(self):
        return float(self.returns.mean())

    @property
    def std(self):
        return float(self.returns.std())


def evaluate(agent, env, episodes, env_rng, action_rng):
    """Run greedy episodes (epsilon 0, lookahead bonus active)."""
    returns = np.zeros(episodes)
    solved = np.zeros(episodes, dtype=bool)
    visited = []
    env.reset(seed=int(env_rng.integers(2 ** 63)))
    for ep in range(episodes):
        obs = env.reset()
        total = 0.0
        while True:
            visited.append(obs)
            a = agent.greedy_action(obs, model_rng=action_rng)
            res = env.step(a)
            total += res.reward
            obs = res.next_obs
            if res.ended:
                solved[ep] = res.done
                break
        returns[ep] = total
    return EvalReport(returns, solved, np.stack(visited))


@dataclass
class RunResult:
    rows: list
    env_steps: int
    grad_steps: int
    model_steps: int
    episode_returns: np.ndarray
    q_loss_history: np.ndarray
    model_loss_history: np.ndarray
    stopped_early: bool

    @property
    def final_eval(self):
        return self.rows[-1].eval_return_mean if self.rows else float("nan")

    @property
    def best_eval(self):
        finite = [r.eval_return_mean for r in self.rows
                  if np.isfinite(r.eval_return_mean)]
        return max(finite) if finite else float("nan")


def _build_env(cfg: TrainConfig):
    if cfg.env_id == "ocloud":
        return make_env("ocloud", config=OCloudConfig(**cfg.env_params))
    return make_env(cfg.env_id, **cfg.env_params)


class Trainer:
    """One seeded training run; drive it with run(), checkpoint anytime."""

    def __init__(self, cfg: TrainConfig, seed: int, out_dir=None, clock=None):
        cfg.validate()
        self.cfg = cfg
        self.seed = int(seed)
        self.out_dir = out_dir
        # deterministic metrics by default; pass time.monotonic for real times
        self.clock = clock if clock is not None else (lambda: 0.0)
        self.streams = RngStreams(self.seed)

        self.env = _build_env(cfg)
        self.eval_env = _build_env(cfg)
        spec = self.env.spec
        self.schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end,
                                        cfg.eps_decay)

        model = None
        if cfg.variant in ("sadq", "sadq-dist"):
            model = DynModel(spec.obs_dim, spec.action_count,
                             cfg.m_hidden_sizes,
                             self.streams.get("init.model"),
                             state_norm=cfg.state_norm,
                             loss_kind=cfg.m_loss, dtype=np.float32)
        self.agent = ValueAgent(
            cfg.variant, spec.obs_dim, spec.action_count,
            hidden_sizes=cfg.q_hidden_sizes,
            mix=TargetMix(cfg.alpha, cfg.beta, cfg.gamma),
            init_rng=self.streams.get("init.q"), lr=cfg.q_lr, model=model,
            state_norm=cfg.state_norm, n_quantiles=cfg.n_quantiles,
            q_loss_kind=cfg.q_loss, model_lr=cfg.m_lr, dtype=np.float32)

        self.buffer = ReplayBuffer(cfg.buffer_size, spec.obs_dim)
        self.learning_starts = cfg.q_batch_size
        if model is not None:
            self.learning_starts = max(cfg.q_batch_size, cfg.m_batch_size)

        self.env_steps = 0
        self.grad_steps = 0
        self.model_steps = 0
        self._last_sync_idx = 0
        self._last_eval_idx = 0
        self.rows = []
        self.episode_returns = []
        self.q_loss_history = []
        self.model_loss_history = []
        self.target_var_history = []
        self._pending_q_losses = []
        self._pending_m_losses = []
        self._pending_tvars = []
        self._episode_return = 0.0
        self.stopped_early = False
        self._writer = None

        self._obs = self.env.reset(
            seed=int(self.streams.get("env").integers(2 ** 63)))

        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "config.json"), "w") as fh:
                json.dump({"seed": self.seed, **cfg.to_dict()}, fh, indent=2)
            self._writer = MetricsWriter(os.path.join(out_dir, "metrics.csv"))

    # -- collect ------------------------------------------------------------------
    def _choose_action(self):
        explore = self.streams.get("explore")
        if self.buffer.size < self.learning_starts:
            return int(explore.integers(self.agent.n_actions))
        eps = epsilon_at(self.schedule, self.env_steps)
        return self.agent.act(self._obs, eps, explore,
                              model_rng=self.streams.get("action.model"))

    def collect_block(self, n_steps):
        for _ in range(n_steps):
            a = self._choose_action()
            res = self.env.step(a)
            self.buffer.push(Transition(self._obs, a, res.reward,
                                        res.next_obs, res.done,
                                        res.truncated))
            self.env_steps += 1
            self._episode_return += res.reward
            if res.ended:
                self.episode_returns.append(self._episode_return)
                self._episode_return = 0.0
                self._obs = self.env.reset()
            else:
                self._obs = res.next_obs

    # -- train ------------------------------------------------------------------
    def _abort_non_finite(self, kind, value):
        dump = {
            "loss": kind,
            "value": repr(value),
            "env_steps": self.env_steps,
            "grad_steps": self.grad_steps,
            "model_steps": self.model_steps,
            "recent_q_losses": self.q_loss_history[-20:],
            "recent_model_losses": self.model_loss_history[-20:],
        }
        if self.out_dir is not None:
            with open(os.path.join(self.out_dir,
                                   "nonfinite_dump.json"), "w") as fh:
                json.dump(dump, fh, indent=2)
        raise NonFiniteLoss(
            f"{kind} loss became {value!r} at env_step {self.env_steps}, "
            f"grad_step {self.grad_steps}")

    def train_block(self):
        if self.buffer.size < self.learning_starts:
            return
        cfg = self.cfg
        for _ in range(cfg.update_per_collect):
            if self.agent.model is not None:
                for _ in range(cfg.k):
                    mb = self.buffer.sample(cfg.m_batch_size,
                                            self.streams.get("replay.m"))
                    ml = self.agent.model_update(
                        mb.s, mb.a, mb.s_next,
                        noise_rng=self.streams.get("model.noise"))
                    if not np.isfinite(ml):
                        self._abort_non_finite("model", ml)
                    self.model_steps += 1
                    self.model_loss_history.append(ml)
                    self._pending_m_losses.append(ml)
            qb = self.buffer.sample(cfg.q_batch_size,
                                    self.streams.get("replay.q"))
            loss, tvar = self.agent.q_update(
                qb.s, qb.a, qb.r, qb.s_next, qb.done,
                target_model_rng=self.streams.get("target.model"))
            if not np.isfinite(loss):
                self._abort_non_finite("q", loss)
            self.grad_steps += 1
            self.q_loss_history.append(loss)
            self.target_var_history.append(tvar)
            self._pending_q_losses.append(loss)
            self._pending_tvars.append(tvar)

    # -- periodic work ------------------------------------------------------------------
    def maybe_sync_target(self):
        idx = self.env_steps // self.cfg.target_update_interval
        if idx > self._last_sync_idx:
            self._last_sync_idx = idx
            self.agent.sync_target()

    def _drain(self, values):
        out = float(np.mean(values)) if values else float("nan")
        values.clear()
        return out

    def run_evaluation(self):
        report = evaluate(self.agent, self.eval_env, self.cfg.eval_episodes,
                          self.streams.get("eval.env"),
                          self.streams.get("eval.action"))
        row = MetricsRow(
            wall_clock=float(self.clock()),
            env_steps=self.env_steps,
            grad_steps=self.grad_steps,
            eval_return_mean=report.mean,
            eval_return_std=report.std,
            q_loss=self._drain(self._pending_q_losses),
            model_loss=self._drain(self._pending_m_losses),
            epsilon=epsilon_at(self.schedule, self.env_steps),
            q_discrepancy=self.agent.q_discrepancy(report.visited),
            target_variance_estimate=self._drain(self._pending_tvars),
        )
        self.rows.append(row)
        if self._writer is not None:
            self._writer.write(row)
        if (self.cfg.stop_return is not None
                and report.mean >= self.cfg.stop_return):
            self.stopped_early = True
        return report

    def maybe_eval(self):
        idx = self.env_steps // self.cfg.eval_interval
        if idx > self._last_eval_idx:
            self._last_eval_idx = idx
            self.run_evaluation()

    # -- driver ------------------------------------------------------------------
    def run(self, until_env_steps=None):
        """Advance training to ``until_env_steps`` (default: the full run)."""
        cfg = self.cfg
        limit = cfg.total_steps
        if until_env_steps is not None:
            limit = min(limit, until_env_steps)
        while self.env_steps < limit and not self.stopped_early:
            block = min(cfg.replay_frequency, limit - self.env_steps)
            self.collect_block(block)
            self.train_block()
            self.maybe_sync_target()
            self.maybe_eval()
        finished = self.stopped_early or self.env_steps >= cfg.total_steps
        if finished and (not self.rows
                         or self.rows[-1].env_steps != self.env_steps):
            self.run_evaluation()
        if finished and self.out_dir is not None:
            self.save(os.path.join(self.out_dir, "final.ckpt"))
        return self.result()

    def result(self):
        return RunResult(
            rows=list(self.rows),
            env_steps=self.env_steps,
            grad_steps=self.grad_steps,
            model_steps=self.model_steps,
            episode_returns=np.array(self.episode_returns),
            q_loss_history=np.array(self.q_loss_history),
            model_loss_history=np.array(self.model_loss_history),
            stopped_early=self.stopped_early,
        )

    # -- checkpointing ------------------------------------------------------------------
    def save(self, path):
        arrays = {"trainer/obs": np.asarray(self._obs)}
        agent_state = self.agent.state_dict()
        for group in ("online", "target"):
            for name, arr in agent_state[group].items():
                arrays[f"agent/{group}/{name}"] = arr
        opt_meta = {}
        for opt_name in ("q_opt", "model_opt"):
            if opt_name not in agent_state:
                continue
            opt = agent_state[opt_name]
            opt_meta[opt_name] = {"t": opt["t"]}
            for moment in ("m", "v"):
                for name, arr in opt[moment].items():
                    arrays[f"agent/{opt_name}/{moment}/{name}"] = arr
        if "model" in agent_state:
            for name, arr in agent_state["model"].items():
                arrays[f"agent/model/{name}"] = arr
        buf = self.buffer.state_dict()
        for key in ("s", "a", "r", "s_next", "done", "truncated"):
            arrays[f"buffer/{key}"] = buf[key]
        for key, values in (("hist/q_loss", self.q_loss_history),
                            ("hist/model_loss", self.model_loss_history),
                            ("hist/target_var", self.target_var_history),
                            ("hist/episode_returns", self.episode_returns)):
            arrays[key] = np.array(values)
        meta = {
            "config": self.cfg.to_dict(),
            "seed": self.seed,
            "counters": {
                "env_steps": self.env_steps,
                "grad_steps": self.grad_steps,
                "model_steps": self.model_steps,
                "last_sync_idx": self._last_sync_idx,
                "last_eval_idx": self._last_eval_idx,
            },
            "opt": opt_meta,
            "buffer": {"capacity": buf["capacity"], "obs_dim": buf["obs_dim"],
                       "size": buf["size"], "cursor": buf["cursor"]},
            "streams": self.streams.state_dict(),
            "env": self.env.state_dict(),
            "episode_return": self._episode_return,
            "pending": {"q": list(self._pending_q_losses),
                        "m": list(self._pending_m_losses),
                        "tvar": list(self._pending_tvars)},
            "rows": [vars(r) for r in self.rows],
            "stopped_early": self.stopped_early,
        }
        ckpt.save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path, out_dir=None, clock=None):
        """Rebuild a Trainer whose continued run is bit-identical."""
        arrays, meta = ckpt.load_checkpoint(path)
        cfg = config_from_dict(meta["config"])
        t = cls(cfg, meta["seed"], out_dir=out_dir, clock=clock)

        agent_state = {"online": {}, "target": {}}
        for name, arr in arrays.items():
            parts = name.split("/")
            if parts[0] == "agent" and parts[1] in ("online", "target"):
                agent_state[parts[1]][parts[2]] = arr
        for opt_name, opt_info in meta["opt"].items():
            opt = {"t": opt_info["t"], "m": {}, "v": {}}
            prefix = f"agent/{opt_name}/"
            for name, arr in arrays.items():
                if name.startswith(prefix):
                    _, _, moment, pname = name.split("/", 3)
                    opt[moment][pname] = arr
            agent_state[opt_name] = opt
        model_params = {name.split("/", 2)[2]: arr
                        for name, arr in arrays.items()
                        if name.startswith("agent/model/")}
        if model_params:
            agent_state["model"] = model_params
        t.agent.load_state_dict(agent_state)

        buf_state = dict(meta["buffer"])
        for key in ("s", "a", "r", "s_next", "done", "truncated"):
            buf_state[key] = arrays[f"buffer/{key}"]
        t.buffer.load_state_dict(buf_state)

        t.streams.load_state_dict(meta["streams"])
        t.env.load_state_dict(meta["env"])
        t._obs = arrays["trainer/obs"].copy()

        counters = meta["counters"]
        t.env_steps = int(counters["env_steps"])
        t.grad_steps = int(counters["grad_steps"])
        t.model_steps = int(counters["model_steps"])
        t._last_sync_idx = int(counters["last_sync_idx"])
        t._last_eval_idx = int(counters["last_eval_idx"])
        t.q_loss_history = list(arrays["hist/q_loss"])
        t.model_loss_history = list(arrays["hist/model_loss"])
        t.target_var_history = list(arrays["hist/target_var"])
        t.episode_returns = list(arrays["hist/episode_returns"])
        t._episode_return = float(meta["episode_return"])
        t._pending_q_losses = list(meta["pending"]["q"])
        t._pending_m_losses = list(meta["pending"]["m"])
        t._pending_tvars = list(meta["pending"]["tvar"])
        t.rows = [MetricsRow(**row) for row in meta["rows"]]
        t.stopped_early = bool(meta["stopped_early"])
        if t._writer is not None:
            for row in t.rows:
                t._writer.write(row)
        return t

    def close(self):
        if self._writer is not None:
            self._writer.close()
            self._writer = None


def train_run(cfg: TrainConfig, out_dir=None, clock=None):
    """Run every seed in the config; returns {seed: RunResult}."""
    results = {}
    for seed in cfg.seeds:
        run_dir = None
        if out_dir is not None:
            run_dir = os.path.join(out_dir, f"seed{seed}")
        trainer = Trainer(cfg, seed, out_dir=run_dir, clock=clock)
        try:
            results[seed] = trainer.run()
        finally:
            trainer.close()
    return results
