"""Datacenter task-placement simulator.

M servers execute a chronological stream of tasks; the agent picks a
server for each arriving task.  A task runs immediately when the chosen
server has CPU and RAM headroom and an empty queue, otherwise it waits
in that server's FIFO queue.  Reward trades off instantaneous power
draw against the per-step growth of cumulative waiting latency.

Observation (raw, unscaled):
    [c_req, r_req, t_occ,  u_cpu per server,  u_ram per server,
     queue length per server,  queue penalty per server]

Time is integer-valued; one env step per arriving task, so a step may
advance the clock by zero (simultaneous arrivals) or several units.
Demands are quantized to dyadic fractions so resource sums and queue
penalties are exact in floating point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .base import Environment, EnvSpec


class ParseError(ValueError):
    """Malformed trace row; message carries the 1-based line number."""


class EmptyTrace(ValueError):
    """Trace file contained no task rows."""


@dataclass(frozen=True)
class TaskRequest:
    c_req: float
    r_req: float
    t_occ: int
    t_arr: int

    def __post_init__(self):
        if not (0.0 < self.c_req <= 1.0):
            raise ValueError(f"c_req {self.c_req} outside (0, 1]")
        if not (0.0 < self.r_req <= 1.0):
            raise ValueError(f"r_req {self.r_req} outside (0, 1]")
        if self.t_occ < 1:
            raise ValueError(f"t_occ {self.t_occ} must be >= 1")


@dataclass(frozen=True)
class OCloudConfig:
    server_count: int = 10
    w1: float = 0.1
    w2: float = 0.005
    p0: float = 100.0
    p1: float = 200.0
    warmup_tasks: int = 1000
    episode_tasks: int = 200
    state_norm: float = 50.0
    trace_path: str | None = None

    def __post_init__(self):
        if self.server_count < 1:
            raise ValueError("server_count must be >= 1")
        if not (self.p1 > self.p0 > 0):
            raise ValueError("need p1 > p0 > 0")
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("w1, w2 must be >= 0")
        if self.warmup_tasks < 0 or self.episode_tasks < 1:
            raise ValueError("bad warmup/episode task counts")
        if self.state_norm <= 0:
            raise ValueError("state_norm must be positive")


def ocloud_power(u_cpu, p0: float, p1: float) -> float:
    """Total instantaneous power across servers.

    Per server: p0 + (p1 - p0) * (2u - u^1.4) / p1, summed over the
    utilization vector.
    """
    u = np.asarray(u_cpu, dtype=np.float64)
    return float(np.sum(p0 + (p1 - p0) * (2.0 * u - u ** 1.4) / p1))


def ocloud_reward(power: float, latency_delta: float,
                  w1: float, w2: float) -> float:
    """Weighted penalty: -(w1 * power + w2 * latency_delta)."""
    return -(w1 * power + w2 * latency_delta)


def _quantize_up(x: float, grid: int) -> float:
    """Round x up to the next multiple of 1/grid (keeps positives positive)."""
    return math.ceil(x * grid) / grid


def trace_synthesize(seed: int, count: int) -> list:
    """Deterministic synthetic workload.

    Inter-arrival gaps are Poisson(1); demands uniform on (0.05, 0.5]
    quantized up to 1/256; occupation times uniform integers 1..20.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    gaps = rng.poisson(1.0, size=count)
    gaps[0] = 0
    arrivals = np.cumsum(gaps)
    cpu = rng.uniform(0.05, 0.5, size=count)
    ram = rng.uniform(0.05, 0.5, size=count)
    occ = rng.integers(1, 21, size=count)
    return [
        TaskRequest(
            c_req=_quantize_up(float(cpu[i]), 256),
            r_req=_quantize_up(float(ram[i]), 256),
            t_occ=int(occ[i]),
            t_arr=int(arrivals[i]),
        )
        for i in range(count)
    ]


TRACE_COLUMNS = ("arrival_time", "duration", "cpu_demand", "ram_demand")


def trace_load(path) -> list:
    """Load a task trace from a headered CSV file.

    Columns: arrival_time, duration, cpu_demand, ram_demand.  Demands
    are clamped into (0, 1] (nonpositive values are rejected) and
    quantized up to 1/2^20 so downstream resource arithmetic is exact.
    Rows come back sorted by arrival time, stable on ties.
    """
    tasks = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTrace(f"{path}: no header row") from None
        names = tuple(h.strip() for h in header)
        if names != TRACE_COLUMNS:
            raise ParseError(
                f"line 1: expected header {','.join(TRACE_COLUMNS)}, "
                f"got {','.join(names)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"line {lineno}: expected 4 fields, got {len(row)}")
            try:
                t_arr = int(row[0])
                t_occ = int(row[1])
                c_req = float(row[2])
                r_req = float(row[3])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if t_occ < 1:
                raise ParseError(f"line {lineno}: duration {t_occ} must be >= 1")
            if c_req <= 0 or r_req <= 0:
                raise ParseError(
                    f"line {lineno}: demands must be positive, "
                    f"got cpu={c_req} ram={r_req}"
                )
            c_req = min(_quantize_up(c_req, 1 << 20), 1.0)
            r_req = min(_quantize_up(r_req, 1 << 20), 1.0)
            tasks.append(TaskRequest(c_req, r_req, t_occ, t_arr))
    if not tasks:
        raise EmptyTrace(f"{path}: no task rows")
    tasks.sort(key=lambda t: t.t_arr)
    return tasks


@dataclass
class _Server:
    u_cpu: float = 0.0
    u_ram: float = 0.0
    p_queue: float = 0.0
    # running: [c, r, finish_time]; queue: [c, r, t_occ, t_arr]
    running: list = field(default_factory=list)
    queue: list = field(default_factory=list)


class OCloud(Environment):
    """Server-selection environment over a task trace."""

    def __init__(self, rng=None, config: OCloudConfig | None = None,
                 tasks: list | None = None):
        super().__init__(rng)
        self.config = config if config is not None else OCloudConfig()
        c = self.config
        self.spec = EnvSpec(
            obs_dim=3 + 4 * c.server_count,
            action_count=c.server_count,
            max_steps=c.episode_tasks,
            reward_range=(-1e6, 0.0),
        )
        self._fixed_tasks = tasks
        if tasks is None and c.trace_path is not None:
            self._fixed_tasks = trace_load(c.trace_path)
        self._servers: list[_Server] = []
        self._trace: list[TaskRequest] = []
        self._task_idx = 0
        self._now = 0
        # cumulative-latency bookkeeping (all integers, exact):
        # total(now) = started_total + n_waiting * now - waiting_arr_sum
        self._started_total = 0
        self._n_waiting = 0
        self._waiting_arr_sum = 0
        self._latency_prev = 0

    # -- latency accounting ------------------------------------------------
    def cumulative_latency(self) -> int:
        """Waiting time accrued by all arrived tasks up to the clock."""
        return (self._started_total
                + self._n_waiting * self._now - self._waiting_arr_sum)

    def _mark_enqueued(self, t_arr: int) -> None:
        self._n_waiting += 1
        self._waiting_arr_sum += t_arr

    def _mark_started(self, t_arr: int, start: int) -> None:
        self._n_waiting -= 1
        self._waiting_arr_sum -= t_arr
        self._started_total += start - t_arr

    # -- resource mechanics -------------------------------------------------
    def _fits(self, srv: _Server, c: float, r: float) -> bool:
        return srv.u_cpu + c <= 1.0 and srv.u_ram + r <= 1.0

    def _start_task(self, srv: _Server, c: float, r: float, t_occ: int,
                    at: int) -> None:
        srv.u_cpu += c
        srv.u_ram += r
        srv.running.append([c, r, at + t_occ])

    def _drain_queue(self, srv: _Server, at: int) -> None:
        # strict FIFO: stop at the first task that does not fit
        while srv.queue and self._fits(srv, srv.queue[0][0], srv.queue[0][1]):
            c, r, t_occ, t_arr = srv.queue.pop(0)
            srv.p_queue -= (c + r) * t_occ
            self._mark_started(t_arr, at)
            self._start_task(srv, c, r, t_occ, at)

    def _assign(self, srv: _Server, task: TaskRequest) -> None:
        if not srv.queue and self._fits(srv, task.c_req, task.r_req):
            self._start_task(srv, task.c_req, task.r_req, task.t_occ,
                             self._now)
            self._started_total += self._now - task.t_arr
        else:
            srv.queue.append([task.c_req, task.r_req, task.t_occ, task.t_arr])
            srv.p_queue += (task.c_req + task.r_req) * task.t_occ
            self._mark_enqueued(task.t_arr)

    def _advance_time(self, to_time: int) -> None:
        while True:
            finish = None
            for srv in self._servers:
                for item in srv.running:
                    if finish is None or item[2] < finish:
                        finish = item[2]
            if finish is None or finish > to_time:
                break
            for srv in self._servers:
                done_here = [it for it in srv.running if it[2] == finish]
                if not done_here:
                    continue
                srv.running = [it for it in srv.running if it[2] != finish]
                for c, r, _ in done_here:
                    srv.u_cpu -= c
                    srv.u_ram -= r
                self._drain_queue(srv, finish)
        self._now = to_time

    # -- observation ---------------------------------------------------------
    def _obs(self) -> np.ndarray:
        task = self._trace[self._task_idx]
        m = self.config.server_count
        out = np.empty(3 + 4 * m)
        out[0] = task.c_req
        out[1] = task.r_req
        out[2] = task.t_occ
        for i, srv in enumerate(self._servers):
            out[3 + i] = srv.u_cpu
            out[3 + m + i] = srv.u_ram
            out[3 + 2 * m + i] = len(srv.queue)
            out[3 + 3 * m + i] = srv.p_queue
        return out

    # -- environment hooks -----------------------------------------------------
    def _reset_impl(self) -> np.ndarray:
        c = self.config
        need = c.warmup_tasks + c.episode_tasks + 1
        if self._fixed_tasks is not None:
            if len(self._fixed_tasks) < need:
                raise ValueError(
                    f"trace has {len(self._fixed_tasks)} tasks, "
                    f"need {need} (warmup + episode + 1)"
                )
            self._trace = self._fixed_tasks
        else:
            self._trace = trace_synthesize(
                int(self._rng.integers(2 ** 63)), need
            )
        self._servers = [_Server() for _ in range(c.server_count)]
        self._task_idx = 0
        self._now = self._trace[0].t_arr
        self._started_total = 0
        self._n_waiting = 0
        self._waiting_arr_sum = 0
        for _ in range(c.warmup_tasks):
            task = self._trace[self._task_idx]
            self._advance_time(task.t_arr)
            least = min(range(c.server_count),
                        key=lambda i: self._servers[i].u_cpu)
            self._assign(self._servers[least], task)
            self._task_idx += 1
        self._advance_time(self._trace[self._task_idx].t_arr)
        self._latency_prev = self.cumulative_latency()
        return self._obs()

    def _step_impl(self, action: int):
        task = self._trace[self._task_idx]
        self._assign(self._servers[action], task)
        power = ocloud_power([s.u_cpu for s in self._servers],
                             self.config.p0, self.config.p1)
        self._task_idx += 1
        self._advance_time(self._trace[self._task_idx].t_arr)
        total = self.cumulative_latency()
        latency_delta = total - self._latency_prev
        self._latency_prev = total
        reward = ocloud_reward(power, latency_delta,
                               self.config.w1, self.config.w2)
        return self._obs(), reward, False

    # -- checkpoint -----------------------------------------------------------
    def _state_extra(self) -> dict:
        return {
            "task_idx": self._task_idx,
            "now": self._now,
            "started_total": self._started_total,
            "n_waiting": self._n_waiting,
            "waiting_arr_sum": self._waiting_arr_sum,
            "latency_prev": self._latency_prev,
            "servers": [
                {
                    "u_cpu": s.u_cpu, "u_ram": s.u_ram, "p_queue": s.p_queue,
                    "running": [list(it) for it in s.running],
                    "queue": [list(it) for it in s.queue],
                }
                for s in self._servers
            ],
            "trace": [[t.c_req, t.r_req, t.t_occ, t.t_arr]
                      for t in self._trace],
        }

    def _load_extra(self, extra: dict) -> None:
        self._task_idx = int(extra["task_idx"])
        self._now = int(extra["now"])
        self._started_total = int(extra["started_total"])
        self._n_waiting = int(extra["n_waiting"])
        self._waiting_arr_sum = int(extra["waiting_arr_sum"])
        self._latency_prev = int(extra["latency_prev"])
        self._servers = []
        for s in extra["servers"]:
            srv = _Server(u_cpu=float(s["u_cpu"]), u_ram=float(s["u_ram"]),
                          p_queue=float(s["p_queue"]))
            srv.running = [list(it) for it in s["running"]]
            srv.queue = [list(it) for it in s["queue"]]
            self._servers.append(srv)
        self._trace = [TaskRequest(c, r, int(o), int(a))
                       for c, r, o, a in extra["trace"]]
