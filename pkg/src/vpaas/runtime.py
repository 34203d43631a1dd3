"""Simulated serverless substrate: network links, function/policy registries,
replica pool with autoscaling, monitor, and the heartbeat failure detector.

Everything runs on a virtual clock in simulated seconds; identical inputs
always replay to identical timelines.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Optional

from .oracle_models import CostCurve, ModelProfile, ModelProfiler


class LinkDown(Exception):
    """A transmit was attempted while the link was inside an outage window."""


class CloudUnavailable(Exception):
    """The cloud path cannot be used; the runtime falls back to the fog backup."""


@dataclass(frozen=True)
class NetworkLink:
    bandwidth_bps: float
    propagation_delay_s: float = 0.0
    outages: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.bandwidth_bps <= 0:
            raise ValueError("bandwidth must be > 0")

    def is_up(self, t: float) -> bool:
        return not any(start <= t < end for start, end in self.outages)

    def transmit(self, nbytes: int, now: float) -> float:
        """Arrival timestamp for nbytes sent at `now`; raises LinkDown mid-outage."""
        if not self.is_up(now):
            raise LinkDown(f"link down at t={now:.3f}s")
        return now + self.propagation_delay_s + nbytes * 8 / self.bandwidth_bps


def transmit(nbytes: int, link: NetworkLink, now: float) -> float:
    return link.transmit(nbytes, now)


@dataclass(frozen=True)
class HeartbeatConfig:
    interval_s: float = 1.0
    miss_threshold: int = 3

    def detection_delay(self) -> float:
        return self.interval_s * self.miss_threshold


def outage_detection_time(outage: tuple[float, float], hb: HeartbeatConfig) -> float:
    """When the fog declares the cloud unreachable for a given outage window."""
    return outage[0] + hb.detection_delay()


FUNCTION_KINDS = ("decode", "encode", "preprocess", "infer", "postprocess", "train")
DEVICE_CLASSES = ("client", "fog", "cloud")


@dataclass
class FunctionSpec:
    function_id: str
    kind: str
    device_class: str
    cost_curve: CostCurve
    replicas: int = 1


@dataclass
class Policy:
    policy_id: str
    rules: dict[str, str]

    DEFAULT_TRIGGER = "default"


class RegistryError(ValueError):
    pass


class Registry:
    """Function and policy registration; infer functions are profiled on arrival."""

    def __init__(self, profiler: Optional[ModelProfiler] = None,
                 profile_batch_sizes: tuple[int, ...] = (1, 4, 8)):
        self.profiler = profiler or ModelProfiler()
        self.profile_batch_sizes = profile_batch_sizes
        self.functions: dict[str, FunctionSpec] = {}
        self.policies: dict[str, Policy] = {}
        self.model_profiles: dict[tuple[str, str], ModelProfile] = {}

    def register_function(self, spec: FunctionSpec) -> str:
        if spec.function_id in self.functions:
            raise RegistryError(f"duplicate function id: {spec.function_id}")
        if spec.kind not in FUNCTION_KINDS:
            raise RegistryError(f"unknown function kind: {spec.kind}")
        if spec.device_class not in DEVICE_CLASSES:
            raise RegistryError(f"unknown device class: {spec.device_class}")
        self.functions[spec.function_id] = spec
        if spec.kind == "infer":
            profile = self.profiler.profile_model(
                spec.function_id, spec.device_class,
                list(self.profile_batch_sizes), spec.cost_curve,
            )
            self.model_profiles[(spec.function_id, spec.device_class)] = profile
        return spec.function_id

    def profile_model(self, model_id: str, device_class: str,
                      batch_sizes: list[int]) -> ModelProfile:
        if model_id not in self.functions:
            raise RegistryError(f"unknown model id: {model_id}")
        return self.profiler.profile_model(
            model_id, device_class, batch_sizes,
            self.functions[model_id].cost_curve,
        )

    def register_policy(self, policy: Policy) -> str:
        if policy.policy_id in self.policies:
            raise RegistryError(f"duplicate policy id: {policy.policy_id}")
        if Policy.DEFAULT_TRIGGER not in policy.rules:
            raise RegistryError("policy must define a default action")
        self.policies[policy.policy_id] = policy
        return policy.policy_id


@dataclass
class Job:
    arrival: float
    duration: float
    start: float = 0.0
    finish: float = 0.0


class ReplicaPool:
    """FIFO pool of identical replicas with per-replica busy-until times."""

    def __init__(self, replicas: int = 1):
        if replicas < 1:
            raise ValueError("need at least one replica")
        self.free_at = [0.0] * replicas
        self.jobs: list[Job] = []

    @property
    def replicas(self) -> int:
        return len(self.free_at)

    def submit(self, arrival: float, duration: float) -> Job:
        i = min(range(len(self.free_at)), key=lambda k: self.free_at[k])
        start = max(arrival, self.free_at[i])
        job = Job(arrival=arrival, duration=duration, start=start, finish=start + duration)
        self.free_at[i] = job.finish
        self.jobs.append(job)
        return job

    def scale_to(self, n: int, now: float) -> None:
        n = max(n, 1)
        while len(self.free_at) < n:
            self.free_at.append(now)
        while len(self.free_at) > n:
            # retire the least-loaded replica so running jobs finish
            self.free_at.remove(min(self.free_at))

    def queue_depth(self, t: float) -> int:
        return sum(1 for j in self.jobs if j.arrival <= t < j.start)

    def utilization(self, t: float) -> float:
        busy = sum(1 for j in self.jobs if j.start <= t < j.finish)
        return min(busy / self.replicas, 1.0)


@dataclass(frozen=True)
class MonitorSample:
    timestamp: float
    utilization: float
    queue_depth: int
    replicas: int


class Monitor:
    def __init__(self, period_s: float = 1.0):
        self.period_s = period_s
        self.samples: list[MonitorSample] = []

    def sample(self, t: float, pool: ReplicaPool) -> MonitorSample:
        s = MonitorSample(
            timestamp=t,
            utilization=pool.utilization(t),
            queue_depth=pool.queue_depth(t),
            replicas=pool.replicas,
        )
        self.samples.append(s)
        return s


@dataclass(frozen=True)
class AutoscaleConfig:
    high_water: float = 2.0
    low_water: float = 0.5
    min_replicas: int = 1
    max_replicas: int = 8
    window_s: float = 5.0

    def __post_init__(self):
        if self.low_water >= self.high_water:
            raise ValueError("hysteresis requires low_water < high_water")


def provision(window: list[MonitorSample], cfg: AutoscaleConfig, current: int) -> int:
    """Replica delta from the mean queue depth over a monitor window."""
    if not window:
        return 0
    mean_depth = sum(s.queue_depth for s in window) / len(window)
    if mean_depth > cfg.high_water and current < cfg.max_replicas:
        return 1
    if mean_depth < cfg.low_water and current > cfg.min_replicas:
        return -1
    return 0


@dataclass
class ScalingResult:
    replica_series: list[tuple[float, int]]
    samples: list[MonitorSample]
    jobs: list[Job]

    def latencies_between(self, t0: float, t1: float) -> list[float]:
        return sorted(j.finish - j.arrival for j in self.jobs if t0 <= j.arrival < t1)

    def p50_between(self, t0: float, t1: float) -> float:
        lat = self.latencies_between(t0, t1)
        return lat[len(lat) // 2] if lat else 0.0


def run_scaling_scenario(
    base_rate_hz: float = 1.0,
    spike_factor: float = 4.0,
    job_duration_s: float = 0.6,
    phase_s: float = 60.0,
    autoscale: AutoscaleConfig = AutoscaleConfig(),
    monitor_period_s: float = 1.0,
) -> ScalingResult:
    """Arrival-rate step scenario: base rate, x-spike, back to base.

    Deterministic inter-arrival times; the provisioner reacts at each window
    boundary to the mean queue depth of the preceding window.
    """
    arrivals: list[float] = []
    t = 0.0
    for phase, rate in enumerate([base_rate_hz, base_rate_hz * spike_factor, base_rate_hz]):
        end = (phase + 1) * phase_s
        step = 1.0 / rate
        while t < end:
            arrivals.append(t)
            t += step

    pool = ReplicaPool(autoscale.min_replicas)
    monitor = Monitor(monitor_period_s)
    replica_series: list[tuple[float, int]] = [(0.0, pool.replicas)]
    next_sample = monitor_period_s
    next_window = autoscale.window_s
    horizon = 3 * phase_s

    def advance(until: float):
        nonlocal next_sample, next_window
        while next_sample <= until:
            monitor.sample(next_sample, pool)
            if next_sample >= next_window:
                window = [s for s in monitor.samples
                          if next_window - autoscale.window_s < s.timestamp <= next_window]
                delta = provision(window, autoscale, pool.replicas)
                if delta:
                    pool.scale_to(pool.replicas + delta, next_window)
                    replica_series.append((next_window, pool.replicas))
                next_window += autoscale.window_s
            next_sample += monitor_period_s

    for arrival in arrivals:
        advance(arrival)
        pool.submit(arrival, job_duration_s)
    advance(horizon)
    return ScalingResult(replica_series=replica_series, samples=monitor.samples, jobs=pool.jobs)
