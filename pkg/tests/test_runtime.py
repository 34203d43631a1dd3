import pytest
from hypothesis import given
from hypothesis import strategies as st

from vpaas.oracle_models import CostCurve
from vpaas.runtime import (
    AutoscaleConfig,
    FunctionSpec,
    HeartbeatConfig,
    LinkDown,
    Monitor,
    MonitorSample,
    NetworkLink,
    Policy,
    Registry,
    RegistryError,
    ReplicaPool,
    outage_detection_time,
    provision,
    run_scaling_scenario,
    transmit,
)


def test_transmit_reference_value():
    link = NetworkLink(bandwidth_bps=10_000_000)
    assert transmit(1_250_000, link, 0.0) == pytest.approx(1.0)


def test_transmit_zero_bytes_is_propagation_only():
    link = NetworkLink(bandwidth_bps=1e6, propagation_delay_s=0.02)
    assert link.transmit(0, 5.0) == pytest.approx(5.02)


def test_transmit_raises_during_outage():
    link = NetworkLink(bandwidth_bps=1e6, outages=((10.0, 20.0),))
    link.transmit(100, 9.9)
    with pytest.raises(LinkDown):
        link.transmit(100, 10.0)
    with pytest.raises(LinkDown):
        link.transmit(100, 19.999)
    link.transmit(100, 20.0)


@given(st.integers(min_value=0, max_value=10**9),
       st.integers(min_value=0, max_value=10**9))
def test_transmit_linear_in_bytes(n1, n2):
    link = NetworkLink(bandwidth_bps=8e6, propagation_delay_s=0.05)
    t1 = link.transmit(n1, 0.0) - 0.05
    t2 = link.transmit(n2, 0.0) - 0.05
    total = link.transmit(n1 + n2, 0.0) - 0.05
    assert total == pytest.approx(t1 + t2, abs=1e-9)


def test_heartbeat_detection_time():
    hb = HeartbeatConfig(interval_s=1.0, miss_threshold=3)
    assert outage_detection_time((25.0, 60.0), hb) == 28.0


def test_registry_profiles_infer_functions():
    reg = Registry()
    fid = reg.register_function(FunctionSpec(
        function_id="detector", kind="infer", device_class="cloud",
        cost_curve=CostCurve(base_ms=10.0, per_item_ms=5.0)))
    assert ("detector", "cloud") in reg.model_profiles
    profile = reg.model_profiles[(fid, "cloud")]
    assert profile.latency_ms_per_batch[1] == 15.0


def test_registry_rejects_bad_registrations():
    reg = Registry()
    spec = FunctionSpec(function_id="f", kind="encode", device_class="fog",
                        cost_curve=CostCurve(1.0, 1.0))
    reg.register_function(spec)
    with pytest.raises(RegistryError):
        reg.register_function(spec)
    with pytest.raises(RegistryError):
        reg.register_function(FunctionSpec("g", "mystery", "fog", CostCurve(1, 1)))
    with pytest.raises(RegistryError):
        reg.register_function(FunctionSpec("h", "encode", "moon", CostCurve(1, 1)))
    with pytest.raises(RegistryError):
        reg.profile_model("unknown", "cloud", [1])


def test_policy_requires_default_action():
    reg = Registry()
    with pytest.raises(RegistryError):
        reg.register_policy(Policy("p", {"cloud_unreachable": "backup"}))
    reg.register_policy(Policy("p", {"default": "cloud", "cloud_unreachable": "backup"}))
    with pytest.raises(RegistryError):
        reg.register_policy(Policy("p", {"default": "cloud"}))


def test_replica_pool_fifo_and_scaling():
    pool = ReplicaPool(1)
    a = pool.submit(0.0, 1.0)
    b = pool.submit(0.1, 1.0)
    assert a.start == 0.0 and b.start == pytest.approx(1.0)
    pool.scale_to(3, now=2.0)
    assert pool.replicas == 3
    pool.scale_to(0, now=2.0)
    assert pool.replicas == 1  # never below one


def test_replica_pool_utilization_bounds():
    pool = ReplicaPool(2)
    pool.submit(0.0, 5.0)
    pool.submit(0.0, 5.0)
    pool.submit(0.0, 5.0)
    assert pool.utilization(1.0) == 1.0
    assert pool.queue_depth(1.0) >= 1


def _window(depths):
    return [MonitorSample(timestamp=i, utilization=0.5, queue_depth=d, replicas=1)
            for i, d in enumerate(depths)]


def test_provision_hysteresis():
    cfg = AutoscaleConfig()
    assert provision(_window([3, 4, 5]), cfg, current=2) == 1
    assert provision(_window([0, 0, 1]), cfg, current=2) == -1
    assert provision(_window([1, 1, 1]), cfg, current=2) == 0
    assert provision(_window([0, 0, 0]), cfg, current=1) == 0  # floor
    assert provision(_window([9, 9, 9]), cfg, current=cfg.max_replicas) == 0
    assert provision([], cfg, current=2) == 0


def test_autoscale_config_requires_gap():
    with pytest.raises(ValueError):
        AutoscaleConfig(high_water=1.0, low_water=1.0)


def test_monitor_samples_accumulate():
    pool = ReplicaPool(1)
    monitor = Monitor()
    s = monitor.sample(1.0, pool)
    assert s.replicas == 1
    assert monitor.samples == [s]


def test_scaling_scenario_reacts_to_spike():
    result = run_scaling_scenario()
    # spike starts at t=60; replicas must rise within two monitor windows
    ups = [t for t, n in result.replica_series if n > 1]
    assert ups and ups[0] <= 60 + 2 * AutoscaleConfig().window_s
    # replica count bounded
    counts = [n for _, n in result.replica_series]
    assert min(counts) >= 1 and max(counts) <= AutoscaleConfig().max_replicas
    # load drops at t=120; the pool eventually scales back to one replica
    assert result.replica_series[-1][1] == 1
    assert result.p50_between(60.0, 120.0) < 2.0
