"""End-to-end acceptance gate.  Each test covers one release criterion and
prints a PASS/FAIL line so a tee'd pytest log doubles as the release report."""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from vpaas.coordinator import FilterThresholds, filter_regions
from vpaas.datamodel import BBox, DatasetSpec, Detection
from vpaas.experiment import (
    ExperimentConfig,
    HitlConfig,
    NetworkConfig,
    run_compare,
    run_experiment,
)
from vpaas.hitl_learning import updated_row
from vpaas.runtime import AutoscaleConfig, run_scaling_scenario

from .test_coordinator import brute_force_filter

DEFAULT = ExperimentConfig(
    dataset=DatasetSpec(num_frames=150, num_classes=4), seed=1)

# derived once from the seeded drift run and frozen as the regression floor;
# the measured gap was 0.37
DRIFT_F1_MARGIN = 0.25
LATENCY_SLO_S = 2.0


def verdict(name, ok):
    print(f"{'PASS' if ok else 'FAIL'}: {name}")
    assert ok, name


@pytest.fixture(scope="module")
def comparison():
    return run_compare(DEFAULT)


def test_cloud_cost_ratio(comparison):
    start = time.time()
    big = replace(DEFAULT, dataset=DatasetSpec(num_frames=3000, num_classes=4))
    vpaas_cost = run_experiment(big).report.cloud_cost
    cloudseg_cost = run_experiment(replace(big, strategy="cloudseg_like")).report.cloud_cost
    elapsed = time.time() - start

    reports = {k: v.report for k, v in comparison.items()}
    dds_second_rounds = any(t.cloud_invocations == 2
                            for t in comparison["dds_like"].traces)
    ok = (
        vpaas_cost == 0.5 * cloudseg_cost
        and reports["vpaas"].cloud_cost <= reports["dds_like"].cloud_cost
        and (not dds_second_rounds
             or reports["vpaas"].cloud_cost < reports["dds_like"].cloud_cost)
        and elapsed < 10.0
    )
    verdict(f"cloud-cost ratio (vpaas = 0.5 x cloudseg exactly; 200 chunks in "
            f"{elapsed:.1f}s)", ok)


def test_bandwidth_ordering(comparison):
    bw = {k: v.report.normalized_bandwidth for k, v in comparison.items()}
    mean_uncertain = np.mean([t.uncertain_count
                              for t in comparison["vpaas"].traces])
    ok = bw["vpaas"] < bw["dds_like"] < bw["mpeg"] == 1.0 and mean_uncertain >= 1
    verdict(f"bandwidth ordering vpaas({bw['vpaas']:.4f}) < dds({bw['dds_like']:.4f})"
            f" < mpeg(1.0); vpaas/dds ratio {bw['vpaas'] / bw['dds_like']:.3f}", ok)


def test_protocol_invariants(comparison):
    single = all(t.cloud_invocations == 1 for t in comparison["vpaas"].traces)

    rng = np.random.default_rng(42)
    t = FilterThresholds()
    exact = True
    for _ in range(10_000):
        dets = []
        for _ in range(rng.integers(0, 11)):
            cls = float(rng.uniform(0, 1)) if rng.random() < 0.8 else 0.0
            dets.append(Detection(
                bbox=BBox(float(rng.uniform(0, 1000)), float(rng.uniform(0, 600)),
                          float(rng.uniform(5, 600)), float(rng.uniform(5, 600))),
                class_id=0 if cls > 0 else None,
                loc_score=float(rng.uniform(0, 1)),
                cls_score=cls))
        if filter_regions(dets, 1280 * 720, t) != brute_force_filter(dets, 1280 * 720, t):
            exact = False
            break

    outage_cfg = replace(DEFAULT, network=NetworkConfig(outages=((25.0, 50.0),)))
    outage = run_experiment(outage_cfg)
    conserved = sorted(t.chunk_id for t in outage.traces) == list(range(10))

    verdict("protocol invariants (single invocation; filter exact on 10,000 "
            "instances; chunk conservation across outage)",
            single and exact and conserved)


def test_learning_math():
    rng = np.random.default_rng(7)
    gated_ok = True
    for _ in range(200):
        w = rng.normal(size=5)
        x = rng.normal(size=5)
        if w @ x <= 0:
            gated_ok &= updated_row(w, x, +1, 0.1, "descent") is w

    fd_ok = True
    eps = 1e-7
    for _ in range(200):
        w = rng.normal(size=5)
        x = rng.normal(size=5)
        y = int(rng.choice([-1, 1]))
        if w @ x < 1e-3:
            continue
        grad = np.array([
            (-y * np.log((w + eps * e) @ x) + y * np.log((w - eps * e) @ x)) / (2 * eps)
            for e in np.eye(5)])
        got = updated_row(w, x, y, 0.05, "descent")
        fd_ok &= bool(np.allclose(got, w - 0.05 * grad, rtol=1e-6, atol=1e-8))

    from vpaas.hitl_learning import solve_ensemble_weights

    residual_ok = True
    for _ in range(100):
        Z = rng.normal(size=(rng.integers(1, 8), rng.integers(2, 15)))
        y = rng.normal(size=Z.shape[1])
        w = solve_ensemble_weights(Z, y, ridge=0.1)
        A = Z @ Z.T + 0.2 * np.eye(Z.shape[0])
        residual_ok &= np.linalg.norm(A @ w - Z @ y) < 1e-8

    from vpaas.hitl_learning import LearnerState, predict

    scale_ok = True
    for _ in range(100):
        W = rng.normal(size=(4, 6))
        x = rng.normal(size=6)
        base = predict(x, LearnerState(W=W))[0]
        scale_ok &= predict(x, LearnerState(W=W * float(rng.uniform(0.1, 40))))[0] == base

    verdict("learning math (gated no-op bitwise; descent = finite-difference "
            "gradient @1e-6; normal-equation residual < 1e-8; argmax scale-"
            "invariant)", gated_ok and fd_ok and residual_ok and scale_ok)


def test_drift_recovery():
    start = time.time()
    drift = DatasetSpec(num_frames=300, num_classes=4, drift_rate=0.005)
    frozen = run_experiment(ExperimentConfig(dataset=drift, seed=3)).report.f1
    adapted = run_experiment(ExperimentConfig(
        dataset=drift, seed=3,
        hitl=HitlConfig(enabled=True, tau=200, sign_mode="descent"))).report.f1
    elapsed = time.time() - start
    ok = adapted > frozen and adapted - frozen >= DRIFT_F1_MARGIN and elapsed < 60
    verdict(f"drift recovery (HITL f1 {adapted:.3f} > frozen {frozen:.3f}, "
            f"margin >= {DRIFT_F1_MARGIN}, {elapsed:.1f}s)", ok)


def test_fault_tolerance():
    cfg = replace(DEFAULT, network=NetworkConfig(outages=((25.0, 50.0),)))
    result = run_experiment(cfg)
    detection_time = 25.0 + cfg.heartbeat.detection_delay()
    backup_labels = [l.timestamp for t in result.traces if t.source == "backup"
                     for l in t.labels]
    series = result.report.chunk_series
    backup_f1 = [r["f1"] for r in series if r["source"] == "backup"]
    cloud_f1 = [r["f1"] for r in series if r["source"] == "cloud"]
    post = [r["f1"] for r in series if r["source"] == "cloud"
            and r["done"] > 50.0]
    ok = (
        backup_labels
        and min(backup_labels) <= detection_time + cfg.chunk_period_s
        and np.mean(backup_f1) < np.mean(cloud_f1)
        and post and np.mean(post) > np.mean(backup_f1)
    )
    verdict("fault tolerance (backup label within one chunk period of "
            "detection; accuracy dips then recovers)", bool(ok))


def test_scalability():
    result = run_scaling_scenario()
    autoscale = AutoscaleConfig()
    scale_ups = [t for t, n in result.replica_series if n > 1]
    reacted = scale_ups and scale_ups[0] <= 60.0 + 2 * autoscale.window_s
    slo = result.p50_between(60.0, 120.0) < LATENCY_SLO_S
    scaled_down = result.replica_series[-1][1] == 1
    verdict(f"scalability (scale-up at t={scale_ups[0] if scale_ups else '-'}s; "
            f"spike p50 {result.p50_between(60.0, 120.0):.2f}s < {LATENCY_SLO_S}s; "
            "scale-down after load drop)", bool(reacted and slo and scaled_down))


def test_latency_ordering():
    p50 = {}
    for mbps in (10, 15, 20):
        cfg = replace(DEFAULT, network=NetworkConfig(wan_bandwidth_mbps=mbps))
        for strategy in ("vpaas", "dds_like", "cloudseg_like"):
            report = run_experiment(replace(cfg, strategy=strategy)).report
            p50[(strategy, mbps)] = report.latency_p50
    ordered = all(
        p50[("vpaas", m)] < p50[("dds_like", m)]
        and p50[("vpaas", m)] < p50[("cloudseg_like", m)]
        for m in (10, 15, 20))
    vpaas_p50 = [p50[("vpaas", m)] for m in (10, 15, 20)]
    variation = (max(vpaas_p50) - min(vpaas_p50)) / min(vpaas_p50)
    verdict(f"latency ordering at 10/15/20 Mbps; vpaas p50 variation "
            f"{variation:.1%} < 25%", bool(ordered and variation < 0.25))


def test_determinism():
    cfg = replace(DEFAULT, hitl=HitlConfig(enabled=True, tau=50))
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    ok = a.metrics_json() == b.metrics_json() and a.traces_jsonl() == b.traces_jsonl()
    verdict("determinism (identical config+seed -> byte-identical metrics "
            "and traces)", ok)
