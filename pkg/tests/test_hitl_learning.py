import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vpaas.datamodel import BBox
from vpaas.hitl_learning import (
    AnnotationQueue,
    BudgetExhausted,
    HitlLearner,
    LearnerState,
    TaskStateError,
    apply_human_label,
    incremental_update,
    predict,
    raw_scores,
    relu,
    snapshot_and_finalize,
    solve_ensemble_weights,
    updated_row,
)


def make_state(K=3, D=4, **kwargs):
    rng = np.random.default_rng(0)
    protos = rng.normal(size=(K, D))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    return LearnerState.from_prototypes(protos, **kwargs)


def test_relu():
    assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])


def test_update_hand_example():
    w = np.array([1.0, 0.0])
    x = np.array([1.0, 1.0])
    assert np.allclose(updated_row(w, x, +1, 0.1, "descent"), [1.1, 0.1])
    assert np.allclose(updated_row(w, x, +1, 0.1, "paper_faithful"), [0.9, -0.1])


def test_update_noop_when_gated():
    w = np.array([-1.0, 0.5])
    x = np.array([1.0, 0.0])  # w.x = -1 <= 0
    out = updated_row(w, x, +1, 0.1, "descent")
    assert out is w  # bitwise no-op: the very same array comes back
    assert updated_row(w, np.array([0.0, 0.0]), +1, 0.1, "descent") is w
    positive = np.array([1.0, 0.0])
    assert updated_row(positive, x, +1, 0.0, "descent") is positive  # eta 0


vectors = arrays(np.float64, 4, elements=st.floats(-2, 2, allow_nan=False))


@given(vectors, vectors, st.sampled_from([-1, +1]),
       st.floats(min_value=0.001, max_value=0.2))
def test_descent_update_matches_finite_difference(w, x, y, eta):
    margin = float(w @ x)
    if margin < 1e-3:  # gated region or too close to the relu kink
        return
    # loss(w) = -y * log(relu(w.x)); the update must be w - eta * grad
    eps = 1e-7
    grad = np.zeros_like(w)
    for i in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[i] += eps
        wm[i] -= eps
        grad[i] = (-y * np.log(wp @ x) - (-y * np.log(wm @ x))) / (2 * eps)
    expected = w - eta * grad
    got = updated_row(w, x, y, eta, "descent")
    assert np.allclose(got, expected, rtol=1e-6, atol=1e-8)


def test_paper_faithful_is_negated_step():
    w = np.array([0.8, 0.3, -0.2])
    x = np.array([1.0, 0.5, 0.2])
    up = updated_row(w, x, +1, 0.05, "descent") - w
    down = updated_row(w, x, +1, 0.05, "paper_faithful") - w
    assert np.allclose(up, -down)


@given(st.floats(min_value=0.1, max_value=50.0))
def test_argmax_invariant_under_positive_scaling(scale):
    state = make_state()
    x = np.append(np.random.default_rng(1).normal(size=state.feature_dim - 1), 1.0)
    pred, _ = predict(x, state)
    scaled = LearnerState(W=state.W * scale, eta=state.eta, tau=state.tau)
    assert predict(x, scaled)[0] == pred


def test_predict_validates_dimension_and_breaks_ties_low():
    state = LearnerState(W=np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert predict(np.array([1.0, 0.0]), state)[0] == 0
    with pytest.raises(ValueError):
        predict(np.array([1.0, 0.0, 0.0]), state)


def test_incremental_update_touches_one_row():
    state = make_state()
    before = state.W.copy()
    x = np.ones(state.feature_dim)
    incremental_update(state, x, +1, class_id=1)
    assert np.array_equal(state.W[0], before[0])
    assert np.array_equal(state.W[2], before[2])
    with pytest.raises(ValueError):
        incremental_update(state, x, +1, class_id=9)


def test_apply_human_label_pushes_down_outscoring_rows():
    state = make_state(tau=10)
    x = np.append(state.W[0, :-1] * 2, 1.0)  # class 0 scores highest
    scores_before = raw_scores(x, state)
    apply_human_label(state, x, class_id=1)
    scores_after = raw_scores(x, state)
    assert scores_after[1] >= scores_before[1]
    if scores_before[0] > scores_before[1]:
        assert scores_after[0] <= scores_before[0]
    assert len(state.labeled) == 1
    assert len(state.snapshots) == 1


def test_snapshots_bounded_by_budget():
    state = make_state(tau=2)
    x = np.ones(state.feature_dim)
    for _ in range(5):
        apply_human_label(state, x, class_id=0)
    assert len(state.snapshots) == 2


def test_ensemble_weights_scalar_case():
    Z = np.array([[2.0]])
    y = np.array([1.0])
    w = solve_ensemble_weights(Z, y, ridge=0.1)
    assert w[0] == pytest.approx(2 / 4.2)


@given(st.integers(min_value=1, max_value=6), st.integers(min_value=2, max_value=12))
@settings(max_examples=50)
def test_ensemble_normal_equation_residual(T, n):
    rng = np.random.default_rng(T * 100 + n)
    Z = rng.normal(size=(T, n))
    y = rng.normal(size=n)
    w = solve_ensemble_weights(Z, y, ridge=0.1)
    A = Z @ Z.T + 0.2 * np.eye(T)
    assert np.linalg.norm(A @ w - Z @ y) < 1e-8


def test_singular_system_needs_ridge():
    Z = np.zeros((2, 3))
    with pytest.raises(ValueError, match="v > 0"):
        solve_ensemble_weights(Z, np.ones(3), ridge=0.0)
    solve_ensemble_weights(Z, np.ones(3), ridge=0.1)


def test_finalize_builds_ensemble_predictor():
    state = make_state(tau=20)
    rng = np.random.default_rng(4)
    for _ in range(12):
        k = int(rng.integers(0, 3))
        x = np.append(state.W[k, :-1] + rng.normal(scale=0.05, size=4), 1.0)
        apply_human_label(state, x, class_id=k)
    snapshot_and_finalize(state)
    assert state.omega.shape == (3, len(state.snapshots))
    x = np.append(make_state().W[1, :-1], 1.0)
    pred, scores = predict(x, state)
    assert scores.shape == (3,)


def test_finalize_requires_data():
    state = make_state()
    with pytest.raises(ValueError):
        snapshot_and_finalize(state)


def _task_args(i=0):
    return dict(frame_index=i, region=BBox(0, 0, 10, 10),
                feature=np.ones(3), predicted_class=0, predicted_score=0.4)


def test_queue_budget_and_exclusive_claim():
    q = AnnotationQueue(budget=2)
    t0 = q.enqueue(**_task_args(0))
    t1 = q.enqueue(**_task_args(1))
    with pytest.raises(BudgetExhausted):
        q.enqueue(**_task_args(2))
    a = q.claim_next()
    b = q.claim_next()
    assert {a.task_id, b.task_id} == {t0.task_id, t1.task_id}
    assert q.claim_next() is None
    with pytest.raises(TaskStateError):
        q.claim(t0.task_id)  # already claimed


def test_queue_double_label_rejected():
    q = AnnotationQueue(budget=1)
    t = q.enqueue(**_task_args())
    q.mark_labeled(t.task_id, 1)
    with pytest.raises(TaskStateError):
        q.mark_labeled(t.task_id, 2)
    with pytest.raises(TaskStateError):
        q.mark_labeled(99, 1)


def test_learner_finalizes_at_budget():
    state = make_state(tau=3)
    learner = HitlLearner(state)
    for i in range(3):
        task = learner.enqueue_for_annotation(
            i, BBox(0, 0, 10, 10),
            np.append(state.W[i % 3, :-1], 1.0), i % 3, 0.3)
        receipt = learner.submit_label(task.task_id, i % 3, timestamp=float(i))
    assert receipt["finalized"] is True
    assert state.omega is not None
    assert learner.retrain_timestamps == [0.0, 1.0, 2.0]
    with pytest.raises(ValueError):
        learner.submit_label(0, 99)
