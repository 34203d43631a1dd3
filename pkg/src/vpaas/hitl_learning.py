"""One-vs-all fog classifier with human-in-the-loop incremental updates,
snapshot ensembling, and the bounded annotation queue.

The single-step update keeps the new weights close to the old ones while
descending the log-loss of the freshly labeled example; only the last-layer
weights move.  Two sign conventions ship: `paper_faithful` keeps the raw step's
original sign (which moves a positive example's score down), `descent`
(default) flips it so the step is standard gradient descent on
-y*log(relu(w.x)).  Both share one code path.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datamodel import BBox

SIGN_MODES = ("paper_faithful", "descent")


class BudgetExhausted(RuntimeError):
    """The human labor budget has been fully consumed."""


class TaskStateError(RuntimeError):
    """Invalid annotation-task transition (double claim, double submit, ...)."""


def relu(v):
    return np.maximum(v, 0.0)


@dataclass
class LearnerState:
    """Per-class last-layer weights plus the snapshot history and ensemble."""

    W: np.ndarray  # shape (K, D+1); bias absorbed in the last column
    eta: float = 0.05
    tau: int = 100
    ridge: float = 0.1
    sign_mode: str = "descent"
    snapshots: list[np.ndarray] = field(default_factory=list)
    labeled: list[tuple[np.ndarray, int]] = field(default_factory=list)
    omega: Optional[np.ndarray] = None  # shape (K, n_snapshots) once finalized

    def __post_init__(self):
        if self.sign_mode not in SIGN_MODES:
            raise ValueError(f"sign_mode must be one of {SIGN_MODES}")
        if self.tau < 1:
            raise ValueError("labor budget must be >= 1")

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def from_prototypes(cls, prototypes: np.ndarray, **kwargs) -> "LearnerState":
        """Pretrained initialization: one row per class prototype, zero bias."""
        K, D = prototypes.shape
        W = np.hstack([prototypes, np.zeros((K, 1))])
        return cls(W=W, **kwargs)

    def checkpoint(self) -> dict:
        return {
            "W": self.W.tolist(),
            "eta": self.eta,
            "tau": self.tau,
            "ridge": self.ridge,
            "sign_mode": self.sign_mode,
            "snapshots": [s.tolist() for s in self.snapshots],
            "labeled_count": len(self.labeled),
            "omega": self.omega.tolist() if self.omega is not None else None,
        }


def raw_scores(x: np.ndarray, state: LearnerState) -> np.ndarray:
    """relu(W x) for the current weights only (no ensemble)."""
    return relu(state.W @ x)


def predict(x: np.ndarray, state: LearnerState) -> tuple[int, np.ndarray]:
    """One-vs-all prediction: argmax of per-class scores, lowest index wins ties.

    After finalization the per-class score is the omega-weighted combination of
    all snapshot classifiers.
    """
    if x.shape != (state.feature_dim,):
        raise ValueError(f"feature length {x.shape} != {(state.feature_dim,)}")
    if state.omega is not None:
        snap_scores = relu(np.stack([W_t @ x for W_t in state.snapshots]))  # (T, K)
        scores = np.einsum("kt,tk->k", state.omega, snap_scores)
    else:
        scores = raw_scores(x, state)
    return int(np.argmax(scores)), scores


def updated_row(
    w: np.ndarray, x: np.ndarray, y: int, eta: float, sign_mode: str
) -> np.ndarray:
    """Single binary-classifier update for one labeled example.

    No-op when w.x <= 0 (the relu gate also guards the division).  In
    paper_faithful mode the step is w - eta*y*(1/relu(w.x))*x exactly; descent
    mode negates it, i.e. w - eta * grad of -y*log(relu(w.x)).
    """
    margin = float(w @ x)
    if margin <= 0 or eta == 0:
        return w
    step = eta * y * (1.0 / margin) * x
    return w - step if sign_mode == "paper_faithful" else w + step


def incremental_update(
    state: LearnerState,
    x: np.ndarray,
    y: int,
    class_id: int,
    sign_mode: Optional[str] = None,
) -> LearnerState:
    """Update one class row in place; other rows are untouched."""
    if not 0 <= class_id < state.num_classes:
        raise ValueError(f"class_id {class_id} outside [0,{state.num_classes})")
    mode = sign_mode or state.sign_mode
    state.W[class_id] = updated_row(state.W[class_id], x, y, state.eta, mode)
    return state


def apply_human_label(state: LearnerState, x: np.ndarray, class_id: int) -> LearnerState:
    """One labeled example: positive update on its class row, negative (descent
    semantics) on every row currently outscoring it; then snapshot."""
    scores = raw_scores(x, state)
    target_score = scores[class_id]
    incremental_update(state, x, +1, class_id)
    for k in range(state.num_classes):
        if k != class_id and scores[k] > target_score:
            incremental_update(state, x, -1, k, sign_mode="descent")
    state.labeled.append((np.array(x), class_id))
    if len(state.snapshots) < state.tau:
        state.snapshots.append(state.W.copy())
    return state


def solve_ensemble_weights(Z: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    """Solve (Z Z^T + 2vI) w = Z y; the normal equations of the summed
    regularized least-squares objective over the labeled set."""
    T = Z.shape[0]
    A = Z @ Z.T + 2.0 * ridge * np.eye(T)
    b = Z @ y
    try:
        w = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "singular ensemble system; use a ridge regularizer v > 0"
        ) from exc
    residual = float(np.linalg.norm(A @ w - b))
    if residual >= 1e-8 and ridge == 0.0:
        raise ValueError(
            f"ill-conditioned ensemble system (residual {residual:.2e}); use v > 0"
        )
    return w


def snapshot_and_finalize(
    state: LearnerState,
    labeled_set: Optional[list[tuple[np.ndarray, int]]] = None,
) -> LearnerState:
    """Fit per-class ensemble weights over the snapshot classifiers by ridge
    regression on the labeled pairs collected during the incremental stage."""
    labeled = state.labeled if labeled_set is None else labeled_set
    if not state.snapshots:
        raise ValueError("finalize requires at least one snapshot")
    if not labeled:
        raise ValueError("finalize requires labeled data")
    X = np.stack([x for x, _ in labeled])  # (n, D+1)
    labels = np.array([c for _, c in labeled])
    T = len(state.snapshots)
    omega = np.zeros((state.num_classes, T))
    # scores[t, k, i] = relu(W_t[k] . x_i)
    scores = relu(np.einsum("tkd,id->tki", np.stack(state.snapshots), X))
    for k in range(state.num_classes):
        y = (labels == k).astype(float)
        omega[k] = solve_ensemble_weights(scores[:, k, :], y, state.ridge)
    state.omega = omega
    return state


TASK_PENDING = "pending"
TASK_CLAIMED = "claimed"
TASK_LABELED = "labeled"


@dataclass
class AnnotationTask:
    task_id: int
    frame_index: int
    region: BBox
    feature: np.ndarray
    predicted_class: int
    predicted_score: float
    state: str = TASK_PENDING
    human_label: Optional[int] = None

    def view(self) -> dict:
        return {
            "task_id": self.task_id,
            "frame_index": self.frame_index,
            "region": [self.region.x, self.region.y, self.region.w, self.region.h],
            "predicted_class": self.predicted_class,
            "predicted_score": self.predicted_score,
            "state": self.state,
        }


class AnnotationQueue:
    """FIFO queue of pending tasks, bounded by the remaining labor budget.
    Claim and submit are atomic; a task can be claimed by exactly one worker."""

    def __init__(self, budget: int):
        self.budget = budget
        self._lock = threading.Lock()
        self._tasks: dict[int, AnnotationTask] = {}
        self._pending: list[int] = []
        self._ids = itertools.count()
        self.labeled_count = 0

    def remaining_budget(self) -> int:
        with self._lock:
            return self.budget - len(self._tasks)

    def enqueue(
        self,
        frame_index: int,
        region: BBox,
        feature: np.ndarray,
        predicted_class: int,
        predicted_score: float,
    ) -> AnnotationTask:
        with self._lock:
            if len(self._tasks) >= self.budget:
                raise BudgetExhausted(f"labor budget of {self.budget} exhausted")
            task = AnnotationTask(
                task_id=next(self._ids),
                frame_index=frame_index,
                region=region,
                feature=feature,
                predicted_class=predicted_class,
                predicted_score=predicted_score,
            )
            self._tasks[task.task_id] = task
            self._pending.append(task.task_id)
            return task

    def claim_next(self) -> Optional[AnnotationTask]:
        with self._lock:
            if not self._pending:
                return None
            task = self._tasks[self._pending.pop(0)]
            task.state = TASK_CLAIMED
            return task

    def claim(self, task_id: int) -> AnnotationTask:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise TaskStateError(f"unknown task {task_id}")
            if task.state != TASK_PENDING:
                raise TaskStateError(f"task {task_id} is {task.state}, not pending")
            task.state = TASK_CLAIMED
            self._pending.remove(task_id)
            return task

    def mark_labeled(self, task_id: int, class_id: int) -> AnnotationTask:
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise TaskStateError(f"unknown task {task_id}")
            if task.state == TASK_LABELED:
                raise TaskStateError(f"task {task_id} already labeled")
            task.state = TASK_LABELED
            task.human_label = class_id
            if task.task_id in self._pending:
                self._pending.remove(task.task_id)
            self.labeled_count += 1
            return task


class HitlLearner:
    """Bundles learner state with the annotation queue and the retrain hook."""

    def __init__(self, state: LearnerState):
        self.state = state
        self.queue = AnnotationQueue(state.tau)
        self.retrain_timestamps: list[float] = []

    def predict(self, x: np.ndarray) -> tuple[int, np.ndarray]:
        return predict(x, self.state)

    def enqueue_for_annotation(self, frame_index, region, feature,
                               predicted_class, predicted_score) -> AnnotationTask:
        return self.queue.enqueue(frame_index, region, feature,
                                  predicted_class, predicted_score)

    def submit_label(self, task_id: int, class_id: int, timestamp: float = 0.0) -> dict:
        """Record a human label and run one incremental training step."""
        if not 0 <= class_id < self.state.num_classes:
            raise ValueError(f"class_id {class_id} outside [0,{self.state.num_classes})")
        task = self.queue.mark_labeled(task_id, class_id)
        apply_human_label(self.state, task.feature, class_id)
        self.retrain_timestamps.append(timestamp)
        if self.queue.labeled_count >= self.state.tau and self.state.omega is None:
            snapshot_and_finalize(self.state)
        return {
            "task_id": task.task_id,
            "class_id": class_id,
            "labeled_count": self.queue.labeled_count,
            "remaining_budget": self.state.tau - self.queue.labeled_count,
            "finalized": self.state.omega is not None,
            "timestamp": timestamp,
        }
