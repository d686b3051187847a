"""Soft-voting, bagging and AdaBoost ensembles of variational learners."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import stratified_kfold
from .metrics import accuracy, to_labels
from .seeding import derive_seed
from .simulator import Circuit, Gate
from .variational import (
    AdamState,
    LearnerParams,
    TrainConfig,
    _bce_dp,
    adam_step,
    bce_loss,
    build_learner_circuit,
    encode_batch,
    init_params,
    num_qubits_for,
    predict_batch,
    probs_and_jacobian,
    train_learner,
)

KINDS = ("soft_vote", "bagging", "adaboost")
ALPHA_ERR_CLAMP = 1e-10


@dataclass
class EnsembleModel:
    kind: str
    learners: list
    learner_weights: np.ndarray
    invert: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        self.learner_weights = np.asarray(self.learner_weights, dtype=float).ravel()
        if not self.learners:
            raise ValueError("an ensemble needs at least one learner")
        if len(self.learners) != self.learner_weights.size:
            raise ValueError("one weight per learner is required")
        if np.any(self.learner_weights <= 0):
            raise ValueError("learner weights must be positive")

    @property
    def num_learners(self) -> int:
        return len(self.learners)

    @property
    def qubits_per_learner(self) -> int:
        return self.learners[0].num_qubits

    @property
    def num_qubits(self) -> int:
        """Width of the joint product-state circuit."""
        return sum(p.num_qubits for p in self.learners)

    @property
    def num_params(self) -> int:
        return sum(p.num_params for p in self.learners)

    def learner_probabilities(self, X) -> np.ndarray:
        return np.stack([predict_batch(X, p, self.invert) for p in self.learners])

    def predict_proba(self, X, mode: str = "exact", shots: int = 8192, seed=None) -> np.ndarray:
        """Weighted mean of learner probabilities, ``sum w_k p_k / sum w_k``.

        With ``mode="shots"`` each learner's readout marginal is replaced by a
        ``shots``-shot estimate before aggregation.
        """
        w = self.learner_weights
        probs = self.learner_probabilities(X)
        if mode == "shots":
            rng = np.random.default_rng(seed)
            probs = rng.binomial(shots, np.clip(probs, 0.0, 1.0)) / shots
        elif mode != "exact":
            raise ValueError(f"mode must be 'exact' or 'shots', got {mode!r}")
        return np.clip(w @ probs / w.sum(), 0.0, 1.0)

    def predict(self, X) -> np.ndarray:
        return to_labels(self.predict_proba(X))

    def joint_circuit(self, x) -> Circuit:
        """All learners side by side; learner ``k`` reads out on its first qubit."""
        return joint_circuit(self.learners, x)

    def readout_qubits(self) -> list:
        offsets = np.cumsum([0] + [p.num_qubits for p in self.learners])
        return [int(o) for o in offsets[:-1]]

    def to_manifest(self) -> str:
        lines = [
            f"kind,{self.kind}",
            f"num_learners,{self.num_learners}",
            "weights," + ",".join(format(w, ".17g") for w in self.learner_weights),
            f"invert,{int(self.invert)}",
        ]
        lines += ["learner," + p.to_record() for p in self.learners]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str) -> "EnsembleModel":
        fields, learners = {}, []
        for raw in text.splitlines():
            if not raw.strip():
                continue
            key, _, rest = raw.partition(",")
            if key == "learner":
                learners.append(LearnerParams.from_record(rest))
            else:
                fields[key] = rest
        weights = [float(v) for v in fields["weights"].split(",")]
        if int(fields["num_learners"]) != len(learners):
            raise ValueError("manifest learner count does not match its records")
        return cls(fields["kind"], learners, weights, bool(int(fields.get("invert", "0"))))


def joint_circuit(learners, x) -> Circuit:
    total = sum(p.num_qubits for p in learners)
    circ = Circuit(total, name=f"ensemble-{len(learners)}x")
    offset = 0
    for p in learners:
        sub = build_learner_circuit(x, p)
        for g in sub.gates:
            circ.append(_shift_gate(g, offset))
        offset += p.num_qubits
    return circ


def _shift_gate(g: Gate, offset: int) -> Gate:
    return Gate(
        g.kind,
        tuple(q + offset for q in g.targets),
        tuple(q + offset for q in g.controls),
        g.params,
        g.matrix,
        g.label,
    )


@dataclass(frozen=True)
class GridPoint:
    learning_rate: float
    batch_size: int
    num_learners: int

    @property
    def label(self) -> str:
        return f"lr{self.learning_rate:g}-b{self.batch_size}-l{self.num_learners}"


@dataclass(frozen=True)
class GridSpec:
    learning_rates: tuple = (1e-3, 1e-2, 1e-1)
    batch_sizes: tuple = (1, 2, 4, 8, 16)
    ensemble_sizes: tuple = (1, 2, 3, 4, 5, 6, 7)
    folds: int = 4

    def points(self) -> list:
        return [
            GridPoint(float(lr), int(b), int(n))
            for lr, b, n in itertools.product(self.learning_rates, self.batch_sizes, self.ensemble_sizes)
        ]

    def __len__(self):
        return len(self.learning_rates) * len(self.batch_sizes) * len(self.ensemble_sizes)


def _train_config(point: GridPoint, seed: int, epochs: int, invert: bool) -> TrainConfig:
    return TrainConfig(learning_rate=point.learning_rate, batch_size=point.batch_size,
                       epochs=epochs, seed=seed, invert=invert)


def train_soft_vote(X, y, point: GridPoint, seed: int, epochs: int = 100, invert: bool = False):
    """Joint training: every learner sees every batch and the loss is BCE of the mean.

    Returns ``(model, per-epoch loss history)``. The learners form a product
    state, so evaluating them separately equals reading the joint circuit.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = num_qubits_for(X.shape[1])
    L = point.num_learners
    seeds = [derive_seed(seed, k) for k in range(L)]
    theta = np.stack([init_params(n, s).theta for s in seeds])
    cfg = _train_config(point, seed, epochs, invert)
    states = encode_batch(X, n)
    rng = np.random.default_rng(seed)
    opt = AdamState.zeros(theta.shape)
    b = min(cfg.batch_size, y.size)
    history = []
    for _ in range(epochs):
        order = rng.permutation(y.size)
        losses = []
        for start in range(0, y.size, b):
            idx = order[start : start + b]
            probs, jac = probs_and_jacobian(states[idx], theta, n, invert)
            mean = probs.mean(axis=0)
            coef = _bce_dp(mean, y[idx]) / (idx.size * L)
            grad = np.einsum("b,kbd->kd", coef, jac)
            losses.append(bce_loss(mean, y[idx]))
            theta, opt = adam_step(theta, grad, opt, cfg)
        history.append(float(np.mean(losses)))
    learners = [LearnerParams(n, t, s) for t, s in zip(theta, seeds)]
    return EnsembleModel("soft_vote", learners, np.ones(L), invert), history


def partition(n_samples: int, parts: int, seed: int) -> list:
    """Seeded shuffle split into ``parts`` disjoint near-equal index sets."""
    if parts > n_samples:
        raise ValueError(f"cannot split {n_samples} samples among {parts} learners")
    order = np.random.default_rng(seed).permutation(n_samples)
    return [np.sort(chunk) for chunk in np.array_split(order, parts)]


def train_bagging(X, y, point: GridPoint, seed: int, epochs: int = 100, invert: bool = False,
                  weighting: str = "uniform"):
    """One learner per disjoint data subset.

    ``weighting="accuracy"`` weights each learner by its accuracy on the rows it
    did not train on (uniform when there are none).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).ravel()
    L = point.num_learners
    subsets = partition(y.size, L, seed)
    learners = []
    for k, idx in enumerate(subsets):
        s = derive_seed(seed, k)
        params, _ = train_learner(X[idx], y[idx], _train_config(point, s, epochs, invert), init_seed=s)
        learners.append(params)
    if weighting == "uniform":
        weights = np.full(L, 1.0 / L)
    elif weighting == "accuracy":
        raw = []
        for params, idx in zip(learners, subsets):
            rest = np.setdiff1d(np.arange(y.size), idx)
            acc = accuracy(to_labels(predict_batch(X[rest], params, invert)), y[rest]) if rest.size else 1.0
            raw.append(max(acc, 1e-6))
        weights = np.asarray(raw) / np.sum(raw)
    else:
        raise ValueError(f"unknown bagging weighting {weighting!r}")
    return EnsembleModel("bagging", learners, weights, invert), subsets


def adaboost_alpha(error: float) -> float:
    e = min(max(error, ALPHA_ERR_CLAMP), 0.5 - ALPHA_ERR_CLAMP)
    return 0.5 * math.log((1 - e) / e)


def train_adaboost(X, y, point: GridPoint, seed: int, epochs: int = 100, invert: bool = False):
    """Sequential boosting rounds over weighted random subsets.

    Each round draws ``ceil(N / l)`` rows without replacement with probability
    proportional to the current sample weights, trains a learner on them, and
    scores its weighted error on the full training set. Returns
    ``(model, sample-weight history)``; the history has one distribution per
    round, starting from uniform.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).ravel()
    N, L = y.size, point.num_learners
    m = math.ceil(N / L)
    rng = np.random.default_rng(seed)
    w = np.full(N, 1.0 / N)
    history = [w.copy()]
    learners, alphas = [], []
    for t in range(L):
        idx = rng.choice(N, size=m, replace=False, p=w)
        s = derive_seed(seed, t)
        params, _ = train_learner(X[idx], y[idx], _train_config(point, s, epochs, invert), init_seed=s)
        wrong = to_labels(predict_batch(X, params, invert)) != y
        alpha = adaboost_alpha(float(w[wrong].sum()))
        w = w * np.where(wrong, math.exp(alpha), 1.0)
        w /= w.sum()
        learners.append(params)
        alphas.append(alpha)
        history.append(w.copy())
    return EnsembleModel("adaboost", learners, alphas, invert), history


def train_ensemble(kind: str, X, y, point: GridPoint, seed: int, epochs: int = 100, invert: bool = False):
    if kind == "soft_vote":
        return train_soft_vote(X, y, point, seed, epochs, invert)[0]
    if kind == "bagging":
        return train_bagging(X, y, point, seed, epochs, invert)[0]
    if kind == "adaboost":
        return train_adaboost(X, y, point, seed, epochs, invert)[0]
    raise ValueError(f"unknown ensemble kind {kind!r}")


@dataclass
class GridResult:
    index: int
    point: GridPoint
    fold_accuracies: list = field(default_factory=list)

    @property
    def median_accuracy(self) -> float:
        return float(np.median(self.fold_accuracies))

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies))

    def as_row(self) -> dict:
        return {
            "index": self.index,
            "learning_rate": self.point.learning_rate,
            "batch_size": self.point.batch_size,
            "num_learners": self.point.num_learners,
            "median_accuracy": self.median_accuracy,
            "mean_accuracy": self.mean_accuracy,
            "fold_accuracies": ";".join(format(a, ".6g") for a in self.fold_accuracies),
        }


def cross_validate(kind, X, y, point: GridPoint, folds, seed: int, epochs: int = 100, invert=False) -> list:
    """Validation accuracy of ``point`` on each ``(train, validation)`` fold."""
    out = []
    for f, (tr, va) in enumerate(folds):
        model = train_ensemble(kind, X[tr], y[tr], point, derive_seed(seed, f), epochs, invert)
        out.append(accuracy(model.predict(X[va]), y[va]))
    return out


def _grid_task(args):
    kind, X, y, index, point, folds, seed, epochs, invert = args
    return GridResult(index, point, cross_validate(kind, X, y, point, folds, seed ^ index, epochs, invert))


def grid_search(kind, X, y, grid: GridSpec | None = None, seed: int = 0, epochs: int = 100,
                invert: bool = False, workers: int = 1, points=None) -> list:
    """Stratified k-fold search; results ranked by median validation accuracy.

    Every grid point sees the same folds. Point ``i`` trains with seed
    ``seed ^ i`` so the ranking does not depend on scheduling. Ties keep grid
    order. ``points`` restricts the search to a subset of the grid.
    """
    grid = grid or GridSpec()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).astype(int).ravel()
    if np.unique(y).size < 2:
        raise ValueError("grid search needs both classes in the data")
    folds = stratified_kfold(y, grid.folds, seed)
    all_points = grid.points()
    chosen = all_points if points is None else list(points)
    tasks = [(kind, X, y, all_points.index(p) if p in all_points else i, p, folds, seed, epochs, invert)
             for i, p in enumerate(chosen)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_task, tasks))
    else:
        results = [_grid_task(t) for t in tasks]
    return sorted(results, key=lambda r: (-r.median_accuracy, r.index))
