"""Shallow variational weak learner.

Ansatz on ``n`` qubits: amplitude encoding, an RZ-RY-RZ rotation on every
qubit, a CNOT chain ``(q, q+1)`` when ``n >= 2``, a second RZ-RY-RZ layer, then
readout of qubit 0. ``theta`` has ``6n`` entries ordered (layer, qubit, gate).

Two evaluation paths exist. :func:`build_learner_circuit` emits a generic
:class:`~qens.simulator.Circuit`; :func:`forward` is a batched numpy version
of the same unitary used for training, vectorized over parameter variants and
samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simulator import (
    Circuit,
    Gate,
    check_qubit_cap,
    encoding_unitary,
    estimate_marginal,
    marginal_probability,
    padded_unit_vector,
    run_circuit,
)

PROB_CLAMP = 1e-12
SHIFT = np.pi / 2


def num_qubits_for(n_features: int) -> int:
    """Smallest register holding ``n_features`` amplitudes (at least one qubit)."""
    if n_features < 1:
        raise ValueError("need at least one feature")
    return max(1, math.ceil(math.log2(n_features)))


@dataclass
class LearnerParams:
    num_qubits: int
    theta: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        if self.theta.size != 6 * self.num_qubits:
            raise ValueError(f"expected {6 * self.num_qubits} angles for {self.num_qubits} qubits, got {self.theta.size}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("angles must be finite")

    @property
    def num_params(self) -> int:
        return self.theta.size

    def to_record(self) -> str:
        """``n,seed,theta_0,...,theta_{6n-1}`` with 17 significant digits."""
        return ",".join([str(self.num_qubits), str(self.seed)] + [format(t, ".17g") for t in self.theta])

    @classmethod
    def from_record(cls, line: str) -> "LearnerParams":
        parts = line.strip().split(",")
        return cls(int(parts[0]), np.array([float(p) for p in parts[2:]]), seed=int(parts[1]))


def init_params(num_qubits: int, seed: int) -> LearnerParams:
    rng = np.random.default_rng(seed)
    return LearnerParams(num_qubits, rng.uniform(-np.pi, np.pi, 6 * num_qubits), seed=seed)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    invert: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


# circuit path


def build_learner_circuit(x, params: LearnerParams) -> Circuit:
    n = params.num_qubits
    check_qubit_cap(n, "variational learner")
    th = params.theta.reshape(2, n, 3)
    circ = Circuit(n, name=f"learner-{n}q")
    circ.append(Gate.unitary(range(n), encoding_unitary(x, n), "encode"))

    def rotations(layer):
        for q in range(n):
            circ.append(Gate.rz(q, th[layer, q, 0]))
            circ.append(Gate.ry(q, th[layer, q, 1]))
            circ.append(Gate.rz(q, th[layer, q, 2]))

    rotations(0)
    for q in range(n - 1):
        circ.append(Gate.cnot(q, q + 1))
    rotations(1)
    return circ


def predict_proba(x, params: LearnerParams, mode="exact", shots=8192, rng=None, invert=False) -> float:
    """``p(y=1)`` for one sample, read as ``p(qubit 0 = 1)`` unless ``invert``."""
    p = marginal_probability(run_circuit(build_learner_circuit(x, params)), 0)
    if invert:
        p = 1.0 - p
    if mode == "shots":
        return estimate_marginal(p, shots, np.random.default_rng(rng))
    if mode != "exact":
        raise ValueError(f"mode must be 'exact' or 'shots', got {mode!r}")
    return p


# batched path


def encode_batch(X, num_qubits: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.stack([padded_unit_vector(x, num_qubits) for x in X])


def _rotation_matrices(angles: np.ndarray) -> np.ndarray:
    # angles (..., 3) = (a, b, c) for RZ(c) RY(b) RZ(a); returns (..., 2, 2)
    a, b, c = angles[..., 0], angles[..., 1], angles[..., 2]
    cb, sb = np.cos(b / 2), np.sin(b / 2)
    u = np.empty(angles.shape[:-1] + (2, 2), dtype=np.complex128)
    u[..., 0, 0] = np.exp(-0.5j * (a + c)) * cb
    u[..., 0, 1] = -np.exp(0.5j * (a - c)) * sb
    u[..., 1, 0] = np.exp(-0.5j * (a - c)) * sb
    u[..., 1, 1] = np.exp(0.5j * (a + c)) * cb
    return u


_CHAIN_CACHE: dict = {}


def _cnot_chain(n: int) -> np.ndarray:
    if n not in _CHAIN_CACHE:
        idx = np.arange(1 << n)
        total = idx.copy()
        for q in range(n - 1):
            perm = idx ^ (((idx >> q) & 1) << (q + 1))
            total = total[perm]
        _CHAIN_CACHE[n] = total
    return _CHAIN_CACHE[n]


def _apply_layer(psi: np.ndarray, us: np.ndarray, n: int) -> np.ndarray:
    # psi (P, B, 2**n); us (P, n, 2, 2)
    P, B = psi.shape[:2]
    for q in range(n):
        view = psi.reshape(P, B, 1 << (n - q - 1), 2, 1 << q)
        psi = np.einsum("pij,pbxjy->pbxiy", us[:, q], view).reshape(P, B, 1 << n)
    return psi


def forward(states: np.ndarray, thetas: np.ndarray, num_qubits: int, invert=False) -> np.ndarray:
    """Class-1 probabilities for every (parameter row, encoded sample) pair.

    ``states`` is ``(B, 2**n)`` from :func:`encode_batch`; ``thetas`` is
    ``(P, 6n)``. Returns ``(P, B)``.
    """
    n = num_qubits
    thetas = np.atleast_2d(thetas)
    P = thetas.shape[0]
    rot = _rotation_matrices(thetas.reshape(P, 2, n, 3))
    psi = np.broadcast_to(states.astype(np.complex128), (P,) + states.shape)
    psi = _apply_layer(psi, rot[:, 0], n)
    if n >= 2:
        psi = psi[..., _cnot_chain(n)]
    psi = _apply_layer(psi, rot[:, 1], n)
    p1 = (np.abs(psi[..., 1::2]) ** 2).sum(axis=-1)
    return 1.0 - p1 if invert else p1


def bce_loss(probs, labels, weights=None) -> float:
    """Mean binary cross entropy with probabilities clamped to [1e-12, 1-1e-12]."""
    p = np.asarray(probs, dtype=float).ravel()
    y = np.asarray(labels, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("empty batch")
    if p.size != y.size:
        raise ValueError("probabilities and labels differ in length")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    p = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    losses = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    if weights is None:
        return float(losses.mean())
    w = np.asarray(weights, dtype=float).ravel()
    return float((w * losses).sum() / w.sum())


def _bce_dp(p, y):
    p = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
    return (p - y) / (p * (1 - p))


def shifted_thetas(thetas: np.ndarray) -> np.ndarray:
    """Rows ``theta, theta + pi/2 e_0, theta - pi/2 e_0, ...`` for each input row."""
    thetas = np.atleast_2d(thetas)
    L, D = thetas.shape
    out = np.repeat(thetas[:, None, :], 2 * D + 1, axis=1)
    j = np.arange(D)
    out[:, 1 + 2 * j, j] += SHIFT
    out[:, 2 + 2 * j, j] -= SHIFT
    return out.reshape(L * (2 * D + 1), D)


def probs_and_jacobian(states, thetas, num_qubits, invert=False):
    """Probabilities ``(L, B)`` and parameter-shift derivatives ``(L, B, 6n)``."""
    thetas = np.atleast_2d(thetas)
    L, D = thetas.shape
    out = forward(states, shifted_thetas(thetas), num_qubits, invert).reshape(L, 2 * D + 1, -1)
    probs = out[:, 0]
    jac = 0.5 * (out[:, 1::2] - out[:, 2::2])
    return probs, np.transpose(jac, (0, 2, 1))


def parameter_shift_gradient(X, y, params: LearnerParams, weights=None, invert=False) -> np.ndarray:
    """Gradient of the (weighted) mean BCE over a batch, via the shift rule.

    Each angle sits in a single Pauli rotation, so
    ``dp/dtheta_j = (p(theta_j + pi/2) - p(theta_j - pi/2)) / 2`` exactly.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty batch")
    states = encode_batch(X, params.num_qubits)
    probs, jac = probs_and_jacobian(states, params.theta, params.num_qubits, invert)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float).ravel()
    coef = w * _bce_dp(probs[0], y) / w.sum()
    return coef @ jac[0]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


def adam_step(theta, grads, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update; returns new ``(theta, state)``."""
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(grads, dtype=float)
    if g.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("parameter, gradient and optimizer shapes differ")
    t = state.t + 1
    m = config.beta1 * state.m + (1 - config.beta1) * g
    v = config.beta2 * state.v + (1 - config.beta2) * g * g
    m_hat = m / (1 - config.beta1**t)
    v_hat = v / (1 - config.beta2**t)
    new = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return new, AdamState(m, v, t)


def _batches(n_samples: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n_samples)
    b = min(batch_size, n_samples)
    return [order[i : i + b] for i in range(0, n_samples, b)]


def train_learner(
    X,
    y,
    config: TrainConfig,
    weights=None,
    init_seed: int | None = None,
    num_qubits: int | None = None,
    theta0=None,
):
    """Mini-batch Adam on BCE; returns ``(LearnerParams, per-epoch mean loss)``.

    Each epoch reshuffles with the config seed's generator. With ``weights``,
    each batch loss is the weighted mean over its members and batches with zero
    total weight are skipped. ``batch_size`` larger than the data is clamped.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if X.shape[0] != y.size:
        raise ValueError("features and labels differ in length")
    if weights is not None:
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.size != y.size or (weights < 0).any() or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative, one per sample, and not all zero")
    n = num_qubits or num_qubits_for(X.shape[1])
    seed = config.seed if init_seed is None else init_seed
    params = init_params(n, seed) if theta0 is None else LearnerParams(n, theta0, seed)
    states = encode_batch(X, n)
    rng = np.random.default_rng(config.seed)
    theta = params.theta.copy()
    opt = AdamState.zeros(theta.shape)
    history = []
    for _ in range(config.epochs):
        losses = []
        for idx in _batches(y.size, config.batch_size, rng):
            w = None if weights is None else weights[idx]
            if w is not None and w.sum() <= 0:
                continue
            probs, jac = probs_and_jacobian(states[idx], theta, n, config.invert)
            ww = np.ones(idx.size) if w is None else w
            coef = ww * _bce_dp(probs[0], y[idx]) / ww.sum()
            losses.append(bce_loss(probs[0], y[idx], w))
            theta, opt = adam_step(theta, coef @ jac[0], opt, config)
        history.append(float(np.mean(losses)))
    return LearnerParams(n, theta, seed), history


def predict_batch(X, params: LearnerParams, invert=False) -> np.ndarray:
    return forward(encode_batch(X, params.num_qubits), params.theta, params.num_qubits, invert)[0]
