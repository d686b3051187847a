"""Swap-test cosine classifier and its superposition ensembles.

Register layout (qubit indices, low to high)::

    controls        d qubits
    training j      q_f feature qubits, then 1 label qubit   (j = 0 .. n_train-1)
    test            q_f feature qubits
    ancilla         1 qubit (readout)

so the width is ``d + n_train * (q_f + 1) + q_f + 1``. The plain classifier
(QCC) is the ``d = 0, n_train = 1`` case of the same layout.

Readout: ``p(y=1)`` is the probability of measuring the ancilla as 1. The swap
test leaves the ancilla at 1 with probability ``(1 - c**2) / 2`` where ``c`` is
the overlap of the two encoded vectors; a final CNOT from the label qubit flips
that for class-1 training samples, giving ``y (1 + c**2)/2 + (1 - y)(1 - c**2)/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .simulator import (
    Circuit,
    Gate,
    check_qubit_cap,
    encoding_unitary,
    estimate_marginal,
    haar_random_unitary,
    marginal_probability,
    run_circuit,
    padded_unit_vector,
)

KINDS = ("qcc", "qec", "qecru")


@dataclass(frozen=True)
class CosineConfig:
    d: int = 0
    n_train: int = 1
    n_swap: int = 1
    n_feature: int = 2
    seed: int = 0

    def __post_init__(self):
        nf = self.n_feature
        if nf < 2 or nf & (nf - 1):
            raise ValueError(f"n_feature must be a power of two >= 2, got {nf}")
        if self.d < 0:
            raise ValueError(f"d must be >= 0, got {self.d}")
        if self.n_train < 1:
            raise ValueError(f"n_train must be >= 1, got {self.n_train}")
        if self.d >= 1 and self.n_swap < 1:
            raise ValueError(f"n_swap must be >= 1 when d >= 1, got {self.n_swap}")
        if self.d >= 1 and self.n_train < 2:
            raise ValueError("a control register needs n_train >= 2 to permute anything")

    @property
    def q_f(self) -> int:
        return self.n_feature.bit_length() - 1

    @property
    def num_qubits(self) -> int:
        return self.d + self.n_train * (self.q_f + 1) + self.q_f + 1

    @property
    def label(self) -> str:
        return f"d{self.d}-nt{self.n_train}-ns{self.n_swap}-nf{self.n_feature}"


@dataclass(frozen=True)
class Layout:
    controls: tuple
    train_features: tuple  # one tuple of q_f qubits per training register
    train_labels: tuple
    test: tuple
    ancilla: int

    @classmethod
    def for_config(cls, cfg: CosineConfig) -> "Layout":
        q = cfg.q_f
        controls = tuple(range(cfg.d))
        pos = cfg.d
        feats, labels = [], []
        for _ in range(cfg.n_train):
            feats.append(tuple(range(pos, pos + q)))
            labels.append(pos + q)
            pos += q + 1
        test = tuple(range(pos, pos + q))
        return cls(controls, tuple(feats), tuple(labels), test, pos + q)

    def register(self, j: int) -> tuple:
        """Feature qubits then the label qubit of training register ``j``."""
        return self.train_features[j] + (self.train_labels[j],)


@dataclass(frozen=True)
class BranchSelection:
    """Register swaps per control qubit and the permutation each branch induces.

    ``permutations[b][r]`` is the original training index sitting in register
    ``r`` on control branch ``b`` (bit ``k`` of ``b`` is control qubit ``k``).
    """

    swaps: tuple  # swaps[k] = tuple of (a, b) register pairs for control k
    permutations: np.ndarray

    @property
    def register0_sources(self) -> np.ndarray:
        return self.permutations[:, 0]


@dataclass(frozen=True)
class UnitaryBlock:
    control: int
    register: int
    matrix: np.ndarray


def _branch_permutations(n_train: int, swaps) -> np.ndarray:
    d = len(swaps)
    perms = np.empty((1 << d, n_train), dtype=int)
    for b in range(1 << d):
        reg = list(range(n_train))
        for k in range(d):
            if (b >> k) & 1:
                for a, c in swaps[k]:
                    reg[a], reg[c] = reg[c], reg[a]
        perms[b] = reg
    return perms


def branch_selection(cfg: CosineConfig) -> BranchSelection:
    """Seeded swap pairs: ``n_swap`` distinct-register pairs per control qubit."""
    rng = np.random.default_rng(cfg.seed)
    swaps = []
    for _ in range(cfg.d):
        pairs = []
        for _ in range(cfg.n_swap):
            a, c = sorted(int(v) for v in rng.choice(cfg.n_train, size=2, replace=False))
            pairs.append((a, c))
        swaps.append(tuple(pairs))
    swaps = tuple(swaps)
    return BranchSelection(swaps, _branch_permutations(cfg.n_train, swaps))


def random_unitary_blocks(cfg: CosineConfig) -> list:
    """Seeded Haar unitaries on ``2**(q_f+1)`` dims, ``n_swap`` per control qubit."""
    rng = np.random.default_rng(cfg.seed)
    dim = 1 << (cfg.q_f + 1)
    blocks = []
    for k in range(cfg.d):
        for _ in range(cfg.n_swap):
            register = int(rng.integers(cfg.n_train))
            blocks.append(UnitaryBlock(k, register, haar_random_unitary(dim, rng)))
    return blocks


# closed forms


def _overlap(a, b, n_feature: int) -> float:
    q = n_feature.bit_length() - 1
    return float(padded_unit_vector(a, q) @ padded_unit_vector(b, q))


def _feature_width(*vectors) -> int:
    size = max(np.asarray(v).size for v in vectors)
    return max(2, 1 << max(0, math.ceil(math.log2(size))))


def qcc_oracle(train_x, train_y: int, test_x, n_feature: int | None = None) -> float:
    """Closed-form cosine-classifier probability of class 1."""
    nf = n_feature or _feature_width(train_x, test_x)
    c2 = _overlap(train_x, test_x, nf) ** 2
    if train_y not in (0, 1):
        raise ValueError(f"labels must be 0 or 1, got {train_y}")
    return (1 + c2) / 2 if train_y == 1 else (1 - c2) / 2


def _check_train_set(cfg: CosineConfig, train_x, train_y):
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=int).ravel()
    if train_x.ndim != 2 or train_x.shape[0] != cfg.n_train or train_y.size != cfg.n_train:
        raise ValueError(f"expected exactly n_train={cfg.n_train} training samples")
    if train_x.shape[1] > cfg.n_feature:
        raise ValueError(f"{train_x.shape[1]} features exceed n_feature={cfg.n_feature}")
    if not np.isin(train_y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return train_x, train_y


def qec_branch_probabilities(cfg: CosineConfig, train_x, train_y, test_x, selection=None) -> np.ndarray:
    train_x, train_y = _check_train_set(cfg, train_x, train_y)
    selection = selection or branch_selection(cfg)
    return np.array(
        [qcc_oracle(train_x[s], int(train_y[s]), test_x, cfg.n_feature) for s in selection.register0_sources]
    )


def qec_oracle(cfg: CosineConfig, train_x, train_y, test_x, selection=None) -> float:
    """Mean of the cosine-classifier probability over all ``2**d`` branches."""
    return float(qec_branch_probabilities(cfg, train_x, train_y, test_x, selection).mean())


def _register_readout(phi: np.ndarray, test_vec: np.ndarray) -> float:
    # phi: register-0 state, feature index low bits, label qubit as top bit
    half = phi.size // 2
    p = 0.0
    for y, part in ((0, phi[:half]), (1, phi[half:])):
        weight = float(np.vdot(part, part).real)
        overlap2 = abs(np.vdot(test_vec, part)) ** 2
        p += (weight + overlap2) / 2 if y == 1 else (weight - overlap2) / 2
    return p


def qecru_branch_probabilities(cfg: CosineConfig, train_x, train_y, test_x, blocks=None) -> np.ndarray:
    train_x, train_y = _check_train_set(cfg, train_x, train_y)
    blocks = random_unitary_blocks(cfg) if blocks is None else blocks
    q = cfg.q_f
    test_vec = padded_unit_vector(test_x, q)
    phi0 = np.zeros(1 << (q + 1), dtype=complex)
    start = int(train_y[0]) << q
    phi0[start : start + (1 << q)] = padded_unit_vector(train_x[0], q)
    out = np.empty(1 << cfg.d)
    for b in range(1 << cfg.d):
        phi = phi0
        for blk in blocks:
            if blk.register == 0 and (b >> blk.control) & 1:
                phi = blk.matrix @ phi
        out[b] = _register_readout(phi, test_vec)
    return out


def qecru_oracle(cfg: CosineConfig, train_x, train_y, test_x, blocks=None) -> float:
    """Branch-enumeration value of the random-unitary ensemble.

    Only blocks acting on register 0 change the readout on a given branch.
    """
    return float(qecru_branch_probabilities(cfg, train_x, train_y, test_x, blocks).mean())


# circuits


def _load_registers(circ: Circuit, cfg: CosineConfig, lay: Layout, train_x, train_y, test_x):
    q = cfg.q_f
    for j in range(cfg.n_train):
        circ.append(Gate.unitary(lay.train_features[j], encoding_unitary(train_x[j], q), "encode"))
        if train_y[j] == 1:
            circ.append(Gate.x(lay.train_labels[j]))
    circ.append(Gate.unitary(lay.test, encoding_unitary(test_x, q), "encode"))


def _swap_test(circ: Circuit, lay: Layout):
    circ.append(Gate.h(lay.ancilla))
    for a, b in zip(lay.train_features[0], lay.test):
        circ.append(Gate.cswap(lay.ancilla, a, b))
    circ.append(Gate.h(lay.ancilla))
    circ.append(Gate.cnot(lay.train_labels[0], lay.ancilla))


def build_qcc_circuit(train_x, train_y: int, test_x, n_feature: int | None = None, check_cap=True) -> Circuit:
    nf = n_feature or _feature_width(train_x, test_x)
    cfg = CosineConfig(d=0, n_train=1, n_feature=nf)
    if check_cap:
        check_qubit_cap(cfg.num_qubits, "cosine classifier")
    lay = Layout.for_config(cfg)
    circ = Circuit(cfg.num_qubits, name=f"qcc-{cfg.label}")
    _load_registers(circ, cfg, lay, np.atleast_2d(np.asarray(train_x, float)), [int(train_y)], test_x)
    _swap_test(circ, lay)
    return circ


def build_qec_circuit(cfg: CosineConfig, train_x, train_y, test_x, check_cap=True):
    """Superposition ensemble circuit; returns ``(circuit, branch_selection)``."""
    train_x, train_y = _check_train_set(cfg, train_x, train_y)
    if check_cap:
        check_qubit_cap(cfg.num_qubits, f"QEC {cfg.label}")
    lay = Layout.for_config(cfg)
    sel = branch_selection(cfg)
    circ = Circuit(cfg.num_qubits, name=f"qec-{cfg.label}")
    _load_registers(circ, cfg, lay, train_x, train_y, test_x)
    for c in lay.controls:
        circ.append(Gate.h(c))
    for k, pairs in enumerate(sel.swaps):
        for a, b in pairs:
            for qa, qb in zip(lay.register(a), lay.register(b)):
                circ.append(Gate.cswap(lay.controls[k], qa, qb))
    _swap_test(circ, lay)
    return circ, sel


def build_qecru_circuit(cfg: CosineConfig, train_x, train_y, test_x, blocks=None, check_cap=True) -> Circuit:
    """QEC layout with controlled Haar unitaries in place of register swaps.

    ``blocks`` overrides the seeded unitaries (used for identity-limit checks).
    """
    train_x, train_y = _check_train_set(cfg, train_x, train_y)
    if check_cap:
        check_qubit_cap(cfg.num_qubits, f"QECRU {cfg.label}")
    lay = Layout.for_config(cfg)
    blocks = random_unitary_blocks(cfg) if blocks is None else blocks
    circ = Circuit(cfg.num_qubits, name=f"qecru-{cfg.label}")
    _load_registers(circ, cfg, lay, train_x, train_y, test_x)
    for c in lay.controls:
        circ.append(Gate.h(c))
    for blk in blocks:
        circ.append(Gate.controlled_unitary([lay.controls[blk.control]], lay.register(blk.register), blk.matrix))
    _swap_test(circ, lay)
    return circ


def readout(circ: Circuit) -> float:
    """Exact ancilla marginal (the ancilla is always the top qubit)."""
    return marginal_probability(run_circuit(circ), circ.num_qubits - 1)


def config_for(kind: str, cfg: CosineConfig) -> CosineConfig:
    if kind == "qcc":
        return replace(cfg, d=0, n_train=1)
    if kind not in KINDS:
        raise ValueError(f"unknown cosine model {kind!r}")
    return cfg


def predict_one(kind: str, cfg: CosineConfig, train_x, train_y, test_x, engine="statevector") -> float:
    """Exact class-1 probability for one test sample on a fixed training subset."""
    if engine == "closed_form":
        if kind == "qcc":
            return qcc_oracle(train_x[0], int(train_y[0]), test_x, cfg.n_feature)
        if kind == "qec":
            return qec_oracle(cfg, train_x, train_y, test_x)
        return qecru_oracle(cfg, train_x, train_y, test_x)
    if engine != "statevector":
        raise ValueError(f"unknown engine {engine!r}")
    if kind == "qcc":
        return readout(build_qcc_circuit(train_x[0], int(train_y[0]), test_x, cfg.n_feature))
    if kind == "qec":
        return readout(build_qec_circuit(cfg, train_x, train_y, test_x)[0])
    return readout(build_qecru_circuit(cfg, train_x, train_y, test_x))


def _draws(cfg: CosineConfig, n_pool: int, index: int):
    rng = np.random.default_rng([cfg.seed, index])
    chosen = rng.choice(n_pool, size=cfg.n_train, replace=False)
    return chosen, int(rng.integers(2**63)), rng


def cosine_predict(
    kind: str,
    cfg: CosineConfig,
    train_x,
    train_y,
    test_X,
    mode: str = "exact",
    shots: int = 8192,
    engine: str = "statevector",
    trace: list | None = None,
) -> np.ndarray:
    """Class-1 probabilities for each row of ``test_X``.

    Each test sample gets its own seeded draw of ``n_train`` training samples
    (without replacement) and its own swap/unitary structure. With
    ``mode="shots"`` the exact ancilla marginal is replaced by a ``shots``-shot
    estimate. ``trace``, when given, collects ``(test_index, branch, p)`` rows.
    """
    cfg = config_for(kind, cfg)
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=int).ravel()
    test_X = np.atleast_2d(np.asarray(test_X, dtype=float))
    if train_x.shape[0] == 0:
        raise ValueError("training pool is empty")
    if train_x.shape[0] < cfg.n_train:
        raise ValueError(f"training pool has {train_x.shape[0]} samples, need n_train={cfg.n_train}")
    if mode not in ("exact", "shots"):
        raise ValueError(f"mode must be 'exact' or 'shots', got {mode!r}")
    probs = np.empty(test_X.shape[0])
    for i, x in enumerate(test_X):
        chosen, sub_seed, rng = _draws(cfg, train_x.shape[0], i)
        sub = replace(cfg, seed=sub_seed)
        tx, ty = train_x[chosen], train_y[chosen]
        p = predict_one(kind, sub, tx, ty, x, engine)
        if trace is not None:
            branches = _branches(kind, sub, tx, ty, x)
            trace.extend((i, b, float(v)) for b, v in enumerate(branches))
        probs[i] = estimate_marginal(p, shots, rng) if mode == "shots" else min(max(p, 0.0), 1.0)
    return probs


def _branches(kind, cfg, tx, ty, x) -> Sequence[float]:
    if kind == "qcc":
        return [qcc_oracle(tx[0], int(ty[0]), x, cfg.n_feature)]
    if kind == "qec":
        return qec_branch_probabilities(cfg, tx, ty, x)
    return qecru_branch_probabilities(cfg, tx, ty, x)


def write_trace(rows, fh) -> None:
    fh.write("test_index,branch,probability\n")
    for i, b, p in rows:
        fh.write(f"{i},{b},{p!r}\n")


def predict_labels(probs) -> np.ndarray:
    return (np.asarray(probs) >= 0.5).astype(int)
