"""Dense statevector simulator.

Bit ordering: qubit 0 is the least significant bit of a basis-state index.
Bitstrings are printed most-significant first, so qubit 0 is the rightmost
character. Multi-qubit gate matrices follow the same rule: ``targets[0]`` is
the least significant bit of the matrix row/column index.

Internally the amplitude vector is viewed as an ``n``-axis tensor of shape
``(2,) * n`` in C order, so qubit ``q`` lives on axis ``n - 1 - q``. Gates act
on that view in place; no full ``2**n`` matrix is ever formed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import QubitCapError

DEFAULT_MAX_QUBITS = 26
UNITARY_ATOL = 1e-10

__all__ = [
    "DEFAULT_MAX_QUBITS",
    "QuantumState",
    "Gate",
    "Circuit",
    "max_qubits",
    "check_qubit_cap",
    "apply_gate",
    "run_circuit",
    "amplitude_encode",
    "encoding_unitary",
    "padded_unit_vector",
    "marginal_probability",
    "sample_bitstrings",
    "estimate_marginal",
    "haar_random_unitary",
    "dump_state_csv",
]


def max_qubits() -> int:
    """Simulator cap, overridable through ``QENS_MAX_QUBITS``."""
    raw = os.environ.get("QENS_MAX_QUBITS")
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_QUBITS
    try:
        cap = int(raw)
    except ValueError:
        raise QubitCapError(f"QENS_MAX_QUBITS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise QubitCapError(f"QENS_MAX_QUBITS must be positive, got {cap}")
    return cap


def check_qubit_cap(num_qubits: int, what: str = "register") -> None:
    cap = max_qubits()
    if num_qubits > cap:
        raise QubitCapError(
            f"{what} needs {num_qubits} qubits but the simulator cap is {cap} qubits "
            f"(set QENS_MAX_QUBITS to change it)"
        )


@dataclass
class QuantumState:
    """``2**num_qubits`` complex amplitudes.

    Construction checks only the length. Use :meth:`zero` to allocate a fresh
    register; it enforces the qubit cap before any memory is requested.
    """

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.num_qubits < 1:
            raise ValueError("a state needs at least one qubit")
        if self.amplitudes.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes for {self.num_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    @classmethod
    def zero(cls, num_qubits: int) -> "QuantumState":
        check_qubit_cap(num_qubits, "state")
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "QuantumState":
        state = cls.zero(num_qubits)
        state.amplitudes[0] = 0.0
        state.amplitudes[index] = 1.0
        return state

    def copy(self) -> "QuantumState":
        return QuantumState(self.num_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _as_unitary(matrix, num_targets: int) -> np.ndarray:
    m = np.array(matrix, dtype=np.complex128)
    dim = 1 << num_targets
    if m.shape != (dim, dim):
        raise ValueError(f"matrix for {num_targets} target(s) must be {dim}x{dim}, got {m.shape}")
    if not np.allclose(m.conj().T @ m, np.eye(dim), rtol=0.0, atol=UNITARY_ATOL):
        raise ValueError("gate matrix is not unitary")
    m.setflags(write=False)
    return m


_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128
)


def ry_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_matrix(angle: float) -> np.ndarray:
    return np.array(
        [[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=np.complex128
    )


@dataclass(frozen=True)
class Gate:
    """A gate: a unitary on ``targets``, optionally conditioned on ``controls``.

    Build gates with the classmethod constructors (``Gate.h(0)``,
    ``Gate.cswap(2, 0, 1)``, ...) rather than directly.
    """

    kind: str
    targets: tuple
    controls: tuple = ()
    params: tuple = ()
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        qubits = self.qubits
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"{self.kind}: qubit indices must be distinct, got {qubits}")
        if any(q < 0 for q in qubits):
            raise ValueError(f"{self.kind}: negative qubit index in {qubits}")

    @property
    def qubits(self) -> tuple:
        return tuple(self.controls) + tuple(self.targets)

    def target_matrix(self) -> np.ndarray:
        """Matrix acting on ``targets`` (controls excluded)."""
        if self.matrix is not None:
            return self.matrix
        if self.kind == "H":
            return _H
        if self.kind in ("X", "CNOT"):
            return _X
        if self.kind == "RY":
            return ry_matrix(self.params[0])
        if self.kind == "RZ":
            return rz_matrix(self.params[0])
        if self.kind in ("SWAP", "CSWAP"):
            return _SWAP
        raise ValueError(f"unknown gate kind {self.kind!r}")

    # constructors

    @classmethod
    def h(cls, q):
        return cls("H", (q,))

    @classmethod
    def x(cls, q):
        return cls("X", (q,))

    @classmethod
    def ry(cls, q, angle):
        return cls("RY", (q,), params=(float(angle),))

    @classmethod
    def rz(cls, q, angle):
        return cls("RZ", (q,), params=(float(angle),))

    @classmethod
    def cnot(cls, control, target):
        return cls("CNOT", (target,), controls=(control,))

    @classmethod
    def swap(cls, a, b):
        return cls("SWAP", (a, b))

    @classmethod
    def cswap(cls, control, a, b):
        return cls("CSWAP", (a, b), controls=(control,))

    @classmethod
    def unitary(cls, targets: Sequence[int], matrix, label: str = "U"):
        targets = tuple(int(t) for t in targets)
        return cls("Unitary", targets, matrix=_as_unitary(matrix, len(targets)), label=label)

    @classmethod
    def controlled_unitary(cls, controls: Sequence[int], targets: Sequence[int], matrix, label="CU"):
        targets = tuple(int(t) for t in targets)
        return cls(
            "ControlledUnitary",
            targets,
            controls=tuple(int(c) for c in controls),
            matrix=_as_unitary(matrix, len(targets)),
            label=label,
        )


@dataclass
class Circuit:
    """Ordered gate list on a fixed-width register."""

    num_qubits: int
    gates: list = field(default_factory=list)
    name: str = "circuit"

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        gates, self.gates = list(self.gates), []
        self.extend(gates)

    def append(self, gate: Gate) -> "Circuit":
        bad = [q for q in gate.qubits if q >= self.num_qubits]
        if bad:
            raise IndexError(
                f"{gate.kind} touches qubit(s) {bad} outside a {self.num_qubits}-qubit circuit"
            )
        self.gates.append(gate)
        return self

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    def __len__(self):
        return len(self.gates)

    @property
    def width(self) -> int:
        return self.num_qubits

    def _layers(self, multi_only: bool) -> int:
        level = [0] * self.num_qubits
        for g in self.gates:
            qs = g.qubits
            if multi_only and len(qs) < 2:
                continue
            top = max(level[q] for q in qs) + 1
            for q in qs:
                level[q] = top
        return max(level, default=0)

    def depth(self) -> int:
        """Logical layer count under as-soon-as-possible scheduling."""
        return self._layers(multi_only=False)

    def two_qubit_depth(self) -> int:
        """Layer count counting only gates on two or more qubits."""
        return self._layers(multi_only=True)

    def count_ops(self) -> dict:
        counts: dict = {}
        for g in self.gates:
            counts[g.kind] = counts.get(g.kind, 0) + 1
        return counts


def _axis(q: int, n: int) -> int:
    return n - 1 - q


def _contract(tensor: np.ndarray, matrix: np.ndarray, axes: list) -> np.ndarray:
    # axes[j] is the tensor axis of targets[j]; targets[0] is the matrix LSB
    k = len(axes)
    m = matrix.reshape((2,) * (2 * k))
    in_axes = [2 * k - 1 - j for j in range(k)]
    out = np.tensordot(m, tensor, axes=(in_axes, axes))
    return np.moveaxis(out, list(range(k)), [axes[k - 1 - i] for i in range(k)])


def _apply(amps: np.ndarray, n: int, gate: Gate) -> None:
    t = amps.reshape((2,) * n)
    if gate.controls:
        control_axes = {_axis(c, n) for c in gate.controls}
        idx = tuple(1 if a in control_axes else slice(None) for a in range(n))
        view = t[idx]
        remaining = [a for a in range(n) if a not in control_axes]
        axes = [remaining.index(_axis(q, n)) for q in gate.targets]
    else:
        view = t
        axes = [_axis(q, n) for q in gate.targets]

    if gate.kind in ("SWAP", "CSWAP"):
        view[...] = np.swapaxes(view, axes[0], axes[1]).copy()
    else:
        view[...] = _contract(view, gate.target_matrix(), axes)


def apply_gate(state: QuantumState, gate: Gate) -> QuantumState:
    """Apply ``gate`` to ``state`` in place and return the same object."""
    bad = [q for q in gate.qubits if q >= state.num_qubits]
    if bad:
        raise IndexError(f"{gate.kind} touches qubit(s) {bad} outside a {state.num_qubits}-qubit state")
    _apply(state.amplitudes, state.num_qubits, gate)
    return state


def run_circuit(circuit: Circuit, initial: QuantumState | None = None) -> QuantumState:
    """Run ``circuit`` on a copy of ``initial`` (``|0...0>`` when omitted)."""
    if initial is None:
        state = QuantumState.zero(circuit.num_qubits)
    else:
        if initial.num_qubits != circuit.num_qubits:
            raise ValueError(
                f"circuit has {circuit.num_qubits} qubits but the initial state has {initial.num_qubits}"
            )
        state = initial.copy()
    for g in circuit.gates:
        _apply(state.amplitudes, state.num_qubits, g)
    return state


def padded_unit_vector(features, num_qubits: int) -> np.ndarray:
    x = np.asarray(features, dtype=float).ravel()
    dim = 1 << num_qubits
    if x.size > dim:
        raise ValueError(f"{x.size} features do not fit in {num_qubits} qubit(s) (capacity {dim})")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ValueError("cannot amplitude-encode a zero-norm vector")
    out = np.zeros(dim)
    out[: x.size] = x / norm
    return out


def amplitude_encode(features, num_qubits: int) -> QuantumState:
    """Zero-pad ``features`` to ``2**num_qubits``, normalize, store as real amplitudes."""
    return QuantumState(num_qubits, padded_unit_vector(features, num_qubits))


def encoding_unitary(features, num_qubits: int) -> np.ndarray:
    """Real orthogonal matrix sending ``|0...0>`` to the amplitude encoding of ``features``.

    A Householder reflection ``I - 2 v v^T / (v^T v)`` with ``v = e_0 - x``.
    """
    x = padded_unit_vector(features, num_qubits)
    dim = x.size
    v = -x
    v[0] += 1.0
    vv = v @ v
    if vv < 1e-30:
        return np.eye(dim)
    return np.eye(dim) - 2.0 * np.outer(v, v) / vv


def marginal_probability(state: QuantumState, qubit: int) -> float:
    """Probability that ``qubit`` reads 1."""
    n = state.num_qubits
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    probs = state.probabilities().reshape(1 << (n - qubit - 1), 2, 1 << qubit)
    return float(probs[:, 1, :].sum())


def sample_bitstrings(state: QuantumState, shots: int, seed) -> dict:
    """Sample ``shots`` measurements of all qubits.

    Keys are bitstrings with qubit 0 as the rightmost character.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    rng = np.random.default_rng(seed)
    probs = state.probabilities()
    probs = probs / probs.sum()
    counts = rng.multinomial(shots, probs)
    n = state.num_qubits
    return {format(int(i), f"0{n}b"): int(counts[i]) for i in np.flatnonzero(counts)}


def estimate_marginal(p_one: float, shots: int, rng: np.random.Generator) -> float:
    """Shot estimate of a single-qubit marginal.

    Drawing one binomial is distributionally identical to sampling full
    bitstrings and counting the ones on that qubit.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    p = min(max(float(p_one), 0.0), 1.0)
    return rng.binomial(shots, p) / shots


def haar_random_unitary(dim: int, seed) -> np.ndarray:
    """Haar-distributed ``dim x dim`` unitary.

    QR of a complex Ginibre matrix, with the phases of ``diag(R)`` folded back
    into ``Q`` so the result is uniform rather than biased by the QR sign
    convention. ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if dim < 2:
        raise ValueError("dim must be at least 2")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def dump_state_csv(state: QuantumState, fh) -> None:
    """Write ``basis_index,re,im`` lines."""
    for i, a in enumerate(state.amplitudes):
        fh.write(f"{i},{float(a.real)!r},{float(a.imag)!r}\n")
