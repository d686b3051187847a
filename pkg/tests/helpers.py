"""Random circuit generators shared by the test modules."""

import numpy as np

from qens.simulator import Gate


def random_gate(rng, n):
    """One random gate on an ``n``-qubit register, drawn from every gate family that fits."""
    kinds = ["H", "X", "RY", "RZ", "U1"]
    if n >= 2:
        kinds += ["CNOT", "SWAP", "U2", "CU"]
    if n >= 3:
        kinds += ["CSWAP"]
    kind = kinds[rng.integers(len(kinds))]
    qs = [int(q) for q in rng.permutation(n)]
    angle = float(rng.uniform(-2 * np.pi, 2 * np.pi))
    if kind == "H":
        return Gate.h(qs[0])
    if kind == "X":
        return Gate.x(qs[0])
    if kind == "RY":
        return Gate.ry(qs[0], angle)
    if kind == "RZ":
        return Gate.rz(qs[0], angle)
    if kind == "CNOT":
        return Gate.cnot(qs[0], qs[1])
    if kind == "SWAP":
        return Gate.swap(qs[0], qs[1])
    if kind == "CSWAP":
        return Gate.cswap(qs[0], qs[1], qs[2])
    if kind == "U1":
        return Gate.unitary([qs[0]], random_unitary(rng, 2))
    if kind == "U2":
        return Gate.unitary(qs[:2], random_unitary(rng, 4))
    return Gate.controlled_unitary([qs[0]], qs[1:2], random_unitary(rng, 2))


def random_unitary(rng, dim):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, _ = np.linalg.qr(z)
    return q


def gate_spec(g):
    return (g.kind, list(g.targets), list(g.controls), g.params, g.matrix)
