"""Brute-force reference implementations used only by the tests.

Everything here works on the full ``2**n`` Hilbert space and builds operators
by explicit index loops, sharing no code with the package.  Qubit 0 is the
most significant bit.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.linalg


def bit(index: int, qubit: int, n: int) -> int:
    return (index >> (n - 1 - qubit)) & 1


@lru_cache(maxsize=None)
def _bits(n: int) -> np.ndarray:
    """``bits[i, q]`` is qubit ``q`` of basis index ``i``."""
    idx = np.arange(2**n)
    return np.array([[bit(i, q, n) for q in range(n)] for i in idx], dtype=np.int64)


def _subindex(bits: np.ndarray, targets) -> np.ndarray:
    k = len(targets)
    return sum(bits[:, t] << (k - 1 - j) for j, t in enumerate(targets))


def _same_outside(bits: np.ndarray, targets) -> np.ndarray:
    others = [q for q in range(bits.shape[1]) if q not in targets]
    if not others:
        return np.ones((len(bits), len(bits)), dtype=bool)
    b = bits[:, others]
    return np.all(b[:, None, :] == b[None, :, :], axis=-1)


def embed(op: np.ndarray, targets, n: int) -> np.ndarray:
    """Full ``2**n`` matrix of ``op`` acting on ``targets`` (first target = MSB of ``op``)."""
    bits = _bits(n)
    sub = _subindex(bits, list(targets))
    full = np.asarray(op, dtype=complex)[sub[:, None], sub[None, :]]
    return np.where(_same_outside(bits, list(targets)), full, 0)


def hermitian(values: np.ndarray, dim: int) -> np.ndarray:
    """Diagonal first, then (re, im) of each upper-triangle entry in row-major order."""
    h = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        h[i, i] = values[i]
    pos = dim
    for i in range(dim):
        for j in range(i + 1, dim):
            h[i, j] = values[pos] + 1j * values[pos + 1]
            h[j, i] = np.conj(h[i, j])
            pos += 2
    return h


def unitary(values: np.ndarray, dim: int) -> np.ndarray:
    return scipy.linalg.expm(1j * hermitian(values, dim))


def split_unitaries(params: np.ndarray, n_nodes: int, dim: int) -> list[np.ndarray]:
    block = dim * dim
    return [unitary(params[i * block : (i + 1) * block], dim) for i in range(n_nodes)]


def product_vector(amplitudes: np.ndarray) -> np.ndarray:
    psi = np.array([1.0 + 0j])
    for a in amplitudes:
        psi = np.kron(psi, np.asarray(a, dtype=complex))
    return psi


def qubit_distribution(psi: np.ndarray, qubit: int, n: int) -> np.ndarray:
    out = np.zeros(2)
    for i, amp in enumerate(psi):
        out[bit(i, qubit, n)] += abs(amp) ** 2
    return out


def partial_trace(rho: np.ndarray, keep, n: int) -> np.ndarray:
    """Reduced density matrix by summing over matching traced-out bits."""
    bits = _bits(n)
    keep = list(keep)
    sub = _subindex(bits, keep)
    mask = _same_outside(bits, keep)
    out = np.zeros((2 ** len(keep),) * 2, dtype=complex)
    rows, cols = np.nonzero(mask)
    np.add.at(out, (sub[rows], sub[cols]), rho[rows, cols])
    return out


def apply_kraus(rho: np.ndarray, ops, qubit: int, n: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for m in ops:
        full = embed(m, [qubit], n)
        out += full @ rho @ full.conj().T
    return out


def damping_kraus(p):
    return [np.array([[1, 0], [0, math.sqrt(1 - p)]]), np.array([[0, math.sqrt(p)], [0, 0]])]


def dephasing_kraus(p):
    return [math.sqrt(1 - p) * np.eye(2), np.diag([math.sqrt(p), 0.0]), np.diag([0.0, math.sqrt(p)])]


def noisy(rho, qubits, n, p_a, p_d):
    for q in qubits:
        rho = apply_kraus(rho, dephasing_kraus(p_d), q, n)
        rho = apply_kraus(rho, damping_kraus(p_a), q, n)
    return rho


# ---------------------------------------------------------------------------
# Circuits at full width
# ---------------------------------------------------------------------------


def tree_gate_lines(topology) -> list[tuple[int, list[int]]]:
    """(node id, full-width lines) in evaluation order for the discriminative tree.

    A subtree's outgoing lines are those of its leftmost input block.
    """
    outgoing = {}

    def lines_of(child):
        if child.kind == "leaf":
            return list(topology.leaf_blocks[child.index])
        return outgoing[child.index]

    gates = []
    for node in topology.nodes:
        left, right = lines_of(node.left), lines_of(node.right)
        outgoing[node.id] = left
        gates.append((node.id, left + right))
    return gates


def tree_discriminative(topology, params, enc, noise=None) -> np.ndarray:
    n = topology.n_inputs
    us = split_unitaries(params, topology.n_nodes, topology.unitary_dim)
    gates = tree_gate_lines(topology)
    out_line = gates[-1][1][0]
    if noise is None:
        psi = product_vector(enc)
        for node_id, lines in gates:
            psi = embed(us[node_id], lines, n) @ psi
        return qubit_distribution(psi, out_line, n)
    psi = product_vector(enc)
    rho = np.outer(psi, psi.conj())
    for node_id, lines in gates:
        rho = noisy(rho, lines, n, *noise)
        full = embed(us[node_id], lines, n)
        rho = full @ rho @ full.conj().T
    return np.real(np.diag(partial_trace(rho, [out_line], n)))


def mps_gate_lines(n_inputs: int, V: int) -> list[list[int]]:
    """Full-width lines of each discriminative MPS step in register order."""
    bond = list(range(1, V + 1))
    steps = [[0] + bond]
    for s in range(1, n_inputs - V):
        steps.append([V + s] + bond)
    return steps


def mps_discriminative(topology, params, enc, noise=None) -> np.ndarray:
    n, V = topology.n_inputs, topology.V
    us = split_unitaries(params, topology.n_nodes, topology.unitary_dim)
    steps = mps_gate_lines(n, V)
    psi = product_vector(enc)
    rho = np.outer(psi, psi.conj())
    for u, lines in zip(us, steps):
        if noise is not None:
            rho = noisy(rho, lines, n, *noise)
        full = embed(u, lines, n)
        rho = full @ rho @ full.conj().T
    return np.real(np.diag(partial_trace(rho, [steps[-1][0]], n)))


def mps_generative(topology, params) -> np.ndarray:
    """Exact outcome distribution of the generative MPS without mid-circuit resets.

    Because each output line is never touched again after its measurement,
    the circuit is equivalent to one unitary per step on (fresh output line,
    bond lines) followed by measuring all output lines at the end.
    """
    n, V = topology.n_inputs, topology.V
    us = split_unitaries(params, topology.n_nodes, topology.unitary_dim)
    width = n + V
    bond = list(range(n, n + V))
    psi = np.zeros(2**width, dtype=complex)
    psi[0] = 1.0
    for step, u in enumerate(us):
        psi = embed(u, [step] + bond, width) @ psi
    probs = np.zeros(2**n)
    for i, amp in enumerate(psi):
        probs[i >> V] += abs(amp) ** 2
    return probs


# ---------------------------------------------------------------------------
# Scalars
# ---------------------------------------------------------------------------


def majority_vote(p: Fraction, r: int) -> Fraction:
    return sum(math.comb(r, k) * p**k * (1 - p) ** (r - k) for k in range(r // 2 + 1, r + 1))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
