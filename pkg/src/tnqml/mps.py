"""Matrix-product-state circuits on a register of ``V + 1`` qubits.

Register qubit 0 is the line that is measured and re-prepared between
steps; qubits ``1..V`` carry the bond.  Every step unitary acts on the whole
register in the order ``(q0, q1, ..., qV)``.

Discriminative: inputs ``0..V`` are loaded first, then after each unitary
qubit 0 is discarded and reloaded with the next input, so ``N - V`` unitaries
process ``N`` inputs.  The label is read from qubit 0 after the last step.

Generative: the register starts in ``|0...0>``; each of the ``N`` steps
applies a unitary, measures qubit 0 and records the outcome, then resets it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .noise import NoiseSpec
from .tree import MAX_EXACT_QUBITS, node_unitaries, project_probabilities

MODES = ("discriminative", "generative")


@dataclass(frozen=True)
class MpsTopology:
    V: int
    n_inputs: int
    mode: str = "discriminative"

    kind = "mps"

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.V < 1:
            raise ValueError(f"V must be at least 1, got {self.V}")
        minimum = self.V + 1 if self.mode == "discriminative" else 1
        if self.n_inputs < minimum:
            raise ValueError(f"{self.mode} MPS with V={self.V} needs at least {minimum} sites")

    @property
    def n_qubits(self) -> int:
        return self.V + 1

    @property
    def n_nodes(self) -> int:
        if self.mode == "discriminative":
            return self.n_inputs - self.V
        return self.n_inputs

    @property
    def bond_dim(self) -> int:
        return 2**self.V

    @property
    def unitary_dim(self) -> int:
        return 2 ** (self.V + 1)

    @property
    def params_per_node(self) -> int:
        return self.unitary_dim**2

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "V": self.V,
            "n": self.n_inputs,
            "mode": self.mode,
            "node_order": list(range(self.n_nodes)),
        }


def build_mps_topology(n_inputs: int, V: int = 1, mode: str = "discriminative") -> MpsTopology:
    return MpsTopology(V=V, n_inputs=n_inputs, mode=mode)


def _unitaries(topology: MpsTopology, params: np.ndarray) -> np.ndarray:
    return node_unitaries(topology, params)


def _require_mode(topology: MpsTopology, mode: str) -> None:
    if topology.mode != mode:
        raise ValueError(f"operation needs a {mode} MPS, topology is {topology.mode}")


def evaluate_discriminative_mps(
    topology: MpsTopology,
    params: np.ndarray,
    enc: np.ndarray,
    noise: NoiseSpec | None = None,
) -> np.ndarray:
    """Label distribution from the sequential ``(V+1)``-qubit simulation."""
    _require_mode(topology, "discriminative")
    enc = np.asarray(enc, dtype=float)
    single = enc.ndim == 2
    if single:
        enc = enc[None]
    if enc.ndim != 3 or enc.shape[1:] != (topology.n_inputs, 2):
        raise ValueError(f"encoding shape {enc.shape} does not match {topology.n_inputs} inputs")
    unitaries = _unitaries(topology, params)
    sites = (enc[..., :, None] * enc[..., None, :]).astype(complex)
    V = topology.V
    register = list(range(V + 1))
    rho = sites[:, 0]
    for k in range(1, V + 1):
        rho = linalg.kron(rho, sites[:, k])
    next_input = V + 1
    for step, u in enumerate(unitaries):
        if noise is not None:
            rho = noise.apply(rho, register)
        rho = u @ rho @ u.conj().T
        if step < len(unitaries) - 1:
            rest = linalg.partial_trace(rho, register[1:])
            rho = linalg.kron(sites[:, next_input], rest)
            next_input += 1
    out = linalg.partial_trace(rho, [0])
    probs = np.real(np.diagonal(out, axis1=-2, axis2=-1)).copy()
    return probs[0] if single else probs


def sample_generative_mps(
    topology: MpsTopology,
    params: np.ndarray,
    seed: int | np.random.Generator | None = None,
    shots: int | None = None,
    noise: NoiseSpec | None = None,
    return_probability: bool = False,
):
    """Born samples from the generative MPS circuit.

    Same return conventions as :func:`tnqml.tree.sample_generative_tree`.
    """
    _require_mode(topology, "generative")
    rng = np.random.default_rng(seed)
    unitaries = _unitaries(topology, params)
    count = 1 if shots is None else int(shots)
    register = list(range(topology.n_qubits))
    rho = np.broadcast_to(linalg.zero_density(topology.n_qubits), (count,) + (topology.unitary_dim,) * 2)
    bits = np.zeros((count, topology.n_inputs), dtype=np.uint8)
    path_prob = np.ones(count)
    for step, u in enumerate(unitaries):
        if noise is not None:
            rho = noise.apply(rho, register)
        rho = u @ rho @ u.conj().T
        p0, _ = project_probabilities(rho, 0)
        outcome = (rng.random(count) >= p0).astype(np.int64)
        prob, rho = linalg.project_qubit(rho, 0, outcome)
        path_prob = path_prob * prob
        bits[:, step] = outcome
        if step < len(unitaries) - 1:
            rho = linalg.reset_qubit(rho, 0)
    out = bits[0] if shots is None else bits
    if return_probability:
        return out, (path_prob[0] if shots is None else path_prob)
    return out


def exact_generative_distribution_mps(
    topology: MpsTopology, params: np.ndarray, noise: NoiseSpec | None = None
) -> np.ndarray:
    """Outcome distribution by enumerating every measurement branch.

    Branches are carried as a batch of unnormalized conditional states; the
    result index is the bitstring with the first output most significant.
    """
    _require_mode(topology, "generative")
    if topology.n_inputs > MAX_EXACT_QUBITS:
        raise ValueError(f"exact distribution limited to {MAX_EXACT_QUBITS} outputs")
    unitaries = _unitaries(topology, params)
    register = list(range(topology.n_qubits))
    rho = linalg.zero_density(topology.n_qubits)[None]
    weight = np.ones(1)
    for step, u in enumerate(unitaries):
        if noise is not None:
            rho = noise.apply(rho, register)
        rho = u @ rho @ u.conj().T
        branches = []
        weights = []
        for outcome in (0, 1):
            prob, post = linalg.project_qubit(rho, 0, outcome)
            branches.append(post)
            weights.append(weight * prob)
        # child branch index = 2 * parent + outcome
        rho = np.stack(branches, axis=1).reshape((-1,) + rho.shape[1:])
        weight = np.stack(weights, axis=1).reshape(-1)
        if step < len(unitaries) - 1:
            rho = linalg.reset_qubit(rho, 0)
    return weight


def export_mps_tensors(topology: MpsTopology, params: np.ndarray) -> list[np.ndarray]:
    """Rewrite the generative circuit as MPS tensors ``A[left, s, right]``.

    The reference ``|0>`` on qubit 0 is contracted into each step unitary and
    the ``V`` bond qubits are merged into one index of dimension ``2**V``.
    The first tensor has a trivial left index.  The last tensor keeps its
    right index open: those bond qubits are never measured, so outcome
    probabilities sum ``|amplitude|**2`` over it.
    """
    _require_mode(topology, "generative")
    unitaries = _unitaries(topology, params)
    D = topology.bond_dim
    tensors = []
    for step, u in enumerate(unitaries):
        # rows: (s, right); columns with q0 = |0>: left
        a = u[:, :D].reshape(2, D, D).transpose(2, 0, 1)
        if step == 0:
            a = a[:1]
        tensors.append(np.ascontiguousarray(a))
    return tensors


def mps_amplitudes(tensors: list[np.ndarray]) -> np.ndarray:
    """Contract an MPS into amplitudes of shape ``(2**N, right_dim)``."""
    psi = tensors[0][0]  # (s, right)
    for a in tensors[1:]:
        psi = np.einsum("xl,lsr->xsr", psi, a).reshape(-1, a.shape[2])
    return psi


def mps_probabilities(tensors: list[np.ndarray]) -> np.ndarray:
    return np.sum(np.abs(mps_amplitudes(tensors)) ** 2, axis=1)


def tensors_to_json(tensors: list[np.ndarray]) -> list[dict]:
    return [
        {"shape": list(a.shape), "real": a.real.ravel().tolist(), "imag": a.imag.ravel().tolist()}
        for a in tensors
    ]


def tensors_from_json(doc: list[dict]) -> list[np.ndarray]:
    out = []
    for entry in doc:
        shape = tuple(entry["shape"])
        real = np.asarray(entry["real"], dtype=float)
        imag = np.asarray(entry["imag"], dtype=float)
        if real.size != int(np.prod(shape)) or imag.size != real.size:
            raise ValueError(f"tensor data does not match shape {shape}")
        out.append((real + 1j * imag).reshape(shape))
    return out
