"""Tree tensor-network circuits over a 2D pixel grid.

Discriminative evaluation contracts the circuit bottom-up, keeping only the
reduced density matrix of each subtree's ``V`` outgoing qubit lines.  At
every node the unitary acts on ``(left lines, right lines)``; the left
child's lines continue upward and the right child's are traced out.

The generative circuit runs the same node structure top-down: the root acts
on ``2V`` fresh qubits, every other node acts on the ``V`` lines handed down
from its parent followed by ``V`` fresh qubits, and a node's first ``V``
output lines go to its left child, the last ``V`` to its right child.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import linalg
from .noise import NoiseSpec

MAX_EXACT_QUBITS = 12
MAX_EXACT_NOISY_QUBITS = 10


@dataclass(frozen=True)
class Child:
    kind: str  # "leaf" (index into leaf_blocks) or "node" (node id)
    index: int


@dataclass(frozen=True)
class TreeNode:
    id: int
    layer: int
    left: Child
    right: Child
    leaves: tuple[int, ...]


def _is_power_of_two(x: int) -> bool:
    return x >= 1 and x & (x - 1) == 0


@dataclass(frozen=True)
class TreeTopology:
    """Binary tree over ``width x height`` inputs with ``V`` lines per bond.

    ``leaf_blocks`` lists the input indices (row-major pixel order) feeding
    each bottom-level child; ``nodes`` are ordered layer by layer, so every
    child precedes its parent and the root is last.
    """

    width: int
    height: int
    V: int
    leaf_blocks: tuple[tuple[int, ...], ...]
    nodes: tuple[TreeNode, ...]

    kind = "tree"

    @property
    def n_inputs(self) -> int:
        return self.width * self.height

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_layers(self) -> int:
        return self.nodes[-1].layer

    @property
    def root(self) -> TreeNode:
        return self.nodes[-1]

    @property
    def bond_dim(self) -> int:
        return 2**self.V

    @property
    def unitary_dim(self) -> int:
        return 4**self.V

    @property
    def params_per_node(self) -> int:
        return self.unitary_dim**2

    @cached_property
    def layers(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_layers)]
        for node in self.nodes:
            out[node.layer - 1].append(node.id)
        return tuple(tuple(ids) for ids in out)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "V": self.V,
            "width": self.width,
            "height": self.height,
            "node_order": [node.id for node in self.nodes],
        }


def build_tree_topology(width: int, height: int, V: int = 1) -> TreeTopology:
    """Alternating horizontal/vertical coarse-graining of a pixel grid.

    The first merge is horizontal.  When one axis is exhausted the remaining
    merges all run along the other.  For ``V > 1`` the first ``lg V`` merges
    only group pixels into ``V``-qubit input blocks; every later merge is a
    circuit node.
    """
    if not (_is_power_of_two(width) and _is_power_of_two(height)):
        raise ValueError(f"grid dimensions must be powers of two, got {width}x{height}")
    if not _is_power_of_two(V):
        raise ValueError(f"V must be a power of two, got {V}")
    n = width * height
    if n < 2 * V:
        raise ValueError(f"need at least 2V = {2 * V} inputs, got {n}")

    # grid[r][c] is either a tuple of pixel indices (before blocks are formed)
    # or a (Child, leaves) pair afterwards
    grid: list[list] = [[(r * width + c,) for c in range(width)] for r in range(height)]
    merges_for_blocks = V.bit_length() - 1
    step = 0
    horizontal = True
    nodes: list[TreeNode] = []
    leaf_blocks: list[tuple[int, ...]] = []
    layer = 0

    def pick_axis() -> bool:
        rows, cols = len(grid), len(grid[0])
        if horizontal and cols > 1:
            return True
        if not horizontal and rows > 1:
            return False
        return cols > 1

    while len(grid) * len(grid[0]) > 1:
        axis_h = pick_axis()
        if step == merges_for_blocks:
            flat = [cell for row in grid for cell in row]
            leaf_blocks = [tuple(cell) for cell in flat]
            cols = len(grid[0])
            grid = [
                [(Child("leaf", r * cols + c), leaf_blocks[r * cols + c]) for c in range(cols)]
                for r in range(len(grid))
            ]
        if step >= merges_for_blocks:
            layer += 1
        if axis_h:
            pairs = [[(row[2 * c], row[2 * c + 1]) for c in range(len(row) // 2)] for row in grid]
        else:
            pairs = [
                [(grid[2 * r][c], grid[2 * r + 1][c]) for c in range(len(grid[0]))]
                for r in range(len(grid) // 2)
            ]
        new_grid = []
        for row in pairs:
            new_row = []
            for a, b in row:
                if step < merges_for_blocks:
                    new_row.append(a + b)
                else:
                    node = TreeNode(len(nodes), layer, a[0], b[0], a[1] + b[1])
                    nodes.append(node)
                    new_row.append((Child("node", node.id), node.leaves))
            new_grid.append(new_row)
        grid = new_grid
        step += 1
        horizontal = not axis_h

    return TreeTopology(width, height, V, tuple(leaf_blocks), tuple(nodes))


def parameter_count(topology) -> int:
    """Number of real parameters: one ``d x d`` Hermitian generator per node."""
    return topology.n_nodes * topology.params_per_node


def node_unitaries(topology, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape != (parameter_count(topology),):
        raise ValueError(f"expected {parameter_count(topology)} parameters, got shape {params.shape}")
    return linalg.unitaries_from_params(params, topology.unitary_dim)


def identity_params(topology) -> np.ndarray:
    return np.zeros(parameter_count(topology))


def random_params(topology, rng: np.random.Generator | int | None = None, scale: float = 1.0) -> np.ndarray:
    """I.i.d. ``Normal(0, scale**2)`` parameters."""
    rng = np.random.default_rng(rng)
    return scale * rng.standard_normal(parameter_count(topology))


# ---------------------------------------------------------------------------
# Discriminative evaluation
# ---------------------------------------------------------------------------


def _site_densities(enc: np.ndarray) -> np.ndarray:
    enc = np.asarray(enc, dtype=float)
    return (enc[..., :, None] * enc[..., None, :]).astype(complex)


def _block_densities(topology: TreeTopology, sites: np.ndarray) -> np.ndarray:
    blocks = np.asarray(topology.leaf_blocks)
    out = sites[:, blocks[:, 0]]
    for j in range(1, topology.V):
        out = linalg.kron(out, sites[:, blocks[:, j]])
    return out


def _trace_right_half(rho: np.ndarray, d: int) -> np.ndarray:
    t = rho.reshape(rho.shape[:-2] + (d, d, d, d))
    return np.einsum("...aibi->...ab", t)


def _check_encoding(topology, enc: np.ndarray) -> tuple[np.ndarray, bool]:
    enc = np.asarray(enc, dtype=float)
    single = enc.ndim == 2
    if single:
        enc = enc[None]
    if enc.ndim != 3 or enc.shape[1:] != (topology.n_inputs, 2):
        raise ValueError(f"encoding shape {enc.shape} does not match {topology.n_inputs} inputs")
    return enc, single


def contract_tree(
    topology: TreeTopology,
    params: np.ndarray,
    enc: np.ndarray,
    noise: NoiseSpec | None = None,
) -> np.ndarray:
    """Density matrices emitted upward by every node.

    ``enc`` has shape ``(batch, N, 2)``; the result has shape
    ``(batch, n_nodes, 2**V, 2**V)`` indexed by node id.
    """
    enc, _ = _check_encoding(topology, enc)
    unitaries = node_unitaries(topology, params)
    d = topology.bond_dim
    batch = enc.shape[0]
    leaves = _block_densities(topology, _site_densities(enc))
    states = np.empty((batch, topology.n_nodes, d, d), dtype=complex)
    lines = range(topology.V)
    for ids in topology.layers:
        ids = list(ids)
        nodes = [topology.nodes[i] for i in ids]
        source = leaves if nodes[0].left.kind == "leaf" else states
        left = source[:, [n.left.index for n in nodes]]
        right = source[:, [n.right.index for n in nodes]]
        if noise is not None:
            left = noise.apply(left, lines)
            right = noise.apply(right, lines)
        u = unitaries[ids]
        rho = u @ linalg.kron(left, right) @ np.swapaxes(u, -1, -2).conj()
        states[:, ids] = _trace_right_half(rho, d)
    return states


def evaluate_discriminative(
    topology: TreeTopology,
    params: np.ndarray,
    enc: np.ndarray,
    noise: NoiseSpec | None = None,
) -> np.ndarray:
    """Output-qubit distribution ``[p(0), p(1)]``; batched if ``enc`` is 3D."""
    enc, single = _check_encoding(topology, enc)
    root = contract_tree(topology, params, enc, noise)[:, -1]
    out = linalg.partial_trace(root, [0]) if topology.V > 1 else root
    probs = np.real(np.diagonal(out, axis1=-2, axis2=-1)).copy()
    return probs[0] if single else probs


def predict_label(dist: np.ndarray) -> np.ndarray | int:
    """Most probable basis state; ``argmax`` already breaks ties low."""
    dist = np.asarray(dist)
    labels = np.argmax(dist, axis=-1)
    return int(labels) if labels.ndim == 0 else labels


# ---------------------------------------------------------------------------
# Generative sampling
# ---------------------------------------------------------------------------


def generative_line_layout(topology: TreeTopology) -> tuple[dict[int, tuple[int, ...]], list[int]]:
    """Assign qubit line labels to the generative circuit in preorder.

    Returns ``(node_lines, leaf_of_line)``: the ordered ``2V`` lines each node
    acts on, and the input index measured on each line.
    """
    V = topology.V
    node_lines: dict[int, tuple[int, ...]] = {}
    leaf_of_line: dict[int, int] = {}
    counter = 0

    def visit(node_id: int, incoming: tuple[int, ...]) -> None:
        nonlocal counter
        fresh = tuple(range(counter, counter + 2 * V - len(incoming)))
        counter += len(fresh)
        lines = incoming + fresh
        node_lines[node_id] = lines
        node = topology.nodes[node_id]
        for child, clines in ((node.left, lines[:V]), (node.right, lines[V:])):
            if child.kind == "leaf":
                for line, leaf in zip(clines, topology.leaf_blocks[child.index]):
                    leaf_of_line[line] = leaf
            else:
                visit(child.index, clines)

    visit(topology.root.id, ())
    return node_lines, [leaf_of_line[i] for i in range(counter)]


def bits_to_index(bits: np.ndarray) -> np.ndarray | int:
    """Big-endian integer value of bitstrings (first bit most significant)."""
    bits = np.asarray(bits, dtype=np.int64)
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1, dtype=np.int64)
    value = bits @ weights
    return int(value) if np.ndim(value) == 0 else value


class _Register:
    """Batched density matrix over a changing set of labelled qubit lines."""

    def __init__(self, shots: int):
        self.lines: list[int] = []
        self.rho = np.ones((shots, 1, 1), dtype=complex)
        self.path_prob = np.ones(shots)

    def add(self, lines) -> None:
        self.rho = linalg.append_zero_qubits(self.rho, len(lines))
        self.lines.extend(lines)

    def apply(self, u: np.ndarray, lines, noise: NoiseSpec | None) -> None:
        pos = [self.lines.index(line) for line in lines]
        if noise is not None:
            self.rho = noise.apply(self.rho, pos)
        self.rho = linalg.conjugate(self.rho, u, pos)

    def measure(self, line: int, rng: np.random.Generator) -> np.ndarray:
        pos = self.lines.index(line)
        p0, _ = project_probabilities(self.rho, pos)
        outcome = (rng.random(self.rho.shape[0]) >= p0).astype(np.int64)
        prob, post = linalg.project_qubit(self.rho, pos, outcome)
        self.path_prob = self.path_prob * prob
        keep = [i for i in range(len(self.lines)) if i != pos]
        self.rho = linalg.partial_trace(post, keep)
        self.lines.pop(pos)
        return outcome


def project_probabilities(rho: np.ndarray, qubit: int) -> tuple[np.ndarray, np.ndarray]:
    """Born probabilities of 0 and 1 on ``qubit`` without forming post-states."""
    n = linalg.num_qubits(rho.shape[-1])
    diag = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
    bit = linalg._bit_mask(n, qubit)
    p1 = diag[..., bit == 1].sum(axis=-1)
    p0 = diag[..., bit == 0].sum(axis=-1)
    return p0, p1


def sample_generative_tree(
    topology: TreeTopology,
    params: np.ndarray,
    seed: int | np.random.Generator | None = None,
    shots: int | None = None,
    noise: NoiseSpec | None = None,
    return_probability: bool = False,
):
    """Draw Born samples from the generative tree circuit.

    Nodes are applied in preorder and each qubit is measured as soon as its
    last unitary has acted, so at most ``V lg(2N/V)`` qubits are ever live.
    Returns a bitstring of length ``N`` in input order, or ``(shots, N)``
    when ``shots`` is given.  With ``return_probability`` the product of the
    conditional outcome probabilities along each sampled path is returned too.
    """
    rng = np.random.default_rng(seed)
    unitaries = node_unitaries(topology, params)
    node_lines, leaf_of_line = generative_line_layout(topology)
    count = 1 if shots is None else int(shots)
    bits = np.zeros((count, topology.n_inputs), dtype=np.uint8)
    reg = _Register(count)
    V = topology.V

    def visit(node_id: int) -> None:
        lines = node_lines[node_id]
        reg.add([line for line in lines if line not in reg.lines])
        reg.apply(unitaries[node_id], lines, noise)
        node = topology.nodes[node_id]
        for child, clines in ((node.left, lines[:V]), (node.right, lines[V:])):
            if child.kind == "leaf":
                for line in clines:
                    bits[:, leaf_of_line[line]] = reg.measure(line, rng)
            else:
                visit(child.index)

    if count:
        visit(topology.root.id)
    out = bits[0] if shots is None else bits
    if return_probability:
        prob = reg.path_prob[0] if shots is None else reg.path_prob
        return out, prob
    return out


def exact_generative_distribution(
    topology: TreeTopology, params: np.ndarray, noise: NoiseSpec | None = None
) -> np.ndarray:
    """Exact outcome distribution over all ``2**N`` bitstrings.

    Index ``i`` of the result is the bitstring whose first input is the most
    significant bit.  Built from the full-width statevector (or density
    matrix when ``noise`` is given).
    """
    n = topology.n_inputs
    limit = MAX_EXACT_NOISY_QUBITS if noise is not None else MAX_EXACT_QUBITS
    if n > limit:
        raise ValueError(f"exact distribution limited to {limit} qubits, got {n}")
    unitaries = node_unitaries(topology, params)
    node_lines, leaf_of_line = generative_line_layout(topology)
    if noise is None:
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = 1.0
        for node in reversed(topology.nodes):
            psi = linalg.apply_unitary_to_state(psi, unitaries[node.id], node_lines[node.id])
        by_line = np.abs(psi) ** 2
    else:
        rho = linalg.zero_density(n)
        for node in reversed(topology.nodes):
            lines = node_lines[node.id]
            rho = linalg.conjugate(noise.apply(rho, lines), unitaries[node.id], lines)
        by_line = np.real(np.diagonal(rho))
    # reorder axes from line order to input order
    t = by_line.reshape((2,) * n)
    perm = np.argsort(leaf_of_line)
    return np.clip(np.transpose(t, perm).reshape(-1), 0.0, None)
