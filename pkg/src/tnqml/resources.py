"""Physical-qubit counts and measure-and-reset execution schedules.

A schedule is a flat list of three instruction kinds acting on physical
qubits ``q0, q1, ...``:

* ``P q<i> in<k>`` / ``P q<i> zero``: prepare a free qubit with input ``k``
  or the reference state.
* ``U n<id> q<i,j,...>``: apply node ``id``'s unitary to the listed qubits.
* ``M q<i> rec | rec:out<k> | load:in<k> | reset``: measure a live qubit and
  record the result (``out<k>`` names the output position in generative
  schedules), discard it and reload input ``k`` in place, or discard it and
  free the qubit.

Preparation always takes the lowest-index free qubit.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import linalg
from .mps import MpsTopology
from .noise import NoiseSpec
from .tree import TreeTopology, bits_to_index, project_probabilities


class ScheduleError(ValueError):
    """Invalid schedule; ``index`` is the offending instruction (or ``None``)."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"instruction {index}: {message}")


@dataclass(frozen=True)
class Prepare:
    qubit: int
    source: int | None = None  # input index, or None for |0>

    def to_text(self) -> str:
        src = "zero" if self.source is None else f"in{self.source}"
        return f"P q{self.qubit} {src}"


@dataclass(frozen=True)
class Apply:
    node: int
    qubits: tuple[int, ...]

    def to_text(self) -> str:
        return f"U n{self.node} q{','.join(str(q) for q in self.qubits)}"


@dataclass(frozen=True)
class Measure:
    qubit: int
    disposition: str  # "rec", "load" or "reset"
    index: int | None = None  # output position for rec, input for load

    def to_text(self) -> str:
        if self.disposition == "rec":
            tail = "rec" if self.index is None else f"rec:out{self.index}"
        elif self.disposition == "load":
            tail = f"load:in{self.index}"
        else:
            tail = "reset"
        return f"M q{self.qubit} {tail}"


Instruction = Prepare | Apply | Measure


def _is_power_of_two(x: int) -> bool:
    return isinstance(x, (int, np.integer)) and x >= 1 and x & (x - 1) == 0


def tree_qubit_count(n: int, V: int) -> int:
    """Physical qubits for a tree on ``n`` inputs with ``V`` lines per bond."""
    if not (_is_power_of_two(n) and _is_power_of_two(V)) or n < 2 * V:
        raise ValueError(f"need powers of two with N >= 2V, got N={n}, V={V}")
    return V * int(math.log2(2 * n // V))


def mps_qubit_count(V: int) -> int:
    if V < 1:
        raise ValueError(f"V must be at least 1, got {V}")
    return V + 1


@dataclass(frozen=True)
class Schedule:
    architecture: str
    mode: str
    n_inputs: int
    instructions: tuple[Instruction, ...] = field(default_factory=tuple)

    @cached_property
    def peak_live(self) -> int:
        live: set[int] = set()
        peak = 0
        for ins in self.instructions:
            if isinstance(ins, Prepare):
                live.add(ins.qubit)
            elif isinstance(ins, Measure) and ins.disposition != "load":
                live.discard(ins.qubit)
            peak = max(peak, len(live))
        return peak

    @property
    def n_physical(self) -> int:
        qubits = [ins.qubit for ins in self.instructions if not isinstance(ins, Apply)]
        return max(qubits, default=-1) + 1

    def validate(self) -> None:
        """Check qubit liveness, single use of every input and node."""
        live: set[int] = set()
        inputs: set[int] = set()
        nodes: set[int] = set()
        outputs: set[int] = set()

        def take_input(k: int, i: int) -> None:
            if not 0 <= k < self.n_inputs:
                raise ScheduleError(f"input index {k} out of range", i)
            if k in inputs:
                raise ScheduleError(f"input {k} loaded twice", i)
            inputs.add(k)

        for i, ins in enumerate(self.instructions):
            if isinstance(ins, Prepare):
                if ins.qubit in live:
                    raise ScheduleError(f"q{ins.qubit} prepared while live", i)
                if ins.source is not None:
                    take_input(ins.source, i)
                live.add(ins.qubit)
            elif isinstance(ins, Apply):
                dead = [q for q in ins.qubits if q not in live]
                if dead:
                    raise ScheduleError(f"unitary n{ins.node} touches unprepared qubits {dead}", i)
                if len(set(ins.qubits)) != len(ins.qubits):
                    raise ScheduleError(f"unitary n{ins.node} repeats a qubit", i)
                if ins.node in nodes:
                    raise ScheduleError(f"node n{ins.node} applied twice", i)
                nodes.add(ins.node)
            else:
                if ins.qubit not in live:
                    raise ScheduleError(f"measuring q{ins.qubit} which is not live", i)
                if ins.disposition == "load":
                    take_input(ins.index, i)
                else:
                    live.discard(ins.qubit)
                if ins.disposition == "rec" and ins.index is not None:
                    if ins.index in outputs:
                        raise ScheduleError(f"output {ins.index} recorded twice", i)
                    outputs.add(ins.index)
        if self.mode == "discriminative" and len(inputs) != self.n_inputs:
            raise ScheduleError(f"{self.n_inputs - len(inputs)} inputs never loaded")
        if self.mode == "generative" and len(outputs) != self.n_inputs:
            raise ScheduleError(f"{self.n_inputs - len(outputs)} outputs never recorded")
        if nodes != set(range(len(nodes))):
            raise ScheduleError("node ids are not contiguous from 0")

    def to_text(self) -> str:
        return "".join(ins.to_text() + "\n" for ins in self.instructions)


_P_RE = re.compile(r"^P q(\d+) (?:in(\d+)|zero)$")
_U_RE = re.compile(r"^U n(\d+) q(\d+(?:,\d+)*)$")
_M_RE = re.compile(r"^M q(\d+) (rec(?::out(\d+))?|load:in(\d+)|reset)$")


def parse_schedule(text: str, architecture: str, mode: str, n_inputs: int) -> Schedule:
    """Parse the line format produced by :meth:`Schedule.to_text`."""
    out: list[Instruction] = []
    for lineno, raw in enumerate(text.splitlines()):
        line = raw.strip()
        if not line:
            continue
        if m := _P_RE.match(line):
            out.append(Prepare(int(m[1]), None if m[2] is None else int(m[2])))
        elif m := _U_RE.match(line):
            out.append(Apply(int(m[1]), tuple(int(q) for q in m[2].split(","))))
        elif m := _M_RE.match(line):
            if m[2].startswith("rec"):
                out.append(Measure(int(m[1]), "rec", None if m[3] is None else int(m[3])))
            elif m[2] == "reset":
                out.append(Measure(int(m[1]), "reset"))
            else:
                out.append(Measure(int(m[1]), "load", int(m[4])))
        else:
            raise ScheduleError(f"cannot parse {raw!r}", lineno)
    return Schedule(architecture, mode, n_inputs, tuple(out))


class _Allocator:
    def __init__(self) -> None:
        self.free: set[int] = set()
        self.count = 0

    def take(self) -> int:
        if self.free:
            q = min(self.free)
            self.free.remove(q)
            return q
        self.count += 1
        return self.count - 1

    def release(self, q: int) -> None:
        self.free.add(q)


def schedule_tree(topology: TreeTopology, mode: str = "discriminative") -> Schedule:
    """Depth-first schedule reusing measured qubits.

    The discriminative pattern traverses the tree in postorder; the
    generative pattern is its mirror image in preorder.
    """
    if not isinstance(topology, TreeTopology):
        raise ValueError("schedule_tree needs a tree topology")
    V = topology.V
    alloc = _Allocator()
    ins: list[Instruction] = []

    if mode == "discriminative":

        def visit(node_id: int) -> list[int]:
            node = topology.nodes[node_id]
            halves = []
            for child in (node.left, node.right):
                if child.kind == "leaf":
                    qs = []
                    for leaf in topology.leaf_blocks[child.index]:
                        q = alloc.take()
                        ins.append(Prepare(q, leaf))
                        qs.append(q)
                else:
                    qs = visit(child.index)
                halves.append(qs)
            ins.append(Apply(node_id, tuple(halves[0] + halves[1])))
            for q in halves[1]:
                ins.append(Measure(q, "reset"))
                alloc.release(q)
            return halves[0]

        kept = visit(topology.root.id)
        for q in kept[1:]:
            ins.append(Measure(q, "reset"))
        ins.append(Measure(kept[0], "rec"))
    elif mode == "generative":

        def visit_gen(node_id: int, incoming: list[int]) -> None:
            fresh = []
            for _ in range(2 * V - len(incoming)):
                q = alloc.take()
                ins.append(Prepare(q))
                fresh.append(q)
            qs = incoming + fresh
            ins.append(Apply(node_id, tuple(qs)))
            node = topology.nodes[node_id]
            for child, cqs in ((node.left, qs[:V]), (node.right, qs[V:])):
                if child.kind == "leaf":
                    for q, leaf in zip(cqs, topology.leaf_blocks[child.index]):
                        ins.append(Measure(q, "rec", leaf))
                        alloc.release(q)
                else:
                    visit_gen(child.index, cqs)

        visit_gen(topology.root.id, [])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Schedule("tree", mode, topology.n_inputs, tuple(ins))


def schedule_mps(topology: MpsTopology, mode: str | None = None) -> Schedule:
    """Sequential schedule on ``V + 1`` qubits; qubit 0 is measured each step."""
    if not isinstance(topology, MpsTopology):
        raise ValueError("schedule_mps needs an MPS topology")
    mode = topology.mode if mode is None else mode
    if mode != topology.mode:
        raise ValueError(f"topology is {topology.mode}, cannot schedule as {mode}")
    V = topology.V
    register = list(range(V + 1))
    last = topology.n_nodes - 1
    ins: list[Instruction] = []
    if mode == "discriminative":
        ins.extend(Prepare(q, q) for q in register)
        for step in range(topology.n_nodes):
            ins.append(Apply(step, tuple(register)))
            if step < last:
                ins.append(Measure(0, "load", V + 1 + step))
        ins.extend(Measure(q, "reset") for q in register[1:])
        ins.append(Measure(0, "rec"))
    else:
        ins.extend(Prepare(q) for q in register)
        for step in range(topology.n_nodes):
            ins.append(Apply(step, tuple(register)))
            ins.append(Measure(0, "rec", step))
            if step < last:
                ins.append(Prepare(0))
        ins.extend(Measure(q, "reset") for q in register[1:])
    return Schedule("mps", mode, topology.n_inputs, tuple(ins))


def _node_unitaries(schedule: Schedule, params: np.ndarray) -> dict[int, np.ndarray]:
    arity = {ins.node: len(ins.qubits) for ins in schedule.instructions if isinstance(ins, Apply)}
    params = np.asarray(params, dtype=float)
    needed = sum(4 ** arity[n] for n in arity)
    if params.shape != (needed,):
        raise ValueError(f"schedule needs {needed} parameters, got shape {params.shape}")
    out = {}
    offset = 0
    for node in sorted(arity):
        dim = 2 ** arity[node]
        out[node] = linalg.unitaries_from_params(params[offset : offset + dim * dim], dim)[0]
        offset += dim * dim
    return out


def simulate_schedule(
    schedule: Schedule,
    params: np.ndarray,
    inputs: np.ndarray | None = None,
    seed: int | np.random.Generator | None = None,
    noise: NoiseSpec | None = None,
    shots: int | None = None,
    exact: bool = False,
):
    """Execute a schedule on a density matrix of ``n_physical`` qubits.

    Discriminative schedules take site amplitudes ``inputs`` of shape
    ``(N, 2)`` and return the recorded qubit's distribution.  Generative
    schedules return sampled bitstrings (one, or ``(shots, N)``), or with
    ``exact=True`` the full outcome distribution by branch enumeration.
    """
    schedule.validate()
    unitaries = _node_unitaries(schedule, params)
    width = schedule.n_physical
    if width != schedule.peak_live:
        raise ScheduleError(f"schedule uses {width} qubits but peaks at {schedule.peak_live} live")
    generative = schedule.mode == "generative"
    if not generative:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape != (schedule.n_inputs, 2):
            raise ValueError(f"inputs must have shape ({schedule.n_inputs}, 2)")
    rng = np.random.default_rng(seed)
    count = 1 if (exact or not generative or shots is None) else int(shots)
    rho = np.broadcast_to(linalg.zero_density(width), (count, 2**width, 2**width)).copy()
    weight = np.ones(count)
    bits = np.zeros((count, schedule.n_inputs), dtype=np.uint8)
    result = None
    for i, ins in enumerate(schedule.instructions):
        if isinstance(ins, Prepare):
            rho = linalg.reset_qubit(rho, ins.qubit)
            if ins.source is not None:
                if generative:
                    raise ScheduleError("generative schedules take no inputs", i)
                rho = linalg.prepare_qubit(rho, ins.qubit, inputs[ins.source])
        elif isinstance(ins, Apply):
            if noise is not None:
                rho = noise.apply(rho, ins.qubits)
            rho = linalg.conjugate(rho, unitaries[ins.node], ins.qubits)
        elif ins.disposition == "load":
            rho = linalg.prepare_qubit(rho, ins.qubit, inputs[ins.index])
        elif ins.disposition == "reset":
            rho = linalg.reset_qubit(rho, ins.qubit)
        elif not generative:
            reduced = linalg.partial_trace(rho[0], [ins.qubit])
            result = np.real(np.diag(reduced)).copy()
            rho = linalg.reset_qubit(rho, ins.qubit)
        elif exact:
            posts, weights = [], []
            for outcome in (0, 1):
                prob, post = linalg.project_qubit(rho, ins.qubit, outcome)
                posts.append(post)
                weights.append(weight * prob)
            rho = np.concatenate(posts)
            weight = np.concatenate(weights)
            bits = np.concatenate([bits, bits])
            bits[len(bits) // 2 :, ins.index] = 1
        else:
            p0, _ = project_probabilities(rho, ins.qubit)
            outcome = (rng.random(count) >= p0).astype(np.int64)
            prob, rho = linalg.project_qubit(rho, ins.qubit, outcome)
            weight = weight * prob
            bits[:, ins.index] = outcome
    if not generative:
        if result is None:
            raise ScheduleError("discriminative schedule never records an output")
        return result
    if exact:
        table = np.zeros(2**schedule.n_inputs)
        np.add.at(table, bits_to_index(bits), weight)
        return table
    return bits[0] if shots is None else bits
