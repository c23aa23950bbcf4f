"""Dense complex linear algebra for small qubit registers.

Density matrices are plain ``numpy`` arrays of shape ``(..., 2**n, 2**n)``;
any leading axes are treated as a batch and carried through every
operation.  Qubit 0 is the most significant bit of the basis index.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

STATE_TOL = 1e-10
ALGEBRA_TOL = 1e-12
PSD_TOL = 1e-9
ZERO_PROB = 1e-14


def num_qubits(dim: int) -> int:
    """Return ``n`` such that ``dim == 2**n``."""
    n = int(dim).bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def _check_targets(targets: Sequence[int], n: int) -> list[int]:
    targets = [int(q) for q in targets]
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate qubit index in {targets}")
    for q in targets:
        if not 0 <= q < n:
            raise ValueError(f"qubit index {q} out of range for {n} qubits")
    return targets


# ---------------------------------------------------------------------------
# Hermitian generators and unitaries
# ---------------------------------------------------------------------------


def hermitian_from_params(values: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Build a Hermitian matrix from its diagonal and upper-triangle entries.

    The ``dim**2`` real values are laid out as the ``dim`` diagonal entries
    followed by ``(re, im)`` pairs for each upper-triangle position ``i < j``
    in row-major order.  A leading batch axis is allowed, in which case one
    matrix is built per row.
    """
    values = np.asarray(values, dtype=float)
    size = values.shape[-1]
    if dim is None:
        dim = int(round(np.sqrt(size)))
    if dim < 1 or size != dim * dim:
        raise ValueError(f"expected {dim * dim} parameters for dim={dim}, got {size}")
    batch = values.shape[:-1]
    iu, ju = np.triu_indices(dim, 1)
    off = values[..., dim:].reshape(batch + (len(iu), 2))
    upper = off[..., 0] + 1j * off[..., 1]
    h = np.zeros(batch + (dim, dim), dtype=complex)
    diag = np.arange(dim)
    h[..., diag, diag] = values[..., :dim]
    h[..., iu, ju] = upper
    h[..., ju, iu] = upper.conj()
    return h


def params_from_hermitian(h: np.ndarray) -> np.ndarray:
    """Inverse of :func:`hermitian_from_params`."""
    h = np.asarray(h)
    dim = h.shape[-1]
    iu, ju = np.triu_indices(dim, 1)
    upper = h[..., iu, ju]
    off = np.stack([upper.real, upper.imag], axis=-1).reshape(h.shape[:-2] + (-1,))
    diag = np.real(h[..., np.arange(dim), np.arange(dim)])
    return np.concatenate([diag, off], axis=-1)


def unitary_from_hermitian(h: np.ndarray, check: bool = True) -> np.ndarray:
    """Return ``exp(iH)`` computed through the eigendecomposition of ``H``."""
    h = np.asarray(h, dtype=complex)
    if check and not np.allclose(h, np.swapaxes(h, -1, -2).conj(), rtol=0, atol=STATE_TOL):
        raise ValueError("generator is not Hermitian")
    w, q = np.linalg.eigh(h)
    return (q * np.exp(1j * w)[..., None, :]) @ np.swapaxes(q, -1, -2).conj()


def unitaries_from_params(params: np.ndarray, dim: int) -> np.ndarray:
    """Map a flat parameter vector onto a stack of ``dim x dim`` unitaries."""
    params = np.asarray(params, dtype=float)
    block = dim * dim
    if params.ndim != 1 or params.size % block:
        raise ValueError(f"parameter vector of length {params.size} is not a multiple of {block}")
    return unitary_from_hermitian(hermitian_from_params(params.reshape(-1, block), dim), check=False)


def is_unitary(u: np.ndarray, tol: float = STATE_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim < 2 or u.shape[-1] != u.shape[-2]:
        return False
    eye = np.eye(u.shape[-1])
    return bool(np.max(np.abs(u @ np.swapaxes(u, -1, -2).conj() - eye), initial=0.0) <= tol)


# ---------------------------------------------------------------------------
# Products and states
# ---------------------------------------------------------------------------


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of the trailing two axes, broadcasting any batch."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1 and b.ndim == 1:
        return np.kron(a, b)
    if a.ndim == 2 and b.ndim == 2:
        return np.kron(a, b)
    out = np.einsum("...ij,...kl->...ikjl", a, b)
    return out.reshape(out.shape[:-4] + (a.shape[-2] * b.shape[-2], a.shape[-1] * b.shape[-1]))


def product_state(sites: np.ndarray) -> np.ndarray:
    """Tensor a sequence of single-qubit amplitude vectors into one state."""
    psi = np.ones(1, dtype=complex)
    for site in np.asarray(sites):
        psi = np.kron(psi, site)
    return psi


def pure_density(psi: np.ndarray) -> np.ndarray:
    """``|psi><psi|`` for one state or a batch of states."""
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * psi[..., None, :].conj()


def zero_density(n: int) -> np.ndarray:
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def check_density_matrix(rho: np.ndarray, tol: float = STATE_TOL) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim < 2 or rho.shape[-1] != rho.shape[-2]:
        raise ValueError(f"not a square matrix: shape {rho.shape}")
    num_qubits(rho.shape[-1])
    if np.max(np.abs(rho - np.swapaxes(rho, -1, -2).conj()), initial=0.0) > tol:
        raise ValueError("density matrix is not Hermitian")
    if np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0), initial=0.0) > tol:
        raise ValueError("density matrix does not have unit trace")
    herm = 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())
    if np.min(np.linalg.eigvalsh(herm), initial=0.0) < -PSD_TOL:
        raise ValueError("density matrix is not positive semidefinite")


# ---------------------------------------------------------------------------
# Operations on density matrices
# ---------------------------------------------------------------------------


def _left_multiply(rho: np.ndarray, op: np.ndarray, targets: list[int], n: int, conj: bool) -> np.ndarray:
    """Contract ``op`` into the row (``conj=False``) or column axes of ``rho``."""
    k = len(targets)
    batch = rho.shape[:-2]
    t = rho.reshape(batch + (2,) * (2 * n))
    offset = n if conj else 0
    fresh = list(range(2 * n, 2 * n + k))
    axes = [offset + q for q in targets]
    op_t = op.reshape(op.shape[:-2] + (2,) * (2 * k))
    if conj:
        op_t = op_t.conj()
    rho_labels = list(range(2 * n))
    out_labels = list(rho_labels)
    for q, f in zip(axes, fresh):
        out_labels[q] = f
    res = np.einsum(
        op_t, [Ellipsis] + fresh + axes, t, [Ellipsis] + rho_labels, [Ellipsis] + out_labels
    )
    return res.reshape(res.shape[: res.ndim - 2 * n] + (2**n, 2**n))


def conjugate(rho: np.ndarray, op: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """Return ``op rho op^dagger`` with ``op`` acting on ``targets``.

    No unitarity check; used for unitaries, Kraus operators and projectors.
    """
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits(rho.shape[-1])
    targets = _check_targets(targets, n)
    op = np.asarray(op, dtype=complex)
    if op.shape[-1] != 2 ** len(targets) or op.shape[-2] != 2 ** len(targets):
        raise ValueError(f"operator of shape {op.shape} does not act on {len(targets)} qubits")
    if len(targets) == n and targets == list(range(n)):
        return op @ rho @ np.swapaxes(op, -1, -2).conj()
    out = _left_multiply(rho, op, targets, n, conj=False)
    return _left_multiply(out, op, targets, n, conj=True)


def apply_unitary(rho: np.ndarray, u: np.ndarray, targets: Sequence[int], check: bool = True) -> np.ndarray:
    """Apply ``u`` to the ordered ``targets`` of ``rho``: ``rho -> U rho U^dagger``."""
    u = np.asarray(u, dtype=complex)
    if check and not is_unitary(u):
        raise ValueError("operator is not unitary")
    return conjugate(rho, u, targets)


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on ``keep``, with qubits in the given order."""
    rho = np.asarray(rho)
    n = num_qubits(rho.shape[-1])
    keep = _check_targets(keep, n)
    if keep == list(range(n)):
        return rho
    batch = rho.shape[:-2]
    t = rho.reshape(batch + (2,) * (2 * n))
    rows = list(range(n))
    cols = [n + q if q in keep else q for q in range(n)]
    out = [q for q in keep] + [n + q for q in keep]
    res = np.einsum(t, [Ellipsis] + rows + cols, [Ellipsis] + out)
    d = 2 ** len(keep)
    return res.reshape(batch + (d, d))


def _bit_mask(n: int, qubit: int) -> np.ndarray:
    return (np.arange(2**n) >> (n - 1 - qubit)) & 1


def project_qubit(rho: np.ndarray, qubit: int, outcome) -> tuple:
    """Born probability of ``outcome`` on ``qubit`` and the post-measurement state.

    ``outcome`` may be an integer or an integer array matching the batch
    shape of ``rho``.  For unbatched input a probability below ``1e-14``
    returns ``None`` in place of the state; for batched input the offending
    entries are left as zero matrices.
    """
    rho = np.asarray(rho, dtype=complex)
    n = num_qubits(rho.shape[-1])
    _check_targets([qubit], n)
    outcome = np.asarray(outcome)
    if np.any((outcome != 0) & (outcome != 1)):
        raise ValueError("outcome must be 0 or 1")
    keep = (_bit_mask(n, qubit) == outcome[..., None]).astype(float)
    projected = rho * keep[..., :, None] * keep[..., None, :]
    prob = np.real(np.trace(projected, axis1=-2, axis2=-1))
    if rho.ndim == 2 and outcome.ndim == 0:
        if prob < ZERO_PROB:
            return float(prob), None
        return float(prob), projected / prob
    safe = np.where(prob < ZERO_PROB, np.inf, prob)
    return prob, projected / safe[..., None, None]


_RESET_KRAUS = (
    np.array([[1, 0], [0, 0]], dtype=complex),
    np.array([[0, 1], [0, 0]], dtype=complex),
)


def reset_qubit(rho: np.ndarray, qubit: int) -> np.ndarray:
    """Measure ``qubit``, forget the outcome and leave it in ``|0><0|``."""
    return sum(conjugate(rho, k, [qubit]) for k in _RESET_KRAUS)


def prepare_qubit(rho: np.ndarray, qubit: int, amplitude: np.ndarray) -> np.ndarray:
    """Reset ``qubit`` and load the real single-qubit state ``amplitude``.

    ``amplitude`` is ``[cos, sin]`` (or a batch of them); the load is the
    rotation mapping ``|0>`` onto it.
    """
    amplitude = np.asarray(amplitude, dtype=float)
    c, s = amplitude[..., 0], amplitude[..., 1]
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2).astype(complex)
    return conjugate(reset_qubit(rho, qubit), rot, [qubit])


def append_zero_qubits(rho: np.ndarray, k: int) -> np.ndarray:
    """Tensor ``k`` fresh ``|0>`` qubits onto the end of the register."""
    if k == 0:
        return rho
    return kron(rho, zero_density(k))


# ---------------------------------------------------------------------------
# Pure states
# ---------------------------------------------------------------------------


def apply_unitary_to_state(psi: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    """Apply ``u`` on ``targets`` of a statevector of length ``2**n``."""
    psi = np.asarray(psi, dtype=complex)
    n = num_qubits(psi.shape[-1])
    targets = _check_targets(targets, n)
    k = len(targets)
    t = psi.reshape((2,) * n)
    u_t = np.asarray(u, dtype=complex).reshape((2,) * (2 * k))
    labels = list(range(n))
    fresh = list(range(n, n + k))
    out = list(labels)
    for q, f in zip(targets, fresh):
        out[q] = f
    return np.einsum(u_t, fresh + targets, t, labels, out).reshape(-1)
