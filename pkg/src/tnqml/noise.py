"""Amplitude-damping and dephasing channels.

Noise strengths are specified either directly as probabilities or through a
gate time and the two coherence times, ``p = 1 - exp(-T_g / T)``.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import STATE_TOL, conjugate


@dataclass(frozen=True)
class KrausChannel:
    """Single-qubit channel in operator-sum form."""

    operators: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        ops = tuple(np.asarray(m, dtype=complex) for m in self.operators)
        object.__setattr__(self, "operators", ops)
        if not ops or any(m.shape != ops[0].shape for m in ops):
            raise ValueError("Kraus operators must be a non-empty list of equal-shape matrices")
        if not self.is_trace_preserving():
            raise ValueError("Kraus operators do not satisfy sum M^dagger M = I")

    def completeness(self) -> np.ndarray:
        return sum(m.conj().T @ m for m in self.operators)

    def is_trace_preserving(self, tol: float = STATE_TOL) -> bool:
        eye = np.eye(self.operators[0].shape[0])
        return bool(np.max(np.abs(self.completeness() - eye)) <= tol)


def _check_probability(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def amplitude_damping(p_a: float) -> KrausChannel:
    p_a = _check_probability("p_a", p_a)
    m0 = np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - p_a)]])
    m1 = np.array([[0.0, math.sqrt(p_a)], [0.0, 0.0]])
    return KrausChannel((m0, m1))


def dephasing(p_d: float) -> KrausChannel:
    p_d = _check_probability("p_d", p_d)
    m0 = math.sqrt(1.0 - p_d) * np.eye(2)
    m1 = np.diag([math.sqrt(p_d), 0.0])
    m2 = np.diag([0.0, math.sqrt(p_d)])
    return KrausChannel((m0, m1, m2))


def apply_channel(rho: np.ndarray, channel: KrausChannel, qubit: int) -> np.ndarray:
    """``rho -> sum_a M_a rho M_a^dagger`` on one qubit (batch axes allowed)."""
    if not channel.is_trace_preserving():
        raise ValueError("channel is not trace preserving")
    out = None
    for m in channel.operators:
        term = conjugate(rho, m, [qubit])
        out = term if out is None else out + term
    return out


@dataclass(frozen=True)
class NoiseSpec:
    """Per-qubit damping probability ``p_a`` and dephasing probability ``p_d``."""

    p_a: float = 0.0
    p_d: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_a", _check_probability("p_a", self.p_a))
        object.__setattr__(self, "p_d", _check_probability("p_d", self.p_d))

    @classmethod
    def from_times(cls, t_g: float, t_1: float, t_2: float) -> NoiseSpec:
        return rates_from_times(t_g, t_1, t_2)

    @cached_property
    def damping(self) -> KrausChannel:
        return amplitude_damping(self.p_a)

    @cached_property
    def dephasing(self) -> KrausChannel:
        return dephasing(self.p_d)

    def apply(self, rho: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
        """Dephase then damp each listed qubit independently."""
        for q in qubits:
            rho = apply_channel(apply_channel(rho, self.dephasing, q), self.damping, q)
        return rho

    def to_dict(self) -> dict:
        return {"p_a": self.p_a, "p_d": self.p_d}


def rates_from_times(t_g: float, t_1: float, t_2: float) -> NoiseSpec:
    """Channel probabilities for gate time ``t_g`` and coherence times ``t_1``, ``t_2``.

    Any consistent time unit works.
    """
    for name, value in (("T_g", t_g), ("T_1", t_1), ("T_2", t_2)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return NoiseSpec(p_a=-math.expm1(-t_g / t_1), p_d=-math.expm1(-t_g / t_2))


def noise_from_config(cfg: Mapping | None) -> NoiseSpec | None:
    """Parse ``{p_a, p_d}`` or ``{T_g, T_1, T_2}``; mixing the two is an error."""
    if not cfg:
        return None
    prob_keys = {"p_a", "p_d"} & cfg.keys()
    time_keys = {"T_g", "T_1", "T_2"} & cfg.keys()
    unknown = set(cfg) - {"p_a", "p_d", "T_g", "T_1", "T_2"}
    if unknown:
        raise ValueError(f"unknown noise fields: {sorted(unknown)}")
    if prob_keys and time_keys:
        raise ValueError("noise must be given as probabilities or as times, not both")
    if time_keys:
        missing = {"T_g", "T_1", "T_2"} - time_keys
        if missing:
            raise ValueError(f"missing noise time fields: {sorted(missing)}")
        return rates_from_times(cfg["T_g"], cfg["T_1"], cfg["T_2"])
    return NoiseSpec(p_a=cfg.get("p_a", 0.0), p_d=cfg.get("p_d", 0.0))
