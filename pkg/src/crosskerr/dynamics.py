"""Atom-field propagators: exact Jaynes-Cummings, dispersive, and Ising gates.

All propagators on a (qubit, mode) pair use the register convention of
:mod:`crosskerr.hilbert`: the flat index of ``|q, n>`` is ``q*(n_max+1) + n``
with ``q = 0`` for ``|g>`` and ``q = 1`` for ``|e>``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .hilbert import Operator, annihilation

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
# |e><e| - |g><g| in the (g, e) ordering
SIGMA_Z = np.array([[-1, 0], [0, 1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

DEFAULT_VALIDITY_THRESHOLD = 100.0


class DispersiveValidityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class JCParams:
    delta: float
    lam: float
    t: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("coupling must be non-negative")
        if self.t < 0:
            raise ValueError("interaction time must be non-negative")

    @property
    def dispersive_phase(self) -> float:
        """Rescaled phase ``lam^2 t / delta``."""
        return self.lam ** 2 * self.t / self.delta

    @classmethod
    def for_phase(cls, phase: float, delta_over_lambda: float, lam: float = 1.0) -> "JCParams":
        """Parameters whose dispersive phase equals ``phase`` at the given detuning ratio."""
        delta = delta_over_lambda * lam
        return cls(delta=delta, lam=lam, t=abs(phase * delta) / lam ** 2)


@dataclass(frozen=True)
class DispersivePhase:
    phi: float
    sign: int = 1

    def __post_init__(self):
        if not math.isfinite(self.phi):
            raise ValueError("phase must be finite")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


def effective_rabi(n, params: JCParams):
    """``sqrt(delta^2/4 + lam^2 n)``; ``n`` may be an array."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("photon number must be non-negative")
    out = np.sqrt(params.delta ** 2 / 4 + params.lam ** 2 * n)
    return float(out) if out.ndim == 0 else out


def exact_jc_propagator(params: JCParams, n_max: int, frame: str = "lab") -> Operator:
    """Closed-form ``exp(-iHt)`` assembled block by block.

    Each two-dimensional block couples ``|e, n>`` and ``|g, n+1>``; the
    ground-vacuum state only picks up a phase. The top state ``|e, n_max>``
    would couple to ``|g, n_max+1>``, which is outside the truncated space,
    so it evolves by its bare detuning phase and is flagged in the report.

    ``frame="rotating"`` removes the free detuning phases
    ``exp(-+i delta t/2)`` on ``|e>`` and ``|g>``.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    d, lam, t = params.delta, params.lam, params.t
    dim = n_max + 1
    u = np.zeros((2 * dim, 2 * dim), dtype=complex)

    def g(n):
        return n

    def e(n):
        return dim + n

    u[g(0), g(0)] = np.exp(0.5j * d * t)
    for n in range(n_max):
        om = math.sqrt(d * d / 4 + lam * lam * (n + 1))
        c, s = math.cos(om * t), math.sin(om * t)
        sinc = s / om if om > 0 else t
        off = -1j * lam * math.sqrt(n + 1) * sinc
        u[e(n), e(n)] = c - 0.5j * d * sinc
        u[g(n + 1), g(n + 1)] = c + 0.5j * d * sinc
        u[g(n + 1), e(n)] = off
        u[e(n), g(n + 1)] = off
    u[e(n_max), e(n_max)] = np.exp(-0.5j * d * t)

    if frame == "rotating":
        u = rotating_frame(params, n_max).matrix @ u
    elif frame != "lab":
        raise ValueError(f"unknown frame {frame!r}")
    return Operator(
        u,
        {"delta": d, "lambda": lam, "t": t, "frame": frame},
        {"truncation_unsafe": [("e", n_max)]},
    )


def rotating_frame(params: JCParams, n_max: int) -> Operator:
    """Diagonal map that strips the ``exp(-+i delta t / 2)`` atomic phases."""
    ph = 0.5 * params.delta * params.t
    diag = np.concatenate([np.full(n_max + 1, np.exp(-1j * ph)), np.full(n_max + 1, np.exp(1j * ph))])
    return Operator(np.diag(diag), {"delta": params.delta, "t": params.t})


def jc_hamiltonian(params: JCParams, n_max: int) -> np.ndarray:
    """Truncated interaction-picture Hamiltonian, used as an independent check."""
    a = annihilation(n_max)
    eye = np.eye(n_max + 1)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
    h = 0.5 * params.delta * np.kron(SIGMA_Z, eye)
    h = h + params.lam * (np.kron(sm, a.conj().T) + np.kron(sm.conj().T, a))
    return h


def jc_propagator_expm(params: JCParams, n_max: int) -> np.ndarray:
    return expm(-1j * params.t * jc_hamiltonian(params, n_max))


def dispersive_propagator(phase: DispersivePhase | float, n_max: int) -> Operator:
    """``e^{-i s phi (n+1)}|e><e| + e^{i s phi n}|g><g|`` (``s`` = sign)."""
    if not isinstance(phase, DispersivePhase):
        phase = DispersivePhase(float(phase))
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    n = np.arange(n_max + 1)
    sp = phase.sign * phase.phi
    diag = np.concatenate([np.exp(1j * sp * n), np.exp(-1j * sp * (n + 1))])
    return Operator(np.diag(diag), {"phi": phase.phi, "sign": phase.sign})


def conditional_phase(n_max: int, dagger: bool = False) -> Operator:
    """The conditional phase gate (dispersive phase pi/2), or its adjoint."""
    return dispersive_propagator(DispersivePhase(math.pi / 2, -1 if dagger else 1), n_max)


def ising_gate(chi: float) -> Operator:
    """Control-phase form of the Ising coupling: ``diag(1, 1, 1, e^{i chi})``.

    At ``chi = pi`` this flips the sign of ``|1, 1>`` only. It differs from
    ``exp(-i c Z1 Z2)`` with ``c = -chi/4`` by local z rotations and a global
    phase; see :func:`ising_local_frame`.
    """
    return Operator(np.diag([1, 1, 1, np.exp(1j * chi)]).astype(complex), {"chi": chi})


def ising_zz(coupling: float) -> Operator:
    """``exp(-i coupling Z1 Z2)`` with ``Z = |e><e| - |g><g|``."""
    zz = np.kron(SIGMA_Z, SIGMA_Z)
    return Operator(np.diag(np.exp(-1j * coupling * np.diag(zz))), {"coupling": coupling})


def ising_local_frame(chi: float) -> tuple[complex, np.ndarray]:
    """Global phase and single-qubit rotation relating the two Ising forms.

    ``ising_gate(chi) == phase * kron(r, r) @ ising_zz(-chi/4)``.
    """
    r = np.diag(np.exp(0.25j * chi * np.diag(SIGMA_Z)))
    return np.exp(0.25j * chi), r


@dataclass(frozen=True)
class ValidityReport:
    r_mean: float
    r_spread: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.r_mean > self.threshold and self.r_spread > self.threshold


def dispersive_validity(params: JCParams, nbar: float, dn: float,
                        threshold: float = DEFAULT_VALIDITY_THRESHOLD) -> ValidityReport:
    """Ratios ``delta^2 / (4 lam^2 nbar)`` and ``delta^2 / (4 lam^2 dn)``.

    Warns with :class:`DispersiveValidityWarning` when either ratio is at
    or below ``threshold``.
    """
    if nbar < 0 or dn < 0:
        raise ValueError("nbar and dn must be non-negative")

    def ratio(x):
        denom = 4 * params.lam ** 2 * x
        return math.inf if denom == 0 else params.delta ** 2 / denom

    rep = ValidityReport(ratio(nbar), ratio(dn), threshold)
    if not rep.passed:
        warnings.warn(
            f"dispersive regime not satisfied: ratios {rep.r_mean:.4g}, {rep.r_spread:.4g} "
            f"vs threshold {threshold:g}",
            DispersiveValidityWarning,
            stacklevel=2,
        )
    return rep
