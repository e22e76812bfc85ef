"""Coherent-state qubit embeddings, one-ebit conditions, entropy and fidelity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import sqrtm

from .hilbert import DensityOperator, HybridState, coherent_overlap, coherent_state, default_nmax

SIN_TOL = 1e-8
PHASE_TOL = 1e-8
NEGATIVE_EIGEN_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CoherentQubitBasis:
    """Orthonormal basis of the span of two coherent states ``|alpha>, |beta>``.

    ``sin 2 theta = |<alpha|beta>|`` and ``e^{-i phi}`` is the phase of the
    overlap. The basis vectors are normalized by ``cos 2 theta`` (that is,
    ``N = cos^2 2 theta``); ``N = cos 2 theta`` would leave them with squared
    norm ``cos 2 theta``.
    """

    alpha: complex
    beta: complex
    theta: float
    phi: float
    plus: HybridState
    minus: HybridState

    @property
    def norm_factor(self) -> float:
        return math.cos(2 * self.theta) ** 2

    def vectors(self) -> np.ndarray:
        return np.array([self.plus.amplitudes, self.minus.amplitudes])

    def gram(self) -> np.ndarray:
        v = self.vectors()
        return v.conj() @ v.T

    def reconstruct(self) -> tuple[np.ndarray, np.ndarray]:
        """``|alpha>`` and ``|beta>`` rebuilt from the basis."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        ep, em = np.exp(0.5j * self.phi), np.exp(-0.5j * self.phi)
        p, m = self.plus.amplitudes, self.minus.amplitudes
        return ep * (c * p + s * m), em * (s * p + c * m)

    def coordinates(self, ket: np.ndarray) -> np.ndarray:
        """Components of a Fock vector along ``(plus, minus)``."""
        return self.vectors().conj() @ np.asarray(ket)


def coherent_qubit_basis(alpha: complex, beta: complex, n_max: int | None = None,
                         label: str = "a") -> CoherentQubitBasis:
    if n_max is None:
        n_max = default_nmax(max(abs(alpha), abs(beta)))
    ka = coherent_state(alpha, n_max, label)
    kb = coherent_state(beta, n_max, label)
    ov = ka.inner(kb)
    mag = abs(ov)
    if mag >= 1 - 1e-12:
        raise ValueError("alpha and beta give the same state; no two-dimensional span")
    theta = 0.5 * math.asin(mag)
    phi = -float(np.angle(ov)) if mag > 0 else 0.0
    c, s = math.cos(theta), math.sin(theta)
    ep, em = np.exp(0.5j * phi), np.exp(-0.5j * phi)
    scale = 1 / math.cos(2 * theta)
    plus = (ka.scaled(em * c) - kb.scaled(ep * s)).scaled(scale)
    minus = (kb.scaled(ep * c) - ka.scaled(em * s)).scaled(scale)
    return CoherentQubitBasis(complex(alpha), complex(beta), theta, phi, plus, minus)


@dataclass(frozen=True)
class EbitQuery:
    """``|A_a, A_b> + e^{i psi} |B_a, B_b>``, given per mode as ``(A, B)`` pairs.

    ``variant="cross"`` with a single pair ``(alpha, beta)`` means
    ``|alpha, beta> + e^{i psi} |beta, alpha>``.
    """

    mode_a: tuple[complex, complex]
    mode_b: tuple[complex, complex]
    psi: float
    variant: str = "same"

    @classmethod
    def same(cls, alpha: complex, beta: complex, psi: float) -> "EbitQuery":
        return cls((alpha, beta), (alpha, beta), psi, "same")

    @classmethod
    def cross(cls, alpha: complex, beta: complex, psi: float) -> "EbitQuery":
        return cls((alpha, beta), (beta, alpha), psi, "cross")

    def state(self, n_max: int | None = None) -> HybridState:
        from .hilbert import tensor

        if n_max is None:
            n_max = default_nmax(max(abs(c) for c in (*self.mode_a, *self.mode_b)))
        first = tensor(coherent_state(self.mode_a[0], n_max, "a"), coherent_state(self.mode_b[0], n_max, "b"))
        second = tensor(coherent_state(self.mode_a[1], n_max, "a"), coherent_state(self.mode_b[1], n_max, "b"))
        return (first + second.scaled(np.exp(1j * self.psi))).normalize()


@dataclass(frozen=True)
class EbitResult:
    holds: bool
    sin_residual: float
    phase_residual: float
    theta: tuple[float, float]
    phi: tuple[float, float]

    def __bool__(self) -> bool:
        return self.holds


def _wrap(x: float) -> float:
    return (x + math.pi) % (2 * math.pi) - math.pi


def one_ebit_condition(q: EbitQuery, sin_tol: float = SIN_TOL, phase_tol: float = PHASE_TOL) -> EbitResult:
    """Check ``sin 2th_a = sin 2th_b`` and ``psi - phi_a - phi_b = pi (mod 2 pi)``.

    Both mode bases are built from the ordered pairs in the query, so the
    cross variant reduces to ``psi = pi (mod 2 pi)``.
    """
    ov_a = coherent_overlap(*q.mode_a)
    ov_b = coherent_overlap(*q.mode_b)
    sa, sb = abs(ov_a), abs(ov_b)
    if max(sa, sb) >= 1 - 1e-12:
        raise ValueError("degenerate coherent pair")
    pa = -float(np.angle(ov_a)) if sa > 0 else 0.0
    pb = -float(np.angle(ov_b)) if sb > 0 else 0.0
    sin_res = float(abs(sa - sb)) / max(sa, sb, 1e-300) if max(sa, sb) > 0 else 0.0
    phase_res = abs(_wrap(q.psi - pa - pb - math.pi))
    holds = bool(sin_res <= sin_tol and phase_res <= phase_tol)
    return EbitResult(holds, sin_res, phase_res,
                      (0.5 * math.asin(sa), 0.5 * math.asin(sb)), (pa, pb))


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)


def von_neumann_entropy(rho) -> float:
    """``-sum l log2 l`` over eigenvalues (ebits); tiny negatives are clamped."""
    m = _matrix(rho)
    w = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if w.min(initial=0.0) < -NEGATIVE_EIGEN_TOL:
        raise ValueError(f"density operator has eigenvalue {w.min():.3e}")
    return entropy_from_probabilities(w)


def entropy_from_probabilities(p) -> float:
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum()) + 0.0


def schmidt_coefficients(state: HybridState, keep: Sequence[int | str]) -> np.ndarray:
    """Squared Schmidt coefficients of a pure state across ``keep`` | rest."""
    lay = state.layout
    idx = sorted(lay.indices(keep))
    rest = [i for i in range(len(lay)) if i not in idx]
    dk = int(np.prod([lay.dims[i] for i in idx]))
    mat = np.transpose(state.tensor, idx + rest).reshape(dk, -1)
    sv = np.linalg.svd(mat, compute_uv=False)
    p = sv ** 2
    return p / p.sum()


def entanglement_entropy(state: HybridState, keep: Sequence[int | str]) -> float:
    """VNE of the reduced state of a pure state on ``keep``."""
    return entropy_from_probabilities(schmidt_coefficients(state, keep))


def gram_embedded_entropy(coefficients: np.ndarray, kets_a: Sequence[complex], kets_b: Sequence[complex]) -> float:
    """Entropy of ``sum_ij C_ij |a_i>|b_j>`` from coherent overlaps alone.

    The coherent kets are orthogonalized through the square roots of their
    Gram matrices, so no Fock truncation enters.
    """
    ga = np.array([[coherent_overlap(x, y) for y in kets_a] for x in kets_a])
    gb = np.array([[coherent_overlap(x, y) for y in kets_b] for x in kets_b])
    sa, sb = sqrtm(ga), sqrtm(gb)
    m = sa @ np.asarray(coefficients, dtype=complex) @ sb.T
    sv = np.linalg.svd(m, compute_uv=False) ** 2
    return entropy_from_probabilities(sv / sv.sum())


def embedded_two_mode(state: HybridState, basis_a: CoherentQubitBasis, basis_b: CoherentQubitBasis,
                      modes: tuple[str, str] = ("a", "b")) -> tuple[np.ndarray, float]:
    """Coefficients of a two-mode state in the product of two coherent-qubit bases.

    Returns the 2x2 coefficient matrix and the weight left outside the span.
    """
    if len(state.layout) != 2:
        raise ValueError("state must hold exactly the two modes")
    ia, ib = state.layout.indices(modes)
    t = np.transpose(state.tensor, [ia, ib])
    va, vb = basis_a.vectors(), basis_b.vectors()
    c = va.conj() @ t @ vb.conj().T
    total = state.norm() ** 2
    return c, float(max(0.0, 1 - np.sum(np.abs(c) ** 2) / total))


def state_fidelity(rho, target) -> float:
    """``<target|rho|target>``."""
    m = _matrix(rho)
    v = target.amplitudes if isinstance(target, HybridState) else np.asarray(target, dtype=complex)
    if m.shape != (v.size, v.size):
        raise ValueError("dimension mismatch")
    return float(np.real(np.vdot(v, m @ v)))


def purity(rho) -> float:
    m = _matrix(rho)
    return float(np.real(np.vdot(m, m)))
