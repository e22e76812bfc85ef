"""Atomic projective measurements and coherent-state field measurements."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import gammaln

from .dynamics import JCParams, exact_jc_propagator
from .hilbert import (
    DensityOperator,
    HybridState,
    MODE,
    coherent_amplitudes,
    default_nmax,
    displacement,
    ground,
    tensor,
)

ZERO_PROBABILITY = 1e-15
DEFAULT_RESIDUAL_BOUND = 1e-6

S2 = 1 / math.sqrt(2)
_BASES = {
    "x": (("+", np.array([S2, S2], dtype=complex)), ("-", np.array([S2, -S2], dtype=complex))),
    "y": (("+", np.array([S2, 1j * S2])), ("-", np.array([S2, -1j * S2]))),
    "z": (("e", np.array([0, 1], dtype=complex)), ("g", np.array([1, 0], dtype=complex))),
}


class PreconditionError(ValueError):
    """Input state does not satisfy a measurement or protocol precondition."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class AtomBasis:
    axis: str

    def __post_init__(self):
        if self.axis not in _BASES:
            raise ValueError(f"axis must be one of x, y, z, got {self.axis!r}")

    @property
    def eigenstates(self):
        """``(label, ket)`` pairs in the (g, e) ordering."""
        return _BASES[self.axis]


@dataclass(frozen=True, eq=False)
class BranchOutcome:
    """One measurement branch. ``state`` is ``None`` for an empty branch."""

    label: tuple
    probability: float
    state: HybridState | DensityOperator | None

    @property
    def empty(self) -> bool:
        return self.state is None


def _branch(label, unnorm: HybridState, total: float = 1.0) -> BranchOutcome:
    w = unnorm.norm() ** 2
    p = w / total
    if p <= ZERO_PROBABILITY:
        return BranchOutcome(label, p, None)
    return BranchOutcome(label, p, unnorm.normalize())


def project_atom(state: HybridState, atom: int | str, basis: AtomBasis | str = "z") -> list[BranchOutcome]:
    """Born-rule branches of a projective measurement of one atom.

    The measured atom is removed from each post-measurement state.
    """
    if isinstance(basis, str):
        basis = AtomBasis(basis)
    i = state.layout.index(atom)
    if state.layout.subsystems[i].kind == MODE:
        raise ValueError(f"subsystem {atom!r} is a mode, not an atom")
    total = state.norm() ** 2
    return [_branch((lbl,), state.project([i], ket), total) for lbl, ket in basis.eigenstates]


def measure_atoms(state: HybridState, atoms: Sequence[int | str], basis: AtomBasis | str = "x") -> list[BranchOutcome]:
    """Joint projective measurement of several atoms in one basis."""
    if isinstance(basis, str):
        basis = AtomBasis(basis)
    layout = state.layout
    idx = layout.indices(atoms)
    total = state.norm() ** 2
    out = []
    for combo in itertools.product(basis.eigenstates, repeat=len(idx)):
        ket = combo[0][1]
        for _, k in combo[1:]:
            ket = np.kron(ket, k)
        out.append(_branch(tuple(lbl for lbl, _ in combo), state.project(idx, ket), total))
    return out


def _candidate_kets(mode_nmax: int, amplitudes: Sequence[complex]) -> list[np.ndarray]:
    kets = []
    for c in amplitudes:
        v = coherent_amplitudes(c, mode_nmax)
        kets.append(v / np.linalg.norm(v))
    return kets


def span_residual(state: HybridState, key: int | str, amplitudes: Sequence[complex]) -> float:
    """Weight of a mode's reduced state outside the span of coherent candidates."""
    i = state.layout.index(key)
    n_max = state.layout.subsystems[i].n_max
    basis = np.array(_candidate_kets(n_max, amplitudes)).T
    q, r = np.linalg.qr(basis)
    keep = np.abs(np.diag(r)) > 1e-12
    q = q[:, keep]
    rho = state.reduced([i]).matrix
    inside = np.real(np.trace(q.conj().T @ rho @ q))
    return float(max(0.0, np.real(np.trace(rho)) - inside) / np.real(np.trace(rho)))


def ideal_phase_projection(
    state: HybridState,
    modes: int | str | Sequence[int | str],
    candidates: Sequence[complex] | Sequence[Sequence[complex]],
    residual_bound: float = DEFAULT_RESIDUAL_BOUND,
) -> list[BranchOutcome]:
    """Project field modes onto nonorthogonal coherent candidates.

    With one mode, ``candidates`` is a list of amplitudes; with several,
    one list per mode. Branch weights are ``||<c|psi>||^2`` renormalized
    over the joint candidate set, so they sum to one even though the
    coherent projectors do not resolve the identity. Labels are the
    candidate amplitudes. Measured modes are removed.
    """
    if isinstance(modes, (int, str)):
        modes = [modes]
        candidates = [candidates]
    modes = list(modes)
    if len(modes) != len(candidates):
        raise ValueError("one candidate list per mode is required")
    idx = state.layout.indices(modes)
    for i, c in zip(idx, candidates):
        if state.layout.subsystems[i].kind != MODE:
            raise ValueError(f"subsystem {state.layout.labels[i]!r} is not a mode")
        res = span_residual(state, i, c)
        if res > residual_bound:
            raise PreconditionError(
                f"mode {state.layout.labels[i]!r} has weight {res:.3e} outside the candidate span"
            )
    kets = [_candidate_kets(state.layout.subsystems[i].n_max, c) for i, c in zip(idx, candidates)]
    labels = list(itertools.product(*[list(map(complex, c)) for c in candidates]))
    unnorm = []
    for choice in itertools.product(*kets):
        ket = choice[0]
        for k in choice[1:]:
            ket = np.kron(ket, k)
        unnorm.append(state.project(idx, ket))
    weights = np.array([u.norm() ** 2 for u in unnorm])
    total = weights.sum()
    if total == 0:
        raise PreconditionError("state has no overlap with any candidate")
    return [_branch(lbl, u, total) for lbl, u in zip(labels, unnorm)]


# -- Gaussian-blurred coherent measurement ---------------------------------


@dataclass(frozen=True)
class GaussianPovm:
    centers: tuple[float, float]
    width: float

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("width must be non-negative")
        if any(abs(complex(c).imag) > 0 for c in self.centers):
            raise ValueError("centers must be real")

    def weight(self, mu, center: float):
        """Normalized Gaussian of variance ``width`` centered on ``center``."""
        d = self.width
        return np.exp(-((mu - center) ** 2) / (2 * d)) / math.sqrt(2 * math.pi * d)


def blurred_projector(center: float, width: float, n_max: int) -> np.ndarray:
    """Fock matrix of ``int dg G(g) |g><g|`` over real ``g``.

    Uses ``<m|g><g|n> = e^{-g^2} g^{m+n} / sqrt(m! n!)`` and the fact that
    ``e^{-g^2} G(g)`` is again a Gaussian, so the integral reduces to raw
    moments of a normal distribution.
    """
    s = 1 + 2 * width
    mean, var = center / s, width / s
    pref = math.exp(-center * center / s) / math.sqrt(s)
    kmax = 2 * n_max
    mom = np.zeros(kmax + 1)
    mom[0] = 1.0
    if kmax >= 1:
        mom[1] = mean
    for k in range(2, kmax + 1):
        mom[k] = mean * mom[k - 1] + (k - 1) * var * mom[k - 2]
    n = np.arange(n_max + 1)
    half_lf = 0.5 * gammaln(n + 1)
    mat = mom[n[:, None] + n[None, :]] * np.exp(-half_lf[:, None] - half_lf[None, :])
    return pref * mat.astype(complex)


def closed_form_weights(alpha: float, beta: float, width: float) -> tuple[float, float]:
    """``(P1, P2)`` weights of the conditioned two-atom state."""
    s = 1 + 2 * width
    a2, b2 = alpha * alpha, beta * beta
    cross = math.exp(-2 * (1 + width) * (a2 + b2) / s)
    p1 = (math.exp(-4 * a2 / s) + math.exp(-4 * b2 / s) - 2 * cross) / s
    p2 = (1 + math.exp(-4 * (a2 + b2) / s) - 2 * cross) / s
    return p1, p2


def closed_form_fidelity(alpha: float, beta: float, width: float) -> float:
    s = 1 + 2 * width
    a2b2 = alpha * alpha + beta * beta
    p1, p2 = closed_form_weights(alpha, beta, width)
    num = 1 + math.exp(-4 * a2b2 / s) - 2 * math.exp(-2 * (1 + width) * a2b2 / s)
    return num / ((p1 + p2) * s)


def _overlap_real(mu, g):
    # <mu|g> for real mu, g
    return np.exp(-0.5 * (mu - g) ** 2)


def quadrature_weights(alpha: float, beta: float, width: float, tol: float = 1e-6):
    """Oracle ``(P1, P2, P3, abserr)`` by adaptive quadrature over real ``(g, d)``.

    Integrates the Gaussian-weighted projections of the field parts
    ``X = |-a, b> - |a, -b>`` and ``Y = |a, b> - |-a, -b>``:
    ``P1 = <X|Pi|X>``, ``P2 = <Y|Pi|Y>``, ``P3 = <Y|Pi|X>``.
    A zero width uses the exact delta-function limit.
    """
    povm = GaussianPovm((alpha, beta), width)

    def amps(g, d):
        ga = np.array([_overlap_real(-alpha, g), _overlap_real(alpha, g)])  # <g|-a>, <g|a>
        gb = np.array([_overlap_real(-beta, d), _overlap_real(beta, d)])
        x = ga[0] * gb[1] - ga[1] * gb[0]
        y = ga[1] * gb[1] - ga[0] * gb[0]
        return x, y

    def point(g, d):
        x, y = amps(g, d)
        return np.array([x * x, y * y, y * x])

    if width == 0:
        return (*(float(v) for v in point(alpha, beta)), 0.0)
    half = 8 * math.sqrt(width)

    def inner(g):
        res, _ = quad_vec(
            lambda d: point(g, d) * povm.weight(d, beta), beta - half, beta + half,
            epsabs=tol * 1e-3, epsrel=1e-10,
        )
        return res * povm.weight(g, alpha)

    res, err = quad_vec(inner, alpha - half, alpha + half, epsabs=tol * 1e-2, epsrel=1e-10)
    if err > tol:
        warnings.warn(f"quadrature error estimate {err:.2e} exceeds {tol:.1e}", RuntimeWarning)
    return (float(res[0]), float(res[1]), float(res[2]), float(err))


PHI_MINUS = np.array([1, 0, 0, -1], dtype=complex) / math.sqrt(2)  # (|gg> - |ee>)/sqrt2
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / math.sqrt(2)  # (|ge> + |eg>)/sqrt2


def block_density(p1: float, p2: float, p3: float) -> np.ndarray:
    """Two-atom density matrix from weights on ``|phi->`` and ``|psi+>``."""
    f, s = PHI_MINUS, PSI_PLUS
    m = p1 * np.outer(f, f.conj()) + p2 * np.outer(s, s.conj())
    m = m - 1j * p3 * (np.outer(f, s.conj()) - np.outer(s, f.conj()))
    return m / (p1 + p2)


@dataclass(frozen=True, eq=False)
class GaussianMeasurement:
    rho: DensityOperator
    closed_form: tuple[float, float]
    quadrature: tuple[float, float, float]
    quadrature_error: float
    simulated: tuple[float, float, float]
    tolerance: float
    extras: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.quadrature_error <= self.tolerance

    @property
    def fidelity(self) -> float:
        return float(np.real(PSI_PLUS.conj() @ self.rho.matrix @ PSI_PLUS))

    @property
    def closed_form_fidelity(self) -> float:
        p1, p2 = self.closed_form
        return p2 / (p1 + p2)

    @property
    def quadrature_fidelity(self) -> float:
        p1, p2, _ = self.quadrature
        return p2 / (p1 + p2)


def gaussian_cv_measurement(
    state: HybridState,
    povm: GaussianPovm,
    atoms: tuple[str, str] = ("1", "2"),
    modes: tuple[str, str] = ("a", "b"),
    tol: float = 1e-6,
) -> GaussianMeasurement:
    """Condition two atoms on a Gaussian-blurred coherent detection of two modes.

    ``rho`` comes from the full Fock-space state: the blurred projectors are
    applied to the modes, which are then traced out. The weights are also
    returned from the closed form and from the quadrature oracle, all in
    the convention where the state is written with unit-amplitude field
    parts (the ``P`` values are independent of the input normalization up
    to a common factor fixed below).
    """
    alpha, beta = (float(np.real(c)) for c in povm.centers)
    lay = state.layout
    ia, ib = lay.indices(modes)
    pa = blurred_projector(alpha, povm.width, lay.subsystems[ia].n_max)
    pb = blurred_projector(beta, povm.width, lay.subsystems[ib].n_max)
    projected = state.apply(pa, [ia]).apply(pb, [ib])
    # Tr_ab[(Pa x Pb) |psi><psi|] = reduced cross term of projected and original
    keep = lay.indices(atoms)
    rest = [i for i in range(len(lay)) if i not in keep]
    left = np.transpose(projected.tensor, keep + rest).reshape(4, -1)
    right = np.transpose(state.tensor, keep + rest).reshape(4, -1)
    unnorm = left @ right.conj().T
    unnorm = 0.5 * (unnorm + unnorm.conj().T)
    # express in the (phi-, psi+) block; the input is written with
    # sqrt2-weighted field parts, so undo the factor 2 and the norm
    f, s = PHI_MINUS, PSI_PLUS
    scale = 2.0 / (_field_part_norm(alpha, beta) ** 2)
    sim_p1 = float(np.real(f.conj() @ unnorm @ f)) / scale
    sim_p2 = float(np.real(s.conj() @ unnorm @ s)) / scale
    sim_p3 = float(np.real(1j * (f.conj() @ unnorm @ s))) / scale
    rho = DensityOperator(lay.keep(keep), unnorm / np.real(np.trace(unnorm)))
    cf = closed_form_weights(alpha, beta, povm.width)
    q1, q2, q3, err = quadrature_weights(alpha, beta, povm.width, tol)
    outside = float(np.real(np.trace(unnorm)) - np.real(f.conj() @ unnorm @ f) - np.real(s.conj() @ unnorm @ s))
    return GaussianMeasurement(
        rho=rho,
        closed_form=cf,
        quadrature=(q1, q2, q3),
        quadrature_error=err,
        simulated=(sim_p1, sim_p2, sim_p3),
        tolerance=tol,
        extras={"weight_outside_block": outside / np.real(np.trace(unnorm))},
    )


def _field_part_norm(alpha: float, beta: float) -> float:
    """Norm of ``sqrt2 phi- X + i sqrt2 psi+ Y`` for real amplitudes."""
    ea, eb = math.exp(-2 * alpha * alpha), math.exp(-2 * beta * beta)
    xx = 2 - 2 * ea * eb
    yy = 2 - 2 * ea * eb
    return math.sqrt(2 * (xx + yy))


# -- homodyne-style phase discrimination -----------------------------------


def homodyne_phase_discriminator(
    state: HybridState,
    mode: int | str,
    alpha: complex,
    probe: JCParams | None = None,
    pair: tuple[complex, complex] | None = None,
    residual_bound: float = DEFAULT_RESIDUAL_BOUND,
    probe_label: str = "probe",
) -> list[BranchOutcome]:
    """Tell ``|i alpha>`` from ``|-i alpha>`` with a displacement and a probe atom.

    The mode is displaced by ``i alpha`` so the pair becomes
    ``{|2i alpha>, |0>}``, then a ground-state probe atom interacts
    resonantly for ``lam t = pi`` and is measured in the z basis. The
    branches keep the (displaced, evolved) mode; the probe is removed.
    A vacuum input never excites the probe.
    """
    if pair is None:
        pair = (1j * alpha, -1j * alpha)
    if probe is None:
        probe = JCParams(delta=0.0, lam=1.0, t=math.pi)
    if probe.delta != 0:
        raise ValueError("the probe interaction must be resonant")
    i = state.layout.index(mode)
    label = state.layout.labels[i]
    res = span_residual(state, i, pair)
    if res > residual_bound:
        raise PreconditionError(f"mode {label!r} has weight {res:.3e} outside the pair span")
    shift = -complex(pair[1])
    reach = max(abs(p + shift) for p in pair)
    n_big = max(default_nmax(reach), state.layout.subsystems[i].n_max)
    work = state.with_mode_cutoff(label, n_big)
    work = work.apply(displacement(shift, n_big, allow_truncation=True), [label])
    work = tensor(ground(probe_label), work)
    work = work.apply(exact_jc_propagator(probe, n_big), [probe_label, label])
    return project_atom(work, probe_label, "z")
