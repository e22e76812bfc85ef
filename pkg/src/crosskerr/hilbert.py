"""Truncated Fock-space and qubit tensor algebra.

Registers hold two-level atoms and truncated cavity modes. The index
convention is fixed: all qubits come first, then all modes, each in the
order they were declared, and amplitudes are stored row-major. A qubit's
basis index 0 is the ground state ``|g>`` (logical ``|0>``) and index 1 is
the excited state ``|e>`` (logical ``|1>``).

States are compared by fidelity, never componentwise, because global phases
are physically irrelevant and routinely dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

QUBIT = "qubit"
MODE = "mode"


class TruncationError(ValueError):
    """Raised when a Fock cutoff is too small for the requested amplitude."""


def default_nmax(amplitude: float) -> int:
    """Default Fock cutoff for a coherent amplitude of modulus ``amplitude``."""
    r = abs(amplitude)
    return int(math.ceil(r * r + 6 * r + 10))


def poisson_tail(amplitude: complex, n_max: int) -> float:
    """Weight of a coherent state above ``n_max``: ``1 - sum_{n<=n_max} p_n``."""
    mean = abs(amplitude) ** 2
    if mean == 0.0:
        return 0.0
    from scipy.stats import poisson

    return float(poisson.sf(n_max, mean))


@dataclass(frozen=True)
class Subsystem:
    label: str
    kind: str
    n_max: int = 1

    def __post_init__(self):
        if self.kind not in (QUBIT, MODE):
            raise ValueError(f"unknown subsystem kind {self.kind!r}")
        if self.kind == QUBIT and self.n_max != 1:
            raise ValueError("qubits have n_max = 1")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")

    @property
    def dim(self) -> int:
        return 2 if self.kind == QUBIT else self.n_max + 1


def qubit(label: str) -> Subsystem:
    return Subsystem(label, QUBIT)


def mode(label: str, n_max: int) -> Subsystem:
    return Subsystem(label, MODE, n_max)


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered list of subsystems, qubits first.

    Construct with :meth:`of`, which sorts qubits ahead of modes while
    keeping the relative order within each kind.
    """

    subsystems: tuple[Subsystem, ...]

    def __post_init__(self):
        kinds = [s.kind for s in self.subsystems]
        if MODE in kinds and QUBIT in kinds[kinds.index(MODE):]:
            raise ValueError("qubits must precede modes; use RegisterLayout.of")
        labels = [s.label for s in self.subsystems]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels in {labels}")

    @classmethod
    def of(cls, *subsystems: Subsystem) -> "RegisterLayout":
        qs = [s for s in subsystems if s.kind == QUBIT]
        ms = [s for s in subsystems if s.kind == MODE]
        return cls(tuple(qs + ms))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.subsystems else 1

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.subsystems)

    @property
    def qubit_count(self) -> int:
        return sum(1 for s in self.subsystems if s.kind == QUBIT)

    @property
    def mode_nmax(self) -> tuple[int, ...]:
        return tuple(s.n_max for s in self.subsystems if s.kind == MODE)

    def __len__(self) -> int:
        return len(self.subsystems)

    def index(self, key: int | str) -> int:
        if isinstance(key, str):
            try:
                return self.labels.index(key)
            except ValueError:
                raise KeyError(f"no subsystem labelled {key!r} in {self.labels}") from None
        if not 0 <= key < len(self.subsystems):
            raise IndexError(f"subsystem index {key} out of range")
        return int(key)

    def indices(self, keys: Iterable[int | str]) -> list[int]:
        out = [self.index(k) for k in keys]
        if len(set(out)) != len(out):
            raise ValueError("repeated subsystem")
        return out

    def offset(self, local: Sequence[int]) -> int:
        """Flat index of a tuple of per-subsystem basis indices."""
        return int(np.ravel_multi_index(tuple(local), self.dims))

    def unravel(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.dims))

    def without(self, keys: Iterable[int | str]) -> "RegisterLayout":
        drop = set(self.indices(keys))
        return RegisterLayout(tuple(s for i, s in enumerate(self.subsystems) if i not in drop))

    def keep(self, keys: Iterable[int | str]) -> "RegisterLayout":
        idx = sorted(self.indices(keys))
        return RegisterLayout(tuple(self.subsystems[i] for i in idx))


def _as_matrix(op, dim: int) -> np.ndarray:
    m = op.matrix if hasattr(op, "matrix") else np.asarray(op)
    m = np.asarray(m, dtype=complex)
    if m.shape != (dim, dim):
        raise ValueError(f"operator shape {m.shape} does not match dimension {dim}")
    return m


@dataclass(frozen=True, eq=False)
class HybridState:
    """Pure state of a register as a dense amplitude vector."""

    layout: RegisterLayout
    amplitudes: np.ndarray
    truncation_loss: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.dim:
            raise ValueError(
                f"amplitude length {amps.size} does not match layout dimension {self.layout.dim}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "HybridState":
        n = self.norm()
        if n == 0.0:
            raise ZeroDivisionError("cannot normalize the zero vector")
        return HybridState(self.layout, self.amplitudes / n, self.truncation_loss)

    def scaled(self, factor: complex) -> "HybridState":
        return HybridState(self.layout, self.amplitudes * factor, self.truncation_loss)

    def __add__(self, other: "HybridState") -> "HybridState":
        if other.layout != self.layout:
            raise ValueError("layouts differ")
        return HybridState(
            self.layout,
            self.amplitudes + other.amplitudes,
            max(self.truncation_loss, other.truncation_loss),
        )

    def __sub__(self, other: "HybridState") -> "HybridState":
        return self + other.scaled(-1.0)

    def inner(self, other: "HybridState") -> complex:
        """``<self|other>``."""
        if other.layout.dims != self.layout.dims:
            raise ValueError("dimension mismatch")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "HybridState") -> float:
        """``|<self|other>|^2`` for normalized inputs."""
        return abs(self.inner(other)) ** 2

    def apply(self, op, targets: Sequence[int | str]) -> "HybridState":
        """Apply a local operator acting on ``targets`` (in the given order)."""
        idx = self.layout.indices(targets)
        dims = [self.layout.dims[i] for i in idx]
        d = int(np.prod(dims))
        m = _as_matrix(op, d).reshape(dims + dims)
        k = len(idx)
        out = np.tensordot(m, self.tensor, axes=(list(range(k, 2 * k)), idx))
        out = np.moveaxis(out, list(range(k)), idx)
        return HybridState(self.layout, out.reshape(-1), self.truncation_loss)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    def reduced(self, keep: Iterable[int | str]) -> "DensityOperator":
        """Reduced density operator on ``keep`` without forming the full projector."""
        idx = sorted(self.layout.indices(keep))
        if not idx:
            raise ValueError("keep must be nonempty")
        rest = [i for i in range(len(self.layout)) if i not in idx]
        t = np.transpose(self.tensor, idx + rest)
        dk = int(np.prod([self.layout.dims[i] for i in idx]))
        mat = t.reshape(dk, -1)
        return DensityOperator(self.layout.keep(idx), mat @ mat.conj().T)

    def project(self, targets: Sequence[int | str], bra: np.ndarray) -> "HybridState":
        """Contract ``targets`` with ``<bra|`` and drop them (unnormalized)."""
        idx = self.layout.indices(targets)
        dims = [self.layout.dims[i] for i in idx]
        b = np.asarray(bra, dtype=complex).reshape(dims).conj()
        out = np.tensordot(b, self.tensor, axes=(list(range(len(idx))), idx))
        return HybridState(self.layout.without(idx), out.reshape(-1), self.truncation_loss)

    def with_mode_cutoff(self, key: int | str, n_max: int) -> "HybridState":
        """Zero-pad (or cut) one mode to a new cutoff."""
        i = self.layout.index(key)
        sub = self.layout.subsystems[i]
        if sub.kind != MODE:
            raise ValueError(f"{sub.label!r} is not a mode")
        t = self.tensor
        new_dim = n_max + 1
        if new_dim >= sub.dim:
            pad = [(0, 0)] * t.ndim
            pad[i] = (0, new_dim - sub.dim)
            t = np.pad(t, pad)
        else:
            t = np.take(t, np.arange(new_dim), axis=i)
        subs = list(self.layout.subsystems)
        subs[i] = mode(sub.label, n_max)
        return HybridState(RegisterLayout(tuple(subs)), t.reshape(-1), self.truncation_loss)

    def permuted(self, layout: RegisterLayout) -> "HybridState":
        """Reorder amplitudes to match ``layout`` (same subsystems, other order)."""
        perm = [self.layout.labels.index(lbl) for lbl in layout.labels]
        if sorted(perm) != list(range(len(self.layout))):
            raise ValueError("layouts hold different subsystems")
        t = np.transpose(self.tensor, perm)
        return HybridState(layout, t.reshape(-1), self.truncation_loss)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    layout: RegisterLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match layout dimension {d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def normalize(self) -> "DensityOperator":
        tr = self.trace().real
        if tr <= 0:
            raise ZeroDivisionError("density operator has non-positive trace")
        return DensityOperator(self.layout, self.matrix / tr)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return np.linalg.eigvalsh(herm)

    def check(self, atol: float = 1e-10, neg_tol: float = 1e-8) -> None:
        """Raise ``ValueError`` unless Hermitian, unit trace and positive."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > atol:
            raise ValueError("density operator is not Hermitian")
        if abs(self.trace() - 1) > atol:
            raise ValueError(f"trace {self.trace()} differs from 1")
        if self.eigenvalues().min() < -neg_tol:
            raise ValueError("density operator has negative eigenvalues")


def partial_trace(rho: DensityOperator, keep: Iterable[int | str]) -> DensityOperator:
    """Trace out every subsystem not in ``keep``."""
    layout = rho.layout
    idx = sorted(layout.indices(keep))
    if not idx:
        raise ValueError("keep must be nonempty")
    n = len(layout)
    if idx == list(range(n)):
        return rho
    dims = layout.dims
    t = rho.matrix.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for i in range(n):
        if i not in idx:
            col[i] = row[i]
    out = "".join(row[i] for i in idx) + "".join(col[i] for i in idx)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in idx]))
    return DensityOperator(layout.keep(idx), reduced.reshape(dk, dk))


def coherent_amplitudes(alpha: complex, n_max: int) -> np.ndarray:
    """Untruncated Poisson amplitudes ``e^{-|a|^2/2} a^n / sqrt(n!)``, n <= n_max."""
    n = np.arange(n_max + 1)
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(n_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1) - 0.5 * abs(alpha) ** 2
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(
    alpha: complex,
    n_max: int | None = None,
    label: str = "a",
    allow_truncation: bool = False,
) -> HybridState:
    """Single-mode coherent state ``|alpha>``, renormalized after truncation.

    The untruncated weight lost above ``n_max`` is kept in
    ``truncation_loss``. A cutoff below :func:`default_nmax` is rejected
    unless ``allow_truncation`` is set.
    """
    if n_max is None:
        n_max = default_nmax(alpha)
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if n_max < default_nmax(alpha) and not allow_truncation:
        raise TruncationError(
            f"n_max={n_max} below the truncation rule {default_nmax(alpha)} for |alpha|={abs(alpha):.3g}"
        )
    amps = coherent_amplitudes(alpha, n_max)
    loss = poisson_tail(alpha, n_max)
    amps = amps / np.linalg.norm(amps)
    return HybridState(RegisterLayout.of(mode(label, n_max)), amps, loss)


def coherent_overlap(mu: complex, nu: complex) -> complex:
    """Closed-form ``<mu|nu>`` between untruncated coherent states."""
    mu, nu = complex(mu), complex(nu)
    return complex(np.exp(-0.5 * abs(mu) ** 2 - 0.5 * abs(nu) ** 2 + mu.conjugate() * nu))


def qubit_state(c_g: complex, c_e: complex, label: str = "q") -> HybridState:
    return HybridState(RegisterLayout.of(qubit(label)), np.array([c_g, c_e], dtype=complex))


def ground(label: str = "q") -> HybridState:
    return qubit_state(1, 0, label)


def excited(label: str = "q") -> HybridState:
    return qubit_state(0, 1, label)


def annihilation(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)


def number(n_max: int) -> np.ndarray:
    return np.diag(np.arange(n_max + 1)).astype(complex)


@dataclass(frozen=True, eq=False)
class Operator:
    """Operator matrix together with the parameters that produced it."""

    matrix: np.ndarray
    params: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(self.matrix @ _as_matrix(other, self.matrix.shape[0]))

    @property
    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T, dict(self.params), dict(self.report))

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))))


def displacement(beta: complex, n_max: int | None = None, acting_on: float = 0.0,
                 allow_truncation: bool = False) -> Operator:
    """Displacement operator ``D(beta)`` in the number basis.

    The matrix is the exponential of the generator on a padded space, cut
    back to ``n_max``, so low-occupation elements carry no truncation error.
    ``acting_on`` is the largest coherent amplitude the operator will be
    applied to; it enters the cutoff guard.
    """
    reach = abs(beta) + abs(acting_on)
    if n_max is None:
        n_max = default_nmax(reach)
    if n_max < default_nmax(reach) and not allow_truncation:
        raise TruncationError(
            f"n_max={n_max} below the truncation rule {default_nmax(reach)} for reach {reach:.3g}"
        )
    pad = n_max + default_nmax(abs(beta)) + 20
    a = annihilation(pad)
    gen = complex(beta) * a.conj().T - complex(beta).conjugate() * a
    full = expm(gen)
    return Operator(full[: n_max + 1, : n_max + 1], {"beta": complex(beta)})


def tensor(*parts):
    """Kronecker product of states (``HybridState``) or matrices.

    States are recombined so the result obeys the qubits-first convention.
    """
    if not parts:
        raise ValueError("nothing to tensor")
    if all(isinstance(p, HybridState) for p in parts):
        subs = [s for p in parts for s in p.layout.subsystems]
        amps = parts[0].amplitudes
        for p in parts[1:]:
            amps = np.kron(amps, p.amplitudes)
        loss = max(p.truncation_loss for p in parts)
        target = RegisterLayout.of(*subs)
        dims = [s.dim for s in subs]
        perm = [subs.index(s) for s in target.subsystems]
        t = np.transpose(amps.reshape(dims), perm)
        return HybridState(target, t.reshape(-1), loss)
    mats = [_as_matrix(p, np.asarray(getattr(p, "matrix", p)).shape[0]) for p in parts]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def embed(op, targets: Sequence[int | str], layout: RegisterLayout) -> np.ndarray:
    """Full-space matrix of a local operator, identity elsewhere."""
    idx = layout.indices(targets)
    dims = list(layout.dims)
    dl = int(np.prod([dims[i] for i in idx]))
    m = _as_matrix(op, dl)
    full = np.eye(layout.dim, dtype=complex)
    # columns of the identity are treated as a batch of basis kets
    t = full.reshape(dims + [layout.dim])
    k = len(idx)
    mm = m.reshape([dims[i] for i in idx] * 2)
    out = np.tensordot(mm, t, axes=(list(range(k, 2 * k)), idx))
    out = np.moveaxis(out, list(range(k)), idx)
    return out.reshape(layout.dim, layout.dim)
