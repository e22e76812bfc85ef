import math

import numpy as np
import pytest
from scipy.integrate import quad

from crosskerr.dynamics import conditional_phase
from crosskerr.hilbert import coherent_state, default_nmax, qubit_state, tensor
from crosskerr.measurement import (
    PSI_PLUS,
    AtomBasis,
    GaussianPovm,
    PreconditionError,
    blurred_projector,
    closed_form_fidelity,
    closed_form_weights,
    gaussian_cv_measurement,
    homodyne_phase_discriminator,
    ideal_phase_projection,
    measure_atoms,
    project_atom,
    quadrature_weights,
    span_residual,
)
from crosskerr.protocols import odd_cat

S2 = 1 / math.sqrt(2)


def test_unknown_basis():
    with pytest.raises(ValueError):
        AtomBasis("w")


@pytest.mark.parametrize("basis, expected", [
    ("z", {"e": 0.64, "g": 0.36}),
    ("x", {"+": (0.6 + 0.8) ** 2 / 2, "-": (0.6 - 0.8) ** 2 / 2}),
    ("y", {"+": 0.5, "-": 0.5}),
])
def test_single_atom_born_rule(basis, expected):
    s = qubit_state(0.6, 0.8, "1")
    out = {b.label[0]: b.probability for b in project_atom(tensor(s, qubit_state(1, 0, "2")), "1", basis)}
    for k, v in expected.items():
        assert out[k] == pytest.approx(v, abs=1e-14)


def test_project_atom_leaves_conditional_state():
    bell = tensor(qubit_state(1, 0, "1"), qubit_state(0, 1, "2")) + tensor(qubit_state(0, 1, "1"), qubit_state(1, 0, "2"))
    bell = bell.normalize()
    branches = project_atom(bell, "1", "z")
    e = [b for b in branches if b.label == ("e",)][0]
    assert e.state.layout.labels == ("2",)
    np.testing.assert_allclose(abs(e.state.amplitudes), [1, 0], atol=1e-15)


def test_project_atom_rejects_mode():
    with pytest.raises(ValueError):
        project_atom(coherent_state(1.0), "a")


def test_joint_measurement_is_complete(rng):
    from crosskerr.hilbert import HybridState, RegisterLayout, mode, qubit

    lay = RegisterLayout.of(qubit("1"), qubit("2"), mode("a", 3))
    s = HybridState(lay, rng.normal(size=lay.dim) + 1j * rng.normal(size=lay.dim)).normalize()
    for basis in "xyz":
        br = measure_atoms(s, ["1", "2"], basis)
        assert len(br) == 4
        assert sum(b.probability for b in br) == pytest.approx(1.0, abs=1e-12)


def test_empty_branch_has_no_state():
    br = project_atom(qubit_state(1, 0, "1"), "1", "z")
    e = [b for b in br if b.label == ("e",)][0]
    assert e.empty and e.probability == 0


def test_ideal_projection_labels_and_weights():
    alpha = 2.5
    n = default_nmax(alpha)
    s = tensor(qubit_state(S2, 0, "1"), coherent_state(alpha, n)) + tensor(
        qubit_state(0, S2, "1"), coherent_state(-alpha, n))
    br = ideal_phase_projection(s, "a", [alpha, -alpha])
    assert [b.label for b in br] == [(alpha,), (-alpha,)]
    assert sum(b.probability for b in br) == pytest.approx(1.0)
    # overlap e^{-2 alpha^2} leaks the other component into each branch
    ov = math.exp(-2 * alpha ** 2)
    assert br[0].state.fidelity(qubit_state(1, ov, "1").normalize()) == pytest.approx(1.0, abs=1e-12)


def test_ideal_projection_requires_span():
    s = coherent_state(1j * 2, 30)
    assert span_residual(s, "a", [2, -2]) > 1e-3
    with pytest.raises(PreconditionError):
        ideal_phase_projection(s, "a", [2, -2])


@pytest.mark.parametrize("center, width", [(0.0, 0.5), (1.3, 1.0), (2.0, 3.0)])
def test_blurred_projector_matches_quadrature(center, width):
    n = 6
    m = blurred_projector(center, width, n)
    povm = GaussianPovm((center, 0.0), width)

    def element(i, j):
        f = lambda g: povm.weight(g, center) * math.exp(-g * g) * g ** (i + j) / math.sqrt(
            math.factorial(i) * math.factorial(j))
        return quad(f, -np.inf, np.inf, epsabs=1e-13)[0]

    ref = np.array([[element(i, j) for j in range(n + 1)] for i in range(n + 1)])
    np.testing.assert_allclose(m.real, ref, atol=1e-11)
    np.testing.assert_allclose(m, m.conj().T)


def test_closed_form_spot_values():
    p1, p2 = closed_form_weights(2, 2, 3)
    assert p1 == pytest.approx(0.02903, abs=1e-5)
    assert p2 == pytest.approx(0.14430, abs=1e-5)
    assert closed_form_fidelity(2, 2, 3) == pytest.approx(0.8325, abs=1e-3)
    assert closed_form_fidelity(3, 3, 3) == pytest.approx(0.9884, abs=1e-3)


def test_zero_width_is_perfect_for_equal_amplitudes():
    assert closed_form_fidelity(2, 2, 0) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("alpha, beta, width", [(2, 2, 1), (2, 3, 2), (1.5, 1.0, 0.5), (3, 3, 5)])
def test_quadrature_oracle_agrees_with_closed_form(alpha, beta, width):
    q1, q2, q3, err = quadrature_weights(alpha, beta, width)
    p1, p2 = closed_form_weights(alpha, beta, width)
    assert err < 1e-6
    assert q1 == pytest.approx(p1, abs=1e-7)
    assert q2 == pytest.approx(p2, abs=1e-7)


def test_p3_vanishes_for_equal_amplitudes():
    assert abs(quadrature_weights(2, 2, 1.5)[2]) < 1e-10


@pytest.mark.parametrize("width", [0.0, 1.0, 3.0])
def test_gaussian_measurement_three_paths(width):
    alpha = beta = 2.0
    field = odd_cat(alpha, beta)
    na, nb = field.layout.mode_nmax
    psi = tensor(qubit_state(S2, S2, "1"), qubit_state(S2, S2, "2"), field)
    psi = psi.apply(conditional_phase(na, dagger=True), ["1", "a"]).apply(conditional_phase(nb), ["2", "b"])
    g = gaussian_cv_measurement(psi, GaussianPovm((alpha, beta), width))
    g.rho.check(atol=1e-10)
    assert g.converged
    assert g.fidelity == pytest.approx(g.closed_form_fidelity, abs=1e-4)
    assert g.quadrature_fidelity == pytest.approx(g.closed_form_fidelity, abs=1e-6)
    np.testing.assert_allclose(g.simulated[:2], g.closed_form, atol=1e-6)
    assert g.fidelity == pytest.approx(float(np.real(PSI_PLUS.conj() @ g.rho.matrix @ PSI_PLUS)))


def test_gaussian_povm_validation():
    with pytest.raises(ValueError):
        GaussianPovm((1.0, 1.0), -0.1)


@pytest.mark.parametrize("alpha", [1.0, 2.0, 3.0])
def test_homodyne_vacuum_branch_never_excites_probe(alpha):
    n = default_nmax(alpha)
    s = coherent_state(-1j * alpha, n, "b")
    br = {b.label[0]: b for b in homodyne_phase_discriminator(s, "b", alpha)}
    assert br["g"].probability == pytest.approx(1.0, abs=1e-10)
    assert br["e"].probability < 1e-10


def test_homodyne_probe_excitation_from_displaced_state():
    # |i alpha> becomes |2 i alpha>; P(e) = sum_n p_n sin^2(pi sqrt n) from the resonant Rabi formula
    alpha = 2.0
    n = default_nmax(alpha)
    br = {b.label[0]: b for b in homodyne_phase_discriminator(coherent_state(1j * alpha, n, "b"), "b", alpha)}
    mean = (2 * alpha) ** 2
    k = np.arange(200)
    from scipy.stats import poisson

    ref = float(np.sum(poisson.pmf(k, mean) * np.sin(math.pi * np.sqrt(k)) ** 2))
    assert br["e"].probability == pytest.approx(ref, abs=1e-8)


def test_homodyne_rejects_off_span_input():
    with pytest.raises(PreconditionError):
        homodyne_phase_discriminator(coherent_state(2.0, 30, "b"), "b", 2.0)
