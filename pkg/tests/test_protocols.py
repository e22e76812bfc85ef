import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crosskerr.dynamics import DispersiveValidityWarning
from crosskerr.entanglement import entropy_from_probabilities
from crosskerr.measurement import PreconditionError
from crosskerr.protocols import (
    bell_psi_plus,
    component_amplitude,
    dispersive_gate_check,
    entanglement_swap,
    entanglement_transfer,
    even_odd_resource,
    multipair_reciprocation,
    multipair_transfer,
    odd_cat,
    pair_phases,
    reciprocation,
    round_trip,
    transfer_qubit_to_cv,
    transfer_qubit_to_qubit,
)

S2 = 1 / math.sqrt(2)


def _metrics(report):
    return [b.metrics() for b in report.branches]


def _assert_same_metrics(r1, r2, atol=1e-10):
    for m1, m2 in zip(_metrics(r1), _metrics(r2)):
        assert m1.keys() == m2.keys()
        for k in m1:
            if isinstance(m1[k], float):
                assert m1[k] == pytest.approx(m2[k], abs=atol), k
            else:
                assert m1[k] == m2[k], k


@settings(max_examples=30, deadline=None)
@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_qubit_to_qubit_transfer(theta, phase):
    a, b = math.cos(theta / 2), math.sin(theta / 2) * np.exp(1j * phase)
    rep = transfer_qubit_to_qubit(a, b)
    assert rep.total_probability == pytest.approx(1.0, abs=1e-12)
    for br in rep.branches:
        assert br.probability == pytest.approx(0.5, abs=1e-12)
        assert br.fidelity == pytest.approx(1.0, abs=1e-12)


def test_unnormalized_input_is_rejected():
    with pytest.raises(PreconditionError):
        transfer_qubit_to_qubit(1.0, 1.0)
    with pytest.raises(PreconditionError):
        transfer_qubit_to_cv(0.5, 0.5, 2.0)


@pytest.mark.parametrize("a, b, alpha", [(S2, S2, 1.0), (0.6, 0.8, 2.0), (1.0, 0.0, 1.5), (0.8, -0.6, 0.7)])
def test_qubit_to_cv_branches(a, b, alpha):
    rep = transfer_qubit_to_cv(a, b, alpha, postselect=True)
    ov = math.exp(-2 * alpha ** 2)
    # Born rule worked by hand: the y outcome + leaves a|i alpha> - b|-i alpha>
    assert rep.branch("+").probability == pytest.approx(0.5 * (1 - 2 * a * b * ov), abs=1e-12)
    assert rep.branch("-").probability == pytest.approx(0.5 * (1 + 2 * a * b * ov), abs=1e-12)
    assert [br.kept for br in rep.branches] == [False, True]
    for br in rep.branches:
        assert br.extras["fidelity_to_expected_branch"] == pytest.approx(1.0, abs=1e-10)
    assert rep.branch("-").extras["branch_norm"] == pytest.approx((1 + 2 * a * b * ov) ** -0.5)


def test_qubit_to_cv_large_amplitude_is_faithful():
    rep = transfer_qubit_to_cv(0.6, 0.8, 3.0)
    assert rep.branch("-").fidelity == pytest.approx(1.0, abs=1e-6)


def test_qubit_to_cv_reports_validity():
    rep = transfer_qubit_to_cv(1.0, 0.0, 2.0, delta_over_lambda=50)
    assert rep.diagnostics["validity"]["passed"]


@pytest.mark.parametrize("gamma", [0.3, 1.0, 3.0])
def test_entanglement_transfer_probabilities_and_entropy(gamma):
    amp = 1j * gamma
    rep = entanglement_transfer(amp, amp)
    e = math.exp(-4 * gamma ** 2)
    for br in rep.branches:
        same = br.label[0] == br.label[1]
        assert br.probability == pytest.approx((1 - e) / 4 if same else (1 + e) / 4, abs=1e-10)
        assert br.fidelity == pytest.approx(1.0, abs=1e-10)
        assert br.vne == pytest.approx(br.extras["vne_embedded"], abs=1e-8)
        if same:
            assert br.vne == pytest.approx(1.0, abs=1e-9)
    assert rep.total_probability == pytest.approx(1.0, abs=1e-12)


def test_entanglement_transfer_postselection():
    rep = entanglement_transfer(1.0, 1.0, postselect=True)
    assert {b.label for b in rep.branches if b.kept} == {("+", "+"), ("-", "-")}
    assert rep.kept_probability == pytest.approx((1 - math.exp(-4)) / 2)


def test_entanglement_transfer_unequal_amplitudes():
    rep = entanglement_transfer(1.0, 2.0)
    e = math.exp(-2) * math.exp(-8)
    assert rep.branch("+", "+").probability == pytest.approx((1 - e) / 4, abs=1e-10)


@pytest.mark.parametrize("alpha, beta", [(3.0, 3.0), (2.5, 3.0), (3j, 3j)])
def test_ideal_reciprocation(alpha, beta):
    rep = reciprocation(alpha, beta)
    assert rep.total_probability == pytest.approx(1.0, abs=1e-12)
    for br in rep.branches:
        assert br.fidelity == pytest.approx(1.0, abs=1e-6)
        assert br.vne == pytest.approx(1.0, abs=1e-6)
    assert sum(br.extras["corrected"] for br in rep.branches) == 2


def test_reciprocation_needs_the_right_span():
    with pytest.raises(PreconditionError):
        reciprocation(2.0, 2.0, field=even_odd_resource(2.0))


def test_gaussian_reciprocation_needs_real_amplitudes():
    with pytest.raises(PreconditionError):
        reciprocation(2j, 2j, width=1.0, mode="gaussian")


def test_gaussian_reciprocation_report():
    rep = reciprocation(2.0, 2.0, width=3.0, mode="gaussian")
    br = rep.branches[0]
    assert br.fidelity == pytest.approx(0.8325, abs=1e-3)
    assert br.extras["P1_simulated"] == pytest.approx(br.extras["P1"], abs=1e-6)
    assert rep.diagnostics["quadrature_converged"]


def test_round_trip():
    rep = round_trip(3.0)
    assert rep.total_probability == pytest.approx(1.0, abs=1e-10)
    kept = [b for b in rep.branches if b.kept]
    assert len(kept) == 8
    assert min(b.fidelity for b in kept) >= 1 - 1e-5


def test_pair_phases_and_amplitudes():
    assert pair_phases(3) == pytest.approx([math.pi / 2, math.pi / 4, math.pi / 8])
    amps = [component_amplitude(x, 1.0) for x in [(0, 0), (0, 1), (1, 0), (1, 1)]]
    angles = sorted(np.mod(np.angle(amps), 2 * math.pi))
    np.testing.assert_allclose(np.diff(angles), math.pi / 2)


@pytest.mark.parametrize("outcomes", ["++", "+-", "-+", "--"])
def test_single_pair_path_matches_entanglement_transfer(outcomes):
    alpha = 2.0
    multi = multipair_transfer(1, alpha, outcomes)
    single = entanglement_transfer(alpha, alpha)
    mb = multi.branch(*outcomes)
    sb = single.branch(*outcomes)
    assert mb.kept and sum(b.kept for b in multi.branches) == 1
    assert mb.probability == pytest.approx(sb.probability, abs=1e-12)
    assert mb.state.fidelity(sb.state) >= 1 - 1e-10


def test_multipair_transfer_two_pairs():
    rep = multipair_transfer(2, 4.0, "+-+-")
    assert rep.total_probability == pytest.approx(1.0, abs=1e-10)
    for br in rep.branches:
        assert br.fidelity == pytest.approx(1.0, abs=1e-8)
        assert br.vne == pytest.approx(br.extras["vne_embedded"], abs=1e-8)


def test_multipair_outcome_validation():
    with pytest.raises(ValueError):
        multipair_transfer(2, 2.0, "++")
    with pytest.raises(PreconditionError):
        multipair_transfer(4, 2.0)


def test_multipair_reciprocation_single_pair():
    rep = multipair_reciprocation(1, 3.0)
    assert rep.total_probability == pytest.approx(1.0, abs=1e-10)
    ok = [b for b in rep.branches if b.kept]
    assert len(ok) == 1
    assert ok[0].fidelity == pytest.approx(1.0, abs=1e-6)
    assert 0 < rep.diagnostics["success_probability"] <= 1


def test_swap_kept_branches_are_one_ebit():
    rep = entanglement_swap(2.0)
    assert rep.total_probability == pytest.approx(1.0, abs=1e-8)
    kept = [b for b in rep.branches if b.kept and b.state is not None]
    assert len(kept) == 2
    for br in kept:
        assert br.vne >= 0.999
        assert br.fidelity == pytest.approx(1.0, abs=1e-6)
    assert rep.diagnostics["target_vne"] == pytest.approx(
        entropy_from_probabilities([0.5 * (1 + math.exp(-8)), 0.5 * (1 - math.exp(-8))]), abs=1e-10)


def test_swap_ideal_branches_follow_derived_signs():
    ideal = entanglement_swap(2.0).diagnostics["ideal_phase_branches"]
    assert ideal["+"]["fidelity_plus"] == pytest.approx(1.0, abs=1e-6)
    assert ideal["-"]["fidelity_minus"] == pytest.approx(1.0, abs=1e-6)


def test_gate_check():
    rep = dispersive_gate_check(2.0, 50.0)
    br = rep.branches[0]
    assert br.fidelity >= 0.99
    assert br.extras["contract_fidelity_g"] == pytest.approx(1.0, abs=1e-10)
    assert br.extras["contract_fidelity_e"] == pytest.approx(1.0, abs=1e-10)
    assert rep.diagnostics["validity"]["passed"]


def test_gate_check_improves_with_detuning():
    with pytest.warns(DispersiveValidityWarning):
        near = dispersive_gate_check(2.0, 20)
    assert not near.diagnostics["validity"]["passed"]
    f = [near.branches[0].fidelity] + [dispersive_gate_check(2.0, r).branches[0].fidelity for r in (50, 200)]
    assert f[0] < f[1] < f[2]


# global-phase invariance: multiplying any input by e^{i theta} changes no reported metric


@pytest.mark.parametrize("theta", [0.4, 2.5])
def test_phase_invariance_transfer(theta):
    base = entanglement_transfer(1.0, 1.0)
    rot = entanglement_transfer(1.0, 1.0, atoms=bell_psi_plus().scaled(np.exp(1j * theta)))
    _assert_same_metrics(base, rot)
    q1 = transfer_qubit_to_qubit(0.6, 0.8)
    q2 = transfer_qubit_to_qubit(0.6 * np.exp(1j * theta), 0.8 * np.exp(1j * theta))
    _assert_same_metrics(q1, q2)


@pytest.mark.parametrize("theta", [0.4, 2.5])
def test_phase_invariance_reciprocation(theta):
    field = odd_cat(2.0, 2.0)
    _assert_same_metrics(reciprocation(2.0, 2.0, field=field),
                         reciprocation(2.0, 2.0, field=field.scaled(np.exp(1j * theta))))
    _assert_same_metrics(reciprocation(2.0, 2.0, 1.0, "gaussian", field=field),
                         reciprocation(2.0, 2.0, 1.0, "gaussian", field=field.scaled(np.exp(1j * theta))),
                         atol=1e-8)


def test_phase_invariance_swap():
    r1 = entanglement_swap(2.0)
    r2 = entanglement_swap(2.0, field=even_odd_resource(2.0).scaled(1j))
    for m1, m2 in zip(_metrics(r1), _metrics(r2)):
        for k in ("probability", "vne", "fidelity", "purity"):
            if m1[k] is not None:
                assert m1[k] == pytest.approx(m2[k], abs=1e-10)


ALL_RUNS = [
    lambda: transfer_qubit_to_qubit(0.6, 0.8j),
    lambda: transfer_qubit_to_cv(0.6, 0.8, 1.0, postselect=False),
    lambda: entanglement_transfer(1.0, 0.5j),
    lambda: reciprocation(2.0, 2.5),
    lambda: reciprocation(2.0, 2.0, 2.0, "gaussian"),
    lambda: multipair_transfer(2, 2.0),
    lambda: multipair_reciprocation(1, 2.0),
    lambda: entanglement_swap(2.0),
    lambda: round_trip(1.0),
    lambda: dispersive_gate_check(1.0),
]


@pytest.mark.parametrize("run", ALL_RUNS)
def test_branch_probabilities_are_complete(run):
    rep = run()
    assert rep.total_probability == pytest.approx(1.0, abs=1e-8)
    assert all(0 <= b.probability <= 1 + 1e-12 for b in rep.branches)
