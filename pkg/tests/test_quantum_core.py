import itertools

import numpy as np
import pytest

from hybridlink.quantum_core import (
    ENCODING,
    SETTINGS_9,
    SETTINGS_WITNESS,
    MeasurementSetting,
    TwoQubitState,
    apply_local_unitary,
    bell_diagonal,
    fidelity,
    maximally_mixed,
    min_pt_eigenvalue,
    outcome_probabilities,
    partial_transpose,
    pauli_correlation,
    phase_gate,
    product_state,
    random_state,
    random_unitary,
    singlet,
    singlet_ket,
    werner,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def test_singlet_entries():
    m = singlet().matrix
    expected = np.zeros((4, 4))
    expected[1, 1] = expected[2, 2] = 0.5
    expected[1, 2] = expected[2, 1] = -0.5
    np.testing.assert_allclose(m, expected, atol=1e-15)


def test_singlet_self_fidelity_and_zz():
    assert fidelity(singlet(), singlet_ket()) == pytest.approx(1.0, abs=1e-12)
    assert pauli_correlation(singlet(), "ZZ") == pytest.approx(-1.0, abs=1e-12)
    assert pauli_correlation(singlet(), "XX") == pytest.approx(-1.0, abs=1e-12)


def test_state_invariants_enforced():
    with pytest.raises(ValueError, match="trace"):
        TwoQubitState(np.eye(4))
    with pytest.raises(ValueError, match="Hermitian"):
        TwoQubitState(np.triu(np.ones((4, 4))) / 4)
    with pytest.raises(ValueError, match="positive"):
        TwoQubitState(np.diag([0.5, 0.5, 0.5, -0.5]))


def test_settings_enumeration():
    assert len(set(SETTINGS_9)) == 9
    assert set(SETTINGS_WITNESS) <= set(SETTINGS_9)
    assert [s.label for s in SETTINGS_WITNESS] == ["XX", "YY", "ZZ"]
    assert MeasurementSetting.parse("xy") == MeasurementSetting("X", "Y")
    with pytest.raises(ValueError):
        MeasurementSetting.parse("XQ")


@pytest.mark.parametrize(
    "rho, expected",
    [
        (singlet(), 1.0),
        (maximally_mixed(), 0.25),
        # 0.95 * 1 + 0.05 * 0.25
        (TwoQubitState(0.95 * singlet().matrix + 0.05 * np.eye(4) / 4), 0.9625),
    ],
)
def test_fidelity_examples(rho, expected):
    assert fidelity(rho, singlet_ket()) == pytest.approx(expected, abs=1e-12)


def test_fidelity_rejects_unnormalized_target():
    with pytest.raises(ValueError, match="normalized"):
        fidelity(singlet(), np.array([0, 1, -1, 0]))


def test_fidelity_product_target():
    up = np.array([1, 0])
    assert fidelity(product_state(up, up), (up, up)) == pytest.approx(1.0)


@pytest.mark.parametrize("setting", SETTINGS_9)
def test_mixed_state_has_no_correlations(setting):
    assert pauli_correlation(maximally_mixed(), setting) == pytest.approx(0.0, abs=1e-15)


def test_dephased_singlet_correlations():
    c = 0.37
    m = np.array(singlet().matrix)
    m[1, 2] *= c
    m[2, 1] *= c
    rho = TwoQubitState(m)
    assert pauli_correlation(rho, "ZZ") == pytest.approx(-1.0)
    assert pauli_correlation(rho, "XX") == pytest.approx(-c)
    assert pauli_correlation(rho, "YY") == pytest.approx(-c)


def _brute_partial_transpose(m):
    out = np.zeros_like(m)
    for a, b, a2, b2 in itertools.product(range(2), repeat=4):
        out[2 * a + b, 2 * a2 + b2] = m[2 * a + b2, 2 * a2 + b]
    return out


def test_partial_transpose_matches_index_loop(rng):
    m = random_state(rng).matrix
    np.testing.assert_allclose(partial_transpose(m), _brute_partial_transpose(m))


def test_partial_transpose_examples():
    assert min_pt_eigenvalue(singlet()) == pytest.approx(-0.5, abs=1e-12)
    up = np.array([1, 0])
    assert min_pt_eigenvalue(product_state(up, up)) == pytest.approx(0.0, abs=1e-12)
    # Werner weight 1/2: PT eigenvalues are (1 - 3p)/4 = -1/8 and (1 + p)/4
    half = werner(0.5)
    assert min_pt_eigenvalue(half) == pytest.approx(-0.125, abs=1e-12)
    assert min_pt_eigenvalue(half) < 0


def test_partial_transpose_involution(rng):
    for _ in range(20):
        m = random_state(rng).matrix
        assert np.array_equal(partial_transpose(partial_transpose(m)), m)


def test_local_unitary_examples(rng):
    np.testing.assert_allclose(apply_local_unitary(singlet(), np.eye(2), np.eye(2)).matrix, singlet().matrix)
    for _ in range(10):
        u = random_unitary(rng)
        np.testing.assert_allclose(apply_local_unitary(singlet(), u, u).matrix, singlet().matrix, atol=1e-12)
    for phi in np.linspace(0, 2 * np.pi, 9):
        out = apply_local_unitary(singlet(), phase_gate(phi), np.eye(2))
        assert fidelity(out) == pytest.approx((1 + np.cos(phi)) / 2, abs=1e-12)


def test_local_unitary_rejects_non_unitary():
    with pytest.raises(ValueError, match="unitar"):
        apply_local_unitary(singlet(), np.diag([1.0, 2.0]), np.eye(2))


def test_local_unitary_preserves_spectrum(rng):
    for _ in range(50):
        rho = random_state(rng)
        out = apply_local_unitary(rho, random_unitary(rng), random_unitary(rng))
        np.testing.assert_allclose(np.linalg.eigvalsh(out.matrix), np.linalg.eigvalsh(rho.matrix), atol=1e-10)


def test_fidelity_linear(rng):
    for _ in range(50):
        r1, r2 = random_state(rng), random_state(rng)
        a = rng.uniform()
        mix = TwoQubitState(a * r1.matrix + (1 - a) * r2.matrix)
        assert fidelity(mix) == pytest.approx(a * fidelity(r1) + (1 - a) * fidelity(r2), abs=1e-10)


def _witness(rho):
    return (1 - sum(pauli_correlation(rho, s) for s in SETTINGS_WITNESS)) / 4


def test_witness_identity_on_bell_diagonal_states(rng):
    for _ in range(1000):
        rho = bell_diagonal(rng.dirichlet(np.ones(4)))
        assert _witness(rho) == pytest.approx(fidelity(rho), abs=1e-10)


def test_witness_identity_holds_for_arbitrary_states(rng):
    # |psi-><psi-| = (II - XX - YY - ZZ)/4 as operators, so the two agree for any rho
    for _ in range(1000):
        rho = random_state(rng, rank=int(rng.integers(1, 5)))
        assert _witness(rho) == pytest.approx(fidelity(rho), abs=1e-10)


def test_outcome_probabilities_sum_to_one(rng):
    rho = random_state(rng)
    for s in SETTINGS_9:
        p = outcome_probabilities(rho, s)
        assert p.sum() == pytest.approx(1.0)
        # correlation from probabilities
        assert p[0] - p[1] - p[2] + p[3] == pytest.approx(pauli_correlation(rho, s), abs=1e-12)


def _encoded(term_a, carrier_a, term_b, carrier_b):
    i, j = ENCODING[carrier_a][term_a], ENCODING[carrier_b][term_b]
    v = np.zeros(4, dtype=complex)
    v[2 * i + j] = 1
    return v


@pytest.mark.parametrize(
    "plus, minus",
    [
        # atom-photon: (|1,1>|L> - |1,-1>|R>)/sqrt2
        ((("|1,+1>", "atom"), ("L", "photon")), (("|1,-1>", "atom"), ("R", "photon"))),
        # atom-magnon: (|1,1>|2,-1> - |1,-1>|2,1>)/sqrt2
        ((("|1,+1>", "atom"), ("|2,-1>", "magnon")), (("|1,-1>", "atom"), ("|2,+1>", "magnon"))),
        # photon-photon: (|R>|L> - |L>|R>)/sqrt2
        ((("R", "photon"), ("L", "photon")), (("L", "photon"), ("R", "photon"))),
    ],
)
def test_encoding_maps_each_stage_to_the_logical_singlet(plus, minus):
    psi = (_encoded(*plus[0], *plus[1]) - _encoded(*minus[0], *minus[1])) / np.sqrt(2)
    assert abs(np.vdot(singlet_ket(), psi)) == pytest.approx(1.0)
    np.testing.assert_allclose(psi, singlet_ket())
