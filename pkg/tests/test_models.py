import numpy as np
import pytest

from clwave.boundary import BoundaryCondition, solve_boundary
from clwave.errors import UnsupportedCaseError, ValidationError
from clwave.lattice_core import ChainSpec
from clwave.models import (
    FOUR_STATE_MATRICES, FOUR_STATE_V, GATE_CATALOG, GATE_POSITIVE, TAU1, BlochState,
    FourStateAnalytic, IsingAnalytic, SPlParams, bloch_from_density, bloch_from_probabilities,
    diagonal_ising_sector, diagonal_ising_step, fit_damped_oscillation, four_state_analytic,
    four_state_chain, four_state_generator, four_state_oscillating_boundaries,
    four_state_oscillating_pure, four_state_spectrum, four_state_step, gate_word, ising_analytic,
    ising_chain, ising_delta_n, ising_determinant, ising_generator, ising_linear_interpolation,
    ising_rate, ising_step, is_unique_jump, normalized_ising_from_action, particle_number,
    product_distribution, quantum_density_2x2, spl_bulk_length, spl_bulk_probabilities,
    spl_bulk_probabilities_literal, spl_unit_eigenvectors, three_spin_gate, three_spin_pl,
    three_spin_values, unique_jump_chain, unique_jump_step, unitary_bloch_map,
)


# Ising -------------------------------------------------------------------

def test_ising_limits():
    assert np.allclose(ising_step(40.0).matrix, np.eye(2), atol=1e-30)
    assert np.allclose(ising_step(0.0).matrix, 0.5 * np.ones((2, 2)))
    with pytest.raises(ValidationError):
        ising_chain(0.0, 3)


def test_ising_eigenvalues():
    beta = 0.9
    ev = np.sort(np.linalg.eigvalsh(ising_step(beta).matrix))
    assert np.allclose(ev, [np.tanh(beta), 1.0], atol=1e-15)


def test_ising_phi_matches_action_normalization():
    beta = 1.7
    a, b = ising_step(beta), normalized_ising_from_action(beta)
    assert np.allclose(a.matrix, b.matrix, atol=1e-15)
    assert a.phi == pytest.approx(b.phi, abs=1e-14)


def test_ising_rate_forms():
    beta, eps = 3.0, 0.5
    assert ising_rate(beta, eps) == pytest.approx(-np.log(np.tanh(beta)) / (2 * eps))
    assert ising_rate(beta, eps, exact=False) == pytest.approx(np.exp(-2 * beta) / eps)
    assert ising_rate(6.0, exact=True) == pytest.approx(ising_rate(6.0, exact=False), rel=1e-5)
    assert np.array_equal(ising_generator(2.0), [[-2.0, 2.0], [2.0, -2.0]])


def test_ising_static():
    p = IsingAnalytic(0.4, 0.0, 0.0, 0.3, 0.0, 10.0)
    for t in (0.0, 3.0, 10.0):
        rho, dn = ising_analytic(p, t)
        assert dn == 0
        assert np.allclose(rho, 0.5 * (np.eye(2) + 0.4 * TAU1.real))


def test_ising_boundary_entry():
    p = IsingAnalytic(0.1, 0.3, -0.2, 0.25, 1.0, 9.0)
    rho, _ = ising_analytic(p, 1.0)
    assert rho[1, 1] == pytest.approx(0.5 * (1 + 0.3 - 0.2 * np.exp(-2 * 0.25 * 8.0)), abs=1e-15)


def test_ising_determinant_constant():
    p = IsingAnalytic(0.2, 0.4, 0.3, 0.15, 0.0, 12.0)
    d = ising_determinant(p)
    for t in np.linspace(0, 12, 7):
        assert np.linalg.det(ising_analytic(p, t)[0]) == pytest.approx(d, abs=1e-14)


def test_ising_linear_limit():
    t = np.linspace(0, 10, 11)
    exact = ising_delta_n(0.3, -0.1, 1e-8, 0.0, 10.0, t)
    assert np.allclose(exact, ising_linear_interpolation(0.3, -0.1, 0.0, 10.0, t), atol=1e-6)


def test_ising_offsets_round_trip():
    p = IsingAnalytic.from_boundary_offsets(0.2, -0.1, 0.3, 0.0, 5.0)
    assert p.dn_in == pytest.approx(0.2) and p.dn_f == pytest.approx(-0.1)
    t = np.linspace(0, 5, 6)
    assert np.allclose([ising_analytic(p, x)[1] for x in t], ising_delta_n(0.2, -0.1, 0.3, 0, 5, t))


def test_ising_analytic_obeys_generator():
    omega = 0.4
    p = IsingAnalytic(0.1, 0.3, 0.2, omega, 0.0, 6.0)
    W = ising_generator(omega)
    h = 1e-4
    for t in (1.0, 3.0, 5.0):
        d = (ising_analytic(p, t + h)[0] - ising_analytic(p, t - h)[0]) / (2 * h)
        r = ising_analytic(p, t)[0]
        assert np.abs(d - (W @ r - r @ W)).max() < 1e-8


def test_ising_analytic_validation():
    with pytest.raises(ValidationError):
        IsingAnalytic(1.5, 0, 0, 0.1, 0, 1)
    with pytest.raises(ValidationError):
        ising_analytic(IsingAnalytic(0, 0, 0, 0.0, 0, 1), 0.5)


# Four-state oscillator --------------------------------------------------

def test_four_state_limits():
    assert np.array_equal(four_state_step(1.0).matrix, FOUR_STATE_V)
    assert np.array_equal(four_state_step(0.0).matrix, np.eye(4))
    assert four_state_step(0.3).classical
    with pytest.raises(ValidationError):
        four_state_step(1.2)


@pytest.mark.parametrize("eta", [0.0, 0.2, 0.5, 0.9, 1.0])
def test_four_state_spectrum(eta):
    ev = np.linalg.eigvals(four_state_step(eta).matrix)
    ref = four_state_spectrum(eta)
    key = lambda z: (round(z.real, 9), round(z.imag, 9))
    assert np.allclose(sorted(ev, key=key), sorted(ref, key=key), atol=1e-12)


def test_four_state_period_four():
    chain = four_state_chain(1.0, 8)
    tr = solve_boundary(chain, BoundaryCondition.pure([0.4, 0.3, 0.2, 0.1], np.ones(4)))
    assert np.array_equal(tr.p[4], tr.p[0]) and np.array_equal(tr.p[8], tr.p[4])
    assert not np.array_equal(tr.p[1], tr.p[0])


def test_four_state_matrix_relations():
    m = FOUR_STATE_MATRICES
    W = four_state_generator(1.0)
    assert np.allclose(np.eye(4) + m["B1"] + m["B2"] + m["B3"], np.ones((4, 4)))
    for k in ("B1", "B2", "B3"):
        assert np.allclose(W @ m[k] - m[k] @ W, 0)
    # the undamped pair rotates into each other at twice the rate
    assert np.allclose(W @ m["C1"] - m["C1"] @ W, -2 * m["C2"])
    assert np.allclose(W @ m["C2"] - m["C2"] @ W, 2 * m["C1"])


def test_four_state_trace_part():
    rho = four_state_analytic(FourStateAnalytic(), 1.3, 0.0, 10.0, 0.5)
    assert np.allclose(rho, 0.25 * np.eye(4))
    assert np.allclose(np.diag(rho), 0.25)


def test_four_state_bulk_oscillation():
    omega, cbar, alpha = 0.5, 0.05, 0.3
    k = FourStateAnalytic(cbar=cbar, alpha=alpha, d=(0.01, 0.02, 0.03, 0.01), e_plus=0.01, e_minus=0.02)
    for t in (40.0, 45.0, 50.0):
        p = np.diag(four_state_analytic(k, t, 0.0, 100.0, omega))
        assert p[0] - p[1] - p[2] + p[3] == pytest.approx(4 * cbar * np.sin(2 * omega * t + alpha), abs=1e-8)


def test_four_state_analytic_residual(rng):
    omega = 0.6
    k = FourStateAnalytic(tuple(rng.normal(size=3) * 0.1), 0.1, 0.4, tuple(rng.normal(size=4) * 0.1),
                          tuple(rng.normal(size=4)), 0.05, -0.03)
    W = four_state_generator(omega)
    h = 1e-4
    for t in (0.5, 2.0, 4.5):
        f = lambda s: four_state_analytic(k, s, 0.0, 5.0, omega)
        d = (f(t + h) - f(t - h)) / (2 * h)
        r = f(t)
        assert np.abs(d - (W @ r - r @ W)).max() < 1e-8
        assert np.trace(r) == pytest.approx(1.0, abs=1e-14)


def test_four_state_constants_validation():
    with pytest.raises(ValidationError):
        FourStateAnalytic(b=(0.0, 0.0))


def test_oscillating_pure_state():
    omega = 0.4
    for t in (0.0, 1.0, 2.5):
        qt, qb, rho = four_state_oscillating_pure(t, omega)
        assert qb @ qt == pytest.approx(1.0)
        W = four_state_generator(omega)
        h = 1e-5
        dq = (four_state_oscillating_pure(t + h, omega)[0] - four_state_oscillating_pure(t - h, omega)[0]) / (2 * h)
        assert np.allclose(dq, W @ qt, atol=1e-8)
    qi, qf = four_state_oscillating_boundaries(omega, 0.0, 10.0)
    assert (qi < 0).any() and (qf < 0).any()


def test_damped_fit_four_state():
    eta = 0.05
    chain = four_state_chain(eta, 800)
    # remove the faster 1 - 2 eta mode so only the complex pair is left
    ev, vec = np.linalg.eig(FOUR_STATE_V)
    u = vec[:, np.argmin(np.abs(ev + 1))].real
    q = np.array([1.0, 0, 0, 0])
    q = q - (u @ q) / (u @ u) * u
    tr = solve_boundary(chain, BoundaryCondition.pure(q, np.ones(4)))
    fit = fit_damped_oscillation(chain.times, tr.p[:, 0])
    omega = -np.log(np.abs(1 - eta + 1j * eta))
    freq = np.angle(1 - eta + 1j * eta)
    assert fit.gamma == pytest.approx(omega, rel=0.05)
    assert fit.omega == pytest.approx(freq, rel=0.05)
    assert fit.gamma == pytest.approx(fit.omega, rel=0.1)
    with pytest.raises(ValidationError):
        fit_damped_oscillation([0, 1, 2], [1, 0, 0])


# Unique jump chains -------------------------------------------------------

def test_unique_jump_orbit():
    S = unique_jump_step([1, 3, 0, 2]).matrix
    assert np.array_equal(S, FOUR_STATE_V)
    q = np.array([1.0, 0, 0, 0])
    seen = []
    for _ in range(4):
        seen.append(int(np.argmax(q)))
        q = S @ q
    assert seen == [0, 1, 3, 2] and q[0] == 1


def test_unique_jump_identity_and_power():
    assert np.array_equal(unique_jump_step(range(5)).matrix, np.eye(5))
    S = unique_jump_step([1, 2, 3, 4, 5, 0]).matrix
    assert np.array_equal(np.linalg.matrix_power(S, 6), np.eye(6))
    assert not np.array_equal(np.linalg.matrix_power(S, 3), np.eye(6))


def test_unique_jump_signs_and_errors():
    S = unique_jump_step([1, 0], signs=[1, -1])
    assert not S.classical and is_unique_jump(S)
    assert np.allclose(S.matrix.T @ S.matrix, np.eye(2))
    with pytest.raises(ValidationError):
        unique_jump_step([0, 0])
    with pytest.raises(ValidationError):
        unique_jump_step([1, 0], signs=[1, 2])
    assert not is_unique_jump(four_state_step(0.5))
    assert unique_jump_chain([1, 0], 3).M == 1
    assert unique_jump_chain([1, 2, 0], 3).M is None


# Three-spin gates ---------------------------------------------------------

def _apply(gate, b):
    S, _ = three_spin_gate(gate)
    return bloch_from_probabilities(S.matrix @ product_distribution(b)).vector


def test_gate_hadamard():
    assert np.allclose(_apply("H", BlochState(1, 0, 0)), [0, 0, 1])


def test_gate_u31():
    assert np.allclose(_apply("U31", BlochState(0.1, 0.2, 0.3)), [-0.3, 0.2, 0.1])


def test_gate_u23_composition():
    ops, U = gate_word("U12 U31 U12 UY")
    assert np.allclose(U, GATE_CATALOG["U23"][1], atol=1e-15)
    assert np.allclose(_apply("U23", BlochState(0.1, 0.2, 0.3)), [0.1, 0.3, -0.2])
    p = product_distribution(BlochState(0.1, 0.2, 0.3))
    for S in ops:
        p = S.matrix @ p
    assert np.allclose(bloch_from_probabilities(p).vector, [0.1, 0.3, -0.2])


@pytest.mark.parametrize("gate", sorted(GATE_CATALOG))
def test_gate_conjugation_law(gate, rng):
    S, U = three_spin_gate(gate)
    assert is_unique_jump(S) and S.classical and GATE_POSITIVE[gate]
    assert np.allclose(U @ U.conj().T, np.eye(2), atol=1e-15)
    for _ in range(5):
        v = rng.normal(size=3)
        v *= rng.uniform(0, 1) / np.linalg.norm(v)
        b = BlochState(*v)
        assert np.allclose(_apply(gate, b), unitary_bloch_map(U, b).vector, atol=1e-12)


def test_gate_unknown():
    with pytest.raises(ValidationError):
        three_spin_gate("CNOT")


def test_bloch_examples(rng):
    assert np.allclose(bloch_from_probabilities(np.full(8, 0.125)).vector, 0)
    e = np.zeros(8)
    e[7] = 1
    assert np.array_equal(bloch_from_probabilities(e).vector, [1, 1, 1])
    p = rng.dirichlet(np.ones(8))
    assert (np.abs(bloch_from_probabilities(p).vector) <= 1).all()
    with pytest.raises(ValidationError):
        bloch_from_probabilities(-e)
    with pytest.raises(ValidationError):
        bloch_from_probabilities(np.ones(4) / 4)


def test_listed_spin_values():
    assert np.array_equal(three_spin_values(1), [-1, -1, -1, -1, 1, 1, 1, 1])
    assert np.array_equal(three_spin_values(3), [-1, 1, -1, 1, -1, 1, -1, 1])


def test_quantum_density_examples():
    assert np.allclose(quantum_density_2x2(BlochState(0, 0, 0)), 0.5 * np.eye(2))
    assert np.allclose(quantum_density_2x2(BlochState(0, 0, 1)), np.diag([1, 0]))
    b = BlochState(0.3, -0.2, 0.5)
    rho = quantum_density_2x2(b)
    r = np.sqrt(b.norm2)
    assert np.allclose(np.linalg.eigvalsh(rho), [0.5 * (1 - r), 0.5 * (1 + r)])
    assert np.allclose(bloch_from_density(rho).vector, b.vector)
    assert np.allclose(rho, rho.conj().T) and np.trace(rho) == pytest.approx(1)
    with pytest.raises(ValidationError):
        quantum_density_2x2(BlochState(1, 1, 0))
    assert BlochState(0, 0.6, 0.8).is_pure()
    with pytest.raises(ValidationError):
        product_distribution(BlochState(1.5, 0, 0))


# S_pl ---------------------------------------------------------------------

def test_spl_flip_and_identity():
    S = three_spin_pl(SPlParams(*([1.0] * 8)))
    assert is_unique_jump(S)
    assert np.allclose(_bloch_after(S, BlochState(0.1, 0.2, 0.3)), [0.1, -0.2, 0.3])
    assert np.array_equal(three_spin_pl(SPlParams()).matrix, np.eye(8))


def _bloch_after(S, b):
    return bloch_from_probabilities(S.matrix @ product_distribution(b)).vector


def test_spl_spectrum_and_invariants():
    p = SPlParams(0.3, 0.1, 0.2, 0.6, 0.4, 0.5, 0.1, 0.2)
    S = three_spin_pl(p).matrix
    ev = np.sort(np.linalg.eigvals(S).real)
    assert np.allclose(ev, np.sort(p.eigenvalues()), atol=1e-12)
    assert np.allclose(S.sum(axis=0), 1)
    W = spl_unit_eigenvectors(p)
    assert np.allclose(S @ W, W, atol=1e-15)
    assert p.regular and not p.symmetric
    with pytest.raises(ValidationError):
        SPlParams(a_p=1.2)


def test_spl_bulk_literal_vs_corrected(rng):
    qi, qf = rng.uniform(0.1, 1, 8), rng.uniform(0.1, 1, 8)
    sym = SPlParams(0.3, 0.2, 0.4, 0.1, 0.3, 0.2, 0.4, 0.1)
    assert sym.symmetric
    assert np.allclose(spl_bulk_probabilities(sym, qi, qf), spl_bulk_probabilities_literal(sym, qi, qf), atol=1e-14)
    p = SPlParams(0.3, 0.4, 0.2, 0.5, 0.1, 0.2, 0.4, 0.3)
    G = spl_bulk_length(p)
    tr = solve_boundary(ChainSpec.uniform(three_spin_pl(p), G, M=3), BoundaryCondition.pure(qi, qf))
    assert np.abs(tr.p[0] - spl_bulk_probabilities(p, qi, qf)).max() < 1e-8


def test_spl_bulk_length():
    p = SPlParams(0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0)
    G = spl_bulk_length(p)
    assert 0.5 ** G < 1e-10 <= 0.5 ** (G - 2)
    with pytest.raises(UnsupportedCaseError):
        spl_bulk_length(SPlParams())


def test_spl_conditional_rules(rng):
    p = SPlParams(a_p=0.0, c_p=0.0, b_m=1.0, d_m=1.0, a_m=0.3, c_m=0.2, b_p=0.4, d_p=0.1)
    chain = ChainSpec.uniform(three_spin_pl(p), 6, M=3)
    tr = solve_boundary(chain, BoundaryCondition.pure(rng.uniform(0.1, 1, 8), rng.uniform(0.1, 1, 8)))
    P = tr.p
    # states 0 and 2 are frozen, states 5 and 7 trade places each step
    assert np.allclose(P[:, 0], P[0, 0], atol=1e-14)
    assert np.allclose(P[:, 2], P[0, 2], atol=1e-14)
    assert np.allclose(P[1:, 5], P[:-1, 7], atol=1e-14)
    assert np.allclose(P[1:, 7], P[:-1, 5], atol=1e-14)


def test_spl_conserved_spins(rng):
    p = SPlParams(*rng.uniform(0, 0.45, 8))
    chain = ChainSpec.uniform(three_spin_pl(p), 12, M=3)
    tr = solve_boundary(chain, BoundaryCondition.pure(rng.uniform(0.1, 1, 8), rng.uniform(0.1, 1, 8)))
    s1, s3 = three_spin_values(1), three_spin_values(3)
    for f in (s1, s3, s1 * s3):
        v = tr.p @ f
        assert np.abs(v - v[0]).max() < 1e-12


# Diagonal Ising sectors ---------------------------------------------------

def test_sector_one_particle_shift():
    sec = diagonal_ising_sector(5, 1)
    q = np.zeros(5)
    q[2] = 1
    assert np.array_equal(sec.evolve(q), np.eye(5)[3])


def test_sector_plane_wave():
    Mx = 6
    sec = diagonal_ising_sector(Mx, 1)
    for n in range(Mx):
        k = 2 * np.pi * n / Mx
        q = np.exp(1j * k * np.arange(Mx))
        assert np.allclose(sec.evolve(q), np.exp(-1j * k) * q, atol=1e-14)
        # momentum eigenvalue sin(k)/eps for W = -iP
        assert np.allclose(sec.P @ q, np.sin(k) * q, atol=1e-14)


def test_sector_two_particle_antisymmetry(rng):
    sec = diagonal_ising_sector(5, 2)
    Q = rng.normal(size=(5, 5))
    Q = Q - Q.T
    q = sec.sector_vector(Q)
    for steps in range(1, 6):
        Qn = sec.pair_function(sec.evolve(q, steps))
        assert np.allclose(Qn, -Qn.T)
        # shifted by one site per step in both arguments
        idx = (np.arange(5) - steps) % 5
        assert np.allclose(Qn, Q[np.ix_(idx, idx)])


def test_sector_errors_and_empty():
    with pytest.raises(UnsupportedCaseError):
        diagonal_ising_sector(6, 3)
    with pytest.raises(ValidationError):
        diagonal_ising_sector(1, 2)
    with pytest.raises(ValidationError):
        diagonal_ising_sector(4, 1).pair_function(np.zeros(4))
    assert diagonal_ising_sector(3, 0).S.shape == (1, 1)


def test_diagonal_step_conserves_particles():
    S = diagonal_ising_step(5).matrix
    n = particle_number(5)
    assert np.allclose(S.T @ np.diag(n) @ S, np.diag(n))
    assert is_unique_jump(S)


def test_bulk_amplitude_projection():
    from clwave.models import four_state_bulk_amplitude
    k = FourStateAnalytic(b=(0.02, 0.01, -0.03), cbar=0.05, alpha=0.3, d=(0.01, 0, 0, 0.02))
    omega, t = 0.5, 2.0
    cbar, phase = four_state_bulk_amplitude(four_state_analytic(k, t, 0.0, 40.0, omega))
    assert cbar == pytest.approx(0.05, abs=1e-12)
    assert phase == pytest.approx(2 * omega * t + 0.3, abs=1e-12)


def test_amplitude_envelope_shrinks_with_length():
    from clwave.models import four_state_amplitude_envelope
    rng = np.random.default_rng(5)
    env = [four_state_amplitude_envelope(0.3, G, 200, rng) for G in (4, 12, 24)]
    assert env[0] > env[1] > env[2] > 0
    assert env[0] < 1
