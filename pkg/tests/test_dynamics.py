"""Superatom Hamiltonian and time evolution, checked against closed forms and dense algebra."""

import numpy as np
import pytest
from scipy.linalg import expm

from superatom import propagate as prop
from superatom.coarse import SuperatomPartition, build_partition, singleton_partition
from superatom.dynamics import (
    ManyBodyState,
    apply_hamiltonian,
    blockaded_reference,
    build_hamiltonian,
    diagonal_energy,
    ground_state,
    propagate,
)
from superatom.observables import excitation_observables
from superatom.oracle import exact_evolve
from superatom.pulse import PulseSpec, full_area_factor

from conftest import couplings_from, random_couplings


def _final(ham, pulse, **kw):
    return propagate(ground_state(ham.basis, pulse.start), ham, pulse, [pulse.end], **kw)[-1]


def test_dense_four_state_blockaded_pair():
    # exact diagonalisation oracle for two atoms with |kappa| tau = 1e4
    kap = couplings_from([[0, 0, 0], [1, 0, 0]], -1.0e4)
    ham = build_hamiltonian(singleton_partition(kap), 2)
    omega = 1.0
    dense = ham.to_dense(omega)
    times = np.linspace(0, 2 * 2 * np.pi / np.sqrt(2), 41)
    pulse = PulseSpec("square", omega, duration=times[-1])
    states = propagate(ground_state(ham.basis), ham, pulse, times)
    for s in states:
        exact = expm(-1j * dense * s.time)[:, 0]
        np.testing.assert_allclose(s.amplitudes, exact, atol=1e-9)
        p = excitation_observables(s.amplitudes, ham.basis, 2).p_exc
        assert abs(p - blockaded_reference(2, omega * s.time)) < 2e-3


def test_diagonal_energy_examples():
    k = np.array([[0, 1, 2], [1, 0, 4], [2, 4, 0]], float)
    assert diagonal_energy((), k) == 0.0
    assert diagonal_energy((1,), k) == 0.0
    assert diagonal_energy((0, 2), k) == 2.0
    assert diagonal_energy((0, 1, 2), k) == 7.0


def test_hamiltonian_diagonal_uses_subset_energies(rng):
    _, kap = random_couplings(rng, 9, 2.0, -3.0)
    part = build_partition(kap, 6)
    ham = build_hamiltonian(part, 3)
    for s in rng.integers(0, ham.dim, 30):
        assert ham.diag[s] == pytest.approx(diagonal_energy(ham.basis.subset(int(s)), part.k), rel=1e-13)


def test_derivative_without_drive_is_diagonal(rng):
    _, kap = random_couplings(rng, 6, 2.0, -3.0)
    ham = build_hamiltonian(build_partition(kap, 4), 2)
    c = rng.normal(size=ham.dim) + 1j * rng.normal(size=ham.dim)
    pulse = PulseSpec("square", 1.3, duration=1.0)
    d = apply_hamiltonian(ManyBodyState(c), ham, pulse, 2.0)  # after the pulse
    np.testing.assert_allclose(d, -1j * ham.diag * c)


def test_collective_coupling_of_a_four_atom_superatom():
    part = SuperatomPartition(((0, 1, 2, 3),), np.zeros((1, 1)))
    ham = build_hamiltonian(part, 1)
    omega = 0.8
    d = apply_hamiltonian(ground_state(ham.basis), ham, PulseSpec("square", omega), 0.5)
    assert d[1] == pytest.approx(-1j * omega)  # -i sqrt(4) Omega / 2
    assert d[0] == 0


@pytest.mark.parametrize("n_sa, m_max", [(7, 7), (9, 3)])
def test_hermiticity(rng, n_sa, m_max):
    _, kap = random_couplings(rng, n_sa + 3, 2.0, -4.0)
    ham = build_hamiltonian(build_partition(kap, n_sa), m_max)
    u = 0.9 * np.exp(0.4j)
    for _ in range(5):
        phi = rng.normal(size=ham.dim) + 1j * rng.normal(size=ham.dim)
        psi = rng.normal(size=ham.dim) + 1j * rng.normal(size=ham.dim)
        lhs = np.vdot(phi, ham.apply(psi, u))
        rhs = np.conj(np.vdot(psi, ham.apply(phi, u)))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))
    dense = ham.to_dense(u) if ham.dim <= 200 else None
    if dense is not None:
        np.testing.assert_allclose(dense, dense.conj().T, atol=1e-12)


def test_single_atom_pi_pulse():
    kap = couplings_from([[0, 0, 0]], 1.0)
    ham = build_hamiltonian(singleton_partition(kap), 1)
    psi = _final(ham, PulseSpec("square", np.pi))
    assert abs(psi.amplitudes[1]) ** 2 == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("shape", ["square", "gaussian"])
def test_non_interacting_atoms_stay_in_a_product_state(rng, shape):
    _, kap = random_couplings(rng, 5, 2.0, 0.0)
    ham = build_hamiltonian(singleton_partition(kap), 5)
    pulse = PulseSpec(shape, 1.9, duration=1.0)
    psi = _final(ham, pulse).amplitudes
    a = pulse.total_area
    single = np.array([np.cos(a / 2), -1j * np.sin(a / 2)])
    product = single
    for _ in range(4):
        product = np.kron(single, product)
    np.testing.assert_allclose(psi, product, atol=1e-9)


def test_norm_and_reversibility(rng):
    _, kap = random_couplings(rng, 10, 2.0, -8.0)
    ham = build_hamiltonian(build_partition(kap, 7), 4)
    pulse = PulseSpec("gaussian", 3.0, duration=1.0)
    times = np.linspace(pulse.start, pulse.end, 31)
    states = propagate(ground_state(ham.basis), ham, pulse, times)
    assert max(abs(s.norm2 - 1) for s in states) <= 1e-8
    back = np.conj(prop.propagate(ham, np.conj(states[-1].amplitudes), pulse, [pulse.end])[0])
    assert np.max(np.abs(back - ground_state(ham.basis).amplitudes)) < 1e-6


@pytest.mark.parametrize("shape", ["square", "gaussian"])
def test_scaling_invariance(rng, shape):
    _, kap = random_couplings(rng, 8, 2.0, -6.0)
    part = build_partition(kap, 6)
    fast = SuperatomPartition(part.groups, 2 * part.k)
    h1, h2 = build_hamiltonian(part, 6), build_hamiltonian(fast, 6)
    for area in (0.7, 2.4):
        rabi = area / full_area_factor(shape)
        p1 = PulseSpec(shape, rabi, duration=1.0)
        p2 = PulseSpec(shape, 2 * rabi, duration=0.5)
        n1 = excitation_observables(_final(h1, p1).amplitudes, h1.basis, 8).n_mean
        n2 = excitation_observables(_final(h2, p2).amplitudes, h2.basis, 8).n_mean
        assert abs(n1 - n2) < 1e-6


def test_truncation_converges_and_full_cap_is_exact(rng):
    _, kap = random_couplings(rng, 12, 2.0, -300.0)
    part = build_partition(kap, 8)
    pulse = PulseSpec("square", 3.0, duration=1.0)
    p = []
    for m in range(1, 9):
        ham = build_hamiltonian(part, m)
        p.append(excitation_observables(_final(ham, pulse).amplitudes, ham.basis, 12).p_exc)
    changes = np.abs(np.diff(p))
    resolved = changes[changes > 1e-9]  # below this the integrator tolerance dominates
    assert resolved.size >= 4
    assert np.all(resolved[1:] < resolved[:-1])
    assert np.all(changes[resolved.size:] <= 1e-9)
    # the cap is clipped at the superatom count, so m_max beyond it is the same model
    big = build_hamiltonian(part, 20)
    assert big.basis.untruncated
    full = excitation_observables(_final(big, pulse).amplitudes, big.basis, 12).p_exc
    assert full == pytest.approx(p[-1], abs=1e-12)


def test_detuning_frame_equivalence(rng):
    _, kap = random_couplings(rng, 6, 2.0, -5.0)
    part = singleton_partition(kap)
    delta = 1.7
    times = np.linspace(0, 1.0, 11)
    explicit = build_hamiltonian(part, 6, detuning=delta)
    rotated = build_hamiltonian(part, 6)
    a = propagate(ground_state(explicit.basis), explicit, PulseSpec("square", 2.5), times)
    b = propagate(ground_state(rotated.basis), rotated, PulseSpec("square", 2.5, frame_detuning=delta), times)
    exact = exact_evolve(kap, PulseSpec("square", 2.5), times, detuning=delta)
    for sa, sb, n_exact in zip(a, b, exact.number_moments()[0]):
        na = excitation_observables(sa.amplitudes, explicit.basis, 6).n_mean
        nb = excitation_observables(sb.amplitudes, rotated.basis, 6).n_mean
        assert abs(na - nb) < 1e-8
        assert abs(na - n_exact) < 1e-8


def test_chebyshev_and_lanczos_agree(rng):
    _, kap = random_couplings(rng, 9, 2.0, -20.0)
    ham = build_hamiltonian(build_partition(kap, 7), 4)
    psi0 = ground_state(ham.basis).amplitudes
    pulse = PulseSpec("square", 2.2, duration=1.3)
    times = np.linspace(0, 2.0, 9)
    a = prop.propagate(ham, psi0, pulse, times, method="lanczos")
    b = prop.propagate(ham, psi0, pulse, times, method="chebyshev")
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_sampling_does_not_change_the_trajectory(rng):
    _, kap = random_couplings(rng, 9, 2.0, -20.0)
    ham = build_hamiltonian(build_partition(kap, 7), 4)
    psi0 = ground_state(ham.basis).amplitudes
    for shape in ("square", "gaussian"):
        pulse = PulseSpec(shape, 2.2, duration=0.8)
        times = np.linspace(pulse.start, pulse.end, 17)
        many = prop.propagate(ham, psi0, pulse, times)
        one = prop.propagate(ham, psi0, pulse, [times[9]])
        np.testing.assert_allclose(many[9], one[0], atol=1e-8)


def test_propagation_argument_checks(rng):
    _, kap = random_couplings(rng, 3, 2.0, -1.0)
    ham = build_hamiltonian(singleton_partition(kap), 3)
    psi0 = ground_state(ham.basis).amplitudes
    pulse = PulseSpec("square", 1.0)
    with pytest.raises(ValueError):
        prop.propagate(ham, psi0, pulse, [0.5, 0.2])
    with pytest.raises(ValueError):
        prop.propagate(ham, psi0, pulse, [0.5], rtol=0)
    with pytest.raises(ValueError):
        prop.propagate(ham, psi0, pulse, [0.5], t_start=1.0)
    with pytest.raises(ValueError):
        prop.propagate(ham, psi0, pulse, [0.5], method="euler")
    out = prop.propagate(ham, psi0, pulse, [0.0, 0.0])
    np.testing.assert_array_equal(out[1], psi0)


def test_stiff_segment_matches_dense_exponential(rng):
    # couplings spanning many decades force the eigendecomposition fallback
    pts = rng.uniform(-0.3, 0.3, size=(6, 3))
    kap = couplings_from(pts, -1.0e4 * 2.0**6)
    ham = build_hamiltonian(singleton_partition(kap), 6)
    width = np.abs(ham.diag).max()
    assert width > 1e6
    times = np.linspace(0, 2.0, 5)
    states = propagate(ground_state(ham.basis), ham, PulseSpec("square", 1.5, duration=2.0), times)
    dense = ham.to_dense(1.5)
    for s in states:
        # any unstructured eigensolver is limited to about eps |H| t here
        tol = 1e-9 + 1e-16 * width * s.time
        np.testing.assert_allclose(s.amplitudes, expm(-1j * dense * s.time)[:, 0], atol=tol)


def test_dense_exponential_is_exact_for_mild_spectra(rng):
    _, kap = random_couplings(rng, 6, 2.0, -5.0)
    ham = build_hamiltonian(singleton_partition(kap), 6)
    psi = rng.normal(size=ham.dim) + 1j * rng.normal(size=ham.dim)
    for u in (0.8, 0.8 * np.exp(0.3j)):
        rows = prop._DenseExp(ham, u).evolve(psi, [0.0, 0.7])
        np.testing.assert_allclose(rows[0], psi, atol=1e-12)
        np.testing.assert_allclose(rows[1], expm(-0.7j * ham.to_dense(u)) @ psi, atol=1e-12)


def test_dense_switch_cost_model():
    assert not prop._dense_pays_off(prop.DENSE_MAX_DIM + 1, 30, 1e9)
    assert not prop._dense_pays_off(1500, 30, 10)
    assert prop._dense_pays_off(256, 30, 1e5)
