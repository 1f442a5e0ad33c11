import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import block_hamiltonian, rand_density, seeds
from thermogauge.operators import SIGMA_Z, DimensionError, InvariantError, ThermoGaugeError, expectation, ket_projector, purity, trace_distance, von_neumann_entropy
from thermogauge.spectral import cluster_degeneracies, eigenframe
from thermogauge.thermo_group import (
    _gram_schmidt,
    GroupElement,
    act,
    check_element,
    gauge_entropies,
    gauge_entropy,
    haar_average,
    haar_unitaries,
    invariant_functional,
    make_rng,
    sample_gauge_path,
    sample_haar,
    sample_haar_batch,
    thermodynamic_group,
    twirl,
)

PLUS = ket_projector([1, 1])
block_lists = st.lists(st.integers(1, 3), min_size=1, max_size=3)


def _group(H):
    f = eigenframe(H)
    return f, thermodynamic_group(f.structure, f)


def test_group_block_dims():
    assert _group(SIGMA_Z)[1].block_dims == (1, 1)
    assert _group(np.eye(3))[1].block_dims == (3,)
    assert _group(np.diag([2.0, 2.0, 5.0]))[1].block_dims == (2, 1)


def test_group_rejects_inconsistent_structure():
    f = eigenframe(SIGMA_Z)
    with pytest.raises(ThermoGaugeError):
        thermodynamic_group(cluster_degeneracies([1.0, 1.0]), f)


def test_abelian_samples_are_phases():
    f, G = _group(np.diag([0.0, 1.0, 3.0]))
    V = sample_haar(G, seed=3).matrix
    assert np.allclose(V, np.diag(np.diag(V)))
    assert np.allclose(np.abs(np.diag(V)), 1)


@given(seeds, block_lists)
def test_samples_are_group_elements(seed, blocks):
    H = block_hamiltonian(np.random.default_rng(seed), blocks)
    f, G = _group(H)
    V = sample_haar(G, seed)
    d = sum(blocks)
    assert np.linalg.norm(V.matrix.conj().T @ V.matrix - np.eye(d)) <= 1e-10
    assert check_element(V, H) <= 1e-10


def test_check_element_rejects_outsider(rng):
    f, G = _group(np.diag([0.0, 1.0]))
    with pytest.raises(InvariantError):
        check_element(GroupElement(np.array([[0, 1], [1, 0]], dtype=complex), G))


def test_sampling_is_deterministic():
    _, G = _group(block_hamiltonian(np.random.default_rng(1), (2, 2)))
    assert np.array_equal(sample_haar_batch(G, 9, 4), sample_haar_batch(G, 9, 4))
    assert not np.array_equal(sample_haar_batch(G, 9, 4), sample_haar_batch(G, 10, 4))


def test_haar_first_and_second_moments():
    n_s = 100_000
    V = haar_unitaries(2, n_s, make_rng(7))
    assert abs(np.mean(V[:, 0, 0])) <= 5 / np.sqrt(n_s)
    second = np.abs(V[:, 0, 0]) ** 2
    # |V00|^2 is uniform on [0, 1] for U(2): mean 1/2, std 1/sqrt(12)
    assert abs(second.mean() - 0.5) <= 3 / np.sqrt(12 * n_s)
    fourth = np.abs(V[:, 0, 0]) ** 4
    assert abs(fourth.mean() - 1 / 3) <= 5 * np.std(fourth) / np.sqrt(n_s)


def test_haar_phase_fix_matters():
    """Without the diag(R) phase correction QR output is not Haar; the fixed one is."""
    rng = make_rng(11)
    V = haar_unitaries(3, 50_000, rng)
    # For Haar, E[V00] = 0 and so is the mean phase of any entry.
    assert abs(np.mean(V[:, 0, 0])) < 0.02
    z = make_rng(11).standard_normal((50_000, 3, 3)) + 1j * make_rng(12).standard_normal((50_000, 3, 3))
    q, _ = np.linalg.qr(z)
    assert abs(np.mean(q[:, 0, 0]).real) > 0.1


def test_act_examples():
    f, G = _group(SIGMA_Z)
    assert np.allclose(act(np.eye(2), PLUS), PLUS)
    phi = 0.8
    out = act(np.diag([1, np.exp(1j * phi)]), PLUS)
    assert np.allclose(np.diag(out), np.diag(PLUS))
    assert np.isclose(out[1, 0], PLUS[1, 0] * np.exp(1j * phi))


@given(seeds, block_lists)
def test_act_preserves_energy(seed, blocks):
    rng = np.random.default_rng(seed)
    H = block_hamiltonian(rng, blocks)
    rho = rand_density(rng, sum(blocks))
    V = sample_haar(_group(H)[1], seed)
    assert abs(expectation(act(V, rho), H) - expectation(rho, H)) <= 1e-10


def test_twirl_examples(rng):
    assert np.allclose(twirl(PLUS, eigenframe(SIGMA_Z).structure), np.eye(2) / 2)
    rho = rand_density(rng, 3)
    assert np.allclose(twirl(rho, eigenframe(np.eye(3)).structure), np.eye(3) / 3)


@pytest.mark.parametrize("blocks", [(1, 1), (2, 1), (2, 2), (3, 1)])
def test_twirl_matches_haar_average(blocks):
    rng = np.random.default_rng(sum(blocks))
    f, G = _group(block_hamiltonian(rng, blocks))
    rho = rand_density(rng, f.dim)
    n_s = 100_000
    mc = haar_average(rho, G, n_s, seed=5)
    assert trace_distance(twirl(rho, f.structure), 0.5 * (mc + mc.conj().T)) <= 5 / np.sqrt(n_s)


def test_purity_functional_matches_monte_carlo():
    rng = np.random.default_rng(3)
    f, G = _group(block_hamiltonian(rng, (2, 1)))
    rho = rand_density(rng, 3)
    mc = haar_average(rho, G, 100_000, seed=1)
    assert abs(invariant_functional("purity", rho, f.structure) - purity(mc)) <= 1e-3


@given(seeds, block_lists)
def test_twirl_properties(seed, blocks):
    rng = np.random.default_rng(seed)
    H = block_hamiltonian(rng, blocks)
    f, G = _group(H)
    rho = rand_density(rng, f.dim, rank=1 + seed % f.dim)
    T = twirl(rho, f.structure)
    V = sample_haar(G, seed)
    assert np.linalg.norm(twirl(T, f.structure) - T) <= 1e-12
    assert np.linalg.norm(twirl(act(V, rho), f.structure) - T) <= 1e-10
    assert abs(np.trace(T).real - 1) <= 1e-12
    assert np.linalg.norm(T @ H - H @ T) <= 1e-9
    S = gauge_entropy(rho, f.structure)
    assert S >= von_neumann_entropy(rho) - 1e-9
    assert abs(gauge_entropy(act(V, rho), f.structure) - S) <= 1e-9
    w = np.array([np.trace(P @ rho).real for P in f.structure.projectors])
    w = w[w > 1e-14]
    assert -np.sum(w * np.log(w)) - 1e-9 <= S <= np.log(f.dim) + 1e-9
    assert S == pytest.approx(von_neumann_entropy(T), abs=1e-10)
    assert gauge_entropies(np.stack([rho, T]), [f, f]) == pytest.approx([S, S], abs=1e-12)


def test_gauge_entropy_rejects_non_states():
    qubit = eigenframe(SIGMA_Z).structure
    with pytest.raises(InvariantError):
        gauge_entropy(np.diag([0.7, 0.7]), qubit)
    with pytest.raises(DimensionError):
        gauge_entropy(np.eye(3) / 3, qubit)


def test_gauge_entropy_examples(rng):
    qubit = eigenframe(SIGMA_Z).structure
    assert gauge_entropy(PLUS, qubit) == pytest.approx(np.log(2), abs=1e-10)
    assert gauge_entropy(np.diag([0.75, 0.25]), qubit) == pytest.approx(0.562335, abs=1e-6)
    for d in (2, 3, 5):
        assert gauge_entropy(rand_density(rng, d), eigenframe(np.eye(d)).structure) == pytest.approx(np.log(d), abs=1e-10)


def test_invariant_functional_registry(rng):
    qubit = eigenframe(SIGMA_Z).structure
    assert invariant_functional("purity", PLUS, qubit) == pytest.approx(0.5)
    rho = rand_density(rng, 2)
    assert invariant_functional("von_neumann_entropy", rho, qubit) == pytest.approx(gauge_entropy(rho, qubit), abs=1e-12)
    assert invariant_functional("pnorm_1", rho, qubit) == pytest.approx(1.0)
    assert invariant_functional("pnorm_2", PLUS, qubit) == pytest.approx(np.sqrt(0.5))
    assert invariant_functional("pnorm_inf", PLUS, qubit) == pytest.approx(0.5)
    with pytest.raises(ThermoGaugeError, match="unregistered"):
        invariant_functional("free_energy", rho, qubit)


def test_gauge_path_respects_each_structure():
    H = np.stack([np.diag([0.0, 1.0, 2.0]), np.diag([0.0, 0.0, 2.0]), np.diag([1.0, 1.0, 1.0])])
    frames = [eigenframe(h) for h in H]
    V = sample_gauge_path(frames, seed=4)
    for h, v, f in zip(H, V, frames):
        assert np.linalg.norm(v @ h - h @ v) <= 1e-12
        assert np.linalg.norm(v.conj().T @ v - np.eye(3)) <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_small_block_factor_matches_rephased_qr(n):
    z = np.random.default_rng(n).standard_normal((50, n, n)) + 1j * np.random.default_rng(n + 9).standard_normal((50, n, n))
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    assert np.max(np.abs(_gram_schmidt(z) - q * (diag / np.abs(diag))[:, None, :])) < 1e-12
