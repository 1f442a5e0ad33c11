import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from conftest import rand_density, rand_hermitian, seeds
from thermogauge.operators import SIGMA_X, SIGMA_Y, SIGMA_Z, DimensionError, ket_projector, purity
from thermogauge.dynamics import (
    HamiltonianFamilySpec,
    assemble_trajectory,
    build_family,
    detect_degeneracy_changes,
    evolve_closed,
    family_derivative,
    initial_state,
    matrix_from_literal,
    matrix_to_literal,
    min_gap,
    random_drive_spec,
    rotated_spectrum_hamiltonians,
    trajectory_from_hamiltonians,
    uniform_grid,
)

PLUS = ket_projector([1, 1])
ROT = HamiltonianFamilySpec("rotating_qubit", {"omega": 1.0, "nu": 0.3})


def quench(t_switch, after="identity_2"):
    return HamiltonianFamilySpec(
        "piecewise_quench", {"segments": [{"t_switch": 0.0, "matrix": "sigma_z"}, {"t_switch": t_switch, "matrix": after}]}
    )


def test_literals_round_trip(rng):
    M = rand_hermitian(rng, 3)
    assert np.array_equal(matrix_from_literal(matrix_to_literal(M)), M)
    assert np.array_equal(matrix_from_literal("sigma_y"), SIGMA_Y)
    assert np.array_equal(matrix_from_literal([[1, 0], [0, -1]]), SIGMA_Z)
    with pytest.raises(ValueError):
        matrix_from_literal("sigma_w")


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown Hamiltonian family"):
        HamiltonianFamilySpec("harmonic", {})


def test_build_family_closed_forms():
    t = uniform_grid(100, 5.0)
    H = build_family(HamiltonianFamilySpec("constant", {"matrix": "sigma_z"}), t)
    assert H.shape == (101, 2, 2) and np.all(H == SIGMA_Z)
    H = build_family(ROT, t)
    for ti, Hi in zip(t, H):
        assert np.allclose(Hi, 0.5 * (np.cos(0.3 * ti) * SIGMA_Z + np.sin(0.3 * ti) * SIGMA_X))
    lz = HamiltonianFamilySpec("landau_zener", {"delta": 0.5, "v": 2.0})
    H = build_family(lz, t)
    assert np.allclose(H[7], 0.5 * SIGMA_X + 2.0 * t[7] * SIGMA_Z)
    gaps = np.diff(np.linalg.eigvalsh(H), axis=-1)[:, 0]
    assert np.allclose(gaps**2, 4 * (0.25 + 4 * t**2))


def test_amplitude_drive_terms():
    t = np.linspace(0, 1, 5)
    spec = HamiltonianFamilySpec(
        "amplitude_drive",
        {"base": "sigma_x", "terms": [{"coefficients": [1, 2], "direction": "sigma_z"}, {"coefficients": [0, 0, 3], "direction": "sigma_y"}]},
    )
    H = build_family(spec, t)
    assert np.allclose(H[3], SIGMA_X + (1 + 2 * t[3]) * SIGMA_Z + 3 * t[3] ** 2 * SIGMA_Y)


def test_family_parameter_errors():
    t = uniform_grid(4, 1.0)
    with pytest.raises(ValueError, match="finite"):
        build_family(HamiltonianFamilySpec("rotating_qubit", {"omega": float("inf"), "nu": 1}), t)
    with pytest.raises(ValueError, match="strictly increasing"):
        build_family(
            HamiltonianFamilySpec(
                "piecewise_quench", {"segments": [{"t_switch": 0.5, "matrix": "sigma_z"}, {"t_switch": 0.5, "matrix": "sigma_x"}]}
            ),
            t,
        )
    with pytest.raises(DimensionError):
        build_family(HamiltonianFamilySpec("custom_grid", {"matrices": ["sigma_z"] * 3}), t)
    with pytest.raises(ValueError, match="grid.N"):
        uniform_grid(1, 1.0)


@pytest.mark.parametrize(
    "spec",
    [
        ROT,
        HamiltonianFamilySpec("landau_zener", {"delta": 0.4, "v": 1.5, "t0": 0.2}),
        HamiltonianFamilySpec("amplitude_drive", {"base": "sigma_x", "coefficients": [0.5, 0.2, -0.1, 0.05], "direction": "sigma_z"}),
    ],
)
def test_family_derivative_matches_finite_differences(spec):
    t = np.linspace(0, 2, 2001)
    H = build_family(spec, t)
    fd = np.gradient(H, t[1] - t[0], axis=0, edge_order=2)
    assert np.max(np.abs(family_derivative(spec, t) - fd)) <= 1e-5


def test_custom_grid_has_no_derivative():
    spec = HamiltonianFamilySpec("custom_grid", {"matrices": ["sigma_z"] * 3})
    assert family_derivative(spec, np.arange(3.0)) is None


def test_evolve_constant_sigma_z_coherence():
    t = uniform_grid(1000, 3.0)
    H = build_family(HamiltonianFamilySpec("constant", {"matrix": "sigma_z"}), t)
    states = evolve_closed(H, PLUS, t[1] - t[0])
    # exp(-i t Z) |+><+| exp(i t Z): the (0, 1) element is exp(-2 i t) / 2
    assert np.allclose(states[:, 0, 1], 0.5 * np.exp(-2j * t), atol=1e-12)
    ground = np.diag([0.0, 1.0])
    assert np.allclose(evolve_closed(H, ground, t[1] - t[0]), ground)


@given(seeds, st.integers(2, 5))
def test_evolution_is_unitary(seed, d):
    rng = np.random.default_rng(seed)
    K0, K1 = rand_hermitian(rng, d, 2.0), rand_hermitian(rng, d, 2.0)
    t = np.linspace(0, 1, 101)
    H = np.stack([K0 + np.cos(3 * ti) * K1 for ti in t])
    rho0 = rand_density(rng, d, rank=1 + seed % d)
    states = evolve_closed(H, rho0, t[1] - t[0])
    assert abs(purity(states[-1]) - purity(rho0)) <= 1e-9
    ev0 = np.linalg.eigvalsh(rho0)
    assert np.max(np.abs(np.linalg.eigvalsh(states) - ev0)) <= 1e-8


def test_stepper_matches_expm_oracle(rng):
    H = np.stack([rand_hermitian(rng, 3) for _ in range(4)])
    rho0 = rand_density(rng, 3)
    dt = 0.1
    states = evolve_closed(H, rho0, dt)
    rho = rho0
    for i in range(3):
        U = scipy.linalg.expm(-1j * dt * 0.5 * (H[i] + H[i + 1]))
        rho = U @ rho @ U.conj().T
        assert np.allclose(states[i + 1], rho, atol=1e-13)


def test_stepper_second_order_richardson():
    def final(N):
        t = uniform_grid(N, 5.0)
        return evolve_closed(build_family(ROT, t), np.diag([0.0, 1.0]), t[1] - t[0])[-1]

    r = [final(N) for N in (100, 200, 400, 800)]
    ref = (4 * r[3] - r[2]) / 3
    e = [np.linalg.norm(x - ref) for x in r[:3]]
    assert 3.5 < e[0] / e[1] < 4.5 and 3.5 < e[1] / e[2] < 4.6


def test_initial_states():
    assert np.allclose(initial_state("ground", SIGMA_Z), np.diag([0.0, 1.0]))
    assert np.allclose(initial_state("maximally_mixed", np.eye(3)), np.eye(3) / 3)
    assert np.allclose(initial_state("plus", SIGMA_Z), PLUS)
    assert np.allclose(initial_state("ground", np.diag([0.0, 0.0, 1.0])), np.diag([0.5, 0.5, 0.0]))
    assert np.allclose(initial_state([[0.5, 0], [0, 0.5]], SIGMA_Z), np.eye(2) / 2)
    with pytest.raises(ValueError):
        initial_state("thermal", SIGMA_Z)


def test_detect_degeneracy_examples():
    t = uniform_grid(50, 1.0)
    assert detect_degeneracy_changes(build_family(HamiltonianFamilySpec("constant", {"matrix": "sigma_z"}), t)).boundary_indices == ()
    assert detect_degeneracy_changes(build_family(ROT, t)).boundary_indices == ()
    t = np.linspace(-1, 1, 21) + 0.01
    part = detect_degeneracy_changes(t[:, None, None] * SIGMA_Z, tol=0.02, times=t)
    k = int(np.argmin(np.abs(t)))
    assert part.boundary_indices == (k, k + 1)
    assert part.signatures == ((1, 1), (2,), (1, 1))
    assert part.boundaries == (t[k], t[k + 1])


def test_assemble_rotating_qubit_potential():
    traj = assemble_trajectory(ROT, "ground", 2000, 10.0)
    err = np.max(np.abs(np.asarray(traj.potentials)[1:-1] - 0.15 * SIGMA_Y))
    assert err <= 1e-6
    assert traj.dt == pytest.approx(0.005)
    assert traj.partition.boundary_indices == ()


def test_assemble_constant_has_zero_potential():
    traj = assemble_trajectory(HamiltonianFamilySpec("constant", {"matrix": [[1, 0.2], [0.2, -1]]}), "plus", 20, 1.0)
    assert np.max(np.abs(traj.potentials)) <= 1e-12


@pytest.mark.parametrize("N", [40, 80, 160])
def test_quench_partition_boundary_on_switch(N):
    traj = assemble_trajectory(quench(0.5), "plus", N, 1.0)
    assert traj.partition.boundary_indices == (N // 2,)
    assert traj.partition.signatures == ((1, 1), (2,))


def test_quench_partition_off_grid_switch_refines():
    coarse = assemble_trajectory(quench(0.33), "plus", 10, 1.0).partition
    fine = assemble_trajectory(quench(0.33), "plus", 20, 1.0).partition
    assert len(coarse.boundary_indices) == len(fine.boundary_indices) == 1
    assert abs(fine.boundaries[0] - 0.33) <= abs(coarse.boundaries[0] - 0.33)
    assert fine.boundaries[0] >= 0.33


def test_trajectory_grid_checks(rng):
    H = np.stack([SIGMA_Z] * 4)
    with pytest.raises(ValueError, match="uniform"):
        trajectory_from_hamiltonians([0, 1, 2, 4], H, PLUS)
    with pytest.raises(DimensionError):
        trajectory_from_hamiltonians([0, 1, 2], H, PLUS)


def test_with_states_keeps_geometry(rng):
    traj = assemble_trajectory(ROT, "ground", 50, 1.0)
    other = traj.with_states(np.stack([np.eye(2) / 2] * 51))
    assert other.frames is traj.frames
    assert np.array_equal(other.midpoint_DH, traj.midpoint_DH)


@given(seeds, st.sampled_from([2, 3, 4]))
def test_random_drive_is_gapped(seed, d):
    spec = random_drive_spec(np.random.default_rng(seed), d, 2.0)
    assert min_gap(build_family(spec, np.linspace(0, 2, 401))) >= 0.19


def test_rotated_spectrum_keeps_blocks(rng):
    t = np.linspace(0, 1, 11)
    H = rotated_spectrum_hamiltonians(rng, t, (2, 1, 3))
    assert detect_degeneracy_changes(H).signatures == ((2, 1, 3),)
