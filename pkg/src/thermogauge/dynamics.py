"""Driven closed-system trajectories on a uniform time grid.

``build_family`` and the per-point eigendecompositions are independent across
grid points; ``evolve_closed`` and the frame-alignment sweep are strictly
sequential.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np

from .operators import (
    PAULI,
    DimensionError,
    InvariantError,
    ThermoGaugeError,
    as_hermitian,
    as_matrix,
    ket_projector,
    purity,
    skew_exp,
    validate_density,
)
from .spectral import (
    DEFAULT_CLUSTER_TOL,
    EigenFrame,
    cluster_degeneracies,
    eigendecompose,
    gauge_potentials,
    link_potentials,
    link_variables,
    track_frames,
    transport_to_nodes,
    transported_covariant_derivatives,
)

log = logging.getLogger(__name__)

FAMILIES = ("constant", "rotating_qubit", "amplitude_drive", "landau_zener", "piecewise_quench", "custom_grid")

NAMED_MATRICES = {
    "sigma_x": PAULI["X"],
    "sigma_y": PAULI["Y"],
    "sigma_z": PAULI["Z"],
    "identity_2": PAULI["I"],
}


def matrix_from_literal(value) -> np.ndarray:
    """Parse a matrix given as a name, an ndarray, or nested ``[re, im]`` pairs.

    A nested list of shape ``(d, d, 2)`` is read row-major as ``[re, im]``
    pairs; shape ``(d, d)`` is read as a real matrix.
    """
    if isinstance(value, str):
        try:
            return NAMED_MATRICES[value].copy()
        except KeyError:
            raise ValueError(f"unknown named matrix {value!r}; known: {sorted(NAMED_MATRICES)}") from None
    if isinstance(value, np.ndarray) and np.iscomplexobj(value):
        return as_matrix(value)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return as_matrix(arr[..., 0] + 1j * arr[..., 1])
    return as_matrix(arr)


def matrix_to_literal(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


@dataclass(frozen=True)
class HamiltonianFamilySpec:
    """A named Hamiltonian family and its parameters.

    ``params`` per family:

    * ``constant``: ``matrix``
    * ``rotating_qubit``: ``omega``, ``nu`` for ``(omega/2)(cos(nu t) Z + sin(nu t) X)``
    * ``amplitude_drive``: ``coefficients`` (ascending polynomial powers) and
      ``direction``, or a list ``terms`` of such pairs; optional ``base``
    * ``landau_zener``: ``delta``, ``v``, optional ``t0`` for ``delta X + v (t - t0) Z``
    * ``piecewise_quench``: ``segments``, a list of ``{t_switch, matrix}``
    * ``custom_grid``: ``matrices``, one per grid point
    """

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown Hamiltonian family {self.family!r}; known: {list(FAMILIES)}")


def _poly(coefficients: Sequence[float], t: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(t, np.asarray(coefficients, dtype=float))


def _drive_terms(params: dict) -> list[tuple[Sequence[float], np.ndarray]]:
    if "terms" in params:
        return [(term["coefficients"], matrix_from_literal(term["direction"])) for term in params["terms"]]
    return [(params["coefficients"], matrix_from_literal(params["direction"]))]


def _require_finite(params: dict, *names: str) -> list[float]:
    out = []
    for name in names:
        x = float(params[name])
        if not np.isfinite(x):
            raise ValueError(f"parameter {name} must be finite, got {x}")
        out.append(x)
    return out


def build_family(spec: HamiltonianFamilySpec, times) -> np.ndarray:
    """Evaluate the family on the grid; returns an ``(N+1, d, d)`` Hermitian stack."""
    t = np.asarray(times, dtype=float)
    p = spec.params
    X, Z = PAULI["X"], PAULI["Z"]
    if spec.family == "constant":
        H = as_hermitian(matrix_from_literal(p["matrix"]))
        out = np.broadcast_to(H, (len(t),) + H.shape).copy()
    elif spec.family == "rotating_qubit":
        omega, nu = _require_finite(p, "omega", "nu")
        c, s = np.cos(nu * t), np.sin(nu * t)
        out = 0.5 * omega * (c[:, None, None] * Z + s[:, None, None] * X)
    elif spec.family == "amplitude_drive":
        terms = _drive_terms(p)
        d = terms[0][1].shape[0]
        base = as_hermitian(matrix_from_literal(p["base"])) if p.get("base") is not None else np.zeros((d, d), complex)
        out = np.broadcast_to(base, (len(t), d, d)).copy()
        for coeffs, direction in terms:
            out += _poly(coeffs, t)[:, None, None] * as_hermitian(direction)
    elif spec.family == "landau_zener":
        delta, v = _require_finite(p, "delta", "v")
        t0 = float(p.get("t0", 0.0))
        out = delta * X + (v * (t - t0))[:, None, None] * Z
    elif spec.family == "piecewise_quench":
        segments = p["segments"]
        switches = np.array([float(seg["t_switch"]) for seg in segments])
        if np.any(np.diff(switches) <= 0):
            raise ValueError("piecewise_quench switch times must be strictly increasing")
        mats = [as_hermitian(matrix_from_literal(seg["matrix"])) for seg in segments]
        slack = 1e-12 * max(1.0, float(np.max(np.abs(t))))
        if len(t) and switches[0] > t[0] + slack:
            raise ValueError("the first piecewise_quench segment must start at or before the first grid time")
        which = np.searchsorted(switches, t + slack, side="right") - 1
        out = np.stack([mats[k] for k in which])
    else:  # custom_grid
        mats = [as_hermitian(matrix_from_literal(m)) for m in p["matrices"]]
        if len(mats) != len(t):
            raise DimensionError(f"custom_grid has {len(mats)} matrices for {len(t)} grid points")
        out = np.stack(mats)
    return np.ascontiguousarray(out, dtype=complex)


def family_derivative(spec: HamiltonianFamilySpec, times) -> np.ndarray | None:
    """Exact ``dH/dt`` on the grid, or ``None`` for families known only by samples.

    Piecewise-constant families return zero everywhere (the switches are not
    differentiable and are excluded by the caller).
    """
    t = np.asarray(times, dtype=float)
    p = spec.params
    X, Z = PAULI["X"], PAULI["Z"]
    if spec.family == "rotating_qubit":
        omega, nu = _require_finite(p, "omega", "nu")
        c, s = np.cos(nu * t), np.sin(nu * t)
        return 0.5 * omega * nu * (-s[:, None, None] * Z + c[:, None, None] * X)
    if spec.family == "amplitude_drive":
        terms = _drive_terms(p)
        d = terms[0][1].shape[0]
        out = np.zeros((len(t), d, d), dtype=complex)
        for coeffs, direction in terms:
            dc = np.polynomial.polynomial.polyder(np.asarray(coeffs, dtype=float))
            out += _poly(dc, t)[:, None, None] * as_hermitian(direction)
        return out
    if spec.family == "landau_zener":
        _delta, v = _require_finite(p, "delta", "v")
        return np.broadcast_to(v * Z, (len(t), 2, 2)).astype(complex)
    if spec.family in ("constant", "piecewise_quench"):
        H = build_family(spec, t[:1])
        return np.zeros((len(t),) + H.shape[1:], dtype=complex)
    return None


def evolve_closed(hamiltonians, rho0, dt: float) -> np.ndarray:
    """Unitary evolution with the midpoint-Hamiltonian exact-exponential stepper."""
    H = np.asarray(hamiltonians, dtype=complex)
    rho = validate_density(rho0)
    if rho.shape != H.shape[1:]:
        raise DimensionError(f"initial state {rho.shape} does not match Hamiltonians {H.shape[1:]}")
    states = np.empty_like(H)
    states[0] = rho
    w, v = np.linalg.eigh(0.5 * (H[1:] + H[:-1]))
    props = (v * np.exp(-1j * dt * w)[:, None, :]) @ np.conj(np.swapaxes(v, -1, -2))
    for i, U in enumerate(props):
        rho = U @ rho @ U.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        states[i + 1] = rho
    drift = abs(purity(states[-1]) - purity(states[0]))
    if drift > 1e-9:
        raise InvariantError(f"purity drifted by {drift:.3e} during unitary evolution")
    return states


@dataclass(frozen=True)
class IntervalPartition:
    """Grid points where the degeneracy signature changes, and the signature of each interval."""

    boundary_indices: tuple[int, ...]
    boundaries: tuple[float, ...]
    signatures: tuple[tuple[int, ...], ...]

    def interval_slices(self, n_points: int) -> list[slice]:
        edges = [0, *self.boundary_indices, n_points]
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def to_dict(self) -> dict:
        return {
            "boundary_indices": list(self.boundary_indices),
            "boundaries": list(self.boundaries),
            "signatures": [list(s) for s in self.signatures],
        }


def partition_from_signatures(signatures: Sequence[tuple[int, ...]], times=None) -> IntervalPartition:
    t = np.arange(len(signatures), dtype=float) if times is None else np.asarray(times, dtype=float)
    idx = [i for i in range(1, len(signatures)) if signatures[i] != signatures[i - 1]]
    sigs = [tuple(signatures[0])] + [tuple(signatures[i]) for i in idx] if len(signatures) else []
    return IntervalPartition(tuple(idx), tuple(float(t[i]) for i in idx), tuple(sigs))


def detect_degeneracy_changes(hamiltonians, tol: float = DEFAULT_CLUSTER_TOL, times=None) -> IntervalPartition:
    """Split the grid wherever the block-dimension signature of ``H`` changes.

    A boundary is placed on every grid point whose signature differs from its
    predecessor's. Boundaries are reported as indices and, when ``times`` is
    given, as times (otherwise the index doubles as the time).
    """
    sigs = [cluster_degeneracies(eigendecompose(H)[0], tol).signature for H in hamiltonians]
    return partition_from_signatures(sigs, times)


@dataclass(frozen=True, eq=False)
class TrajectoryGrid:
    times: np.ndarray
    hamiltonians: np.ndarray
    states: np.ndarray
    frames: tuple[EigenFrame, ...]
    potentials: np.ndarray
    partition: IntervalPartition
    cluster_tol: float = DEFAULT_CLUSTER_TOL

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dim(self) -> int:
        return self.hamiltonians.shape[-1]

    @property
    def structures(self):
        return [f.structure for f in self.frames]

    @cached_property
    def frame_array(self) -> np.ndarray:
        """Frames stacked as an ``(N+1, d, d)`` array."""
        return _frozen(np.stack([f.frame for f in self.frames]))

    @cached_property
    def links(self) -> np.ndarray:
        """Half-step frame transports between neighbouring grid points, ``(N, d, d)``."""
        return _frozen(link_variables(self.frame_array))

    @cached_property
    def midpoint_potentials(self) -> np.ndarray:
        """Gauge potential at the interval midpoints, ``(N, d, d)``."""
        return _frozen(link_potentials(self.links, self.dt))

    @cached_property
    def _midpoint_H(self) -> tuple[np.ndarray, np.ndarray]:
        D, mean = transported_covariant_derivatives(self.hamiltonians, self.links, self.dt)
        return _frozen(D), _frozen(mean)

    @property
    def midpoint_DH(self) -> np.ndarray:
        """Covariant derivative of the Hamiltonian at the interval midpoints."""
        return self._midpoint_H[0]

    @property
    def midpoint_H(self) -> np.ndarray:
        """Hamiltonian transported to and averaged at the interval midpoints."""
        return self._midpoint_H[1]

    @cached_property
    def energy_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Node operators ``(K_W, K_Q)`` with ``W = sum_i Tr(rho_i K_W[i])`` and likewise ``Q``.

        The midpoint sums regrouped by grid point; they depend only on the
        Hamiltonians and frames, so trajectories that differ only in their
        states share them.
        """
        S = self.links
        S_dag = np.conj(np.swapaxes(S, -1, -2))
        weights = np.ones(len(self.times))
        weights[[0, -1]] = 0.5
        K_W = self.dt * weights[:, None, None] * transport_to_nodes(self.midpoint_DH, S)
        Hbar = self.midpoint_H
        K_Q = np.zeros_like(K_W)
        K_Q[1:] += S @ Hbar @ S_dag
        K_Q[:-1] -= S_dag @ Hbar @ S
        return _frozen(K_W), _frozen(K_Q)

    def frame_stack(self) -> np.ndarray:
        return self.frame_array

    def with_states(self, states) -> "TrajectoryGrid":
        """Same Hamiltonians and frames, different state trajectory."""
        states = _frozen(np.asarray(states, dtype=complex))
        if states.shape != self.hamiltonians.shape:
            raise DimensionError(f"states of shape {states.shape} do not match the grid {self.hamiltonians.shape}")
        out = TrajectoryGrid(self.times, self.hamiltonians, states, self.frames, self.potentials, self.partition, self.cluster_tol)
        # frame-derived caches carry over unchanged
        for name in ("frame_array", "links", "midpoint_potentials", "_midpoint_H", "energy_weights"):
            if name in self.__dict__:
                out.__dict__[name] = self.__dict__[name]
        return out

    def with_frames(self, frames: Sequence[EigenFrame]) -> "TrajectoryGrid":
        """Same process with a different (re-gauged) eigenframe path."""
        frames = tuple(frames)
        if len(frames) != len(self.frames):
            raise DimensionError("frame path length does not match the grid")
        potentials = _frozen(gauge_potentials(frames, self.dt))
        return TrajectoryGrid(self.times, self.hamiltonians, self.states, frames, potentials, self.partition, self.cluster_tol)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


def uniform_grid(n_steps: int, tau: float, t0: float = 0.0) -> np.ndarray:
    if n_steps < 2:
        raise ValueError(f"grid.N must be >= 2, got {n_steps}")
    if not (np.isfinite(tau) and tau > 0):
        raise ValueError(f"grid.tau must be a positive finite number, got {tau}")
    return t0 + np.linspace(0.0, tau, n_steps + 1)


def initial_state(choice, H0, tol: float = DEFAULT_CLUSTER_TOL) -> np.ndarray:
    """Resolve ``ground``, ``maximally_mixed``, ``plus`` or an explicit matrix.

    ``ground`` is the normalised projector onto the lowest eigenspace of
    ``H0``, so a degenerate ground level gives a mixed state.
    """
    H0 = np.asarray(H0, dtype=complex)
    d = H0.shape[0]
    if isinstance(choice, str):
        if choice == "ground":
            w, u = eigendecompose(H0)
            n = cluster_degeneracies(w, tol).multiplicities[0]
            return validate_density(u[:, :n] @ u[:, :n].conj().T / n)
        if choice == "maximally_mixed":
            return np.eye(d, dtype=complex) / d
        if choice == "plus":
            return ket_projector(np.ones(d))
        raise ValueError(f"unknown named state {choice!r}")
    return validate_density(matrix_from_literal(choice))


def trajectory_from_hamiltonians(times, hamiltonians, rho0, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> TrajectoryGrid:
    """Evolve ``rho0`` under a sampled Hamiltonian path and attach frames and potentials."""
    times = np.asarray(times, dtype=float)
    H = np.asarray(hamiltonians, dtype=complex)
    if len(times) < 3:
        raise ValueError("a trajectory needs N >= 2 steps")
    steps = np.diff(times)
    dt = float(steps[0])
    if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(dt)):
        raise ValueError("time grid must be uniform with positive spacing")
    if len(H) != len(times):
        raise DimensionError(f"{len(H)} Hamiltonians for {len(times)} grid points")
    states = evolve_closed(H, rho0, dt)
    frames = tuple(track_frames(H, cluster_tol))
    potentials = gauge_potentials(frames, dt)
    partition = partition_from_signatures([f.structure.signature for f in frames], times)
    return TrajectoryGrid(
        _frozen(times), _frozen(H), _frozen(states), frames, _frozen(potentials), partition, float(cluster_tol)
    )


def assemble_trajectory(
    spec: HamiltonianFamilySpec, rho0, n_steps: int, tau: float, cluster_tol: float = DEFAULT_CLUSTER_TOL
) -> TrajectoryGrid:
    times = uniform_grid(n_steps, tau)
    H = build_family(spec, times)
    rho = initial_state(rho0, H[0], cluster_tol)
    log.debug("assembling %s trajectory: d=%d N=%d tau=%g", spec.family, H.shape[-1], n_steps, tau)
    return trajectory_from_hamiltonians(times, H, rho, cluster_tol)


def random_hermitian(rng: np.random.Generator, d: int, norm: float = 1.0) -> np.ndarray:
    """GUE-like Hermitian matrix rescaled to Frobenius norm ``norm``."""
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    H = 0.5 * (A + A.conj().T)
    return H * (norm / np.linalg.norm(H))


def min_gap(hamiltonians) -> float:
    w = np.linalg.eigvalsh(np.asarray(hamiltonians))
    return float(np.min(np.diff(w, axis=-1))) if w.shape[-1] > 1 else np.inf


def random_drive_spec(
    rng: np.random.Generator, d: int, tau: float, n_terms: int = 2, degree: int = 3, min_gap_allowed: float = 0.2
) -> HamiltonianFamilySpec:
    """A smooth random ``amplitude_drive`` family with a guaranteed spectral gap.

    The base spectrum is spread evenly (spacing 1) and rotated by a random
    unitary; drives perturb it with random polynomial amplitudes. Draws whose
    gap closes below ``min_gap_allowed`` on ``[0, tau]`` are rejected so the
    eigenframe stays smooth at desk-scale grid resolution.
    """
    for _ in range(100):
        q, _r = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
        levels = np.arange(d) - 0.5 * (d - 1) + rng.uniform(-0.1, 0.1, d)
        base = (q * levels) @ q.conj().T
        terms = []
        for _k in range(n_terms):
            coeffs = rng.uniform(-1, 1, degree + 1) * (0.25 / np.maximum(1.0, tau) ** np.arange(degree + 1))
            terms.append({"coefficients": [float(c) for c in coeffs], "direction": matrix_to_literal(random_hermitian(rng, d, 1.0))})
        spec = HamiltonianFamilySpec("amplitude_drive", {"base": matrix_to_literal(base), "terms": terms})
        probe = build_family(spec, np.linspace(0.0, tau, 201))
        if min_gap(probe) >= min_gap_allowed:
            return spec
    raise ThermoGaugeError("could not draw a gapped random family; lower min_gap_allowed")


def rotated_spectrum_hamiltonians(
    rng: np.random.Generator, times, block_dims: Sequence[int], spacing: float = 1.0, wobble: float = 0.15
) -> np.ndarray:
    """``W(t) D(t) W(t)^dag`` with block-degenerate ``D`` and a smooth rotating ``W``.

    ``W(t) = exp(-i (t K1 + t^2 K2 / 2))`` with random Hermitian generators;
    level ``k`` of ``D`` is ``k * spacing + wobble * sin(f_k t + phi_k)`` and is
    repeated ``block_dims[k]`` times, so the degeneracy pattern is fixed.
    """
    t = np.asarray(times, dtype=float)
    d = int(sum(block_dims))
    K1 = random_hermitian(rng, d, 1.0)
    K2 = random_hermitian(rng, d, 0.5)
    k = len(block_dims)
    freq = rng.uniform(0.5, 1.5, k)
    phase = rng.uniform(0, 2 * np.pi, k)
    out = np.empty((len(t), d, d), dtype=complex)
    reps = np.asarray(block_dims)
    for i, ti in enumerate(t):
        levels = spacing * np.arange(k) + wobble * np.sin(freq * ti + phase)
        W = skew_exp(K1 * ti + 0.5 * K2 * ti**2, 1.0)
        out[i] = (W * np.repeat(levels, reps)) @ W.conj().T
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
