"""Invariant work, heat and the first-law ledger along a trajectory.

Quadrature
----------
Each interval carries a half-step transport ``S_i = (u_{i+1} u_i^dag)^{1/2}``
between neighbouring eigenframes. Both endpoint values are moved to the
midpoint frame and differenced there::

    D X_{i+1/2} = (S^dag X_{i+1} S - S X_i S^dag) / dt

which tends to ``X' + i [A, X]``. Work pairs ``D H`` with the transported mean
of ``rho``, heat pairs ``D rho`` with the transported mean of ``H``. The product
rule then makes every step telescope, so ``W + Q = U_N - U_0`` holds to
rounding. Because ``D H = u_m (Lambda_{i+1} - Lambda_i) u_m^dag / dt`` exactly,
the work equals the populations times the eigenvalue increments, and block
gauge changes of the frame or the state leave it untouched at any ``dt``.
Regrouped by grid point the sum is a composite trapezoid over the node
powers returned by :func:`work_power` and :func:`heat_power`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntervalPartition, TrajectoryGrid
from .operators import InvariantError, ThermoGaugeError
from .spectral import time_derivative, transport_to_nodes, transported_covariant_derivatives
from .thermo_group import gauge_entropies

IMAG_TOL = 1e-9


class FirstLawError(ThermoGaugeError):
    def __init__(self, message: str, residual: float, tolerance: float, index: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.tolerance = tolerance
        self.index = index


def _mid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a[1:] + a[:-1])


def _traces(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Real ``Tr(X_i Y_i)`` over a stack, asserting the imaginary parts vanish."""
    t = np.einsum("nij,nji->n", X, Y)
    if np.all(np.abs(t.imag) <= IMAG_TOL):
        return t.real
    bound = IMAG_TOL * np.maximum(1.0, np.linalg.norm(X, axis=(1, 2)) * np.linalg.norm(Y, axis=(1, 2)))
    bad = np.abs(t.imag) > bound
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvariantError(f"integrand has imaginary part {t.imag[i]:.3e} at step {i}")
    return t.real


def trapezoid(values, dt: float) -> float:
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v)
    w[0] = w[-1] = 0.5
    return float(np.sum(w * v) * dt)


def _state_transport(traj: TrajectoryGrid) -> tuple[np.ndarray, np.ndarray]:
    """``(D rho, rho_bar)`` at every interval midpoint."""
    return transported_covariant_derivatives(traj.states, traj.links, traj.dt)


def _work_mid(traj: TrajectoryGrid, rho_bar=None) -> np.ndarray:
    rho_bar = _state_transport(traj)[1] if rho_bar is None else rho_bar
    return _traces(rho_bar, traj.midpoint_DH)


def _drho_mid(traj: TrajectoryGrid) -> np.ndarray:
    return _state_transport(traj)[0]


def _heat_mid(traj: TrajectoryGrid, drho_mid=None) -> np.ndarray:
    drho = _drho_mid(traj) if drho_mid is None else drho_mid
    return _traces(traj.midpoint_H, drho)


def work_power(traj: TrajectoryGrid) -> np.ndarray:
    """Node values of ``Tr(rho D H)``; their trapezoid integral is :func:`invariant_work`."""
    return _traces(np.asarray(traj.states), transport_to_nodes(traj.midpoint_DH, traj.links))


def heat_power(traj: TrajectoryGrid) -> np.ndarray:
    """Node values of ``Tr(H D rho)``; their trapezoid integral is :func:`invariant_heat`."""
    return _traces(np.asarray(traj.hamiltonians), transport_to_nodes(_drho_mid(traj), traj.links))


def invariant_work(traj: TrajectoryGrid) -> float:
    return float(np.sum(_traces(np.asarray(traj.states), traj.energy_weights[0])))


def invariant_heat(traj: TrajectoryGrid) -> float:
    return float(np.sum(_traces(np.asarray(traj.states), traj.energy_weights[1])))


def energy_series(traj: TrajectoryGrid) -> np.ndarray:
    return _traces(np.asarray(traj.states), np.asarray(traj.hamiltonians))


def energy_change(traj: TrajectoryGrid) -> float:
    U = energy_series(traj)
    return float(U[-1] - U[0])


def work_spectral_oracle(traj: TrajectoryGrid, quadrature: str = "staggered") -> float:
    """``int sum_i <e_i|rho|e_i> dlambda_i/dt dt`` in the instantaneous eigenbasis.

    Independent of the potential: populations come from the frame columns and
    the eigenvalue velocities from differences of the spectrum. ``staggered``
    pairs interval eigenvalue increments with averaged populations, the same
    midpoint structure as :func:`invariant_work`; ``nodal`` uses central
    differences at the grid points and the trapezoid rule.
    """
    u = traj.frame_stack()
    pops = np.einsum("nji,njk,nki->ni", u.conj(), traj.states, u).real
    lam = np.stack([f.eigenvalues for f in traj.frames])
    if quadrature == "staggered":
        return float(np.sum(_mid(pops) * np.diff(lam, axis=0)))
    if quadrature == "nodal":
        lam_dot = np.stack([time_derivative(lam, traj.dt, i) for i in range(len(lam))]).real
        return trapezoid(np.sum(pops * lam_dot, axis=1), traj.dt)
    raise ValueError(f"quadrature must be 'staggered' or 'nodal', got {quadrature!r}")


def gauge_entropy_series(traj: TrajectoryGrid) -> np.ndarray:
    return gauge_entropies(traj.states, traj.frames)


@dataclass
class ThermoRecord:
    U_initial: float
    U_final: float
    W_inv: float
    Q_inv: float
    first_law_residual: float
    S_initial: float
    S_final: float
    partition: IntervalPartition
    times: np.ndarray = field(repr=False)
    work_power: np.ndarray = field(repr=False)
    heat_power: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    gauge_entropy: np.ndarray = field(repr=False)
    interval_work: list[float] = field(default_factory=list)
    interval_heat: list[float] = field(default_factory=list)

    @property
    def delta_U(self) -> float:
        return self.U_final - self.U_initial

    @property
    def scale(self) -> float:
        return max(1.0, abs(self.delta_U), abs(self.W_inv), abs(self.Q_inv))

    def to_dict(self) -> dict:
        return {
            "U_initial": self.U_initial,
            "U_final": self.U_final,
            "delta_U": self.delta_U,
            "W_inv": self.W_inv,
            "Q_inv": self.Q_inv,
            "first_law_residual": self.first_law_residual,
            "S_initial": self.S_initial,
            "S_final": self.S_final,
            "interval_work": list(self.interval_work),
            "interval_heat": list(self.interval_heat),
        }

    def csv_rows(self):
        for row in zip(self.times, self.work_power, self.heat_power, self.energy, self.gauge_entropy):
            yield tuple(float(x) for x in row)


CSV_COLUMNS = ("t", "work_power", "heat_power", "U", "S_GT_instant")


def first_law_report(traj: TrajectoryGrid, residual_tol: float = 1e-8) -> ThermoRecord:
    """Assemble the full thermodynamic ledger for a trajectory.

    Integrals are also split over the degeneracy intervals of the partition:
    the step ``[t_i, t_{i+1}]`` is booked to the interval containing ``t_i``,
    so the subtotals add up to the totals.
    """
    dt = traj.dt
    drho, rho_bar = _state_transport(traj)
    work_mid = _work_mid(traj, rho_bar)
    heat_mid = _heat_mid(traj, drho)
    W = float(np.sum(work_mid) * dt)
    Q = float(np.sum(heat_mid) * dt)
    U = energy_series(traj)
    residual = float((U[-1] - U[0]) - (W + Q))

    n_steps = traj.n_steps
    iw, iq = [], []
    for sl in traj.partition.interval_slices(len(traj.times)):
        steps = slice(sl.start, min(sl.stop, n_steps))
        iw.append(float(np.sum(work_mid[steps]) * dt))
        iq.append(float(np.sum(heat_mid[steps]) * dt))

    S = gauge_entropy_series(traj)
    record = ThermoRecord(
        U_initial=float(U[0]),
        U_final=float(U[-1]),
        W_inv=W,
        Q_inv=Q,
        first_law_residual=residual,
        S_initial=float(S[0]),
        S_final=float(S[-1]),
        partition=traj.partition,
        times=np.asarray(traj.times),
        work_power=_traces(np.asarray(traj.states), transport_to_nodes(traj.midpoint_DH, traj.links)),
        heat_power=_traces(np.asarray(traj.hamiltonians), transport_to_nodes(drho, traj.links)),
        energy=U,
        gauge_entropy=S,
        interval_work=iw,
        interval_heat=iq,
    )
    tol = residual_tol * record.scale
    if abs(residual) > tol:
        per_step = np.diff(U) - (work_mid + heat_mid) * dt
        worst = int(np.argmax(np.abs(per_step)))
        raise FirstLawError(
            f"first-law residual {residual:.3e} exceeds {tol:.3e} (largest step defect at grid index {worst}); "
            "the time grid is too coarse",
            residual,
            tol,
            worst,
        )
    return record
