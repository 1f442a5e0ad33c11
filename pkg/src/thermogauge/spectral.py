"""Eigenframes, degeneracy clustering and the gauge potential ``A = i u' u^dag``.

Frames are unitaries whose columns are eigenvectors in ascending eigenvalue
order. Along a time grid they are made continuous by :func:`align_frame`,
which fixes the residual freedom inside each degenerate block by orthogonal
Procrustes against the previous frame; :func:`track_frames` does the same
sweep in batched form. Neighbouring frames are joined by half-step
transports (:func:`link_variables`), which carry operators to interval
midpoints for the covariant differences used by the work and heat integrals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .operators import (
    DimensionError,
    InvariantError,
    ThermoGaugeError,
    as_hermitian,
    commutator,
    scale,
)

DEFAULT_CLUSTER_TOL = 1e-8
MIN_BLOCK_OVERLAP = 0.1


class EigenDecompositionError(ThermoGaugeError):
    def __init__(self, message: str, residual: float, index: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class FrameDiscontinuityError(ThermoGaugeError):
    """Adjacent eigenframes do not overlap; the time grid is too coarse."""

    def __init__(self, message: str, index: int | None = None, overlap: float | None = None):
        super().__init__(message)
        self.index = index
        self.overlap = overlap


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DegeneracyStructure:
    distinct_values: tuple[float, ...]
    multiplicities: tuple[int, ...]
    projectors: tuple[np.ndarray, ...]
    cluster_tol: float

    @property
    def dim(self) -> int:
        return sum(self.multiplicities)

    @property
    def signature(self) -> tuple[int, ...]:
        return self.multiplicities

    def block_slices(self) -> list[slice]:
        edges = np.concatenate([[0], np.cumsum(self.multiplicities)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def block_mask(self) -> np.ndarray:
        """Boolean ``(d, d)`` mask of the block-diagonal pattern in the frame basis."""
        labels = np.repeat(np.arange(len(self.multiplicities)), self.multiplicities)
        return labels[:, None] == labels[None, :]


@dataclass(frozen=True, eq=False)
class EigenFrame:
    frame: np.ndarray
    structure: DegeneracyStructure

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.repeat(self.structure.distinct_values, self.structure.multiplicities)

    @property
    def dim(self) -> int:
        return self.frame.shape[0]


def eigendecompose(H) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and a unitary whose columns are the eigenvectors."""
    H = as_hermitian(H)
    try:
        w, u = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(f"eigensolver failed: {exc}", float("nan")) from exc
    residual = float(np.linalg.norm(H - (u * w) @ u.conj().T))
    if residual > 1e-10 * scale(H):
        raise EigenDecompositionError(f"eigendecomposition residual {residual:.3e} too large", residual)
    return w, u


def cluster_degeneracies(eigenvalues, tol: float = DEFAULT_CLUSTER_TOL, frame=None) -> DegeneracyStructure:
    """Group ascending eigenvalues into degenerate clusters.

    Neighbours merge when their gap is at most ``tol * max(1, |lambda|)``;
    chains of small gaps merge transitively. Projectors are built from the
    columns of ``frame`` (the identity, i.e. the eigenbasis itself, if omitted).
    """
    if not tol > 0:
        raise ValueError(f"cluster tolerance must be positive, got {tol}")
    w = np.asarray(eigenvalues, dtype=float)
    if np.any(np.diff(w) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    d = len(w)
    u = np.eye(d, dtype=complex) if frame is None else np.asarray(frame, dtype=complex)
    if u.shape != (d, d):
        raise DimensionError(f"frame shape {u.shape} does not match {d} eigenvalues")

    groups = [[0]]
    for i in range(1, d):
        ref = max(1.0, abs(w[i - 1]), abs(w[i]))
        if w[i] - w[i - 1] <= tol * ref:
            groups[-1].append(i)
        else:
            groups.append([i])
    values = tuple(float(np.mean(w[g])) for g in groups)
    mults = tuple(len(g) for g in groups)
    projectors = tuple(_readonly(u[:, g] @ u[:, g].conj().T) for g in groups)
    return DegeneracyStructure(values, mults, projectors, float(tol))


def eigenframe(H, tol: float = DEFAULT_CLUSTER_TOL) -> EigenFrame:
    w, u = eigendecompose(H)
    return EigenFrame(_readonly(u), cluster_degeneracies(w, tol, u))


def _polar_unitary(M: np.ndarray) -> tuple[np.ndarray, float]:
    W, s, Zh = np.linalg.svd(M)
    return W @ Zh, float(s.min())


def align_frame(prev: EigenFrame, next_raw, structure: DegeneracyStructure, index: int | None = None) -> EigenFrame:
    """Fix the block gauge of ``next_raw`` so it is closest to ``prev``.

    Each degenerate block of the new frame is right-multiplied by the polar
    factor of ``next_block^dag prev_block``; for 1-dimensional blocks this
    just removes the relative phase.
    """
    nxt = np.asarray(next_raw, dtype=complex)
    if nxt.shape != prev.frame.shape:
        raise DimensionError(f"frame shape mismatch: {prev.frame.shape} vs {nxt.shape}")
    if structure.dim != nxt.shape[0]:
        raise DimensionError("degeneracy structure does not match frame dimension")
    aligned = np.empty_like(nxt)
    for sl in structure.block_slices():
        overlap = nxt[:, sl].conj().T @ prev.frame[:, sl]
        R, smin = _polar_unitary(overlap)
        if smin < MIN_BLOCK_OVERLAP:
            where = "" if index is None else f" at grid index {index}"
            raise FrameDiscontinuityError(
                f"eigenframe jumps{where} (block overlap {smin:.3g} < {MIN_BLOCK_OVERLAP}); "
                "refine the time grid or check for an eigenvalue crossing",
                index=index,
                overlap=smin,
            )
        aligned[:, sl] = nxt[:, sl] @ R
    return EigenFrame(_readonly(aligned), structure)


def _cluster_batch(w: np.ndarray, u: np.ndarray, tol: float) -> list[DegeneracyStructure]:
    """:func:`cluster_degeneracies` for a stack of spectra, batched over points with equal grouping."""
    if not tol > 0:
        raise ValueError(f"cluster tolerance must be positive, got {tol}")
    n, d = w.shape
    ref = np.maximum(1.0, np.maximum(np.abs(w[:, :-1]), np.abs(w[:, 1:])))
    merge = np.diff(w, axis=1) <= tol * ref
    out: list[DegeneracyStructure | None] = [None] * n
    patterns: dict[bytes, list[int]] = {}
    for i in range(n):
        patterns.setdefault(merge[i].tobytes(), []).append(i)
    for key, idx in patterns.items():
        row = merge[idx[0]]
        starts = [0] + [j + 1 for j in range(d - 1) if not row[j]]
        groups = [slice(a, b) for a, b in zip(starts, starts[1:] + [d])]
        ui = u[idx]
        values = [w[idx, g].mean(axis=1) for g in groups]
        projectors = []
        for g in groups:
            P = ui[:, :, g] @ np.conj(np.swapaxes(ui[:, :, g], -1, -2))
            P.setflags(write=False)
            projectors.append(P)
        mults = tuple(g.stop - g.start for g in groups)
        for k, i in enumerate(idx):
            out[i] = DegeneracyStructure(
                tuple(float(v[k]) for v in values), mults, tuple(P[k] for P in projectors), float(tol)
            )
    return out


def _discontinuity(index: int, smin: float) -> FrameDiscontinuityError:
    return FrameDiscontinuityError(
        f"eigenframe jumps at grid index {index} (block overlap {smin:.3g} < {MIN_BLOCK_OVERLAP}); "
        "refine the time grid or check for an eigenvalue crossing",
        index=index,
        overlap=smin,
    )


def _block_polar(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unitary polar factors and smallest singular values of a stack of square blocks."""
    if M.shape[-1] == 1:
        a = np.abs(M[..., 0, 0])
        return M / np.where(a > 0, a, 1.0)[..., None, None], a
    W, sv, Zh = np.linalg.svd(M)
    return W @ Zh, sv.min(axis=-1)


def track_frames(hamiltonians: Sequence, tol: float = DEFAULT_CLUSTER_TOL) -> list[EigenFrame]:
    """Eigendecompose every grid point and align the frames sweep-forward.

    Equivalent to chaining :func:`align_frame`: with ``G_i = u_i^dag u_{i-1}``
    the block rotation obeys ``R_i = polar(G_i R_{i-1})``, which reduces to
    ``polar(G_i) R_{i-1}`` blockwise while the degeneracy signature is fixed,
    so each such run needs one batched SVD and a cumulative product.
    """
    H = np.asarray(hamiltonians, dtype=complex)
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    w, u = np.linalg.eigh(H)
    residual = np.linalg.norm(H - (u * w[:, None, :]) @ np.conj(np.swapaxes(u, -1, -2)), axis=(1, 2))
    bound = 1e-10 * np.maximum(1.0, np.linalg.norm(H, axis=(1, 2)))
    if np.any(residual > bound):
        i = int(np.argmax(residual > bound))
        raise EigenDecompositionError(f"eigendecomposition residual {residual[i]:.3e} too large at grid index {i}", float(residual[i]), i)
    structures = _cluster_batch(w, u, tol)
    n, d = w.shape
    G = np.conj(np.swapaxes(u[1:], -1, -2)) @ u[:-1]
    R = np.zeros((n, d, d), dtype=complex)
    R[0] = np.eye(d)
    i = 1
    while i < n:
        sig = structures[i].multiplicities
        if structures[i - 1].multiplicities != sig:
            overlap = G[i - 1] @ R[i - 1]
            for sl in structures[i].block_slices():
                P, smin = _block_polar(overlap[sl, sl])
                if smin < MIN_BLOCK_OVERLAP:
                    raise _discontinuity(i, float(smin))
                R[i, sl, sl] = P
            i += 1
            continue
        j = i
        while j < n and structures[j].multiplicities == sig:
            j += 1
        for sl in structures[i].block_slices():
            P, smin = _block_polar(G[i - 1 : j - 1, sl, sl])
            bad = smin < MIN_BLOCK_OVERLAP
            if np.any(bad):
                k = int(np.argmax(bad))
                raise _discontinuity(i + k, float(smin[k]))
            if sl.stop - sl.start == 1:
                phase = np.cumprod(P[:, 0, 0]) * R[i - 1, sl.start, sl.start]
                R[i:j, sl, sl] = (phase / np.abs(phase))[:, None, None]
            else:
                acc = R[i - 1, sl, sl]
                for k in range(j - i):
                    acc = P[k] @ acc
                    R[i + k, sl, sl] = acc
        i = j
    aligned = u @ R
    aligned.setflags(write=False)
    return [EigenFrame(aligned[k], structures[k]) for k in range(n)]


def frame_stack(frames) -> np.ndarray:
    if isinstance(frames, np.ndarray):
        return frames
    return np.stack([_as_frame(f) for f in frames])


def time_derivative(series, dt: float, index: int) -> np.ndarray:
    """Second-order finite-difference derivative of a matrix series at ``index``.

    Central at interior points, three-point one-sided at the ends (two-point
    if the series has only two entries).
    """
    n = len(series)
    if n < 2:
        raise ValueError("need at least 2 grid points for a time derivative")
    if not 0 <= index < n:
        raise IndexError(f"grid index {index} out of range for {n} points")
    x = lambda k: np.asarray(series[k], dtype=complex)  # noqa: E731
    if 0 < index < n - 1:
        return (x(index + 1) - x(index - 1)) / (2 * dt)
    if n == 2:
        return (x(1) - x(0)) / dt
    if index == 0:
        return (-3 * x(0) + 4 * x(1) - x(2)) / (2 * dt)
    return (3 * x(n - 1) - 4 * x(n - 2) + x(n - 3)) / (2 * dt)


class _LazySeq:
    """Read-only sequence applying ``fn`` to the entries of ``items`` on access."""

    def __init__(self, items, fn):
        self._items = items
        self._fn = fn

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int):
        return self._fn(self._items[i])


def _as_frame(f) -> np.ndarray:
    return f.frame if isinstance(f, EigenFrame) else np.asarray(f, dtype=complex)


def gauge_potential(frames, dt: float, index: int) -> np.ndarray:
    """Hermitian part of ``i u' u^dag`` at one grid point of aligned frames."""
    view = _LazySeq(frames, _as_frame)
    du = time_derivative(view, dt, index)
    M = 1j * du @ view[index].conj().T
    return 0.5 * (M + M.conj().T)


def gauge_potentials(frames, dt: float) -> np.ndarray:
    """:func:`gauge_potential` at every grid point, vectorised."""
    u = frame_stack(frames)
    if len(u) < 2:
        raise ValueError("need at least 2 frames to differentiate")
    du = np.empty_like(u)
    if len(u) == 2:
        du[:] = (u[1] - u[0]) / dt
    else:
        du[1:-1] = (u[2:] - u[:-2]) / (2 * dt)
        du[0] = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * dt)
        du[-1] = (3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * dt)
    M = 1j * du @ np.conj(np.swapaxes(u, -1, -2))
    return 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))


def covariant_derivative(X, A, dt: float, index: int) -> np.ndarray:
    """``dX/dt + i[A, X]`` at one grid point of the series ``X``."""
    A = np.asarray(A, dtype=complex)
    Xi = np.asarray(X[index], dtype=complex)
    if A.shape != Xi.shape:
        raise DimensionError(f"potential shape {A.shape} does not match series entry {Xi.shape}")
    D = time_derivative(X, dt, index) + 1j * commutator(A, Xi)
    dev = float(np.linalg.norm(D - D.conj().T))
    if dev > 1e-8 * scale(D):
        raise InvariantError(f"covariant derivative is not Hermitian (deviation {dev:.3e})")
    return 0.5 * (D + D.conj().T)


def nodal_covariant_derivatives(series, potentials, dt: float) -> np.ndarray:
    """:func:`covariant_derivative` at every grid point at once, shape ``(N+1, d, d)``."""
    X = np.asarray(series, dtype=complex)
    A = np.asarray(potentials, dtype=complex)
    if len(X) < 3:
        return np.stack([covariant_derivative(X, A[i], dt, i) for i in range(len(X))])
    D = np.gradient(X, dt, axis=0, edge_order=2) + 1j * (A @ X - X @ A)
    return 0.5 * (D + np.conj(np.swapaxes(D, -1, -2)))


def _dagger(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(M, -1, -2))


def link_variables(frames) -> np.ndarray:
    """Half-step transports ``S_i = (u_{i+1} u_i^dag)^{1/2}``, shape ``(N, d, d)``.

    The principal square root of a unitary ``W`` is the unitary polar factor
    of ``I + W``; it exists as long as ``W`` has no eigenvalue near ``-1``,
    which alignment guarantees on any grid fine enough to track the frame.
    """
    u = frame_stack(frames)
    W = u[1:] @ _dagger(u[:-1])
    L, s, Rh = np.linalg.svd(np.eye(u.shape[-1]) + W)
    if s.size and np.min(s) < MIN_BLOCK_OVERLAP:
        i = int(np.argmin(np.min(s, axis=-1)))
        raise FrameDiscontinuityError(
            f"frame step at grid index {i} is too large for a midpoint transport; refine the time grid", index=i
        )
    return L @ Rh


def link_potentials(links, dt: float) -> np.ndarray:
    """Midpoint potentials ``A_{i+1/2}`` with ``S_i = exp(-i dt A_{i+1/2} / 2)``.

    ``S = cos(K/2) - i sin(K/2)`` for Hermitian ``K = dt A``; both parts are
    Hermitian and commute, so ``tan(K/2)`` is Hermitian and its eigenvalues
    give ``K`` through the arctangent.
    """
    S = np.asarray(links, dtype=complex)
    C = 0.5 * (S + _dagger(S))
    Sn = 0.5j * (S - _dagger(S))
    T = np.linalg.solve(C, Sn)
    w, v = np.linalg.eigh(0.5 * (T + _dagger(T)))
    return (v * (2.0 * np.arctan(w) / dt)[..., None, :]) @ _dagger(v)


def transport_to_midpoints(series, links) -> tuple[np.ndarray, np.ndarray]:
    """``(S X_i S^dag, S^dag X_{i+1} S)``: both ends of each interval moved to its midpoint frame."""
    X = np.asarray(series, dtype=complex)
    S = np.asarray(links, dtype=complex)
    lo = S @ X[:-1] @ _dagger(S)
    hi = _dagger(S) @ X[1:] @ S
    return 0.5 * (lo + _dagger(lo)), 0.5 * (hi + _dagger(hi))


def transported_covariant_derivatives(series, links, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Covariant difference and midpoint mean of ``X`` on every interval.

    ``D X = (S^dag X_{i+1} S - S X_i S^dag) / dt`` tends to ``X' + i[A, X]``;
    unlike the plain difference it vanishes exactly when ``X`` is carried
    along by the frame, so isospectral motion contributes no work at any dt.
    """
    lo, hi = transport_to_midpoints(series, links)
    return (hi - lo) / dt, 0.5 * (hi + lo)


def transport_to_nodes(mid_values, links) -> np.ndarray:
    """Inverse of :func:`transport_to_midpoints` for interval quantities, averaged per node.

    Interior nodes average the value pulled back from the interval on each
    side; the two endpoints have one interval each.
    """
    M = np.asarray(mid_values, dtype=complex)
    S = np.asarray(links, dtype=complex)
    left = _dagger(S) @ M @ S  # interval i seen from node i
    right = S @ M @ _dagger(S)  # interval i seen from node i + 1
    out = np.empty((len(M) + 1,) + M.shape[1:], dtype=complex)
    out[0] = left[0]
    out[-1] = right[-1]
    out[1:-1] = 0.5 * (left[1:] + right[:-1])
    return out


def spectral_velocity(frames: Sequence[EigenFrame], dt: float, index: int) -> np.ndarray:
    """``u Lambda' u^dag`` at ``index`` with ``Lambda'`` by finite differences."""
    lam_dot = np.real(time_derivative(_LazySeq(frames, lambda f: f.eigenvalues), dt, index))
    u = frames[index].frame
    return (u * lam_dot) @ u.conj().T
