"""The thermodynamic group ``U(n_1) x ... x U(n_k)`` and the twirl.

Group elements are block-diagonal in the eigenframe of the generating
observable. The twirl (Haar average over the group) is always evaluated by
its closed block formula; :func:`haar_average` is the Monte-Carlo version and
exists only to check it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operators import (
    DENSITY_TOL,
    ENTROPY_CUTOFF,
    DimensionError,
    InvariantError,
    ThermoGaugeError,
    as_unitary,
    purity,
    validate_density,
    von_neumann_entropy,
)
from .spectral import DegeneracyStructure, EigenFrame


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``seed`` (and optional sub-stream ids)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True, eq=False)
class ThermodynamicGroup:
    block_dims: tuple[int, ...]
    frame: EigenFrame

    @property
    def dim(self) -> int:
        return sum(self.block_dims)


@dataclass(frozen=True, eq=False)
class GroupElement:
    matrix: np.ndarray
    group: ThermodynamicGroup


def thermodynamic_group(structure: DegeneracyStructure, frame: EigenFrame) -> ThermodynamicGroup:
    if structure.dim != frame.dim or tuple(structure.multiplicities) != tuple(frame.structure.multiplicities):
        raise ThermoGaugeError(
            f"degeneracy structure {structure.multiplicities} is inconsistent with the frame's "
            f"{frame.structure.multiplicities}"
        )
    return ThermodynamicGroup(tuple(int(n) for n in structure.multiplicities), frame)


SMALL_BLOCK = 3  # batched LAPACK QR has high per-matrix overhead below this size


def _gram_schmidt(z: np.ndarray) -> np.ndarray:
    """Q factor with positive diagonal R for a stack of small matrices (two-pass Gram-Schmidt)."""
    q = np.empty_like(z)
    for j in range(z.shape[-1]):
        v = z[:, :, j].copy()
        for _ in range(2 if j else 0):
            c = np.einsum("bij,bi->bj", q[:, :, :j].conj(), v)
            v -= np.einsum("bij,bj->bi", q[:, :, :j], c)
        q[:, :, j] = v / np.linalg.norm(v, axis=1)[:, None]
    return q


def haar_unitaries(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Haar-distributed ``n x n`` unitaries, shape ``(count, n, n)``.

    QR of a complex Ginibre matrix, with the columns of Q rephased by the
    phases of diag(R) so the distribution is exactly Haar. Small blocks use
    Gram-Schmidt, which yields that same rephased factor directly.
    """
    z = (rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))) / np.sqrt(2)
    if n == 1:
        return z / np.abs(z)
    if n <= SMALL_BLOCK:
        return _gram_schmidt(z)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (diag / np.abs(diag))[:, None, :]


def _block_diag_batch(group: ThermodynamicGroup, rng: np.random.Generator, count: int) -> np.ndarray:
    d = group.dim
    out = np.zeros((count, d, d), dtype=complex)
    start = 0
    for n in group.block_dims:
        out[:, start : start + n, start : start + n] = haar_unitaries(n, count, rng)
        start += n
    return out


def sample_haar_batch(group: ThermodynamicGroup, seed: int, count: int, stream: int = 0) -> np.ndarray:
    """``count`` Haar samples of the group as unitaries in the original basis."""
    rng = make_rng(seed, stream)
    blocks = _block_diag_batch(group, rng, count)
    u = group.frame.frame
    return u @ blocks @ u.conj().T


def sample_haar(group: ThermodynamicGroup, seed: int, stream: int = 0) -> GroupElement:
    V = sample_haar_batch(group, seed, 1, stream)[0]
    return GroupElement(as_unitary(V), group)


def sample_gauge_path(frames, seed: int, stream: int = 0) -> np.ndarray:
    """One Haar-random element of the instantaneous group at every grid point.

    ``frames`` is a sequence of :class:`EigenFrame` (or a trajectory); the samples at different
    points are independent. Returns an ``(n, d, d)`` stack in the original basis.
    """
    rng = make_rng(seed, stream)
    u = frames.frame_array if hasattr(frames, "frame_array") else np.stack([f.frame for f in frames])
    frames = getattr(frames, "frames", frames)
    uB = np.empty_like(u)  # u times the block-diagonal sample, one block at a time
    by_signature: dict[tuple[int, ...], list[int]] = {}
    for i, f in enumerate(frames):
        by_signature.setdefault(tuple(f.structure.multiplicities), []).append(i)
    for sig in sorted(by_signature):
        idx = slice(None) if len(by_signature) == 1 else np.array(by_signature[sig])
        count = len(by_signature[sig])
        if max(sig) == 1:
            phases = haar_unitaries(1, count * len(sig), rng).reshape(count, len(sig))
            uB[idx] = u[idx] * phases[:, None, :]
            continue
        start = 0
        for m in sig:
            B = haar_unitaries(m, count, rng)
            cols = u[idx, :, start : start + m]
            uB[idx, :, start : start + m] = cols * B[:, 0, :][:, None, :] if m == 1 else cols @ B
            start += m
    return uB @ np.conj(np.swapaxes(u, -1, -2))


def check_element(V: GroupElement, H=None) -> float:
    """Off-block norm of ``V`` in the group frame; raises if it is not in the group."""
    u = V.group.frame.frame
    inner = u.conj().T @ V.matrix @ u
    off = float(np.linalg.norm(inner[~V.group.frame.structure.block_mask()]))
    if off > 1e-10:
        raise InvariantError(f"element is not block-diagonal in the group frame (off-block norm {off:.3e})")
    if H is not None:
        H = np.asarray(H, dtype=complex)
        comm = float(np.linalg.norm(V.matrix @ H - H @ V.matrix))
        if comm > 1e-9 * max(1.0, float(np.linalg.norm(H))):
            raise InvariantError(f"element does not commute with H (||[V, H]|| = {comm:.3e})")
    return off


def act(V, rho) -> np.ndarray:
    """Gauge action ``rho -> V rho V^dag``."""
    M = V.matrix if isinstance(V, GroupElement) else np.asarray(V, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if M.shape != rho.shape:
        raise DimensionError(f"dimension mismatch: {M.shape} vs {rho.shape}")
    out = M @ rho @ M.conj().T
    return 0.5 * (out + out.conj().T)


def block_weights(rho, structure: DegeneracyStructure) -> np.ndarray:
    """``Tr(Pi_k rho)`` for every block."""
    rho = np.asarray(rho, dtype=complex)
    return np.array([np.einsum("ij,ji->", P, rho).real for P in structure.projectors])


def twirl(rho, structure: DegeneracyStructure) -> np.ndarray:
    """Block-scalar state ``sum_k Tr(Pi_k rho) / n_k * Pi_k``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (structure.dim, structure.dim):
        raise DimensionError(f"state of shape {rho.shape} does not match structure dimension {structure.dim}")
    weights = block_weights(rho, structure)
    out = sum(w / n * P for w, n, P in zip(weights, structure.multiplicities, structure.projectors))
    return validate_density(out)


def haar_average(rho, group: ThermodynamicGroup, n_samples: int, seed: int, batch: int = 20000) -> np.ndarray:
    """Monte-Carlo estimate of the group average of ``V rho V^dag``."""
    rho = np.asarray(rho, dtype=complex)
    total = np.zeros_like(rho)
    done = 0
    stream = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        V = sample_haar_batch(group, seed, m, stream=stream)
        total += np.einsum("nij,jk,nlk->il", V, rho, V.conj())
        done += m
        stream += 1
    return total / n_samples


def _block_entropy(weights: np.ndarray, multiplicities) -> np.ndarray:
    """``-sum_k p_k ln(p_k / n_k)`` along the last axis: the entropy of the twirled state."""
    p = np.asarray(weights, dtype=float)
    n = np.asarray(multiplicities, dtype=float)
    total = p.sum(axis=-1)
    bad = (np.abs(total - 1.0) > DENSITY_TOL) | (p.min(axis=-1) < -DENSITY_TOL)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvariantError(f"block weights {p.reshape(-1, p.shape[-1])[i]} do not form a probability vector")
    q = p / n
    safe = np.where(q > ENTROPY_CUTOFF, q, 1.0)
    s = -np.sum(np.where(q > ENTROPY_CUTOFF, p * np.log(safe), 0.0), axis=-1)
    return np.clip(s, 0.0, np.log(n.sum()))


def gauge_entropy(rho, structure: DegeneracyStructure) -> float:
    """``S(rho^E)``; the twirl has eigenvalue ``p_k / n_k`` with multiplicity ``n_k``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (structure.dim, structure.dim):
        raise DimensionError(f"state of shape {rho.shape} does not match structure dimension {structure.dim}")
    return float(_block_entropy(block_weights(rho, structure), structure.multiplicities))


def gauge_entropies(states, frames) -> np.ndarray:
    """:func:`gauge_entropy` along a trajectory, batched over points that share a signature."""
    u = np.stack([f.frame for f in frames])
    rho = np.asarray(states, dtype=complex)
    pops = np.einsum("nji,njk,nki->ni", u.conj(), rho, u).real
    out = np.empty(len(u))
    by_signature: dict[tuple[int, ...], list[int]] = {}
    for i, f in enumerate(frames):
        by_signature.setdefault(tuple(f.structure.multiplicities), []).append(i)
    for sig, idx in by_signature.items():
        starts = np.concatenate([[0], np.cumsum(sig)[:-1]])
        out[idx] = _block_entropy(np.add.reduceat(pops[idx], starts, axis=1), sig)
    return out


def _schatten(p: float) -> Callable[[np.ndarray], float]:
    def norm(rho: np.ndarray) -> float:
        s = np.abs(np.linalg.eigvalsh(rho))
        return float(s.max()) if np.isinf(p) else float(np.sum(s**p) ** (1.0 / p))

    return norm


FUNCTIONALS: dict[str, Callable[[np.ndarray], float]] = {
    "von_neumann_entropy": von_neumann_entropy,
    "purity": purity,
    "pnorm_1": _schatten(1.0),
    "pnorm_2": _schatten(2.0),
    "pnorm_3": _schatten(3.0),
    "pnorm_inf": _schatten(np.inf),
}


def invariant_functional(name: str, rho, structure: DegeneracyStructure) -> float:
    """Evaluate a registered unitarily invariant functional on the twirled state."""
    try:
        F = FUNCTIONALS[name]
    except KeyError:
        raise ThermoGaugeError(f"unregistered functional {name!r}; known: {sorted(FUNCTIONALS)}") from None
    return F(twirl(rho, structure))
