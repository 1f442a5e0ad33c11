"""Finite-difference checks of Maurer-Cartan forms, connections and flatness on U(d).

Every residual is a Frobenius norm computed with a caller-supplied step
``h``; :func:`convergence_study` repeats a check over ``h, h/2, h/4, ...`` and
fits the observed order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .operators import InvariantError, as_unitary, commutator, skew_exp
from .spectral import EigenFrame

DEFAULT_STEP = 1e-4

RIGHT_ACTION = "right_action"
LEFT_ACTION = "left_action"


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class GroupCurve:
    evaluator: Callable[[float], np.ndarray]
    domain: tuple[float, float] = (-np.inf, np.inf)

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(t), dtype=complex)

    def right_translate(self, h0) -> "GroupCurve":
        h0 = np.asarray(h0, dtype=complex)
        return GroupCurve(lambda t: self(t) @ h0, self.domain)

    def left_translate(self, h0) -> "GroupCurve":
        h0 = np.asarray(h0, dtype=complex)
        return GroupCurve(lambda t: h0 @ self(t), self.domain)


@dataclass(frozen=True)
class TwoParamFamily:
    evaluator: Callable[[float, float], np.ndarray]
    s_domain: tuple[float, float] = (-np.inf, np.inf)
    t_domain: tuple[float, float] = (-np.inf, np.inf)
    h: float = DEFAULT_STEP

    def __call__(self, s: float, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(s, t), dtype=complex)


def exp_curve(K, start=None) -> GroupCurve:
    """One-parameter subgroup ``t -> exp(-i t K)`` (optionally right-multiplied by ``start``)."""
    K = np.asarray(K, dtype=complex)
    if start is None:
        return GroupCurve(lambda t: skew_exp(K, t))
    start = np.asarray(start, dtype=complex)
    return GroupCurve(lambda t: skew_exp(K, t) @ start)


def _check_domain(t: float, h: float, domain: tuple[float, float], what: str = "t") -> None:
    lo, hi = domain
    if t - h < lo or t + h > hi:
        raise DomainError(f"{what} +/- h = [{t - h}, {t + h}] leaves the domain [{lo}, {hi}]")


def _central(curve: GroupCurve, t: float, h: float) -> np.ndarray:
    _check_domain(t, h, curve.domain)
    return (curve(t + h) - curve(t - h)) / (2 * h)


def mc_right(curve: GroupCurve, t: float, h: float = DEFAULT_STEP) -> np.ndarray:
    """Right Maurer-Cartan form ``g' g^-1`` at ``t`` (inverse taken as the adjoint)."""
    return _central(curve, t, h) @ curve(t).conj().T


def mc_left(curve: GroupCurve, t: float, h: float = DEFAULT_STEP) -> np.ndarray:
    """Left Maurer-Cartan form ``g^-1 g'``."""
    return curve(t).conj().T @ _central(curve, t, h)


def anti_hermiticity_residual(curve: GroupCurve, t: float, h: float = DEFAULT_STEP) -> float:
    M = mc_right(curve, t, h)
    return float(np.linalg.norm(M + M.conj().T))


def as_algebra_element(M, tol: float) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    dev = float(np.linalg.norm(M + M.conj().T))
    if dev > tol:
        raise InvariantError(f"matrix is not anti-Hermitian within {tol:.1e} (deviation {dev:.3e})")
    return M


def check_right_invariance(curve: GroupCurve, h0, t: float, h: float = DEFAULT_STEP) -> float:
    """``|| mc_right(g h0) - mc_right(g) ||`` at ``t``."""
    h0 = as_unitary(h0)
    return float(np.linalg.norm(mc_right(curve.right_translate(h0), t, h) - mc_right(curve, t, h)))


def check_left_covariance(curve: GroupCurve, h0, t: float, h: float = DEFAULT_STEP) -> float:
    """``|| mc_right(h0 g) - h0 mc_right(g) h0^-1 ||`` at ``t``."""
    h0 = as_unitary(h0)
    expected = h0 @ mc_right(curve, t, h) @ h0.conj().T
    return float(np.linalg.norm(mc_right(curve.left_translate(h0), t, h) - expected))


def exp_algebra(A, s: float) -> np.ndarray:
    """``exp(s A)`` for anti-Hermitian ``A``."""
    A = np.asarray(A, dtype=complex)
    return skew_exp(1j * A, s)


def fundamental_vector(g, A, h: float, convention: str) -> np.ndarray:
    """Central difference of ``s -> g exp(sA)`` (right action) or ``s -> exp(sA) g`` (left) at 0."""
    g = np.asarray(g, dtype=complex)
    plus, minus = exp_algebra(A, h), exp_algebra(A, -h)
    if convention == RIGHT_ACTION:
        return (g @ plus - g @ minus) / (2 * h)
    if convention == LEFT_ACTION:
        return (plus @ g - minus @ g) / (2 * h)
    raise ValueError(f"convention must be {RIGHT_ACTION!r} or {LEFT_ACTION!r}, got {convention!r}")


def check_connection_axioms(g, A, h: float = DEFAULT_STEP, convention: str = LEFT_ACTION) -> float:
    """``|| theta^R(A*) - A ||`` for the fundamental field of the chosen action.

    Under the left action this tends to 0; under the right action it tends
    to ``|| g A g^-1 - A ||`` (see :func:`adjoint_defect`).
    """
    g = as_unitary(g)
    A = as_algebra_element(A, 1e-10 * max(1.0, float(np.linalg.norm(A))))
    v = fundamental_vector(g, A, h, convention)
    return float(np.linalg.norm(v @ g.conj().T - A))


def adjoint_defect(g, A) -> float:
    """``|| Ad(g) A - A ||``, computed directly."""
    g = np.asarray(g, dtype=complex)
    A = np.asarray(A, dtype=complex)
    return float(np.linalg.norm(g @ A @ g.conj().T - A))


def flatness_residual(fam: TwoParamFamily, s: float, t: float, h: float | None = None) -> float:
    """``|| d_s A_t - d_t A_s - [A_s, A_t] ||`` with ``A_x = (d_x g) g^-1``.

    The outer derivatives are central differences of the inner ones, so each
    mixed term uses the four corner points ``(s +/- h, t +/- h)``.
    """
    h = fam.h if h is None else h
    _check_domain(s, h, fam.s_domain, "s")
    _check_domain(t, h, fam.t_domain, "t")

    def A_s(si, ti):
        return (fam(si + h, ti) - fam(si - h, ti)) / (2 * h) @ fam(si, ti).conj().T

    def A_t(si, ti):
        return (fam(si, ti + h) - fam(si, ti - h)) / (2 * h) @ fam(si, ti).conj().T

    ds_At = (A_t(s + h, t) - A_t(s - h, t)) / (2 * h)
    dt_As = (A_s(s, t + h) - A_s(s, t - h)) / (2 * h)
    R = ds_At - dt_As - commutator(A_s(s, t), A_t(s, t))
    return float(np.linalg.norm(R))


def frame_gauge_transform(frames: Sequence[EigenFrame], v_path: Sequence) -> list[EigenFrame]:
    """Re-gauge a frame path, ``u_i -> u_i v_i``, with block-diagonal unitaries ``v_i``.

    The potential then shifts by ``u (i v' v^dag) u^dag``; that is checked by
    tests, not enforced here.
    """
    if len(v_path) != len(frames):
        raise ValueError(f"gauge path has {len(v_path)} entries for {len(frames)} frames")
    out = []
    for i, (f, v) in enumerate(zip(frames, v_path)):
        v = np.asarray(v, dtype=complex)
        off = float(np.linalg.norm(v[~f.structure.block_mask()]))
        if off > 1e-10:
            raise InvariantError(f"gauge transformation at index {i} is not block-diagonal (off-block norm {off:.3e})")
        as_unitary(v)
        new = f.frame @ v
        new.setflags(write=False)
        out.append(EigenFrame(new, f.structure))
    return out


def fit_order(hs: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of ``log(residual)`` against ``log(h)``."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.maximum(np.asarray(residuals, dtype=float), np.finfo(float).tiny))
    return float(np.polyfit(x, y, 1)[0])


def convergence_study(name: str, check: Callable[[float], float], h: float, levels: int = 3) -> dict:
    """Evaluate ``check`` at ``h, h/2, ..., h/2^(levels-1)`` and fit the order."""
    hs = [h / 2**k for k in range(levels)]
    residuals = [float(check(hk)) for hk in hs]
    return {"name": name, "h": hs, "residuals": residuals, "order": fit_order(hs, residuals)}


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_algebra_element(rng: np.random.Generator, d: int, norm: float = 1.0) -> np.ndarray:
    """Random anti-Hermitian matrix with Frobenius norm ``norm``."""
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    A = 0.5 * (z - z.conj().T)
    return A * (norm / np.linalg.norm(A))
