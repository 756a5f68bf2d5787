"""Wave-function and density-matrix evolution, generators, complex structure."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import UnsupportedCaseError, ValidationError
from .lattice_core import as_matrix, lu

PURE_TOL = 1e-8
TRACE_TOL = 1e-10


@dataclass(frozen=True)
class WavePair:
    q_tilde: np.ndarray
    q_bar: np.ndarray
    t: float = 0.0

    @property
    def Z(self) -> float:
        return float(self.q_bar @ self.q_tilde)

    def density(self) -> "ClassicalDensity":
        return ClassicalDensity(np.outer(self.q_tilde, self.q_bar) / self.Z, self.t, pure=True)


@dataclass(frozen=True)
class ClassicalDensity:
    matrix: np.ndarray
    t: float = 0.0
    pure: bool | None = None

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def is_pure(self, tol: float = PURE_TOL) -> bool:
        r = self.matrix
        return bool(np.abs(r @ r - r).max() <= tol)


@dataclass(frozen=True)
class GeneratorW:
    """W = J + W_A with J symmetric and W_A antisymmetric; H = i W_A."""
    W: np.ndarray
    W_tilde: np.ndarray
    J: np.ndarray
    W_A: np.ndarray

    @property
    def H(self) -> np.ndarray:
        return 1j * self.W_A

    @classmethod
    def from_matrix(cls, W, W_tilde=None) -> "GeneratorW":
        W = np.asarray(W, dtype=float)
        Wt = W if W_tilde is None else np.asarray(W_tilde, dtype=float)
        return cls(W, Wt, 0.5 * (W + W.T), 0.5 * (W - W.T))

    def is_symmetric_pair(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.W - self.W_tilde).max() <= tol)


def _vec(v, n=None) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or (n is not None and v.shape[0] != n):
        raise ValidationError(f"expected a vector of length {n}, got shape {v.shape}")
    return v


def evolve_wave(q_tilde, S) -> np.ndarray:
    S = as_matrix(S)
    return S @ _vec(q_tilde, S.shape[1])


def evolve_conjugate(q_bar, S) -> np.ndarray:
    """(S^-1)^T q_bar, via an LU solve of S^T x = q_bar."""
    S = as_matrix(S)
    q_bar = _vec(q_bar, S.shape[0])
    return scipy.linalg.lu_solve(lu(S), q_bar, trans=1)


def generator(S_t, S_tminus, eps: float) -> GeneratorW:
    """W(t) = (S(t) - S^-1(t-eps)) / 2eps and W~(t) = (S(t-eps) - S^-1(t)) / 2eps."""
    if eps <= 0:
        raise ValidationError("eps must be positive")
    A = np.asarray(as_matrix(S_t), dtype=float)
    B = np.asarray(as_matrix(S_tminus), dtype=float)
    eye = np.eye(A.shape[0])
    A_inv = scipy.linalg.lu_solve(lu(A), eye)
    B_inv = scipy.linalg.lu_solve(lu(B), eye)
    W = (A - B_inv) / (2 * eps)
    Wt = (B - A_inv) / (2 * eps)
    return GeneratorW.from_matrix(W, Wt)


def evolve_density_step(rho, S, t_next: float | None = None) -> ClassicalDensity:
    """rho'(t + eps) = S rho' S^-1."""
    r = as_matrix(rho)
    S = as_matrix(S)
    # S r S^-1 = (S^-T (S r)^T)^T
    out = scipy.linalg.lu_solve(lu(S), (S @ r).T, trans=1).T
    t = getattr(rho, "t", 0.0) if t_next is None else t_next
    pure = getattr(rho, "pure", None)
    return ClassicalDensity(out, t, pure)


def rk4(f: Callable, y0, t0: float, t1: float, dt: float, sample_every: int = 1):
    """Fixed-step classical Runge-Kutta. Returns (times, states).

    The step count is ceil((t1 - t0) / dt); the step is shrunk so that the
    grid ends exactly at t1.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    span = t1 - t0
    n = max(int(np.ceil(span / dt - 1e-12)), 0)
    h = span / n if n else 0.0
    y = np.array(y0)
    ts = [t0]
    ys = [y.copy()]
    t = t0
    for k in range(1, n + 1):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + k * h
        if k % sample_every == 0 or k == n:
            ts.append(t)
            ys.append(y.copy())
    return np.array(ts), np.array(ys)


def _schedule(W):
    if callable(W):
        return W
    if isinstance(W, (list, tuple)) and W and isinstance(W[0], tuple):
        starts = np.array([s for s, _ in W], dtype=float)
        mats = [np.asarray(as_matrix(m)) for _, m in W]

        def sched(t):
            i = int(np.searchsorted(starts, t, side="right")) - 1
            return mats[max(i, 0)]
        return sched
    Wm = as_matrix(W)
    return lambda t: Wm


def integrate_von_neumann(rho0, W, t_span, dt: float, W_tilde=None, sample_every: int = 1):
    """Integrate d rho'/dt = [W, rho'] with RK4.

    W is a matrix, a GeneratorW, a callable t -> W, or a piecewise constant
    schedule [(t_start, W), ...].
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    if isinstance(W, GeneratorW):
        if not W.is_symmetric_pair():
            raise UnsupportedCaseError("density evolution is implemented for W~ = W only")
        W = W.W
    if W_tilde is not None and not callable(W) and np.abs(as_matrix(W_tilde) - as_matrix(W)).max() > 1e-12:
        raise UnsupportedCaseError("density evolution is implemented for W~ = W only")
    t0, t1 = t_span
    rho0 = np.asarray(as_matrix(rho0))
    if isinstance(W, (list, tuple)) and W and isinstance(W[0], tuple):
        # one RK4 run per constant piece so that no step straddles a switch
        starts = [float(s) for s, _ in W]
        cuts = [t0] + [s for s in starts if t0 < s < t1] + [t1]
        ts, ys = [np.array([t0])], [rho0[None]]
        r = rho0
        for a, b in zip(cuts[:-1], cuts[1:]):
            Wm = np.asarray(as_matrix(_schedule(W)(0.5 * (a + b))))
            tp, yp = rk4(lambda t, x: Wm @ x - x @ Wm, r, a, b, dt, sample_every)
            ts.append(tp[1:])
            ys.append(yp[1:])
            r = yp[-1]
        return np.concatenate(ts), np.concatenate(ys)
    sched = _schedule(W)

    def f(t, r):
        Wt = sched(t)
        return Wt @ r - r @ Wt

    return rk4(f, rho0, t0, t1, dt, sample_every)


@dataclass(frozen=True)
class ComplexStructure:
    """Pairing of real-part indices R[k] with imaginary-part indices I[k]."""
    R: tuple
    I: tuple
    I_matrix: np.ndarray

    @property
    def N(self) -> int:
        return self.I_matrix.shape[0]

    def split(self, v):
        v = np.asarray(v)
        return v[list(self.R)], v[list(self.I)]

    def blocks(self, W):
        """(W1, W2) with W = [[W1, W2], [-W2, W1]] in (R, I) order."""
        W = as_matrix(W)
        R, I = list(self.R), list(self.I)
        W1 = 0.5 * (W[np.ix_(R, R)] + W[np.ix_(I, I)])
        W2 = 0.5 * (W[np.ix_(R, I)] - W[np.ix_(I, R)])
        return W1, W2

    def assemble(self, W1, W2) -> np.ndarray:
        n = self.N
        out = np.zeros((n, n), dtype=np.result_type(W1, W2))
        R, I = list(self.R), list(self.I)
        out[np.ix_(R, R)] = W1
        out[np.ix_(I, I)] = W1
        out[np.ix_(R, I)] = W2
        out[np.ix_(I, R)] = -W2
        return out

    def is_compatible(self, W, tol: float = 1e-12) -> bool:
        W = as_matrix(W)
        c = W @ self.I_matrix - self.I_matrix @ W
        scale = max(1.0, float(np.abs(W).max()))
        return bool(np.abs(c).max() <= tol * scale)


def build_complex_structure(pairing) -> ComplexStructure:
    """pairing: sequence of (r, i) index pairs covering 0..N-1 exactly once."""
    pairs = [(int(r), int(i)) for r, i in pairing]
    flat = [k for p in pairs for k in p]
    n = len(flat)
    if n == 0 or n % 2:
        raise ValidationError("a complex structure needs an even, nonzero dimension")
    if sorted(flat) != list(range(n)):
        raise ValidationError("pairing must be a bijection onto 0..N-1")
    Im = np.zeros((n, n))
    for r, i in pairs:
        Im[r, i] = -1.0
        Im[i, r] = 1.0
    Im.setflags(write=False)
    return ComplexStructure(tuple(r for r, _ in pairs), tuple(i for _, i in pairs), Im)


def complexify(q_tilde, q_bar, cs: ComplexStructure):
    """psi = q_R + i q_I and psi_bar = qbar_R - i qbar_I."""
    q_tilde = _vec(q_tilde, cs.N)
    q_bar = _vec(q_bar, cs.N)
    qr, qi = cs.split(q_tilde)
    br, bi = cs.split(q_bar)
    return qr + 1j * qi, br - 1j * bi


def realify(psi, psi_bar, cs: ComplexStructure):
    """Inverse of complexify."""
    q = np.zeros(cs.N)
    qb = np.zeros(cs.N)
    R, I = list(cs.R), list(cs.I)
    psi = np.asarray(psi)
    psi_bar = np.asarray(psi_bar)
    q[R], q[I] = psi.real, psi.imag
    qb[R], qb[I] = psi_bar.real, -psi_bar.imag
    return q, qb


def complex_generator(W, cs: ComplexStructure):
    """(H_hat, J_hat) with i dpsi/dt = (H_hat + i J_hat) psi."""
    Wm = W.W if isinstance(W, GeneratorW) else as_matrix(W)
    if not cs.is_compatible(Wm):
        raise ValidationError("W does not commute with the complex structure")
    W1, W2 = cs.blocks(Wm)
    sym = lambda A: 0.5 * (A + A.T)
    asym = lambda A: 0.5 * (A - A.T)
    H_hat = sym(W2) + 1j * asym(W1)
    J_hat = sym(W1) - 1j * asym(W2)
    return H_hat, J_hat


def complex_operator(A, cs: ComplexStructure) -> np.ndarray:
    """A_R + i A_I for an operator of the form [[A_R, -A_I], [A_I, A_R]]."""
    if not cs.is_compatible(A):
        raise ValidationError("operator does not commute with the complex structure")
    A1, A2 = cs.blocks(A)
    return A1 - 1j * A2


def complex_density(psi, psi_bar) -> np.ndarray:
    return np.outer(np.asarray(psi), np.asarray(psi_bar))
