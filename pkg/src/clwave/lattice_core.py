"""Configurations, the occupation-number basis and step evolution operators.

Configuration index convention: bit gamma of the index is the occupation
number n_gamma of spin gamma (little endian), and s_gamma = 2 n_gamma - 1.
The three-spin literature ordering (s1, s2, s3) running from (-,-,-) to
(+,+,+) with s3 changing fastest is recovered by identifying the k-th
listed spin with bit M - k; see ``listed_spin_bit``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import SingularOperatorError, ValidationError

COND_LIMIT = 1e12
RADIUS_TOL = 1e-9
MAX_SPINS = 20


def as_matrix(S) -> np.ndarray:
    """Return the raw matrix of a StepOperator, LocalOperator or array."""
    m = getattr(S, "matrix", S)
    return np.asarray(m)


def _real_or_complex(a) -> np.ndarray:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return a.astype(complex)
    return a.astype(float)


def _frozen(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def condition_number(S) -> float:
    S = as_matrix(S)
    try:
        return float(np.linalg.cond(S))
    except np.linalg.LinAlgError:
        return np.inf


def is_regular(S) -> bool:
    c = condition_number(S)
    return bool(np.isfinite(c) and c <= COND_LIMIT)


def require_regular(S, what="step operator"):
    c = condition_number(S)
    if not (np.isfinite(c) and c <= COND_LIMIT):
        raise SingularOperatorError(f"{what} is singular (condition number {c:.3g})")


def lu(S, what="step operator"):
    """LU factors of a regular matrix, refusing ill-conditioned input."""
    require_regular(S, what)
    return scipy.linalg.lu_factor(as_matrix(S))


def spectral_radius(S) -> float:
    ev = np.linalg.eigvals(as_matrix(S))
    return float(np.max(np.abs(ev))) if ev.size else 0.0


@dataclass(frozen=True)
class SpinConfig:
    index: int
    M: int

    @property
    def bits(self) -> tuple:
        return tuple((self.index >> g) & 1 for g in range(self.M))

    @property
    def spins(self) -> tuple:
        return tuple(2 * b - 1 for b in self.bits)


def enumerate_configs(M: int) -> list:
    """All 2**M configurations of M spins in ascending index order."""
    if not isinstance(M, (int, np.integer)) or not 1 <= M <= MAX_SPINS:
        raise ValidationError(f"spin count must be an integer in [1, {MAX_SPINS}], got {M!r}")
    return [SpinConfig(i, int(M)) for i in range(2 ** M)]


def basis_value(tau: SpinConfig, sigma: SpinConfig) -> int:
    """Occupation-number basis function h_tau evaluated on configuration sigma."""
    if tau.M != sigma.M:
        raise ValidationError("configurations have different spin counts")
    return int(tau.index == sigma.index)


def listed_spin_bit(k: int, M: int) -> int:
    """Bit position of the k-th spin (1-based) in the s1-most-significant listing.

    With this identification the ascending index order coincides with the
    listing (-,..,-), (-,..,+), ..., (+,..,+) where the last spin changes
    fastest.
    """
    if not 1 <= k <= M:
        raise ValidationError(f"spin number {k} outside 1..{M}")
    return M - k


def spin_values(M: int, bit: int) -> np.ndarray:
    """Values of s_bit on every configuration, as a length-2**M vector."""
    idx = np.arange(2 ** M)
    return 2.0 * ((idx >> bit) & 1) - 1.0


def occupation_values(M: int, bit: int) -> np.ndarray:
    idx = np.arange(2 ** M)
    return ((idx >> bit) & 1).astype(float)


@dataclass(frozen=True)
class LocalAction:
    """Couplings M[tau, rho] between layer t+eps (tau) and layer t (rho).

    A value of +inf marks a forbidden transition.
    """
    couplings: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.couplings, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValidationError("couplings must be a square matrix")
        if np.isnan(c).any() or np.isneginf(c).any():
            raise ValidationError("couplings must be finite or +inf")
        object.__setattr__(self, "couplings", _frozen(c))


@dataclass(frozen=True)
class StepOperator:
    matrix: np.ndarray
    phi: float = 0.0
    spectral_radius: float = field(default=float("nan"))
    regular: bool = True
    classical: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("step operator must be square")
        if not np.isrealobj(m):
            if np.abs(m.imag).max() > 0:
                raise ValidationError("step operators are real")
            m = m.real
        m = m.astype(float)
        object.__setattr__(self, "matrix", _frozen(m))
        if np.isnan(self.spectral_radius):
            object.__setattr__(self, "spectral_radius", spectral_radius(m))
        object.__setattr__(self, "regular", is_regular(m))
        if self.classical and (m < 0).any():
            raise ValidationError("a classical step operator needs nonnegative entries")

    @property
    def N(self) -> int:
        return self.matrix.shape[0]


def make_step(S, phi: float = 0.0) -> StepOperator:
    m = np.asarray(as_matrix(S), dtype=float)
    return StepOperator(m, phi=phi, classical=bool((m >= 0).all()))


@dataclass(frozen=True)
class ChainSpec:
    """Ordered step operators S(t_in), ..., S(t_f - eps).

    M is the number of spins per layer when the state space is a spin
    configuration space; it is None for other state spaces.
    """
    operators: tuple
    eps: float = 1.0
    t_in: float = 0.0
    M: int | None = None

    def __post_init__(self):
        ops = tuple(_frozen(_real_or_complex(as_matrix(S))) for S in self.operators)
        if ops:
            n = ops[0].shape
            for S in ops:
                if S.ndim != 2 or S.shape != n or n[0] != n[1]:
                    raise ValidationError("all step operators must be square with equal size")
        if self.eps <= 0:
            raise ValidationError("eps must be positive")
        if self.M is not None and ops and 2 ** self.M != ops[0].shape[0]:
            raise ValidationError("operator size does not match 2**M")
        object.__setattr__(self, "operators", ops)

    @property
    def G(self) -> int:
        return len(self.operators)

    @property
    def N(self) -> int:
        if not self.operators:
            raise ValidationError("empty chain has no intrinsic size")
        return self.operators[0].shape[0]

    @property
    def t_f(self) -> float:
        return self.t_in + self.G * self.eps

    @property
    def times(self) -> np.ndarray:
        return self.t_in + self.eps * np.arange(self.G + 1)

    @classmethod
    def uniform(cls, S, G: int, eps: float = 1.0, t_in: float = 0.0, M=None) -> "ChainSpec":
        if G < 0:
            raise ValidationError("G must be nonnegative")
        return cls(tuple([as_matrix(S)] * G), eps=eps, t_in=t_in, M=M)

    def is_uniform(self) -> bool:
        return all(np.array_equal(S, self.operators[0]) for S in self.operators)

    def with_operators(self, ops) -> "ChainSpec":
        return ChainSpec(tuple(ops), eps=self.eps, t_in=self.t_in, M=self.M)


def step_from_action(a: LocalAction, normalize: bool = False) -> StepOperator:
    """S = exp(-M) entrywise; forbidden (+inf) couplings give exact zeros."""
    c = a.couplings
    S = np.where(np.isposinf(c), 0.0, np.exp(-np.where(np.isposinf(c), 0.0, c)))
    op = StepOperator(S, classical=True)
    return normalize_step(op) if normalize else op


def action_from_step(S) -> LocalAction:
    m = np.asarray(as_matrix(S), dtype=float)
    if (m < 0).any():
        raise ValidationError("negative entries have no real action")
    with np.errstate(divide="ignore"):
        c = np.where(m == 0, np.inf, -np.log(np.where(m == 0, 1.0, m)))
    return LocalAction(c)


def normalize_step(S) -> StepOperator:
    """Divide by the largest eigenvalue modulus; phi = ln |lambda_max|.

    Idempotent on the matrix part: an input whose spectral radius is already
    1 within RADIUS_TOL is returned unchanged.
    """
    m = np.asarray(as_matrix(S), dtype=float)
    phi0 = getattr(S, "phi", 0.0)
    lam = spectral_radius(m)
    if lam == 0:
        raise ValidationError("spectral radius is zero; cannot normalize")
    if abs(lam - 1.0) <= RADIUS_TOL:
        out = m
        phi = 0.0
    else:
        out = m / lam
        phi = float(np.log(lam))
    return StepOperator(out, phi=phi0 + phi, classical=bool((out >= 0).all()))


def ising_action(beta: float) -> LocalAction:
    """Nearest-neighbour action -beta s(t+eps) s(t) for a single spin per layer."""
    s = spin_values(1, 0)
    return LocalAction(-beta * np.outer(s, s))


def ordered_product(ops: Sequence, N: int | None = None) -> np.ndarray:
    """S_k ... S_1 S_0 for ops = [S_0, S_1, ..., S_k] (later operators on the left)."""
    if not len(ops):
        if N is None:
            raise ValidationError("empty product needs an explicit size")
        return np.eye(N)
    P = np.array(_real_or_complex(as_matrix(ops[0])))
    for S in ops[1:]:
        P = as_matrix(S) @ P
    return P
