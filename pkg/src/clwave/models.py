"""Built-in chains with closed-form solutions.

Single-spin Ising chain, four-state oscillator chain, unique jump chains,
three-spin gate operators and the partially conserving three-spin family,
and the particle-number sectors of the diagonal Ising model in the
infinite-coupling limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import UnsupportedCaseError, ValidationError
from .lattice_core import ChainSpec, StepOperator, listed_spin_bit, normalize_step, spin_values

# Pauli matrices
TAU1 = np.array([[0, 1], [1, 0]], dtype=complex)
TAU2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
TAU3 = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (TAU1, TAU2, TAU3)


# ---------------------------------------------------------------------------
# Ising chain without magnetic field

def ising_step(beta: float) -> StepOperator:
    """Normalized 2x2 step operator for K = exp(beta s(t+eps) s(t)).

    The unnormalized entries exp(+-beta) are shifted by their maximum before
    exponentiation, so large beta does not overflow.
    """
    if not beta >= 0:
        raise ValidationError("beta must be nonnegative")
    x = np.exp(-2.0 * beta)
    raw = np.array([[1.0, x], [x, 1.0]])
    S = raw / (1.0 + x)
    # phi = ln(2 cosh beta)
    return StepOperator(S, phi=float(beta + np.log1p(x)), classical=True)


def ising_chain(beta: float, G: int, eps: float = 1.0, t_in: float = 0.0) -> ChainSpec:
    if not beta > 0:
        raise ValidationError("beta must be positive")
    return ChainSpec.uniform(ising_step(beta), G, eps=eps, t_in=t_in, M=1)


def ising_rate(beta: float, eps: float = 1.0, exact: bool = True) -> float:
    """Decay rate omega of the Ising chain.

    exact: tanh(beta) = exp(-2 omega eps), which makes the closed forms hold
    at every lattice slice. Otherwise the leading large-beta value
    exp(-2 beta) / eps.
    """
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if exact:
        return float(-np.log(np.tanh(beta)) / (2.0 * eps))
    return float(np.exp(-2.0 * beta) / eps)


def ising_generator(omega: float) -> np.ndarray:
    """W = omega (tau_1 - 1)."""
    return omega * (TAU1.real - np.eye(2))


@dataclass(frozen=True)
class IsingAnalytic:
    """Integration constants of the general 2x2 density-matrix solution.

    Matrices use the package index order (index 1 is the occupied state
    n = 1), so rho[1, 1] = <n>.
    """
    a: float
    b_in: float
    c_f: float
    omega: float
    t_in: float = 0.0
    t_f: float = 1.0

    def __post_init__(self):
        if self.t_f <= self.t_in:
            raise ValidationError("t_f must exceed t_in")
        if self.omega < 0:
            raise ValidationError("omega must be nonnegative")
        if not -1.0 <= self.a <= 1.0:
            raise ValidationError("static parameter a must lie in [-1, 1]")

    @property
    def r(self) -> float:
        return float(np.exp(-2.0 * self.omega * (self.t_f - self.t_in)))

    def b(self, t):
        return self.b_in * np.exp(-2.0 * self.omega * (np.asarray(t) - self.t_in))

    def c(self, t):
        return self.c_f * np.exp(-2.0 * self.omega * (self.t_f - np.asarray(t)))

    @property
    def w1(self) -> float:
        return 0.5 * (1.0 + self.a)

    @property
    def w2(self) -> float:
        return 0.5 * (1.0 - self.a)

    @property
    def dn_in(self) -> float:
        return 0.5 * (self.b_in + self.c_f * self.r)

    @property
    def dn_f(self) -> float:
        return 0.5 * (self.c_f + self.b_in * self.r)

    @classmethod
    def from_boundary_offsets(cls, dn_in, dn_f, omega, t_in, t_f, a=0.0) -> "IsingAnalytic":
        """Constants reproducing the given <n> - 1/2 at both ends."""
        r = np.exp(-2.0 * omega * (t_f - t_in))
        if r >= 1.0:
            raise ValidationError("r must be below one (omega (t_f - t_in) > 0)")
        b = 2.0 * (dn_in - r * dn_f) / (1.0 - r * r)
        c = 2.0 * (dn_f - r * dn_in) / (1.0 - r * r)
        return cls(a, float(b), float(c), omega, t_in, t_f)


def ising_analytic(params: IsingAnalytic, t):
    """(rho'(t), Delta n(t)) from the closed-form general solution."""
    if params.r >= 1.0:
        raise ValidationError("closed form needs r < 1")
    b = float(params.b(t))
    c = float(params.c(t))
    a = params.a
    # occupied state first in the textbook ordering; swap to package order
    rho_occ_first = 0.5 * np.array([[1 + b + c, a + b - c], [a - b + c, 1 - b - c]])
    P = TAU1.real
    rho = P @ rho_occ_first @ P
    return rho, 0.5 * (b + c)


def ising_determinant(params: IsingAnalytic) -> float:
    return 0.25 * (1.0 - params.a ** 2 - 4.0 * params.b_in * params.c_f * params.r)


def ising_delta_n(dn_in, dn_f, omega, t_in, t_f, t):
    """<n(t)> - 1/2 from the boundary values at t_in and t_f."""
    t = np.asarray(t, dtype=float)
    r = np.exp(-2.0 * omega * (t_f - t_in))
    if r >= 1.0:
        raise ValidationError("closed form needs r < 1")
    return ((dn_in - r * dn_f) * np.exp(-2.0 * omega * (t - t_in))
            + (dn_f - r * dn_in) * np.exp(-2.0 * omega * (t_f - t))) / (1.0 - r * r)


def ising_linear_interpolation(dn_in, dn_f, t_in, t_f, t):
    """Small-omega limit: linear interpolation between the boundary offsets."""
    t = np.asarray(t, dtype=float)
    return 0.5 * (dn_in + dn_f) + 0.5 * (dn_in - dn_f) * (t_f + t_in - 2 * t) / (t_f - t_in)


# ---------------------------------------------------------------------------
# Four-state oscillator chain

# unique jump rotation reached at eta = 1; column tau is sent to row perm[tau]
FOUR_STATE_PERM = (1, 3, 0, 2)
FOUR_STATE_V = np.array([[0, 0, 1, 0],
                         [1, 0, 0, 0],
                         [0, 0, 0, 1],
                         [0, 1, 0, 0]], dtype=float)


def four_state_step(eta: float) -> StepOperator:
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("eta must lie in [0, 1]")
    S = (1.0 - eta) * np.eye(4) + eta * FOUR_STATE_V
    return StepOperator(S, classical=True)


def four_state_chain(eta: float, G: int, eps: float = 1.0, t_in: float = 0.0) -> ChainSpec:
    return ChainSpec.uniform(four_state_step(eta), G, eps=eps, t_in=t_in, M=2)


def four_state_spectrum(eta: float) -> np.ndarray:
    """Closed-form eigenvalues 1, 1 - eta +- i eta, 1 - 2 eta."""
    return np.array([1.0, 1 - eta + 1j * eta, 1 - eta - 1j * eta, 1 - 2 * eta])


def four_state_generator(omega: float) -> np.ndarray:
    """Continuum generator W = -omega (1 - V)."""
    return -omega * (np.eye(4) - FOUR_STATE_V)


def _four_state_matrices() -> dict:
    t1 = TAU1.real
    itau2 = (1j * TAU2).real          # [[0, 1], [-1, 0]]
    t3 = TAU3.real
    one = np.eye(2)
    zero = np.zeros((2, 2))
    V = FOUR_STATE_V
    m = {
        "B1": np.block([[zero, t1], [t1, zero]]),
        "B2": V.T.copy(),
        "B3": V.copy(),
        "C1": np.block([[t3, -itau2], [itau2, -t3]]),
        "C2": np.block([[-t1, one], [one, -t1]]),
    }
    row = np.array([1, -1j, 1j, -1])
    m["D1"] = np.tile(row, (4, 1))
    m["D2"] = np.outer(row, [1, -1, -1, 1])
    m["E"] = np.tile([1.0, -1.0, -1.0, 1.0], (4, 1))
    m["F1"] = m["D1"].real.copy()
    m["F3"] = -m["D1"].imag.copy()
    m["F2"] = m["D2"].real.copy()
    m["F4"] = -m["D2"].imag.copy()
    for v in m.values():
        v.setflags(write=False)
    return m


FOUR_STATE_MATRICES = _four_state_matrices()


@dataclass(frozen=True)
class FourStateAnalytic:
    """Fifteen integration constants of the general density-matrix solution.

    b: static coefficients of B1..B3; cbar, alpha: undamped oscillation;
    d[0:2], beta[0:2]: modes decaying away from t_f; d[2:4], beta[2:4]:
    modes decaying away from t_in; e_plus, e_minus: fastest modes near t_f
    and t_in. All amplitudes are taken at the boundary they decay from.
    """
    b: tuple = (0.0, 0.0, 0.0)
    cbar: float = 0.0
    alpha: float = 0.0
    d: tuple = (0.0, 0.0, 0.0, 0.0)
    beta: tuple = (0.0, 0.0, 0.0, 0.0)
    e_plus: float = 0.0
    e_minus: float = 0.0

    def __post_init__(self):
        if len(self.b) != 3 or len(self.d) != 4 or len(self.beta) != 4:
            raise ValidationError("expected 3 static, 4 amplitude and 4 phase constants")


def four_state_analytic(constants: FourStateAnalytic, t, t_in: float, t_f: float, omega: float) -> np.ndarray:
    """rho'(t) of the general solution with generator W = -omega (1 - V).

    The undamped part oscillates as sin/cos(2 omega t + alpha); the damped
    parts rotate with omega t and decay with exp(-omega |t - boundary|).
    """
    m = FOUR_STATE_MATRICES
    k = constants
    t = float(t)
    rho = 0.25 * np.eye(4)
    rho = rho + sum(bk * m[f"B{i + 1}"] for i, bk in enumerate(k.b))
    ph = 2 * omega * t + k.alpha
    rho = rho + k.cbar * (np.sin(ph) * m["C1"] + np.cos(ph) * m["C2"])
    up = np.exp(omega * (t - t_f))
    down = np.exp(-omega * (t - t_in))
    th = [omega * t + b for b in k.beta]
    rho = rho + up * (2 * k.d[0] * (m["F1"] * np.cos(th[0]) + m["F3"] * np.sin(th[0]))
                      + 2 * k.d[1] * (m["F2"] * np.cos(th[1]) + m["F4"] * np.sin(th[1])))
    rho = rho + down * (2 * k.d[2] * (m["F1"].T * np.cos(th[2]) + m["F3"].T * np.sin(th[2]))
                        + 2 * k.d[3] * (m["F2"].T * np.cos(th[3]) + m["F4"].T * np.sin(th[3])))
    rho = rho + k.e_plus * m["E"] * up ** 2 + k.e_minus * m["E"].T * down ** 2
    return rho


def four_state_oscillating_pure(t, omega: float, t_bar: float = 0.0):
    """Pure state with g0 = 0 whose local probabilities oscillate undamped.

    Returns (q_tilde, q_bar, rho'). Both wave functions change sign, so no
    nonnegative boundary pair can produce them.
    """
    c, s = np.cos(omega * t), np.sin(omega * t)
    Q = np.array([c, s, -s, -c]) / np.sqrt(2.0)
    qt = np.exp(-omega * (t - t_bar)) * Q
    qb = np.exp(omega * (t - t_bar)) * Q
    return qt, qb, np.outer(qt, qb)


def four_state_oscillating_boundaries(omega, t_in, t_f, t_bar=0.0):
    """(q_tilde(t_in), q_bar(t_f)) of the oscillating pure state."""
    qt, _, _ = four_state_oscillating_pure(t_in, omega, t_bar)
    _, qb, _ = four_state_oscillating_pure(t_f, omega, t_bar)
    return qt, qb


def four_state_bulk_amplitude(rho) -> tuple:
    """(cbar, phase) of the undamped part of rho'.

    C1 and C2 are orthogonal to the other constant matrices with squared
    norm 8, so the projections give cbar sin(phase) and cbar cos(phase).
    """
    r = np.real(np.asarray(rho))
    s = float(np.sum(FOUR_STATE_MATRICES["C1"].real * r)) / 8
    c = float(np.sum(FOUR_STATE_MATRICES["C2"].real * r)) / 8
    return float(np.hypot(s, c)), float(np.arctan2(s, c))


def four_state_amplitude_envelope(eta: float, G: int, samples: int, rng, t_index=None) -> float:
    """Largest cbar seen at one slice over random nonnegative boundaries.

    An empirical lower estimate of the admissible amplitude; no closed
    form is assumed.
    """
    from .boundary import BoundaryCondition, solve_boundary
    chain = four_state_chain(eta, G)
    k = G // 2 if t_index is None else t_index
    best = 0.0
    for _ in range(samples):
        # sparse boundaries reach larger amplitudes than dense ones
        qi = rng.uniform(0, 1, 4) * (rng.uniform(0, 1, 4) < 0.6)
        qf = rng.uniform(0, 1, 4) * (rng.uniform(0, 1, 4) < 0.6)
        if not qi.any() or not qf.any():
            continue
        try:
            tr = solve_boundary(chain, BoundaryCondition.pure(qi, qf))
        except (ArithmeticError, ValidationError):
            continue
        best = max(best, four_state_bulk_amplitude(tr.rho[k])[0])
    return best


@dataclass(frozen=True)
class DampedFit:
    omega: float
    gamma: float
    p_star: float
    peaks: np.ndarray


def fit_damped_oscillation(t, p, floor: float = 1e-9) -> DampedFit:
    """Frequency and damping rate of p(t) = p* + c cos(omega t + a) e^{-gamma t}.

    p* is the last sample; omega comes from the mean spacing of local maxima
    of |p - p*| (half periods), gamma from a least-squares line through the
    logarithm of those maxima. Maxima below floor * max|p - p*| are treated
    as rounding noise and ignored.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    p_star = float(p[-1])
    x = np.abs(p - p_star)
    cut = floor * float(x.max())
    idx = [k for k in range(1, len(x) - 1) if x[k] >= x[k - 1] and x[k] > x[k + 1] and x[k] > cut]
    if len(idx) < 3:
        raise ValidationError("not enough oscillation peaks for a fit")
    tp = t[idx]
    half = float(np.mean(np.diff(tp)))
    slope = np.polyfit(tp, np.log(x[idx]), 1)[0]
    return DampedFit(float(np.pi / half), float(-slope), p_star, tp)


# ---------------------------------------------------------------------------
# Unique jump chains

def _check_perm(perm):
    perm = tuple(int(x) for x in perm)
    if sorted(perm) != list(range(len(perm))) or not perm:
        raise ValidationError("not a permutation")
    return perm


def unique_jump_step(perm, signs=None) -> StepOperator:
    """S[perm[tau], tau] = 1 (or signs[tau]); all other entries vanish."""
    perm = _check_perm(perm)
    n = len(perm)
    S = np.zeros((n, n))
    s = np.ones(n) if signs is None else np.asarray(signs, dtype=float)
    if s.shape != (n,) or not np.all(np.abs(s) == 1):
        raise ValidationError("signs must be a vector of +-1")
    S[list(perm), range(n)] = s
    return StepOperator(S, classical=bool((s > 0).all()))


def unique_jump_chain(perm, G: int = 1, signs=None, eps: float = 1.0, t_in: float = 0.0) -> ChainSpec:
    S = unique_jump_step(perm, signs)
    n = S.N
    M = int(np.log2(n)) if n & (n - 1) == 0 else None
    return ChainSpec.uniform(S, G, eps=eps, t_in=t_in, M=M)


def is_unique_jump(S, tol: float = 0.0) -> bool:
    """Every column and row holds exactly one entry of modulus one."""
    S = np.asarray(getattr(S, "matrix", S))
    nz = np.abs(S) > tol
    return bool((nz.sum(0) == 1).all() and (nz.sum(1) == 1).all()
                and np.allclose(np.abs(S[nz]), 1.0, atol=1e-12))


# ---------------------------------------------------------------------------
# Three-spin chains: Bloch states, gates, partial conservation

def three_spin_values(k: int) -> np.ndarray:
    """Values of the listed spin s_k (k = 1, 2, 3) on the 8 states."""
    return spin_values(3, listed_spin_bit(k, 3))


def _spins_of(index):
    return tuple(int(three_spin_values(k)[index]) for k in (1, 2, 3))


def _index_of(spins):
    idx = 0
    for k, s in enumerate(spins, start=1):
        if s > 0:
            idx |= 1 << listed_spin_bit(k, 3)
    return idx


@dataclass(frozen=True)
class BlochState:
    r1: float
    r2: float
    r3: float

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.r1, self.r2, self.r3])

    @property
    def norm2(self) -> float:
        return float(self.vector @ self.vector)

    def is_pure(self, tol: float = 1e-12) -> bool:
        return abs(self.norm2 - 1.0) <= tol


def bloch_from_probabilities(p) -> BlochState:
    p = np.asarray(p, dtype=float)
    if p.shape != (8,):
        raise ValidationError("three-spin probabilities need 8 entries")
    if (p < -1e-12).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValidationError("probabilities must be nonnegative and sum to one")
    return BlochState(*(float(three_spin_values(k) @ p) for k in (1, 2, 3)))


def product_distribution(b: BlochState) -> np.ndarray:
    """Independent-spin probabilities with <s_k> = r_k; valid for |r_k| <= 1."""
    v = b.vector
    if (np.abs(v) > 1 + 1e-12).any():
        raise ValidationError("each Bloch component must lie in [-1, 1]")
    p = np.ones(8)
    for k in (1, 2, 3):
        p = p * 0.5 * (1 + v[k - 1] * three_spin_values(k))
    return p


def quantum_density_2x2(b: BlochState) -> np.ndarray:
    """1/2 (1 + r_k tau_k)."""
    if b.norm2 > 1.0 + 1e-12:
        raise ValidationError("Bloch vector outside the unit ball")
    return 0.5 * (np.eye(2) + sum(r * t for r, t in zip(b.vector, PAULI)))


def bloch_from_density(rho) -> BlochState:
    rho = np.asarray(rho)
    return BlochState(*(float(np.real(np.trace(rho @ t))) for t in PAULI))


_S2 = 1.0 / np.sqrt(2.0)

# name -> (spin map, unitary). The spin map acts on (s1, s2, s3).
GATE_CATALOG = {
    "H": (lambda s: (s[2], -s[1], s[0]), _S2 * np.array([[1, 1], [1, -1]], dtype=complex)),
    "U31": (lambda s: (-s[2], s[1], s[0]), _S2 * np.array([[1, 1], [-1, 1]], dtype=complex)),
    "UX": (lambda s: (s[0], -s[1], -s[2]), TAU1.copy()),
    "UY": (lambda s: (-s[0], s[1], -s[2]), 1j * TAU2),
    "UZ": (lambda s: (-s[0], -s[1], s[2]), TAU3.copy()),
    "U12": (lambda s: (s[1], -s[0], s[2]), np.array([[1, 0], [0, -1j]])),
    "U23": (lambda s: (s[0], s[2], -s[1]), 1j * _S2 * np.array([[1, 1j], [1j, 1]])),
}
# every gate above is realized by a nonnegative permutation of the 8 states
GATE_POSITIVE = {name: True for name in GATE_CATALOG}


def three_spin_gate(gate: str):
    """(S, U): 8x8 unique jump step operator and the associated 2x2 unitary."""
    if gate not in GATE_CATALOG:
        raise ValidationError(f"unknown gate {gate!r}; known: {sorted(GATE_CATALOG)}")
    fmap, U = GATE_CATALOG[gate]
    perm = [_index_of(fmap(_spins_of(i))) for i in range(8)]
    return unique_jump_step(perm), U.copy()


def gate_word(word):
    """Step operators in time order and the product unitary U_last ... U_first."""
    if isinstance(word, str):
        word = word.split()
    ops, U = [], np.eye(2, dtype=complex)
    for g in word:
        S, Ug = three_spin_gate(g)
        ops.append(S)
        U = Ug @ U
    return ops, U


def unitary_bloch_map(U, b: BlochState) -> BlochState:
    rho = quantum_density_2x2(b)
    return bloch_from_density(U @ rho @ U.conj().T)


@dataclass(frozen=True)
class SPlParams:
    a_p: float = 0.0
    a_m: float = 0.0
    b_p: float = 0.0
    b_m: float = 0.0
    c_p: float = 0.0
    c_m: float = 0.0
    d_p: float = 0.0
    d_m: float = 0.0

    def __post_init__(self):
        for name in ("a_p", "a_m", "b_p", "b_m", "c_p", "c_m", "d_p", "d_m"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} = {v} outside [0, 1]")

    def block(self, sign: str) -> np.ndarray:
        a, b, c, d = (getattr(self, f"{x}_{sign}") for x in "abcd")
        return np.array([[1 - a, 0, c, 0],
                         [0, 1 - b, 0, d],
                         [a, 0, 1 - c, 0],
                         [0, b, 0, 1 - d]], dtype=float)

    def eigenvalues(self) -> np.ndarray:
        """Closed-form spectrum: four ones, then lambda_+-, lambda'_+-."""
        return np.array([1, 1, 1, 1,
                         1 - self.a_p - self.c_p, 1 - self.a_m - self.c_m,
                         1 - self.b_p - self.d_p, 1 - self.b_m - self.d_m], dtype=float)

    @property
    def regular(self) -> bool:
        return all(abs(x - 1.0) > 0 for x in (self.a_p + self.c_p, self.a_m + self.c_m,
                                               self.b_p + self.d_p, self.b_m + self.d_m))

    @property
    def symmetric(self) -> bool:
        return self.a_p == self.c_p and self.a_m == self.c_m and self.b_p == self.d_p and self.b_m == self.d_m


def three_spin_pl(p: SPlParams) -> StepOperator:
    z = np.zeros((4, 4))
    S = np.block([[p.block("p"), z], [z, p.block("m")]])
    return StepOperator(S, classical=True)


# sector pairs (first state, partner) and the parameters that weight them
_PL_PAIRS = ((0, 2, "a", "c", "p"), (1, 3, "b", "d", "p"), (4, 6, "a", "c", "m"), (5, 7, "b", "d", "m"))


def spl_bulk_probabilities(p: SPlParams, q_in, q_f) -> np.ndarray:
    """p_tau(t_in) for an infinitely long chain.

    Backward evolution uses S^T, whose unit eigenvector on each pair is
    (1, 1); the final conjugate wave function is projected onto it along the
    decaying eigenvector (x, -y) of S^T. Normalized to Z = 1.
    """
    q_in = np.asarray(q_in, dtype=float)
    q_f = np.asarray(q_f, dtype=float)
    qb = np.zeros(8)
    for i, j, x, y, s in _PL_PAIRS:
        u, v = getattr(p, f"{x}_{s}"), getattr(p, f"{y}_{s}")
        if u + v == 0:
            qb[i], qb[j] = q_f[i], q_f[j]
            continue
        f = (v * q_f[i] + u * q_f[j]) / (u + v)
        qb[i] = qb[j] = f
    out = q_in * qb
    return out / out.sum()


def spl_bulk_probabilities_literal(p: SPlParams, q_in, q_f) -> np.ndarray:
    """p_tau(t_in) with the final conjugate wave function expanded in the
    unit eigenvectors w of S and decaying eigenvectors u of S, keeping only
    the w part. Equal to spl_bulk_probabilities when S is symmetric.
    """
    q_in = np.asarray(q_in, dtype=float)
    q_f = np.asarray(q_f, dtype=float)
    out = np.zeros(8)
    for i, j, x, y, s in _PL_PAIRS:
        u, v = getattr(p, f"{x}_{s}"), getattr(p, f"{y}_{s}")
        n = np.hypot(u, v)
        if n == 0:
            out[i], out[j] = q_in[i] * q_f[i], q_in[j] * q_f[j]
            continue
        # q_f = f w + g u with w = (v, u)/n, u = (1, -1)/sqrt 2 on the pair
        f = n * (q_f[i] + q_f[j]) / (u + v)
        out[i] = f * v * q_in[i] / n
        out[j] = f * u * q_in[j] / n
    return out / out.sum()


def spl_unit_eigenvectors(p: SPlParams) -> np.ndarray:
    """Columns: the four eigenvalue-one eigenvectors of S_pl."""
    cols = []
    for i, j, x, y, s in _PL_PAIRS:
        u, v = getattr(p, f"{x}_{s}"), getattr(p, f"{y}_{s}")
        w = np.zeros(8)
        n = np.hypot(u, v)
        if n == 0:
            w[i] = 1.0
        else:
            w[i], w[j] = v / n, u / n
        cols.append(w)
    return np.array(cols).T


def spl_bulk_length(p: SPlParams, tol: float = 1e-10) -> int:
    """Smallest G with |lambda|^G < tol for every eigenvalue of modulus below one."""
    lam = np.abs(p.eigenvalues()[4:])
    lam = lam[lam < 1]
    if lam.size == 0:
        raise UnsupportedCaseError("no contracting eigenvalue")
    m = lam.max()
    if m == 0:
        return 1
    return int(np.ceil(np.log(tol) / np.log(m))) + 1


# ---------------------------------------------------------------------------
# Diagonal Ising model at infinite coupling: particle-number sectors

@dataclass(frozen=True)
class FermionSector:
    """States of one particle-number sector and the one-step shift on them.

    F = 1 states are positions x; F = 2 states are pairs (x, y) with x < y,
    standing for the antisymmetric function q(x, y) = -q(y, x).
    """
    Mx: int
    F: int
    states: tuple
    S: np.ndarray
    eps: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def W(self) -> np.ndarray:
        """(S - S^-1) / 2 eps; S is orthogonal so S^-1 = S^T."""
        return (self.S - self.S.T) / (2 * self.eps)

    @property
    def P(self) -> np.ndarray:
        """Momentum with W = -i P."""
        return 1j * self.W

    def evolve(self, q, steps: int = 1) -> np.ndarray:
        q = np.asarray(q)
        for _ in range(steps):
            q = self.S @ q
        return q

    def pair_function(self, q) -> np.ndarray:
        """Full antisymmetric Mx x Mx matrix q(x, y) for an F = 2 vector."""
        if self.F != 2:
            raise ValidationError("pair function exists for F = 2")
        out = np.zeros((self.Mx, self.Mx), dtype=np.result_type(q, float))
        for k, (x, y) in enumerate(self.states):
            out[x, y] = q[k]
            out[y, x] = -q[k]
        return out

    def sector_vector(self, Q) -> np.ndarray:
        Q = np.asarray(Q)
        return np.array([Q[x, y] for x, y in self.states])


def diagonal_ising_sector(Mx: int, F: int, eps: float = 1.0) -> FermionSector:
    """Shift by one site per step on a periodic ring: q(t + eps, x) = q(t, x - eps)."""
    if Mx < 1:
        raise ValidationError("need at least one site")
    if F not in (0, 1, 2):
        raise UnsupportedCaseError("only F = 0, 1, 2 sectors are provided")
    if F > Mx:
        raise ValidationError("more particles than sites")
    if F == 0:
        return FermionSector(Mx, 0, ((),), np.ones((1, 1)), eps)
    if F == 1:
        states = tuple(range(Mx))
        S = np.zeros((Mx, Mx))
        for x in states:
            S[(x + 1) % Mx, x] = 1.0
        return FermionSector(Mx, 1, states, S, eps)
    states = tuple(combinations(range(Mx), 2))
    pos = {st: k for k, st in enumerate(states)}
    S = np.zeros((len(states), len(states)))
    for k, (x, y) in enumerate(states):
        nx, ny = (x + 1) % Mx, (y + 1) % Mx
        # reordering the pair flips the sign of the antisymmetric amplitude
        if nx < ny:
            S[pos[(nx, ny)], k] = 1.0
        else:
            S[pos[(ny, nx)], k] = -1.0
    return FermionSector(Mx, 2, states, S, eps)


def diagonal_ising_step(Mx: int) -> StepOperator:
    """Shift s'(x + eps) = s(x) on all 2**Mx configurations (bit x = site x)."""
    n = 1 << Mx
    mask = n - 1
    perm = [((i << 1) | (i >> (Mx - 1))) & mask for i in range(n)]
    return unique_jump_step(perm)


def particle_number(Mx: int) -> np.ndarray:
    return np.array([bin(i).count("1") for i in range(1 << Mx)], dtype=float)


def ising_step_unnormalized(beta: float) -> np.ndarray:
    """exp(beta s s') transfer matrix, for checks of the normalization."""
    s = spin_values(1, 0)
    return np.exp(beta * np.outer(s, s))


def normalized_ising_from_action(beta: float) -> StepOperator:
    return normalize_step(StepOperator(ising_step_unnormalized(beta), classical=True))
