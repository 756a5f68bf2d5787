"""Basis changes, similarity transformations and derived frames.

A ``System`` bundles a chain of step operators, a pure boundary pair and a
set of slice-local operators. Every transform maps the whole bundle so
that Z and all expectation values stay fixed. Expectations are bilinear
(q_bar^T A q_tilde / Z, no complex conjugation), so complex frames work
without special cases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularOperatorError, UnsupportedCaseError, ValidationError
from .evolution import integrate_von_neumann
from .lattice_core import COND_LIMIT, as_matrix, condition_number, ordered_product

ORTHO_TOL = 1e-10
UNIT_TOL = 1e-8
EIG_FLOOR = 1e-14
COMMUTE_TOL = 1e-10

KINDS = ("basis-change-orthogonal", "global", "local", "sign-gauge")


def _arr(a):
    a = np.asarray(as_matrix(a))
    return a.astype(complex) if np.iscomplexobj(a) else a.astype(float)


def _inv(D, what="transformation"):
    c = condition_number(D)
    if not (np.isfinite(c) and c <= COND_LIMIT):
        raise SingularOperatorError(f"{what} is singular (condition number {c:.3g})")
    return scipy.linalg.inv(D)


@dataclass(frozen=True)
class System:
    """Chain S(t_in)..S(t_f - eps), boundary pair and local operators.

    observables maps a name to (k, A): operator A at slice index k.
    """
    operators: tuple
    q_in: np.ndarray
    q_f: np.ndarray
    observables: dict = field(default_factory=dict)

    def __post_init__(self):
        ops = tuple(_arr(S) for S in self.operators)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "q_in", _arr(self.q_in))
        object.__setattr__(self, "q_f", _arr(self.q_f))
        obs = {k: (int(i), _arr(A)) for k, (i, A) in dict(self.observables).items()}
        for name, (i, A) in obs.items():
            if not 0 <= i <= len(ops):
                raise ValidationError(f"observable {name!r} sits outside the chain")
        object.__setattr__(self, "observables", obs)

    @property
    def G(self) -> int:
        return len(self.operators)

    @property
    def N(self) -> int:
        return len(self.q_in)


def wave_functions(sys: System):
    """(q_tilde(t_k), q_bar(t_k)) for k = 0..G."""
    qt = [sys.q_in]
    for S in sys.operators:
        qt.append(S @ qt[-1])
    qb = [sys.q_f]
    for S in reversed(sys.operators):
        qb.append(S.T @ qb[-1])
    return qt, qb[::-1]


def partition_value(sys: System):
    return sys.q_f @ ordered_product(sys.operators, sys.N) @ sys.q_in


def slice_density(sys: System, k: int):
    qt, qb = wave_functions(sys)
    return np.outer(qt[k], qb[k]) / (qb[k] @ qt[k])


def expectations(sys: System) -> dict:
    """Z and <A> for every registered observable."""
    qt, qb = wave_functions(sys)
    Z = qb[0] @ qt[0]
    if Z == 0:
        raise ValidationError("Z = 0")
    out = {"Z": Z}
    for name, (k, A) in sys.observables.items():
        out[name] = qb[k] @ A @ qt[k] / Z
    return out


@dataclass(frozen=True)
class SimilaritySequence:
    """D(t) for every slice t_in..t_f (G + 1 matrices)."""
    matrices: tuple
    kind: str = "local"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}")
        mats = tuple(_arr(D) for D in self.matrices)
        if not mats:
            raise ValidationError("empty sequence")
        n = mats[0].shape
        for D in mats:
            if D.ndim != 2 or D.shape != n or n[0] != n[1]:
                raise ValidationError("similarity matrices must be square with equal size")
            c = condition_number(D)
            if not (np.isfinite(c) and c <= COND_LIMIT):
                raise SingularOperatorError(f"sequence member is singular (condition number {c:.3g})")
        if self.kind == "sign-gauge":
            for D in mats:
                off = D - np.diag(np.diag(D))
                if np.abs(off).max() > 0 or not np.all(np.abs(np.diag(D)) == 1):
                    raise ValidationError("sign gauge members must be diagonal +-1")
        if self.kind == "basis-change-orthogonal":
            for D in mats:
                if np.abs(D.T @ D - np.eye(n[0])).max() > ORTHO_TOL:
                    raise ValidationError("orthogonal kind needs D^T D = 1")
        object.__setattr__(self, "matrices", mats)

    def __len__(self):
        return len(self.matrices)


def _map_observables(sys, D_of):
    return {name: (k, D_of(k) @ A @ _inv(D_of(k))) for name, (k, A) in sys.observables.items()}


def change_basis(V, sys: System) -> System:
    """Orthogonal change of basis: S' = V S V^T, A' = V A V^T, q -> V q."""
    V = _arr(V)
    if V.ndim != 2 or np.abs(V.T @ V - np.eye(V.shape[0])).max() > ORTHO_TOL:
        raise ValidationError("basis change needs an orthogonal matrix")
    ops = tuple(V @ S @ V.T for S in sys.operators)
    obs = {name: (k, V @ A @ V.T) for name, (k, A) in sys.observables.items()}
    return System(ops, V @ sys.q_in, V @ sys.q_f, obs)


def global_similarity(D, sys: System) -> System:
    """S' = D S D^-1, q_tilde' = D q_tilde, q_bar' = D^-T q_bar, A' = D A D^-1."""
    D = _arr(D)
    Di = _inv(D)
    ops = tuple(D @ S @ Di for S in sys.operators)
    obs = {name: (k, D @ A @ Di) for name, (k, A) in sys.observables.items()}
    return System(ops, D @ sys.q_in, Di.T @ sys.q_f, obs)


def local_similarity(seq: SimilaritySequence, sys: System) -> System:
    """S'(t) = D(t + eps) S(t) D^-1(t) with slice-wise maps of states and operators."""
    if len(seq) != sys.G + 1:
        raise ValidationError("sequence needs one matrix per slice (G + 1)")
    D = seq.matrices
    inv = [_inv(d, "sequence member") for d in D]
    ops = tuple(D[k + 1] @ S @ inv[k] for k, S in enumerate(sys.operators))
    obs = {name: (k, D[k] @ A @ inv[k]) for name, (k, A) in sys.observables.items()}
    return System(ops, D[0] @ sys.q_in, inv[-1].T @ sys.q_f, obs)


def sign_gauge(signs) -> SimilaritySequence:
    """Diagonal +-1 matrices from a (G + 1, N) array of signs."""
    s = np.asarray(signs, dtype=float)
    if s.ndim != 2 or not np.all(np.abs(s) == 1):
        raise ValidationError("signs must be a (G + 1, N) array of +-1")
    return SimilaritySequence(tuple(np.diag(row) for row in s), "sign-gauge")


def is_positive_orthogonal(S, tol: float = 1e-12) -> bool:
    S = np.asarray(as_matrix(S), dtype=float)
    return bool((S >= -tol).all() and np.abs(S.T @ S - np.eye(S.shape[0])).max() <= tol)


def is_permutation(S, tol: float = 1e-12) -> bool:
    S = np.asarray(as_matrix(S), dtype=float)
    ones = np.abs(S - 1) <= tol
    zeros = np.abs(S) <= tol
    return bool((ones | zeros).all() and (ones.sum(0) == 1).all() and (ones.sum(1) == 1).all())


# ---------------------------------------------------------------------------
# classical basis for unitary chains

def classical_basis_for_quantum(unitary_ops, positive_ops) -> SimilaritySequence:
    """D(t + eps) = S'(t) D(t) S^dagger(t) from D(t_in) = 1.

    Maps the unitary chain S onto the given nonnegative chain S'.
    """
    U = [_arr(S) for S in unitary_ops]
    P = [_arr(S) for S in positive_ops]
    if len(U) != len(P):
        raise ValidationError("chains differ in length")
    if not U:
        raise ValidationError("empty chain")
    n = U[0].shape[0]
    for S, Sp in zip(U, P):
        if S.shape != (n, n) or Sp.shape != (n, n):
            raise ValidationError("dimension mismatch")
        if np.abs(S @ S.conj().T - np.eye(n)).max() > 1e-10:
            raise ValidationError("source chain is not unitary")
        if np.iscomplexobj(Sp) or (Sp < 0).any():
            raise ValidationError("target chain must be real and nonnegative")
    D = [np.eye(n, dtype=complex)]
    for S, Sp in zip(U, P):
        D.append(Sp @ D[-1] @ S.conj().T)
    return SimilaritySequence(tuple(D), "local")


def _phase_order(lam):
    ang = np.angle(lam)
    return np.lexsort((np.arange(len(lam)), np.round(ang, 12)))


def classical_basis_static(S, S_jump, G: int = 1) -> dict:
    """Two-step construction for a t-independent unitary S.

    S_jump is a unique jump matrix whose nonzero entries have modulus one.
    Both are unitarily diagonalized (complex Schur form), eigenvalues are
    paired by sorted phase with ties broken by index, and V = W~ W gives
    S'' = V S V^dagger. Phase matrices D~(t) then remove the phases of S''
    slice by slice, so S'(t) = D~(t + eps) S'' D~*(t) is a 0/1 permutation.
    """
    S = _arr(S)
    J = _arr(S_jump)
    n = S.shape[0]
    if np.abs(S @ S.conj().T - np.eye(n)).max() > 1e-10:
        raise ValidationError("S must be unitary")
    nz = np.abs(J) > 1e-12
    if not ((nz.sum(0) == 1).all() and (nz.sum(1) == 1).all() and np.allclose(np.abs(J[nz]), 1)):
        raise ValidationError("S_jump must be a unique jump matrix with unit-modulus entries")
    T, Z = scipy.linalg.schur(S.astype(complex), output="complex")
    Tj, Zj = scipy.linalg.schur(J.astype(complex), output="complex")
    lam, lamj = np.diag(T), np.diag(Tj)
    o, oj = _phase_order(lam), _phase_order(lamj)
    if np.abs(lam[o] - lamj[oj]).max() > 1e-8:
        raise ValidationError("S and S_jump have different spectra")
    W = Z[:, o].conj().T
    Wt = Zj[:, oj]
    V = Wt @ W
    S2 = V @ S @ V.conj().T
    # phases: S2[pi(j), j] = exp(i theta_j); d_pi(j)(t+1) = d_j(t) exp(-i theta_j)
    perm = np.argmax(np.abs(J), axis=0)
    theta = np.angle(S2[perm, np.arange(n)])
    d = [np.ones(n, dtype=complex)]
    for _ in range(G):
        nd = np.empty(n, dtype=complex)
        nd[perm] = d[-1] * np.exp(-1j * theta)
        d.append(nd)
    Dt = [np.diag(x) for x in d]
    S_prime = [Dt[k + 1] @ S2 @ Dt[k].conj() for k in range(G)]
    return {"V": V, "S2": S2, "phases": Dt, "S_prime": S_prime,
            "sequence": SimilaritySequence(tuple(D @ V for D in Dt), "local")}


# ---------------------------------------------------------------------------
# unitary basis for nonnegative chains

def _hermitian_sqrt(B):
    lam, U = np.linalg.eigh(B)
    if lam.min() < EIG_FLOOR * max(1.0, lam.max()):
        raise SingularOperatorError(f"B lost positive definiteness (smallest eigenvalue {lam.min():.3g})")
    return (U * np.sqrt(lam)) @ U.conj().T


def unitary_basis_for_classical(ops) -> tuple:
    """(sequence D(t), B(t) list, transformed S'(t) list).

    B(t + eps) = S(t) B(t) S(t)^T from B(t_in) = 1, and D^-1 = B^{1/2}
    (Hermitian square root), which makes every S'(t) unitary.
    """
    ops = [_arr(S) for S in ops]
    if not ops:
        raise ValidationError("empty chain")
    n = ops[0].shape[0]
    for S in ops:
        c = condition_number(S)
        if not (np.isfinite(c) and c <= COND_LIMIT):
            raise SingularOperatorError("chain member is singular")
    B = [np.eye(n)]
    for S in ops:
        Bn = S @ B[-1] @ S.T
        B.append(0.5 * (Bn + Bn.T))
    Dinv = [_hermitian_sqrt(b) for b in B]
    D = [scipy.linalg.inv(x) for x in Dinv]
    S_prime = [D[k + 1] @ S @ Dinv[k] for k, S in enumerate(ops)]
    return SimilaritySequence(tuple(D), "local"), B, S_prime


# ---------------------------------------------------------------------------
# Heisenberg picture

@dataclass(frozen=True)
class HeisenbergFrame:
    U: tuple          # U(t_k, t_in) = S(t_k - eps) ... S(t_in), k = 0..G

    def operator(self, A, k: int) -> np.ndarray:
        Uk = self.U[k]
        c = condition_number(Uk)
        if not (np.isfinite(c) and c <= COND_LIMIT):
            raise SingularOperatorError(f"accumulated evolution is singular (condition number {c:.3g})")
        # accuracy is limited by cond(U), which grows along contracting chains
        return scipy.linalg.solve(Uk, _arr(A) @ Uk)

    def expectation(self, A, k: int, q_in, q_f):
        """q_bar'^T(t_f) A_H(t) q_tilde(t_in) / Z with q_bar' = U(t_f)^T q_bar(t_f)."""
        q_in = _arr(q_in)
        qb = self.U[-1].T @ _arr(q_f)
        return qb @ self.operator(A, k) @ q_in / (qb @ q_in)


def heisenberg_picture(ops) -> HeisenbergFrame:
    ops = [_arr(S) for S in ops]
    for S in ops:
        c = condition_number(S)
        if not (np.isfinite(c) and c <= COND_LIMIT):
            raise SingularOperatorError("Heisenberg frame needs a regular chain")
    n = ops[0].shape[0] if ops else None
    if n is None:
        raise ValidationError("empty chain")
    U = [np.eye(n)]
    for S in ops:
        U.append(S @ U[-1])
    return HeisenbergFrame(tuple(U))


# ---------------------------------------------------------------------------
# spectral sectors

@dataclass(frozen=True)
class SectorDecomposition:
    eigenvalues: np.ndarray
    unit: np.ndarray             # indices into eigenvalues with |lambda| = 1
    contracting: np.ndarray      # the remaining indices
    alphas: np.ndarray           # phases of the unit eigenvalues
    transform: np.ndarray        # real D~ with D~ S D~^-1 block diagonal
    S_blocked: np.ndarray
    W_blocked: np.ndarray
    n_env: int                   # size of the environment block (leading)
    W1: np.ndarray
    W_unit: np.ndarray           # real antisymmetric unit-sector generator
    flags: dict

    @property
    def H2(self) -> np.ndarray:
        """Hermitian unit-sector Hamiltonian, W_unit = -i H2."""
        return 1j * self.W_unit


def sector_decomposition(S, eps: float = 1.0) -> SectorDecomposition:
    """Split a t-independent S into the unit-modulus sector and the rest.

    Real basis: real eigenvectors, and (Re e, Im e) for each complex pair.
    Environment directions come first, unit-modulus directions last. A
    unit pair e^{+-i alpha} then carries the block (sin alpha / eps)
    [[0, 1], [-1, 0]] in the generator.
    """
    S = np.asarray(as_matrix(S), dtype=float)
    n = S.shape[0]
    lam, E = np.linalg.eig(S)
    if np.linalg.cond(E) > COND_LIMIT:
        raise UnsupportedCaseError("S is defective (not diagonalizable)")
    unit_mask = np.abs(np.abs(lam) - 1.0) <= UNIT_TOL
    cols_env, cols_unit = [], []
    done = np.zeros(n, dtype=bool)
    for k in range(n):
        if done[k]:
            continue
        target = cols_unit if unit_mask[k] else cols_env
        if abs(lam[k].imag) <= 1e-12 * max(1.0, abs(lam[k])):
            target.append(E[:, k].real)
            done[k] = True
            continue
        # find the conjugate partner
        cand = [j for j in range(n) if not done[j] and j != k and abs(lam[j] - lam[k].conj()) <= 1e-9 * max(1, abs(lam[k]))]
        if not cand:
            raise UnsupportedCaseError("complex eigenvalue without conjugate partner")
        j = cand[0]
        e = E[:, k] if lam[k].imag > 0 else E[:, j]
        target.append(e.real)
        target.append(e.imag)
        done[k] = done[j] = True
    T = np.array(cols_env + cols_unit).T
    Dt = _inv(T, "sector basis")
    Sb = Dt @ S @ T
    ne = len(cols_env)
    # the blocks decouple, so each gets its own generator; a singular
    # environment block leaves the unit sector untouched
    Wb = np.zeros_like(Sb)
    ok = {}
    for name, sl in (("env", slice(0, ne)), ("unit", slice(ne, n))):
        B = Sb[sl, sl]
        if B.size == 0:
            ok[name] = True
            continue
        ok[name] = condition_number(B) <= COND_LIMIT
        Wb[sl, sl] = (B - scipy.linalg.inv(B)) / (2 * eps) if ok[name] else np.nan
    W_unit = Wb[ne:, ne:]
    flags = {"all_unit_modes_in_quantum_sector": True,
             "environment_regular": ok["env"],
             "unit_block_antisymmetric": bool(ok["unit"] and np.abs(W_unit + W_unit.T).max(initial=0.0) <= 1e-8)}
    idx = np.arange(n)
    return SectorDecomposition(lam, idx[unit_mask], idx[~unit_mask], np.angle(lam[unit_mask]),
                               Dt, Sb, Wb, ne, Wb[:ne, :ne], W_unit, flags)


# ---------------------------------------------------------------------------
# quantum subsystem

def quantum_subsystem_check(W, rho, t_span=(0.0, 1.0), dt: float = 1e-3, tol: float = COMMUTE_TOL) -> dict:
    """Conditions [J, rho'] = 0 and [[J, H], rho'] = 0 for W = J - i H.

    When both hold, rho' is evolved with the pure von Neumann equation
    d rho / dt = -i [H, rho] and with the full [W, rho]; the largest
    deviation between the two is reported.
    """
    W = np.asarray(as_matrix(W), dtype=float)
    rho = np.asarray(as_matrix(rho))
    J = 0.5 * (W + W.T)
    H = 0.5j * (W - W.T)
    comm = lambda A, B: A @ B - B @ A
    scale = max(1.0, float(np.abs(W).max()))
    r1 = float(np.abs(comm(J, rho)).max())
    r2 = float(np.abs(comm(comm(J, H), rho)).max())
    report = {"J_commutes": r1 <= tol * scale, "closure": r2 <= tol * scale * scale,
              "residual_J": r1, "residual_closure": r2, "HJ_commutator": float(np.abs(comm(H, J)).max())}
    report["ok"] = report["J_commutes"] and report["closure"]
    if report["ok"]:
        _, full = integrate_von_neumann(rho.astype(complex), W.astype(complex), t_span, dt)
        Hc = -1j * H
        _, pure = integrate_von_neumann(rho.astype(complex), Hc, t_span, dt)
        report["evolution_deviation"] = float(np.abs(full - pure).max())
        report["final"] = pure[-1]
    return report
