"""Boundary conditions, partition function and the two-sided boundary solver."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NormalizationError, SingularOperatorError, ValidationError
from .lattice_core import COND_LIMIT, ChainSpec, as_matrix, condition_number, ordered_product

ENUM_LIMIT = 24
UNIT_TOL = 1e-8


@dataclass(frozen=True)
class BoundaryCondition:
    """kind is 'pure', 'mixed' or 'periodic'.

    pure/mixed: components is a tuple of (w_alpha, q_in, q_f).
    periodic: closing is the operator linking t_f back to t_in, or None to
    reuse S of a t-independent chain.
    """
    kind: str
    components: tuple = ()
    closing: np.ndarray | None = None

    @classmethod
    def pure(cls, q_in, q_f) -> "BoundaryCondition":
        return cls("pure", ((1.0, _vec(q_in), _vec(q_f)),))

    @classmethod
    def mixed(cls, components) -> "BoundaryCondition":
        comps = tuple((float(w), _vec(a), _vec(b)) for w, a, b in components)
        if not comps:
            raise ValidationError("mixed boundary needs at least one component")
        ws = np.array([c[0] for c in comps])
        if (ws < 0).any() or abs(ws.sum() - 1.0) > 1e-12:
            raise ValidationError("mixture weights must be nonnegative and sum to one")
        n = {len(c[1]) for c in comps} | {len(c[2]) for c in comps}
        if len(n) != 1:
            raise ValidationError("boundary vectors have different lengths")
        return cls("mixed", comps)

    @classmethod
    def periodic(cls, closing=None) -> "BoundaryCondition":
        c = None if closing is None else np.asarray(as_matrix(closing), dtype=float)
        return cls("periodic", (), c)

    @property
    def N(self):
        if self.components:
            return len(self.components[0][1])
        return None if self.closing is None else self.closing.shape[0]


def _vec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValidationError("boundary data must be vectors")
    return v


@dataclass
class Trajectory:
    times: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    Z: float
    q_tilde: np.ndarray | None = None
    q_bar: np.ndarray | None = None
    raw_Z: float = 1.0
    diagnostics: dict = field(default_factory=dict)

    def wave_pair(self, k: int):
        from .evolution import WavePair
        if self.q_tilde is None:
            raise ValidationError("trajectory has no wave functions (mixed or periodic)")
        return WavePair(self.q_tilde[k], self.q_bar[k], float(self.times[k]))

    def expectation(self, A, k: int) -> float:
        return float(np.real(np.trace(as_matrix(A) @ self.rho[k])))


def _closing(chain: ChainSpec, bc: BoundaryCondition) -> np.ndarray:
    if bc.closing is not None:
        return bc.closing
    if chain.G == 0 or not chain.is_uniform():
        raise ValidationError("periodic boundary on a t-dependent chain needs an explicit closing operator")
    return chain.operators[0]


def _forward(chain, q):
    out = [np.asarray(q, dtype=float)]
    for S in chain.operators:
        out.append(S @ out[-1])
    return np.array(out)


def _backward(chain, qb):
    # q_bar(t) = S(t)^T q_bar(t + eps)
    out = [np.asarray(qb, dtype=float)]
    for S in reversed(chain.operators):
        out.append(S.T @ out[-1])
    return np.array(out[::-1])


def partition_function(chain: ChainSpec, bc: BoundaryCondition) -> float:
    """Raw partition function; mixtures sum w_alpha Z_alpha."""
    if bc.kind == "periodic":
        C = _closing(chain, bc)
        P = ordered_product(chain.operators, C.shape[0])
        return float(np.trace(C @ P))
    N = bc.N
    P = ordered_product(chain.operators, N)
    return float(sum(w * (qf @ P @ qi) for w, qi, qf in bc.components))


def _check_chain(chain, bc, allow_singular):
    if chain.G and bc.N is not None and chain.N != bc.N:
        raise ValidationError("boundary vectors do not match the chain size")
    if not allow_singular:
        for k, S in enumerate(chain.operators):
            c = condition_number(S)
            if not (np.isfinite(c) and c <= COND_LIMIT):
                raise SingularOperatorError(f"S at step {k} is singular (condition number {c:.3g})")


def solve_boundary(chain: ChainSpec, bc: BoundaryCondition, allow_singular: bool = False) -> Trajectory:
    """Two-sided solve: forward sweep for q_tilde, backward sweep for q_bar.

    Each pure component is rescaled so that its own Z equals one; the
    density matrix is the weighted sum of the normalized components. Raw
    partition functions are kept in diagnostics.
    """
    _check_chain(chain, bc, allow_singular)
    times = chain.times
    if bc.kind == "periodic":
        return _solve_periodic(chain, bc, times)
    rho = 0.0
    raw = []
    qt_keep = qb_keep = None
    for w, qi, qf in bc.components:
        qt = _forward(chain, qi)
        qb = _backward(chain, qf)
        Zs = np.einsum("ki,ki->k", qt, qb)
        Z = Zs[0]
        if Z == 0 or not np.isfinite(Z):
            raise NormalizationError("partition function vanishes; boundary cannot be normalized")
        raw.append(Z)
        rho = rho + w * np.einsum("ki,kj->kij", qt, qb) / Z
        if bc.kind == "pure":
            s = np.sqrt(abs(Z))
            qt_keep, qb_keep = qt / s, qb * (np.sign(Z) / s)
            drift = float(np.max(np.abs(Zs - Z)) / abs(Z))
    p = np.real(np.einsum("kii->ki", rho)).copy()
    diag = {"raw_Z_components": raw, "trace_error": float(np.max(np.abs(p.sum(axis=1) - 1)))}
    if bc.kind == "pure":
        diag["Z_drift"] = drift
    neg = np.argwhere(p < -1e-12)
    diag["negative_probabilities"] = [tuple(int(x) for x in ij) for ij in neg]
    raw_Z = float(sum(w * z for (w, _, _), z in zip(bc.components, raw)))
    return Trajectory(times, rho, p, 1.0, qt_keep, qb_keep, raw_Z, diag)


def _solve_periodic(chain, bc, times):
    C = _closing(chain, bc)
    N = C.shape[0]
    ops = chain.operators
    # U(t) = S(t-eps)...S(t_in), V(t) = S(t_f-eps)...S(t)
    U = [np.eye(N)]
    for S in ops:
        U.append(S @ U[-1])
    V = [np.eye(N)]
    for S in reversed(ops):
        V.append(V[-1] @ S)
    V = V[::-1]
    Z = float(np.trace(C @ V[0]))
    if Z == 0:
        raise NormalizationError("periodic partition function vanishes")
    rho = np.array([U[k] @ C @ V[k] / Z for k in range(len(ops) + 1)])
    p = np.real(np.einsum("kii->ki", rho)).copy()
    cyc = C @ U[-1]
    ev, vec = np.linalg.eig(cyc)
    unit = np.abs(np.abs(ev) - np.max(np.abs(ev))) <= UNIT_TOL * max(1.0, np.max(np.abs(ev)))
    diag = {
        "cycle_eigenvalues": ev,
        "fixed_subspace": vec[:, unit],
        "fixed_eigenvalues": ev[unit],
        "trace_error": float(np.max(np.abs(p.sum(axis=1) - 1))),
    }
    return Trajectory(times, rho, p, 1.0, None, None, Z, diag)


def weight_coefficients(chain: ChainSpec, bc: BoundaryCondition) -> dict:
    """All weights w[rho_1, ..., rho_{G+1}] (layer index tuples, t_in first).

    Built as a dense tensor by successive broadcasting; for pure or mixed
    boundaries the boundary factor is sum_alpha w_alpha q_f[rho_G+1] q_in[rho_1]
    and for periodic ones the closing matrix element.
    """
    N = chain.N if chain.G else bc.N
    layers = chain.G + 1
    if layers * np.log2(N) > ENUM_LIMIT + 1e-9:
        raise ValidationError(f"enumeration guard: (G+1)*M must not exceed {ENUM_LIMIT}")
    if bc.kind == "periodic":
        b = _closing(chain, bc)  # b[rho_1, rho_{G+1}]
    else:
        b = sum(w * np.outer(qi, qf) for w, qi, qf in bc.components)
    # T[rho_1, ..., rho_k]; start with the rho_1 axis only, carry the
    # boundary later.
    T = np.ones(N)
    for S in chain.operators:
        # new axis rho_{k+1}: T[..., rho_k] * S[rho_{k+1}, rho_k]
        T = T[..., None] * S.T.reshape((1,) * (T.ndim - 1) + S.T.shape)
    if layers == 1:
        T = T * np.diag(b)
    else:
        shape = [1] * layers
        shape[0] = N
        shape[-1] = N
        T = T * b.reshape(shape)
    return {idx: float(T[idx]) for idx in np.ndindex(T.shape)}


@dataclass
class PositivityReport:
    ok: bool
    negative_pairs: list
    negative_q_in: list
    negative_q_f: list
    chain_classical: bool


def positivity_check(q_in, q_f, chain: ChainSpec | None = None) -> PositivityReport:
    """Check b[rho, tau] = q_in[rho] q_f[tau] >= 0 and componentwise signs."""
    q_in = _vec(q_in)
    q_f = _vec(q_f)
    b = np.outer(q_in, q_f)
    pairs = [tuple(int(x) for x in ij) for ij in np.argwhere(b < 0)]
    ni = [int(k) for k in np.flatnonzero(q_in < 0)]
    nf = [int(k) for k in np.flatnonzero(q_f < 0)]
    classical = True if chain is None else all((S >= 0).all() for S in chain.operators)
    ok = not pairs and not ni and not nf and classical
    return PositivityReport(ok, pairs, ni, nf, classical)


def overlap(q_bar, q_tilde) -> float:
    q_bar = _vec(q_bar)
    q_tilde = _vec(q_tilde)
    if q_bar.shape != q_tilde.shape:
        raise ValidationError("vectors have different lengths")
    return float(q_bar @ q_tilde)


def unnormalized_expectation(q_bar, A, q_tilde):
    """(q_bar^T A' q_tilde, Z, value / Z)."""
    Z = overlap(q_bar, q_tilde)
    if Z == 0:
        raise NormalizationError("Z = 0")
    val = float(np.real(q_bar @ as_matrix(A) @ q_tilde))
    return val, Z, val / Z


def density_from_unnormalized(q_tilde, q_bar) -> np.ndarray:
    """rho'_{tau rho} = q_tilde_tau q_bar_rho / Z."""
    Z = overlap(q_bar, q_tilde)
    if Z == 0:
        raise NormalizationError("Z = 0")
    return np.outer(q_tilde, q_bar) / Z


def future_projection(suffix, N: int | None = None) -> np.ndarray:
    """E = P^T P with P = S(t_f - eps) ... S(t) for suffix = [S(t), ..., S(t_f - eps)]."""
    ops = list(getattr(suffix, "operators", suffix))
    P = ordered_product(ops, N)
    return P.T @ P


def independence_of_future_check(S_ops, A, q_in, t_index: int, tf_indices=None) -> dict:
    """<A(t)> under initial-value boundaries q_f = q_tilde(t_f), for several t_f.

    S_ops are the operators S(t_in), S(t_in + eps), ...; the chain is cut at
    each t_f index in tf_indices (all indices > t_index by default).
    """
    ops = [np.asarray(as_matrix(S), dtype=float) for S in S_ops]
    if tf_indices is None:
        tf_indices = range(t_index + 1, len(ops) + 1)
    A = as_matrix(A)
    values = {}
    for f in tf_indices:
        if f <= t_index or f > len(ops):
            raise ValidationError("t_f must lie after t and within the chain")
        chain = ChainSpec(tuple(ops[:f]))
        q_f = ordered_product(ops[:f]) @ q_in
        tr = solve_boundary(chain, BoundaryCondition.pure(q_in, q_f), allow_singular=True)
        values[f] = tr.expectation(A, t_index)
    v = np.array(list(values.values()))
    deviation = float(v.max() - v.min()) if v.size else 0.0
    return {"values": values, "deviation": deviation}
