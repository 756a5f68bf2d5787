"""Operators for local observables, expectation values and measurement weights."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularOperatorError, ValidationError
from .lattice_core import as_matrix, lu, occupation_values, spin_values

GROUP_TOL = 1e-8
IMAG_TOL = 1e-8
DEFECT_COND = 1e12


@dataclass(frozen=True)
class LocalOperator:
    matrix: np.ndarray
    t: float | None = None
    label: str = ""
    diagnostics: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class MeasurementSpectrum:
    eigenvalues: np.ndarray
    D: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    probabilities: np.ndarray
    negative: tuple

    @property
    def ok(self) -> bool:
        return not self.negative


def diagonal_operator(values, t=None, label="") -> LocalOperator:
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValidationError("diagonal values must be a vector")
    return LocalOperator(np.diag(v), t, label)


def spin_operator(M: int, bit: int, t=None) -> LocalOperator:
    return diagonal_operator(spin_values(M, bit), t, f"s[{bit}]")


def occupation_operator(M: int, bit: int, t=None) -> LocalOperator:
    return diagonal_operator(occupation_values(M, bit), t, f"n[{bit}]")


def _density_of(state) -> np.ndarray:
    if hasattr(state, "q_tilde"):
        return np.outer(state.q_tilde, state.q_bar)
    if isinstance(state, tuple) and len(state) == 2:
        return np.outer(state[0], state[1])
    return np.asarray(as_matrix(state))


def expectation(state, A) -> float:
    """q_bar^T A' q_tilde for a wave pair, tr(A' rho') for a density matrix.

    The state must be normalized (Z = 1); no division by Z happens here.
    """
    A = as_matrix(A)
    if hasattr(state, "q_tilde") or isinstance(state, tuple):
        qt, qb = (state.q_tilde, state.q_bar) if hasattr(state, "q_tilde") else state
        if A.shape != (len(qt), len(qt)):
            raise ValidationError("operator and state sizes differ")
        val = qb @ A @ qt
    else:
        r = as_matrix(state)
        if A.shape != r.shape:
            raise ValidationError("operator and density sizes differ")
        val = np.trace(A @ r)
    return float(np.real(val))


def local_probabilities(rho) -> np.ndarray:
    return np.real(np.diag(as_matrix(rho))).copy()


def transport_operator(A, segment, t=None) -> LocalOperator:
    """Carry an operator from t' back to t through segment = [S(t), ..., S(t'-eps)].

    A'(t) = S^-1(t) ... S^-1(t'-eps) A'(t') S(t'-eps) ... S(t).
    """
    out = np.asarray(as_matrix(A))
    for S in reversed(list(segment)):
        S = as_matrix(S)
        out = scipy.linalg.lu_solve(lu(S, "transport segment"), out @ S)
    label = getattr(A, "label", "")
    return LocalOperator(out, t, label)


def _group(vals, tol):
    order = np.argsort(vals, kind="stable")
    groups = []
    for k in order:
        if groups and abs(vals[k] - vals[groups[-1][0]]) <= tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    return groups


def measurement_weights(A, state) -> MeasurementSpectrum:
    """Weights w_tau = (D rho' D^-1)_tau,tau in the eigenbasis of A'.

    For a pure pair this is [(D^-1)^T q_bar]_tau [D q_tilde]_tau.
    """
    A = as_matrix(A)
    ev, V = np.linalg.eig(A)
    scale = max(float(np.max(np.abs(ev))) if ev.size else 0.0, np.finfo(float).tiny)
    if np.max(np.abs(ev.imag), initial=0.0) > IMAG_TOL * scale:
        raise ValidationError("operator has a complex spectrum; not a local observable candidate")
    if np.linalg.cond(V) > DEFECT_COND:
        raise SingularOperatorError("operator is defective (not diagonalizable)")
    rho = _density_of(state)
    D = np.linalg.inv(V)
    w = np.diag(D @ rho @ V)
    if np.max(np.abs(w.imag), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(w))):
        raise ValidationError("measurement weights are not real")
    w = w.real
    lam = ev.real
    tol = GROUP_TOL * max(scale, 1.0) if scale > 0 else GROUP_TOL
    groups = _group(lam, tol)
    values = np.array([lam[g].mean() for g in groups])
    probs = np.array([w[g].sum() for g in groups])
    negative = tuple((int(k), float(w[k])) for k in range(len(w)) if w[k] < -1e-12)
    return MeasurementSpectrum(lam, D, w, values, probs, negative)


def check_local_observable(A, states, factors=None, max_power: int = 4, tol: float = 1e-10) -> dict:
    """Check the four local-observable conditions over a sample of states.

    expectation: the spectral mean sum_i lambda_i p_i equals <A'>.
    spectrum: eigenvalues are real.
    nonnegative: all measurement weights are >= 0 on every sample.
    powers: <A^n> -> <A'^n>. If ``factors`` [A1', A2', ...] are given, A is
    read as the product observable A1 A2 ..., whose n-th power is
    represented by A1'^n A2'^n ...; the rule then requires this to agree
    with (A')^n on every sample.
    """
    A = as_matrix(A)
    states = list(states)
    report = {"expectation": True, "spectrum": True, "nonnegative": True, "powers": True,
              "samples": len(states), "violations": []}
    try:
        specs = [measurement_weights(A, s) for s in states]
    except (ValidationError, SingularOperatorError) as exc:
        report.update(spectrum=False, expectation=False, nonnegative=False, powers=False, ok=False)
        report["violations"].append(("spectrum", str(exc)))
        return report
    for k, (s, sp) in enumerate(zip(states, specs)):
        rho = _density_of(s)
        direct = float(np.real(np.trace(A @ rho)))
        spectral = float(sp.values @ sp.probabilities)
        if abs(direct - spectral) > tol * max(1.0, abs(direct)):
            report["expectation"] = False
            report["violations"].append(("expectation", k, direct - spectral))
        if sp.negative:
            report["nonnegative"] = False
            report["violations"].append(("nonnegative", k, sp.negative))
        for n in range(2, max_power + 1):
            lhs = float(np.real(np.trace(np.linalg.matrix_power(A, n) @ rho)))
            if factors is None:
                rhs = float(sp.values ** n @ sp.probabilities)
            else:
                P = np.eye(A.shape[0])
                for F in factors:
                    P = P @ np.linalg.matrix_power(as_matrix(F), n)
                rhs = float(np.real(np.trace(P @ rho)))
            if abs(lhs - rhs) > tol * max(1.0, abs(lhs)):
                report["powers"] = False
                report["violations"].append(("powers", k, n, lhs - rhs))
    report["ok"] = all(report[c] for c in ("expectation", "spectrum", "nonnegative", "powers"))
    return report


def derivative_operator(A, S=None, eps: float = 1.0, variant: str = "continuum", W=None) -> LocalOperator:
    """Operator for the time derivative of A.

    midpoint:  (S^-1 A' S - S A' S^-1) / 2eps = {S^-1, [A', S]} / 2eps
    forward:   S^-1 [A', S] / eps
    continuum: -[W, A']
    """
    A = as_matrix(A)
    if variant == "continuum":
        if W is None:
            raise ValidationError("continuum variant needs W")
        Wm = getattr(W, "W", W)
        Wm = as_matrix(Wm)
        return LocalOperator(-(Wm @ A - A @ Wm), label="dA/dt continuum")
    if S is None:
        raise ValidationError("discrete variants need S")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    S = as_matrix(S)
    f = lu(S)
    comm = A @ S - S @ A
    if variant == "forward":
        return LocalOperator(scipy.linalg.lu_solve(f, comm) / eps, label="dA/dt forward")
    if variant == "midpoint":
        left = scipy.linalg.lu_solve(f, comm)
        right = scipy.linalg.lu_solve(f, comm.T, trans=1).T
        return LocalOperator((left + right) / (2 * eps), label="dA/dt midpoint")
    raise ValidationError(f"unknown derivative variant {variant!r}")


def t_ordered_product(items) -> LocalOperator:
    """Product of (operator, t) pairs with later t to the left.

    All operators must already refer to a common hypersurface. Equal time
    labels keep their input order; if such operators do not commute the
    conflict is recorded in diagnostics and a warning is issued.
    """
    items = list(items)
    if not items:
        raise ValidationError("empty product")
    order = sorted(range(len(items)), key=lambda k: -items[k][1])
    conflicts = []
    for a, b in zip(order, order[1:]):
        if items[a][1] == items[b][1]:
            X, Y = as_matrix(items[a][0]), as_matrix(items[b][0])
            if np.abs(X @ Y - Y @ X).max() > 1e-12:
                conflicts.append((a, b))
    if conflicts:
        warnings.warn("non-commuting operators share a time label; input order kept", stacklevel=2)
    P = as_matrix(items[order[0]][0])
    for k in order[1:]:
        P = P @ as_matrix(items[k][0])
    return LocalOperator(P, label="t-ordered", diagnostics={"conflicts": conflicts})


def incomplete_statistics_gap(A, B) -> LocalOperator:
    """D' - C'^2 = A'[A', B']B' for C' = A'B' and D' = A'^2 B'^2."""
    A = as_matrix(A)
    B = as_matrix(B)
    if A.shape != B.shape:
        raise ValidationError("operators have different sizes")
    return LocalOperator(A @ (A @ B - B @ A) @ B, label="gap")


def quantum_correlation(rho, A, B) -> float:
    """1/2 tr(rho' {A', B'})."""
    r = _density_of(rho)
    A = as_matrix(A)
    B = as_matrix(B)
    return float(np.real(0.5 * np.trace(r @ (A @ B + B @ A))))
