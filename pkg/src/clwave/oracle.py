"""Brute-force configuration sums over all layer histories.

This module deliberately avoids the sweep and operator machinery: every
weight is a product of individual matrix entries along one history, and
all reductions are explicit fixed-order tree sums over fixed blocks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NormalizationError, ValidationError
from .lattice_core import as_matrix

ENUM_LIMIT = 24
BLOCK = 1 << 14


@dataclass(frozen=True)
class ConfigHistory:
    indices: tuple
    w: float


@dataclass(frozen=True)
class WeightTable:
    """Histories in lexicographic order (t_in layer most significant)."""
    histories: np.ndarray
    weights: np.ndarray
    Z: float

    def __iter__(self):
        for h, w in zip(self.histories, self.weights):
            yield ConfigHistory(tuple(int(x) for x in h), float(w))

    def __len__(self):
        return len(self.weights)


def tree_sum(x) -> float:
    """Pairwise sum with fixed split points; leaves use exactly rounded fsum."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n == 0:
        return 0.0
    if n <= 256:
        return math.fsum(x.tolist())
    h = n // 2
    return tree_sum(x[:h]) + tree_sum(x[h:])


def blocked_sum(x, workers: int = 1) -> float:
    """Sum fixed contiguous blocks (optionally in threads), then tree-reduce
    the block sums in block order. The result does not depend on workers."""
    x = np.asarray(x, dtype=float)
    blocks = [x[i:i + BLOCK] for i in range(0, len(x), BLOCK)] or [x]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            partial = list(ex.map(tree_sum, blocks))
    else:
        partial = [tree_sum(b) for b in blocks]
    return tree_sum(np.array(partial))


def _guard(N, layers):
    bits = layers * np.log2(N)
    if bits > ENUM_LIMIT + 1e-9:
        raise ValidationError(f"enumeration guard: (G+1)*M = {bits:g} exceeds {ENUM_LIMIT}")


def _histories(N, layers):
    total = N ** layers
    idx = np.arange(total)
    # lexicographic: first layer is the most significant digit
    h = np.empty((total, layers), dtype=np.int64)
    for k in range(layers - 1, -1, -1):
        h[:, k] = idx % N
        idx = idx // N
    return h


def _boundary_factor(chain_ops, boundary, first, last):
    kind = boundary.kind
    if kind == "periodic":
        C = boundary.closing if boundary.closing is not None else as_matrix(chain_ops[0])
        return np.asarray(C)[first, last]
    out = np.zeros(len(first))
    for w, q_in, q_f in boundary.components:
        out = out + w * np.asarray(q_in)[first] * np.asarray(q_f)[last]
    return out


def enumerate_weights(chain, boundary, workers: int = 1) -> WeightTable:
    """Weight of every history rho_1..rho_{G+1}.

    w = b(rho_1, rho_{G+1}) * prod_k S_k[rho_{k+1}, rho_k].
    """
    ops = [np.asarray(as_matrix(S), dtype=float) for S in chain.operators]
    N = ops[0].shape[0] if ops else boundary.N
    layers = len(ops) + 1
    _guard(N, layers)
    if boundary.kind == "periodic" and boundary.closing is None and not ops:
        raise ValidationError("periodic boundary needs a closing operator")
    h = _histories(N, layers)
    w = np.ones(len(h))
    for k, S in enumerate(ops):
        w = w * S[h[:, k + 1], h[:, k]]
    w = w * _boundary_factor(ops, boundary, h[:, 0], h[:, -1])
    Z = blocked_sum(w, workers)
    return WeightTable(h, w, Z)


def layer_observable(values, layer: int):
    """Observable equal to values[rho_layer] on each history."""
    v = np.asarray(values, dtype=float)
    return lambda h: v[h[:, layer]]


def oracle_expectation(observable, table: WeightTable, workers: int = 1) -> float:
    """sum_h w(h) A(h) / Z with A evaluated on the history array."""
    if table.Z == 0:
        raise NormalizationError("Z = 0")
    vals = np.asarray(observable(table.histories), dtype=float)
    if vals.shape == ():
        vals = np.full(len(table), float(vals))
    return blocked_sum(table.weights * vals, workers) / table.Z


def oracle_wavefunction(chain, boundary, t_index: int):
    """(q_tilde(t), q_bar(t)) by summing over the lower and upper layers.

    Requires a pure boundary.
    """
    if boundary.kind != "pure":
        raise ValidationError("wave functions exist for pure boundaries only")
    _, q_in, q_f = boundary.components[0]
    ops = [np.asarray(as_matrix(S), dtype=float) for S in chain.operators]
    N = len(q_in)
    G = len(ops)
    if not 0 <= t_index <= G:
        raise ValidationError("time index outside the chain")
    _guard(N, G + 1)
    lower = _histories(N, t_index + 1)
    wl = np.asarray(q_in, dtype=float)[lower[:, 0]]
    for k in range(t_index):
        wl = wl * ops[k][lower[:, k + 1], lower[:, k]]
    upper = _histories(N, G - t_index + 1)
    wu = np.asarray(q_f, dtype=float)[upper[:, -1]]
    for j in range(G - t_index):
        k = t_index + j
        wu = wu * ops[k][upper[:, j + 1], upper[:, j]]
    qt = np.array([blocked_sum(wl[lower[:, -1] == tau]) for tau in range(N)])
    qb = np.array([blocked_sum(wu[upper[:, 0] == tau]) for tau in range(N)])
    return qt, qb


def doubled_partition_function(chain, q_in) -> float:
    """Two-branch sum over (n_bar, n) histories that share the final layer.

    Both branches start from q_in; this is the initial-value form of Z.
    """
    ops = [np.asarray(as_matrix(S), dtype=float) for S in chain.operators]
    N = len(q_in)
    layers = len(ops) + 1
    _guard(N, 2 * layers - 1)
    h = _histories(N, layers)
    a = np.asarray(q_in, dtype=float)[h[:, 0]]
    for k, S in enumerate(ops):
        a = a * S[h[:, k + 1], h[:, k]]
    # pair every history with every other history ending on the same layer
    parts = []
    for tau in range(N):
        sel = a[h[:, -1] == tau]
        parts.append(blocked_sum(np.outer(sel, sel).ravel()))
    return tree_sum(np.array(parts))
