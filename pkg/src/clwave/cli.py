"""Command line runner: config file in, CSV tables and a summary out.

Config files are INI-style sections with key = value pairs. Vectors are
bracketed comma lists, e.g. ``q_in = [0.2, 0.8]``.

    [model]     id = ising | four_state | unique_jump | spl | random, plus parameters
    [grid]      G, eps, t_in
    [boundary]  kind = pure | mixed | periodic; q_in, q_f or a preset
    [observables] name = builtin (s1, n2, ...) or a bracketed diagonal
    [output]    dir, csv, columns
    [run]       seed, word (gates), transform

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import boundary as bd
from . import models, oracle, transforms
from .errors import NormalizationError, SingularOperatorError, UnsupportedCaseError, ValidationError
from .evolution import evolve_density_step
from .lattice_core import ChainSpec, as_matrix, listed_spin_bit, spin_values, occupation_values

OUT_ENV = "CLWAVE_OUT"
ORACLE_TOL = 1e-12


class ConfigError(ValidationError):
    pass


def fmt(x) -> str:
    x = complex(x)
    if abs(x.imag) > 1e-12 * max(1.0, abs(x.real)):
        return f"{x.real:.17g}{x.imag:+.17g}j"
    return f"{x.real:.17g}"


def parse_vector(text: str) -> np.ndarray:
    s = text.strip()
    if not (s.startswith("[") and s.endswith("]")):
        raise ConfigError(f"vectors must be bracketed lists, got {text!r}")
    body = s[1:-1].strip()
    if not body:
        return np.zeros(0)
    try:
        return np.array([float(v) for v in body.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad number in vector {text!r}") from exc


def _num(sec, key, default=None, kind=float):
    if key not in sec:
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
        return default
    try:
        return kind(sec[key])
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {sec[key]!r}") from exc


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is None:
        return cp
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"cannot read config {path}")
    cp.read_string(p.read_text(encoding="utf-8"))
    return cp


def _section(cp, name):
    if not cp.has_section(name):
        cp.add_section(name)
    return cp[name]


# ---------------------------------------------------------------------------
# model construction

def build_chain(cp, rng) -> ChainSpec:
    m = _section(cp, "model")
    g = _section(cp, "grid")
    G = _num(g, "G", 10, int)
    eps = _num(g, "eps", 1.0)
    t_in = _num(g, "t_in", 0.0)
    mid = m.get("id", "ising")
    if mid == "ising":
        return models.ising_chain(_num(m, "beta", 1.0), G, eps, t_in)
    if mid == "four_state":
        return models.four_state_chain(_num(m, "eta", 0.5), G, eps, t_in)
    if mid == "unique_jump":
        perm = parse_vector(m.get("perm", "[1, 3, 0, 2]")).astype(int)
        signs = parse_vector(m["signs"]) if "signs" in m else None
        return models.unique_jump_chain(perm, G, signs, eps, t_in)
    if mid == "spl":
        keys = ("a_p", "a_m", "b_p", "b_m", "c_p", "c_m", "d_p", "d_m")
        p = models.SPlParams(**{k: _num(m, k, 0.0) for k in keys})
        S = models.three_spin_pl(p)
        return ChainSpec.uniform(S, G, eps, t_in, M=3)
    if mid == "random":
        M = _num(m, "M", 1, int)
        N = 2 ** M
        S = rng.uniform(0.05, 1.0, (N, N))
        return ChainSpec(tuple(rng.uniform(0.05, 1.0, (N, N)) for _ in range(G)) if m.get("uniform", "no") == "no"
                         else tuple([S] * G), eps, t_in, M)
    raise ConfigError(f"unknown model id {mid!r}")


def build_boundary(cp, N: int, rng) -> bd.BoundaryCondition:
    b = _section(cp, "boundary")
    kind = b.get("kind", "pure")
    if kind == "periodic":
        return bd.BoundaryCondition.periodic()
    preset = b.get("preset")
    if kind == "pure" and preset is None and "q_in" not in b and "q_f" not in b:
        preset = "equipartition"
    if kind == "pure":
        if preset == "equipartition":
            v = np.full(N, 1.0 / np.sqrt(N))
            return bd.BoundaryCondition.pure(v, v)
        if preset == "random":
            return bd.BoundaryCondition.pure(rng.uniform(0.1, 1, N), rng.uniform(0.1, 1, N))
        if preset and preset.startswith("delta"):
            k = int(preset.split(":")[1]) if ":" in preset else 0
            v = np.zeros(N)
            v[k] = 1.0
            qf = parse_vector(b["q_f"]) if "q_f" in b else np.ones(N)
            return bd.BoundaryCondition.pure(v, qf)
        if preset:
            raise ConfigError(f"unknown boundary preset {preset!r}")
        qi = parse_vector(b.get("q_in", "[]"))
        qf = parse_vector(b.get("q_f", "[]"))
        if len(qi) != N or len(qf) != N:
            raise ConfigError(f"boundary vectors must have length {N}")
        return bd.BoundaryCondition.pure(qi, qf)
    if kind == "mixed":
        w = parse_vector(b.get("weights", "[]"))
        comps = []
        for k in range(len(w)):
            qi = parse_vector(b[f"q_in{k + 1}"])
            qf = parse_vector(b[f"q_f{k + 1}"])
            if len(qi) != N or len(qf) != N:
                raise ConfigError(f"boundary vectors must have length {N}")
            comps.append((w[k], qi, qf))
        return bd.BoundaryCondition.mixed(comps)
    raise ConfigError(f"unknown boundary kind {kind!r}")


def _builtin_observable(name: str, M: int | None, N: int) -> np.ndarray:
    """s<k> / n<k>: spin or occupation of the k-th listed spin (1-based)."""
    if M is None or len(name) < 2 or name[0] not in "sn" or not name[1:].isdigit():
        raise ConfigError(f"unknown observable {name!r}")
    k = int(name[1:])
    bit = listed_spin_bit(k, M)
    vals = spin_values(M, bit) if name[0] == "s" else occupation_values(M, bit)
    return np.diag(vals)


def build_observables(cp, chain: ChainSpec) -> dict:
    sec = _section(cp, "observables")
    out = {}
    for name, val in sec.items():
        val = val.strip()
        if val.startswith("["):
            d = parse_vector(val)
            if len(d) != chain.N:
                raise ConfigError(f"observable {name!r} needs {chain.N} values")
            out[name] = np.diag(d)
        else:
            out[name] = _builtin_observable(val, chain.M, chain.N)
    return out


# ---------------------------------------------------------------------------
# output

class Output:
    def __init__(self, out_dir, quiet):
        self.dir = Path(out_dir)
        self.quiet = quiet
        self.summary = []

    def say(self, line):
        if not self.quiet:
            print(line)

    def table(self, name, header, rows):
        self.dir.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
        (self.dir / name).write_bytes(buf.getvalue().encode("utf-8"))

    def note(self, key, value):
        self.summary.append((key, value if isinstance(value, str) else fmt(value)))

    def finish(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        text = "".join(f"{k}: {v}\n" for k, v in self.summary)
        (self.dir / "summary.txt").write_bytes(text.encode("utf-8"))


def _select(cp, header, rows):
    cols = _section(cp, "output").get("columns")
    if not cols:
        return header, rows
    want = [c.strip() for c in cols.split(",")]
    missing = [c for c in want if c not in header]
    if missing:
        raise ConfigError(f"unknown output columns {missing}")
    idx = [header.index(c) for c in want]
    return want, [[r[i] for i in idx] for r in rows]


def _trajectory_rows(chain, tr, obs, extra=None):
    N = tr.p.shape[1]
    header = ["t"] + [f"p_{k + 1}" for k in range(N)] + [f"<{n}>" for n in obs] + ["Z", "trace_error"]
    rows = []
    for k, t in enumerate(tr.times):
        row = [t] + list(tr.p[k]) + [np.trace(A @ tr.rho[k]).real for A in obs.values()]
        row += [tr.Z, abs(tr.p[k].sum() - 1.0)]
        rows.append(row)
    if extra:
        for name, col in extra.items():
            header.append(name)
            for r, v in zip(rows, col):
                r.append(v)
    return header, rows


# ---------------------------------------------------------------------------
# subcommands

def cmd_boundary(cp, rng, out: Output, args) -> int:
    chain = build_chain(cp, rng)
    bc = build_boundary(cp, chain.N, rng)
    obs = build_observables(cp, chain)
    tr = bd.solve_boundary(chain, bc, allow_singular=_section(cp, "run").get("allow_singular", "no") == "yes")
    extra = {}
    if _section(cp, "model").get("id", "ising") == "ising":
        beta = _num(cp["model"], "beta", 1.0)
        dn = tr.p[:, 1] - 0.5
        om = models.ising_rate(beta, chain.eps)
        closed = models.ising_delta_n(dn[0], dn[-1], om, chain.t_in, chain.t_f, tr.times)
        extra = {"delta_n": dn, "delta_n_closed_form": closed}
        out.note("max_abs_delta_n_deviation", float(np.abs(dn - closed).max()))
    header, rows = _trajectory_rows(chain, tr, obs, extra)
    header, rows = _select(cp, header, rows)
    name = _section(cp, "output").get("csv", "boundary.csv")
    out.table(name, header, rows)
    out.note("raw_Z", tr.raw_Z)
    out.note("trace_error", tr.diagnostics["trace_error"])
    out.say(f"wrote {out.dir / name} ({len(rows)} slices)")
    return 0


def cmd_simulate(cp, rng, out: Output, args) -> int:
    """Forward evolution of rho'(t_in) = q_in q_bar_in^T / Z with S rho S^-1."""
    chain = build_chain(cp, rng)
    b = _section(cp, "boundary")
    N = chain.N
    if b.get("preset", "").startswith("delta"):
        k = int(b["preset"].split(":")[1]) if ":" in b["preset"] else 0
        qi = np.zeros(N)
        qi[k] = 1.0
    elif "q_in" in b:
        qi = parse_vector(b["q_in"])
    else:
        qi = np.full(N, 1.0 / np.sqrt(N))
    qb = parse_vector(b["q_bar_in"]) if "q_bar_in" in b else qi
    if len(qi) != N or len(qb) != N:
        raise ConfigError(f"initial vectors must have length {N}")
    Z = qb @ qi
    if Z == 0:
        raise NormalizationError("initial overlap vanishes")
    obs = build_observables(cp, chain)
    rho = np.outer(qi, qb) / Z
    rhos = [rho]
    for S in chain.operators:
        rho = evolve_density_step(rho, S).matrix
        rhos.append(rho)
    rhos = np.array(rhos)
    tr = bd.Trajectory(chain.times, rhos, np.real(np.einsum("kii->ki", rhos)), 1.0)
    header, rows = _trajectory_rows(chain, tr, obs)
    header, rows = _select(cp, header, rows)
    name = _section(cp, "output").get("csv", "simulate.csv")
    out.table(name, header, rows)
    out.note("max_trace_error", float(np.abs(tr.p.sum(axis=1) - 1).max()))
    out.say(f"wrote {out.dir / name} ({len(rows)} slices)")
    return 0


def oracle_compare(chain, bc, obs_list, workers=1) -> float:
    """Largest deviation between operator-path and enumeration results.

    Compares every p_tau(t), every <A(t)> and every two-time correlation
    <A(t2) B(t1)> (t2 > t1) for the diagonal operators in obs_list.
    """
    tr = bd.solve_boundary(chain, bc)
    table = oracle.enumerate_weights(chain, bc, workers)
    dev = 0.0
    N = chain.N
    for k in range(chain.G + 1):
        for tau in range(N):
            e = np.zeros(N)
            e[tau] = 1.0
            ref = oracle.oracle_expectation(oracle.layer_observable(e, k), table, workers)
            dev = max(dev, abs(tr.p[k, tau] - ref))
        for A in obs_list:
            ref = oracle.oracle_expectation(oracle.layer_observable(np.diag(A), k), table, workers)
            dev = max(dev, abs(tr.expectation(A, k) - ref))
    # <A(t2) B(t1)> = q_bar(t2)^T A S(t2-eps)...S(t1) B q_tilde(t1) / Z for a
    # pure boundary; the propagation avoids the inverses of transport_operator.
    if bc.kind == "pure":
        for k1 in range(chain.G + 1):
            for B in obs_list:
                u = B @ tr.q_tilde[k1]
                for k2 in range(k1 + 1, chain.G + 1):
                    u = chain.operators[k2 - 1] @ u
                    for A in obs_list:
                        val = tr.q_bar[k2] @ A @ u
                        a, bv = np.diag(A), np.diag(B)
                        ref = oracle.oracle_expectation(lambda h: a[h[:, k2]] * bv[h[:, k1]], table, workers)
                        dev = max(dev, abs(val - ref))
    return float(dev)


def random_system(rng, M=None, G=None):
    M = int(rng.integers(1, 3)) if M is None else M
    G = int(rng.integers(2, 6)) if G is None else G
    N = 2 ** M
    ops = tuple(rng.uniform(0.05, 1.0, (N, N)) for _ in range(G))
    chain = ChainSpec(ops, M=M)
    bc = bd.BoundaryCondition.pure(rng.uniform(0.05, 1.0, N), rng.uniform(0.05, 1.0, N))
    obs = [np.diag(spin_values(M, g)) for g in range(M)]
    return chain, bc, obs


def cmd_oracle_check(cp, rng, out: Output, args) -> int:
    if cp.has_section("model"):
        chain = build_chain(cp, rng)
        bc = build_boundary(cp, chain.N, rng)
        obs = list(build_observables(cp, chain).values()) or [np.diag(spin_values(chain.M or 1, 0))]
    else:
        chain, bc, obs = random_system(rng)
    workers = _num(_section(cp, "run"), "workers", 1, int)
    dev = oracle_compare(chain, bc, obs, workers)
    ok = dev < ORACLE_TOL
    line = f"{'PASS' if ok else 'FAIL'} max|Δ|={dev:.3e}"
    print(line)
    out.note("oracle_check", line)
    return 0 if ok else 3


def cmd_gates(cp, rng, out: Output, args) -> int:
    run = _section(cp, "run")
    word = args.word or run.get("word", "H")
    start = parse_vector(run.get("bloch", "[1, 0, 0]"))
    if len(start) != 3:
        raise ConfigError("bloch needs three components")
    b = models.BlochState(*start)
    models.quantum_density_2x2(b)
    ops, U = models.gate_word(word)
    p = models.product_distribution(b)
    rows = [[0, "", *start, *start, 0.0]]
    qb = b
    for k, (g, S) in enumerate(zip(word.split(), ops), start=1):
        p = S.matrix @ p
        cl = models.bloch_from_probabilities(p)
        qb = models.unitary_bloch_map(models.GATE_CATALOG[g][1], qb)
        dev = float(np.abs(cl.vector - qb.vector).max())
        rows.append([k, g, *cl.vector, *qb.vector, dev])
    header = ["step", "gate", "r1", "r2", "r3", "r1_unitary", "r2_unitary", "r3_unitary", "deviation"]
    out.table(_section(cp, "output").get("csv", "gates.csv"), header, rows)
    final = models.bloch_from_probabilities(p).vector
    prod = models.unitary_bloch_map(U, b).vector
    dev = float(max(np.abs(final - prod).max(), max(r[-1] for r in rows)))
    out.note("final_bloch", "[" + ", ".join(fmt(x) for x in final) + "]")
    out.note("max_deviation", dev)
    out.say("final Bloch vector " + " ".join(fmt(x) for x in final) + f"  max deviation {dev:.3e}")
    return 0


def _model_W(cp, chain):
    mid = _section(cp, "model").get("id", "ising")
    eps = chain.eps
    if mid == "four_state":
        return models.four_state_generator(_num(cp["model"], "eta", 0.5) / eps)
    if mid == "ising":
        return models.ising_generator(models.ising_rate(_num(cp["model"], "beta", 1.0), eps))
    S = chain.operators[0]
    if not np.isfinite(np.linalg.cond(S)) or np.linalg.cond(S) > 1e12:
        return None
    return (S - np.linalg.inv(S)) / (2 * eps)


def _sort_eigs(lam):
    order = np.lexsort((np.round(lam.imag, 12), -np.round(lam.real, 12)))
    return order


def cmd_spectrum(cp, rng, out: Output, args) -> int:
    g = _section(cp, "grid")
    if "G" not in g:
        g["G"] = "1"
    chain = build_chain(cp, rng)
    S = chain.operators[0]
    lam, vec = np.linalg.eig(S)
    o = _sort_eigs(lam)
    lam, vec = lam[o], vec[:, o]
    rows = [["S", k, lam[k], *vec[:, k]] for k in range(len(lam))]
    W = _model_W(cp, chain)
    if W is not None:
        lw, vw = np.linalg.eig(W)
        ow = _sort_eigs(lw)
        rows += [["W", k, lw[ow][k], *vw[:, ow][:, k]] for k in range(len(lw))]
    header = ["matrix", "k", "eigenvalue"] + [f"v_{j + 1}" for j in range(len(lam))]
    out.table(_section(cp, "output").get("csv", "spectrum.csv"), header, rows)
    for x in lam:
        out.say(fmt(np.round(x, 15) + 0.0))
    out.note("eigenvalues_S", "[" + ", ".join(fmt(x) for x in lam) + "]")
    return 0


TRANSFORMS = ("heisenberg", "global", "local", "sign-gauge", "basis-change", "unitary-basis", "classical-basis")


def cmd_transform(cp, rng, out: Output, args) -> int:
    name = args.name or _section(cp, "run").get("transform", "heisenberg")
    if name not in TRANSFORMS:
        raise ConfigError(f"unknown transform {name!r}; known: {', '.join(TRANSFORMS)}")
    chain = build_chain(cp, rng)
    N, G = chain.N, chain.G
    if name == "classical-basis":
        from scipy.stats import unitary_group
        U = [unitary_group.rvs(N, random_state=rng) for _ in range(G)]
        target = [np.asarray(S) for S in chain.operators]
        if any((S < 0).any() for S in target):
            raise ConfigError("classical-basis needs a nonnegative target chain")
        seq = transforms.classical_basis_for_quantum(U, target)
        qi = rng.normal(size=N) + 1j * rng.normal(size=N)
        qf = rng.normal(size=N) + 1j * rng.normal(size=N)
        A = {f"A{k}": (k, rng.normal(size=(N, N))) for k in range(G + 1)}
        sys0 = transforms.System(tuple(U), qi, qf, A)
        sys1 = transforms.local_similarity(seq, sys0)
        e0, e1 = transforms.expectations(sys0), transforms.expectations(sys1)
        dev = max(abs(e0[k] - e1[k]) for k in e0)
        pos = max(float(np.abs(S1 - S).max()) for S1, S in zip(sys1.operators, target))
        out.note("target_chain_deviation", pos)
    elif name == "unitary-basis":
        _, _, Sp = transforms.unitary_basis_for_classical(chain.operators)
        dev = max(float(np.abs(S @ S.conj().T - np.eye(N)).max()) for S in Sp)
    else:
        bc = build_boundary(cp, N, rng)
        if bc.kind != "pure":
            raise ConfigError("transform checks need a pure boundary")
        _, qi, qf = bc.components[0]
        obs = build_observables(cp, chain) or {"s1": np.diag(spin_values(chain.M or 1, 0))}
        A = {f"{n}@{k}": (k, M) for n, M in obs.items() for k in range(G + 1)}
        sys0 = transforms.System(chain.operators, qi, qf, A)
        e0 = transforms.expectations(sys0)
        if name == "heisenberg":
            fr = transforms.heisenberg_picture(chain.operators)
            dev = max(abs(fr.expectation(M, k, qi, qf) - e0[key]) for key, (k, M) in sys0.observables.items())
        else:
            if name == "global":
                sys1 = transforms.global_similarity(rng.normal(size=(N, N)) + 2 * np.eye(N), sys0)
            elif name == "local":
                seq = transforms.SimilaritySequence(tuple(rng.normal(size=(N, N)) + 2 * np.eye(N) for _ in range(G + 1)))
                sys1 = transforms.local_similarity(seq, sys0)
            elif name == "sign-gauge":
                sys1 = transforms.local_similarity(transforms.sign_gauge(rng.choice([-1.0, 1.0], (G + 1, N))), sys0)
            else:
                import scipy.stats
                sys1 = transforms.change_basis(scipy.stats.ortho_group.rvs(N, random_state=rng) if N > 1 else np.eye(1), sys0)
            e1 = transforms.expectations(sys1)
            dev = max(abs(e0[k] - e1[k]) / max(1.0, abs(e0[k])) for k in e0)
    out.note("transform", name)
    out.note("max_deviation", float(dev))
    out.say(f"{name}: max deviation {dev:.3e}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "boundary": cmd_boundary,
    "oracle-check": cmd_oracle_check,
    "gates": cmd_gates,
    "spectrum": cmd_spectrum,
    "transform": cmd_transform,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="clwave", description="Classical wave-function chain simulations.")
    ap.add_argument("--config", help="INI-style run configuration")
    ap.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    ap.add_argument("--seed", type=int, help="random seed (non-negative 64-bit)")
    ap.add_argument("--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "gates":
            p.add_argument("--word", help="space separated gate names, first applied first")
        if name == "transform":
            p.add_argument("name", nargs="?", choices=TRANSFORMS)
        if name in ("spectrum", "boundary", "simulate", "transform"):
            p.add_argument("--model", help="override [model] id")
            p.add_argument("--param", action="append", default=[], help="model parameter key=value")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cp = load_config(args.config)
        m = _section(cp, "model") if getattr(args, "model", None) or getattr(args, "param", None) else None
        if getattr(args, "model", None):
            m["id"] = args.model
        for kv in getattr(args, "param", []) or []:
            if "=" not in kv:
                raise ConfigError(f"parameter must be key=value, got {kv!r}")
            k, v = kv.split("=", 1)
            m[k.strip()] = v.strip()
        if not cp.has_section("model") and args.command != "oracle-check":
            _section(cp, "model")
        run = _section(cp, "run")
        seed = args.seed if args.seed is not None else _num(run, "seed", 0, int)
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        out_dir = args.out or os.environ.get(OUT_ENV) or _section(cp, "output").get("dir", ".")
        if args.command == "oracle-check" and not (args.config and cp.has_section("model")):
            cp.remove_section("model")
        out = Output(out_dir, args.quiet)
        rng = np.random.default_rng(seed)
        code = COMMANDS[args.command](cp, rng, out, args)
        out.note("exit_code", str(code))
        out.finish()
        return code
    except (ValidationError, UnsupportedCaseError, configparser.Error, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SingularOperatorError, NormalizationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
