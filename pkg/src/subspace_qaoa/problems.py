"""QUBO / Max-Cut instances and their QAOA Hamiltonians and initial states."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Literal, Sequence

import numpy as np

from .errors import ConstraintError, NumericalIntegrityError, StructuralError
from .pauli import DENSE_LIMIT, OperatorSum, PauliTerm
from .rng import SplitMix64

Family = Literal["cycle", "complete", "erdos_renyi", "custom"]
FAMILIES = ("cycle", "complete", "erdos_renyi")
P_EDGE = 0.5


@dataclass(frozen=True)
class ConstraintSpec:
    kind: Literal["none", "hamming_weight"] = "none"
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "hamming_weight"):
            raise ConstraintError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "hamming_weight" and (self.k is None or self.k < 0):
            raise ConstraintError("hamming_weight constraint needs a non-negative k")

    @property
    def constrained(self) -> bool:
        return self.kind == "hamming_weight"

    def validate(self, n: int) -> None:
        if self.constrained and not 0 <= self.k <= n:
            raise ConstraintError(f"Hamming weight k={self.k} infeasible for n={n}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "k": self.k}

    @classmethod
    def from_json(cls, data: dict | None) -> "ConstraintSpec":
        if not data:
            return cls()
        return cls(data.get("kind", "none"), data.get("k"))


NO_CONSTRAINT = ConstraintSpec()


@dataclass(frozen=True)
class QuadraticForm:
    """``g(x) = x^T W x + c^T x + c0`` over binary ``x``."""

    W: np.ndarray
    c: np.ndarray
    c0: float = 0.0

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise StructuralError(f"W must be square, got shape {W.shape}")
        c = np.asarray(self.c, dtype=float)
        if c.shape != (W.shape[0],):
            raise StructuralError(f"c must have length {W.shape[0]}")
        object.__setattr__(self, "W", (W + W.T) / 2)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "c0", float(self.c0))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on one bit vector or on the rows of a bit matrix."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.W, x) + x @ self.c + self.c0


@dataclass(frozen=True)
class QuboInstance:
    """Binary objective ``x^T W x + c^T x + c0 + sum_k lam_k g_k(x)`` (minimized)."""

    W: np.ndarray
    c: np.ndarray
    c0: float = 0.0
    penalties: tuple[tuple[float, QuadraticForm], ...] = ()

    def __post_init__(self):
        base = QuadraticForm(self.W, self.c, self.c0)
        object.__setattr__(self, "W", base.W)
        object.__setattr__(self, "c", base.c)
        object.__setattr__(self, "c0", base.c0)
        for lam, g in self.penalties:
            if g.n != base.n:
                raise StructuralError("penalty size does not match the instance")
        object.__setattr__(self, "penalties", tuple((float(l), g) for l, g in self.penalties))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def objective_value(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        val = QuadraticForm(self.W, self.c, self.c0).evaluate(x)
        for lam, g in self.penalties:
            val = val + lam * g.evaluate(x)
        return val

    def all_values(self) -> np.ndarray:
        """``f(x)`` for every basis index, in big-endian bit order."""
        return self.objective_value(basis_bits(self.n))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "W": self.W.tolist(),
            "c": self.c.tolist(),
            "c0": self.c0,
        }


def basis_bits(n: int) -> np.ndarray:
    """``(2**n, n)`` matrix whose row ``i`` holds the bits of index ``i``; column ``q`` is qubit ``q``."""
    idx = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.int8)


def hamming_weights(n: int) -> np.ndarray:
    return np.bitwise_count(np.arange(2**n, dtype=np.int64)).astype(np.int64)


@dataclass(frozen=True)
class GraphInstance:
    n: int
    edges: tuple[tuple[int, int, float], ...]
    family: str = "custom"

    def __post_init__(self):
        if self.n < 1:
            raise StructuralError("graph needs at least one vertex")
        seen = set()
        clean = []
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if i == j:
                raise StructuralError(f"self-loop on vertex {i}")
            i, j = min(i, j), max(i, j)
            if not 0 <= i < j < self.n:
                raise StructuralError(f"edge ({i}, {j}) out of range for n={self.n}")
            if (i, j) in seen:
                raise StructuralError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            clean.append((i, j, w))
        object.__setattr__(self, "edges", tuple(clean))

    def cut_value(self, x) -> float:
        return sum(w for i, j, w in self.edges if x[i] != x[j])

    def to_json(self, constraint: ConstraintSpec = NO_CONSTRAINT) -> dict:
        return {
            "n": self.n,
            "edges": [[i, j, w] for i, j, w in self.edges],
            "family": self.family,
            "constraint": constraint.to_json(),
        }


def graph_family(family: str, n: int, seed: int = 0) -> GraphInstance:
    """Deterministic unit-weight graph from a named family.

    ``erdos_renyi`` visits pairs ``(i, j)``, ``i < j``, in lexicographic order
    and keeps each one when the next :class:`SplitMix64` uniform is below 0.5.
    """
    if n < 2:
        raise StructuralError("graph families need n >= 2")
    if family == "cycle":
        pairs = [(i, i + 1) for i in range(n - 1)]
        if n > 2:
            pairs.append((0, n - 1))
    elif family == "complete":
        pairs = list(itertools.combinations(range(n), 2))
    elif family == "erdos_renyi":
        rng = SplitMix64(seed)
        pairs = [p for p in itertools.combinations(range(n), 2) if rng.uniform() < P_EDGE]
    else:
        raise StructuralError(f"unknown graph family {family!r}")
    return GraphInstance(n, tuple((i, j, 1.0) for i, j in pairs), family)


def maxcut_to_qubo(g: GraphInstance) -> QuboInstance:
    """Max-Cut as minimization of ``-sum w_ij (x_i + x_j - 2 x_i x_j)``."""
    W = np.zeros((g.n, g.n))
    c = np.zeros(g.n)
    for i, j, w in g.edges:
        W[i, j] += w
        W[j, i] += w
        c[i] -= w
        c[j] -= w
    return QuboInstance(W, c, 0.0)


def _quadratic_to_paulis(n: int, W: np.ndarray, c: np.ndarray, c0: float) -> dict[str, float]:
    # x_i -> (1 - Z_i)/2, x_i x_j -> (1 - Z_i - Z_j + Z_i Z_j)/4 for i != j
    coeffs: dict[str, float] = {}

    def add(word_ops: tuple[int, ...], val: float) -> None:
        chars = ["I"] * n
        for q in word_ops:
            chars[q] = "Z"
        w = "".join(chars)
        coeffs[w] = coeffs.get(w, 0.0) + val

    add((), c0)
    for i in range(n):
        lin = W[i, i] + c[i]
        add((), lin / 2)
        add((i,), -lin / 2)
    for i in range(n):
        for j in range(i + 1, n):
            q = W[i, j] + W[j, i]
            if q == 0:
                continue
            add((), q / 4)
            add((i,), -q / 4)
            add((j,), -q / 4)
            add((i, j), q / 4)
    return coeffs


def cost_hamiltonian(q: QuboInstance, check: bool = True) -> OperatorSum:
    """Diagonal ``{I, Z}`` Hamiltonian with ``H_C |x> = f(x) |x>``.

    For ``n <= DENSE_LIMIT`` the diagonal is compared against a classical
    enumeration of ``f`` before returning.
    """
    coeffs = _quadratic_to_paulis(q.n, q.W, q.c, q.c0)
    for lam, g in q.penalties:
        for w, v in _quadratic_to_paulis(q.n, g.W, g.c, g.c0).items():
            coeffs[w] = coeffs.get(w, 0.0) + lam * v
    hc = OperatorSum.from_dict(q.n, coeffs)
    if check and q.n <= DENSE_LIMIT:
        err = np.max(np.abs(hc.diagonal() - q.all_values()), initial=0.0)
        scale = 1.0 + np.max(np.abs(q.all_values()), initial=0.0)
        if err > 1e-10 * scale:
            raise NumericalIntegrityError(f"cost Hamiltonian diagonal deviates from f by {err:.3e}")
    return hc


def mixer_hamiltonian(
    n: int, constraint: ConstraintSpec = NO_CONSTRAINT, topology: str = "ring"
) -> OperatorSum:
    """Transverse-field mixer, or a weight-preserving XY mixer under a Hamming constraint.

    The XY mixer couples neighbouring qubits ``(X_i X_j + Y_i Y_j) / 2``; with
    ``topology="ring"`` the pairs are ``(i, i+1 mod n)`` and with
    ``"complete"`` every pair is coupled.
    """
    constraint.validate(n)
    if not constraint.constrained:
        return OperatorSum(n, tuple(PauliTerm(1.0, _word(n, {i: "X"})) for i in range(n)))
    if topology == "ring":
        pairs = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)] if n == 2 else []
    elif topology == "complete":
        pairs = list(itertools.combinations(range(n), 2))
    else:
        raise StructuralError(f"unknown XY mixer topology {topology!r}")
    terms = []
    for i, j in pairs:
        terms.append(PauliTerm(0.5, _word(n, {i: "X", j: "X"})))
        terms.append(PauliTerm(0.5, _word(n, {i: "Y", j: "Y"})))
    return OperatorSum(n, tuple(terms))


def _word(n: int, ops: dict[int, str]) -> str:
    chars = ["I"] * n
    for q, ch in ops.items():
        chars[q] = ch
    return "".join(chars)


def dicke_state(n: int, k: int) -> np.ndarray:
    """Uniform superposition of all weight-``k`` basis states."""
    if not 0 <= k <= n:
        raise ConstraintError(f"Hamming weight k={k} infeasible for n={n}")
    mask = hamming_weights(n) == k
    psi = np.zeros(2**n)
    psi[mask] = 1.0 / math.sqrt(math.comb(n, k))
    return psi


def initial_state(n: int, constraint: ConstraintSpec = NO_CONSTRAINT) -> np.ndarray:
    """``|+>^n`` without constraint, the Dicke state ``|D^n_k>`` with one."""
    constraint.validate(n)
    if constraint.constrained:
        return dicke_state(n, constraint.k)
    return np.full(2**n, 2.0 ** (-n / 2))


def brute_force_minimum(q: QuboInstance, constraint: ConstraintSpec = NO_CONSTRAINT) -> float:
    """Minimum of ``f`` over ``{0,1}^n``, restricted to the weight sector if constrained."""
    vals = q.all_values()
    if constraint.constrained:
        vals = vals[hamming_weights(q.n) == constraint.k]
    return float(vals.min())


@dataclass
class Instance:
    """A problem loaded from disk: the QUBO, its constraint, and the source graph if any."""

    qubo: QuboInstance
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec)
    graph: GraphInstance | None = None

    @property
    def n(self) -> int:
        return self.qubo.n

    @property
    def family(self) -> str:
        return self.graph.family if self.graph is not None else "qubo"


def instance_from_json(data: dict) -> Instance:
    constraint = ConstraintSpec.from_json(data.get("constraint"))
    if "edges" in data:
        g = GraphInstance(int(data["n"]), tuple(tuple(e) for e in data["edges"]), data.get("family", "custom"))
        inst = Instance(maxcut_to_qubo(g), constraint, g)
    elif "W" in data:
        n = int(data["n"])
        W = np.asarray(data["W"], dtype=float)
        if W.shape != (n, n):
            raise StructuralError(f"W has shape {W.shape}, expected ({n}, {n})")
        inst = Instance(QuboInstance(W, data.get("c", np.zeros(n)), data.get("c0", 0.0)), constraint)
    else:
        raise StructuralError("instance JSON needs either 'edges' or 'W'")
    constraint.validate(inst.n)
    return inst


def load_instance(path: str | PathLike) -> Instance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))


def save_instance(path: str | PathLike, inst: Instance) -> None:
    if inst.graph is not None:
        data = inst.graph.to_json(inst.constraint)
    else:
        data = inst.qubo.to_json()
        data["constraint"] = inst.constraint.to_json()
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


def random_qubo(n: int, seed: int) -> QuboInstance:
    """Generic QUBO with independent uniform(-1, 1) couplings and biases."""
    rng = SplitMix64(seed)
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            W[i, j] = W[j, i] = 2 * rng.uniform() - 1
    c = np.array([2 * rng.uniform() - 1 for _ in range(n)])
    return QuboInstance(W, c, 0.0)


def instance_for(family: str, n: int, seed: int, constraint: ConstraintSpec = NO_CONSTRAINT) -> Instance:
    g = graph_family(family, n, seed)
    constraint.validate(n)
    return Instance(maxcut_to_qubo(g), constraint, g)


__all__: Sequence[str] = [
    "ConstraintSpec",
    "GraphInstance",
    "Instance",
    "QuadraticForm",
    "QuboInstance",
    "basis_bits",
    "brute_force_minimum",
    "cost_hamiltonian",
    "dicke_state",
    "graph_family",
    "hamming_weights",
    "initial_state",
    "instance_for",
    "instance_from_json",
    "load_instance",
    "maxcut_to_qubo",
    "mixer_hamiltonian",
    "random_qubo",
    "save_instance",
]
