"""Layered QAOA evolution in the full and the reduced space, plus optimization.

Each layer applies ``exp(-i gamma_p H_C)`` and then ``exp(-i beta_p H_M)``.
A diagonal cost acts by elementwise phases. A mixer made of single-qubit X
terms acts by exact per-qubit rotations because its terms commute. Any other
mixer is exponentiated through a cached eigendecomposition of each of its
connected blocks, so no Trotter error enters the comparison between the two
simulations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.optimize
from scipy import sparse
from scipy.sparse import csgraph

from .errors import NumericalIntegrityError, ResourceError, StructuralError
from .pauli import OperatorSum, to_dense, to_sparse, word_to_masks
from .reduction import Isometry, ReducedSystem
from .rng import SplitMix64, derive_seed

STATE_LIMIT = 20
EIGEN_LIMIT = 14
NORM_WARN = 1e-10
NORM_FAIL = 1e-8
LEAK_TOL = 1e-10
PROB_FLOOR = 1e-15
BLOCK_COLUMNS = 32


@dataclass(frozen=True)
class QaoaParams:
    """Angles of a ``P``-layer circuit."""

    gammas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != len(self.betas):
            raise StructuralError(f"{len(self.gammas)} gammas but {len(self.betas)} betas")
        if not self.gammas:
            raise StructuralError("at least one layer is required")

    @property
    def P(self) -> int:
        return len(self.gammas)

    @classmethod
    def zeros(cls, P: int) -> "QaoaParams":
        return cls((0.0,) * P, (0.0,) * P)

    @classmethod
    def from_vector(cls, x) -> "QaoaParams":
        """Inverse of :meth:`to_vector`: ``(gamma_1..gamma_P, beta_1..beta_P)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise StructuralError(f"parameter vector must have even length, got {x.shape}")
        P = x.size // 2
        return cls(tuple(x[:P]), tuple(x[P:]))

    def to_vector(self) -> np.ndarray:
        return np.array(self.gammas + self.betas)

    def layers(self):
        return zip(self.gammas, self.betas)

    def to_json(self) -> dict:
        return {"P": self.P, "gammas": list(self.gammas), "betas": list(self.betas)}

    @classmethod
    def from_json(cls, data: dict) -> "QaoaParams":
        params = cls(tuple(data["gammas"]), tuple(data["betas"]))
        if "P" in data and int(data["P"]) != params.P:
            raise StructuralError(f"P={data['P']} does not match {params.P} layers")
        return params


def random_params(P: int, seed: int, low: float = 0.0, high: float = math.pi) -> QaoaParams:
    """Angles drawn uniformly from ``[low, high)`` by the seeded SplitMix64 stream."""
    rng = SplitMix64(seed)
    return QaoaParams.from_vector([low + (high - low) * rng.uniform() for _ in range(2 * P)])


def bitstring(index: int, n: int) -> str:
    """Character ``q`` of the result is qubit ``q``."""
    return format(index, f"0{n}b") if n else ""


def measure_distribution(state: np.ndarray, floor: float = PROB_FLOOR) -> dict[str, float]:
    """``|amplitude|**2`` keyed by bitstring; entries below ``floor`` omitted."""
    probs = np.abs(np.asarray(state)) ** 2
    n = int(probs.size).bit_length() - 1
    if 2**n != probs.size:
        raise StructuralError(f"state length {probs.size} is not a power of two")
    return {bitstring(int(i), n): float(probs[i]) for i in np.flatnonzero(probs >= floor)}


@dataclass
class EvolutionResult:
    final_state: np.ndarray
    energy: float
    wall_time: float
    norm_drift: float = 0.0

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.final_state) ** 2

    @property
    def distribution(self) -> dict[str, float]:
        return measure_distribution(self.final_state)


class _EigenExp:
    """``exp(-i t H)`` for a Hermitian matrix, from one cached ``eigh``.

    A diagonal ``H`` needs no decomposition. Real eigenvectors are applied to
    the real and imaginary parts separately so the matrix is never promoted
    to complex.
    """

    def __init__(self, H: np.ndarray):
        H = np.asarray(H)
        self.diagonal = not np.any(H - np.diag(np.diag(H)))
        if self.diagonal:
            self.values, self.vectors = np.diag(H).real.copy(), None
            return
        if np.iscomplexobj(H) and not np.any(H.imag):
            H = H.real
        self.values, self.vectors = np.linalg.eigh(H)
        self._vh = self.vectors.conj().T
        self._real = not np.iscomplexobj(self.vectors)

    def _rotate(self, A: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self._real and np.iscomplexobj(v):
            k = 1 if v.ndim == 1 else v.shape[1]
            stacked = A @ np.concatenate([v.real.reshape(v.shape[0], k), v.imag.reshape(v.shape[0], k)], axis=1)
            out = stacked[:, :k] + 1j * stacked[:, k:]
            return out[:, 0] if v.ndim == 1 else out
        return A @ v

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        phases = np.exp(-1j * t * self.values)
        if v.ndim > 1:
            phases = phases[:, None]
        if self.diagonal:
            return phases * v
        return self._rotate(self.vectors, phases * self._rotate(self._vh, v))

    def expectation(self, v: np.ndarray) -> float:
        """``<v|H|v>`` in the eigenbasis."""
        w = np.abs(v) ** 2 if self.diagonal else np.abs(self._rotate(self._vh, v)) ** 2
        return float(np.dot(self.values, w))


class _BlockExp:
    """``exp(-i t H)`` for a sparse Hermitian ``H`` split into its connected blocks.

    Blocks holding no amplitude are skipped, which leaves their exact zeros
    untouched.
    """

    def __init__(self, H: sparse.csr_matrix):
        ncomp, labels = csgraph.connected_components(abs(H) > 0, directed=False)
        self.blocks = []
        self.fixed = []
        for c in range(ncomp):
            idx = np.flatnonzero(labels == c)
            if idx.size == 1:
                self.fixed.append((idx, float(H[idx[0], idx[0]].real)))
            else:
                self.blocks.append((idx, _EigenExp(H[idx][:, idx].toarray())))
        self.fixed_idx = np.concatenate([i for i, _ in self.fixed]) if self.fixed else np.zeros(0, int)
        self.fixed_val = np.array([v for _, v in self.fixed])

    def apply(self, t: float, v: np.ndarray) -> np.ndarray:
        out = np.array(v, dtype=complex, copy=True)
        if self.fixed_idx.size:
            ph = np.exp(-1j * t * self.fixed_val)
            out[self.fixed_idx] *= ph if v.ndim == 1 else ph[:, None]
        for idx, ex in self.blocks:
            sub = v[idx]
            if not np.any(sub):
                continue
            out[idx] = ex.apply(t, sub)
        return out


def _x_mixer_coeffs(hm: OperatorSum) -> np.ndarray | None:
    """Per-qubit weights if ``hm`` is a sum of single-qubit X terms, else None."""
    coeffs = np.zeros(hm.n)
    for t in hm.terms:
        x, z = word_to_masks(t.word)
        if z or x.bit_count() != 1 or abs(complex(t.coeff).imag) > 0:
            return None
        coeffs[hm.n - x.bit_length()] = complex(t.coeff).real
    return coeffs


def _rotate_x(v: np.ndarray, n: int, q: int, angle: float) -> np.ndarray:
    """Apply ``exp(-i angle X_q)``; qubit ``q`` is bit ``n - 1 - q`` of the index."""
    shape = v.shape
    w = v.reshape(2**q, 2, 2 ** (n - 1 - q), -1)
    c, s = math.cos(angle), math.sin(angle)
    out = np.empty_like(w)
    out[:, 0] = c * w[:, 0] - 1j * s * w[:, 1]
    out[:, 1] = c * w[:, 1] - 1j * s * w[:, 0]
    return out.reshape(shape)


def _check_norm(state: np.ndarray, reference: np.ndarray) -> tuple[np.ndarray, float]:
    """Restore each column to its starting norm; raise if the drift exceeds ``NORM_FAIL``."""
    norms = np.linalg.norm(state, axis=0)
    drift = float(np.max(np.abs(norms - reference), initial=0.0))
    if drift > NORM_FAIL:
        raise NumericalIntegrityError(f"norm drift {drift:.3e} during evolution")
    scale = np.divide(reference, norms, out=np.ones_like(norms), where=norms > 0)
    return state * scale, drift


class Evolver(Protocol):
    def evolve(self, params: QaoaParams) -> EvolutionResult: ...

    def energy(self, params: QaoaParams) -> float: ...


class FullEvolver:
    """State-vector QAOA on all ``n`` qubits.

    Parameters
    ----------
    hc, hm : OperatorSum
        Cost and mixer Hamiltonians.
    psi0 : ndarray
        Normalized initial state of length ``2**n``.
    dense_limit : int
        Largest ``n`` for which a mixer (or non-diagonal cost) may be
        exponentiated by eigendecomposition.
    """

    def __init__(self, hc: OperatorSum, hm: OperatorSum, psi0: np.ndarray, dense_limit: int = EIGEN_LIMIT):
        if hc.n != hm.n:
            raise StructuralError(f"qubit counts differ: {hc.n} vs {hm.n}")
        n = hc.n
        if n > STATE_LIMIT:
            raise ResourceError(f"state-vector evolution limited to n <= {STATE_LIMIT}")
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != (2**n,):
            raise StructuralError(f"initial state has shape {psi0.shape}, expected ({2**n},)")
        if abs(np.linalg.norm(psi0) - 1.0) > NORM_WARN:
            raise StructuralError("initial state is not normalized")
        self.n, self.hc, self.hm, self.psi0 = n, hc, hm, psi0
        self._x_coeffs = _x_mixer_coeffs(hm)
        needs_eigen = self._x_coeffs is None or not hc.is_diagonal
        if needs_eigen and n > dense_limit:
            raise ResourceError(f"mixer exponential needs eigendecomposition, limited to n <= {dense_limit}")
        if hc.is_diagonal:
            self.cost_diag = hc.diagonal().real
            self._cost_exp = None
        else:
            self.cost_diag = None
            self._cost_exp = _EigenExp(to_dense(hc))
        self._mixer_exp = None if self._x_coeffs is not None else _BlockExp(to_sparse(hm))

    def _cost(self, gamma: float, v: np.ndarray) -> np.ndarray:
        if self._cost_exp is not None:
            return self._cost_exp.apply(gamma, v)
        ph = np.exp(-1j * gamma * self.cost_diag)
        return ph * v if v.ndim == 1 else ph[:, None] * v

    def _mixer(self, beta: float, v: np.ndarray) -> np.ndarray:
        if self._mixer_exp is not None:
            return self._mixer_exp.apply(beta, v)
        for q, c in enumerate(self._x_coeffs):
            if c:
                v = _rotate_x(v, self.n, q, beta * c)
        return v

    def _layers(self, params: QaoaParams, v: np.ndarray) -> np.ndarray:
        for gamma, beta in params.layers():
            v = self._mixer(beta, self._cost(gamma, v))
        return v

    def propagate(self, params: QaoaParams, states: np.ndarray | None = None) -> tuple[np.ndarray, float]:
        """Apply the circuit to a vector or to the columns of a ``(2**n, k)`` block."""
        v = self.psi0 if states is None else np.asarray(states, dtype=complex)
        start = np.linalg.norm(v, axis=0)
        if v.ndim == 2 and v.shape[1] > BLOCK_COLUMNS:
            # column chunks keep the working set in cache
            v = np.concatenate(
                [self._layers(params, v[:, j : j + BLOCK_COLUMNS]) for j in range(0, v.shape[1], BLOCK_COLUMNS)],
                axis=1,
            )
        else:
            v = self._layers(params, v)
        single = v.ndim == 1
        cols, drift = _check_norm(v[:, None] if single else v, start)
        return (cols[:, 0] if single else cols), drift

    def expectation(self, state: np.ndarray) -> float:
        if self.cost_diag is not None:
            return float(np.dot(self.cost_diag, np.abs(state) ** 2))
        return self._cost_exp.expectation(state)

    def evolve(self, params: QaoaParams) -> EvolutionResult:
        t0 = time.perf_counter()
        state, drift = self.propagate(params)
        return EvolutionResult(state, self.expectation(state), time.perf_counter() - t0, drift)

    def energy(self, params: QaoaParams) -> float:
        return self.expectation(self.propagate(params)[0])

    def unitary(self, params: QaoaParams) -> np.ndarray:
        """Dense ``U(gamma, beta)``, assembled column by column."""
        if self.n > EIGEN_LIMIT:
            raise ResourceError(f"dense unitary limited to n <= {EIGEN_LIMIT}")
        return self.propagate(params, np.eye(2**self.n, dtype=complex))[0]


class ReducedEvolver:
    """QAOA on the ``m``-qubit register using the induced Hamiltonians.

    The evolution acts on the active ``M`` amplitudes; the ``2**m - M``
    padding amplitudes must stay zero.
    """

    def __init__(self, red: ReducedSystem, iso: Isometry | None = None):
        self.red, self.iso = red, iso
        self.m, self.M = red.m, red.M
        self._hc = _EigenExp(red.hc_red)
        self._hm = _EigenExp(red.hm_red)
        self.psi0 = red.padded_psi0().astype(complex)

    def propagate(self, params: QaoaParams, states: np.ndarray | None = None) -> tuple[np.ndarray, float]:
        v = self.psi0 if states is None else np.asarray(states, dtype=complex)
        start = np.linalg.norm(v, axis=0)
        active, pad = v[: self.M], v[self.M :]
        for gamma, beta in params.layers():
            active = self._hm.apply(beta, self._hc.apply(gamma, active))
        leak = float(np.max(np.abs(pad), initial=0.0))
        if leak > LEAK_TOL:
            raise NumericalIntegrityError(f"padding amplitude {leak:.3e}")
        out = np.concatenate([active, pad])
        single = out.ndim == 1
        cols, drift = _check_norm(out[:, None] if single else out, start)
        return (cols[:, 0] if single else cols), drift

    def expectation(self, state: np.ndarray) -> float:
        return self._hc.expectation(state[: self.M])

    def evolve(self, params: QaoaParams) -> EvolutionResult:
        t0 = time.perf_counter()
        state, drift = self.propagate(params)
        return EvolutionResult(state, self.expectation(state), time.perf_counter() - t0, drift)

    def energy(self, params: QaoaParams) -> float:
        return self.expectation(self.propagate(params)[0])

    def mapped_state(self, state: np.ndarray) -> np.ndarray:
        """``V`` applied to a reduced state, giving the full-space amplitudes."""
        if self.iso is None:
            raise StructuralError("no isometry attached to this reduced evolver")
        return self.iso.embed(state)

    def mapped_distribution(self, state: np.ndarray) -> dict[str, float]:
        return measure_distribution(self.mapped_state(state))

    def unitary(self, params: QaoaParams) -> np.ndarray:
        """Dense ``M x M`` reduced unitary on the active block."""
        eye = np.zeros((2**self.m, self.M), dtype=complex)
        eye[: self.M] = np.eye(self.M)
        return self.propagate(params, eye)[0][: self.M]


@dataclass
class OptimizationRun:
    restarts: int
    best_params: QaoaParams
    best_energy: float
    seed: int
    trace: list[list[float]] = field(default_factory=list)
    final_energies: list[float] = field(default_factory=list)
    initial_params: list[QaoaParams] = field(default_factory=list)
    budget_exhausted: list[bool] = field(default_factory=list)
    evaluations: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "restarts": self.restarts,
            "seed": self.seed,
            "best_params": self.best_params.to_json(),
            "best_energy": self.best_energy,
            "final_energies": self.final_energies,
            "initial_params": [p.to_json() for p in self.initial_params],
            "budget_exhausted": self.budget_exhausted,
            "evaluations": self.evaluations,
            "trace": self.trace,
        }


def restart_seed(seed: int, restart: int) -> int:
    return derive_seed(seed, restart)


def optimize(
    evolver: Evolver,
    P: int,
    restarts: int = 5,
    seed: int = 0,
    evals_per_layer: int = 200,
    fatol: float = 1e-8,
) -> OptimizationRun:
    """Best of ``restarts`` Nelder-Mead runs over the ``2P`` angles.

    Restart ``r`` starts from :func:`random_params` with seed
    ``restart_seed(seed, r)``, so two evolvers given the same seed start
    from identical angles. Each restart stops once the spread of energies
    over the simplex falls below ``fatol`` or after ``evals_per_layer * P``
    evaluations; the trace records the best simplex energy per iteration.
    """
    if restarts < 1:
        raise StructuralError("restarts must be >= 1")
    if P < 1:
        raise StructuralError("P must be >= 1")
    run = OptimizationRun(restarts, QaoaParams.zeros(P), math.inf, seed)
    budget = evals_per_layer * P

    def objective(x: np.ndarray) -> float:
        return evolver.energy(QaoaParams.from_vector(x))

    for r in range(restarts):
        init = random_params(P, restart_seed(seed, r))
        trace: list[float] = []
        res = scipy.optimize.minimize(
            objective,
            init.to_vector(),
            method="Nelder-Mead",
            callback=lambda intermediate_result: trace.append(float(intermediate_result.fun)),
            options={"maxfev": budget, "fatol": fatol, "xatol": math.inf},
        )
        energy = float(res.fun)
        run.trace.append(trace)
        run.final_energies.append(energy)
        run.initial_params.append(init)
        run.budget_exhausted.append(res.nfev >= budget and not res.success)
        run.evaluations.append(int(res.nfev))
        if energy < run.best_energy:
            run.best_energy = energy
            run.best_params = QaoaParams.from_vector(res.x)
    return run
