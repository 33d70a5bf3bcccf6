"""Certificates that a reduced QAOA run reproduces the full one.

The metrics are the fidelity offset ``F - 1`` between the full state and the
reduced state mapped back through ``V``, the energy gap, the total variation
distance of the two measurement distributions, the intertwining residual
``U V - V U_red`` and the isometry identities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .qaoa import FullEvolver, QaoaParams, ReducedEvolver, measure_distribution
from .reduction import InvariantSubspace, Isometry, ReducedSystem

CERT_TOL = 1e-10
EXCLUSION_OVERLAP = 1e-10
EXCLUSION_PROB = 1e-12
COMMUTATOR_LIMIT = 10
DIST_NORM_TOL = 1e-8


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """``|<a|b>|**2`` of two normalized states (global phase drops out).

    Rounding in the norms can push the raw overlap a few ulp above one; the
    result is clipped to 1 so the fidelity offset ``F - 1`` is never positive.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise StructuralError(f"state shapes differ: {a.shape} vs {b.shape}")
    return min(1.0, float(abs(np.vdot(a, b)) ** 2))


def tvd(p: dict[str, float], q: dict[str, float]) -> float:
    """Total variation distance ``0.5 * sum |p(x) - q(x)|`` over the union of supports."""
    for name, d in (("p", p), ("q", q)):
        total = math.fsum(d.values())
        if abs(total - 1.0) > DIST_NORM_TOL:
            raise StructuralError(f"distribution {name} sums to {total!r}")
    keys = sorted(set(p) | set(q))
    return 0.5 * math.fsum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


@dataclass
class EquivalenceReport:
    """Outcome of comparing one full/reduced pair at fixed angles."""

    fidelity_offset: float
    delta_e: float
    energy_full: float
    energy_reduced: float
    tvd: float
    intertwine_max: float
    intertwine_residual: float
    isometry_residuals: tuple[float, float]
    n: int
    m: int
    M: int
    params_used: QaoaParams
    wall_full: float = 0.0
    wall_reduced: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def delta_e_relative(self) -> float:
        return self.delta_e / (1.0 + abs(self.energy_full))

    @property
    def dims(self) -> tuple[int, int, int]:
        return 2**self.n, 2**self.m, self.M

    def worst(self) -> float:
        return max(abs(self.fidelity_offset), self.delta_e_relative, self.tvd, self.intertwine_max)

    def passed(self, tol: float = CERT_TOL) -> bool:
        return self.worst() <= tol

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "M": self.M,
            "fidelity_offset": self.fidelity_offset,
            "delta_e": self.delta_e,
            "delta_e_relative": self.delta_e_relative,
            "energy_full": self.energy_full,
            "energy_reduced": self.energy_reduced,
            "tvd": self.tvd,
            "intertwine_max": self.intertwine_max,
            "intertwine_residual": self.intertwine_residual,
            "isometry_ortho": self.isometry_residuals[0],
            "isometry_projector": self.isometry_residuals[1],
            "params": self.params_used.to_json(),
        }


def intertwining_residuals(
    full: FullEvolver, reduced: ReducedEvolver, iso: Isometry, params: QaoaParams
) -> tuple[float, float]:
    """Column action of ``U V - V U_red`` on every reduced basis vector.

    Returns the largest column norm and the Frobenius norm divided by
    ``sqrt(M)``.
    """
    UV = full.propagate(params, iso.active)[0]
    VU = iso.active @ reduced.unitary(params)
    cols = np.linalg.norm(UV - VU, axis=0)
    return float(cols.max()), float(np.linalg.norm(cols) / math.sqrt(iso.M))


def certify_pair(
    full: FullEvolver,
    red: ReducedSystem,
    iso: Isometry,
    params: QaoaParams,
    reduced: ReducedEvolver | None = None,
) -> EquivalenceReport:
    """Run both evolutions with the same angles and measure every discrepancy."""
    reduced = ReducedEvolver(red, iso) if reduced is None else reduced
    a = full.evolve(params)
    b = reduced.evolve(params)
    mapped = iso.embed(b.final_state)
    # a lossy V changes the length of the mapped state; compare directions only
    mapped_n = mapped / np.linalg.norm(mapped)
    F = fidelity(a.final_state, mapped_n)
    imax, ifro = intertwining_residuals(full, reduced, iso, params)
    return EquivalenceReport(
        fidelity_offset=F - 1.0,
        delta_e=abs(a.energy - b.energy),
        energy_full=a.energy,
        energy_reduced=b.energy,
        tvd=tvd(a.distribution, measure_distribution(mapped_n)),
        intertwine_max=imax,
        intertwine_residual=ifro,
        isometry_residuals=iso.isometry_residuals,
        n=full.n,
        m=iso.m,
        M=iso.M,
        params_used=params,
        wall_full=a.wall_time,
        wall_reduced=b.wall_time,
    )


@dataclass(frozen=True)
class ExclusionCertificate:
    passed: bool
    worst_leak: float
    worst_bitstring: str | None
    excluded: int


def certify_orthogonal_exclusion(sub: InvariantSubspace, state: np.ndarray) -> ExclusionCertificate:
    """Basis states outside the invariant subspace must carry no probability.

    A basis state ``|x>`` counts as excluded when ``||Pi_eff |x>|| <= 1e-10``;
    each such state must have probability at most ``1e-12``.
    """
    state = np.asarray(state)
    if state.shape != (sub.dim,):
        raise StructuralError(f"state has shape {state.shape}, expected ({sub.dim},)")
    overlap = np.sqrt(np.sum(np.abs(sub.basis) ** 2, axis=1))
    excluded = np.flatnonzero(overlap <= EXCLUSION_OVERLAP)
    if excluded.size == 0:
        return ExclusionCertificate(True, 0.0, None, 0)
    probs = np.abs(state[excluded]) ** 2
    i = int(np.argmax(probs))
    worst = float(probs[i])
    return ExclusionCertificate(
        worst <= EXCLUSION_PROB, worst, format(int(excluded[i]), f"0{sub.n}b"), int(excluded.size)
    )


def weight_leak(state: np.ndarray, k: int) -> float:
    """Total probability on bitstrings whose Hamming weight differs from ``k``."""
    probs = np.abs(np.asarray(state)) ** 2
    idx = np.arange(probs.size)
    return float(probs[np.bitwise_count(idx) != k].sum())


def projector_commutator(full: FullEvolver, sub: InvariantSubspace, params: QaoaParams) -> float:
    """``||[Pi_eff, U]||_F`` with the dense unitary (``n <= 10``)."""
    if full.n > COMMUTATOR_LIMIT:
        raise StructuralError(f"dense commutator check limited to n <= {COMMUTATOR_LIMIT}")
    U = full.unitary(params)
    Pi = sub.projector()
    return float(np.linalg.norm(Pi @ U - U @ Pi))
