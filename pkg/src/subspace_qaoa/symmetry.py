"""Commutant and dynamical Lie algebra of the QAOA generators.

The commutant ``{Q : [Q, H_C] = [Q, H_M] = 0}`` is computed as the null space
of the adjoint maps acting on row-major vectorized operators. A diagonal cost
only commutes with operators that are block diagonal over its degenerate
levels, so those entries are the only unknowns kept in the linear system.

The Lie closure works in the Pauli basis, orthonormal under
``<A, B> = tr(A^dagger B) / 2**n``, where Hermitian operators have real
coefficient vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import sparse

from .errors import NumericalIntegrityError, ResourceError, StructuralError
from .pauli import OperatorSum, PauliTerm, commutator, masks_to_word, to_dense, to_sparse, word_to_masks
from .problems import NO_CONSTRAINT, ConstraintSpec, initial_state

COMMUTANT_LIMIT = 6
LIE_LIMIT = 5
NULL_RCOND = 1e-9


def pauli_words(n: int) -> list[str]:
    """All ``4**n`` words, indexed by ``x * 2**n + z`` of their symplectic masks."""
    return [masks_to_word(x, z, n) for x in range(2**n) for z in range(2**n)]


def _word_index(word: str) -> int:
    x, z = word_to_masks(word)
    return (x << len(word)) | z


def coefficients(op: OperatorSum) -> np.ndarray:
    """Complex coefficient vector of ``op`` over :func:`pauli_words`."""
    vec = np.zeros(4**op.n, dtype=complex)
    for t in op.terms:
        vec[_word_index(t.word)] = t.coeff
    return vec


def from_coefficients(n: int, vec: np.ndarray, tol: float = 1e-12) -> OperatorSum:
    words = pauli_words(n)
    return OperatorSum(n, tuple(PauliTerm(c, words[i]) for i, c in enumerate(vec) if abs(c) > tol))


def dense_to_coefficients(A: np.ndarray) -> np.ndarray:
    """Pauli coefficients ``tr(P A) / 2**n`` of a dense ``2**n x 2**n`` matrix."""
    dim = A.shape[0]
    n = dim.bit_length() - 1
    if A.shape != (dim, dim) or 2**n != dim:
        raise StructuralError(f"expected a square power-of-two matrix, got {A.shape}")
    idx = np.arange(dim, dtype=np.int64)
    out = np.zeros(4**n, dtype=complex)
    z_all = np.arange(dim, dtype=np.int64)
    signs = 1 - 2 * (np.bitwise_count(idx[None, :] & z_all[:, None]).astype(np.int64) & 1)  # (z, i)
    for x in range(dim):
        # P[i ^ x, i] = phase * sign(i), so tr(P^dagger A) = sum conj(P[i ^ x, i]) A[i ^ x, i]
        col = A[idx ^ x, idx]
        phase = 1j ** (np.bitwise_count(x & z_all).astype(np.int64) % 4)
        out[(x << n) | z_all] = np.conj(phase) * (signs @ col) / dim
    return out


@dataclass
class CommutantBasis:
    """Orthonormal Hermitian basis of the commutant.

    ``generators`` holds dense Hermitian matrices, orthonormal under the
    normalized trace inner product.
    """

    n: int
    generators: list[np.ndarray]
    singular_values: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def dimension(self) -> int:
        return len(self.generators)

    def pauli_coefficients(self) -> np.ndarray:
        """Real Pauli coefficients of every generator, one row each."""
        return np.array([dense_to_coefficients(G).real for G in self.generators])

    def projection_residual(self, op: OperatorSum | np.ndarray) -> float:
        """Relative Frobenius distance of ``op`` from the span of the basis."""
        A = op if isinstance(op, np.ndarray) else to_dense(op)
        norm = np.linalg.norm(A)
        if norm == 0:
            return 0.0
        dim = A.shape[0]
        res = A.astype(complex)
        for G in self.generators:
            res = res - (np.vdot(G, A) / dim) * G
        return float(np.linalg.norm(res) / norm)


def _degenerate_pairs(diag: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)`` with ``diag[i] == diag[j]`` up to ``tol``."""
    order = np.argsort(diag, kind="stable")
    breaks = np.flatnonzero(np.diff(diag[order]) > tol) + 1
    rows, cols = [], []
    for block in np.split(order, breaks):
        r, c = np.meshgrid(block, block, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
    return np.concatenate(rows), np.concatenate(cols)


def commutant_system(hc: OperatorSum, hm: OperatorSum) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear system whose null space is the commutant.

    Returns
    -------
    A : ndarray
        Stacked ``vec(Q H - H Q)`` maps restricted to the unknown entries,
        split into real and imaginary parts when any coefficient is complex.
    rows, cols : ndarray
        Positions of the unknown entries ``Q[rows, cols]``.
    """
    dim = hc.dim
    eye = sparse.identity(dim, format="csr")
    ops = [hm]
    if hc.is_diagonal:
        d = hc.diagonal().real
        rows, cols = _degenerate_pairs(d, NULL_RCOND * max(1.0, float(np.abs(d).max())))
    else:
        ops.insert(0, hc)
        rows, cols = np.divmod(np.arange(dim * dim), dim)
    var = rows * dim + cols
    blocks = []
    for H in ops:
        Hs = to_sparse(H)
        ad = (sparse.kron(eye, Hs.T) - sparse.kron(Hs, eye)).tocsc()[:, var].tocsr()
        blocks.append(ad[np.flatnonzero(np.diff(ad.indptr))])
    A = sparse.vstack(blocks).toarray()
    if np.iscomplexobj(A) and A.size and np.abs(A.imag).max() > 0:
        A = np.block([[A.real, -A.imag], [A.imag, A.real]])
    else:
        A = A.real
    return A, rows, cols


def commutant_nullspace(hc: OperatorSum, hm: OperatorSum, limit: int = COMMUTANT_LIMIT) -> CommutantBasis:
    """Exact commutant of the two Hamiltonians by SVD null space (``n <= limit``).

    Singular values below ``NULL_RCOND * sigma_max`` count as zero. Every null
    vector is split into Hermitian and anti-Hermitian parts, and the Hermitian
    pieces are orthonormalized into the returned generators.
    """
    if hc.n != hm.n:
        raise StructuralError(f"qubit counts differ: {hc.n} vs {hm.n}")
    if hc.n > limit:
        raise ResourceError(
            f"commutant oracle limited to n <= {limit}; use krylov_closure for larger instances"
        )
    if not (hc.is_hermitian and hm.is_hermitian):
        raise StructuralError("commutant oracle expects Hermitian Hamiltonians")
    dim = hc.dim
    A, rows, cols = commutant_system(hc, hm)
    nvar = rows.size
    complex_split = A.shape[1] == 2 * nvar
    if A.shape[0] == 0:
        s, null = np.zeros(0), np.eye(A.shape[1])
    else:
        _, s, vh = np.linalg.svd(A, full_matrices=True)
        rank = int(np.sum(s > NULL_RCOND * s[0]))
        null = vh[rank:].T
    pieces = []
    for q in null.T:
        Q = np.zeros((dim, dim), dtype=complex)
        Q[rows, cols] = q[:nvar] + (1j * q[nvar:] if complex_split else 0)
        pieces.append(((Q + Q.conj().T) / 2).ravel())
        pieces.append(((Q - Q.conj().T) / 2j).ravel())
    if not pieces:
        raise NumericalIntegrityError("commutant lost the identity; rank tolerance too loose")
    # Hermitian matrices form a real vector space; orthonormalize there
    P = np.array(pieces)
    _, sv, vt = np.linalg.svd(np.concatenate([P.real, P.imag], axis=1), full_matrices=False)
    keep = vt[sv > NULL_RCOND * sv[0]]
    expected = null.shape[1] // (2 if complex_split else 1)
    if keep.shape[0] != expected:
        raise NumericalIntegrityError(
            f"Hermitian generators span {keep.shape[0]} dimensions, null space has {expected}"
        )
    half = dim * dim
    gens = []
    for k in keep:
        G = np.sqrt(dim) * (k[:half] + 1j * k[half:]).reshape(dim, dim)
        G = (G + G.conj().T) / 2
        lead = G.ravel()[np.argmax(np.abs(G))]
        gens.append(G if lead.real >= 0 else -G)
    return CommutantBasis(hc.n, gens, s)


Saturated = Literal["saturated"]


def lie_closure_dim(
    hc: OperatorSum, hm: OperatorSum, cap: int = 4**LIE_LIMIT, tol: float = 1e-9
) -> int | Saturated:
    """Dimension of the real Lie algebra generated by ``i H_C`` and ``i H_M``.

    Works on Hermitian representatives with the bracket ``(A, B) -> i[A, B]``
    and grows a Gram-Schmidt basis breadth first from nested brackets with
    the two generators. Returns ``"saturated"`` once ``cap`` is reached.
    """
    n = hc.n
    if hc.n != hm.n:
        raise StructuralError(f"qubit counts differ: {hc.n} vs {hm.n}")
    if n > LIE_LIMIT:
        raise ResourceError(f"Lie closure limited to n <= {LIE_LIMIT}")
    gens = [hc, hm]
    basis: list[np.ndarray] = []
    elements: list[OperatorSum] = []

    def admit(op: OperatorSum) -> None:
        v = coefficients(op).real
        norm = np.linalg.norm(v)
        if norm <= tol:
            return
        v = v / norm
        if basis:
            B = np.array(basis)
            for _ in range(2):
                v = v - B.T @ (B @ v)
        r = np.linalg.norm(v)
        if r > tol:
            basis.append(v / r)
            elements.append(from_coefficients(n, v / r))

    for g in gens:
        admit(g)
    head = 0
    while head < len(elements):
        current = elements[head]
        head += 1
        for g in gens:
            admit(1j * commutator(g, current))
            if len(basis) >= cap:
                return "saturated"
    return len(basis)


Evidence = Literal["trivial_commutant", "conserved_quantity", "weight_sector"]


@dataclass(frozen=True)
class ReducibilityVerdict:
    reducible: bool
    commutant_dim: int | None
    evidence: Evidence
    krylov_dim: int | None = None
    method: str = "commutant"

    def to_json(self) -> dict:
        return {
            "reducible": self.reducible,
            "commutant_dim": self.commutant_dim,
            "evidence": self.evidence,
            "krylov_dim": self.krylov_dim,
            "method": self.method,
        }


def classify(
    hc: OperatorSum,
    hm: OperatorSum,
    constraint: ConstraintSpec = NO_CONSTRAINT,
    psi0: np.ndarray | None = None,
    oracle_limit: int = COMMUTANT_LIMIT,
    subspace_dim: tuple[int, str] | None = None,
) -> ReducibilityVerdict:
    """Decide whether the instance admits a qubit reduction.

    Hamming-weight constraints are reducible by construction. Otherwise the
    exact commutant decides for ``n <= oracle_limit``; beyond that the
    invariant subspace reached from ``psi0`` is compared with ``2**n``.
    ``subspace_dim`` passes an already computed ``(M, method)`` for that
    comparison.
    """
    from .reduction import krylov_closure, lumped_subspace

    if constraint.constrained:
        return ReducibilityVerdict(True, None, "weight_sector", method="constraint")
    n = hc.n
    if n <= oracle_limit:
        dim = commutant_nullspace(hc, hm, limit=oracle_limit).dimension
        return ReducibilityVerdict(
            dim > 1, dim, "conserved_quantity" if dim > 1 else "trivial_commutant"
        )
    if subspace_dim is not None:
        M, method = subspace_dim
        return ReducibilityVerdict(M < 2**n, None, "conserved_quantity", krylov_dim=M, method=method)
    psi0 = initial_state(n, constraint) if psi0 is None else psi0
    try:
        M = krylov_closure(hc, hm, psi0).M
        method = "krylov"
    except NumericalIntegrityError:
        # deep closures can be numerically ambiguous; the symmetry sector still bounds M
        M = lumped_subspace(hc, hm, psi0).M
        method = "lumped"
    return ReducibilityVerdict(M < 2**n, None, "conserved_quantity", krylov_dim=M, method=method)
