"""Invariant subspace discovery, isometric re-encoding and induced Hamiltonians.

The subspace reached by QAOA from ``psi0`` is the smallest space containing
``psi0`` that both Hamiltonians map into itself. :func:`krylov_closure` builds
it breadth first; :func:`symmetric_subspace` is the analytic alternative for
permutation-invariant problems (the ``n + 1`` Dicke sectors). Either result
is wrapped in an :class:`Isometry` onto ``m = ceil(log2 M)`` qubits and the
Hamiltonians are compressed to ``V^dagger H V``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from os import PathLike

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import NumericalIntegrityError, StructuralError
from .pauli import OperatorSum, _real_entries, apply, to_sparse
from .problems import dicke_state

RANK_TOL = 1e-9
# admitted residuals below AMBIGUITY * tol are indistinguishable from amplified rounding noise
AMBIGUITY = 1e3
CLOSURE_TOL = 1e-9
NORM_TOL = 1e-10
ISOMETRY_ORTHO_TOL = 1e-12
ISOMETRY_PROJ_TOL = 1e-10
ASYMMETRY_TOL = 1e-11


@dataclass
class ClosureLog:
    generations: int = 0
    candidates: int = 0
    rejected: int = 0
    min_admitted_residual: float = math.inf
    max_rejected_residual: float = 0.0
    lumped_dim: int | None = None

    def to_json(self) -> dict:
        return {
            "generations": self.generations,
            "candidates": self.candidates,
            "rejected": self.rejected,
            "min_admitted_residual": None if math.isinf(self.min_admitted_residual) else self.min_admitted_residual,
            "max_rejected_residual": self.max_rejected_residual,
            "lumped_dim": self.lumped_dim,
        }


@dataclass
class InvariantSubspace:
    """Orthonormal basis (as columns) of a subspace invariant under both Hamiltonians."""

    n: int
    basis: np.ndarray
    psi0: np.ndarray
    method: str = "krylov"
    log: ClosureLog = field(default_factory=ClosureLog)

    @property
    def M(self) -> int:
        return self.basis.shape[1]

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def projector(self) -> np.ndarray:
        """Dense ``Pi_eff = sum_k |phi_k><phi_k|``."""
        return self.basis @ self.basis.conj().T

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.conj().T @ v)

    def orthonormality_error(self) -> float:
        G = self.basis.conj().T @ self.basis
        return float(np.linalg.norm(G - np.eye(self.M)))

    def closure_residual(self, *ops: OperatorSum) -> float:
        """Largest ``||H v - Pi H v||`` over basis vectors ``v`` and the given operators."""
        worst = 0.0
        for op in ops:
            img = apply(op, self.basis)
            res = img - self.project(img)
            worst = max(worst, float(np.max(np.linalg.norm(res, axis=0), initial=0.0)))
        return worst

    def containment_residual(self, v: np.ndarray | None = None) -> float:
        v = self.psi0 if v is None else v
        return float(np.linalg.norm(v - self.project(v)))


def _check_state(psi0: np.ndarray, dim: int) -> np.ndarray:
    psi0 = np.asarray(psi0)
    if psi0.shape != (dim,):
        raise StructuralError(f"initial state has shape {psi0.shape}, expected ({dim},)")
    if abs(np.linalg.norm(psi0) - 1.0) > NORM_TOL:
        raise StructuralError(f"initial state is not normalized (norm {np.linalg.norm(psi0):.12g})")
    return psi0


def equitable_partition(
    hc: OperatorSum, hm: OperatorSum, psi0: np.ndarray, decimals: int = 9
) -> np.ndarray:
    """Coarsest partition of basis states that both Hamiltonians respect.

    Cells start from equal ``(psi0[x], H_C[x, x])`` and are refined until
    every state of a cell has the same summed ``H_M`` coupling into every
    cell. The normalized cell indicators then span an exactly orthonormal
    subspace containing ``psi0`` and invariant under ``hc`` (diagonal) and
    ``hm``. Returns a cell label per basis index, labelled in order of first
    appearance.
    """
    if not hc.is_diagonal:
        raise StructuralError("lumping requires a diagonal cost Hamiltonian")
    dim = hc.dim
    hs = to_sparse(hm).tocsr()

    def keyed(values) -> np.ndarray:
        ids: dict = {}
        return np.fromiter((ids.setdefault(v, len(ids)) for v in values), dtype=np.int64, count=dim)

    r = lambda a: np.round(np.asarray(a), decimals) + 0.0  # noqa: E731  (+0.0 folds -0.0)
    p = np.asarray(psi0)
    d = hc.diagonal()
    cells = keyed(zip(r(p.real).tolist(), r(p.imag).tolist(), r(np.real(d)).tolist()))
    K = int(cells.max()) + 1
    while True:
        onehot = sparse.csr_matrix((np.ones(dim), (np.arange(dim), cells)), shape=(dim, K))
        S = (hs @ onehot).tocsr()
        S.sort_indices()
        sigs = []
        for i in range(dim):
            lo, hi = S.indptr[i], S.indptr[i + 1]
            vals = S.data[lo:hi]
            sigs.append(
                (
                    int(cells[i]),
                    tuple(S.indices[lo:hi].tolist()),
                    tuple(r(np.real(vals)).tolist()),
                    tuple(r(np.imag(vals)).tolist()),
                )
            )
        new = keyed(sigs)
        K_new = int(new.max()) + 1
        cells = new
        if K_new == K:
            return cells
        K = K_new


def _lumping_basis(cells: np.ndarray) -> sparse.csr_matrix:
    dim = cells.size
    K = int(cells.max()) + 1
    sizes = np.bincount(cells, minlength=K)
    return sparse.csr_matrix(
        (1.0 / np.sqrt(sizes[cells]), (np.arange(dim), cells)), shape=(dim, K)
    )


def lumped_subspace(hc: OperatorSum, hm: OperatorSum, psi0: np.ndarray) -> InvariantSubspace:
    """Symmetry sector spanned by the reachable cells of :func:`equitable_partition`.

    Only cells connected to the support of ``psi0`` through ``hm`` are kept,
    so a weight-conserving mixer stays inside the initial weight sector. The
    basis consists of normalized cell indicators and is exactly orthonormal.
    """
    psi0 = _check_state(psi0, hc.dim)
    cells = equitable_partition(hc, hm, psi0)
    L = _lumping_basis(cells)
    K = L.shape[1]
    hm_q = (L.T @ to_sparse(hm) @ L).tocsr()
    v0 = L.T @ psi0
    pattern = (abs(hm_q) > 0).astype(np.int8)
    _, comp = csgraph.connected_components(pattern, directed=False)
    keep = np.isin(comp, np.unique(comp[np.abs(v0) > 0]))
    keep_idx = np.flatnonzero(keep)
    basis = L[:, keep_idx].toarray()
    if np.iscomplexobj(psi0):
        basis = basis.astype(complex)
    log = ClosureLog(lumped_dim=K)
    sub = subspace_from_basis(hc, hm, psi0, basis, method="lumped")
    sub.log = log
    return sub


def _closure(act_c, act_m, v0: np.ndarray, dtype, tol: float, max_dim: int, log: ClosureLog) -> np.ndarray:
    dim = v0.shape[0]
    cap = min(16, dim)
    basis = np.zeros((dim, cap), dtype=dtype)
    basis[:, 0] = v0 / np.linalg.norm(v0)
    M = 1
    start, stop = 0, 1
    while start < stop:
        log.generations += 1
        frontier = basis[:, start:stop]
        cands = np.empty((dim, 2 * (stop - start)), dtype=dtype)
        cands[:, 0::2] = act_c(frontier)
        cands[:, 1::2] = act_m(frontier)
        log.candidates += cands.shape[1]

        norms = np.linalg.norm(cands, axis=0)
        live = norms > tol
        cands[:, live] /= norms[live]
        cands[:, ~live] = 0.0
        old = basis[:, :M]
        for _ in range(2):
            cands -= old @ (old.conj().T @ cands)

        first_new = M
        for j in range(cands.shape[1]):
            if not live[j]:
                log.rejected += 1
                continue
            c = cands[:, j]
            if M > first_new:
                new = basis[:, first_new:M]
                for _ in range(2):
                    c = c - new @ (new.conj().T @ c)
            r = float(np.linalg.norm(c))
            if r > tol:
                if r < AMBIGUITY * tol:
                    raise NumericalIntegrityError(
                        f"ambiguous rank decision: residual {r:.3e} within {AMBIGUITY:g}x of tolerance "
                        f"at dimension {M}"
                    )
                if M >= max_dim:
                    raise NumericalIntegrityError(
                        f"closure exceeded the dimension cap {max_dim}; rank tolerance too loose"
                    )
                if M == cap:
                    cap = min(2 * cap, dim)
                    grown = np.zeros((dim, cap), dtype=dtype)
                    grown[:, :M] = basis[:, :M]
                    basis = grown
                basis[:, M] = c / r
                M += 1
                log.min_admitted_residual = min(log.min_admitted_residual, r)
            else:
                log.rejected += 1
                log.max_rejected_residual = max(log.max_rejected_residual, r)
        start, stop = first_new, M
    return _reorthonormalize(basis[:, :M])


def _reorthonormalize(B: np.ndarray) -> np.ndarray:
    """Householder QR of an almost-orthonormal basis, signs fixed so ``diag(R) > 0``.

    Spans are unchanged; this only removes the accumulated ``eps / r``
    loss of orthogonality from small admitted residuals.
    """
    Q, R = np.linalg.qr(B)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1
    return Q * signs


def krylov_closure(
    hc: OperatorSum,
    hm: OperatorSum,
    psi0: np.ndarray,
    tol: float = RANK_TOL,
    max_dim: int | None = None,
    lump: bool = True,
) -> InvariantSubspace:
    """Minimal subspace containing ``psi0`` that is closed under ``hc`` and ``hm``.

    Breadth first over generations: every basis vector of the current
    generation contributes ``hc @ v`` then ``hm @ v`` (FIFO order). Each
    candidate is normalized and orthogonalized twice against the basis and
    admitted when the residual norm exceeds ``tol``.

    With ``lump=True`` (and a diagonal ``hc``) the closure runs in the
    coordinates of :func:`equitable_partition`. That space is exactly
    invariant, so rounding noise cannot leak into its complement and inflate
    ``M`` on deep closures. The lifted basis is the same span.
    """
    if hc.n != hm.n:
        raise StructuralError(f"qubit counts differ: {hc.n} vs {hm.n}")
    dim = hc.dim
    psi0 = _check_state(psi0, dim)
    max_dim = dim if max_dim is None else max_dim
    real = _real_entries(hc) and _real_entries(hm) and not np.iscomplexobj(psi0)
    dtype = float if real else complex
    log = ClosureLog()

    if lump and hc.is_diagonal:
        cells = equitable_partition(hc, hm, psi0)
        L = _lumping_basis(cells)
        log.lumped_dim = L.shape[1]
        hm_q = (L.T @ to_sparse(hm) @ L).tocsr()
        # hc is constant on cells, so its quotient is diagonal
        d = hc.diagonal()
        cells_diag = np.zeros(L.shape[1], dtype=d.dtype)
        cells_diag[cells] = d
        v0 = L.T @ psi0
        if real:
            hm_q = hm_q.real
        q = _closure(
            lambda F: cells_diag[:, None] * F,
            lambda F: hm_q @ F,
            v0.astype(dtype),
            dtype,
            tol,
            min(max_dim, L.shape[1]),
            log,
        )
        basis = np.asarray(L @ q)
    else:
        basis = _closure(
            lambda F: apply(hc, F), lambda F: apply(hm, F), psi0.astype(dtype), dtype, tol, max_dim, log
        )
    return InvariantSubspace(hc.n, basis, psi0, "krylov", log)


def subspace_from_basis(
    hc: OperatorSum,
    hm: OperatorSum,
    psi0: np.ndarray,
    basis: np.ndarray,
    method: str = "given",
    tol: float = CLOSURE_TOL,
) -> InvariantSubspace:
    """Validate a proposed orthonormal basis and wrap it as an invariant subspace.

    Raises :class:`NumericalIntegrityError` unless the basis is orthonormal,
    closed under both Hamiltonians (relative to ``||H v||``), and contains
    ``psi0``.
    """
    psi0 = _check_state(psi0, hc.dim)
    sub = InvariantSubspace(hc.n, np.asarray(basis), psi0, method)
    if sub.orthonormality_error() > 1e-10:
        raise NumericalIntegrityError("proposed basis is not orthonormal")
    for op in (hc, hm):
        img = apply(op, sub.basis)
        scale = max(1.0, float(np.max(np.linalg.norm(img, axis=0), initial=0.0)))
        res = img - sub.project(img)
        if np.max(np.linalg.norm(res, axis=0), initial=0.0) > tol * scale:
            raise NumericalIntegrityError(f"proposed {method} basis is not invariant")
    if sub.containment_residual() > 1e-12:
        raise NumericalIntegrityError(f"initial state lies outside the proposed {method} subspace")
    return sub


def symmetric_subspace(hc: OperatorSum, hm: OperatorSum, psi0: np.ndarray) -> InvariantSubspace:
    """Permutation-symmetric sector spanned by the Dicke states ``|D^n_w>``, ``w = 0..n``.

    Valid when both Hamiltonians are invariant under all qubit permutations
    (complete-graph Max-Cut with the transverse-field mixer); the closure
    check in :func:`subspace_from_basis` rejects it otherwise.
    """
    n = hc.n
    basis = np.stack([dicke_state(n, w) for w in range(n + 1)], axis=1)
    if np.iscomplexobj(psi0):
        basis = basis.astype(complex)
    return subspace_from_basis(hc, hm, psi0, basis, method="symmetric")


METHODS = ("krylov", "lumped", "symmetric")


def find_subspace(
    hc: OperatorSum, hm: OperatorSum, psi0: np.ndarray, method: str = "krylov"
) -> InvariantSubspace:
    """Dispatch to one of the subspace constructions in ``METHODS``."""
    if method == "krylov":
        return krylov_closure(hc, hm, psi0)
    if method == "lumped":
        return lumped_subspace(hc, hm, psi0)
    if method == "symmetric":
        return symmetric_subspace(hc, hm, psi0)
    raise StructuralError(f"unknown subspace method {method!r}; expected one of {METHODS}")


def qubit_count(M: int) -> int:
    """Smallest ``m`` with ``2**m >= M``."""
    if M < 1:
        raise StructuralError(f"subspace dimension must be >= 1, got {M}")
    return (M - 1).bit_length()


@dataclass(frozen=True)
class QubitAccounting:
    n: int
    M: int
    m: int

    @property
    def savings(self) -> int:
        return self.n - self.m

    @property
    def compression_ratio(self) -> Fraction:
        """Effective-dimension ratio ``2**n / M``."""
        return Fraction(2**self.n, self.M)

    @property
    def dimension_ratio(self) -> int:
        return 2 ** (self.n - self.m)


def account(n: int, M: int) -> QubitAccounting:
    return QubitAccounting(n, M, qubit_count(M))


@dataclass
class Isometry:
    """Column-orthonormal map from ``m`` reduced qubits onto the invariant subspace.

    ``active`` holds ``V`` restricted to the first ``M`` reduced basis states
    (column ``k`` is ``|phi_k>``); the remaining ``2**m - M`` reduced basis
    states are padding and map to zero.
    """

    active: np.ndarray
    m: int
    psi0: np.ndarray
    reference_basis: np.ndarray
    ortho_residual: float = 0.0
    projector_residual: float = 0.0

    @property
    def M(self) -> int:
        return self.active.shape[1]

    @property
    def n(self) -> int:
        return int(self.active.shape[0]).bit_length() - 1

    @property
    def isometry_residuals(self) -> tuple[float, float]:
        return self.ortho_residual, self.projector_residual

    def padded(self) -> np.ndarray:
        """Full ``2**n x 2**m`` matrix with zero padding columns."""
        out = np.zeros((self.active.shape[0], 2**self.m), dtype=self.active.dtype)
        out[:, : self.M] = self.active
        return out

    def embed(self, reduced: np.ndarray) -> np.ndarray:
        """Map a reduced state (length ``M`` or ``2**m``) into the full space."""
        reduced = np.asarray(reduced)
        if reduced.shape[0] == 2**self.m:
            reduced = reduced[: self.M]
        if reduced.shape[0] != self.M:
            raise StructuralError(f"reduced state has length {reduced.shape[0]}, expected {self.M} or {2**self.m}")
        return self.active @ reduced

    def compress(self, full: np.ndarray) -> np.ndarray:
        """``V^dagger`` applied to a full-space state, active block only."""
        return self.active.conj().T @ full


def _projector_gap(A: np.ndarray, B: np.ndarray, block: int = 512) -> float:
    """``||A A^dagger - B B^dagger||_F`` assembled in row blocks."""
    total = 0.0
    for r in range(0, A.shape[0], block):
        D = A[r : r + block] @ A.conj().T - B[r : r + block] @ B.conj().T
        total += float(np.vdot(D, D).real)
    return math.sqrt(total)


def isometry_residuals(active: np.ndarray, reference_basis: np.ndarray) -> tuple[float, float]:
    """``(||V^dagger V - I_M||_F, ||V V^dagger - Pi_eff||_F)``."""
    M = active.shape[1]
    ortho = float(np.linalg.norm(active.conj().T @ active - np.eye(M)))
    return ortho, _projector_gap(active, reference_basis)


def build_isometry(sub: InvariantSubspace, check: bool = True) -> Isometry:
    """Send ``|phi_k>`` to the ``k``-th computational state of ``m`` qubits."""
    m = qubit_count(sub.M)
    active = sub.basis.copy()
    ortho, proj = isometry_residuals(active, sub.basis)
    iso = Isometry(active, m, sub.psi0, sub.basis, ortho, proj)
    if check and (ortho > ISOMETRY_ORTHO_TOL or proj > ISOMETRY_PROJ_TOL):
        raise NumericalIntegrityError(
            f"isometry identities violated: |V'V - I| = {ortho:.3e}, |VV' - Pi| = {proj:.3e}"
        )
    return iso


def corrupt_isometry(iso: Isometry, eps: float = 1e-3, column: int = 0, seed: int = 0) -> Isometry:
    """Negative control: perturb one column of ``V`` by a random vector of norm ``eps``.

    The reference projector is kept from the original subspace so the damage
    shows up in every downstream certificate.
    """
    rng = np.random.default_rng(seed)
    active = iso.active.copy()
    d = rng.standard_normal(active.shape[0])
    if np.iscomplexobj(active):
        d = d + 1j * rng.standard_normal(active.shape[0])
    active[:, column] += eps * d / np.linalg.norm(d)
    ortho, proj = isometry_residuals(active, iso.reference_basis)
    return Isometry(active, iso.m, iso.psi0, iso.reference_basis, ortho, proj)


@dataclass
class ReducedSystem:
    """Induced Hamiltonians and initial state on the reduced register.

    ``hc_red``/``hm_red`` are the active ``M x M`` blocks; :meth:`padded_hc`
    and :meth:`padded_hm` give the ``2**m`` embeddings with a zero padding
    block.
    """

    hc_red: np.ndarray
    hm_red: np.ndarray
    psi0_red: np.ndarray
    m: int
    asymmetry: tuple[float, float] = (0.0, 0.0)

    @property
    def M(self) -> int:
        return self.hc_red.shape[0]

    def _pad(self, A: np.ndarray) -> np.ndarray:
        out = np.zeros((2**self.m, 2**self.m), dtype=A.dtype)
        out[: self.M, : self.M] = A
        return out

    def padded_hc(self) -> np.ndarray:
        return self._pad(self.hc_red)

    def padded_hm(self) -> np.ndarray:
        return self._pad(self.hm_red)

    def padded_psi0(self) -> np.ndarray:
        out = np.zeros(2**self.m, dtype=self.psi0_red.dtype)
        out[: self.M] = self.psi0_red
        return out


def _compress_operator(op: OperatorSum, V: np.ndarray) -> tuple[np.ndarray, float]:
    A = V.conj().T @ apply(op, V)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    asym = float(np.max(np.abs(A - A.conj().T), initial=0.0)) / scale
    return (A + A.conj().T) / 2, asym


def induce_hamiltonians(
    hc: OperatorSum, hm: OperatorSum, iso: Isometry, check: bool = True
) -> ReducedSystem:
    """``V^dagger H V`` for both Hamiltonians and ``V^dagger psi0``.

    The raw compressions are symmetrized; their relative asymmetry (largest
    entry of ``A - A^dagger`` over ``max(1, max|A|)``) must stay below
    ``ASYMMETRY_TOL`` when ``check`` is set.
    """
    hc_red, a_c = _compress_operator(hc, iso.active)
    hm_red, a_m = _compress_operator(hm, iso.active)
    if check and max(a_c, a_m) > ASYMMETRY_TOL:
        raise NumericalIntegrityError(f"induced Hamiltonian asymmetry {max(a_c, a_m):.3e}")
    psi0_red = iso.compress(iso.psi0)
    return ReducedSystem(hc_red, hm_red, psi0_red, iso.m, (a_c, a_m))


# --- JSON audit artifact ------------------------------------------------------


def _interleave(a: np.ndarray) -> list[float]:
    a = np.asarray(a, dtype=complex).ravel(order="F")
    out = np.empty(2 * a.size)
    out[0::2] = a.real
    out[1::2] = a.imag
    return out.tolist()


def _deinterleave(data: list[float], shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    c = arr[0::2] + 1j * arr[1::2]
    c = c.reshape(shape, order="F")
    return c.real.copy() if not np.any(c.imag) else c


def subspace_to_json(sub: InvariantSubspace) -> dict:
    """Serialize the basis column-major as interleaved ``[re, im, re, im, ...]``."""
    return {
        "schema": "invariant-subspace/1",
        "n": sub.n,
        "M": sub.M,
        "m": qubit_count(sub.M),
        "method": sub.method,
        "log": sub.log.to_json(),
        "psi0": _interleave(sub.psi0),
        "basis": _interleave(sub.basis),
    }


def subspace_from_json(data: dict) -> InvariantSubspace:
    n, M = int(data["n"]), int(data["M"])
    basis = _deinterleave(data["basis"], (2**n, M))
    psi0 = _deinterleave(data["psi0"], (2**n,))
    log = ClosureLog(**{k: (math.inf if v is None else v) for k, v in data.get("log", {}).items()})
    return InvariantSubspace(n, basis, psi0, data.get("method", "krylov"), log)


def save_subspace(path: str | PathLike, sub: InvariantSubspace) -> None:
    with open(path, "w") as fh:
        json.dump(subspace_to_json(sub), fh)


def load_subspace(path: str | PathLike) -> InvariantSubspace:
    with open(path) as fh:
        return subspace_from_json(json.load(fh))
