"""Symbolic n-qubit Pauli algebra and matrix-free operator action.

Conventions
-----------
A Pauli word is a string over ``IXYZ`` whose character ``q`` acts on qubit
``q``. Computational basis states are indexed big-endian: qubit ``q`` is bit
``n - 1 - q`` of the integer index, so ``format(index, f"0{n}b")[q]`` is the
value of qubit ``q``. Dense matrices therefore match
``kron(P_0, P_1, ..., P_{n-1})``.

Internally every word is stored in symplectic form ``(x, z)`` with
``P = i**popcount(x & z) * X**x Z**z``, which makes products, commutators and
the action on basis states pure bit arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .errors import ResourceError, StructuralError

MERGE_TOL = 1e-12
DENSE_LIMIT = 14

_CHAR_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_BITS_CHAR = {v: k for k, v in _CHAR_BITS.items()}


def word_to_masks(word: str) -> tuple[int, int]:
    """Return the ``(x, z)`` bit masks of a Pauli word."""
    n = len(word)
    x = z = 0
    for q, ch in enumerate(word):
        try:
            bx, bz = _CHAR_BITS[ch]
        except KeyError:
            raise StructuralError(f"invalid Pauli character {ch!r} in {word!r}") from None
        shift = n - 1 - q
        x |= bx << shift
        z |= bz << shift
    return x, z


def masks_to_word(x: int, z: int, n: int) -> str:
    return "".join(
        _BITS_CHAR[((x >> (n - 1 - q)) & 1, (z >> (n - 1 - q)) & 1)] for q in range(n)
    )


def _popcount(v: int) -> int:
    return int(v).bit_count()


def _product_masks(x1: int, z1: int, x2: int, z2: int) -> tuple[complex, int, int]:
    """Phase and masks of ``P(x1, z1) @ P(x2, z2)``."""
    x3, z3 = x1 ^ x2, z1 ^ z2
    power = _popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x3 & z3)
    power += 2 * _popcount(z1 & x2)
    return 1j ** (power % 4), x3, z3


@dataclass(frozen=True)
class PauliTerm:
    """A single Pauli string with a complex coefficient."""

    coeff: complex
    word: str

    def __post_init__(self):
        object.__setattr__(self, "coeff", complex(self.coeff))
        word_to_masks(self.word)

    @property
    def n(self) -> int:
        return len(self.word)

    @property
    def is_diagonal(self) -> bool:
        return set(self.word) <= {"I", "Z"}

    def __mul__(self, other: "PauliTerm") -> "PauliTerm":
        return pauli_multiply(self, other)


def pauli_multiply(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Operator product ``a @ b`` as a single Pauli term.

    >>> pauli_multiply(PauliTerm(1, "X"), PauliTerm(1, "Y"))
    PauliTerm(coeff=1j, word='Z')
    """
    if len(a.word) != len(b.word):
        raise StructuralError(f"word lengths differ: {len(a.word)} vs {len(b.word)}")
    x1, z1 = word_to_masks(a.word)
    x2, z2 = word_to_masks(b.word)
    phase, x3, z3 = _product_masks(x1, z1, x2, z2)
    return PauliTerm(a.coeff * b.coeff * phase, masks_to_word(x3, z3, len(a.word)))


@dataclass(frozen=True)
class OperatorSum:
    """Normalized linear combination of n-qubit Pauli words.

    Terms with equal words are merged, coefficients below ``MERGE_TOL`` are
    dropped and the remaining terms are sorted lexicographically by word.
    Instances are immutable; arithmetic returns new sums.
    """

    n: int
    terms: tuple[PauliTerm, ...] = field(default=())

    def __post_init__(self):
        merged: dict[str, complex] = {}
        for t in self.terms:
            if not isinstance(t, PauliTerm):
                t = PauliTerm(*t)
            if len(t.word) != self.n:
                raise StructuralError(
                    f"term {t.word!r} has length {len(t.word)}, expected {self.n}"
                )
            merged[t.word] = merged.get(t.word, 0.0) + t.coeff
        terms = tuple(
            PauliTerm(c, w) for w, c in sorted(merged.items()) if abs(c) >= MERGE_TOL
        )
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_dict(cls, n: int, coeffs: Mapping[str, complex]) -> "OperatorSum":
        return cls(n, tuple(PauliTerm(c, w) for w, c in coeffs.items()))

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "OperatorSum":
        return cls(n, (PauliTerm(coeff, "I" * n),))

    @classmethod
    def single(cls, n: int, ops: Mapping[int, str], coeff: complex = 1.0) -> "OperatorSum":
        """Build ``coeff * P`` from a ``{qubit: 'X'|'Y'|'Z'}`` mapping."""
        chars = ["I"] * n
        for q, ch in ops.items():
            chars[q] = ch
        return cls(n, (PauliTerm(coeff, "".join(chars)),))

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.n == other.n and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.n, self.terms))

    def to_dict(self) -> dict[str, complex]:
        return {t.word: t.coeff for t in self.terms}

    def _check(self, other: "OperatorSum") -> None:
        if self.n != other.n:
            raise StructuralError(f"qubit counts differ: {self.n} vs {other.n}")

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        self._check(other)
        return OperatorSum(self.n, self.terms + other.terms)

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        return self + (-1.0) * other

    def __neg__(self) -> "OperatorSum":
        return (-1.0) * self

    def __rmul__(self, scalar: complex) -> "OperatorSum":
        return OperatorSum(self.n, tuple(PauliTerm(scalar * t.coeff, t.word) for t in self.terms))

    def __matmul__(self, other: "OperatorSum") -> "OperatorSum":
        self._check(other)
        out: dict[tuple[int, int], complex] = {}
        for x1, z1, c1 in self._symplectic:
            for x2, z2, c2 in other._symplectic:
                phase, x3, z3 = _product_masks(x1, z1, x2, z2)
                out[(x3, z3)] = out.get((x3, z3), 0.0) + phase * c1 * c2
        return OperatorSum(
            self.n,
            tuple(PauliTerm(c, masks_to_word(x, z, self.n)) for (x, z), c in out.items()),
        )

    @cached_property
    def _symplectic(self) -> tuple[tuple[int, int, complex], ...]:
        return tuple((*word_to_masks(t.word), t.coeff) for t in self.terms)

    @property
    def is_hermitian(self) -> bool:
        return all(abs(t.coeff.imag) < MERGE_TOL for t in self.terms)

    @property
    def is_diagonal(self) -> bool:
        return all(t.is_diagonal for t in self.terms)

    @property
    def dim(self) -> int:
        return 2**self.n

    def diagonal(self) -> np.ndarray:
        """Diagonal of the operator in the computational basis."""
        idx = np.arange(self.dim, dtype=np.int64)
        diag = np.zeros(self.dim, dtype=complex)
        for x, z, c in self._symplectic:
            if x == 0:
                diag += c * _z_signs(idx, z)
        return _maybe_real(diag) if self.is_hermitian else diag

    def adjoint(self) -> "OperatorSum":
        # Pauli words are Hermitian
        return OperatorSum(self.n, tuple(PauliTerm(t.coeff.conjugate(), t.word) for t in self.terms))

    def __repr__(self) -> str:
        if not self.terms:
            return f"OperatorSum(n={self.n}, 0)"
        body = " + ".join(f"({t.coeff:.6g})*{t.word}" for t in self.terms)
        return f"OperatorSum(n={self.n}, {body})"


def _z_signs(idx: np.ndarray, z: int) -> np.ndarray:
    return 1 - 2 * (np.bitwise_count(idx & z) & 1).astype(np.int8)


def _maybe_real(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a) and not np.any(a.imag):
        return a.real.copy()
    return a


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """Symbolic commutator ``a b - b a``.

    Pauli words either commute or anticommute, so only anticommuting pairs
    contribute (with twice their product). The result is empty iff ``a`` and
    ``b`` commute exactly.
    """
    a._check(b)
    out: dict[tuple[int, int], complex] = {}
    for x1, z1, c1 in a._symplectic:
        for x2, z2, c2 in b._symplectic:
            if (_popcount(x1 & z2) + _popcount(z1 & x2)) % 2 == 0:
                continue
            phase, x3, z3 = _product_masks(x1, z1, x2, z2)
            out[(x3, z3)] = out.get((x3, z3), 0.0) + 2 * phase * c1 * c2
    return OperatorSum(
        a.n, tuple(PauliTerm(c, masks_to_word(x, z, a.n)) for (x, z), c in out.items())
    )


def _check_dense(n: int, limit: int | None) -> None:
    limit = DENSE_LIMIT if limit is None else limit
    if n > limit:
        raise ResourceError(f"dense materialization of {n} qubits exceeds limit {limit}")


def to_dense(op: OperatorSum, limit: int | None = None) -> np.ndarray:
    """Materialize ``op`` as a ``2**n x 2**n`` matrix.

    Each term touches exactly one entry per column, so the cost is
    ``O(len(op) * 2**n)`` on top of the allocation.
    """
    _check_dense(op.n, limit)
    dim = op.dim
    idx = np.arange(dim, dtype=np.int64)
    out = np.zeros((dim, dim), dtype=complex)
    for x, z, c in op._symplectic:
        phase = c * 1j ** (_popcount(x & z) % 4)
        out[idx ^ x, idx] += phase * _z_signs(idx, z)
    return _maybe_real(out) if op.is_hermitian and _real_entries(op) else out


def to_sparse(op: OperatorSum) -> sparse.csr_matrix:
    """Sparse CSR realization; no dense limit applies."""
    dim = op.dim
    idx = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for x, z, c in op._symplectic:
        phase = c * 1j ** (_popcount(x & z) % 4)
        rows.append(idx ^ x)
        cols.append(idx)
        vals.append(phase * _z_signs(idx, z))
    if not rows:
        return sparse.csr_matrix((dim, dim))
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    mat.sum_duplicates()
    if _real_entries(op):
        mat = mat.real.tocsr()
    mat.eliminate_zeros()
    return mat


def _real_entries(op: OperatorSum) -> bool:
    """True when every matrix entry of ``op`` is real.

    Each ``Y`` contributes a factor ``i``; a term has real entries when its
    coefficient times ``i**(#Y)`` is real.
    """
    for x, z, c in op._symplectic:
        v = c * 1j ** (_popcount(x & z) % 4)
        if abs(v.imag) >= MERGE_TOL:
            return False
    return True


def apply(op: OperatorSum, v: np.ndarray) -> np.ndarray:
    """Matrix-free ``op @ v`` for a vector or a ``(2**n, k)`` block of columns.

    The result is not renormalized.
    """
    v = np.asarray(v)
    if v.shape[0] != op.dim:
        raise StructuralError(f"state dimension {v.shape[0]} does not match 2**{op.n}")
    idx = np.arange(op.dim, dtype=np.int64)
    real = _real_entries(op) and not np.iscomplexobj(v)
    out = np.zeros(v.shape, dtype=float if real else complex)
    diag = np.zeros(op.dim, dtype=complex)
    has_diag = False
    for x, z, c in op._symplectic:
        phase = c * 1j ** (_popcount(x & z) % 4)
        if x == 0:
            diag += phase * _z_signs(idx, z)
            has_diag = True
            continue
        # (P v)[j] = phase * sign(j ^ x) * v[j ^ x]
        src = idx ^ x
        coef = phase * _z_signs(src, z)
        if real:
            coef = coef.real
        out += coef.reshape((-1,) + (1,) * (v.ndim - 1)) * v[src]
    if has_diag:
        d = diag.real if real else diag
        out += d.reshape((-1,) + (1,) * (v.ndim - 1)) * v
    return out


def pauli_sum(n: int, terms: Iterable[tuple[complex, str]]) -> OperatorSum:
    """Convenience constructor from ``(coeff, word)`` pairs."""
    return OperatorSum(n, tuple(PauliTerm(c, w) for c, w in terms))
