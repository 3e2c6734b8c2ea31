"""Dense linear algebra and elementary state operations.

Subsystem convention: ``dims`` lists tensor factors left to right, and the
leftmost factor is the most significant index of the row-major flattening.
All entropies are in bits.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

ATOL = 1e-7


@dataclass(frozen=True)
class Tolerance:
    atol: float = ATOL

    def __post_init__(self):
        if not self.atol > 0:
            raise ValueError(f"atol must be positive, got {self.atol}")


def _as_dims(dims: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"invalid subsystem dimensions {dims}")
    return dims


@dataclass(frozen=True)
class PureState:
    """Unit vector with an ordered list of subsystem dimensions."""

    amplitudes: np.ndarray
    dims: tuple[int, ...]
    atol: float = field(default=ATOL, repr=False, compare=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dims = _as_dims(self.dims)
        if int(np.prod(dims)) != amps.size:
            raise ValueError(f"dims {dims} do not match vector length {amps.size}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > self.atol:
            raise ValueError(f"state is not normalized (norm^2 = {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    def density(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(np.outer(v, v.conj()), self.dims, atol=self.atol)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix.

    Validation runs on construction and the spectrum it computes is kept,
    so entropies of a constructed state cost no further diagonalisation.
    """

    matrix: np.ndarray
    dims: tuple[int, ...]
    atol: float = field(default=ATOL, repr=False, compare=False)
    eigenvalues: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        dims = _as_dims(self.dims)
        n = int(np.prod(dims))
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match dims {dims}")
        evals = hermitian_eigenvalues(m, atol=self.atol)
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > self.atol:
            raise ValueError(f"trace is {tr}, expected 1")
        if evals[0] < -self.atol:
            raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {evals[0]:.3e})")
        m.setflags(write=False)
        evals.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "eigenvalues", evals)

    @classmethod
    def with_spectrum(cls, matrix, dims, eigenvalues, atol: float = ATOL) -> "DensityMatrix":
        """Build a state whose spectrum is already known (e.g. a permutation
        or a block-diagonal assembly of validated blocks), skipping the
        diagonalisation but not the Hermiticity, trace and sign checks."""
        obj = object.__new__(cls)
        m = np.asarray(matrix, dtype=complex)
        dims = _as_dims(dims)
        n = int(np.prod(dims))
        evals = np.sort(np.asarray(eigenvalues, dtype=float))
        if m.shape != (n, n) or evals.shape != (n,):
            raise ValueError(f"matrix/spectrum shapes do not match dims {dims}")
        if np.max(np.abs(m - m.conj().T)) > atol:
            raise ValueError("matrix is not Hermitian within tolerance")
        if abs(float(np.trace(m).real) - 1.0) > atol or evals[0] < -atol:
            raise ValueError("not a valid density matrix")
        m.setflags(write=False)
        evals.setflags(write=False)
        object.__setattr__(obj, "matrix", m)
        object.__setattr__(obj, "dims", dims)
        object.__setattr__(obj, "atol", atol)
        object.__setattr__(obj, "eigenvalues", evals)
        return obj

    @property
    def side(self) -> int:
        return self.matrix.shape[0]


State = Union[PureState, DensityMatrix]


def kron(*mats: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more matrices (or vectors), left to right."""
    if not mats:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, (np.asarray(m) for m in mats))


def tensor_states(*states: State) -> State:
    """Tensor product of states of the same kind, concatenating dims."""
    dims = sum((s.dims for s in states), ())
    if all(isinstance(s, PureState) for s in states):
        return PureState(kron(*(s.amplitudes for s in states)), dims)
    mats = [s.density().matrix if isinstance(s, PureState) else s.matrix for s in states]
    return DensityMatrix(kron(*mats), dims)


def _check_perm(perm: Sequence[int], n: int) -> list[int]:
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def permute_systems(s: State, perm: Sequence[int]) -> State:
    """Reorder subsystems so that new subsystem ``k`` is old subsystem ``perm[k]``."""
    n = len(s.dims)
    perm = _check_perm(perm, n)
    new_dims = tuple(s.dims[p] for p in perm)
    if isinstance(s, PureState):
        t = s.amplitudes.reshape(s.dims).transpose(perm)
        return PureState(t.reshape(-1), new_dims, atol=s.atol)
    t = s.matrix.reshape(s.dims + s.dims).transpose(perm + [n + p for p in perm])
    side = s.side
    return DensityMatrix.with_spectrum(t.reshape(side, side), new_dims, s.eigenvalues, atol=s.atol)


def _letters(n: int) -> tuple[str, str]:
    if 2 * n > len(string.ascii_letters):
        raise ValueError(f"too many subsystems ({n})")
    return string.ascii_lowercase[:n], string.ascii_uppercase[:n]


def partial_trace_matrix(m: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Partial trace on a raw matrix; kept systems stay in their original order."""
    dims = tuple(dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must not be empty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError(f"keep indices {keep} out of range for {n} subsystems")
    rows, cols = _letters(n)
    cols = "".join(cols[i] if i in keep else rows[i] for i in range(n))
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    t = np.einsum(f"{rows}{cols}->{out}", m.reshape(dims + dims))
    side = int(np.prod([dims[i] for i in keep]))
    return t.reshape(side, side)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    keep = sorted(set(int(k) for k in keep))
    m = partial_trace_matrix(rho.matrix, rho.dims, keep)
    return DensityMatrix(m, tuple(rho.dims[i] for i in keep), atol=rho.atol)


def hermitian_eigenvalues(m: np.ndarray, atol: float = ATOL) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix (LAPACK ``heevd``)."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.conj().T)) > atol:
        raise ValueError("matrix is not Hermitian within tolerance")
    return np.linalg.eigvalsh(m)


def entropy_of_spectrum(evals: np.ndarray, atol: float = ATOL) -> float:
    """Shannon entropy in bits of a spectrum, clamping [-atol, 0] to zero."""
    evals = np.asarray(evals, dtype=float)
    if evals.size and evals.min() < -atol:
        raise ValueError(f"negative eigenvalue {evals.min():.3e} beyond tolerance")
    pos = evals[evals > 0]
    h = float(-np.sum(pos * np.log2(pos)))
    return h if h > 0 else 0.0


def von_neumann_entropy(rho: DensityMatrix, base: float = 2) -> float:
    h = entropy_of_spectrum(rho.eigenvalues, atol=rho.atol)
    return h if base == 2 else h / np.log2(base)


def shannon_entropy(probs: Sequence[float]) -> float:
    return entropy_of_spectrum(np.asarray(probs, dtype=float))


def basis_vector(d: int, i: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1.0
    return v


def max_entangled(d: int) -> PureState:
    """``(1/sqrt(d)) sum_i |ii>`` on dims ``(d, d)``."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    v = np.zeros(d * d, dtype=complex)
    v[np.arange(d) * (d + 1)] = 1 / np.sqrt(d)
    return PureState(v, (d, d))


def maximally_mixed(d: int) -> DensityMatrix:
    return DensityMatrix(np.eye(d, dtype=complex) / d, (d,))


def shift(d: int, x: int) -> np.ndarray:
    """``X(x)|j> = |j + x mod d>``."""
    return np.roll(np.eye(d, dtype=complex), x % d, axis=0)


def clock(d: int, z: int) -> np.ndarray:
    """``Z(z)|j> = w^(z j)|j>`` with ``w = exp(2 pi i / d)``."""
    j = np.arange(d)
    return np.diag(np.exp(2j * np.pi * ((z * j) % d) / d))


def weyl(d: int, x: int, z: int) -> np.ndarray:
    """Generalised Pauli ``W(x, z) = X(x) Z(z)``."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    return shift(d, x) @ clock(d, z)


def dephase(rho: DensityMatrix, subsystems: Iterable[int]) -> DensityMatrix:
    """Zero the off-diagonal blocks in the computational basis of ``subsystems``."""
    n = len(rho.dims)
    subsystems = set(int(s) for s in subsystems)
    if any(s < 0 or s >= n for s in subsystems):
        raise ValueError(f"subsystem indices {sorted(subsystems)} out of range")
    t = rho.matrix.reshape(rho.dims + rho.dims).copy()
    for s in subsystems:
        d = rho.dims[s]
        shape = [1] * (2 * n)
        shape[s] = shape[n + s] = d
        t = t * np.eye(d).reshape(shape)
    return DensityMatrix(t.reshape(rho.side, rho.side), rho.dims, atol=rho.atol)


def haar_unitary(d: int, seed: int | np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Ginibre matrix."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_pure_state(dims: Sequence[int], rng: np.random.Generator) -> PureState:
    dims = _as_dims(dims)
    n = int(np.prod(dims))
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return PureState(v / np.linalg.norm(v), dims)


def random_density(dims: Sequence[int], rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state ``G G^dagger / tr`` with a Ginibre factor of given rank."""
    dims = _as_dims(dims)
    n = int(np.prod(dims))
    k = n if rank is None else rank
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityMatrix(m / np.trace(m).real, dims)
