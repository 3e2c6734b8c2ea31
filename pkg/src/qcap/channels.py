"""Kraus-operator channel algebra and the named channels of the constructions.

A :class:`KrausChannel` stores its operators as a stack of shape
``(n_kraus, dim_out, dim_in)``. Tensor products keep their operator stack
lazy, because a two-use flagged channel can have hundreds of Kraus operators
while most computations only ever touch its branches.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .qmat import (
    ATOL,
    DensityMatrix,
    PureState,
    basis_vector,
    haar_unitary,
    hermitian_eigenvalues,
    kron,
    permute_systems,
    weyl,
)

KrausStack = Union[np.ndarray, Callable[[], np.ndarray]]


class ChannelError(ValueError):
    """Raised for invalid channel constructions or dimension mismatches."""


class KrausChannel:
    """Completely positive trace-preserving map in Kraus form.

    ``in_dims``/``out_dims`` record the register structure on each side;
    only their products matter for composition. ``branches`` is set for
    flagged mixtures (and tensor products of them): a tuple of
    :class:`FlaggedBranch` whose output blocks are mutually orthogonal.
    """

    def __init__(
        self,
        kraus: KrausStack,
        in_dims: Sequence[int],
        out_dims: Sequence[int],
        *,
        branches: Sequence["FlaggedBranch"] = (),
        atol: float = ATOL,
        check: bool = True,
    ):
        self.in_dims = tuple(int(d) for d in in_dims)
        self.out_dims = tuple(int(d) for d in out_dims)
        self.branches = tuple(branches)
        self.atol = atol
        if callable(kraus):
            self._factory = kraus
        else:
            self._factory = None
            self.__dict__["kraus"] = _validated_stack(
                kraus, self.dim_in, self.dim_out, atol if check else None
            )

    @cached_property
    def kraus(self) -> np.ndarray:
        stack = np.asarray(self._factory(), dtype=complex)
        stack.setflags(write=False)
        return stack

    @property
    def dim_in(self) -> int:
        return int(np.prod(self.in_dims))

    @property
    def dim_out(self) -> int:
        return int(np.prod(self.out_dims))

    @property
    def n_kraus(self) -> int:
        return self.kraus.shape[0]

    @property
    def branch_labels(self) -> list[tuple[str, float]]:
        return [(b.label, b.probability) for b in self.branches]

    def __repr__(self):
        extra = f", branches={[b.label for b in self.branches]}" if self.branches else ""
        return f"KrausChannel(in_dims={self.in_dims}, out_dims={self.out_dims}{extra})"


@dataclass(frozen=True)
class FlaggedBranch:
    probability: float
    channel: KrausChannel
    label: Optional[str] = None


def _validated_stack(kraus, dim_in: int, dim_out: int, atol: Optional[float]) -> np.ndarray:
    stack = np.asarray(kraus, dtype=complex)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ChannelError("expected a non-empty list of Kraus matrices")
    if stack.shape[1:] != (dim_out, dim_in):
        raise ChannelError(f"Kraus shape {stack.shape[1:]} does not match ({dim_out}, {dim_in})")
    if atol is not None:
        gram = np.einsum("koi,koj->ij", stack.conj(), stack)
        err = np.max(np.abs(gram - np.eye(dim_in)))
        if err > atol:
            raise ChannelError(f"Kraus completeness violated by {err:.3e}")
    stack = stack.copy()
    stack.setflags(write=False)
    return stack


def make_channel(
    kraus: Sequence[np.ndarray] | np.ndarray,
    in_dims: Optional[Sequence[int]] = None,
    out_dims: Optional[Sequence[int]] = None,
    atol: float = ATOL,
) -> KrausChannel:
    """Validate a Kraus family and wrap it as a channel."""
    if not isinstance(kraus, np.ndarray) and len({np.shape(k) for k in kraus}) > 1:
        raise ChannelError("Kraus matrices must share one shape")
    stack = np.asarray(kraus, dtype=complex)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ChannelError("expected a non-empty list of equally shaped Kraus matrices")
    in_dims = (stack.shape[2],) if in_dims is None else in_dims
    out_dims = (stack.shape[1],) if out_dims is None else out_dims
    return KrausChannel(stack, in_dims, out_dims, atol=atol)


def random_channel(dim_in: int, dim_out: int, n_kraus: int, rng: np.random.Generator) -> KrausChannel:
    """Channel whose stacked Kraus operators form a Haar-like random isometry."""
    if n_kraus * dim_out < dim_in:
        raise ChannelError(f"{n_kraus} Kraus operators of shape ({dim_out}, {dim_in}) cannot be complete")
    g = rng.standard_normal((n_kraus * dim_out, dim_in)) + 1j * rng.standard_normal((n_kraus * dim_out, dim_in))
    v, _ = np.linalg.qr(g)
    return KrausChannel(v.reshape(n_kraus, dim_out, dim_in), (dim_in,), (dim_out,))


def identity(d: int) -> KrausChannel:
    return KrausChannel(np.eye(d, dtype=complex)[None], (d,), (d,))


def dephasing(d: int) -> KrausChannel:
    """Completely dephasing channel in the computational basis."""
    stack = np.zeros((d, d, d), dtype=complex)
    stack[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    return KrausChannel(stack, (d,), (d,))


def _apply_stack(stack: np.ndarray, r: np.ndarray, din: int, dr: int) -> np.ndarray:
    """sum_k (K_k x I) r (K_k x I)^dagger for r shaped (din, dr, din, dr)."""
    dout = stack.shape[1]
    flat = r.reshape(din, dr * din * dr)
    out = np.zeros((dout, dr, dout, dr), dtype=complex)
    for k in stack:
        x = (k @ flat).reshape(dout * dr, din, dr).transpose(0, 2, 1)
        y = (x @ k.conj().T).reshape(dout, dr, dr, dout)
        out += y.transpose(0, 1, 3, 2)
    return out


def apply(ch: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    """``sum_k K rho K^dagger``; the result carries ``ch.out_dims``."""
    if rho.side != ch.dim_in:
        raise ChannelError(f"state side {rho.side} does not match channel input {ch.dim_in}")
    out = _apply_stack(ch.kraus, rho.matrix, ch.dim_in, 1).reshape(ch.dim_out, ch.dim_out)
    return DensityMatrix(out, ch.out_dims, atol=rho.atol)


def apply_on_subsystems(ch: KrausChannel, s: DensityMatrix, targets: Sequence[int]) -> DensityMatrix:
    """Apply ``ch`` to the registers ``targets`` (in the given order).

    The output registers take the place of the first target; all other
    registers keep their relative order.
    """
    n = len(s.dims)
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ChannelError(f"overlapping targets {targets}")
    if not targets or any(t < 0 or t >= n for t in targets):
        raise ChannelError(f"targets {targets} out of range for {n} registers")
    din = int(np.prod([s.dims[t] for t in targets]))
    if din != ch.dim_in:
        raise ChannelError(f"target dimension {din} does not match channel input {ch.dim_in}")
    others = [i for i in range(n) if i not in targets]
    front = permute_systems(s, targets + others)
    dr = int(np.prod([s.dims[i] for i in others])) if others else 1
    out = _apply_stack(ch.kraus, front.matrix, din, dr)

    # registers of `out`: channel outputs first, then the untouched ones
    out_regs = [("out", j) for j in range(len(ch.out_dims))] + [("in", i) for i in others]
    reg_dims = list(ch.out_dims) + [s.dims[i] for i in others]
    final = []
    for i in range(n):
        if i == targets[0]:
            final.extend(("out", j) for j in range(len(ch.out_dims)))
        elif i not in targets:
            final.append(("in", i))
    perm = [out_regs.index(r) for r in final]
    side = ch.dim_out * dr
    tmp = DensityMatrix(out.reshape(side, side), tuple(reg_dims), atol=s.atol)
    return tmp if perm == sorted(perm) else permute_systems(tmp, perm)


def _product_branches(a: KrausChannel, b: KrausChannel) -> tuple[FlaggedBranch, ...]:
    if not a.branches and not b.branches:
        return ()
    left = a.branches or (FlaggedBranch(1.0, a, ""),)
    right = b.branches or (FlaggedBranch(1.0, b, ""),)
    return tuple(
        FlaggedBranch(x.probability * y.probability, tensor(x.channel, y.channel), f"{x.label}{y.label}")
        for x in left
        for y in right
    )


def tensor(a: KrausChannel, b: KrausChannel) -> KrausChannel:
    """``a (x) b`` with Kraus family ``{K_i (x) L_j}``.

    Completeness of the product follows from that of the factors, so the
    (possibly large) stack is only built on first access.
    """

    def build():
        ka, kb = a.kraus, b.kraus
        t = np.einsum("aij,bkl->abikjl", ka, kb)
        return t.reshape(ka.shape[0] * kb.shape[0], a.dim_out * b.dim_out, a.dim_in * b.dim_in)

    return KrausChannel(
        build,
        a.in_dims + b.in_dims,
        a.out_dims + b.out_dims,
        branches=_product_branches(a, b),
        atol=min(a.atol, b.atol),
    )


def tensor_all(channels: Sequence[KrausChannel]) -> KrausChannel:
    out = channels[0]
    for ch in channels[1:]:
        out = tensor(out, ch)
    return out


def compose(after: KrausChannel, before: KrausChannel) -> KrausChannel:
    """``after o before``."""
    if after.dim_in != before.dim_out:
        raise ChannelError(f"cannot compose: {after.dim_in} != {before.dim_out}")
    ka, kb = after.kraus, before.kraus
    stack = np.einsum("aij,bjk->abik", ka, kb).reshape(-1, after.dim_out, before.dim_in)
    return KrausChannel(stack, before.in_dims, after.out_dims, atol=min(after.atol, before.atol))


def complementary(ch: KrausChannel) -> KrausChannel:
    """Channel to the environment of the Stinespring isometry ``sum_k K_k (x) |k>_E``."""
    stack = ch.kraus.transpose(1, 0, 2)
    return KrausChannel(stack, ch.in_dims, (ch.n_kraus,), atol=ch.atol)


def flagged_mixture(branches: Sequence[FlaggedBranch], atol: float = ATOL) -> KrausChannel:
    """Probabilistic mixture whose output is the direct sum of the branch outputs.

    Branch ``i`` occupies its own block of the output space, so the block
    index acts as an orthogonal classical flag.
    """
    branches = [
        b if b.label is not None else FlaggedBranch(b.probability, b.channel, str(i))
        for i, b in enumerate(branches)
    ]
    if not branches:
        raise ChannelError("flagged mixture needs at least one branch")
    probs = np.array([b.probability for b in branches], dtype=float)
    if np.any(probs < -atol) or abs(probs.sum() - 1.0) > atol:
        raise ChannelError(f"branch probabilities {probs.tolist()} do not form a distribution")
    din = branches[0].channel.dim_in
    if any(b.channel.dim_in != din for b in branches):
        raise ChannelError("all branches must share the input dimension")
    total = sum(b.channel.dim_out for b in branches)
    blocks = []
    offset = 0
    for b in branches:
        k = b.channel.kraus
        padded = np.zeros((k.shape[0], total, din), dtype=complex)
        padded[:, offset:offset + k.shape[1], :] = np.sqrt(max(b.probability, 0.0)) * k
        blocks.append(padded)
        offset += k.shape[1]
    return KrausChannel(
        np.concatenate(blocks),
        branches[0].channel.in_dims,
        (total,),
        branches=branches,
        atol=atol,
    )


def erasure(d: int, p: float) -> KrausChannel:
    """``E_{d,p}(rho) = (1-p) rho + p |e><e|`` with the flag ``|e> = |d>``."""
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"erasure probability {p} outside [0, 1]")
    stack = np.zeros((d + 1, d + 1, d), dtype=complex)
    stack[0, :d, :] = np.sqrt(1 - p) * np.eye(d)
    stack[1 + np.arange(d), d, np.arange(d)] = np.sqrt(p)
    return KrausChannel(stack, (d,), (d + 1,))


def _is_unitary(u: np.ndarray, atol: float) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and np.allclose(u @ u.conj().T, np.eye(len(u)), atol=atol)


def rocket_phase(d: int) -> np.ndarray:
    """Joint dephasing ``P = sum_ij w^(ij) |i><i| (x) |j><j|``."""
    i, j = np.divmod(np.arange(d * d), d)
    return np.diag(np.exp(2j * np.pi * ((i * j) % d) / d))


def rocket_conditional(d: int, u: np.ndarray, v: np.ndarray, atol: float = ATOL) -> KrausChannel:
    """Rocket channel for fixed twirl unitaries: ``tr_C P (U (x) V) rho (...)^dagger``.

    Input registers are ``(C, D)``; the output is the ``D`` register. The
    classical records of ``U`` and ``V`` are constant for fixed unitaries
    and are left out.
    """
    if not (_is_unitary(u, atol) and _is_unitary(v, atol)) or len(u) != d or len(v) != d:
        raise ChannelError("rocket twirls must be d x d unitaries")
    puv = rocket_phase(d) @ np.kron(u, v)
    stack = np.stack([np.kron(basis_vector(d, c)[None, :], np.eye(d)) @ puv for c in range(d)])
    return KrausChannel(stack, (d, d), (d,), atol=atol)


def sample_twirls(d: int, n_samples: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded Haar pairs ``(U_k, V_k)``; sample ``k`` depends only on ``(seed, k)``."""
    children = np.random.SeedSequence(seed).spawn(n_samples)
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        out.append((haar_unitary(d, rng), haar_unitary(d, rng)))
    return out


def rocket_sampled(d: int, n_samples: int = 4, seed: int = 0) -> KrausChannel:
    """Uniform flagged mixture of conditional rockets over Haar-sampled twirls."""
    if n_samples < 1:
        raise ChannelError("need at least one sample")
    twirls = sample_twirls(d, n_samples, seed)
    return flagged_mixture(
        [FlaggedBranch(1.0 / n_samples, rocket_conditional(d, u, v), str(k)) for k, (u, v) in enumerate(twirls)]
    )


@dataclass(frozen=True)
class HelperIsometry:
    """Isometry ``W: A (x) E -> B (x) F`` of an environment-assisted channel.

    Rows of ``w`` are indexed by ``(b, f)`` and columns by ``(a, e)``.
    ``flag`` is a classical label handed to the receiver alongside ``B``.
    """

    w: np.ndarray
    dim_a: int
    dim_e: int
    dim_b: int
    dim_f: int
    flag: Optional[int] = None
    atol: float = ATOL

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.shape != (self.dim_b * self.dim_f, self.dim_a * self.dim_e):
            raise ChannelError(f"isometry shape {w.shape} does not match its dimensions")
        err = np.max(np.abs(w.conj().T @ w - np.eye(w.shape[1])))
        if err > self.atol:
            raise ChannelError(f"W^dagger W deviates from identity by {err:.3e}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def as_channel(self) -> KrausChannel:
        return KrausChannel(self.w[None], (self.dim_a, self.dim_e), (self.dim_b, self.dim_f), atol=self.atol)


def controlled_weyl_isometry(d: int, flag: Optional[int] = 0) -> HelperIsometry:
    """``sum_{x,z} |xz>^F <xz|^A (x) W(x,z)^{E->B}`` with ``|A| = |F| = d^2``."""
    if d < 2:
        raise ChannelError("dimension must be at least 2")
    w = np.zeros((d, d * d, d * d, d), dtype=complex)  # (b, f, a, e)
    for x in range(d):
        for z in range(d):
            a = x * d + z
            w[:, a, a, :] = weyl(d, x, z)
    return HelperIsometry(w.reshape(d ** 3, d ** 3), d * d, d, d, d * d, flag)


def swap_isometry(d: int, flag: Optional[int] = 1) -> HelperIsometry:
    """``|phi>^A |psi>^E -> |psi>^B |phi>^F``."""
    if d < 2:
        raise ChannelError("dimension must be at least 2")
    a, e = d * d, d
    w = np.zeros((e, a, a, e), dtype=complex)  # (b, f, a, e)
    for i in range(a):
        for j in range(e):
            w[j, i, i, j] = 1.0
    return HelperIsometry(w.reshape(e * a, a * e), a, e, e, a, flag)


def _terms(s: Union[PureState, DensityMatrix], cutoff: float = 1e-14) -> list[tuple[float, np.ndarray]]:
    if isinstance(s, PureState):
        return [(1.0, s.amplitudes)]
    evals, evecs = np.linalg.eigh(s.matrix)
    return [(float(w), evecs[:, k]) for k, w in enumerate(evals) if w > cutoff]


def helper_output_states(
    isos: Sequence[HelperIsometry],
    states: Iterable[Union[PureState, DensityMatrix]],
    eta: Union[PureState, DensityMatrix],
) -> list[DensityMatrix]:
    """Outputs ``tr_F W^{(x)n} (rho (x) eta) W^{dagger(x)n}`` for each input ``rho``.

    Each input lives on ``A_1..A_n`` and ``eta`` on ``E_1..E_n``. The result
    lives on ``B_1, [flag_1], B_2, [flag_2], ...`` where a flag register (of
    dimension 2) is present for every isometry with a flag. Works on vectors
    from the spectral decompositions, so no matrix on ``A E`` is formed.
    """
    n = len(isos)
    da = [w.dim_a for w in isos]
    de = [w.dim_e for w in isos]
    db = [w.dim_b for w in isos]
    df = [w.dim_f for w in isos]
    w_tensors = [w.w.reshape(w.dim_b, w.dim_f, w.dim_a, w.dim_e) for w in isos]
    env_terms = _terms(eta)
    if env_terms[0][1].size != int(np.prod(de)):
        raise ChannelError("environment state does not match the isometries")
    dbt, dft = int(np.prod(db)), int(np.prod(df))

    out_dims: list[int] = []
    for w in isos:
        out_dims.append(w.dim_b)
        if w.flag is not None:
            out_dims.append(2)
    flag_vec = kron(*[basis_vector(2, w.flag) for w in isos if w.flag is not None]) if any(
        w.flag is not None for w in isos
    ) else np.ones(1)
    flag_proj = np.outer(flag_vec, flag_vec.conj())
    # B_1..B_n, flags... -> interleaved order
    regs = [("b", i) for i in range(n)] + [("f", i) for i in range(n) if isos[i].flag is not None]
    final = []
    for i in range(n):
        final.append(("b", i))
        if isos[i].flag is not None:
            final.append(("f", i))
    perm = [regs.index(r) for r in final]

    outputs = []
    for rho in states:
        terms = _terms(rho)
        if terms[0][1].size != int(np.prod(da)):
            raise ChannelError("input state does not match the isometries")
        acc = np.zeros((dbt, dbt), dtype=complex)
        for lam, v in terms:
            for mu, e in env_terms:
                t = np.multiply.outer(v.reshape(da), e.reshape(de))  # A_1..A_n, E_1..E_n
                axes = [("a", i) for i in range(n)] + [("e", i) for i in range(n)]
                for i, wt in enumerate(w_tensors):
                    ia, ie = axes.index(("a", i)), axes.index(("e", i))
                    t = np.tensordot(wt, t, axes=([2, 3], [ia, ie]))
                    rest = [ax for ax in axes if ax not in (("a", i), ("e", i))]
                    axes = [("b", i), ("f", i)] + rest
                order = [axes.index(("b", i)) for i in range(n)] + [axes.index(("f", i)) for i in range(n)]
                m = t.transpose(order).reshape(dbt, dft)
                acc += lam * mu * (m @ m.conj().T)
        full = np.kron(acc, flag_proj)
        spectrum = np.concatenate([hermitian_eigenvalues(acc, rho.atol), np.zeros(full.shape[0] - dbt)])
        tmp = DensityMatrix.with_spectrum(
            full, tuple(db) + tuple(2 for w in isos if w.flag is not None), spectrum, atol=rho.atol
        )
        outputs.append(permute_systems(tmp, perm) if perm != list(range(len(perm))) else tmp)
    return outputs


def classical_blocks(rho: DensityMatrix, atol: float = ATOL) -> tuple[np.ndarray, list[np.ndarray]]:
    """Split a state classical on its first register into ``(p_x, rho_x)``.

    Raises if any off-diagonal block of the first register exceeds ``atol``.
    """
    dx = rho.dims[0]
    rest = rho.side // dx
    t = rho.matrix.reshape(dx, rest, dx, rest)
    probs = np.empty(dx)
    blocks = []
    for x in range(dx):
        for y in range(dx):
            if x != y and np.max(np.abs(t[x, :, y, :])) > atol:
                raise ChannelError("first register is not classical")
        blk = t[x, :, x, :]
        probs[x] = np.trace(blk).real
        blocks.append(blk)
    return probs, blocks


def helper_apply(
    isos: Sequence[HelperIsometry],
    rho: DensityMatrix,
    eta: DensityMatrix,
    atol: float = ATOL,
) -> DensityMatrix:
    """``id^X (x) N_eta^{(x)n}`` on a state classical in its first register ``X``.

    ``rho`` lives on ``X, A_1..A_n``; the result on ``X, B_1, [flag_1], ...``.
    """
    if len(rho.dims) < 2:
        raise ChannelError("input must carry a classical register and channel inputs")
    probs, blocks = classical_blocks(rho, atol)
    keep = [x for x in range(len(probs)) if probs[x] > 1e-14]
    a_dims = tuple(w.dim_a for w in isos)
    normed = [DensityMatrix(blocks[x] / probs[x], a_dims, atol=atol) for x in keep]
    outs = helper_output_states(isos, normed, eta)
    side_out = outs[0].side
    dx = len(probs)
    full = np.zeros((dx, side_out, dx, side_out), dtype=complex)
    spectrum = np.zeros(dx * side_out)
    for k, (x, o) in enumerate(zip(keep, outs)):
        full[x, :, x, :] = probs[x] * o.matrix
        spectrum[k * side_out:(k + 1) * side_out] = probs[x] * o.eigenvalues
    return DensityMatrix.with_spectrum(
        full.reshape(dx * side_out, dx * side_out), (dx,) + outs[0].dims, spectrum, atol=atol
    )
