"""One-shot information quantities of channels and classical-quantum ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .channels import (
    ChannelError,
    KrausChannel,
    apply,
    apply_on_subsystems,
    complementary,
)
from .qmat import (
    ATOL,
    DensityMatrix,
    PureState,
    basis_vector,
    max_entangled,
    partial_trace,
    permute_systems,
    random_pure_state,
    von_neumann_entropy,
)


@dataclass(frozen=True)
class CQEnsemble:
    probs: tuple[float, ...]
    states: tuple[DensityMatrix, ...]
    atol: float = field(default=ATOL, repr=False, compare=False)

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        states = tuple(self.states)
        if len(probs) != len(states) or not probs:
            raise ValueError("need one probability per state")
        if min(probs) < -self.atol or abs(sum(probs) - 1.0) > self.atol:
            raise ValueError(f"probabilities {probs} do not form a distribution")
        if len({s.dims for s in states}) != 1:
            raise ValueError("ensemble states must share dims")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)

    def average(self) -> DensityMatrix:
        m = sum(p * s.matrix for p, s in zip(self.probs, self.states))
        return DensityMatrix(m, self.states[0].dims, atol=self.atol)

    def cq_state(self) -> DensityMatrix:
        """``sum_x p_x |x><x| (x) rho_x`` with ``X`` as register 0."""
        n = len(self.probs)
        side = self.states[0].side
        full = np.zeros((n, side, n, side), dtype=complex)
        for x, (p, s) in enumerate(zip(self.probs, self.states)):
            full[x, :, x, :] = p * s.matrix
        spectrum = np.concatenate([p * s.eigenvalues for p, s in zip(self.probs, self.states)])
        return DensityMatrix.with_spectrum(
            full.reshape(n * side, n * side), (n,) + self.states[0].dims, spectrum, atol=self.atol
        )


@dataclass(frozen=True)
class InfoValue:
    """A value in bits, optionally with labelled per-branch contributions."""

    value: float
    components: dict[str, float] = field(default_factory=dict)


def _default_targets(phi: PureState, dim_in: int) -> list[int]:
    prod = 1
    for k in range(len(phi.dims) - 1, -1, -1):
        prod *= phi.dims[k]
        if prod == dim_in:
            return list(range(k, len(phi.dims)))
        if prod > dim_in:
            break
    raise ChannelError(f"no trailing registers of {phi.dims} match channel input {dim_in}")


def _coherent_stinespring(ch: KrausChannel, phi: PureState, targets: list[int]) -> float:
    """``H(B) - H(E)`` from the purification ``sum_k (K_k (x) I)|phi> (x) |k>_E``.

    For a pure input ``H(AB) = H(E)``, and both ``rho_B`` and ``rho_E`` are
    small Gram matrices of the Stinespring vector.
    """
    others = [i for i in range(len(phi.dims)) if i not in targets]
    v = permute_systems(phi, targets + others).amplitudes.reshape(ch.dim_in, -1)
    t = np.tensordot(ch.kraus, v, axes=([2], [0]))  # (kraus, out, reference)
    rho_b = np.einsum("kor,kpr->op", t, t.conj())
    rho_e = np.einsum("kor,lor->kl", t, t.conj())
    h_b = von_neumann_entropy(DensityMatrix(rho_b, ch.out_dims))
    return h_b - von_neumann_entropy(DensityMatrix(rho_e, (ch.n_kraus,)))


def coherent_information_of_state(ch: KrausChannel, rho: DensityMatrix, targets: Sequence[int]) -> float:
    """``H(B) - H(AB)`` built from the full output ``(id (x) ch)(rho)``.

    Accepts mixed inputs; for pure inputs it is the slow twin of
    :func:`coherent_information`.
    """
    targets = [int(t) for t in targets]
    out = apply_on_subsystems(ch, rho, targets)
    before = sum(1 for i in range(targets[0]) if i not in targets)
    b_regs = list(range(before, before + len(ch.out_dims)))
    h_b = von_neumann_entropy(partial_trace(out, b_regs))
    return h_b - von_neumann_entropy(out)


def coherent_information(
    ch: KrausChannel,
    phi: PureState,
    targets: Optional[Sequence[int]] = None,
    *,
    blockwise: bool = True,
) -> InfoValue:
    """``H(B) - H(AB)`` for ``rho^{AB} = (id (x) ch)(phi)``.

    ``targets`` names the registers of ``phi`` fed to the channel (default:
    the trailing registers matching ``ch.dim_in``); every other register is
    the reference ``A``. For flagged channels the value is the probability
    weighted sum over branches, which equals the dense result because the
    branch outputs are orthogonal; pass ``blockwise=False`` to force the
    dense computation over the whole Kraus family.
    """
    targets = _default_targets(phi, ch.dim_in) if targets is None else [int(t) for t in targets]
    if len(set(targets)) != len(targets) or any(t < 0 or t >= len(phi.dims) for t in targets):
        raise ChannelError(f"invalid targets {targets}")
    if int(np.prod([phi.dims[t] for t in targets])) != ch.dim_in:
        raise ChannelError(f"targets {targets} do not match channel input {ch.dim_in}")
    return _coherent(ch, phi, targets, blockwise)


def _coherent(ch: KrausChannel, phi: PureState, targets: list[int], blockwise: bool) -> InfoValue:
    if blockwise and ch.branches:
        comps = {}
        total = 0.0
        for b in ch.branches:
            v = _coherent(b.channel, phi, targets, blockwise).value
            comps[b.label] = v
            total += b.probability * v
        return InfoValue(total, comps)
    return InfoValue(_coherent_stinespring(ch, phi, targets))


def mutual_information(rho: DensityMatrix, cut: Sequence[int]) -> float:
    """``I(A;B) = H(A) + H(B) - H(AB)`` with ``A`` the registers in ``cut``."""
    n = len(rho.dims)
    cut = sorted(set(int(c) for c in cut))
    rest = [i for i in range(n) if i not in cut]
    if not cut or not rest or cut[0] < 0 or cut[-1] >= n:
        raise ValueError(f"cut {cut} is trivial or out of range for {n} registers")
    return (
        von_neumann_entropy(partial_trace(rho, cut))
        + von_neumann_entropy(partial_trace(rho, rest))
        - von_neumann_entropy(rho)
    )


def cq_push(ch: KrausChannel, e: CQEnsemble) -> CQEnsemble:
    return CQEnsemble(e.probs, tuple(apply(ch, s) for s in e.states), atol=e.atol)


def holevo_chi(e: CQEnsemble) -> float:
    """``H(sum_x p_x rho_x) - sum_x p_x H(rho_x)``."""
    avg = von_neumann_entropy(e.average())
    return avg - sum(p * von_neumann_entropy(s) for p, s in zip(e.probs, e.states) if p > 0)


def private_information_value(ch: KrausChannel, e: CQEnsemble) -> InfoValue:
    """``I(X;B) - I(X;E)`` of an ensemble sent through ``ch``."""
    to_b = holevo_chi(cq_push(ch, e))
    to_e = holevo_chi(cq_push(complementary(ch), e))
    return InfoValue(to_b - to_e, {"I(X;B)": to_b, "I(X;E)": to_e})


Objective = Literal["coherent", "holevo", "private"]


def _random_ensemble(d: int, rng: np.random.Generator) -> CQEnsemble:
    probs = rng.dirichlet(np.ones(d))
    states = tuple(random_pure_state((d,), rng).density() for _ in range(d))
    return CQEnsemble(tuple(probs), states)


def _basis_ensemble(d: int) -> CQEnsemble:
    states = tuple(PureState(basis_vector(d, i), (d,)).density() for i in range(d))
    return CQEnsemble(tuple([1.0 / d] * d), states)


def lower_bound_search(
    objective: Objective,
    ch: KrausChannel,
    restarts: int = 16,
    seed: int = 0,
) -> InfoValue:
    """Best value of a one-shot objective over a handful of inputs.

    Candidates are a product input (value 0 for the coherent objective), the
    maximally entangled input or uniform computational-basis ensemble, and
    ``restarts`` random pure inputs or random rank-one ensembles of size
    ``dim_in``. Every candidate is a valid input, so the result never exceeds
    the true maximum; nothing beyond that is claimed.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    d = ch.dim_in
    if objective == "coherent":
        zero = basis_vector(d * d, 0)
        cands = [PureState(zero, (d, d)), max_entangled(d)]
        cands += [random_pure_state((d, d), np.random.default_rng(s)) for s in np.random.SeedSequence(seed).spawn(restarts)]

        def score(c):
            return coherent_information(ch, c, [1]).value

    elif objective in ("holevo", "private"):
        cands = [CQEnsemble((1.0,), (PureState(basis_vector(d, 0), (d,)).density(),)), _basis_ensemble(d)]
        cands += [_random_ensemble(d, np.random.default_rng(s)) for s in np.random.SeedSequence(seed).spawn(restarts)]
        if objective == "holevo":

            def score(c):
                return holevo_chi(cq_push(ch, c))

        else:

            def score(c):
                return private_information_value(ch, c).value

    else:
        raise ValueError(f"unknown objective {objective!r}")
    scores = [score(c) for c in cands]
    best = int(np.argmax(scores))
    return InfoValue(float(scores[best]), {"candidate": float(best), "n_candidates": float(len(cands))})
